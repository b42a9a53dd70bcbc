//! Pairwise surface distances, distance matrices and the metric audit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{self, PerturbationSchedule, Resolver};
use crate::geodesic::{self, GeodesicConfig, GeodesicPath};
use crate::geometry::{Point3, ScalingMode};
use crate::par;

/// Everything needed to evaluate a distance besides the points themselves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig {
    pub degree: usize,
    pub scaling: ScalingMode,
    pub geodesic: GeodesicConfig,
    pub perturbation: PerturbationSchedule,
    /// Per-pair seeds are derived from this and the pair's indices.
    pub master_seed: u64,
    /// Dispatch matrix pairs concurrently (ignored without the `parallel` feature).
    pub parallel: bool,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            scaling: ScalingMode::Off,
            geodesic: GeodesicConfig::default(),
            perturbation: PerturbationSchedule::default(),
            master_seed: 0,
            parallel: true,
        }
    }
}

impl DistanceConfig {
    pub fn with_degree(degree: usize) -> Self {
        Self { degree, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(Error::InvalidInput("degree must be at least 1".into()));
        }
        self.geodesic.validate()?;
        self.perturbation.validate()
    }

    /// The configuration used for the unordered pair `{i, j}`: the geodesic
    /// restarts and perturbation directions are seeded from
    /// `(master_seed, min(i, j), max(i, j))`.
    pub fn for_pair(&self, i: usize, j: usize) -> Self {
        let seed = pair_seed(self.master_seed, i.min(j), i.max(j));
        let mut cfg = *self;
        cfg.geodesic.seed = seed;
        cfg.perturbation.seed = seed;
        cfg
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic seed for the pair `(i, j)` under `master`.
pub fn pair_seed(master: u64, i: usize, j: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ i as u64) ^ j as u64)
}

/// How one pair distance was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairProvenance {
    /// `None` when the pair failed or the two points coincide.
    pub resolver: Option<Resolver>,
    pub converged: bool,
    pub perturbation_steps: usize,
    pub geodesic_nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<PairFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub kind: String,
    pub message: String,
}

impl PairProvenance {
    fn coincident() -> Self {
        Self { resolver: None, converged: true, perturbation_steps: 0, geodesic_nodes: 0, failure: None }
    }

    fn failed(err: &Error) -> Self {
        Self {
            resolver: None,
            converged: false,
            perturbation_steps: 0,
            geodesic_nodes: 0,
            failure: Some(PairFailure { kind: err.kind().to_string(), message: err.to_string() }),
        }
    }
}

/// Geodesic distance between `x` and `y` on the degree-`n` surface through
/// both that best fits the remaining points of `set`.
///
/// Every point of `set` equal to `x` or `y` is treated as a constraint point
/// rather than data. Singular fits are resolved with
/// [`fit::perturbation_resolve`].
pub fn distance_dn(set: &[Point3], x: &Point3, y: &Point3, cfg: &DistanceConfig) -> Result<(f64, PairProvenance)> {
    let (length, _path, prov) = distance_dn_path(set, x, y, cfg)?;
    Ok((length, prov))
}

/// [`distance_dn`] that also returns the geodesic.
pub fn distance_dn_path(
    set: &[Point3],
    x: &Point3,
    y: &Point3,
    cfg: &DistanceConfig,
) -> Result<(f64, Option<GeodesicPath>, PairProvenance)> {
    cfg.validate()?;
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::InvalidInput("query points must be finite".into()));
    }
    if x == y {
        return Ok((0.0, None, PairProvenance::coincident()));
    }
    if x.same_xy(y) {
        return Err(Error::VerticalPair { x: x.x, y: x.y });
    }
    let others: Vec<Point3> = set.iter().filter(|p| *p != x && *p != y).copied().collect();
    let r = fit::perturbation_resolve(x, y, &others, cfg.degree, cfg.scaling, &cfg.perturbation, &cfg.geodesic)?;
    let prov = PairProvenance {
        resolver: Some(r.resolver),
        converged: r.path.converged,
        perturbation_steps: r.steps,
        geodesic_nodes: r.path.node_count(),
        failure: None,
    };
    Ok((r.length, Some(r.path), prov))
}

/// Distance between arbitrary points: [`distance_dn`] over `set ∪ {x, y}`.
pub fn distance_hat(set: &[Point3], x: &Point3, y: &Point3, cfg: &DistanceConfig) -> Result<(f64, PairProvenance)> {
    let mut union = set.to_vec();
    for q in [x, y] {
        if !union.contains(q) {
            union.push(*q);
        }
    }
    distance_dn(&union, x, y, cfg)
}

/// Symmetric table of pair distances with per-pair provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    pub degree: usize,
    /// Failed pairs hold NaN (serialized as `null`).
    #[serde(with = "nan_as_null")]
    pub values: Vec<Vec<f64>>,
    pub provenance: Vec<PairEntry>,
}

/// Provenance of the unordered pair `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub i: usize,
    pub j: usize,
    #[serde(flatten)]
    pub provenance: PairProvenance,
}

impl DistanceMatrix {
    /// Builds a matrix from known values (upper triangle is authoritative).
    pub fn from_values(labels: Vec<String>, degree: usize, values: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        if values.len() != n || values.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(format!("expected a {n}x{n} matrix")));
        }
        Ok(Self { labels, degree, values, provenance: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// First pair without a value, if any.
    pub fn missing(&self) -> Option<(usize, usize)> {
        let n = self.len();
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).find(|&(i, j)| !self.values[i][j].is_finite())
    }

    pub fn failures(&self) -> impl Iterator<Item = &PairEntry> {
        self.provenance.iter().filter(|e| e.provenance.failure.is_some())
    }
}

/// Default labels `1..=n`.
pub fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|k| k.to_string()).collect()
}

/// All pair distances of `points`. Each unordered pair is computed once and
/// mirrored. A failing pair leaves NaN in the table and an error record in
/// its provenance; the other pairs are unaffected.
pub fn distance_matrix(points: &[Point3], labels: Option<Vec<String>>, cfg: &DistanceConfig) -> Result<DistanceMatrix> {
    cfg.validate()?;
    let n = points.len();
    let labels = labels.unwrap_or_else(|| default_labels(n));
    if labels.len() != n {
        return Err(Error::InvalidInput(format!("{} labels for {n} points", labels.len())));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let results = par::map(&pairs, cfg.parallel, |&(i, j)| {
        let pair_cfg = cfg.for_pair(i, j);
        match distance_dn(points, &points[i], &points[j], &pair_cfg) {
            Ok((d, prov)) => (d, prov),
            Err(e) => (f64::NAN, PairProvenance::failed(&e)),
        }
    });
    let mut values = vec![vec![0.0; n]; n];
    let mut provenance = Vec::with_capacity(pairs.len());
    for (&(i, j), (d, prov)) in pairs.iter().zip(results) {
        values[i][j] = d;
        values[j][i] = d;
        provenance.push(PairEntry { i, j, provenance: prov });
    }
    Ok(DistanceMatrix { labels, degree: cfg.degree, values, provenance })
}

/// Geodesic distance between the vertical feet of `x` and `y` on a single
/// surface fitted to all of `set` without interpolation constraints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineDistance {
    pub length: f64,
    pub resolver: Resolver,
    pub feet: [Point3; 2],
}

pub fn projected_baseline_distance(
    set: &[Point3],
    x: &Point3,
    y: &Point3,
    cfg: &DistanceConfig,
) -> Result<BaselineDistance> {
    cfg.validate()?;
    if x == y {
        return Ok(BaselineDistance { length: 0.0, resolver: Resolver::Direct, feet: [*x, *y] });
    }
    let (surface, resolver) = match fit::fit_unconstrained(set, cfg.degree, cfg.scaling) {
        Ok(s) => (s, Resolver::Direct),
        Err(Error::SingularSystem(_)) => {
            (fit::minimum_norm_unconstrained(set, cfg.degree, cfg.scaling)?, Resolver::MinNorm)
        }
        Err(e) => return Err(e),
    };
    let feet = [surface.lift(x.x, x.y), surface.lift(y.x, y.y)];
    let (length, _) = geodesic::geodesic_distance(&surface, &feet[0], &feet[1], &cfg.geodesic)?;
    Ok(BaselineDistance { length, resolver, feet })
}

/// `d(i, k) > d(i, j) + d(j, k)` beyond the audit tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleViolation {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAuditReport {
    pub labels: Vec<String>,
    pub identity_ok: bool,
    pub symmetry_ok: bool,
    pub nonneg_ok: bool,
    pub tolerance: f64,
    pub triangle_violations: Vec<TriangleViolation>,
}

impl MetricAuditReport {
    pub fn is_metric(&self) -> bool {
        self.identity_ok && self.symmetry_ok && self.nonneg_ok && self.triangle_violations.is_empty()
    }
}

/// Default relative audit tolerance.
pub const AUDIT_RTOL: f64 = 1e-9;

/// Checks the metric axioms on a complete matrix.
///
/// Triangle inequalities are checked for every `i < k` and every `j`
/// distinct from both; by symmetry this covers all ordered triples. A triple
/// is reported when `d(i,k) > d(i,j) + d(j,k) + tol · (1 + rhs)`.
pub fn metric_audit(m: &DistanceMatrix, tol: f64) -> Result<MetricAuditReport> {
    if let Some((i, j)) = m.missing() {
        return Err(Error::IncompleteMatrix(i, j));
    }
    let n = m.len();
    let d = &m.values;
    let identity_ok = (0..n).all(|i| d[i][i] == 0.0);
    let symmetry_ok = (0..n).all(|i| (0..n).all(|j| d[i][j] == d[j][i]));
    let nonneg_ok = d.iter().flatten().all(|&v| v >= 0.0);
    let mut triangle_violations = Vec::new();
    for i in 0..n {
        for k in (i + 1)..n {
            for j in (0..n).filter(|&j| j != i && j != k) {
                let lhs = d[i][k];
                let rhs = d[i][j] + d[j][k];
                if lhs > rhs + tol * (1.0 + rhs) {
                    triangle_violations.push(TriangleViolation { i, j, k, lhs, rhs, margin: lhs - rhs });
                }
            }
        }
    }
    Ok(MetricAuditReport {
        labels: m.labels.clone(),
        identity_ok,
        symmetry_ok,
        nonneg_ok,
        tolerance: tol,
        triangle_violations,
    })
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Option<f64>>> =
            v.iter().map(|r| r.iter().map(|&x| x.is_finite().then_some(x)).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let rows: Vec<Vec<Option<f64>>> = Vec::deserialize(d)?;
        Ok(rows.into_iter().map(|r| r.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_points() -> Vec<Point3> {
        [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (2.0, 3.0), (-1.0, 2.0)]
            .iter()
            .map(|&(x, y)| Point3::new(x, y, 2.0 * x - y + 1.0))
            .collect()
    }

    #[test]
    fn coincident_pair_is_zero() {
        let pts = plane_points();
        let (d, prov) = distance_dn(&pts, &pts[1], &pts[1], &DistanceConfig::with_degree(1)).unwrap();
        assert_eq!(d, 0.0);
        assert!(prov.resolver.is_none());
    }

    #[test]
    fn planar_data_gives_chord() {
        let pts = plane_points();
        let cfg = DistanceConfig::with_degree(1);
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let (d, _) = distance_dn(&pts, &pts[i], &pts[j], &cfg).unwrap();
                let e = pts[i].distance(&pts[j]);
                assert!((d - e).abs() <= 1e-8 * e, "{i},{j}: {d} vs {e}");
            }
        }
    }

    #[test]
    fn vertical_pair_is_error() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 1.0), Point3::new(1.0, 0.0, 0.0)];
        let err = distance_dn(&pts, &pts[0], &pts[1], &DistanceConfig::with_degree(1)).unwrap_err();
        assert!(matches!(err, Error::VerticalPair { .. }));
    }

    #[test]
    fn hat_reduces_to_dn_for_members() {
        let pts = plane_points();
        let cfg = DistanceConfig::with_degree(1);
        let a = distance_dn(&pts, &pts[0], &pts[3], &cfg).unwrap();
        let b = distance_hat(&pts, &pts[0], &pts[3], &cfg).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
    }

    #[test]
    fn matrix_records_failures_without_aborting() {
        let mut pts = plane_points();
        pts.push(Point3::new(0.0, 0.0, 9.0));
        let m = distance_matrix(&pts, None, &DistanceConfig::with_degree(1)).unwrap();
        assert!(m.values[0][5].is_nan());
        assert_eq!(m.failures().count(), 1);
        assert!(m.values[0][1].is_finite());
        assert!(matches!(metric_audit(&m, AUDIT_RTOL), Err(Error::IncompleteMatrix(0, 5))));
    }

    #[test]
    fn printed_triple_violates_triangle() {
        let m = DistanceMatrix::from_values(
            vec!["1".into(), "3".into(), "10".into()],
            0,
            vec![
                vec![0.0, 4.123340349, 18.84342860],
                vec![4.123340349, 0.0, 12.78704132],
                vec![18.84342860, 12.78704132, 0.0],
            ],
        )
        .unwrap();
        let r = metric_audit(&m, AUDIT_RTOL).unwrap();
        assert!(r.identity_ok && r.symmetry_ok && r.nonneg_ok);
        assert_eq!(r.triangle_violations.len(), 1);
        let v = &r.triangle_violations[0];
        assert_eq!((v.i, v.j, v.k), (0, 1, 2));
        assert!((v.margin - (18.84342860 - 12.78704132 - 4.123340349)).abs() < 1e-12);
    }

    #[test]
    fn two_points_have_no_triangles() {
        let m = DistanceMatrix::from_values(default_labels(2), 1, vec![vec![0.0, 3.0], vec![3.0, 0.0]]).unwrap();
        assert!(metric_audit(&m, AUDIT_RTOL).unwrap().is_metric());
    }

    #[test]
    fn pair_seed_is_symmetric_and_spread() {
        let cfg = DistanceConfig::default();
        assert_eq!(cfg.for_pair(2, 7).geodesic.seed, cfg.for_pair(7, 2).geodesic.seed);
        assert_ne!(pair_seed(0, 0, 1), pair_seed(0, 1, 0));
        assert_ne!(pair_seed(0, 0, 1), pair_seed(1, 0, 1));
    }

    #[test]
    fn json_keeps_nan_as_null() {
        let m =
            DistanceMatrix::from_values(default_labels(2), 1, vec![vec![0.0, f64::NAN], vec![f64::NAN, 0.0]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("null"));
        let back: DistanceMatrix = serde_json::from_str(&s).unwrap();
        assert!(back.values[0][1].is_nan());
    }
}
