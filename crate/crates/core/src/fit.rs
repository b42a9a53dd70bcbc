//! Least-squares polynomial surface fits.
//!
//! The unconstrained fit minimizes `D = Σ_k (f(x_k, y_k) - z_k)^2` over all
//! coefficients. The constrained fit additionally forces the surface through
//! two query points and is solved through the multiplier system
//!
//! ```text
//! [ AᵀA  Cᵀ ] [a]   [Aᵀz]
//! [ C    0  ] [λ] = [ d ]
//! ```
//!
//! where `A` holds the monomials at the other points and `C` the monomials at
//! the two query points. When that system is rank deficient there are
//! infinitely many optimal surfaces; [`perturbation_resolve`] and
//! [`minimum_norm_fit`] are two independent ways of picking one.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::{self, GeodesicConfig, GeodesicPath};
use crate::geometry::{MonomialBasis, Point3, PolynomialSurface, Scaling, ScalingMode};
use crate::linalg;

/// An assembled least-squares problem together with its rank diagnostics.
#[derive(Debug, Clone)]
pub struct FitSystem {
    pub degree: usize,
    pub scaling: Option<Scaling>,
    /// One row per data point, one column per basis term.
    pub design: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Interpolation rows (monomials at the constraint points), if any.
    pub constraints: Option<DMatrix<f64>>,
    pub constraint_rhs: Option<DVector<f64>>,
    /// Numerical rank of the assembled square system.
    pub rank: usize,
    /// Dimension of the assembled square system.
    pub dim: usize,
    pub singular: bool,
    /// Singular values of the square system, largest first.
    pub singular_values: Vec<f64>,
}

impl FitSystem {
    fn assemble(degree: usize, scaling: Option<Scaling>, data: &[Point3], constraints: Option<[&Point3; 2]>) -> Self {
        let basis = MonomialBasis::new(degree);
        let p = basis.len();
        let row = |pt: &Point3| {
            let (u, v) = scaling.map_or((pt.x, pt.y), |s| s.apply(pt.x, pt.y));
            basis.evaluate_row(u, v)
        };
        let mut design = DMatrix::zeros(data.len(), p);
        for (k, pt) in data.iter().enumerate() {
            design.row_mut(k).copy_from_slice(&row(pt));
        }
        let rhs = DVector::from_iterator(data.len(), data.iter().map(|pt| pt.z));
        let (cmat, crhs) = match constraints {
            Some(cs) => {
                let mut c = DMatrix::zeros(2, p);
                for (k, pt) in cs.iter().enumerate() {
                    c.row_mut(k).copy_from_slice(&row(pt));
                }
                (Some(c), Some(DVector::from_vec(vec![cs[0].z, cs[1].z])))
            }
            None => (None, None),
        };
        let mut sys = Self {
            degree,
            scaling,
            design,
            rhs,
            constraints: cmat,
            constraint_rhs: crhs,
            rank: 0,
            dim: 0,
            singular: true,
            singular_values: Vec::new(),
        };
        let square = sys.square_matrix();
        sys.dim = square.nrows();
        sys.singular_values = linalg::symmetric_singular_values(&square);
        sys.rank = linalg::numerical_rank(&sys.singular_values, sys.dim);
        sys.singular = sys.rank < sys.dim;
        sys
    }

    pub fn term_count(&self) -> usize {
        self.design.ncols()
    }

    /// `AᵀA`.
    pub fn normal_matrix(&self) -> DMatrix<f64> {
        self.design.tr_mul(&self.design)
    }

    /// `AᵀA` for unconstrained systems, the multiplier matrix otherwise.
    pub fn square_matrix(&self) -> DMatrix<f64> {
        let normal = self.normal_matrix();
        match &self.constraints {
            None => normal,
            Some(c) => {
                let p = normal.nrows();
                let r = c.nrows();
                let mut k = DMatrix::zeros(p + r, p + r);
                k.view_mut((0, 0), (p, p)).copy_from(&normal);
                k.view_mut((p, 0), (r, p)).copy_from(c);
                k.view_mut((0, p), (p, r)).copy_from(&c.transpose());
                k
            }
        }
    }

    /// Right-hand side matching [`square_matrix`](Self::square_matrix).
    pub fn square_rhs(&self) -> DVector<f64> {
        let atz = self.design.tr_mul(&self.rhs);
        match &self.constraint_rhs {
            None => atz,
            Some(d) => {
                let mut out = DVector::zeros(atz.len() + d.len());
                out.rows_mut(0, atz.len()).copy_from(&atz);
                out.rows_mut(atz.len(), d.len()).copy_from(d);
                out
            }
        }
    }

    /// Sum of squared vertical residuals of the data rows for coefficients `a`.
    pub fn squared_error(&self, a: &[f64]) -> f64 {
        let a = DVector::from_column_slice(a);
        (&self.design * a - &self.rhs).norm_squared()
    }

    fn surface(&self, coefficients: &DVector<f64>) -> Result<PolynomialSurface> {
        let p = self.term_count();
        PolynomialSurface::new(self.degree, coefficients.rows(0, p).iter().copied().collect(), self.scaling)
    }
}

pub fn build_unconstrained_system(points: &[Point3], degree: usize, scaling: ScalingMode) -> Result<FitSystem> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_finite(points)?;
    Ok(FitSystem::assemble(degree, scaling.scaling_for(points), points, None))
}

/// Assembles the system that interpolates `p1`, `p2` and fits `others`.
pub fn build_constrained_system(
    p1: &Point3,
    p2: &Point3,
    others: &[Point3],
    degree: usize,
    scaling: ScalingMode,
) -> Result<FitSystem> {
    check_pair(p1, p2)?;
    check_finite(others)?;
    if degree == 0 {
        return Err(Error::InvalidInput("a constrained fit needs degree >= 1".into()));
    }
    let sc = scaling.scaling_for([p1, p2].into_iter().chain(others));
    Ok(FitSystem::assemble(degree, sc, others, Some([p1, p2])))
}

fn check_finite(points: &[Point3]) -> Result<()> {
    match points.iter().find(|p| !p.is_finite()) {
        Some(p) => Err(Error::InvalidInput(format!("non-finite point {p:?}"))),
        None => Ok(()),
    }
}

fn check_pair(p1: &Point3, p2: &Point3) -> Result<()> {
    check_finite(&[*p1, *p2])?;
    if p1.same_xy(p2) {
        if p1.z != p2.z {
            return Err(Error::VerticalPair { x: p1.x, y: p1.y });
        }
        return Err(Error::InvalidInput("constraint points coincide".into()));
    }
    Ok(())
}

/// Unconstrained least-squares fit; `SingularSystem` when the normal matrix
/// is rank deficient.
pub fn fit_unconstrained(points: &[Point3], degree: usize, scaling: ScalingMode) -> Result<PolynomialSurface> {
    let sys = build_unconstrained_system(points, degree, scaling)?;
    solve_unconstrained(sys)
}

pub fn solve_unconstrained(sys: FitSystem) -> Result<PolynomialSurface> {
    if sys.singular {
        return Err(Error::SingularSystem(Box::new(sys)));
    }
    let p = sys.term_count();
    let qr = sys.design.clone().col_piv_qr();
    let mut qtz = sys.rhs.clone();
    qr.q_tr_mul(&mut qtz);
    let r = qr.r();
    let r = r.view((0, 0), (p, p));
    let mut a =
        r.solve_upper_triangular(&qtz.rows(0, p)).ok_or_else(|| Error::SingularSystem(Box::new(sys.clone())))?;
    qr.p().inv_permute_rows(&mut a);
    sys.surface(&a)
}

/// Least-squares fit through `p1` and `p2`; `SingularSystem` when the
/// multiplier system is rank deficient.
pub fn fit_constrained(
    p1: &Point3,
    p2: &Point3,
    others: &[Point3],
    degree: usize,
    scaling: ScalingMode,
) -> Result<PolynomialSurface> {
    let sys = build_constrained_system(p1, p2, others, degree, scaling)?;
    solve_constrained(&sys)
}

pub fn solve_constrained(sys: &FitSystem) -> Result<PolynomialSurface> {
    if sys.singular {
        return Err(Error::SingularSystem(Box::new(sys.clone())));
    }
    let k = sys.square_matrix();
    let b = sys.square_rhs();
    let x = linalg::solve_symmetric(&k, &b, 2).ok_or_else(|| Error::SingularSystem(Box::new(sys.clone())))?;
    sys.surface(&x)
}

/// `min |A a - z|` subject to `C a = d`, rewritten over the null space of
/// `C`: `a = a0 + N w` with `a0 ⟂ N`, leaving `min |B w - r|` for
/// `B = A N`, `r = z - A a0`. Since `N` is orthonormal, `|a|² = |a0|² + |w|²`.
struct Reduced {
    a0: DVector<f64>,
    null: DMatrix<f64>,
    b: DMatrix<f64>,
    r: DVector<f64>,
}

impl Reduced {
    fn new(sys: &FitSystem) -> Result<Self> {
        let p = sys.term_count();
        let (a0, null) = match (&sys.constraints, &sys.constraint_rhs) {
            (Some(c), Some(d)) => {
                let dependent = || Error::InvalidInput("constraint rows are linearly dependent".into());
                let (range, null) = linalg::null_space_basis(c).ok_or_else(dependent)?;
                // Particular solution in range(Cᵀ): a0 = Q1 (C Q1)^{-1} d.
                let y = (c * &range).lu().solve(d).ok_or_else(dependent)?;
                (&range * y, null)
            }
            _ => (DVector::zeros(p), DMatrix::identity(p, p)),
        };
        let b = &sys.design * &null;
        let r = &sys.rhs - &sys.design * &a0;
        Ok(Self { a0, null, b, r })
    }

    fn coefficients(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.a0 + &self.null * w
    }

    fn cutoff(&self, singular_values: &DVector<f64>) -> f64 {
        singular_values.max() * singular_values.len().max(self.r.len()) as f64 * f64::EPSILON
    }

    /// Pseudo-inverse solution: the minimum-norm minimizer.
    fn min_norm(&self) -> Result<DVector<f64>> {
        if self.null.ncols() == 0 || self.b.nrows() == 0 {
            return Ok(self.a0.clone());
        }
        let svd = self.b.clone().svd(true, true);
        let eps = self.cutoff(&svd.singular_values);
        let w = svd.solve(&self.r, eps).map_err(|e| Error::NumericRange(e.to_string()))?;
        Ok(self.coefficients(&w))
    }

    /// Square of the smallest singular value of `B` above the pseudo-inverse
    /// cutoff, or 1 when `B` is empty or zero.
    fn ridge_scale(&self) -> f64 {
        if self.b.is_empty() {
            return 1.0;
        }
        let sv = self.b.singular_values();
        let cut = self.cutoff(&sv);
        let smin = sv.iter().copied().filter(|&v| v > cut).fold(f64::INFINITY, f64::min);
        if smin.is_finite() {
            smin * smin
        } else {
            1.0
        }
    }

    /// Ridge solution `min |B w - r|² + lambda |w|²`, from a QR factorization
    /// of the stacked matrix `[B; √lambda I]`.
    fn ridge(&self, lambda: f64) -> Option<DVector<f64>> {
        let (m, q) = self.b.shape();
        if q == 0 {
            return Some(self.a0.clone());
        }
        let mut stacked = DMatrix::zeros(m + q, q);
        stacked.view_mut((0, 0), (m, q)).copy_from(&self.b);
        stacked.view_mut((m, 0), (q, q)).fill_diagonal(lambda.sqrt());
        let mut rhs = DVector::zeros(m + q);
        rhs.rows_mut(0, m).copy_from(&self.r);
        let qr = stacked.qr();
        qr.q_tr_mul(&mut rhs);
        let w = qr.r().solve_upper_triangular(&rhs.rows(0, q))?;
        w.iter().all(|v| v.is_finite()).then(|| self.coefficients(&w))
    }
}

fn min_norm_solve(sys: &FitSystem) -> Result<DVector<f64>> {
    Reduced::new(sys)?.min_norm()
}

/// Among all coefficient vectors that interpolate `p1`, `p2` and minimize the
/// squared error over `others`, the one with the smallest Euclidean norm.
pub fn minimum_norm_fit(
    p1: &Point3,
    p2: &Point3,
    others: &[Point3],
    degree: usize,
    scaling: ScalingMode,
) -> Result<PolynomialSurface> {
    let sys = build_constrained_system(p1, p2, others, degree, scaling)?;
    sys.surface(&min_norm_solve(&sys)?)
}

/// Minimum-norm unconstrained least-squares fit.
pub fn minimum_norm_unconstrained(points: &[Point3], degree: usize, scaling: ScalingMode) -> Result<PolynomialSurface> {
    let sys = build_unconstrained_system(points, degree, scaling)?;
    sys.surface(&min_norm_solve(&sys)?)
}

/// How the perturbation sequence is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationMode {
    /// Add the penalty `ε_i · s · |a|²` to the squared error, `s` being the
    /// square of the smallest non-zero singular value of `A N` (`N` a basis
    /// of the constraint null space). Every step is non-singular and the
    /// sequence tends to the minimum-norm fit.
    #[default]
    Diagonal,
    /// Displace every non-constraint point by `ε_i` along a seeded unit direction.
    Points,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSchedule {
    pub epsilon0: f64,
    pub decay: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub length_tol: f64,
    pub coeff_tol: f64,
    pub mode: PerturbationMode,
}

impl Default for PerturbationSchedule {
    fn default() -> Self {
        Self {
            epsilon0: 1e-2,
            decay: 0.5,
            max_steps: 40,
            seed: 0,
            length_tol: 1e-8,
            coeff_tol: 1e-6,
            mode: PerturbationMode::Diagonal,
        }
    }
}

impl PerturbationSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon0 > 0.0
            && self.decay > 0.0
            && self.decay < 1.0
            && self.max_steps >= 2
            && self.length_tol > 0.0
            && self.coeff_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid perturbation schedule {self:?}")))
        }
    }

    pub fn epsilon(&self, step: usize) -> f64 {
        self.epsilon0 * self.decay.powi(step as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolver {
    Direct,
    Perturbation,
    MinNorm,
}

/// Outcome of a constrained fit plus geodesic, however the fit was resolved.
#[derive(Debug, Clone)]
pub struct ResolvedDistance {
    pub length: f64,
    pub path: GeodesicPath,
    pub surface: PolynomialSurface,
    pub resolver: Resolver,
    /// Number of fits in the perturbation sequence (1 for a direct fit).
    pub steps: usize,
    /// Geodesic length of every non-singular fit in the sequence.
    pub lengths: Vec<f64>,
    /// The last few coefficient vectors of the sequence.
    pub coefficient_tail: Vec<Vec<f64>>,
}

const TAIL: usize = 3;

/// Resolves a singular constrained fit as the limit of a sequence of
/// perturbed, non-singular fits, tracking the geodesic length between `p1`
/// and `p2` along the way. Stops once consecutive lengths and coefficient
/// vectors agree to the schedule's tolerances.
///
/// A non-singular input is returned directly as a one-step sequence.
pub fn perturbation_resolve(
    p1: &Point3,
    p2: &Point3,
    others: &[Point3],
    degree: usize,
    scaling: ScalingMode,
    sched: &PerturbationSchedule,
    geodesic_cfg: &GeodesicConfig,
) -> Result<ResolvedDistance> {
    sched.validate()?;
    let base = build_constrained_system(p1, p2, others, degree, scaling)?;
    if !base.singular {
        let surface = solve_constrained(&base)?;
        let (length, path) = geodesic::geodesic_distance(&surface, p1, p2, geodesic_cfg)?;
        return Ok(ResolvedDistance {
            length,
            path,
            resolver: Resolver::Direct,
            steps: 1,
            lengths: vec![length],
            coefficient_tail: vec![surface.coefficients().to_vec()],
            surface,
        });
    }

    let directions: Vec<[f64; 3]> = {
        let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
        others.iter().map(|_| random_unit(&mut rng)).collect()
    };
    let reduced = match sched.mode {
        PerturbationMode::Diagonal => Some(Reduced::new(&base)?),
        PerturbationMode::Points => None,
    };
    let ridge_scale = reduced.as_ref().map_or(0.0, Reduced::ridge_scale);

    let mut lengths = Vec::new();
    let mut tail: Vec<Vec<f64>> = Vec::new();
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let mut path: Option<GeodesicPath> = None;

    for step in 0..sched.max_steps {
        let eps = sched.epsilon(step);
        let x = match &reduced {
            Some(red) => red.ridge(eps * ridge_scale),
            None => {
                let moved: Vec<Point3> = others
                    .iter()
                    .zip(&directions)
                    .map(|(q, d)| Point3::new(q.x + eps * d[0], q.y + eps * d[1], q.z + eps * d[2]))
                    .collect();
                let sys_step = FitSystem::assemble(degree, base.scaling, &moved, Some([p1, p2]));
                if sys_step.singular {
                    continue;
                }
                linalg::solve_symmetric(&sys_step.square_matrix(), &sys_step.square_rhs(), 2)
            }
        };
        let Some(x) = x else {
            continue;
        };
        let surface = base.surface(&x)?;
        let coeffs = surface.coefficients().to_vec();

        let next_path = match &path {
            None => geodesic::geodesic_distance(&surface, p1, p2, geodesic_cfg)?.1,
            Some(prev_path) => geodesic::track_geodesic(&surface, prev_path, geodesic_cfg),
        };
        let length = next_path.length;
        lengths.push(length);
        tail.push(coeffs.clone());
        if tail.len() > TAIL {
            tail.remove(0);
        }

        let done = prev.as_ref().is_some_and(|(l0, a0)| {
            let dl = (length - l0).abs();
            let da = coeffs.iter().zip(a0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            dl <= sched.length_tol * (1.0 + length) && da <= sched.coeff_tol
        });
        prev = Some((length, coeffs));
        path = Some(next_path);
        if done {
            return Ok(ResolvedDistance {
                length,
                path: path.unwrap(),
                surface,
                resolver: Resolver::Perturbation,
                steps: step + 1,
                lengths,
                coefficient_tail: tail,
            });
        }
    }
    match prev {
        None => Err(Error::AllSingular),
        Some((last_length, _)) => Err(Error::NoConvergence { steps: sched.max_steps, last_length }),
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let n2: f64 = v.iter().map(|c| c * c).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Serializable summary of a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub degree: usize,
    pub singular: bool,
    pub rank: usize,
    pub dim: usize,
    pub resolver: Resolver,
    pub steps: usize,
    pub lengths: Vec<f64>,
    pub surface: PolynomialSurface,
}

impl FitReport {
    pub fn new(
        sys: &FitSystem,
        resolver: Resolver,
        steps: usize,
        lengths: Vec<f64>,
        surface: PolynomialSurface,
    ) -> Self {
        Self {
            degree: sys.degree,
            singular: sys.singular,
            rank: sys.rank,
            dim: sys.dim,
            resolver,
            steps,
            lengths,
            surface,
        }
    }
}
