//! Shortest paths on polynomial Monge patches.
//!
//! A path is a polyline in the parameter plane with fixed endpoints. Its
//! length is the length of the lifted 3D polyline through
//! `(u_i, v_i, f(u_i, v_i))`. Interior nodes are moved by damped Newton steps
//! on that length; the Hessian couples only neighbouring nodes, so every step
//! is a block-tridiagonal solve. Node count is doubled until the minimized
//! length stops changing, and a few seeded restarts guard against settling
//! on a longer geodesic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PolynomialSurface};

/// Maximum vertical offset of a query point from the surface.
pub const ON_SURFACE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub nodes: Vec<[f64; 2]>,
    pub length: f64,
    pub converged: bool,
    pub gradient_norm: f64,
    #[serde(default)]
    pub refinement_levels: usize,
}

impl GeodesicPath {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn reversed(mut self) -> Self {
        self.nodes.reverse();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicConfig {
    pub initial_nodes: usize,
    pub max_nodes: usize,
    pub grad_tol: f64,
    pub refine_tol: f64,
    pub restarts: usize,
    /// Restart bump height as a fraction of the planar endpoint separation.
    pub restart_amplitude: f64,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        Self {
            initial_nodes: 65,
            max_nodes: 1025,
            grad_tol: 1e-8,
            refine_tol: 1e-7,
            restarts: 3,
            restart_amplitude: 0.1,
            seed: 0,
            max_iterations: 400,
        }
    }
}

impl GeodesicConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_nodes >= 3
            && self.max_nodes >= self.initial_nodes
            && self.grad_tol > 0.0
            && self.refine_tol > 0.0
            && self.restart_amplitude >= 0.0
            && self.max_iterations > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid geodesic config {self:?}")))
        }
    }
}

/// Uniform straight segment from `(p1.x, p1.y)` to `(p2.x, p2.y)`. The
/// length is the 3D chord until the path is evaluated on a surface.
pub fn initial_path(p1: &Point3, p2: &Point3, nodes: usize) -> GeodesicPath {
    let nodes = nodes.max(2);
    let last = (nodes - 1) as f64;
    let pts = (0..nodes)
        .map(|k| {
            if k == 0 {
                [p1.x, p1.y]
            } else if k == nodes - 1 {
                [p2.x, p2.y]
            } else {
                let t = k as f64 / last;
                [p1.x + t * (p2.x - p1.x), p1.y + t * (p2.y - p1.y)]
            }
        })
        .collect();
    GeodesicPath {
        nodes: pts,
        length: p1.distance(p2),
        converged: false,
        gradient_norm: f64::NAN,
        refinement_levels: 0,
    }
}

fn lifted(s: &PolynomialSurface, n: &[f64; 2]) -> [f64; 3] {
    [n[0], n[1], s.eval(n[0], n[1])]
}

fn chord(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn polyline_length(s: &PolynomialSurface, nodes: &[[f64; 2]]) -> f64 {
    let pts: Vec<[f64; 3]> = nodes.iter().map(|n| lifted(s, n)).collect();
    pts.windows(2).map(|w| chord(&w[0], &w[1])).sum()
}

/// Length of the lifted polyline.
pub fn path_length(s: &PolynomialSurface, path: &GeodesicPath) -> f64 {
    polyline_length(s, &path.nodes)
}

type Block = [[f64; 2]; 2];

struct Objective {
    length: f64,
    grad: Vec<[f64; 2]>,
    diag: Vec<Block>,
    // coupling between interior node i and i + 1
    off: Vec<Block>,
}

/// Length, gradient and Hessian with respect to the interior nodes.
fn objective(s: &PolynomialSurface, nodes: &[[f64; 2]], with_hessian: bool) -> Objective {
    let n = nodes.len();
    let m = n.saturating_sub(2);
    let jets: Vec<_> = nodes.iter().map(|p| s.jet(p[0], p[1])).collect();
    let pts: Vec<[f64; 3]> = nodes.iter().zip(&jets).map(|(p, j)| [p[0], p[1], j.f]).collect();
    let mut out = Objective {
        length: 0.0,
        grad: vec![[0.0; 2]; m],
        diag: if with_hessian { vec![[[0.0; 2]; 2]; m] } else { Vec::new() },
        off: if with_hessian { vec![[[0.0; 2]; 2]; m.saturating_sub(1)] } else { Vec::new() },
    };
    for k in 0..n - 1 {
        let (a, b) = (&pts[k], &pts[k + 1]);
        let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let l = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        out.length += l;
        if l <= f64::MIN_POSITIVE {
            continue;
        }
        let t = [d[0] / l, d[1] / l, d[2] / l];
        let (ja, jb) = (&jets[k], &jets[k + 1]);
        // J = [[1, 0], [0, 1], [fx, fy]]; Jᵀ t
        let jt = |fx: f64, fy: f64| [t[0] + fx * t[2], t[1] + fy * t[2]];
        // interior index of node k is k - 1
        let ia = k.checked_sub(1).filter(|&i| i < m);
        let ib = (k + 1 < n - 1).then_some(k);
        if let Some(i) = ia {
            let g = jt(ja.fx, ja.fy);
            out.grad[i][0] -= g[0];
            out.grad[i][1] -= g[1];
        }
        if let Some(i) = ib {
            let g = jt(jb.fx, jb.fy);
            out.grad[i][0] += g[0];
            out.grad[i][1] += g[1];
        }
        if !with_hessian {
            continue;
        }
        // Jaᵀ (I - t tᵀ) Jb / l
        let proj = |ga: [f64; 2], gb: [f64; 2]| -> Block {
            let cols = |fx: f64, fy: f64| [[1.0, 0.0, fx], [0.0, 1.0, fy]];
            let ca = cols(ga[0], ga[1]);
            let cb = cols(gb[0], gb[1]);
            let mut blk = [[0.0; 2]; 2];
            for r in 0..2 {
                let ta: f64 = (0..3).map(|c| ca[r][c] * t[c]).sum();
                for c2 in 0..2 {
                    let dot: f64 = (0..3).map(|c| ca[r][c] * cb[c2][c]).sum();
                    let tb: f64 = (0..3).map(|c| cb[c2][c] * t[c]).sum();
                    blk[r][c2] = (dot - ta * tb) / l;
                }
            }
            blk
        };
        let ga = [ja.fx, ja.fy];
        let gb = [jb.fx, jb.fy];
        if let Some(i) = ia {
            let p = proj(ga, ga);
            let h = [[ja.fxx, ja.fxy], [ja.fxy, ja.fyy]];
            for r in 0..2 {
                for c in 0..2 {
                    out.diag[i][r][c] += p[r][c] - t[2] * h[r][c];
                }
            }
        }
        if let Some(i) = ib {
            let p = proj(gb, gb);
            let h = [[jb.fxx, jb.fxy], [jb.fxy, jb.fyy]];
            for r in 0..2 {
                for c in 0..2 {
                    out.diag[i][r][c] += p[r][c] + t[2] * h[r][c];
                }
            }
        }
        if let (Some(i), Some(_)) = (ia, ib) {
            let p = proj(ga, gb);
            for r in 0..2 {
                for c in 0..2 {
                    out.off[i][r][c] -= p[r][c];
                }
            }
        }
    }
    out
}

/// Parameter-plane unit normals of the interior nodes, from their neighbours.
fn node_normals(nodes: &[[f64; 2]]) -> Vec<[f64; 2]> {
    (1..nodes.len() - 1)
        .map(|i| {
            let (dx, dy) = (nodes[i + 1][0] - nodes[i - 1][0], nodes[i + 1][1] - nodes[i - 1][1]);
            let n = dx.hypot(dy);
            if n > 0.0 {
                [-dy / n, dx / n]
            } else {
                [0.0, 0.0]
            }
        })
        .collect()
}

fn quad(a: &[f64; 2], m: &Block, b: &[f64; 2]) -> f64 {
    a[0] * (m[0][0] * b[0] + m[0][1] * b[1]) + a[1] * (m[1][0] * b[0] + m[1][1] * b[1])
}

/// Solves `(T + mu D) x = r` for a symmetric tridiagonal `T` and positive
/// diagonal `D`; `None` unless the shifted matrix is positive definite.
fn solve_tridiagonal(diag: &[f64], off: &[f64], mu: f64, damping: &[f64], r: &[f64]) -> Option<Vec<f64>> {
    let m = diag.len();
    let mut d = vec![0.0; m];
    let mut l = vec![0.0; m];
    let mut y = vec![0.0; m];
    for i in 0..m {
        d[i] = diag[i] + mu * damping[i];
        y[i] = r[i];
        if i > 0 {
            l[i] = off[i - 1] / d[i - 1];
            d[i] -= l[i] * off[i - 1];
            y[i] -= l[i] * y[i - 1];
        }
        if !(d[i] > 0.0 && d[i].is_finite()) {
            return None;
        }
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let next = if i + 1 < m { off[i] * x[i + 1] } else { 0.0 };
        x[i] = (y[i] - next) / d[i];
    }
    Some(x)
}

struct Reduced {
    length: f64,
    normals: Vec<[f64; 2]>,
    grad: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
}

/// The objective restricted to displacements of the interior nodes along
/// `frame` (their current normals when `None`).
fn reduced(s: &PolynomialSurface, nodes: &[[f64; 2]], frame: Option<Vec<[f64; 2]>>) -> Reduced {
    let obj = objective(s, nodes, true);
    let normals = frame.unwrap_or_else(|| node_normals(nodes));
    let grad = normals.iter().zip(&obj.grad).map(|(n, g)| n[0] * g[0] + n[1] * g[1]).collect();
    let diag = normals.iter().zip(&obj.diag).map(|(n, h)| quad(n, h, n)).collect();
    let off = obj.off.iter().enumerate().map(|(i, h)| quad(&normals[i], h, &normals[i + 1])).collect();
    Reduced { length: obj.length, normals, grad, diag, off }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Moves the interior nodes of `path` to a local minimum of the lifted length.
///
/// Nodes move along their parameter-plane normals only: sliding a node along
/// the path leaves the curve unchanged and is not a descent direction worth
/// following (it lets nodes bunch up and cut corners). The normals are
/// refreshed while steps are large and frozen once they are small, so the
/// final Newton iterations work in fixed coordinates. `gradient_norm` is
/// measured over those normal displacements.
///
/// The path counts as converged when `gradient_norm <= grad_tol * (1 + length)`,
/// or when an undamped Newton step predicts a decrease below the rounding
/// error of the length (steep surfaces put a floor under the gradient).
pub fn minimize_path(s: &PolynomialSurface, path: &GeodesicPath, cfg: &GeodesicConfig) -> GeodesicPath {
    let mut nodes = path.nodes.clone();
    let n = nodes.len();
    if n < 3 {
        let length = polyline_length(s, &nodes);
        return GeodesicPath {
            nodes,
            length,
            converged: true,
            gradient_norm: 0.0,
            refinement_levels: path.refinement_levels,
        };
    }
    let mut red = reduced(s, &nodes, None);
    let mut mu_rel = 1e-10;
    let mut respaced = 0;
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        if badly_spaced(s, &nodes) && respaced < MAX_RESPACE {
            respaced += 1;
            nodes = respace(s, &nodes);
            red = reduced(s, &nodes, None);
        }
        let gnorm = norm(&red.grad);
        if gnorm <= cfg.grad_tol * (1.0 + red.length) {
            converged = true;
            break;
        }
        if !red.length.is_finite() {
            break;
        }
        let scale = red.diag.iter().map(|d| d.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let damping: Vec<f64> = red.diag.iter().map(|d| d.abs().max(1e-8 * scale)).collect();
        let rhs: Vec<f64> = red.grad.iter().map(|g| -g).collect();
        let mut accepted = false;
        let mut at_floor = false;
        while mu_rel < 1e12 {
            let Some(step) = solve_tridiagonal(&red.diag, &red.off, mu_rel, &damping, &rhs) else {
                mu_rel *= 10.0;
                continue;
            };
            let slope: f64 = step.iter().zip(&red.grad).map(|(d, g)| d * g).sum();
            if mu_rel <= NEWTON_MU && -slope <= ROUNDOFF_DECREMENT * f64::EPSILON * red.length {
                // The Newton decrement is below the rounding error of the
                // length: the gradient is at its noise floor.
                at_floor = true;
                break;
            }
            let mut alpha = 1.0;
            let mut trial = nodes.clone();
            for _ in 0..40 {
                for (i, d) in step.iter().enumerate() {
                    let nv = red.normals[i];
                    trial[i + 1] = [nodes[i + 1][0] + alpha * d * nv[0], nodes[i + 1][1] + alpha * d * nv[1]];
                }
                let lt = polyline_length(s, &trial);
                let armijo = lt <= red.length + 1e-4 * alpha * slope;
                // predicted decrease is below the roundoff of the length itself
                let flat = (slope * alpha).abs() < 1e-14 * red.length && lt <= red.length * (1.0 + 4.0 * f64::EPSILON);
                if armijo || flat {
                    let moved = step.iter().map(|d| (alpha * d).abs()).fold(0.0, f64::max);
                    let frame = (moved < FREEZE_FRACTION * min_spacing(&trial)).then(|| red.normals.clone());
                    let next = reduced(s, &trial, frame);
                    if armijo || norm(&next.grad) < gnorm {
                        nodes = trial.clone();
                        red = next;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if accepted {
                mu_rel = if alpha == 1.0 { (mu_rel * 0.1).max(1e-14) } else { mu_rel * 4.0 };
                break;
            }
            mu_rel *= 100.0;
        }
        if at_floor {
            converged = true;
            break;
        }
        if !accepted {
            // Stalled: usually nodes bunched or out of order along the path.
            if respaced >= MAX_RESPACE {
                break;
            }
            respaced += 1;
            nodes = respace(s, &nodes);
            red = reduced(s, &nodes, None);
            mu_rel = 1e-10;
        }
    }
    let gradient_norm = norm(&red.grad);
    converged = converged || gradient_norm <= cfg.grad_tol * (1.0 + red.length);
    GeodesicPath { nodes, length: red.length, converged, gradient_norm, refinement_levels: path.refinement_levels }
}

const MAX_RESPACE: usize = 20;

/// Damping below which a step counts as a Newton step.
const NEWTON_MU: f64 = 1e-8;
/// Newton decrements below this many ulps of the length are treated as zero.
const ROUNDOFF_DECREMENT: f64 = 64.0;

/// Steps below this fraction of the smallest node spacing keep the frame.
const FREEZE_FRACTION: f64 = 1e-2;

fn min_spacing(nodes: &[[f64; 2]]) -> f64 {
    nodes.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).fold(f64::INFINITY, f64::min)
}

fn badly_spaced(s: &PolynomialSurface, nodes: &[[f64; 2]]) -> bool {
    let pts: Vec<[f64; 3]> = nodes.iter().map(|p| lifted(s, p)).collect();
    let chords: Vec<f64> = pts.windows(2).map(|w| chord(&w[0], &w[1])).collect();
    let mean = chords.iter().sum::<f64>() / chords.len() as f64;
    chords.iter().any(|&c| c < 0.25 * mean)
}

/// Redistributes nodes along the parameter polyline so that consecutive
/// lifted chords have (nearly) equal length.
fn respace(s: &PolynomialSurface, nodes: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = nodes.len();
    if n < 3 {
        return nodes.to_vec();
    }
    let pts: Vec<[f64; 3]> = nodes.iter().map(|p| lifted(s, p)).collect();
    let mut cum = vec![0.0; n];
    for k in 1..n {
        cum[k] = cum[k - 1] + chord(&pts[k - 1], &pts[k]);
    }
    let total = cum[n - 1];
    if !total.is_finite() || total <= 0.0 {
        return nodes.to_vec();
    }
    let mut out = Vec::with_capacity(n);
    out.push(nodes[0]);
    let mut seg = 0;
    for k in 1..n - 1 {
        let target = total * k as f64 / (n - 1) as f64;
        while seg + 1 < n - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let t = if span > 0.0 { (target - cum[seg]) / span } else { 0.0 };
        let (a, b) = (nodes[seg], nodes[seg + 1]);
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    out.push(nodes[n - 1]);
    out
}

fn doubled(path: &GeodesicPath) -> GeodesicPath {
    let mut nodes = Vec::with_capacity(2 * path.nodes.len() - 1);
    for w in path.nodes.windows(2) {
        nodes.push(w[0]);
        nodes.push([0.5 * (w[0][0] + w[1][0]), 0.5 * (w[0][1] + w[1][1])]);
    }
    nodes.push(*path.nodes.last().expect("non-empty path"));
    GeodesicPath { nodes, refinement_levels: path.refinement_levels + 1, ..path.clone() }
}

/// Minimizes from `start`, then doubles node count until the relative length
/// change drops below `refine_tol` or `max_nodes` would be exceeded.
fn refine(s: &PolynomialSurface, start: GeodesicPath, cfg: &GeodesicConfig) -> GeodesicPath {
    let mut best = if start.converged { start } else { minimize_path(s, &start, cfg) };
    // Stops at max_nodes even if the length is still moving; `converged`
    // reports only the optimizer at the final level.
    while 2 * best.nodes.len() - 1 <= cfg.max_nodes {
        let mut finer = doubled(&best);
        finer.nodes = respace(s, &finer.nodes);
        let next = minimize_path(s, &finer, cfg);
        let change = (next.length - best.length).abs() / next.length.max(f64::MIN_POSITIVE);
        best = next;
        if change <= cfg.refine_tol {
            break;
        }
    }
    best
}

fn restart_path(p1: &Point3, p2: &Point3, cfg: &GeodesicConfig, rng: &mut ChaCha8Rng) -> GeodesicPath {
    let mut path = initial_path(p1, p2, cfg.initial_nodes);
    let (dx, dy) = (p2.x - p1.x, p2.y - p1.y);
    let sep = dx.hypot(dy);
    let normal = [-dy / sep, dx / sep];
    let amp = cfg.restart_amplitude * sep;
    let c1: f64 = rng.random_range(-1.0..1.0);
    let c2: f64 = rng.random_range(-1.0..1.0);
    let count = path.nodes.len();
    let last = (count - 1) as f64;
    for (k, node) in path.nodes.iter_mut().enumerate() {
        let t = k as f64 / last;
        let bump = amp * (c1 * (std::f64::consts::PI * t).sin() + 0.5 * c2 * (2.0 * std::f64::consts::PI * t).sin());
        if k > 0 && k + 1 < count {
            node[0] += bump * normal[0];
            node[1] += bump * normal[1];
        }
    }
    path
}

fn check_on_surface(s: &PolynomialSurface, p: &Point3) -> Result<()> {
    let residual = s.residual(p);
    if residual <= ON_SURFACE_TOL {
        Ok(())
    } else {
        Err(Error::OffSurface { x: p.x, y: p.y, z: p.z, residual })
    }
}

/// Shortest geodesic found between two on-surface points.
///
/// Endpoints are put in lexicographic `(x, y)` order before optimizing so
/// that swapping them reproduces the same run; the returned path always
/// starts at `p1`.
pub fn geodesic_distance(
    s: &PolynomialSurface,
    p1: &Point3,
    p2: &Point3,
    cfg: &GeodesicConfig,
) -> Result<(f64, GeodesicPath)> {
    cfg.validate()?;
    check_on_surface(s, p1)?;
    check_on_surface(s, p2)?;
    if p1.same_xy(p2) {
        let path = GeodesicPath {
            nodes: vec![[p1.x, p1.y], [p2.x, p2.y]],
            length: 0.0,
            converged: true,
            gradient_norm: 0.0,
            refinement_levels: 0,
        };
        return Ok((0.0, path));
    }
    let flip = (p2.x, p2.y) < (p1.x, p1.y);
    let (a, b) = if flip { (p2, p1) } else { (p1, p2) };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![initial_path(a, b, cfg.initial_nodes)];
    for _ in 0..cfg.restarts {
        starts.push(restart_path(a, b, cfg, &mut rng));
    }
    let coarse: Vec<GeodesicPath> = starts.iter().map(|p| minimize_path(s, p, cfg)).collect();
    let best_coarse = coarse.iter().map(|p| p.length).filter(|l| l.is_finite()).fold(f64::INFINITY, f64::min);
    if !best_coarse.is_finite() {
        return Err(Error::NumericRange("geodesic length overflowed".into()));
    }
    let mut kept: Vec<GeodesicPath> = Vec::new();
    for p in coarse {
        if p.length <= best_coarse * (1.0 + 1e-2)
            && !kept.iter().any(|q| (q.length - p.length).abs() <= 1e-9 * p.length && same_track(q, &p))
        {
            kept.push(p);
        }
    }
    let best = kept
        .into_iter()
        .map(|p| refine(s, p, cfg))
        .min_by(|x, y| x.length.total_cmp(&y.length))
        .expect("at least one start");
    let best = if flip { best.reversed() } else { best };
    Ok((best.length, best))
}

fn same_track(a: &GeodesicPath, b: &GeodesicPath) -> bool {
    a.nodes.len() == b.nodes.len()
        && a.nodes
            .iter()
            .zip(&b.nodes)
            .all(|(p, q)| (p[0] - q[0]).abs() + (p[1] - q[1]).abs() <= 1e-6 * (1.0 + p[0].abs() + p[1].abs()))
}

/// Re-minimizes a path from a nearby surface on `s`, keeping its node count.
/// Used to follow one geodesic through a sequence of converging surfaces.
pub fn track_geodesic(s: &PolynomialSurface, previous: &GeodesicPath, cfg: &GeodesicConfig) -> GeodesicPath {
    let start = GeodesicPath { converged: false, ..previous.clone() };
    minimize_path(s, &start, cfg)
}

/// Largest geodesic curvature along the path, estimated from the geodesic
/// equation `u'' + Γ(u', u') ∥ u'` with derivatives taken against lifted arc
/// length. Christoffel symbols come from finite differences of `(E, F, G)`.
pub fn geodesic_residual(s: &PolynomialSurface, path: &GeodesicPath) -> f64 {
    let nodes = &path.nodes;
    if nodes.len() < 3 {
        return 0.0;
    }
    let pts: Vec<[f64; 3]> = nodes.iter().map(|n| lifted(s, n)).collect();
    let mut worst: f64 = 0.0;
    for i in 1..nodes.len() - 1 {
        let h0 = chord(&pts[i - 1], &pts[i]);
        let h1 = chord(&pts[i], &pts[i + 1]);
        if h0 <= 0.0 || h1 <= 0.0 {
            continue;
        }
        let (u0, u, u1) = (nodes[i - 1], nodes[i], nodes[i + 1]);
        let mut d1 = [0.0; 2];
        let mut d2 = [0.0; 2];
        for c in 0..2 {
            d1[c] = (h0 * h0 * (u1[c] - u[c]) + h1 * h1 * (u[c] - u0[c])) / (h0 * h1 * (h0 + h1));
            d2[c] = 2.0 * (h0 * (u1[c] - u[c]) - h1 * (u[c] - u0[c])) / (h0 * h1 * (h0 + h1));
        }
        let gamma = christoffel(s, u[0], u[1]);
        let mut acc = d2;
        for k in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    acc[k] += gamma[k][a][b] * d1[a] * d1[b];
                }
            }
        }
        let (e, f, g) = s.first_fundamental_form(u[0], u[1]);
        let inner = |x: &[f64; 2], y: &[f64; 2]| e * x[0] * y[0] + f * (x[0] * y[1] + x[1] * y[0]) + g * x[1] * y[1];
        let vv = inner(&d1, &d1);
        if vv <= 0.0 {
            continue;
        }
        let along = inner(&acc, &d1) / vv;
        let normal = [acc[0] - along * d1[0], acc[1] - along * d1[1]];
        worst = worst.max(inner(&normal, &normal).max(0.0).sqrt());
    }
    worst
}

/// `Γ^k_ab` from central differences of the first fundamental form.
fn christoffel(s: &PolynomialSurface, x: f64, y: f64) -> [[[f64; 2]; 2]; 2] {
    let h = 1e-5 * (1.0 + x.abs().max(y.abs()));
    let diff = |dx: f64, dy: f64| {
        let (ep, fp, gp) = s.first_fundamental_form(x + dx, y + dy);
        let (em, fm, gm) = s.first_fundamental_form(x - dx, y - dy);
        [(ep - em) / (2.0 * h), (fp - fm) / (2.0 * h), (gp - gm) / (2.0 * h)]
    };
    let [ex, fx, gx] = diff(h, 0.0);
    let [ey, fy, gy] = diff(0.0, h);
    let (e, f, g) = s.first_fundamental_form(x, y);
    let det = e * g - f * f;
    let inv = [[g / det, -f / det], [-f / det, e / det]];
    // Γ_{c,ab} (first kind), indices a, b, c in {u, v}
    let d = |c: usize, a: usize, b: usize| -> f64 {
        // g_ab derivatives: g_uu = E, g_uv = F, g_vv = G
        let dg = |i: usize, j: usize, wrt: usize| -> f64 {
            match (i.min(j), i.max(j), wrt) {
                (0, 0, 0) => ex,
                (0, 0, _) => ey,
                (0, 1, 0) => fx,
                (0, 1, _) => fy,
                (_, _, 0) => gx,
                _ => gy,
            }
        };
        0.5 * (dg(c, a, b) + dg(c, b, a) - dg(a, b, c))
    };
    let mut out = [[[0.0; 2]; 2]; 2];
    for k in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                out[k][a][b] = inv[k][0] * d(0, a, b) + inv[k][1] * d(1, a, b);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paraboloid() -> PolynomialSurface {
        // (x^2 + y^2) / 2
        PolynomialSurface::new(2, vec![0.0, 0.0, 0.0, 0.5, 0.0, 0.5], None).unwrap()
    }

    #[test]
    fn initial_path_examples() {
        let p = initial_path(&Point3::new(0.0, 0.0, 0.0), &Point3::new(1.0, 0.0, 0.0), 3);
        assert_eq!(p.nodes, vec![[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]]);
        let q = Point3::new(2.0, 2.0, 1.0);
        let p = initial_path(&q, &q, 4);
        assert!(p.nodes.iter().all(|n| *n == [2.0, 2.0]));
        assert_eq!(p.length, 0.0);
        let p = initial_path(&Point3::new(0.0, 0.0, 0.0), &Point3::new(4.0, 8.0, 0.0), 5);
        assert_eq!(p.nodes[1], [1.0, 2.0]);
        assert_eq!(p.nodes[2], [2.0, 4.0]);
        assert_eq!(p.nodes[3], [3.0, 6.0]);
    }

    #[test]
    fn path_length_examples() {
        let flat = PolynomialSurface::zero(1);
        let p = initial_path(&Point3::new(0.0, 0.0, 0.0), &Point3::new(3.0, 4.0, 0.0), 9);
        assert!((path_length(&flat, &p) - 5.0).abs() < 1e-12);
        let tilted = PolynomialSurface::plane(0.0, 1.0, 0.0);
        let p = initial_path(&Point3::new(0.0, 0.0, 0.0), &Point3::new(1.0, 0.0, 1.0), 2);
        assert!((path_length(&tilted, &p) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parabola_arc_length_quadrature() {
        // oracle: composite Simpson on sqrt(1 + 4t^2) over [0, 1]
        let f = |t: f64| (1.0 + 4.0 * t * t).sqrt();
        let n = 20_000;
        let h = 1.0 / n as f64;
        let mut acc = f(0.0) + f(1.0);
        for k in 1..n {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
        }
        let simpson = acc * h / 3.0;
        let closed = (2.0 * 5f64.sqrt() + 2f64.asinh()) / 4.0;
        assert!((simpson - closed).abs() < 1e-12);

        let s = PolynomialSurface::new(2, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0], None).unwrap();
        let p = initial_path(&Point3::new(0.0, 0.0, 0.0), &Point3::new(1.0, 0.0, 1.0), 1025);
        assert!((path_length(&s, &p) - simpson).abs() < 1e-5);
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for degree in 1..=4 {
            let n = crate::geometry::MonomialBasis::term_count(degree);
            let coeffs = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
            let s = PolynomialSurface::new(degree, coeffs, None).unwrap();
            let nodes: Vec<[f64; 2]> =
                (0..9).map(|k| [k as f64 * 0.2 + rng.random_range(-0.05..0.05), rng.random_range(-0.3..0.3)]).collect();
            let obj = objective(&s, &nodes, true);
            let h = 1e-6;
            for i in 1..nodes.len() - 1 {
                for c in 0..2 {
                    let mut plus = nodes.clone();
                    let mut minus = nodes.clone();
                    plus[i][c] += h;
                    minus[i][c] -= h;
                    let fd = (polyline_length(&s, &plus) - polyline_length(&s, &minus)) / (2.0 * h);
                    let g = obj.grad[i - 1][c];
                    assert!((g - fd).abs() <= 1e-6 * (1.0 + g.abs()), "grad {g} vs {fd}");

                    let gp = objective(&s, &plus, false).grad;
                    let gm = objective(&s, &minus, false).grad;
                    let hd = (gp[i - 1][0] - gm[i - 1][0]) / (2.0 * h);
                    assert!((obj.diag[i - 1][0][c] - hd).abs() <= 1e-4 * (1.0 + hd.abs()));
                    if i >= 2 {
                        let hoff = (gp[i - 2][0] - gm[i - 2][0]) / (2.0 * h);
                        assert!((obj.off[i - 2][0][c] - hoff).abs() <= 1e-4 * (1.0 + hoff.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn flat_surface_straightens_path() {
        let flat = PolynomialSurface::zero(1);
        let (a, b) = (Point3::new(-1.0, 2.0, 0.0), Point3::new(3.0, -1.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = GeodesicConfig::default();
        let bent = restart_path(&a, &b, &GeodesicConfig { restart_amplitude: 0.4, ..cfg }, &mut rng);
        let out = minimize_path(&flat, &bent, &cfg);
        assert!(out.converged);
        assert!((out.length - 5.0).abs() < 1e-9);
    }

    #[test]
    fn planar_surface_gives_chord() {
        let s = PolynomialSurface::plane(0.5, 1.5, -2.0);
        let a = s.lift(-1.0, 0.5);
        let b = s.lift(2.0, 3.0);
        let (len, path) = geodesic_distance(&s, &a, &b, &GeodesicConfig::default()).unwrap();
        assert!((len - a.distance(&b)).abs() <= 1e-9 * len);
        assert_eq!(path.nodes[0], [a.x, a.y]);
        assert_eq!(*path.nodes.last().unwrap(), [b.x, b.y]);
    }

    #[test]
    fn identical_endpoints_are_zero() {
        let s = paraboloid();
        let p = s.lift(0.3, 0.2);
        assert_eq!(geodesic_distance(&s, &p, &p, &GeodesicConfig::default()).unwrap().0, 0.0);
    }

    #[test]
    fn off_surface_is_rejected() {
        let s = paraboloid();
        let p = Point3::new(0.0, 0.0, 1.0);
        let q = s.lift(1.0, 0.0);
        assert!(matches!(geodesic_distance(&s, &p, &q, &GeodesicConfig::default()), Err(Error::OffSurface { .. })));
    }

    #[test]
    fn symmetric_in_endpoints() {
        let s = PolynomialSurface::new(3, vec![0.1, 0.3, -0.2, 0.4, -0.1, 0.2, 0.05, -0.07, 0.02, 0.1], None).unwrap();
        let a = s.lift(-1.2, 0.4);
        let b = s.lift(1.5, -0.7);
        let cfg = GeodesicConfig::default();
        let (l1, _) = geodesic_distance(&s, &a, &b, &cfg).unwrap();
        let (l2, _) = geodesic_distance(&s, &b, &a, &cfg).unwrap();
        assert!((l1 - l2).abs() <= 1e-9 * l1);
    }

    #[test]
    fn residual_vanishes_on_straight_lines() {
        let flat = PolynomialSurface::zero(1);
        let p = initial_path(&Point3::new(0.0, 0.0, 0.0), &Point3::new(3.0, 4.0, 0.0), 65);
        assert!(geodesic_residual(&flat, &p) <= 1e-10);
        let tilted = PolynomialSurface::plane(0.0, 1.0, 0.0);
        let p = initial_path(&Point3::new(0.0, 0.0, 0.0), &Point3::new(1.0, 0.0, 1.0), 65);
        assert!(geodesic_residual(&tilted, &p) <= 1e-10);
    }

    #[test]
    fn refinement_does_not_grow_length() {
        let s = paraboloid();
        let a = s.lift(-1.0, 0.0);
        let b = s.lift(1.0, 0.3);
        let cfg = GeodesicConfig::default();
        let (len, path) = geodesic_distance(&s, &a, &b, &cfg).unwrap();
        let finer = minimize_path(&s, &doubled(&path), &GeodesicConfig { max_nodes: 4097, ..cfg });
        assert!(finer.length <= len * (1.0 + cfg.refine_tol));
    }
}
