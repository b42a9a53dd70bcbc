//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numerical code.

#![allow(dead_code, clippy::too_many_arguments)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

const GL_NODES: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] =
    [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];

/// Length of the curve `t ↦ (x(t), y(t), f(x(t), y(t)))` over the straight
/// planar segment `p → q`, by 5-point Gauss-Legendre. `grad` is `∇f`.
pub fn lifted_segment_length(grad: &dyn Fn(f64, f64) -> (f64, f64), p: [f64; 2], q: [f64; 2]) -> f64 {
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(|(&s, w)| {
            let t = 0.5 * (s + 1.0);
            let (fx, fy) = grad(p[0] + t * dx, p[1] + t * dy);
            let dz = fx * dx + fy * dy;
            0.5 * w * (dx * dx + dy * dy + dz * dz).sqrt()
        })
        .sum()
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A regular planar grid whose lifted nodes are joined to their 16
/// neighbours (king and knight moves). Each edge weighs the exact surface
/// length over its planar segment, so any graph path is the length of a real
/// curve on the surface and Dijkstra gives an upper bound on the geodesic
/// distance.
pub struct MeshGrid {
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

const STENCIL: [(i64, i64); 16] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
    (2, 1),
    (2, -1),
    (-2, 1),
    (-2, -1),
    (1, 2),
    (1, -2),
    (-1, 2),
    (-1, -2),
];

impl MeshGrid {
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h]
    }

    /// Nearest grid node to `p`.
    pub fn node(&self, p: [f64; 2]) -> (usize, usize) {
        (((p[0] - self.x0) / self.h).round() as usize, ((p[1] - self.y0) / self.h).round() as usize)
    }

    pub fn shortest(&self, grad: &dyn Fn(f64, f64) -> (f64, f64), from: (usize, usize), to: (usize, usize)) -> f64 {
        let idx = |i: usize, j: usize| j * self.nx + i;
        let mut dist = vec![f64::INFINITY; self.nx * self.ny];
        let mut heap = BinaryHeap::new();
        dist[idx(from.0, from.1)] = 0.0;
        heap.push(Entry(0.0, idx(from.0, from.1)));
        let target = idx(to.0, to.1);
        while let Some(Entry(d, k)) = heap.pop() {
            if k == target {
                return d;
            }
            if d > dist[k] {
                continue;
            }
            let (i, j) = ((k % self.nx) as i64, (k / self.nx) as i64);
            for (di, dj) in STENCIL {
                let (a, b) = (i + di, j + dj);
                if a < 0 || b < 0 || a >= self.nx as i64 || b >= self.ny as i64 {
                    continue;
                }
                let (a, b) = (a as usize, b as usize);
                let w = lifted_segment_length(grad, self.point(i as usize, j as usize), self.point(a, b));
                let nd = d + w;
                if nd < dist[idx(a, b)] {
                    dist[idx(a, b)] = nd;
                    heap.push(Entry(nd, idx(a, b)));
                }
            }
        }
        dist[target]
    }
}

/// Optimal closed-tour length by enumerating every permutation of the
/// points other than `0`.
pub fn brute_force_tour(d: &[Vec<f64>]) -> f64 {
    fn permute(rest: &mut Vec<usize>, k: usize, d: &[Vec<f64>], best: &mut f64) {
        if k == rest.len() {
            let mut len = d[0][rest[0]] + d[*rest.last().unwrap()][0];
            for w in rest.windows(2) {
                len += d[w[0]][w[1]];
            }
            *best = best.min(len);
            return;
        }
        for i in k..rest.len() {
            rest.swap(k, i);
            permute(rest, k + 1, d, best);
            rest.swap(k, i);
        }
    }
    let n = d.len();
    if n < 2 {
        return 0.0;
    }
    let mut rest: Vec<usize> = (1..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut rest, 0, d, &mut best);
    best
}

pub fn euclidean(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
}

/// `n` points with pairwise planar separation at least `min_gap`, drawn
/// uniformly from `[-r, r]²`.
pub fn scattered_xy(rng: &mut ChaCha8Rng, n: usize, r: f64, min_gap: f64) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(n);
    while out.len() < n {
        let p = [rng.random_range(-r..r), rng.random_range(-r..r)];
        if out.iter().all(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() >= min_gap) {
            out.push(p);
        }
    }
    out
}

/// Numerical rank of a dense row-major matrix by Gaussian elimination with
/// full pivoting, relative tolerance `rtol` against the largest entry.
pub fn elimination_rank(rows: &[Vec<f64>], rtol: f64) -> usize {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    let mut cols: Vec<usize> = (0..n).collect();
    while rank < m.min(n) {
        let mut best = (0.0, rank, rank);
        for (i, row) in a.iter().enumerate().skip(rank) {
            for &c in &cols[rank..] {
                if row[c].abs() > best.0 {
                    best = (row[c].abs(), i, c);
                }
            }
        }
        if best.0 <= rtol * scale {
            break;
        }
        a.swap(rank, best.1);
        let pos = cols.iter().position(|&c| c == best.2).unwrap();
        cols.swap(rank, pos);
        let c = cols[rank];
        for i in rank + 1..m {
            let f = a[i][c] / a[rank][c];
            if f != 0.0 {
                for &cc in &cols[rank..] {
                    a[i][cc] -= f * a[rank][cc];
                }
            }
        }
        rank += 1;
    }
    rank
}
