//! Dense factorizations used by the fitting code.
//!
//! `SymmetricIndefinite` is a Bunch–Kaufman `P K Pᵀ = L D Lᵀ` factorization
//! with 1×1 and 2×2 pivot blocks. It handles the saddle matrices of the
//! constrained fits, which are symmetric but never definite.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative tolerance on singular values of an assembled square system.
pub const RANK_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
enum Pivot {
    One(f64),
    Two { a: f64, b: f64, c: f64 },
}

#[derive(Debug, Clone)]
pub struct SymmetricIndefinite {
    n: usize,
    // Unit lower factor stored below the diagonal, row-major.
    l: Vec<f64>,
    pivots: Vec<(usize, Pivot)>,
    perm: Vec<usize>,
}

impl SymmetricIndefinite {
    /// Factorizes the symmetric matrix `k` (only the lower triangle is read).
    /// Returns `None` when a pivot vanishes exactly.
    pub fn new(k: &DMatrix<f64>) -> Option<Self> {
        let n = k.nrows();
        assert_eq!(n, k.ncols(), "matrix must be square");
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                a[i * n + j] = k[(i, j)];
                a[j * n + i] = k[(i, j)];
            }
        }
        let idx = |i: usize, j: usize| i * n + j;
        let alpha = (1.0 + 17f64.sqrt()) / 8.0;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::new();

        let swap = |a: &mut Vec<f64>, perm: &mut Vec<usize>, r: usize, s: usize| {
            if r == s {
                return;
            }
            for j in 0..n {
                a.swap(idx(r, j), idx(s, j));
            }
            for i in 0..n {
                a.swap(idx(i, r), idx(i, s));
            }
            perm.swap(r, s);
        };

        let mut k0 = 0;
        while k0 < n {
            let absakk = a[idx(k0, k0)].abs();
            let (imax, colmax) = ((k0 + 1)..n).map(|i| (i, a[idx(i, k0)].abs())).fold((k0, 0.0), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
            if absakk.max(colmax) == 0.0 {
                return None;
            }
            let mut step = 1;
            let mut kp = k0;
            if absakk < alpha * colmax {
                let rowmax = (k0..n).filter(|&j| j != imax).map(|j| a[idx(imax, j)].abs()).fold(0.0, f64::max);
                if absakk * rowmax >= alpha * colmax * colmax {
                    kp = k0;
                } else if a[idx(imax, imax)].abs() >= alpha * rowmax {
                    kp = imax;
                } else {
                    kp = imax;
                    step = 2;
                }
            }
            let kk = k0 + step - 1;
            swap(&mut a, &mut perm, kk, kp);

            if step == 1 {
                let d = a[idx(k0, k0)];
                if d == 0.0 {
                    return None;
                }
                let col: Vec<f64> = ((k0 + 1)..n).map(|i| a[idx(i, k0)]).collect();
                for (ii, i) in ((k0 + 1)..n).enumerate() {
                    let li = col[ii] / d;
                    for (jj, j) in ((k0 + 1)..=i).enumerate() {
                        a[idx(i, j)] -= li * col[jj];
                        a[idx(j, i)] = a[idx(i, j)];
                    }
                    a[idx(i, k0)] = li;
                }
                pivots.push((k0, Pivot::One(d)));
            } else {
                let (d11, d21, d22) = (a[idx(k0, k0)], a[idx(k0 + 1, k0)], a[idx(k0 + 1, k0 + 1)]);
                let det = d11 * d22 - d21 * d21;
                if det == 0.0 {
                    return None;
                }
                let c0: Vec<f64> = ((k0 + 2)..n).map(|i| a[idx(i, k0)]).collect();
                let c1: Vec<f64> = ((k0 + 2)..n).map(|i| a[idx(i, k0 + 1)]).collect();
                let mut l0 = vec![0.0; c0.len()];
                let mut l1 = vec![0.0; c0.len()];
                for t in 0..c0.len() {
                    l0[t] = (c0[t] * d22 - c1[t] * d21) / det;
                    l1[t] = (c1[t] * d11 - c0[t] * d21) / det;
                }
                for (ii, i) in ((k0 + 2)..n).enumerate() {
                    for (jj, j) in ((k0 + 2)..=i).enumerate() {
                        a[idx(i, j)] -= l0[ii] * c0[jj] + l1[ii] * c1[jj];
                        a[idx(j, i)] = a[idx(i, j)];
                    }
                    a[idx(i, k0)] = l0[ii];
                    a[idx(i, k0 + 1)] = l1[ii];
                }
                a[idx(k0 + 1, k0)] = 0.0;
                pivots.push((k0, Pivot::Two { a: d11, b: d21, c: d22 }));
            }
            k0 += step;
        }
        Some(Self { n, l: a, pivots, perm })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let l = |i: usize, j: usize| self.l[i * n + j];
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        // L y = P b; the 2x2 blocks have no sub-diagonal entry inside the block.
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                if !self.in_same_block(i, j) {
                    s -= l(i, j) * y[j];
                }
            }
            y[i] = s;
        }
        for &(k, piv) in &self.pivots {
            match piv {
                Pivot::One(d) => y[k] /= d,
                Pivot::Two { a, b, c } => {
                    let det = a * c - b * b;
                    let (y0, y1) = (y[k], y[k + 1]);
                    y[k] = (c * y0 - b * y1) / det;
                    y[k + 1] = (a * y1 - b * y0) / det;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                if !self.in_same_block(j, i) {
                    s -= l(j, i) * y[j];
                }
            }
            y[i] = s;
        }
        let mut x = DVector::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    fn in_same_block(&self, i: usize, j: usize) -> bool {
        // i > j; only a 2x2 block starting at j couples (j + 1, j).
        i == j + 1
            && self
                .pivots
                .binary_search_by_key(&j, |&(k, _)| k)
                .is_ok_and(|pos| matches!(self.pivots[pos].1, Pivot::Two { .. }))
    }
}

/// Solves `k x = b` with a symmetric-indefinite factorization followed by
/// `refinements` steps of iterative refinement against the original `k`.
pub fn solve_symmetric(k: &DMatrix<f64>, b: &DVector<f64>, refinements: usize) -> Option<DVector<f64>> {
    let f = SymmetricIndefinite::new(k)?;
    let mut x = f.solve(b);
    for _ in 0..refinements {
        let r = b - k * &x;
        x += f.solve(&r);
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Singular values of a symmetric matrix, largest first.
pub fn symmetric_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().map(|v| v.abs()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with tolerance `σ_max · dim · RANK_RTOL`.
pub fn numerical_rank(singular_values: &[f64], dim: usize) -> usize {
    let smax = singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = smax * dim as f64 * RANK_RTOL;
    singular_values.iter().filter(|&&s| s > tol).count()
}

/// Orthonormal basis of the null space of the full-row-rank `c` (`r × p`).
/// Returns `None` if `c` is row-rank deficient.
pub fn null_space_basis(c: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let (r, p) = c.shape();
    if r > p {
        return None;
    }
    // QR of [Cᵀ | I] yields a full p×p orthogonal Q whose leading r columns span range(Cᵀ).
    let mut aug = DMatrix::zeros(p, r + p);
    aug.view_mut((0, 0), (p, r)).copy_from(&c.transpose());
    aug.view_mut((0, r), (p, p)).fill_with_identity();
    let qr = aug.qr();
    let q = qr.q();
    let rr = qr.r();
    let scale = (0..r).map(|i| rr[(i, i)].abs()).fold(0.0, f64::max);
    if scale == 0.0 || (0..r).any(|i| rr[(i, i)].abs() <= scale * p as f64 * f64::EPSILON * 16.0) {
        return None;
    }
    let range = q.columns(0, r).into_owned();
    let null = q.columns(r, p - r).into_owned();
    Some((range, null))
}
