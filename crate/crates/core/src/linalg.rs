//! Small dense helpers over `&[f64]` plus the two eigen-solvers the lab needs:
//! a power iteration for covariance operator norms and a symmetric
//! eigendecomposition (nalgebra) for square roots and PCA.

use nalgebra::{DMatrix, SymmetricEigen};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// Cosine of the angle between `a` and `b`, `None` when either is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Outcome of [`power_iteration`].
#[derive(Debug, Clone, PartialEq)]
pub struct PowerResult {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub const POWER_MAX_ITER: usize = 10_000;
pub const POWER_TOL: f64 = 1e-8;

/// Dominant eigenvalue of a symmetric PSD operator given as a closure
/// `apply(v, out)` writing `A v` into `out`.
///
/// Starts from the normalized all-ones vector and stops once the Rayleigh
/// quotient changes by at most `tol` relative. A stall at the iteration cap
/// returns the last iterate with `converged = false`.
pub fn power_iteration<F>(dim: usize, mut apply: F, tol: f64, max_iter: usize) -> PowerResult
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut w = vec![0.0; dim];
    let mut value = 0.0;
    for it in 1..=max_iter {
        apply(&v, &mut w);
        let rq = dot(&v, &w);
        let wn = norm(&w);
        if wn == 0.0 {
            return PowerResult { value: 0.0, vector: v, iterations: it, converged: true };
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        if it > 1 && (rq - value).abs() <= tol * rq.abs() {
            return PowerResult { value: rq, vector: v, iterations: it, converged: true };
        }
        value = rq;
    }
    PowerResult { value, vector: v, iterations: max_iter, converged: false }
}

/// Operator norm of the unbiased sample covariance of `rows` (each of length `d`)
/// around `mean`.
pub fn covariance_operator_norm(rows: &[&[f64]], mean: &[f64], d: usize) -> PowerResult {
    let m = rows.len();
    let centered: Vec<Vec<f64>> = rows.iter().map(|r| sub(r, mean)).collect();
    let denom = (m as f64 - 1.0).max(1.0);
    if m > d {
        // explicit d x d is cheaper per iteration once there are more samples than dims
        let mut cov = vec![0.0; d * d];
        for x in &centered {
            for i in 0..d {
                let xi = x[i];
                let row = &mut cov[i * d..(i + 1) * d];
                for (c, xj) in row.iter_mut().zip(x) {
                    *c += xi * xj;
                }
            }
        }
        cov.iter_mut().for_each(|c| *c /= denom);
        power_iteration(
            d,
            |v, out| {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = dot(&cov[i * d..(i + 1) * d], v);
                }
            },
            POWER_TOL,
            POWER_MAX_ITER,
        )
    } else {
        let mut proj = vec![0.0; m];
        power_iteration(
            d,
            |v, out| {
                for (p, x) in proj.iter_mut().zip(&centered) {
                    *p = dot(x, v);
                }
                out.iter_mut().for_each(|o| *o = 0.0);
                for (p, x) in proj.iter().zip(&centered) {
                    for (o, xi) in out.iter_mut().zip(x) {
                        *o += p * xi;
                    }
                }
                out.iter_mut().for_each(|o| *o /= denom);
            },
            POWER_TOL,
            POWER_MAX_ITER,
        )
    }
}

/// Symmetric PSD square root of a row-major `d x d` matrix. Returns `None`
/// if the matrix is not symmetric or has an eigenvalue below `-tol * max|λ|`.
pub fn psd_sqrt(mat: &[f64], d: usize) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(d, d, mat);
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..d {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return None;
            }
        }
    }
    let eig = SymmetricEigen::new(m);
    let lam_max = eig.eigenvalues.amax();
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * lam_max.max(1.0)) {
        return None;
    }
    let sqrt_l = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    let root = q * DMatrix::from_diagonal(&sqrt_l) * q.transpose();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            // symmetrize away round-off
            out[i * d + j] = 0.5 * (root[(i, j)] + root[(j, i)]);
        }
    }
    Some(out)
}

/// Leading `k` eigenpairs (descending) of the sample covariance of centered rows.
///
/// Works in the smaller of the sample and feature spaces; eigenvectors are
/// always returned in feature space with unit norm.
pub fn top_principal_axes(centered: &[Vec<f64>], d: usize, k: usize) -> Vec<(f64, Vec<f64>)> {
    let m = centered.len();
    let denom = (m as f64 - 1.0).max(1.0);
    let mut pairs: Vec<(f64, Vec<f64>)> = if m >= d {
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for x in centered {
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] += x[i] * x[j];
                }
            }
        }
        cov /= denom;
        let eig = SymmetricEigen::new(cov);
        (0..d)
            .map(|c| (eig.eigenvalues[c], eig.eigenvectors.column(c).iter().copied().collect()))
            .collect()
    } else {
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let g = dot(&centered[i], &centered[j]) / denom;
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
        }
        let eig = SymmetricEigen::new(gram);
        (0..m)
            .map(|c| {
                let u = eig.eigenvectors.column(c);
                let mut v = vec![0.0; d];
                for (ui, x) in u.iter().zip(centered) {
                    for (vj, xj) in v.iter_mut().zip(x) {
                        *vj += ui * xj;
                    }
                }
                let n = norm(&v);
                if n > 0.0 {
                    v.iter_mut().for_each(|x| *x /= n);
                }
                (eig.eigenvalues[c], v)
            })
            .collect()
    };
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.truncate(k);
    pairs
}
