//! Summation and small dense linear algebra shared by the solvers.
//!
//! Every exponential sum in the crate goes through [`exp_shift_in_place`]
//! followed by [`pairwise_sum`], so results do not depend on thread count
//! or on the order rayon happens to schedule rows in.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Weights at or below this value count as exact zeros in denominators.
pub const ZERO_WEIGHT: f64 = 1e-15;

const PAIRWISE_BLOCK: usize = 16;

/// Pairwise (tree) summation in fixed index order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Result of exponentiating a buffer of log-terms with a common shift.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedSum {
    pub shift: f64,
    pub sum: f64,
}

impl ShiftedSum {
    /// `log Σ exp(z_k)` of the original log-terms.
    pub fn log(&self) -> f64 {
        self.shift + self.sum.ln()
    }

    /// Factor turning a shifted exponential `exp(z_k - shift)` into a
    /// normalized weight.
    pub fn inv_sum(&self) -> f64 {
        1.0 / self.sum
    }
}

/// Replaces each log-term `z_k` in `buf` by `exp(z_k - shift)`.
///
/// In the default mode `shift = max_k z_k`, so no term overflows. With
/// `naive = true` the shift is zero, reproducing the literal exponentials of
/// the matrix-form algorithm (used only for cross-checks).
pub fn exp_shift_in_place(buf: &mut [f64], naive: bool) -> ShiftedSum {
    let shift = if naive {
        0.0
    } else {
        buf.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    if shift == f64::NEG_INFINITY {
        buf.iter_mut().for_each(|v| *v = 0.0);
        return ShiftedSum { shift, sum: 0.0 };
    }
    for v in buf.iter_mut() {
        *v = (*v - shift).exp();
    }
    ShiftedSum {
        shift,
        sum: pairwise_sum(buf),
    }
}

/// Natural log of a weight, with exact zeros mapped to `-inf`.
pub fn ln_weight(w: f64) -> f64 {
    if w > 0.0 {
        w.ln()
    } else {
        f64::NEG_INFINITY
    }
}

pub fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        s += x * y;
    }
    s
}

pub fn norm(a: ArrayView1<f64>) -> f64 {
    dot(a, a).sqrt()
}

/// Weighted column means `Σ_k w_k row_k` with pairwise reductions.
pub fn weighted_mean_rows(rows: ArrayView2<f64>, w: ArrayView1<f64>) -> Array1<f64> {
    let d = rows.ncols();
    let mut out = Array1::zeros(d);
    let mut buf = vec![0.0; rows.nrows()];
    for k in 0..d {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = w[i] * rows[[i, k]];
        }
        out[k] = pairwise_sum(&buf);
    }
    out
}

/// Weighted second moment `Σ_k w_k row_k row_kᵀ`.
pub fn weighted_second_moment(rows: ArrayView2<f64>, w: ArrayView1<f64>) -> Array2<f64> {
    let d = rows.ncols();
    let mut out = Array2::zeros((d, d));
    let mut buf = vec![0.0; rows.nrows()];
    for p in 0..d {
        for q in p..d {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = w[i] * rows[[i, p]] * rows[[i, q]];
            }
            let s = pairwise_sum(&buf);
            out[[p, q]] = s;
            out[[q, p]] = s;
        }
    }
    out
}

fn to_dmatrix(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigendecomposition of a symmetric matrix; eigenvalues ascending.
pub fn sym_eigen(m: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let eig = SymmetricEigen::new(to_dmatrix(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = Array1::from_iter(order.iter().map(|&k| eig.eigenvalues[k]));
    let vecs = Array2::from_shape_fn((m.nrows(), order.len()), |(i, c)| {
        eig.eigenvectors[(i, order[c])]
    });
    (vals, vecs)
}

/// Applies `f` to the spectrum of a symmetric matrix.
pub fn sym_apply(m: &Array2<f64>, f: impl Fn(f64) -> f64) -> Array2<f64> {
    let (vals, vecs) = sym_eigen(m);
    let d = m.nrows();
    let mut out = Array2::zeros((d, d));
    for (k, &lam) in vals.iter().enumerate() {
        let fl = f(lam);
        for i in 0..d {
            for j in 0..d {
                out[[i, j]] += fl * vecs[[i, k]] * vecs[[j, k]];
            }
        }
    }
    out
}

pub fn min_eigenvalue(m: &Array2<f64>) -> f64 {
    sym_eigen(m).0[0]
}

/// Inverse of a symmetric matrix whose smallest eigenvalue exceeds `tol`.
pub fn sym_inverse(m: &Array2<f64>, tol: f64) -> Option<Array2<f64>> {
    let (vals, _) = sym_eigen(m);
    if !(vals[0] > tol) {
        return None;
    }
    Some(sym_apply(m, |l| 1.0 / l))
}

/// General inverse through LU, for the occasional non-symmetric block.
pub fn inverse(m: &Array2<f64>) -> Option<Array2<f64>> {
    to_dmatrix(m).try_inverse().map(|inv| from_dmatrix(&inv))
}

pub fn determinant(m: &Array2<f64>) -> f64 {
    to_dmatrix(m).determinant()
}

pub fn trace(m: &Array2<f64>) -> f64 {
    m.diag().sum()
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &Array2<f64>) -> Option<Array2<f64>> {
    nalgebra::Cholesky::new(to_dmatrix(m)).map(|c| from_dmatrix(&c.l()))
}

/// Solves `m z = rhs` for a symmetric positive-definite `m`.
pub fn spd_solve(m: &Array2<f64>, rhs: &Array1<f64>) -> Option<Array1<f64>> {
    let chol = nalgebra::Cholesky::new(to_dmatrix(m))?;
    let b = nalgebra::DVector::from_iterator(rhs.len(), rhs.iter().copied());
    let z = chol.solve(&b);
    Some(Array1::from_iter(z.iter().copied()))
}
