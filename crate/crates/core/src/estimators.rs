//! Per-atom estimates of the intercept `B₀(u)` and slope `B₁(u)` from the
//! conditional law of `(x, y)` given `u_i` under the coupling of a triple.
//!
//! The triple should have exact row marginals, such as the half-step
//! `(f^{t+1}, G^t, h^{t+1})` of a modified step, so that the conditional
//! weights need no renormalization.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::{ExpMode, Kernel};
use crate::error::{Error, Result};
use crate::numerics::{self, pairwise_sum};
use crate::potentials::Potentials;
use crate::problem::{DiscreteProblem, LAMBDA_TOL_REL};

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMoments {
    /// `Σ_j w_j y_j`
    pub mean_y: Array1<f64>,
    /// `Σ_j w_j x_j x_jᵀ`
    pub xx: Array2<f64>,
    /// `Σ_j w_j x_j y_jᵀ`
    pub xy: Array2<f64>,
}

fn weighted(w: &[f64], tmp: &mut [f64], f: impl Fn(usize) -> f64) -> f64 {
    for (j, t) in tmp.iter_mut().enumerate() {
        *t = w[j] * f(j);
    }
    pairwise_sum(tmp)
}

fn moments_from_weights(w: &[f64], prob: &DiscreteProblem) -> ConditionalMoments {
    let (x, y) = (prob.x(), prob.y());
    let (dx, dy) = (prob.d_x(), prob.d_y());
    let mut tmp = vec![0.0; w.len()];
    let mean_y = Array1::from_shape_fn(dy, |k| weighted(w, &mut tmp, |j| y[[j, k]]));
    let mut xx = Array2::zeros((dx, dx));
    for p in 0..dx {
        for q in p..dx {
            let v = weighted(w, &mut tmp, |j| x[[j, p]] * x[[j, q]]);
            xx[[p, q]] = v;
            xx[[q, p]] = v;
        }
    }
    let xy = Array2::from_shape_fn((dx, dy), |(p, k)| weighted(w, &mut tmp, |j| x[[j, p]] * y[[j, k]]));
    ConditionalMoments { mean_y, xx, xy }
}

/// Moments of `(x, y)` under weights `w_j ∝ b_j exp(s_ij)` for row `i`.
pub fn conditional_moments(p: &Potentials, prob: &DiscreteProblem, i: usize) -> Result<ConditionalMoments> {
    p.check(prob)?;
    if i >= prob.m() {
        return Err(Error::Dimension(format!("row {i} out of range for {} reference atoms", prob.m())));
    }
    let w = Kernel::new(prob, ExpMode::LogDomain).row_weights(i, p);
    assert!(w.iter().any(|&v| v > 0.0), "conditional weights of row {i} vanish");
    Ok(moments_from_weights(&w, prob))
}

/// `B̂₀(u_i) = 𝔼_w[y]` and `B̂₁(u_i) = 𝔼_w[x xᵀ]⁻¹ 𝔼_w[x yᵀ]` for every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    /// `m × d_y`
    pub b0: Array2<f64>,
    /// `d_x × d_y` per row; `None` where the conditional second moment of
    /// `x` is numerically singular.
    pub b1: Vec<Option<Array2<f64>>>,
}

impl Estimates {
    pub fn degenerate_rows(&self) -> Vec<usize> {
        self.b1
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.is_none().then_some(i))
            .collect()
    }

    /// `‖B̂₀ − B̂₀'‖_{L²(a)}`
    pub fn b0_distance(&self, other: &Self, a: ndarray::ArrayView1<f64>) -> f64 {
        crate::potentials::l2_rows((&self.b0 - &other.b0).view(), a)
    }

    /// `‖B̂₁ − B̂₁'‖_{L²(a)}` with the Frobenius norm per row. Rows that are
    /// degenerate in either estimate make the distance infinite.
    pub fn b1_distance(&self, other: &Self, a: ndarray::ArrayView1<f64>) -> f64 {
        let terms: Vec<f64> = self
            .b1
            .iter()
            .zip(other.b1.iter())
            .enumerate()
            .map(|(i, pair)| match pair {
                (Some(p), Some(q)) => a[i] * (p - q).iter().map(|v| v * v).sum::<f64>(),
                _ => f64::INFINITY,
            })
            .collect();
        pairwise_sum(&terms).sqrt()
    }

    pub fn records(&self, prob: &DiscreteProblem) -> Vec<EstimateRecord> {
        (0..self.b0.nrows())
            .map(|i| EstimateRecord {
                row: i,
                u: prob.u().row(i).to_vec(),
                b0: self.b0.row(i).to_vec(),
                b1: self.b1[i]
                    .as_ref()
                    .map(|m| m.rows().into_iter().map(|r| r.to_vec()).collect()),
            })
            .collect()
    }
}

/// One row of [`Estimates`] in a plain, serializable shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub row: usize,
    pub u: Vec<f64>,
    pub b0: Vec<f64>,
    /// `d_x` rows of length `d_y`; `null` for degenerate rows.
    pub b1: Option<Vec<Vec<f64>>>,
}

pub fn b_estimators(p: &Potentials, prob: &DiscreteProblem) -> Result<Estimates> {
    p.check(prob)?;
    let kernel = Kernel::new(prob, ExpMode::LogDomain);
    let per_row: Vec<(Array1<f64>, Option<Array2<f64>>)> = (0..prob.m())
        .into_par_iter()
        .map(|i| {
            let w = kernel.row_weights(i, p);
            let mom = moments_from_weights(&w, prob);
            let tol = LAMBDA_TOL_REL * numerics::trace(&mom.xx);
            let b1 = numerics::sym_inverse(&mom.xx, tol).map(|inv| inv.dot(&mom.xy));
            (mom.mean_y, b1)
        })
        .collect();
    let mut b0 = Array2::zeros((prob.m(), prob.d_y()));
    let mut b1 = Vec::with_capacity(prob.m());
    for (i, (mean, slope)) in per_row.into_iter().enumerate() {
        b0.row_mut(i).assign(&mean);
        if slope.is_none() {
            log::warn!("conditional covariate moment of row {i} is degenerate");
        }
        b1.push(slope);
    }
    Ok(Estimates { b0, b1 })
}
