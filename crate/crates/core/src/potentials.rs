use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, pairwise_sum};
use crate::problem::DiscreteProblem;

/// Dual triple `(f, g, h)` on the discrete atoms. Row `i` of `g` is `g(u_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potentials {
    pub f: Array1<f64>,
    pub g: Array2<f64>,
    pub h: Array1<f64>,
}

impl Potentials {
    pub fn zeros(prob: &DiscreteProblem) -> Self {
        Self {
            f: Array1::zeros(prob.m()),
            g: Array2::zeros((prob.m(), prob.d_x())),
            h: Array1::zeros(prob.n()),
        }
    }

    pub fn check(&self, prob: &DiscreteProblem) -> Result<()> {
        if self.f.len() != prob.m()
            || self.g.dim() != (prob.m(), prob.d_x())
            || self.h.len() != prob.n()
        {
            return Err(Error::Dimension(format!(
                "potentials have shapes f:{} g:{:?} h:{}, problem expects f:{} g:({}, {}) h:{}",
                self.f.len(),
                self.g.dim(),
                self.h.len(),
                prob.m(),
                prob.m(),
                prob.d_x(),
                prob.n()
            )));
        }
        if self.f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("f"));
        }
        if self.g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("g"));
        }
        if self.h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("h"));
        }
        Ok(())
    }

    /// Applies the affine shift `(f + α, g + v, h − α − ⟨v, x⟩)`, which
    /// leaves the dual objective unchanged.
    pub fn shifted(&self, alpha: f64, v: ArrayView1<f64>, x: ndarray::ArrayView2<f64>) -> Self {
        let f = &self.f + alpha;
        let mut g = self.g.clone();
        for mut row in g.axis_iter_mut(Axis(0)) {
            row += &v;
        }
        let h = Array1::from_shape_fn(self.h.len(), |j| {
            self.h[j] - alpha - numerics::dot(v, x.row(j))
        });
        Self { f, g, h }
    }

    /// The affine shift with `Σ a_i f_i = 0` and `Σ a_i g_i = 0`.
    pub fn normalized(&self, prob: &DiscreteProblem) -> Self {
        let (f_mean, g_mean) = self.means(prob.a());
        self.shifted(-f_mean, (-&g_mean).view(), prob.x())
    }

    /// `(Σ a_i f_i, Σ a_i g_i)`
    pub fn means(&self, a: ArrayView1<f64>) -> (f64, Array1<f64>) {
        let terms: Vec<f64> = self.f.iter().zip(a.iter()).map(|(f, w)| f * w).collect();
        (
            pairwise_sum(&terms),
            numerics::weighted_mean_rows(self.g.view(), a),
        )
    }

    /// Largest of `|Σ a_i f_i|` and `‖Σ a_i g_i‖`.
    pub fn normalization_error(&self, a: ArrayView1<f64>) -> f64 {
        let (f_mean, g_mean) = self.means(a);
        f_mean.abs().max(numerics::norm(g_mean.view()))
    }

    pub fn f_sup(&self) -> f64 {
        self.f.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max_i ‖g_i‖`
    pub fn g_sup(&self) -> f64 {
        self.g
            .rows()
            .into_iter()
            .map(numerics::norm)
            .fold(0.0, f64::max)
    }

    pub fn h_sup(&self) -> f64 {
        self.h.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖(f − f', g − g', h − h')‖_ℋ` with `L²(μ) × L²(μ) × L²(ν)` weights.
    pub fn distance(&self, other: &Self, prob: &DiscreteProblem) -> f64 {
        hilbert_norm_sq(
            (&self.f - &other.f).view(),
            (&self.g - &other.g).view(),
            (&self.h - &other.h).view(),
            prob,
        )
        .sqrt()
    }
}

/// Squared `ℋ`-norm of a triple living on the atoms of `prob`.
pub fn hilbert_norm_sq(
    f: ArrayView1<f64>,
    g: ndarray::ArrayView2<f64>,
    h: ArrayView1<f64>,
    prob: &DiscreteProblem,
) -> f64 {
    let a = prob.a();
    let b = prob.b();
    let ff: Vec<f64> = (0..f.len()).map(|i| a[i] * f[i] * f[i]).collect();
    let gg: Vec<f64> = (0..g.nrows())
        .map(|i| a[i] * numerics::dot(g.row(i), g.row(i)))
        .collect();
    let hh: Vec<f64> = (0..h.len()).map(|j| b[j] * h[j] * h[j]).collect();
    pairwise_sum(&ff) + pairwise_sum(&gg) + pairwise_sum(&hh)
}

/// `‖g‖_{L²(a)}` for a row-indexed vector field.
pub fn l2_rows(g: ndarray::ArrayView2<f64>, a: ArrayView1<f64>) -> f64 {
    let terms: Vec<f64> = (0..g.nrows())
        .map(|i| a[i] * numerics::dot(g.row(i), g.row(i)))
        .collect();
    pairwise_sum(&terms).sqrt()
}
