//! Closed-form optimal dual value when `(X, Y)` is jointly Gaussian and the
//! reference measure is the standard Gaussian, plus a seeded sampler that
//! turns such a model into a [`DiscreteProblem`].

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;
use crate::problem::DiscreteProblem;

/// Description of the sampler, recorded in trace headers.
pub const GENERATOR: &str = "ChaCha8Rng::seed_from_u64, StandardNormal; reference atoms first (row-major), \
then joint rows as L z + (0, m_Y) with L the lower Cholesky factor of the joint covariance";

mod flat {
    use ndarray::Array1;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Array1<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.to_vec().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array1<f64>, D::Error> {
        Vec::<f64>::deserialize(d).map(Array1::from)
    }
}

mod nested {
    use ndarray::Array2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Array2::from_shape_vec((rows.len(), ncols), rows.into_iter().flatten().collect())
            .map_err(serde::de::Error::custom)
    }
}

/// Jointly Gaussian `(X, Y)` with `𝔼X = 0`, `𝔼Y = m_Y` and the given
/// covariance blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianModel {
    #[serde(rename = "m_Y", with = "flat")]
    pub m_y: Array1<f64>,
    #[serde(rename = "Sigma_XX", with = "nested")]
    pub sigma_xx: Array2<f64>,
    #[serde(rename = "Sigma_XY", with = "nested")]
    pub sigma_xy: Array2<f64>,
    #[serde(rename = "Sigma_YY", with = "nested")]
    pub sigma_yy: Array2<f64>,
    pub epsilon: f64,
}

fn is_symmetric(m: &Array2<f64>) -> bool {
    let scale = m.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[[i, j]] - m[[j, i]]).abs() <= 1e-12 * scale))
}

impl GaussianModel {
    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn d_x(&self) -> usize {
        self.sigma_xx.nrows()
    }

    pub fn d_y(&self) -> usize {
        self.sigma_yy.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (dx, dy) = (self.d_x(), self.d_y());
        if dx == 0 || dy == 0 {
            return Err(Error::Dimension("covariance blocks must be non-empty".into()));
        }
        if self.sigma_xx.dim() != (dx, dx)
            || self.sigma_yy.dim() != (dy, dy)
            || self.sigma_xy.dim() != (dx, dy)
            || self.m_y.len() != dy
        {
            return Err(Error::Dimension(format!(
                "Sigma_XX {:?}, Sigma_XY {:?}, Sigma_YY {:?}, m_Y {} are inconsistent",
                self.sigma_xx.dim(),
                self.sigma_xy.dim(),
                self.sigma_yy.dim(),
                self.m_y.len()
            )));
        }
        let finite = self
            .m_y
            .iter()
            .chain(self.sigma_xx.iter())
            .chain(self.sigma_xy.iter())
            .chain(self.sigma_yy.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("Gaussian model"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Parameter {
                name: "epsilon",
                reason: format!("must be positive and finite, got {}", self.epsilon),
            });
        }
        if !is_symmetric(&self.sigma_xx) || !is_symmetric(&self.sigma_yy) {
            return Err(Error::NotPositiveDefinite("covariance blocks must be symmetric"));
        }
        if numerics::cholesky(&self.joint_covariance()).is_none() {
            return Err(Error::NotPositiveDefinite("joint covariance"));
        }
        if !(numerics::min_eigenvalue(&self.schur_complement()) > 0.0) {
            return Err(Error::NotPositiveDefinite("conditional covariance of Y given X"));
        }
        Ok(())
    }

    /// `[[Σ_XX, Σ_XY], [Σ_YX, Σ_YY]]`
    pub fn joint_covariance(&self) -> Array2<f64> {
        let (dx, dy) = (self.d_x(), self.d_y());
        Array2::from_shape_fn((dx + dy, dx + dy), |(i, j)| match (i < dx, j < dx) {
            (true, true) => self.sigma_xx[[i, j]],
            (true, false) => self.sigma_xy[[i, j - dx]],
            (false, true) => self.sigma_xy[[j, i - dx]],
            (false, false) => self.sigma_yy[[i - dx, j - dx]],
        })
    }

    /// `Σ_YY − Σ_YX Σ_XX⁻¹ Σ_XY`, the inverse of `Ω_YY`.
    pub fn schur_complement(&self) -> Array2<f64> {
        let inv = numerics::inverse(&self.sigma_xx).unwrap_or_else(|| Array2::from_elem(self.sigma_xx.dim(), f64::NAN));
        let s = &self.sigma_yy - &self.sigma_xy.t().dot(&inv).dot(&self.sigma_xy);
        // symmetrize away rounding
        (&s + &s.t()) * 0.5
    }

    /// `Λ_ε = (Ω_YY⁻¹ + ε²/4 I)^{1/2} − ε/2 I`
    pub fn lambda_eps(&self) -> Array2<f64> {
        let e = self.epsilon;
        numerics::sym_apply(&self.schur_complement(), |s| shrink(s.max(0.0), e))
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }
}

/// `√(s + ε²/4) − ε/2`, written to avoid cancellation.
fn shrink(s: f64, eps: f64) -> f64 {
    s / ((s + 0.25 * eps * eps).sqrt() + 0.5 * eps)
}

/// Optimal dual value of the population problem:
/// `d_y/2 − tr Λ_ε + ½ tr Σ_YY + ½‖m_Y‖² − (ε/2) log det(ε Λ_ε Ω_YY)`.
pub fn gaussian_dual_value(model: &GaussianModel) -> Result<f64> {
    model.validate()?;
    let eps = model.epsilon;
    let (svals, _) = numerics::sym_eigen(&model.schur_complement());
    let mut tr_lambda = 0.0;
    let mut log_det = 0.0;
    for &s in svals.iter() {
        let l = shrink(s, eps);
        tr_lambda += l;
        log_det += eps.ln() + l.ln() - s.ln();
    }
    let dy = model.d_y() as f64;
    let m2 = numerics::dot(model.m_y.view(), model.m_y.view());
    Ok(0.5 * dy - tr_lambda + 0.5 * numerics::trace(&model.sigma_yy) + 0.5 * m2 - 0.5 * eps * log_det)
}

/// Draws `m` standard Gaussian reference atoms and `n` joint atoms from
/// `model`, with uniform weights, centered covariates and the model's `ε`.
///
/// Deterministic given `seed`; see [`GENERATOR`] for the draw order.
pub fn sample_gaussian_problem(model: &GaussianModel, m: usize, n: usize, seed: u64) -> Result<DiscreteProblem> {
    model.validate()?;
    if m == 0 || n == 0 {
        return Err(Error::Parameter {
            name: "m, n",
            reason: "sample sizes must be at least 1".into(),
        });
    }
    let (dx, dy) = (model.d_x(), model.d_y());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Array2::from_shape_simple_fn((m, dy), || rng.sample::<f64, _>(StandardNormal));
    let chol = numerics::cholesky(&model.joint_covariance()).ok_or(Error::NotPositiveDefinite("joint covariance"))?;
    let mut x = Array2::zeros((n, dx));
    let mut y = Array2::zeros((n, dy));
    for j in 0..n {
        let z = Array1::from_shape_simple_fn(dx + dy, || rng.sample::<f64, _>(StandardNormal));
        let w = chol.dot(&z);
        for k in 0..dx {
            x[[j, k]] = w[k];
        }
        for k in 0..dy {
            y[[j, k]] = w[dx + k] + model.m_y[k];
        }
    }
    let a = Array1::from_elem(m, 1.0 / m as f64);
    let b = Array1::from_elem(n, 1.0 / n as f64);
    DiscreteProblem::centered(u, a, x, y, b, model.epsilon)
}
