use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, ln_weight};

/// Relative tolerance on the smallest eigenvalue of `Σ_X`, scaled by its trace.
pub const LAMBDA_TOL_REL: f64 = 1e-10;

const CENTER_TOL: f64 = 1e-12;

/// Scalar summaries of the cost geometry used by the bound calculators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    /// `max_ij C_ij`
    pub c_inf: f64,
    /// `max_j ‖y_j‖ + max_i ‖u_i‖`
    pub l_c: f64,
    /// Largest pairwise distance between reference atoms.
    pub diam_u: f64,
}

/// Squared-distance cost `C_ij = ½‖u_i − y_j‖²` together with its summaries.
pub fn compute_cost_matrix(
    u: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> Result<(Array2<f64>, CostSummary)> {
    if u.ncols() != y.ncols() {
        return Err(Error::Dimension(format!(
            "reference atoms have dimension {} but responses have dimension {}",
            u.ncols(),
            y.ncols()
        )));
    }
    let (m, n) = (u.nrows(), y.nrows());
    let mut cost = Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..u.ncols() {
                let d = u[[i, k]] - y[[j, k]];
                s += d * d;
            }
            cost[[i, j]] = 0.5 * s;
        }
    }
    let c_inf = cost.iter().copied().fold(0.0, f64::max);
    let max_row_norm = |a: ArrayView2<f64>| {
        a.rows()
            .into_iter()
            .map(numerics::norm)
            .fold(0.0, f64::max)
    };
    let l_c = max_row_norm(y) + max_row_norm(u);
    let mut diam_u: f64 = 0.0;
    for i in 0..m {
        for k in (i + 1)..m {
            let d2: f64 = u
                .row(i)
                .iter()
                .zip(u.row(k).iter())
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            diam_u = diam_u.max(d2);
        }
    }
    Ok((
        cost,
        CostSummary {
            c_inf,
            l_c,
            diam_u: diam_u.sqrt(),
        },
    ))
}

/// Discrete reference measure `μ = Σ a_i δ_{u_i}` and joint measure
/// `ν = Σ b_j δ_{(x_j, y_j)}` with regularization `ε`.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    u: Array2<f64>,
    a: Array1<f64>,
    x: Array2<f64>,
    y: Array2<f64>,
    b: Array1<f64>,
    epsilon: f64,
    cost: Array2<f64>,
    summary: CostSummary,
    log_a: Array1<f64>,
    log_b: Array1<f64>,
    sigma_x: Array2<f64>,
    lambda_min: f64,
    m_x: f64,
}

fn normalize_weights(w: Array1<f64>, what: &str) -> Result<Array1<f64>> {
    if w.is_empty() {
        return Err(Error::Weights(format!("{what} is empty")));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Weights(format!(
            "{what} must be finite and nonnegative"
        )));
    }
    let total = numerics::pairwise_sum(w.as_slice().unwrap_or(&w.to_vec()));
    if !(total > 0.0) {
        return Err(Error::Weights(format!("{what} sums to zero")));
    }
    Ok(w / total)
}

impl DiscreteProblem {
    /// Builds a problem and checks every invariant: normalized weights,
    /// centered covariates, nondegenerate `Σ_X`.
    ///
    /// Weights are rescaled to sum to one.
    pub fn new(
        u: Array2<f64>,
        a: Array1<f64>,
        x: Array2<f64>,
        y: Array2<f64>,
        b: Array1<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let prob = Self::unchecked(u, a, x, y, b, epsilon)?;
        let mean = prob.covariate_mean();
        let mean_norm = numerics::norm(mean.view());
        if mean_norm > CENTER_TOL * prob.m_x.max(1.0) {
            return Err(Error::NotCentered(mean_norm));
        }
        let tol = LAMBDA_TOL_REL * numerics::trace(&prob.sigma_x);
        if !(prob.lambda_min > tol) {
            return Err(Error::DegenerateCovariates {
                lambda: prob.lambda_min,
                tol,
            });
        }
        Ok(prob)
    }

    /// Centers the covariate columns under `b` before building the problem.
    pub fn centered(
        u: Array2<f64>,
        a: Array1<f64>,
        x: Array2<f64>,
        y: Array2<f64>,
        b: Array1<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let b = normalize_weights(b, "b")?;
        if x.nrows() != b.len() {
            return Err(Error::Dimension(format!(
                "{} covariate rows but {} weights",
                x.nrows(),
                b.len()
            )));
        }
        let x = center_columns(x, b.view());
        Self::new(u, a, x, y, b, epsilon)
    }

    /// Checks shapes, weights and `ε` only. Un-centered or degenerate
    /// covariates are accepted; intended for diagnostics on the residual and
    /// coupling routines, not for the solvers.
    pub fn unchecked(
        u: Array2<f64>,
        a: Array1<f64>,
        x: Array2<f64>,
        y: Array2<f64>,
        b: Array1<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Parameter {
                name: "epsilon",
                reason: format!("must be positive and finite, got {epsilon}"),
            });
        }
        if u.nrows() != a.len() {
            return Err(Error::Dimension(format!(
                "{} reference atoms but {} weights",
                u.nrows(),
                a.len()
            )));
        }
        if x.nrows() != y.nrows() || x.nrows() != b.len() {
            return Err(Error::Dimension(format!(
                "covariates have {} rows, responses {}, weights {}",
                x.nrows(),
                y.nrows(),
                b.len()
            )));
        }
        if x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::Dimension("empty covariate or response dimension".into()));
        }
        for (arr, what) in [(&u, "reference atoms"), (&x, "covariates"), (&y, "responses")] {
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("{what} contain non-finite values")));
            }
        }
        let a = normalize_weights(a, "a")?;
        let b = normalize_weights(b, "b")?;
        let (cost, summary) = compute_cost_matrix(u.view(), y.view())?;
        let sigma_x = numerics::weighted_second_moment(x.view(), b.view());
        let lambda_min = numerics::min_eigenvalue(&sigma_x);
        let m_x = x.rows().into_iter().map(numerics::norm).fold(0.0, f64::max);
        Ok(Self {
            log_a: a.mapv(ln_weight),
            log_b: b.mapv(ln_weight),
            u,
            a,
            x,
            y,
            b,
            epsilon,
            cost,
            summary,
            sigma_x,
            lambda_min,
            m_x,
        })
    }

    /// Same atoms and weights with a different regularization.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Parameter {
                name: "epsilon",
                reason: format!("must be positive and finite, got {epsilon}"),
            });
        }
        let mut p = self.clone();
        p.epsilon = epsilon;
        Ok(p)
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
    pub fn d_x(&self) -> usize {
        self.x.ncols()
    }
    pub fn d_y(&self) -> usize {
        self.y.ncols()
    }
    pub fn u(&self) -> ArrayView2<'_, f64> {
        self.u.view()
    }
    pub fn a(&self) -> ArrayView1<'_, f64> {
        self.a.view()
    }
    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }
    pub fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }
    pub fn b(&self) -> ArrayView1<'_, f64> {
        self.b.view()
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn cost(&self) -> ArrayView2<'_, f64> {
        self.cost.view()
    }
    pub fn cost_summary(&self) -> CostSummary {
        self.summary
    }
    pub(crate) fn log_a(&self) -> ArrayView1<'_, f64> {
        self.log_a.view()
    }
    pub(crate) fn log_b(&self) -> ArrayView1<'_, f64> {
        self.log_b.view()
    }
    /// `Σ_X = Σ_j b_j x_j x_jᵀ`
    pub fn sigma_x(&self) -> &Array2<f64> {
        &self.sigma_x
    }
    /// Smallest eigenvalue of `Σ_X`.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }
    /// `max_j ‖x_j‖`, not floored.
    pub fn m_x(&self) -> f64 {
        self.m_x
    }
    /// `Σ_j b_j x_j`
    pub fn covariate_mean(&self) -> Array1<f64> {
        numerics::weighted_mean_rows(self.x.view(), self.b.view())
    }
}

/// Subtracts the `w`-weighted mean from each column.
pub fn center_columns(mut x: Array2<f64>, w: ArrayView1<f64>) -> Array2<f64> {
    let mean = numerics::weighted_mean_rows(x.view(), w);
    for mut row in x.axis_iter_mut(Axis(0)) {
        row -= &mean;
    }
    x
}
