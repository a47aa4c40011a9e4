//! Closed-form constants: sup-norm bounds on optimal potentials and on
//! both solvers' iterates, the linear-convergence rates, the PL constant
//! and the step-size guard of the projected gradient step.
//!
//! `M_x` is floored at one only inside the rate formulas (`τ`, `τ̂`, PL);
//! every bound on potentials uses the raw value.

use serde::{Deserialize, Serialize};

use crate::dual::dual_objective;
use crate::error::{Error, Result};
use crate::potentials::Potentials;
use crate::problem::DiscreteProblem;

const LOG_3_2: f64 = 0.405_465_108_108_164_4;

/// `a⁻ = max(−a, 0)`
fn neg_part(a: f64) -> f64 {
    (-a).max(0.0)
}

fn sigma_inv_op(prob: &DiscreteProblem) -> Result<f64> {
    let lambda = prob.lambda_min();
    if !(lambda > 0.0) {
        return Err(Error::DegenerateCovariates { lambda, tol: 0.0 });
    }
    Ok(1.0 / lambda)
}

/// Bounds on `(‖f̄‖∞, ‖ḡ‖∞, ‖h̄‖∞)` for the normalized optimal potentials.
pub fn optimal_potential_bounds(prob: &DiscreteProblem) -> Result<(f64, f64, f64)> {
    let inv = sigma_inv_op(prob)?;
    let c_inf = prob.cost_summary().c_inf;
    let m_x = prob.m_x();
    let bound_g = 2.0 * inv * m_x * (2.5 * c_inf + prob.epsilon() * LOG_3_2);
    Ok((c_inf, bound_g, c_inf + bound_g * m_x))
}

/// Sup-norm bounds `(K_f, K_g, K_h, K̄)` on the vanilla iterates given the
/// initial dual value `d0` and `‖h⁰‖∞`.
pub fn vanilla_iterate_bounds(prob: &DiscreteProblem, d0: f64, h0_inf: f64) -> Result<(f64, f64, f64, f64)> {
    let inv = sigma_inv_op(prob)?;
    let s = prob.cost_summary();
    let m_x = prob.m_x();
    let k_f = s.l_c * s.diam_u + s.c_inf + neg_part(d0) + h0_inf;
    let k_g = 4.0
        * inv
        * m_x
        * (4.0 * s.c_inf - 1.5 * d0 + k_f + h0_inf + prob.epsilon() * LOG_3_2);
    let k_h = s.c_inf + k_f + k_g * m_x;
    let k_bar = k_f + k_g * m_x + k_h + s.c_inf;
    Ok((k_f, k_g, k_h, k_bar))
}

/// Sup-norm bounds `(K̂_f, K̂_h)` on the modified iterates for projection
/// radius `radius`, initial dual value `d0_hat` and `‖f̂⁰‖∞`.
pub fn modified_iterate_bounds(prob: &DiscreteProblem, radius: f64, d0_hat: f64, f0_inf: f64) -> (f64, f64) {
    let s = prob.cost_summary();
    let m_x = prob.m_x();
    let k_f = s.l_c * s.diam_u + 2.0 * radius * m_x + s.c_inf - d0_hat;
    let k_h = 2.0 * s.c_inf + k_f.max(f0_inf) + radius * m_x - d0_hat;
    (k_f, k_h)
}

/// Largest step `ε / (M_x² e^{2 K M_x / ε})` for which the projected
/// gradient step provably does not decrease the dual objective.
pub fn eta_guard(prob: &DiscreteProblem, radius: f64) -> f64 {
    let m_x = prob.m_x();
    let eps = prob.epsilon();
    let log_denom = 2.0 * m_x.ln() + 2.0 * radius * m_x / eps;
    eps * (-log_denom).exp()
}

/// `ln(e^p + e^q)`
fn log_add_exp(p: f64, q: f64) -> f64 {
    let hi = p.max(q);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((p - hi).exp() + (q - hi).exp()).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub tau: f64,
    pub tau_hat: f64,
    /// False when the step size violates the guard; `tau_hat` is then zero.
    pub tau_hat_valid: bool,
}

/// Every constant the convergence theory provides for one problem, solver
/// initialization, projection radius and step size.
///
/// The iterate bounds stored here are raised, where necessary, to also cover
/// the initialization and the optimal potentials, as the rate formulas
/// assume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemBounds {
    #[serde(rename = "M_x")]
    pub m_x: f64,
    pub c_inf: f64,
    #[serde(rename = "L_c")]
    pub l_c: f64,
    #[serde(rename = "diam_U")]
    pub diam_u: f64,
    pub lambda_min: f64,
    pub sigma_inv_op: f64,
    pub epsilon: f64,
    #[serde(rename = "D0")]
    pub d0: f64,
    #[serde(rename = "K_bar_f")]
    pub k_bar_f: f64,
    #[serde(rename = "K_bar_g")]
    pub k_bar_g: f64,
    #[serde(rename = "K_bar_h")]
    pub k_bar_h: f64,
    #[serde(rename = "K_f")]
    pub k_f: f64,
    #[serde(rename = "K_g")]
    pub k_g: f64,
    #[serde(rename = "K_h")]
    pub k_h: f64,
    #[serde(rename = "K_bar")]
    pub k_bar: f64,
    pub tau: f64,
    pub radius: f64,
    pub eta: f64,
    #[serde(rename = "K_hat_f")]
    pub k_hat_f: f64,
    #[serde(rename = "K_hat_h")]
    pub k_hat_h: f64,
    #[serde(rename = "K_bar_star")]
    pub k_bar_star: f64,
    pub tau_hat: f64,
    pub eta_guard: f64,
    pub guard_holds: bool,
}

impl ProblemBounds {
    /// Computes all constants for a run started at `init` with projection
    /// radius `radius` and step size `eta`.
    pub fn compute(prob: &DiscreteProblem, init: &Potentials, radius: f64, eta: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Parameter {
                name: "radius",
                reason: format!("must be positive, got {radius}"),
            });
        }
        if !(eta > 0.0) {
            return Err(Error::Parameter {
                name: "eta",
                reason: format!("must be positive, got {eta}"),
            });
        }
        let d0 = dual_objective(init, prob)?;
        let s = prob.cost_summary();
        let m_x = prob.m_x();
        let (k_bar_f, k_bar_g, k_bar_h) = optimal_potential_bounds(prob)?;
        let (k_f, k_g, k_h, _) = vanilla_iterate_bounds(prob, d0, init.h_sup())?;
        let k_f = k_f.max(k_bar_f).max(init.f_sup());
        let k_g = k_g.max(k_bar_g).max(init.g_sup());
        let k_h = k_h.max(k_bar_h).max(init.h_sup());
        let k_bar = k_f + k_g * m_x + k_h + s.c_inf;

        let (k_hat_f, k_hat_h) = modified_iterate_bounds(prob, radius, d0, init.f_sup());
        let k_hat_f = k_hat_f.max(k_bar_f).max(init.f_sup());
        let k_hat_h = k_hat_h.max(k_bar_h).max(init.h_sup());
        let k_bar_star = k_hat_f + radius * m_x + k_hat_h + s.c_inf;

        let guard = eta_guard(prob, radius);
        let mut out = Self {
            m_x,
            c_inf: s.c_inf,
            l_c: s.l_c,
            diam_u: s.diam_u,
            lambda_min: prob.lambda_min(),
            sigma_inv_op: 1.0 / prob.lambda_min(),
            epsilon: prob.epsilon(),
            d0,
            k_bar_f,
            k_bar_g,
            k_bar_h,
            k_f,
            k_g,
            k_h,
            k_bar,
            tau: 0.0,
            radius,
            eta,
            k_hat_f,
            k_hat_h,
            k_bar_star,
            tau_hat: 0.0,
            eta_guard: guard,
            guard_holds: eta < guard,
        };
        let rates = contraction_rates(&out, eta);
        out.tau = rates.tau;
        out.tau_hat = rates.tau_hat;
        Ok(out)
    }

    /// `2 (1 ∧ λ) e^{−K̄/ε} / ε`, the PL constant along vanilla iterates.
    pub fn pl_constant(&self) -> f64 {
        2.0 * self.lambda_min.min(1.0) * (-self.k_bar / self.epsilon).exp() / self.epsilon
    }
}

/// `τ` for the vanilla algorithm and `τ̂` for the modified algorithm at step
/// size `eta`.
pub fn contraction_rates(bounds: &ProblemBounds, eta: f64) -> Rates {
    let eps = bounds.epsilon;
    let m_x = bounds.m_x.max(1.0);
    let lam = bounds.lambda_min.min(1.0);
    let tau = lam * lam * (-5.0 * bounds.k_bar / eps).exp() / (3.0 * m_x * m_x);

    let theta = eps / eta;
    let guard_term = theta - (2.0 * m_x.ln() + 2.0 * bounds.radius * m_x / eps).exp();
    let bracket = (-2.0 * bounds.k_hat_h / eps).exp().min(guard_term);
    if !(bracket > 0.0) || !(eta > 0.0) {
        return Rates {
            tau,
            tau_hat: 0.0,
            tau_hat_valid: false,
        };
    }
    let log_denom = log_add_exp(
        (2.0 * theta * theta).ln(),
        5f64.ln() + 4.0 * m_x.ln() + 2.0 * bounds.k_bar_star / eps,
    );
    let log_tau_hat = lam.ln() - bounds.k_bar_star / eps + bracket.ln() - log_denom;
    Rates {
        tau,
        tau_hat: log_tau_hat.exp(),
        tau_hat_valid: true,
    }
}
