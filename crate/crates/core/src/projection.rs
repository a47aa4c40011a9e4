//! Projection of a row-indexed vector field onto the mean-zero,
//! norm-bounded set `𝒦 = {g : ‖g_i‖ ≤ K, Σ a_i g_i = 0}` in `L²(a)`.
//!
//! The projection has the form `g⁺_i = min{1, K/‖g_i − v*‖}(g_i − v*)`, where
//! `v*` minimizes the `a`-weighted Huber objective `Φ(v) = Σ a_i φ(g_i − v)`.
//! `v*` is found by iterative reweighting. The coordinatewise variant
//! projects onto the box-shaped set with per-coordinate bounds instead and
//! finds each scalar shift by bisection.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, pairwise_sum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionVariant {
    /// `‖g_i‖ ≤ K` jointly.
    #[default]
    #[serde(alias = "ball")]
    JointBall,
    /// `|g_ik| ≤ K` for each coordinate.
    #[serde(alias = "box")]
    CoordinatewiseBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub radius: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub variant: ProjectionVariant,
    /// Mean-zero residual above which a converged projection still warns.
    pub post_tol: f64,
}

impl ProjectionConfig {
    pub fn new(radius: f64) -> Self {
        Self {
            radius,
            tol: 1e-12,
            max_iters: 200,
            variant: ProjectionVariant::JointBall,
            post_tol: 1e-10,
        }
    }

    pub fn with_variant(mut self, variant: ProjectionVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Parameter {
                name: "radius",
                reason: format!("must be positive and finite, got {}", self.radius),
            });
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter {
                name: "tol",
                reason: format!("must be positive, got {}", self.tol),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter {
                name: "max_iters",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub g: Array2<f64>,
    /// The shift `v*` (per coordinate for the box variant).
    pub shift: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖Σ a_i g⁺_i‖`
    pub mean_residual: f64,
    /// False if the Huber objective ever increased between reweighting steps.
    pub huber_monotone: bool,
}

/// Huber function `½‖x‖²` inside the ball of radius `delta`, linear outside.
pub fn huber(x: ArrayView1<f64>, delta: f64) -> f64 {
    let r = numerics::norm(x);
    if r <= delta {
        0.5 * r * r
    } else {
        delta * r - 0.5 * delta * delta
    }
}

/// `Φ(v) = Σ a_i φ(g_i − v)`
pub fn huber_objective(g: ArrayView2<f64>, a: ArrayView1<f64>, v: ArrayView1<f64>, delta: f64) -> f64 {
    let terms: Vec<f64> = (0..g.nrows())
        .map(|i| a[i] * huber((&g.row(i) - &v).view(), delta))
        .collect();
    pairwise_sum(&terms)
}

fn check_inputs(g: ArrayView2<f64>, a: ArrayView1<f64>, cfg: &ProjectionConfig) -> Result<()> {
    cfg.validate()?;
    if g.nrows() != a.len() {
        return Err(Error::Dimension(format!(
            "{} rows but {} weights",
            g.nrows(),
            a.len()
        )));
    }
    if a.iter().any(|w| !(*w >= 0.0)) || (a.sum() - 1.0).abs() > 1e-12 {
        return Err(Error::Weights("projection weights must be a probability vector".into()));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("projection input"));
    }
    Ok(())
}

/// Clipping factor `min{1, K/r}`, equal to one at `r = 0`.
#[inline]
fn clip_factor(r: f64, radius: f64) -> f64 {
    if r <= radius {
        1.0
    } else {
        radius / r
    }
}

fn clip_rows(g: ArrayView2<f64>, v: ArrayView1<f64>, radius: f64) -> Array2<f64> {
    let mut out = g.to_owned();
    for mut row in out.rows_mut() {
        row -= &v;
        let w = clip_factor(numerics::norm(row.view()), radius);
        row *= w;
    }
    out
}

/// Projection onto `𝒦` with whichever variant `cfg` selects.
pub fn project_with(g: ArrayView2<f64>, a: ArrayView1<f64>, cfg: &ProjectionConfig) -> Result<Projection> {
    match cfg.variant {
        ProjectionVariant::JointBall => project(g, a, cfg),
        ProjectionVariant::CoordinatewiseBox => project_coordinatewise(g, a, cfg),
    }
}

/// `L²(a)` projection onto the joint-ball set by iterative reweighting.
///
/// Starts from the weighted mean and iterates
/// `v ← Σ a_i ω_i g_i / Σ a_i ω_i` with `ω_i = min{1, K/‖g_i − v‖}` until
/// `‖Δv‖ ≤ tol (1 + ‖v‖)`. On non-convergence the shift with the smallest
/// mean residual seen so far is used and `converged` is false.
pub fn project(g: ArrayView2<f64>, a: ArrayView1<f64>, cfg: &ProjectionConfig) -> Result<Projection> {
    check_inputs(g, a, cfg)?;
    let radius = cfg.radius;
    let (m, d) = g.dim();
    let mut v = numerics::weighted_mean_rows(g, a);
    let mut phi = huber_objective(g, a, v.view(), radius);
    let mut monotone = true;
    let mut converged = false;
    let mut best = (f64::INFINITY, v.clone());
    let mut iterations = 0;
    let mut aw = vec![0.0; m];
    let mut tmp = vec![0.0; m];

    for k in 0..cfg.max_iters {
        iterations = k + 1;
        for i in 0..m {
            let r = numerics::norm((&g.row(i) - &v).view());
            aw[i] = a[i] * clip_factor(r, radius);
        }
        let total = pairwise_sum(&aw);
        let next = Array1::from_shape_fn(d, |c| {
            for i in 0..m {
                tmp[i] = aw[i] * g[[i, c]];
            }
            pairwise_sum(&tmp) / total
        });
        let step = numerics::norm((&next - &v).view());
        // mean of the clipped field at the current shift is total * (next - v)
        let resid_here = total * step;
        if resid_here < best.0 {
            best = (resid_here, v.clone());
        }
        let phi_next = huber_objective(g, a, next.view(), radius);
        if phi_next > phi + 1e-14 * (1.0 + phi.abs()) {
            monotone = false;
        }
        let scale = 1.0 + numerics::norm(v.view());
        v = next;
        phi = phi_next;
        if step <= cfg.tol * scale {
            converged = true;
            break;
        }
    }
    if !monotone {
        warn!("Huber objective increased during iterative reweighting");
    }
    let shift = if converged { v } else { best.1 };
    let out = clip_rows(g, shift.view(), radius);
    let mean_residual = numerics::norm(numerics::weighted_mean_rows(out.view(), a).view());
    if !converged {
        warn!(
            "projection did not converge after {} iterations; mean residual {:e}",
            cfg.max_iters, mean_residual
        );
    } else if mean_residual > cfg.post_tol {
        warn!("projection mean residual {mean_residual:e} exceeds {:e}", cfg.post_tol);
    }
    Ok(Projection {
        g: out,
        shift,
        iterations,
        converged,
        mean_residual,
        huber_monotone: monotone,
    })
}

fn clipped_column_mean(col: ArrayView1<f64>, a: ArrayView1<f64>, v: f64, radius: f64, tmp: &mut [f64]) -> f64 {
    for (i, t) in tmp.iter_mut().enumerate() {
        *t = a[i] * (col[i] - v).clamp(-radius, radius);
    }
    pairwise_sum(tmp)
}

/// `L²(a)` projection onto the coordinatewise box set; each column's shift
/// is found by bisection on its (nonincreasing) clipped weighted mean.
pub fn project_coordinatewise(
    g: ArrayView2<f64>,
    a: ArrayView1<f64>,
    cfg: &ProjectionConfig,
) -> Result<Projection> {
    check_inputs(g, a, cfg)?;
    let radius = cfg.radius;
    let (m, d) = g.dim();
    let mut shift = Array1::zeros(d);
    let mut out = g.to_owned();
    let mut tmp = vec![0.0; m];
    let mut iterations = 0;
    for c in 0..d {
        let col = g.column(c);
        let (lo0, hi0) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        let (mut lo, mut hi) = (lo0 - radius, hi0 + radius);
        assert!(
            clipped_column_mean(col, a, lo, radius, &mut tmp) >= 0.0
                && clipped_column_mean(col, a, hi, radius, &mut tmp) <= 0.0,
            "bisection bracket must enclose a root for finite inputs"
        );
        let mut v = 0.5 * (lo + hi);
        let mut its = 0;
        loop {
            its += 1;
            let s = clipped_column_mean(col, a, v, radius, &mut tmp);
            if s == 0.0 {
                break;
            }
            if s > 0.0 {
                lo = v;
            } else {
                hi = v;
            }
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi || its >= 2100 {
                v = mid;
                break;
            }
            v = mid;
        }
        iterations = iterations.max(its);
        shift[c] = v;
        for i in 0..m {
            out[[i, c]] = (g[[i, c]] - v).clamp(-radius, radius);
        }
    }
    let mean_residual = numerics::norm(numerics::weighted_mean_rows(out.view(), a).view());
    if mean_residual > cfg.post_tol {
        warn!("coordinatewise projection mean residual {mean_residual:e} exceeds {:e}", cfg.post_tol);
    }
    Ok(Projection {
        g: out,
        shift,
        iterations,
        converged: true,
        mean_residual,
        huber_monotone: true,
    })
}
