//! Block coordinate ascent with an exact solve for the vector potential.
//!
//! One step maps `(f, G, h)` to:
//! 1. `g̃_i` solving `Σ_j b_j x_j exp((⟨g̃_i, x_j⟩ + h_j − C_ij)/ε) = 0`,
//! 2. `f̃_i = −ε log Σ_j b_j exp((⟨g̃_i, x_j⟩ + h_j − C_ij)/ε)`,
//!    `h̃_j = −ε log Σ_i a_i exp((f̃_i + ⟨g̃_i, x_j⟩ − C_ij)/ε)`,
//! 3. the affine shift that normalizes `(f̃, g̃, h̃)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::{ExpMode, Kernel};
use crate::error::{Error, Result};
use crate::numerics::{self, exp_shift_in_place, ln_weight, pairwise_sum};
use crate::potentials::Potentials;
use crate::problem::DiscreteProblem;
use crate::solver::{Driver, Solution, SolverConfig};
use crate::trace::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Stop once the tilted mean of `x` has norm at most this.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Relative ridge: `ridge · tr(H)` is added to the Hessian when its
    /// smallest eigenvalue falls below that level.
    pub ridge: f64,
    /// Each rejected trial step divides this into the Levenberg damping.
    pub backtrack: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iters: 50,
            ridge: 1e-12,
            backtrack: 0.5,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::Parameter {
                name: "grad_tol",
                reason: format!("must be positive, got {}", self.grad_tol),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter {
                name: "max_iters",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Parameter {
                name: "ridge",
                reason: format!("must be nonnegative, got {}", self.ridge),
            });
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Parameter {
                name: "backtrack",
                reason: format!("must lie in (0, 1), got {}", self.backtrack),
            });
        }
        Ok(())
    }
}

/// Tilted mean and covariance of the rows of `x` under weights
/// `∝ b_j exp((⟨g, x_j⟩ + h_j − c_j)/ε)`.
struct Tilt {
    /// `ε log Σ_j b_j exp((⟨g, x_j⟩ + h_j − c_j)/ε)`
    value: f64,
    mean: Array1<f64>,
    cov: Array2<f64>,
}

fn tilt(x: ArrayView2<f64>, log_b: &[f64], offset: &[f64], g: ArrayView1<f64>, eps: f64, buf: &mut [f64]) -> Tilt {
    let (n, d) = x.dim();
    for j in 0..n {
        buf[j] = log_b[j] + (numerics::dot(g, x.row(j)) + offset[j]) / eps;
    }
    let sum = exp_shift_in_place(buf, false);
    let value = eps * sum.log();
    let inv = sum.inv_sum();
    let mut tmp = vec![0.0; n];
    let mut mean = Array1::zeros(d);
    for k in 0..d {
        for j in 0..n {
            tmp[j] = buf[j] * x[[j, k]];
        }
        mean[k] = pairwise_sum(&tmp) * inv;
    }
    let mut cov = Array2::zeros((d, d));
    for k in 0..d {
        for l in 0..=k {
            for j in 0..n {
                tmp[j] = buf[j] * (x[[j, k]] - mean[k]) * (x[[j, l]] - mean[l]);
            }
            let v = pairwise_sum(&tmp) * inv;
            cov[[k, l]] = v;
            cov[[l, k]] = v;
        }
    }
    Tilt { value, mean, cov }
}

/// Finds `g` at which the tilted mean of the rows of `x` vanishes, where
/// the tilt has weights `∝ b_j exp((⟨g, x_j⟩ + h_j − c_j)/ε)`.
///
/// This is damped Newton on the strictly convex map
/// `g ↦ ε log Σ_j b_j exp((⟨g, x_j⟩ + h_j − c_j)/ε)`, whose gradient is the
/// tilted mean and whose Hessian is the tilted covariance over `ε`. `x`
/// need not be centered, but zero must lie inside the convex hull of the
/// atoms with positive weight. `row` only labels the error.
pub fn solve_tilted_root(
    x: ArrayView2<f64>,
    b: ArrayView1<f64>,
    h: ArrayView1<f64>,
    cost_row: ArrayView1<f64>,
    eps: f64,
    init: ArrayView1<f64>,
    cfg: &NewtonConfig,
    row: usize,
) -> Result<Array1<f64>> {
    let n = x.nrows();
    let log_b: Vec<f64> = b.iter().map(|&w| ln_weight(w)).collect();
    let offset: Vec<f64> = (0..n).map(|j| h[j] - cost_row[j]).collect();
    let mut buf = vec![0.0; n];
    let mut g = init.to_owned();
    let mut cur = tilt(x, &log_b, &offset, g.view(), eps, &mut buf);
    let mut res = numerics::norm(cur.mean.view());
    // Untilted second moment of x; sets the scale of the damping.
    let scale = {
        let terms: Vec<f64> = (0..n).map(|j| b[j] * numerics::dot(x.row(j), x.row(j))).collect();
        pairwise_sum(&terms).max(f64::MIN_POSITIVE)
    };
    let mut damping = 0.0;
    for _ in 0..cfg.max_iters {
        if res <= cfg.grad_tol {
            return Ok(g);
        }
        // Damped Newton direction −ε (H + μI)⁻¹ m via the eigendecomposition
        // of the tilted covariance, with a relative ridge on tiny eigenvalues.
        let (vals, vecs) = numerics::sym_eigen(&cur.cov);
        let floor = cfg.ridge * numerics::trace(&cur.cov).max(f64::MIN_POSITIVE);
        let direction = |mu: f64| {
            let mut dir = Array1::zeros(g.len());
            for (k, &lam) in vals.iter().enumerate() {
                let v = vecs.column(k);
                let lam = if lam < floor { lam.max(0.0) + floor } else { lam };
                let coef = -eps * numerics::dot(v, cur.mean.view()) / (lam + mu);
                dir.scaled_add(coef, &v);
            }
            dir
        };
        // A trial is taken when it gives sufficient decrease of the convex
        // objective, or lowers the residual without raising the objective
        // beyond rounding (near the root the decrease drowns in rounding).
        // Residual decrease alone is not enough: in saturated regions it
        // accepts jumps to the opposite side of the root. Rejections raise
        // μ, which shortens the step and turns it towards the gradient.
        let mut accepted = false;
        for _ in 0..400 {
            let dir = direction(damping);
            let slope = numerics::dot(cur.mean.view(), dir.view());
            let trial = &g + &dir;
            let t = tilt(x, &log_b, &offset, trial.view(), eps, &mut buf);
            let r = numerics::norm(t.mean.view());
            let armijo = t.value <= cur.value + 1e-4 * slope;
            let level = t.value <= cur.value + 8.0 * f64::EPSILON * (1.0 + cur.value.abs());
            if r.is_finite() && (armijo || (r < res && level)) {
                g = trial;
                cur = t;
                res = r;
                accepted = true;
                damping *= cfg.backtrack * cfg.backtrack;
                if damping < cfg.ridge * scale {
                    damping = 0.0;
                }
                break;
            }
            damping = (damping / cfg.backtrack).max(cfg.ridge * scale);
        }
        if !accepted {
            break;
        }
    }
    if res <= cfg.grad_tol {
        Ok(g)
    } else {
        Err(Error::NewtonDiverged {
            row,
            iters: cfg.max_iters,
            residual: res,
        })
    }
}

/// Solves the mean-independence equation for row `i` of the vector
/// potential given the current `h`, warm-started at `init`.
pub fn solve_g_implicit(
    row: usize,
    h: ArrayView1<f64>,
    prob: &DiscreteProblem,
    init: ArrayView1<f64>,
    cfg: &NewtonConfig,
) -> Result<Array1<f64>> {
    solve_tilted_root(
        prob.x(),
        prob.b(),
        h,
        prob.cost().row(row),
        prob.epsilon(),
        init,
        cfg,
        row,
    )
}

/// One vanilla step together with its intermediate triple.
#[derive(Debug, Clone)]
pub struct VanillaStep {
    /// `(f̃, g̃, h^t)`, the state right after the `f`-update; its `ι` is one.
    pub after_f: Potentials,
    /// Normalized output.
    pub next: Potentials,
}

pub(crate) fn step_with(kernel: Kernel<'_>, p: &Potentials, prob: &DiscreteProblem, ncfg: &NewtonConfig) -> Result<VanillaStep> {
    let rows: Vec<Array1<f64>> = (0..prob.m())
        .into_par_iter()
        .map(|i| solve_g_implicit(i, p.h.view(), prob, p.g.row(i), ncfg))
        .collect::<Result<_>>()?;
    let mut g = Array2::zeros((prob.m(), prob.d_x()));
    for (i, r) in rows.into_iter().enumerate() {
        g.row_mut(i).assign(&r);
    }
    let eps = prob.epsilon();
    let zeros_m = Array1::zeros(prob.m());
    let f = kernel.row_log_mass(zeros_m.view(), g.view(), p.h.view()).mapv(|l| -eps * l);
    let zeros_n = Array1::zeros(prob.n());
    let h = kernel.col_log_mass(f.view(), g.view(), zeros_n.view()).mapv(|l| -eps * l);
    let after_f = Potentials {
        f: f.clone(),
        g: g.clone(),
        h: p.h.clone(),
    };
    let next = Potentials { f, g, h }.normalized(prob);
    Ok(VanillaStep { after_f, next })
}

/// One step of the vanilla algorithm with its intermediate state.
pub fn vanilla_step_detailed(p: &Potentials, prob: &DiscreteProblem, ncfg: &NewtonConfig) -> Result<VanillaStep> {
    p.check(prob)?;
    ncfg.validate()?;
    step_with(Kernel::new(prob, ExpMode::LogDomain), p, prob, ncfg)
}

pub fn vanilla_step(p: &Potentials, prob: &DiscreteProblem, ncfg: &NewtonConfig) -> Result<Potentials> {
    Ok(vanilla_step_detailed(p, prob, ncfg)?.next)
}

/// Iterates [`vanilla_step`] from `init` until the stopping rule holds or
/// `cfg.max_iters` steps have been taken.
pub fn run_vanilla(prob: &DiscreteProblem, cfg: &SolverConfig, ncfg: &NewtonConfig, init: Potentials) -> Result<Solution> {
    ncfg.validate()?;
    let resolved = cfg.resolve(prob)?;
    let mut driver = Driver::new(prob, cfg, &init)?;
    let kernel = driver.kernel();
    let mut p = init.clone();
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        p = step_with(kernel, &p, prob, ncfg)?.next;
        if driver.record(&p, None)? {
            converged = true;
            break;
        }
    }
    let trace = driver.finish(cfg, &init, &resolved, Mode::Vanilla, converged)?;
    Ok(Solution {
        potentials: p,
        half_step: None,
        trace,
        converged,
    })
}
