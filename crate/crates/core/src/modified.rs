//! Sinkhorn updates for `h` then `f`, followed by one projected gradient
//! ascent step on the vector potential.

use ndarray::{Array1, Array2};

use crate::dual::{ExpMode, Kernel};
use crate::error::Result;
use crate::numerics::pairwise_sum;
use crate::potentials::{l2_rows, Potentials};
use crate::problem::DiscreteProblem;
use crate::projection::{project_with, Projection, ProjectionConfig};
use crate::solver::{Driver, Resolved, Solution, SolverConfig};
use crate::trace::Mode;

pub use crate::solver::default_eta;

/// One modified step and the quantities it produced along the way.
#[derive(Debug, Clone)]
pub struct ModifiedStep {
    /// `(f^{t+1}, G^t, h^{t+1})`; its coupling has row sums exactly `a`.
    pub half: Potentials,
    /// Row `i` is `e^{f_i/ε} Σ_j b_j x_j exp((⟨G_i, x_j⟩ + h_j − C_ij)/ε)`
    /// at the half-step triple.
    pub grad_g: Array2<f64>,
    pub projection: Projection,
    /// `(f^{t+1}, G^{t+1}, h^{t+1})`
    pub next: Potentials,
}

pub(crate) fn step_with(
    kernel: Kernel<'_>,
    p: &Potentials,
    prob: &DiscreteProblem,
    eta: f64,
    pcfg: &ProjectionConfig,
) -> Result<ModifiedStep> {
    let eps = prob.epsilon();
    let zeros_n = Array1::zeros(prob.n());
    let h_half = kernel
        .col_log_mass(p.f.view(), p.g.view(), zeros_n.view())
        .mapv(|l| -eps * l);
    let zeros_m = Array1::zeros(prob.m());
    let rows = kernel.row_moments(zeros_m.view(), p.g.view(), h_half.view());
    let f_half = rows.log_mass.mapv(|l| -eps * l);

    let a = prob.a();
    let terms: Vec<f64> = f_half.iter().zip(a.iter()).map(|(f, w)| f * w).collect();
    let shift = pairwise_sum(&terms);
    let f = &f_half - shift;
    let h = &h_half + shift;

    // At (f^{t+1}, G^t, h^{t+1}) each row log-mass is L_i + f_half_i/ε,
    // which vanishes up to rounding; keep the factor for fidelity.
    let mut grad_g = rows.tilted_mean;
    for (i, mut row) in grad_g.rows_mut().into_iter().enumerate() {
        row *= (rows.log_mass[i] + f_half[i] / eps).exp();
    }

    let target = &p.g - &(&grad_g * eta);
    let projection = project_with(target.view(), a, pcfg)?;
    let half = Potentials {
        f: f.clone(),
        g: p.g.clone(),
        h: h.clone(),
    };
    let next = Potentials {
        f,
        g: projection.g.clone(),
        h,
    };
    Ok(ModifiedStep {
        half,
        grad_g,
        projection,
        next,
    })
}

/// One step of the modified algorithm with step size `eta`.
pub fn modified_step_detailed(
    p: &Potentials,
    prob: &DiscreteProblem,
    eta: f64,
    pcfg: &ProjectionConfig,
    mode: ExpMode,
) -> Result<ModifiedStep> {
    p.check(prob)?;
    pcfg.validate()?;
    step_with(Kernel::new(prob, mode), p, prob, eta, pcfg)
}

/// One step of the modified algorithm, with the step size taken from `cfg`.
pub fn modified_step(
    p: &Potentials,
    prob: &DiscreteProblem,
    cfg: &SolverConfig,
    pcfg: &ProjectionConfig,
) -> Result<Potentials> {
    let eta = cfg.resolve(prob)?.eta;
    Ok(modified_step_detailed(p, prob, eta, pcfg, cfg.exp_mode())?.next)
}

/// Iterates the modified step from `init` with the projection radius of
/// `pcfg` and the step size of `cfg`.
///
/// `on_step` sees every step as it is produced, which is how callers track
/// quantities such as the derivative estimators along a run.
pub fn run_modified_with(
    prob: &DiscreteProblem,
    cfg: &SolverConfig,
    pcfg: &ProjectionConfig,
    init: Potentials,
    mut on_step: impl FnMut(usize, &ModifiedStep) -> Result<()>,
) -> Result<Solution> {
    pcfg.validate()?;
    let resolved = cfg.resolve(prob)?;
    let eta_guard = crate::bounds::eta_guard(prob, pcfg.radius);
    let resolved = Resolved {
        radius: pcfg.radius,
        eta_guard,
        guard_holds: resolved.eta < eta_guard,
        ..resolved
    };
    let mut driver = Driver::new(prob, cfg, &init)?;
    let kernel = driver.kernel();
    let mut p = init.clone();
    let mut half = None;
    let mut converged = false;
    for t in 0..cfg.max_iters {
        let step = step_with(kernel, &p, prob, resolved.eta, pcfg)?;
        if !step.projection.converged {
            log::warn!(
                "projection stopped after {} iterations with mean residual {:e}",
                step.projection.iterations,
                step.projection.mean_residual
            );
        }
        on_step(t, &step)?;
        let disp = l2_rows((&step.next.g - &p.g).view(), prob.a());
        p = step.next;
        half = Some(step.half);
        if driver.record(&p, Some(disp))? {
            converged = true;
            break;
        }
    }
    let trace = driver.finish(cfg, &init, &resolved, Mode::Modified, converged)?;
    Ok(Solution {
        potentials: p,
        half_step: half,
        trace,
        converged,
    })
}

pub fn run_modified(prob: &DiscreteProblem, cfg: &SolverConfig, pcfg: &ProjectionConfig, init: Potentials) -> Result<Solution> {
    run_modified_with(prob, cfg, pcfg, init, |_, _| Ok(()))
}
