//! Configuration and the outer iteration shared by both solvers.

use serde::{Deserialize, Serialize};

use crate::bounds::{eta_guard, optimal_potential_bounds, ProblemBounds};
use crate::dual::{ExpMode, Kernel};
use crate::error::{Error, Result};
use crate::potentials::Potentials;
use crate::problem::DiscreteProblem;
use crate::projection::{ProjectionConfig, ProjectionVariant};
use crate::trace::{IterateTrace, Mode, ReferenceInfo, TraceHeader, TraceRow};
use crate::{modified, vanilla};

/// Step size of the projected gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSize {
    /// `η = ε`; logs a warning when this violates the monotonicity guard.
    Auto,
    /// `min(ε, 0.9 · guard)`, see [`default_eta`].
    Guarded,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Radius {
    /// The sup-norm bound on the optimal vector potential.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: Mode,
    pub eta: StepSize,
    pub radius: Radius,
    pub projection: ProjectionVariant,
    pub max_iters: usize,
    pub tol: f64,
    pub naive_exp: bool,
    /// Known optimal (or proxy) dual value; fills the trace's gap column.
    pub reference_dual: Option<f64>,
    pub reference: Option<ReferenceInfo>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Modified,
            eta: StepSize::Auto,
            radius: Radius::Auto,
            projection: ProjectionVariant::JointBall,
            max_iters: 1000,
            tol: 1e-9,
            naive_exp: false,
            reference_dual: None,
            reference: None,
        }
    }
}

/// Step size and radius after resolving `auto` settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub eta: f64,
    pub radius: f64,
    pub eta_guard: f64,
    pub guard_holds: bool,
}

/// Step size capped by the monotonicity guard, and whether the practical
/// choice `η = ε` violates that guard.
pub fn default_eta(prob: &DiscreteProblem, radius: f64) -> (f64, bool) {
    let eps = prob.epsilon();
    let guard = eta_guard(prob, radius);
    (eps.min(0.9 * guard), eps >= guard)
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if let StepSize::Fixed(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Parameter {
                    name: "eta",
                    reason: format!("must be positive and finite, got {eta}"),
                });
            }
        }
        if let Radius::Fixed(r) = self.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Parameter {
                    name: "radius",
                    reason: format!("must be positive and finite, got {r}"),
                });
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter {
                name: "max_iters",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter {
                name: "tol",
                reason: format!("must be positive, got {}", self.tol),
            });
        }
        Ok(())
    }

    pub fn exp_mode(&self) -> ExpMode {
        if self.naive_exp {
            ExpMode::Naive
        } else {
            ExpMode::LogDomain
        }
    }

    pub fn resolve(&self, prob: &DiscreteProblem) -> Result<Resolved> {
        self.validate()?;
        let radius = match self.radius {
            Radius::Auto => optimal_potential_bounds(prob)?.1,
            Radius::Fixed(r) => r,
        };
        let guard = eta_guard(prob, radius);
        let eta = match self.eta {
            StepSize::Auto => prob.epsilon(),
            StepSize::Guarded => default_eta(prob, radius).0,
            StepSize::Fixed(v) => v,
        };
        let guard_holds = eta < guard;
        if !guard_holds && self.mode == Mode::Modified {
            log::warn!("step size {eta:e} violates the monotonicity guard {guard:e}");
        }
        Ok(Resolved {
            eta,
            radius,
            eta_guard: guard,
            guard_holds,
        })
    }

    pub fn projection_config(&self, radius: f64) -> ProjectionConfig {
        ProjectionConfig::new(radius).with_variant(self.projection)
    }
}

/// Output of a solver run.
#[derive(Debug, Clone)]
pub struct Solution {
    pub potentials: Potentials,
    /// For modified runs, the triple `(f^{t+1}, G^t, h^{t+1})` of the last
    /// step, whose coupling has exact row marginals.
    pub half_step: Option<Potentials>,
    pub trace: IterateTrace,
    pub converged: bool,
}

/// Runs the solver selected by `cfg.mode` from `init` (zeros when `None`).
pub fn solve(prob: &DiscreteProblem, cfg: &SolverConfig, init: Option<Potentials>) -> Result<Solution> {
    let init = init.unwrap_or_else(|| Potentials::zeros(prob));
    match cfg.mode {
        Mode::Vanilla => vanilla::run_vanilla(prob, cfg, &vanilla::NewtonConfig::default(), init),
        Mode::Modified => {
            let radius = cfg.resolve(prob)?.radius;
            modified::run_modified(prob, cfg, &cfg.projection_config(radius), init)
        }
    }
}

/// Bookkeeping for the outer loop: trace rows and the stopping rule.
pub(crate) struct Driver<'a> {
    prob: &'a DiscreteProblem,
    kernel: Kernel<'a>,
    tol: f64,
    rows: Vec<TraceRow>,
}

impl<'a> Driver<'a> {
    pub(crate) fn new(prob: &'a DiscreteProblem, cfg: &SolverConfig, init: &Potentials) -> Result<Self> {
        init.check(prob)?;
        let kernel = Kernel::new(prob, cfg.exp_mode());
        let mut d = Self {
            prob,
            kernel,
            tol: cfg.tol,
            rows: Vec::with_capacity(cfg.max_iters.min(100_000) + 1),
        };
        d.record(init, None)?;
        Ok(d)
    }

    pub(crate) fn kernel(&self) -> Kernel<'a> {
        self.kernel
    }

    /// Appends a trace row for `p` and reports whether the stopping rule
    /// is met.
    pub(crate) fn record(&mut self, p: &Potentials, g_displacement: Option<f64>) -> Result<bool> {
        let (dual, res) = self.kernel.diagnostics(p);
        if !dual.is_finite() {
            return Err(Error::NonFinite("dual objective"));
        }
        let t = self.rows.len();
        let increase = self.rows.last().map(|r| dual - r.dual);
        self.rows.push(TraceRow::new(t, dual, &res, p, g_displacement));
        Ok(match increase {
            Some(inc) => res.max() <= self.tol && inc.abs() <= self.tol * self.prob.epsilon(),
            None => false,
        })
    }

    pub(crate) fn finish(
        self,
        cfg: &SolverConfig,
        init: &Potentials,
        resolved: &Resolved,
        mode: Mode,
        converged: bool,
    ) -> Result<IterateTrace> {
        let bounds = ProblemBounds::compute(self.prob, init, resolved.radius, resolved.eta)?;
        let modified = mode == Mode::Modified;
        let header = TraceHeader {
            mode,
            m: self.prob.m(),
            n: self.prob.n(),
            d_x: self.prob.d_x(),
            d_y: self.prob.d_y(),
            epsilon: self.prob.epsilon(),
            eta: modified.then_some(resolved.eta),
            radius: modified.then_some(resolved.radius),
            projection: modified.then_some(cfg.projection),
            exp_mode: cfg.exp_mode(),
            tol: cfg.tol,
            max_iters: cfg.max_iters,
            bounds,
            guard_holds: resolved.guard_holds,
            reference: cfg.reference.clone(),
            reference_dual: None,
            converged,
            iterations: self.rows.len() - 1,
        };
        let mut trace = IterateTrace {
            header,
            rows: self.rows,
        };
        if let Some(r) = cfg.reference_dual {
            trace.set_reference_dual(r);
        }
        Ok(trace)
    }
}
