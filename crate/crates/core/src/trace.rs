use serde::{Deserialize, Serialize};

use crate::bounds::ProblemBounds;
use crate::dual::{ExpMode, Residuals};
use crate::error::Result;
use crate::potentials::Potentials;
use crate::projection::ProjectionVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Vanilla,
    Modified,
}

/// How the reference atoms were produced, so a run can be regenerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub kind: String,
    pub seed: Option<u64>,
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub mode: Mode,
    pub m: usize,
    pub n: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub epsilon: f64,
    /// `None` for vanilla runs.
    pub eta: Option<f64>,
    pub radius: Option<f64>,
    pub projection: Option<ProjectionVariant>,
    pub exp_mode: ExpMode,
    pub tol: f64,
    pub max_iters: usize,
    pub bounds: ProblemBounds,
    pub guard_holds: bool,
    pub reference: Option<ReferenceInfo>,
    /// Value the `gap` column is measured against.
    pub reference_dual: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub dual: f64,
    pub gap: Option<f64>,
    pub row_res: f64,
    pub col_res: f64,
    pub mi_res: f64,
    pub f_sup: f64,
    pub g_sup: f64,
    pub h_sup: f64,
    /// `‖G^{t} − G^{t−1}‖_{L²(a)}` for modified runs.
    pub g_displacement: Option<f64>,
}

impl TraceRow {
    pub fn new(t: usize, dual: f64, res: &Residuals, p: &Potentials, g_displacement: Option<f64>) -> Self {
        Self {
            t,
            dual,
            gap: None,
            row_res: res.row,
            col_res: res.col,
            mi_res: res.mean_independence,
            f_sup: p.f_sup(),
            g_sup: p.g_sup(),
            h_sup: p.h_sup(),
            g_displacement,
        }
    }

    pub fn residual_max(&self) -> f64 {
        self.row_res.max(self.col_res).max(self.mi_res)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub header: TraceHeader,
    pub rows: Vec<TraceRow>,
}

impl IterateTrace {
    pub fn duals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.dual).collect()
    }

    pub fn final_dual(&self) -> Option<f64> {
        self.rows.last().map(|r| r.dual)
    }

    /// Largest per-step decrease of the dual column, relative to
    /// `1 + |D|`. Zero for a non-decreasing sequence.
    pub fn worst_relative_decrease(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| (w[0].dual - w[1].dual) / (1.0 + w[0].dual.abs()))
            .fold(0.0, f64::max)
    }

    /// Fills the `gap` column as `reference − dual`.
    pub fn set_reference_dual(&mut self, reference: f64) {
        self.header.reference_dual = Some(reference);
        for r in &mut self.rows {
            r.gap = Some(reference - r.dual);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
