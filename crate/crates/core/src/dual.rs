//! Dual objective, its partial gradients, the induced coupling and the
//! feasibility residuals of the optimality system.
//!
//! Throughout, `s_ij = (f_i + ⟨g_i, x_j⟩ + h_j − C_ij) / ε` and
//! `ι = Σ_ij a_i b_j exp(s_ij)`. Sums of exponentials are evaluated in the
//! log domain with a max shift unless the kernel runs in [`ExpMode::Naive`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, exp_shift_in_place, pairwise_sum, ZERO_WEIGHT};
use crate::potentials::Potentials;
use crate::problem::DiscreteProblem;

/// How sums of exponentials are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpMode {
    /// Max-shifted log-sum-exp.
    #[default]
    LogDomain,
    /// Literal exponentials, as written in the matrix-form algorithm.
    Naive,
}

/// Row and column sweeps over the exponent matrix `s_ij`.
#[derive(Clone, Copy)]
pub struct Kernel<'a> {
    prob: &'a DiscreteProblem,
    naive: bool,
}

/// Per-row log-partition together with the tilted mean of `x`.
pub struct RowMoments {
    /// `log Σ_j b_j exp(s_ij)`
    pub log_mass: Array1<f64>,
    /// `Σ_j w_ij x_j` with `w_ij ∝ b_j exp(s_ij)` normalized per row.
    pub tilted_mean: Array2<f64>,
}

impl<'a> Kernel<'a> {
    pub fn new(prob: &'a DiscreteProblem, mode: ExpMode) -> Self {
        Self {
            prob,
            naive: mode == ExpMode::Naive,
        }
    }

    #[inline]
    fn exponent(&self, fi: f64, gi: ArrayView1<f64>, hj: f64, i: usize, j: usize) -> f64 {
        let x = self.prob.x();
        (fi + numerics::dot(gi, x.row(j)) + hj - self.prob.cost()[[i, j]]) / self.prob.epsilon()
    }

    fn fill_row(&self, buf: &mut [f64], i: usize, fi: f64, g: ArrayView2<f64>, h: ArrayView1<f64>) {
        let log_b = self.prob.log_b();
        let gi = g.row(i);
        for (j, slot) in buf.iter_mut().enumerate() {
            *slot = log_b[j] + self.exponent(fi, gi, h[j], i, j);
        }
    }

    /// `log Σ_j b_j exp(s_ij)` for every row.
    pub fn row_log_mass(
        &self,
        f: ArrayView1<f64>,
        g: ArrayView2<f64>,
        h: ArrayView1<f64>,
    ) -> Array1<f64> {
        let n = self.prob.n();
        let out: Vec<f64> = (0..self.prob.m())
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |buf, i| {
                    self.fill_row(buf, i, f[i], g, h);
                    exp_shift_in_place(buf, self.naive).log()
                },
            )
            .collect();
        Array1::from(out)
    }

    /// `log Σ_i a_i exp(s_ij)` for every column.
    pub fn col_log_mass(
        &self,
        f: ArrayView1<f64>,
        g: ArrayView2<f64>,
        h: ArrayView1<f64>,
    ) -> Array1<f64> {
        let m = self.prob.m();
        let log_a = self.prob.log_a();
        let out: Vec<f64> = (0..self.prob.n())
            .into_par_iter()
            .map_init(
                || vec![0.0; m],
                |buf, j| {
                    for (i, slot) in buf.iter_mut().enumerate() {
                        *slot = log_a[i] + self.exponent(f[i], g.row(i), h[j], i, j);
                    }
                    exp_shift_in_place(buf, self.naive).log()
                },
            )
            .collect();
        Array1::from(out)
    }

    /// Row log-masses and tilted means of `x` in one sweep.
    pub fn row_moments(
        &self,
        f: ArrayView1<f64>,
        g: ArrayView2<f64>,
        h: ArrayView1<f64>,
    ) -> RowMoments {
        let (n, d) = (self.prob.n(), self.prob.d_x());
        let x = self.prob.x();
        let rows: Vec<(f64, Vec<f64>)> = (0..self.prob.m())
            .into_par_iter()
            .map_init(
                || (vec![0.0; n], vec![0.0; n]),
                |(buf, tmp), i| {
                    self.fill_row(buf, i, f[i], g, h);
                    let s = exp_shift_in_place(buf, self.naive);
                    let inv = s.inv_sum();
                    let mean = (0..d)
                        .map(|k| {
                            for j in 0..n {
                                tmp[j] = buf[j] * x[[j, k]];
                            }
                            pairwise_sum(tmp) * inv
                        })
                        .collect();
                    (s.log(), mean)
                },
            )
            .collect();
        let mut log_mass = Array1::zeros(self.prob.m());
        let mut tilted_mean = Array2::zeros((self.prob.m(), d));
        for (i, (lm, mean)) in rows.into_iter().enumerate() {
            log_mass[i] = lm;
            for k in 0..d {
                tilted_mean[[i, k]] = mean[k];
            }
        }
        RowMoments {
            log_mass,
            tilted_mean,
        }
    }

    /// Normalized conditional weights `w_ij ∝ b_j exp(s_ij)` of one row.
    pub fn row_weights(&self, i: usize, p: &Potentials) -> Vec<f64> {
        let mut buf = vec![0.0; self.prob.n()];
        self.fill_row(&mut buf, i, p.f[i], p.g.view(), p.h.view());
        let s = exp_shift_in_place(&mut buf, self.naive);
        let inv = s.inv_sum();
        buf.iter_mut().for_each(|w| *w *= inv);
        buf
    }

    /// `log ι`
    pub fn log_iota(&self, p: &Potentials) -> f64 {
        let rows = self.row_log_mass(p.f.view(), p.g.view(), p.h.view());
        let mut buf: Vec<f64> = rows
            .iter()
            .zip(self.prob.log_a().iter())
            .map(|(r, la)| r + la)
            .collect();
        exp_shift_in_place(&mut buf, self.naive).log()
    }

    /// Dual value and coupling residuals at `p` from one row sweep and one
    /// column sweep, without materializing `π`.
    pub fn diagnostics(&self, p: &Potentials) -> (f64, Residuals) {
        let (a, b) = (self.prob.a(), self.prob.b());
        let rows = self.row_moments(p.f.view(), p.g.view(), p.h.view());
        let cols = self.col_log_mass(p.f.view(), p.g.view(), p.h.view());
        let row_terms: Vec<f64> = (0..self.prob.m())
            .map(|i| a[i] * rows.log_mass[i].exp_m1().abs())
            .collect();
        let col_terms: Vec<f64> = (0..self.prob.n())
            .map(|j| b[j] * cols[j].exp_m1().abs())
            .collect();
        let mut mi: f64 = 0.0;
        for i in 0..self.prob.m() {
            if a[i] > ZERO_WEIGHT {
                mi = mi.max(rows.log_mass[i].exp() * numerics::norm(rows.tilted_mean.row(i)));
            }
        }
        let mut buf: Vec<f64> = rows
            .log_mass
            .iter()
            .zip(self.prob.log_a().iter())
            .map(|(r, la)| r + la)
            .collect();
        let log_iota = exp_shift_in_place(&mut buf, self.naive).log();
        let dual = weighted_sum(p.f.view(), a) + weighted_sum(p.h.view(), b)
            - self.prob.epsilon() * log_iota.exp_m1();
        let res = Residuals {
            row: pairwise_sum(&row_terms),
            col: pairwise_sum(&col_terms),
            mean_independence: mi,
        };
        (dual, res)
    }

    /// `D(f, g, h) = Σ a_i f_i + Σ b_j h_j − ε (ι − 1)`
    pub fn dual_objective(&self, p: &Potentials) -> f64 {
        let eps = self.prob.epsilon();
        let fa = weighted_sum(p.f.view(), self.prob.a());
        let hb = weighted_sum(p.h.view(), self.prob.b());
        fa + hb - eps * self.log_iota(p).exp_m1()
    }
}

fn weighted_sum(v: ArrayView1<f64>, w: ArrayView1<f64>) -> f64 {
    let terms: Vec<f64> = v.iter().zip(w.iter()).map(|(a, b)| a * b).collect();
    pairwise_sum(&terms)
}

/// `ι(f, g, h)` as an exact value (not its log).
pub fn iota(p: &Potentials, prob: &DiscreteProblem) -> Result<f64> {
    p.check(prob)?;
    Ok(Kernel::new(prob, ExpMode::LogDomain).log_iota(p).exp())
}

pub fn dual_objective(p: &Potentials, prob: &DiscreteProblem) -> Result<f64> {
    p.check(prob)?;
    Ok(Kernel::new(prob, ExpMode::LogDomain).dual_objective(p))
}

/// Negative partial gradients of the dual objective in the weighted `L²`
/// geometry: `∂D/∂f_i = −a_i ℓ_f,i`, `∂D/∂g_i = −a_i ℓ_g,i`,
/// `∂D/∂h_j = −b_j ℓ_h,j`.
#[derive(Debug, Clone)]
pub struct NegGradients {
    pub f: Array1<f64>,
    pub g: Array2<f64>,
    pub h: Array1<f64>,
}

impl NegGradients {
    /// `‖(ℓ_f, ℓ_g, ℓ_h)‖²_ℋ`
    pub fn norm_sq(&self, prob: &DiscreteProblem) -> f64 {
        crate::potentials::hilbert_norm_sq(self.f.view(), self.g.view(), self.h.view(), prob)
    }
}

pub fn neg_gradients(p: &Potentials, prob: &DiscreteProblem) -> Result<NegGradients> {
    p.check(prob)?;
    let k = Kernel::new(prob, ExpMode::LogDomain);
    let rows = k.row_moments(p.f.view(), p.g.view(), p.h.view());
    let mass = rows.log_mass.mapv(f64::exp);
    let mut g = rows.tilted_mean;
    for (i, mut row) in g.rows_mut().into_iter().enumerate() {
        row *= mass[i];
    }
    let cols = k.col_log_mass(p.f.view(), p.g.view(), p.h.view());
    Ok(NegGradients {
        f: rows.log_mass.mapv(f64::exp_m1),
        g,
        h: cols.mapv(f64::exp_m1),
    })
}

/// `π_ij = a_i b_j exp(s_ij)`
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub pi: Array2<f64>,
}

impl Coupling {
    pub fn row_sums(&self) -> Array1<f64> {
        Array1::from_iter(self.pi.rows().into_iter().map(|r| pairwise_sum(&r.to_vec())))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        Array1::from_iter(
            self.pi
                .columns()
                .into_iter()
                .map(|c| pairwise_sum(&c.to_vec())),
        )
    }
}

pub fn coupling(p: &Potentials, prob: &DiscreteProblem) -> Result<Coupling> {
    p.check(prob)?;
    let k = Kernel::new(prob, ExpMode::LogDomain);
    let (m, n) = (prob.m(), prob.n());
    let (log_a, log_b) = (prob.log_a(), prob.log_b());
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| (log_a[i] + log_b[j] + k.exponent(p.f[i], p.g.row(i), p.h[j], i, j)).exp())
                .collect()
        })
        .collect();
    let pi = Array2::from_shape_vec((m, n), rows.into_iter().flatten().collect())
        .expect("row-major coupling shape");
    Ok(Coupling { pi })
}

/// Violation of the three optimality conditions by a coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `Σ_i |Σ_j π_ij − a_i|`
    pub row: f64,
    /// `Σ_j |Σ_i π_ij − b_j|`
    pub col: f64,
    /// `max_i ‖Σ_j π_ij x_j‖ / a_i` over rows with `a_i > 0`.
    pub mean_independence: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.row.max(self.col).max(self.mean_independence)
    }
}

pub fn residuals(cpl: &Coupling, prob: &DiscreteProblem) -> Result<Residuals> {
    if cpl.pi.dim() != (prob.m(), prob.n()) {
        return Err(Error::Dimension(format!(
            "coupling has shape {:?}, problem expects ({}, {})",
            cpl.pi.dim(),
            prob.m(),
            prob.n()
        )));
    }
    let a = prob.a();
    let b = prob.b();
    let rs = cpl.row_sums();
    let cs = cpl.col_sums();
    let row_terms: Vec<f64> = rs.iter().zip(a.iter()).map(|(s, w)| (s - w).abs()).collect();
    let col_terms: Vec<f64> = cs.iter().zip(b.iter()).map(|(s, w)| (s - w).abs()).collect();
    let x = prob.x();
    let mut mi: f64 = 0.0;
    let mut tmp = vec![0.0; prob.n()];
    for i in 0..prob.m() {
        if a[i] <= ZERO_WEIGHT {
            continue;
        }
        let mut sq = 0.0;
        for k in 0..prob.d_x() {
            for j in 0..prob.n() {
                tmp[j] = cpl.pi[[i, j]] * x[[j, k]];
            }
            let s = pairwise_sum(&tmp);
            sq += s * s;
        }
        mi = mi.max(sq.sqrt() / a[i]);
    }
    Ok(Residuals {
        row: pairwise_sum(&row_terms),
        col: pairwise_sum(&col_terms),
        mean_independence: mi,
    })
}

/// `Σ π_ij C_ij + ε Σ π_ij log(π_ij / (a_i b_j))` with `0 log 0 = 0`.
pub fn primal_objective(cpl: &Coupling, prob: &DiscreteProblem) -> Result<f64> {
    if cpl.pi.dim() != (prob.m(), prob.n()) {
        return Err(Error::Dimension("coupling shape does not match problem".into()));
    }
    let (a, b, c) = (prob.a(), prob.b(), prob.cost());
    let eps = prob.epsilon();
    let mut terms = Vec::with_capacity(prob.m() * prob.n());
    for i in 0..prob.m() {
        for j in 0..prob.n() {
            let pij = cpl.pi[[i, j]];
            if pij < 0.0 || !pij.is_finite() {
                return Err(Error::NonFinite("coupling"));
            }
            if pij == 0.0 {
                continue;
            }
            let base = a[i] * b[j];
            if base == 0.0 {
                return Err(Error::Infeasible { i, j, mass: pij });
            }
            terms.push(pij * c[[i, j]] + eps * pij * (pij / base).ln());
        }
    }
    Ok(pairwise_sum(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn two_atom() -> DiscreteProblem {
        DiscreteProblem::new(
            array![[0.0]],
            array![1.0],
            array![[-1.0], [1.0]],
            array![[0.0], [1.0]],
            array![0.5, 0.5],
            1.0,
        )
        .unwrap()
    }

    fn single_atom_unchecked() -> DiscreteProblem {
        DiscreteProblem::unchecked(array![[0.0]], array![1.0], array![[0.0]], array![[0.0]], array![1.0], 1.0)
            .unwrap()
    }

    #[test]
    fn trivial_instance_values() {
        let prob = single_atom_unchecked();
        let p = Potentials::zeros(&prob);
        assert_eq!(iota(&p, &prob).unwrap(), 1.0);
        assert_eq!(dual_objective(&p, &prob).unwrap(), 0.0);
        assert_eq!(coupling(&p, &prob).unwrap().pi, array![[1.0]]);
    }

    #[test]
    fn two_atom_hand_values() {
        let prob = two_atom();
        let p = Potentials::zeros(&prob);
        assert_abs_diff_eq!(iota(&p, &prob).unwrap(), 0.8032653298563167, epsilon = 1e-15);
        assert_abs_diff_eq!(dual_objective(&p, &prob).unwrap(), 0.1967346701436833, epsilon = 1e-15);
        let pi = coupling(&p, &prob).unwrap().pi;
        assert_abs_diff_eq!(pi[[0, 0]], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pi[[0, 1]], 0.5 * (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn constant_shift_leaves_iota() {
        let prob = two_atom();
        let p = Potentials {
            f: array![0.3],
            g: array![[0.2]],
            h: array![-0.1, 0.4],
        };
        let q = Potentials {
            f: &p.f + 1.7,
            g: p.g.clone(),
            h: &p.h - 1.7,
        };
        assert_abs_diff_eq!(iota(&p, &prob).unwrap(), iota(&q, &prob).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn product_coupling_residuals() {
        let prob = two_atom();
        let cpl = Coupling {
            pi: array![[0.5, 0.5]],
        };
        let r = residuals(&cpl, &prob).unwrap();
        assert_eq!((r.row, r.col, r.mean_independence), (0.0, 0.0, 0.0));

        let shifted = DiscreteProblem::unchecked(
            array![[0.0], [1.0]],
            array![0.5, 0.5],
            array![[0.0], [2.0]],
            array![[0.0], [1.0]],
            array![0.5, 0.5],
            1.0,
        )
        .unwrap();
        let cpl = Coupling {
            pi: array![[0.25, 0.25], [0.25, 0.25]],
        };
        let r = residuals(&cpl, &shifted).unwrap();
        assert_abs_diff_eq!(r.mean_independence, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn primal_of_product_coupling() {
        let prob = two_atom();
        let cpl = Coupling {
            pi: array![[0.5, 0.5]],
        };
        // zero KL, so only the transport term remains: 0.5 * 0 + 0.5 * 0.5
        assert_abs_diff_eq!(primal_objective(&cpl, &prob).unwrap(), 0.25, epsilon = 1e-15);

        let zero_cost = single_atom_unchecked();
        let cpl = Coupling { pi: array![[1.0]] };
        assert_eq!(primal_objective(&cpl, &zero_cost).unwrap(), 0.0);
    }

    #[test]
    fn primal_rejects_mass_off_support() {
        let prob = DiscreteProblem::unchecked(
            array![[0.0], [1.0]],
            array![1.0, 0.0],
            array![[-1.0], [1.0]],
            array![[0.0], [1.0]],
            array![0.5, 0.5],
            1.0,
        )
        .unwrap();
        let cpl = Coupling {
            pi: array![[0.5, 0.4], [0.0, 0.1]],
        };
        assert!(matches!(
            primal_objective(&cpl, &prob),
            Err(Error::Infeasible { i: 1, j: 1, .. })
        ));
    }

    #[test]
    fn non_finite_potentials_rejected() {
        let prob = two_atom();
        let mut p = Potentials::zeros(&prob);
        p.h[1] = f64::NAN;
        assert!(matches!(dual_objective(&p, &prob), Err(Error::NonFinite("h"))));
    }

    #[test]
    fn large_exponents_stay_finite() {
        let prob = two_atom();
        let p = Potentials {
            f: array![0.0],
            g: array![[0.0]],
            h: array![690.0, 690.0],
        };
        let v = iota(&p, &prob).unwrap();
        assert!(v.is_finite() && v > 1e299);
        let naive = Kernel::new(&prob, ExpMode::Naive).log_iota(&p);
        assert_abs_diff_eq!(naive, Kernel::new(&prob, ExpMode::LogDomain).log_iota(&p), epsilon = 1e-12);
    }
}
