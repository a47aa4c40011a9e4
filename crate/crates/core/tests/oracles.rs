//! Library results against independent straight-line computations and
//! instances with known optima.

mod common;

use approx::assert_abs_diff_eq;
use common::*;
use evqr::dual::ExpMode;
use evqr::estimators::b_estimators;
use evqr::modified::{default_eta, modified_step_detailed};
use evqr::projection::ProjectionConfig;
use evqr::vanilla::{run_vanilla, vanilla_step, NewtonConfig};
use evqr::*;
use ndarray::{array, Array1, Array2};

fn precise() -> NewtonConfig {
    NewtonConfig {
        grad_tol: 1e-13,
        ..Default::default()
    }
}

fn vanilla_optimum(prob: &DiscreteProblem) -> Solution {
    let cfg = SolverConfig {
        mode: Mode::Vanilla,
        tol: 1e-12,
        max_iters: 50_000,
        ..Default::default()
    };
    let sol = run_vanilla(prob, &cfg, &precise(), Potentials::zeros(prob)).unwrap();
    assert!(sol.converged);
    sol
}

/// The matrix-form modified step with literal exponentials and the
/// reweighting projection, written out loop by loop.
fn transcribed_step(p: &Potentials, prob: &DiscreteProblem, eta: f64, radius: f64) -> Potentials {
    let (m, n, dx) = (prob.m(), prob.n(), prob.d_x());
    let (a, b, x, c, eps) = (prob.a(), prob.b(), prob.x(), prob.cost(), prob.epsilon());
    let kern = |i: usize, j: usize| {
        let gx: f64 = (0..dx).map(|k| p.g[[i, k]] * x[[j, k]]).sum();
        (-c[[i, j]] / eps).exp() * (gx / eps).exp()
    };
    let mut h = vec![0.0; n];
    for j in 0..n {
        let s: f64 = (0..m).map(|i| a[i] * (p.f[i] / eps).exp() * kern(i, j)).sum();
        h[j] = -eps * s.ln();
    }
    let mut f = vec![0.0; m];
    for i in 0..m {
        let s: f64 = (0..n).map(|j| b[j] * (h[j] / eps).exp() * kern(i, j)).sum();
        f[i] = -eps * s.ln();
    }
    let shift: f64 = (0..m).map(|i| a[i] * f[i]).sum();
    for v in f.iter_mut() {
        *v -= shift;
    }
    for v in h.iter_mut() {
        *v += shift;
    }
    let mut target = Array2::zeros((m, dx));
    for i in 0..m {
        for k in 0..dx {
            let d: f64 = (0..n)
                .map(|j| b[j] * x[[j, k]] * (h[j] / eps).exp() * kern(i, j))
                .sum::<f64>()
                * (f[i] / eps).exp();
            target[[i, k]] = p.g[[i, k]] - eta * d;
        }
    }
    // Reweighting: v ← Σ a ω G / Σ a ω with ω_i = min(1, K/‖G_i − v‖).
    let weight = |v: &[f64], i: usize| {
        let nrm = (0..dx).map(|k| (target[[i, k]] - v[k]).powi(2)).sum::<f64>().sqrt();
        if nrm > radius {
            radius / nrm
        } else {
            1.0
        }
    };
    let mut v: Vec<f64> = (0..dx).map(|k| (0..m).map(|i| a[i] * target[[i, k]]).sum()).collect();
    for _ in 0..10_000 {
        let den: f64 = (0..m).map(|i| a[i] * weight(&v, i)).sum();
        let next: Vec<f64> = (0..dx)
            .map(|k| (0..m).map(|i| a[i] * weight(&v, i) * target[[i, k]]).sum::<f64>() / den)
            .collect();
        let change = (0..dx).map(|k| (next[k] - v[k]).abs()).fold(0.0, f64::max);
        v = next;
        if change <= 1e-15 {
            break;
        }
    }
    let g = Array2::from_shape_fn((m, dx), |(i, k)| weight(&v, i) * (target[[i, k]] - v[k]));
    Potentials {
        f: Array1::from(f),
        g,
        h: Array1::from(h),
    }
}

fn small_instance() -> DiscreteProblem {
    DiscreteProblem::centered(
        array![[0.0, 0.1], [1.0, -0.5], [0.3, 0.3]],
        array![0.2, 0.5, 0.3],
        array![[-1.0, 0.2], [1.0, 0.5], [0.5, -1.0], [-0.5, 0.3]],
        array![[0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [-1.0, 0.2]],
        array![0.1, 0.2, 0.3, 0.4],
        0.7,
    )
    .unwrap()
}

#[test]
fn modified_step_matches_transcription() {
    let prob = small_instance();
    for (eta, radius) in [(prob.epsilon(), 50.0), (0.4, 0.3)] {
        let pcfg = ProjectionConfig::new(radius);
        let mut ours = Potentials::zeros(&prob);
        let mut theirs = Potentials::zeros(&prob);
        for _ in 0..6 {
            ours = modified_step_detailed(&ours, &prob, eta, &pcfg, ExpMode::LogDomain).unwrap().next;
            theirs = transcribed_step(&theirs, &prob, eta, radius);
            assert!(ours.distance(&theirs, &prob) <= 1e-12, "eta {eta} radius {radius}");
        }
        let naive = modified_step_detailed(&ours, &prob, eta, &pcfg, ExpMode::Naive).unwrap().next;
        assert!(naive.distance(&transcribed_step(&ours, &prob, eta, radius), &prob) <= 1e-12);
    }
}

/// Scalar root of the tilted mean by bisection; the mean is increasing in g.
fn bisect_root(x: &[f64], b: &[f64], offset: &[f64], eps: f64) -> f64 {
    let mean = |g: f64| {
        let z: Vec<f64> = (0..x.len()).map(|j| b[j].ln() + (g * x[j] + offset[j]) / eps).collect();
        let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
        w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / w.iter().sum::<f64>()
    };
    let (mut lo, mut hi) = (-1e3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn vanilla_step_matches_bisection_transcription() {
    let prob = random_problem(7, 5, 8, 1, 2, 0.8);
    let (m, n, eps) = (prob.m(), prob.n(), prob.epsilon());
    let (a, b, c) = (prob.a(), prob.b(), prob.cost());
    let x: Vec<f64> = prob.x().column(0).to_vec();
    let bv = b.to_vec();
    let mut p = Potentials::zeros(&prob);
    for _ in 0..4 {
        let ours = vanilla_step(&p, &prob, &precise()).unwrap();

        let g: Vec<f64> = (0..m)
            .map(|i| {
                let offset: Vec<f64> = (0..n).map(|j| p.h[j] - c[[i, j]]).collect();
                bisect_root(&x, &bv, &offset, eps)
            })
            .collect();
        let f: Vec<f64> = (0..m)
            .map(|i| {
                let s: f64 = (0..n).map(|j| b[j] * ((g[i] * x[j] + p.h[j] - c[[i, j]]) / eps).exp()).sum();
                -eps * s.ln()
            })
            .collect();
        let h: Vec<f64> = (0..n)
            .map(|j| {
                let s: f64 = (0..m).map(|i| a[i] * ((f[i] + g[i] * x[j] - c[[i, j]]) / eps).exp()).sum();
                -eps * s.ln()
            })
            .collect();
        let f_mean: f64 = (0..m).map(|i| a[i] * f[i]).sum();
        let g_mean: f64 = (0..m).map(|i| a[i] * g[i]).sum();
        let theirs = Potentials {
            f: Array1::from_shape_fn(m, |i| f[i] - f_mean),
            g: Array2::from_shape_fn((m, 1), |(i, _)| g[i] - g_mean),
            h: Array1::from_shape_fn(n, |j| h[j] + f_mean + g_mean * x[j]),
        };
        assert!(ours.distance(&theirs, &prob) <= 1e-9);
        p = ours;
    }
}

#[test]
fn two_atom_optimum() {
    // The optimum is f = 0, g = 0, h = C for every ε, with D* = 1/4.
    for eps in [0.5, 1.0, 2.0] {
        let prob = two_atom(eps);
        let expected = Potentials {
            f: array![0.0],
            g: array![[0.0]],
            h: array![0.0, 0.5],
        };
        assert_abs_diff_eq!(dual_objective(&expected, &prob).unwrap(), 0.25, epsilon = 1e-15);
        let van = vanilla_optimum(&prob);
        assert!(van.trace.header.iterations <= 2);
        assert!(van.potentials.distance(&expected, &prob) <= 1e-10);
        let cfg = SolverConfig {
            tol: 1e-12,
            max_iters: 10_000,
            ..Default::default()
        };
        let modi = solve(&prob, &cfg, None).unwrap();
        assert!(modi.converged);
        assert_abs_diff_eq!(modi.trace.final_dual().unwrap(), 0.25, epsilon = 1e-12);
        assert!(modi.potentials.normalized(&prob).distance(&expected, &prob) <= 1e-8);
    }
}

#[test]
fn two_atom_optimum_by_coordinate_ascent() {
    // Plain gradient ascent on the four dual coordinates.
    let prob = two_atom(1.0);
    let mut p = Potentials::zeros(&prob);
    for _ in 0..20_000 {
        let l = neg_gradients(&p, &prob).unwrap();
        p.f[0] -= 0.5 * l.f[0];
        p.g[[0, 0]] -= 0.5 * l.g[[0, 0]];
        for j in 0..2 {
            p.h[j] -= 0.5 * prob.b()[j] * l.h[j] / 0.5;
        }
    }
    assert_abs_diff_eq!(dual_objective(&p, &prob).unwrap(), 0.25, epsilon = 1e-12);
    assert!(vanilla_optimum(&prob).potentials.distance(&p.normalized(&prob), &prob) <= 1e-6);
}

#[test]
fn optimum_is_a_fixed_point_of_both_steps() {
    let prob = random_problem(11, 6, 9, 2, 2, 1.0);
    let opt = vanilla_optimum(&prob).potentials;
    let l = neg_gradients(&opt, &prob).unwrap();
    let sup = l
        .f
        .iter()
        .chain(l.g.iter())
        .chain(l.h.iter())
        .fold(0.0f64, |s, v| s.max(v.abs()));
    assert!(sup <= 1e-8);

    let again = vanilla_step(&opt, &prob, &precise()).unwrap();
    assert!(again.distance(&opt, &prob) <= 1e-8);

    let radius = 2.0 * opt.g_sup();
    let pcfg = ProjectionConfig::new(radius);
    let step = modified_step_detailed(&opt, &prob, prob.epsilon(), &pcfg, ExpMode::LogDomain).unwrap();
    assert!(step.next.distance(&opt, &prob) <= 1e-8);
}

#[test]
fn strong_duality_at_optimum() {
    let prob = random_problem(12, 7, 10, 1, 3, 0.5);
    let opt = vanilla_optimum(&prob).potentials;
    let cpl = coupling(&opt, &prob).unwrap();
    let gap = primal_objective(&cpl, &prob).unwrap() - dual_objective(&opt, &prob).unwrap();
    assert!(gap.abs() <= 1e-9, "gap {gap}");
    assert!(residuals(&cpl, &prob).unwrap().max() <= 1e-10);
}

#[test]
fn uncentered_product_coupling_reports_covariate_mean() {
    let prob = DiscreteProblem::unchecked(
        array![[0.0], [1.0]],
        array![0.5, 0.5],
        array![[1.0], [2.0], [4.0]],
        array![[0.0], [1.0], [2.0]],
        array![0.5, 0.25, 0.25],
        1.0,
    )
    .unwrap();
    let pi = Array2::from_shape_fn((2, 3), |(i, j)| prob.a()[i] * prob.b()[j]);
    let res = residuals(&Coupling { pi }, &prob).unwrap();
    assert_abs_diff_eq!(res.mean_independence, 2.0, epsilon = 1e-15);
    assert_eq!(res.row, 0.0);
}

#[test]
fn guarded_gap_ratios_stay_below_one() {
    for seed in 0..5 {
        let prob = random_problem(300 + seed, 6, 8, 2, 2, 1.0);
        let opt = vanilla_optimum(&prob);
        let d_star = opt.trace.final_dual().unwrap();
        let cfg = SolverConfig {
            eta: StepSize::Guarded,
            radius: Radius::Fixed(1.25 * opt.potentials.g_sup()),
            max_iters: 200,
            tol: 1e-12,
            reference_dual: Some(d_star),
            ..Default::default()
        };
        let sol = solve(&prob, &cfg, None).unwrap();
        let gaps: Vec<f64> = sol.trace.rows.iter().map(|r| r.gap.unwrap()).collect();
        for w in gaps.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "seed {seed}: {} after {}", w[1], w[0]);
        }
        assert!(sol.trace.header.guard_holds);
    }
}

#[test]
fn default_eta_is_capped_by_the_guard() {
    let prob = two_atom(2.0);
    let (eta, violated) = default_eta(&prob, 1.0);
    assert_abs_diff_eq!(eta, 0.9 * 2.0 / 1f64.exp(), epsilon = 1e-12);
    assert!(violated);
}

/// Data on `x ∈ {−1, 1}` whose conditional quantiles are `q_l + β x`, with
/// reference atoms at the same levels `q_l`.
fn quasi_linear(beta: f64, eps: f64) -> DiscreteProblem {
    let q = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for s in [-1.0, 1.0] {
        for &ql in &q {
            x.push(s);
            y.push(ql + beta * s);
        }
    }
    let n = x.len();
    DiscreteProblem::centered(
        Array2::from_shape_vec((q.len(), 1), q.to_vec()).unwrap(),
        Array1::from_elem(q.len(), 1.0 / q.len() as f64),
        Array2::from_shape_vec((n, 1), x).unwrap(),
        Array2::from_shape_vec((n, 1), y).unwrap(),
        Array1::from_elem(n, 1.0 / n as f64),
        eps,
    )
    .unwrap()
}

#[test]
fn slope_estimates_recover_the_linear_coefficient() {
    let beta = 0.8;
    for eps in [2.0, 1.0, 0.3, 0.1] {
        let prob = quasi_linear(beta, eps);
        let cfg = SolverConfig {
            mode: Mode::Vanilla,
            tol: 1e-9,
            max_iters: 200_000,
            ..Default::default()
        };
        let sol = run_vanilla(&prob, &cfg, &precise(), Potentials::zeros(&prob)).unwrap();
        assert!(sol.converged, "eps {eps}");
        let opt = sol.potentials;
        let est = b_estimators(&opt, &prob).unwrap();
        let err = est
            .b1
            .iter()
            .zip(prob.a().iter())
            .map(|(b1, a)| a * (b1.as_ref().unwrap()[[0, 0]] - beta).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-7, "eps {eps}: {err:e}");
    }
}
