#![allow(dead_code)]

use evqr::gaussian::GaussianModel;
use evqr::DiscreteProblem;
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn random_weights(rng: &mut ChaCha8Rng, k: usize) -> Array1<f64> {
    let w = Array1::from_shape_simple_fn(k, || rng.random_range(0.5..1.5));
    let s = w.sum();
    w / s
}

/// Random instance with Gaussian reference and response atoms, covariates
/// uniform on `[-1, 1]` (then centered) and non-uniform weights.
pub fn random_problem(seed: u64, m: usize, n: usize, dx: usize, dy: usize, eps: f64) -> DiscreteProblem {
    let mut r = rng(seed);
    let u = normal_matrix(&mut r, m, dy, 1.0);
    let y = normal_matrix(&mut r, n, dy, 1.0);
    let x = Array2::from_shape_simple_fn((n, dx), || r.random_range(-1.0..1.0));
    let a = random_weights(&mut r, m);
    let b = random_weights(&mut r, n);
    DiscreteProblem::centered(u, a, x, y, b, eps).expect("random instance is nondegenerate")
}

/// Random sizes for a seeded instance: `m, n` in the given ranges and
/// `d_x, d_y` up to `dmax`, with `n > d_x + 1`.
pub fn random_shape(seed: u64, mn: std::ops::RangeInclusive<usize>, dmax: usize) -> (usize, usize, usize, usize) {
    let mut r = rng(seed ^ 0x5eed);
    let dx = r.random_range(1..=dmax);
    let dy = r.random_range(1..=dmax);
    let m = r.random_range(mn.clone());
    let n = r.random_range(mn).max(dx + 2);
    (m, n, dx, dy)
}

/// `m = 1, n = 2`, `u = 0`, `y ∈ {0, 1}`, `x ∈ {−1, 1}`, `b = (½, ½)`.
pub fn two_atom(eps: f64) -> DiscreteProblem {
    DiscreteProblem::new(
        array![[0.0]],
        array![1.0],
        array![[-1.0], [1.0]],
        array![[0.0], [1.0]],
        array![0.5, 0.5],
        eps,
    )
    .unwrap()
}

pub fn desk_model(eps: f64) -> GaussianModel {
    GaussianModel {
        m_y: array![0.7, -0.2],
        sigma_xx: array![[1.0]],
        sigma_xy: array![[0.5, -0.3]],
        sigma_yy: array![[1.5, 0.4], [0.4, 1.2]],
        epsilon: eps,
    }
}

/// Least-squares slope and coefficient of determination of `ys` against
/// `0, 1, 2, …`.
pub fn linear_fit(ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = ys.iter().enumerate().map(|(t, y)| (t as f64 - xm) * (y - ym)).sum();
    let sxx: f64 = (0..ys.len()).map(|t| (t as f64 - xm).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_tot: f64 = ys.iter().map(|y| (y - ym).powi(2)).sum();
    let ss_res: f64 = ys
        .iter()
        .enumerate()
        .map(|(t, y)| (y - ym - slope * (t as f64 - xm)).powi(2))
        .sum();
    (slope, 1.0 - ss_res / ss_tot)
}

/// `L²(a)` projection onto `{ψ : ‖ψ_i‖ ≤ K, Σ a_i ψ_i = 0}` by Dykstra's
/// alternating projections between the product of balls and the mean-zero
/// subspace. Shares no code with the library's projection.
pub fn dykstra_projection(g: &Array2<f64>, a: &Array1<f64>, k: f64, iters: usize) -> Array2<f64> {
    let (m, d) = g.dim();
    let clip = |z: &Array2<f64>| {
        let mut out = z.clone();
        for i in 0..m {
            let nrm = (0..d).map(|c| z[[i, c]] * z[[i, c]]).sum::<f64>().sqrt();
            if nrm > k {
                for c in 0..d {
                    out[[i, c]] *= k / nrm;
                }
            }
        }
        out
    };
    let center = |z: &Array2<f64>| {
        let mut out = z.clone();
        for c in 0..d {
            let mean: f64 = (0..m).map(|i| a[i] * z[[i, c]]).sum();
            for i in 0..m {
                out[[i, c]] -= mean;
            }
        }
        out
    };
    let mut x = g.clone();
    let mut p = Array2::<f64>::zeros((m, d));
    let mut q = Array2::<f64>::zeros((m, d));
    for _ in 0..iters {
        let y = clip(&(&x + &p));
        p = &x + &p - &y;
        let next = center(&(&y + &q));
        q = &y + &q - &next;
        let change = (&next - &x).iter().map(|v| v.abs()).fold(0.0, f64::max);
        x = next;
        if change < 1e-16 {
            break;
        }
    }
    x
}

pub fn l2a(diff: &Array2<f64>, a: &Array1<f64>) -> f64 {
    evqr::potentials::l2_rows(diff.view(), a.view())
}
