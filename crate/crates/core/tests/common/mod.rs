//! Model generators shared by the integration tests.
#![allow(dead_code)]

use certify::experiment::{UNGM_F1, UNGM_F2, UNGM_H};
use certify::{Gaussian, NonlinearSsm, SpdMatrix, VectorFunction};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ungm(f: &str) -> NonlinearSsm {
    NonlinearSsm::new(
        VectorFunction::parse(&[f], 1).unwrap(),
        VectorFunction::parse(&[UNGM_H], 1).unwrap(),
        SpdMatrix::from_diagonal(&[0.05]).unwrap(),
        SpdMatrix::from_diagonal(&[0.05]).unwrap(),
        Gaussian::scalar(0.2, 1.0).unwrap(),
    )
    .unwrap()
}

pub fn ungm_f1() -> NonlinearSsm {
    ungm(UNGM_F1)
}

pub fn ungm_f2() -> NonlinearSsm {
    ungm(UNGM_F2)
}

/// `B B^T / d + floor * I` with `B` uniform on `[-1, 1]`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> SpdMatrix {
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let m = &b * b.transpose() / d as f64 + DMatrix::identity(d, d) * floor;
    SpdMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

fn linear_combination(coeffs: &[f64], offset: f64) -> String {
    let mut s = format!("{offset:?}");
    for (j, c) in coeffs.iter().enumerate() {
        s += &format!(" + ({c:?})*x{}", j + 1);
    }
    s
}

fn random_noise_and_prior(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
) -> (SpdMatrix, SpdMatrix, Gaussian) {
    let sigma_u = random_spd(rng, n, 0.05);
    let sigma_v = random_spd(rng, m, 0.05);
    let mean = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let prior = Gaussian::new(mean, random_spd(rng, n, 0.2)).unwrap();
    (sigma_u, sigma_v, prior)
}

/// Linear-Gaussian model with `n, m` drawn from `1..=3`.
pub fn random_affine(rng: &mut ChaCha8Rng) -> NonlinearSsm {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=3);
    let component = |rng: &mut ChaCha8Rng| {
        let coeffs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        linear_combination(&coeffs, rng.random_range(-1.0..1.0))
    };
    let f: Vec<String> = (0..n).map(|_| component(rng)).collect();
    let h: Vec<String> = (0..m).map(|_| component(rng)).collect();
    let (sigma_u, sigma_v, prior) = random_noise_and_prior(rng, n, m);
    NonlinearSsm::new(
        VectorFunction::parse(&f, n).unwrap(),
        VectorFunction::parse(&h, n).unwrap(),
        sigma_u,
        sigma_v,
        prior,
    )
    .unwrap()
}

/// Smooth nonlinear model with `n, m` drawn from `1..=2`: dynamics mix
/// linear, sine and tanh terms, measurements mix linear, quadratic and
/// cosine terms.
pub fn random_smooth(rng: &mut ChaCha8Rng) -> NonlinearSsm {
    let n = rng.random_range(1..=2);
    let m = rng.random_range(1..=2);
    let mut c = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let f: Vec<String> = (1..=n)
        .map(|i| {
            let other = n + 1 - i;
            format!(
                "({:?})*x{i} + ({:?})*sin(x{other}) + ({:?})*tanh(x{i})",
                c(0.3, 1.0),
                c(-1.0, 1.0),
                c(-1.0, 1.0)
            )
        })
        .collect();
    let h: Vec<String> = (1..=m)
        .map(|k| {
            let i = (k - 1) % n + 1;
            format!(
                "({:?})*x{i} + ({:?})*x{i}^2/2 + ({:?})*cos(x1)",
                c(-1.0, 1.0),
                c(0.2, 1.0),
                c(-0.5, 0.5)
            )
        })
        .collect();
    let (sigma_u, sigma_v, prior) = random_noise_and_prior(rng, n, m);
    NonlinearSsm::new(
        VectorFunction::parse(&f, n).unwrap(),
        VectorFunction::parse(&h, n).unwrap(),
        sigma_u,
        sigma_v,
        prior,
    )
    .unwrap()
}

pub const GRAD_STEP: f64 = 1e-3;
pub const HESS_STEP: f64 = 1e-3;

/// Five-point central difference of `h(s)` at `s = 0`, error `O(step^4)`.
fn central5(step: f64, h: impl Fn(f64) -> f64) -> f64 {
    (h(-2.0 * step) - 8.0 * h(-step) + 8.0 * h(step) - h(2.0 * step)) / (12.0 * step)
}

/// Five-point central differences for one output component: the gradient
/// from function values (step [`GRAD_STEP`]) and the Hessian from
/// differences of the forward-mode gradient (step [`HESS_STEP`]).
pub fn finite_difference(func: &VectorFunction, k: usize, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let d = x.len();
    let moved = |i: usize, s: f64| {
        let mut p = x.to_vec();
        p[i] += s;
        p
    };
    let value = |p: &[f64]| func.eval_value(p).unwrap()[k];
    let grad_at = |p: &[f64]| func.eval_dual2(p).unwrap()[k].gradient().to_vec();
    let grad = (0..d)
        .map(|i| central5(GRAD_STEP, |s| value(&moved(i, s))))
        .collect();
    let mut hess = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..d {
            hess[(i, j)] = central5(HESS_STEP, |s| grad_at(&moved(j, s))[i]);
        }
    }
    (grad, hess)
}

/// Relative error where the reference exceeds `1e-8` in magnitude, absolute
/// error otherwise.
pub fn fd_error(ad: f64, fd: f64) -> f64 {
    if fd.abs() > 1e-8 {
        (ad - fd).abs() / fd.abs()
    } else {
        (ad - fd).abs()
    }
}
