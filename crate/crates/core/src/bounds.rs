//! Covariance sandwich of the lifted map, fourth-moment derivative norms, and
//! the Wasserstein bound between the joint law of `(X, Y)` and the filter's
//! Gaussian approximation of it.
//!
//! Expectations run over `(X_p, U)` only. The measurement noise enters the
//! lifted map additively with unit Jacobian and zero Hessian, so its share is
//! the constant block `C_V` and needs no integration.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::expr::{Dual2, VectorFunction};
use crate::filter::{joint_approx, predict, JointGaussian};
use crate::linalg::{
    bures_sq, loewner_geq, max_eigenvalue, sym_eigenvalues, sym_spectral_norm, Gaussian, SpdMatrix,
};
use crate::model::{lift_core, NonlinearSsm};
use crate::quadrature::{integrate, Block, MomentAcc, QuadratureScheme, SumAcc, Weighting};
use crate::sampling::Stream;

/// Smallest eigenvalue accepted for a covariance that gets inverted.
pub const MIN_EIGENVALUE: f64 = 1e-12;

const POINCARE_CONSTANT: f64 = 3.0 / SQRT_2;

/// How the Gaussian-gap block enters the total bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundMode {
    /// The block is added as it is.
    #[serde(rename = "as_stated")]
    AsStated,
    /// The block bounds a squared distance; its square root is added.
    #[serde(rename = "sqrt")]
    SqrtSecondTerm,
}

impl BoundMode {
    pub const ALL: [BoundMode; 2] = [BoundMode::AsStated, BoundMode::SqrtSecondTerm];

    pub fn name(self) -> &'static str {
        match self {
            BoundMode::AsStated => "as_stated",
            BoundMode::SqrtSecondTerm => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// Loewner bounds `lower <= cov(Z) <= upper` with `lower = a1 + b1 + c_v` and
/// `upper = a2 + c_v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovSandwich {
    #[serde(with = "crate::serde_matrix")]
    pub a1: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub b1: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub a2: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub c_v: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub lower: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub upper: DMatrix<f64>,
}

impl CovSandwich {
    /// `lower <= cov <= upper` up to `tol` on the smallest eigenvalues.
    pub fn contains(&self, cov: &DMatrix<f64>, tol: f64) -> bool {
        loewner_geq(&self.upper, cov, tol) && loewner_geq(cov, &self.lower, tol)
    }
}

/// Sums over output components of fourth-root fourth moments.
///
/// `hess_*` use the spectral norm of each component Hessian; `grad_*` are
/// `sum_i (E[(1 + |grad_i|^2)^2])^(1/4)` over the components of `f` (gradient
/// in `x1`) and of `q` (gradient in `(x1, x2)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L4Primes {
    pub grad_f: f64,
    pub hess_f: f64,
    pub grad_q_aug: f64,
    pub hess_q: f64,
}

impl L4Primes {
    pub fn hess_sum(&self) -> f64 {
        self.hess_f + self.hess_q
    }

    pub fn grad_sum(&self) -> f64 {
        self.grad_f + self.grad_q_aug
    }
}

/// Mean and covariance of `Z = g(W)` under the scheme, with `C_V` included
/// in the covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftStatistics {
    #[serde(with = "crate::serde_matrix::vector")]
    pub mean: DVector<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub cov: DMatrix<f64>,
    /// Largest Monte Carlo standard error over the covariance entries
    /// (0 under Gauss-Hermite).
    pub cov_std_error: f64,
}

/// All bound ingredients for one model and scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub mode: BoundMode,
    /// Total for `mode`.
    pub total: f64,
    pub total_as_stated: f64,
    pub total_sqrt_variant: f64,
    /// Bound on the distance between `Z` and its Gaussian projection, built
    /// from the sandwich matrices.
    pub poincare_term: f64,
    /// Gaussian-gap block before clamping or square root.
    pub gauss_gap_term: f64,
    /// `|E(Y) - m_Y~|`.
    pub mean_gap: f64,
    /// Same as `poincare_term` with the sampled `cov(Z)` in place of the
    /// sandwich; diagnostic only, absent when that covariance is singular.
    pub sampled_cov_term: Option<f64>,
    pub sandwich: CovSandwich,
    pub l4: L4Primes,
}

struct DerivativeMoments {
    n: usize,
    m: usize,
    sums: SumAcc,
    z: MomentAcc,
    weighting: Weighting,
}

// slot layout inside `sums`
struct Slots {
    jf: usize,
    jh: usize,
    jhjf: usize,
    a2: usize,
    hf: usize,
    hq: usize,
    gf: usize,
    gq: usize,
    len: usize,
}

impl Slots {
    fn new(n: usize, m: usize) -> Self {
        let jf = 0;
        let jh = jf + n * n;
        let jhjf = jh + m * n;
        let a2 = jhjf + m * n;
        let hf = a2 + (n + m) * (n + m);
        let hq = hf + n;
        let gf = hq + m;
        let gq = gf + n;
        Slots {
            jf,
            jh,
            jhjf,
            a2,
            hf,
            hq,
            gf,
            gq,
            len: gq + m,
        }
    }
}

fn hessian_block_norm(d: &Dual2, size: usize, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    for r in 0..size {
        for c in 0..size {
            buf.push(d.hess(r, c));
        }
    }
    sym_spectral_norm(buf, size)
}

fn derivative_moments(
    model: &NonlinearSsm,
    scheme: &QuadratureScheme,
) -> Result<DerivativeMoments> {
    let (n, m) = (model.state_dim(), model.meas_dim());
    let core = lift_core(model);
    let slots = Slots::new(n, m);
    let noise = model.process_noise();
    let blocks = [
        Block {
            gaussian: model.prior(),
            stream: Stream::Primary,
        },
        Block {
            gaussian: &noise,
            stream: Stream::ProcessNoise,
        },
    ];
    let pp = model.prior().cov().matrix();
    let su = model.sigma_u().matrix();
    let (acc, weighting) = integrate(
        scheme,
        &blocks,
        || (SumAcc::new(slots.len), MomentAcc::new(n + m)),
        |(sums, z), x, w| {
            let vals = core.eval_dual2(x)?;
            let values: Vec<f64> = vals.iter().map(Dual2::value).collect();
            z.push(&values, w);
            sums.add_weight(w);
            let jf = DMatrix::from_fn(n, n, |i, k| vals[i].gradient()[k]);
            let jh = DMatrix::from_fn(m, n, |r, c| vals[n + r].gradient()[n + c]);
            for (k, v) in jf.transpose().iter().enumerate() {
                sums.add(slots.jf + k, w * v);
            }
            for (k, v) in jh.transpose().iter().enumerate() {
                sums.add(slots.jh + k, w * v);
            }
            for r in 0..m {
                for c in 0..n {
                    sums.add(slots.jhjf + r * n + c, w * vals[n + r].gradient()[c]);
                }
            }
            let inner = &jf * pp * jf.transpose() + su;
            let mut stack = DMatrix::zeros(n + m, n);
            stack.view_mut((0, 0), (n, n)).fill_with_identity();
            stack.view_mut((n, 0), (m, n)).copy_from(&jh);
            let a2 = &stack * inner * stack.transpose();
            for (k, v) in a2.transpose().iter().enumerate() {
                sums.add(slots.a2 + k, w * v);
            }
            let mut buf = Vec::with_capacity(4 * n * n);
            for i in 0..n {
                sums.add(
                    slots.hf + i,
                    w * hessian_block_norm(&vals[i], n, &mut buf).powi(4),
                );
                let g2: f64 = jf.row(i).norm_squared();
                sums.add(slots.gf + i, w * (1.0 + g2).powi(2));
            }
            for r in 0..m {
                sums.add(
                    slots.hq + r,
                    w * hessian_block_norm(&vals[n + r], 2 * n, &mut buf).powi(4),
                );
                let g2: f64 = vals[n + r].gradient().iter().map(|g| g * g).sum();
                sums.add(slots.gq + r, w * (1.0 + g2).powi(2));
            }
            Ok(())
        },
    )?;
    Ok(DerivativeMoments {
        n,
        m,
        sums: acc.0,
        z: acc.1,
        weighting,
    })
}

fn block_c_v(model: &NonlinearSsm) -> DMatrix<f64> {
    let (n, m) = (model.state_dim(), model.meas_dim());
    let mut c = DMatrix::zeros(n + m, n + m);
    c.view_mut((n, n), (m, m))
        .copy_from(model.sigma_v().matrix());
    c
}

fn symmetrized(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl DerivativeMoments {
    fn means(&self, at: usize, rows: usize, cols: usize) -> DMatrix<f64> {
        let mean = self.sums.means();
        DMatrix::from_row_slice(rows, cols, &mean[at..at + rows * cols])
    }

    fn sandwich(&self, model: &NonlinearSsm) -> CovSandwich {
        let (n, m) = (self.n, self.m);
        let slots = Slots::new(n, m);
        let e_jf = self.means(slots.jf, n, n);
        let e_jh = self.means(slots.jh, m, n);
        let e_jhjf = self.means(slots.jhjf, m, n);
        let mut g1 = DMatrix::zeros(n + m, n);
        g1.view_mut((0, 0), (n, n)).copy_from(&e_jf);
        g1.view_mut((n, 0), (m, n)).copy_from(&e_jhjf);
        let a1 = symmetrized(&g1 * model.prior().cov().matrix() * g1.transpose());
        let mut g2 = DMatrix::zeros(n + m, n);
        g2.view_mut((0, 0), (n, n)).fill_with_identity();
        g2.view_mut((n, 0), (m, n)).copy_from(&e_jh);
        let b1 = symmetrized(&g2 * model.sigma_u().matrix() * g2.transpose());
        let a2 = symmetrized(self.means(slots.a2, n + m, n + m));
        let c_v = block_c_v(model);
        CovSandwich {
            lower: &a1 + &b1 + &c_v,
            upper: &a2 + &c_v,
            a1,
            b1,
            a2,
            c_v,
        }
    }

    fn l4(&self) -> L4Primes {
        let slots = Slots::new(self.n, self.m);
        let mean = self.sums.means();
        let root_sum = |at: usize, len: usize| -> f64 {
            mean[at..at + len].iter().map(|v| v.powf(0.25)).sum()
        };
        L4Primes {
            grad_f: root_sum(slots.gf, self.n),
            hess_f: root_sum(slots.hf, self.n),
            grad_q_aug: root_sum(slots.gq, self.m),
            hess_q: root_sum(slots.hq, self.m),
        }
    }
}

/// Largest standard error of the entries of a Monte Carlo covariance
/// estimate, from a second pass over the same draws.
fn cov_std_error<F>(
    scheme: &QuadratureScheme,
    blocks: &[Block<'_>],
    mean: &DVector<f64>,
    eval: F,
) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    if !scheme.is_monte_carlo() {
        return Ok(0.0);
    }
    let d = mean.len();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let (acc, wt) = integrate(
        scheme,
        blocks,
        || SumAcc::new(2 * pairs.len()),
        |acc, x, w| {
            let mut z = vec![0.0; d];
            eval(x, &mut z)?;
            for (zi, mi) in z.iter_mut().zip(mean.iter()) {
                *zi -= mi;
            }
            acc.add_weight(w);
            for (k, &(i, j)) in pairs.iter().enumerate() {
                let c = z[i] * z[j];
                acc.add(2 * k, w * c);
                acc.add(2 * k + 1, w * c * c);
            }
            Ok(())
        },
    )?;
    let means = acc.means();
    Ok((0..pairs.len())
        .map(|k| ((means[2 * k + 1] - means[2 * k].powi(2)).max(0.0) / wt.total).sqrt())
        .fold(0.0, f64::max))
}

fn lift_statistics_from(
    model: &NonlinearSsm,
    scheme: &QuadratureScheme,
    dm: &DerivativeMoments,
) -> Result<LiftStatistics> {
    let mean = dm.z.mean();
    let cov = symmetrized(dm.z.cov(&dm.weighting)) + block_c_v(model);
    let core = lift_core(model);
    let noise = model.process_noise();
    let blocks = [
        Block {
            gaussian: model.prior(),
            stream: Stream::Primary,
        },
        Block {
            gaussian: &noise,
            stream: Stream::ProcessNoise,
        },
    ];
    let se = cov_std_error(scheme, &blocks, &mean, |x, out| Ok(core.eval_into(x, out)?))?;
    Ok(LiftStatistics {
        mean,
        cov,
        cov_std_error: se,
    })
}

/// Loewner sandwich of `cov(Z)` from expected Jacobians over `(X_p, U)`.
pub fn covariance_sandwich(model: &NonlinearSsm, scheme: &QuadratureScheme) -> Result<CovSandwich> {
    Ok(derivative_moments(model, scheme)?.sandwich(model))
}

/// Fourth-moment Hessian and gradient sums of the lifted map.
pub fn l4prime_norms(model: &NonlinearSsm, scheme: &QuadratureScheme) -> Result<L4Primes> {
    Ok(derivative_moments(model, scheme)?.l4())
}

/// Mean and covariance of `Z = g(W)` from the draws shared with the other
/// bound quantities.
pub fn lift_statistics(model: &NonlinearSsm, scheme: &QuadratureScheme) -> Result<LiftStatistics> {
    let dm = derivative_moments(model, scheme)?;
    lift_statistics_from(model, scheme, &dm)
}

fn inverse_norm_and_sqrt_norm(cov: &DMatrix<f64>, what: &'static str) -> Result<(f64, f64)> {
    let ev = sym_eigenvalues(cov);
    let lo = ev.first().copied().unwrap_or(0.0);
    if lo < MIN_EIGENVALUE {
        return Err(Error::NotPositiveDefinite {
            what,
            eigenvalues: ev,
        });
    }
    Ok((1.0 / lo, ev.last().unwrap().sqrt()))
}

/// Second-order Poincare bound on the 1-Wasserstein distance between
/// `func(X)` and its Gaussian projection, `X ~ input`:
/// `3/sqrt(2) |S^-1| |S|^(1/2) |H|_4' |grad|_4'` with `S = moments.cov()`.
pub fn second_poincare_bound(
    func: &VectorFunction,
    input: &Gaussian,
    moments: &Gaussian,
    scheme: &QuadratureScheme,
) -> Result<f64> {
    let (d1, d2) = (func.in_dim(), func.out_dim());
    ensure_dim("function input vs Gaussian", d1, input.dim())?;
    ensure_dim("function output vs moments", d2, moments.dim())?;
    if d2 > d1 {
        return Err(Error::Invalid(format!(
            "second-order Poincare bound needs output dimension {d2} <= input dimension {d1}"
        )));
    }
    let (inv, sqrt_norm) = inverse_norm_and_sqrt_norm(moments.cov().matrix(), "output covariance")?;
    let blocks = [Block {
        gaussian: input,
        stream: Stream::Primary,
    }];
    let (acc, _) = integrate(
        scheme,
        &blocks,
        || SumAcc::new(2 * d2),
        |acc, x, w| {
            let vals = func.eval_dual2(x)?;
            let mut buf = Vec::with_capacity(d1 * d1);
            acc.add_weight(w);
            for (i, v) in vals.iter().enumerate() {
                acc.add(i, w * hessian_block_norm(v, d1, &mut buf).powi(4));
                let g2: f64 = v.gradient().iter().map(|g| g * g).sum();
                acc.add(d2 + i, w * g2 * g2);
            }
            Ok(())
        },
    )?;
    let means = acc.means();
    let hess: f64 = means[..d2].iter().map(|v| v.powf(0.25)).sum();
    let grad: f64 = means[d2..].iter().map(|v| v.powf(0.25)).sum();
    Ok(POINCARE_CONSTANT * inv * sqrt_norm * hess * grad)
}

fn poincare_term(inv_norm: f64, sqrt_norm: f64, l4: &L4Primes) -> f64 {
    POINCARE_CONSTANT * inv_norm * sqrt_norm * l4.hess_sum() * l4.grad_sum()
}

/// Bound on the distance between `Z` and its Gaussian projection for a given
/// (estimated or surrogate) covariance `p_z` of `Z`.
pub fn dw_z_prz_bound(
    model: &NonlinearSsm,
    p_z: &SpdMatrix,
    scheme: &QuadratureScheme,
) -> Result<f64> {
    ensure_dim(
        "joint covariance",
        model.state_dim() + model.meas_dim(),
        p_z.dim(),
    )?;
    // the lifted map has 2n + m inputs and n + m outputs
    let (inv, sqrt_norm) = inverse_norm_and_sqrt_norm(p_z.matrix(), "joint covariance")?;
    Ok(poincare_term(
        inv,
        sqrt_norm,
        &l4prime_norms(model, scheme)?,
    ))
}

/// Every bound quantity for one model and scheme, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundAnalysis {
    pub sandwich: CovSandwich,
    pub l4: L4Primes,
    pub lift: LiftStatistics,
    pub prediction: Gaussian,
    pub joint: JointGaussian,
    pub poincare_term: f64,
    pub gauss_gap_term: f64,
    pub mean_gap: f64,
    pub sampled_cov_term: Option<f64>,
}

impl BoundAnalysis {
    pub fn compute(model: &NonlinearSsm, scheme: &QuadratureScheme) -> Result<Self> {
        let prediction = predict(model, scheme).map_err(|e| e.in_stage("predict"))?;
        let joint =
            joint_approx(model, &prediction, scheme).map_err(|e| e.in_stage("joint_approx"))?;
        Self::with_filter(model, scheme, prediction, joint)
    }

    /// Same as [`BoundAnalysis::compute`] with the filter step supplied.
    pub fn with_filter(
        model: &NonlinearSsm,
        scheme: &QuadratureScheme,
        prediction: Gaussian,
        joint: JointGaussian,
    ) -> Result<Self> {
        let n = model.state_dim();
        let dm =
            derivative_moments(model, scheme).map_err(|e| e.in_stage("covariance_sandwich"))?;
        let sandwich = dm.sandwich(model);
        let l4 = dm.l4();
        let lift =
            lift_statistics_from(model, scheme, &dm).map_err(|e| e.in_stage("lift_statistics"))?;

        let (inv, _) = inverse_norm_and_sqrt_norm(&sandwich.lower, "covariance lower bound")
            .map_err(|e| e.in_stage("bound"))?;
        let sqrt_upper = max_eigenvalue(&sandwich.upper).max(0.0).sqrt();
        let poincare = poincare_term(inv, sqrt_upper, &l4);
        let sampled_cov_term = inverse_norm_and_sqrt_norm(&lift.cov, "sampled joint covariance")
            .ok()
            .map(|(i, s)| poincare_term(i, s, &l4));

        let mean_gap = (lift.mean.rows(n, model.meas_dim()) - &joint.mean_y).norm();
        let cov_tilde = SpdMatrix::named(joint.cov_matrix(), "joint covariance")?;
        let lower = SpdMatrix::named(sandwich.lower.clone(), "covariance lower bound")
            .map_err(|e| e.in_stage("bound"))?;
        // tr(upper) - tr(lower) + bures(lower, cov) equals the trace form
        // tr A2 + tr V + tr P_X + tr P_Y - 2 tr sqrt(L lower L), without the cancellation
        let block = mean_gap * mean_gap
            + bures_sq(&lower, &cov_tilde)?
            + (sandwich.upper.trace() - sandwich.lower.trace());
        Ok(Self {
            sandwich,
            l4,
            lift,
            prediction,
            joint,
            poincare_term: poincare,
            gauss_gap_term: block,
            mean_gap,
            sampled_cov_term,
        })
    }

    pub fn total(&self, mode: BoundMode) -> f64 {
        let block = self.gauss_gap_term.max(0.0);
        match mode {
            BoundMode::AsStated => self.poincare_term + block,
            BoundMode::SqrtSecondTerm => self.poincare_term + block.sqrt(),
        }
    }

    pub fn report(&self, mode: BoundMode) -> BoundReport {
        BoundReport {
            mode,
            total: self.total(mode),
            total_as_stated: self.total(BoundMode::AsStated),
            total_sqrt_variant: self.total(BoundMode::SqrtSecondTerm),
            poincare_term: self.poincare_term,
            gauss_gap_term: self.gauss_gap_term,
            mean_gap: self.mean_gap,
            sampled_cov_term: self.sampled_cov_term,
            sandwich: self.sandwich.clone(),
            l4: self.l4,
        }
    }
}

/// Upper bound on the 1-Wasserstein distance between the joint law of
/// `(X, Y)` and the filter's Gaussian approximation `(X~, Y~)`.
pub fn joint_wasserstein_bound(
    model: &NonlinearSsm,
    scheme: &QuadratureScheme,
    mode: BoundMode,
) -> Result<BoundReport> {
    Ok(BoundAnalysis::compute(model, scheme)?.report(mode))
}

/// First-order Poincare bounds `E[J] S E[J]^T <= cov(func(X)) <= E[J S J^T]`
/// for `X ~ N(mu, S)`, with the covariance estimated from the same draws.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSandwich {
    pub lower: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    pub cov_std_error: f64,
}

pub fn poincare_sandwich(
    func: &VectorFunction,
    input: &Gaussian,
    scheme: &QuadratureScheme,
) -> Result<VarianceSandwich> {
    let (d1, d2) = (func.in_dim(), func.out_dim());
    ensure_dim("function input vs Gaussian", d1, input.dim())?;
    let s = input.cov().matrix();
    let blocks = [Block {
        gaussian: input,
        stream: Stream::Primary,
    }];
    let (acc, wt) = integrate(
        scheme,
        &blocks,
        || (SumAcc::new(d2 * d1 + d2 * d2), MomentAcc::new(d2)),
        |(sums, z), x, w| {
            let vals = func.eval_dual2(x)?;
            let values: Vec<f64> = vals.iter().map(Dual2::value).collect();
            z.push(&values, w);
            let j = DMatrix::from_fn(d2, d1, |r, c| vals[r].gradient()[c]);
            let jsj = &j * s * j.transpose();
            sums.add_weight(w);
            for (k, v) in j.transpose().iter().enumerate() {
                sums.add(k, w * v);
            }
            for (k, v) in jsj.transpose().iter().enumerate() {
                sums.add(d2 * d1 + k, w * v);
            }
            Ok(())
        },
    )?;
    let means = acc.0.means();
    let e_j = DMatrix::from_row_slice(d2, d1, &means[..d2 * d1]);
    let upper = symmetrized(DMatrix::from_row_slice(d2, d2, &means[d2 * d1..]));
    let lower = symmetrized(&e_j * s * e_j.transpose());
    let mean = acc.1.mean();
    let cov = symmetrized(acc.1.cov(&wt));
    let se = cov_std_error(scheme, &blocks, &mean, |x, out| Ok(func.eval_into(x, out)?))?;
    Ok(VarianceSandwich {
        lower,
        cov,
        upper,
        cov_std_error: se,
    })
}
