//! Distances between Gaussians, the joint KL divergence of the moment-matched
//! filter, and empirical Wasserstein-1 estimates from samples.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{bures_sq, log_det_positive, Gaussian, SpdMatrix};

/// Largest sample count accepted by the assignment-based estimator.
pub const MAX_ASSIGNMENT_SAMPLES: usize = 4096;
/// Largest sample count accepted by the sorted 1-D estimator.
pub const MAX_SORTED_SAMPLES: usize = 10_000_000;

const CENTERED_TOL: f64 = 1e-12;

/// Gaussian distances between two laws, plus the optional KL value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub w2_exact: f64,
    pub w1_upper_w2: f64,
    /// Present only when both means are zero (computed on the centered pair
    /// when the means agree, see [`distance_report`]).
    pub w1_centered: Option<f64>,
    pub kl: Option<f64>,
}

/// Closed-form 2-Wasserstein distance between Gaussians.
pub fn w2_gaussian(a: &Gaussian, b: &Gaussian) -> Result<f64> {
    ensure_dim("w2_gaussian operands", a.dim(), b.dim())?;
    let diff = a.mean() - b.mean();
    Ok((diff.norm_squared() + bures_sq(a.cov(), b.cov())?).sqrt())
}

/// Upper bound on the 1-Wasserstein distance via `W1 <= W2`. Numerically equal
/// to [`w2_gaussian`].
pub fn w1_upper_w2(a: &Gaussian, b: &Gaussian) -> Result<f64> {
    w2_gaussian(a, b)
}

fn conditioning_factor(s: &SpdMatrix, what: &'static str) -> Result<f64> {
    let ev = s.eigenvalues();
    let lo = ev.first().copied().unwrap_or(0.0);
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            what,
            eigenvalues: ev,
        });
    }
    Ok(ev.last().unwrap().sqrt() / lo)
}

/// Bound on `W1` for two centered Gaussians in terms of the Frobenius
/// distance of their covariances:
/// `min_k(||S_k^-1|| ||S_k||^1/2) * sqrt(d * tr[(S_a - S_b)(S_a - S_b)^T])`.
pub fn w1_centered_bound(a: &Gaussian, b: &Gaussian) -> Result<f64> {
    ensure_dim("w1_centered_bound operands", a.dim(), b.dim())?;
    if a.mean().norm() > CENTERED_TOL || b.mean().norm() > CENTERED_TOL {
        return Err(Error::Invalid(
            "centered W1 bound requires zero means".into(),
        ));
    }
    let k = conditioning_factor(a.cov(), "first covariance")?
        .min(conditioning_factor(b.cov(), "second covariance")?);
    let diff = a.cov().matrix() - b.cov().matrix();
    let frob_sq = (&diff * diff.transpose()).trace();
    Ok(k * (a.dim() as f64 * frob_sq).sqrt())
}

/// KL divergence between the joint law of the filter's `(X~, Y)` under an
/// exact conditional and its moment-matched Gaussian:
/// `1/2 log det(I + S_V^-1 [cov_y - S_V - c^T P_X^-1 c])`, floored at 0.
pub fn kl_joint(
    p_x: &SpdMatrix,
    cov_y: &SpdMatrix,
    c_xy: &DMatrix<f64>,
    sigma_v: &SpdMatrix,
) -> Result<f64> {
    let (n, m) = (p_x.dim(), cov_y.dim());
    ensure_dim("cross-covariance rows", n, c_xy.nrows())?;
    ensure_dim("cross-covariance columns", m, c_xy.ncols())?;
    ensure_dim("measurement noise", m, sigma_v.dim())?;
    let not_pd = |what, s: &SpdMatrix| Error::NotPositiveDefinite {
        what,
        eigenvalues: s.eigenvalues(),
    };
    let p_inv = p_x
        .inverse()
        .ok_or_else(|| not_pd("state covariance", p_x))?;
    let v_inv = sigma_v
        .inverse()
        .ok_or_else(|| not_pd("measurement noise covariance", sigma_v))?;
    let inner = cov_y.matrix() - sigma_v.matrix() - c_xy.transpose() * p_inv * c_xy;
    let inner = (&inner + inner.transpose()) * 0.5;
    let arg = DMatrix::identity(m, m) + v_inv * inner;
    let log_det = log_det_positive(&arg).ok_or_else(|| {
        Error::Invalid("KL argument has non-positive determinant; moments are inconsistent".into())
    })?;
    // the divergence is nonnegative; a negative log-determinant is round-off
    Ok((0.5 * log_det).max(0.0))
}

/// Distances between `a` and `b`. The centered bound is evaluated on the
/// recentred pair when the means coincide and left out otherwise.
pub fn distance_report(a: &Gaussian, b: &Gaussian, kl: Option<f64>) -> Result<DistanceReport> {
    let w2 = w2_gaussian(a, b)?;
    let same_mean = (a.mean() - b.mean()).norm() <= CENTERED_TOL * (1.0 + a.mean().norm());
    let w1_centered = if same_mean {
        let zero = nalgebra::DVector::zeros(a.dim());
        let ca = Gaussian::new(zero.clone(), a.cov().clone())?;
        let cb = Gaussian::new(zero, b.cov().clone())?;
        Some(w1_centered_bound(&ca, &cb)?)
    } else {
        None
    };
    Ok(DistanceReport {
        w2_exact: w2,
        w1_upper_w2: w2,
        w1_centered,
        kl,
    })
}

/// Empirical 1-Wasserstein distance between two equal-size samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalW1 {
    pub distance: f64,
    /// Standard deviation of the matched pair costs over `sqrt(N)`.
    pub std_error: f64,
    pub samples: usize,
}

/// Optimal matching cost between the rows of `a` and `b`, divided by `N`.
pub fn empirical_w1(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    Ok(empirical_w1_detailed(a, b)?.distance)
}

pub fn empirical_w1_detailed(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<EmpiricalW1> {
    ensure_dim("empirical_w1 sample counts", a.nrows(), b.nrows())?;
    ensure_dim("empirical_w1 dimensions", a.ncols(), b.ncols())?;
    let (n, d) = (a.nrows(), a.ncols());
    if n == 0 || d == 0 {
        return Err(Error::Invalid(
            "empirical_w1 needs non-empty samples".into(),
        ));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteMatrix("empirical_w1 samples"));
    }
    let costs: Vec<f64> = if d == 1 {
        if n > MAX_SORTED_SAMPLES {
            return Err(Error::Invalid(format!(
                "1-D empirical_w1 accepts at most {MAX_SORTED_SAMPLES} samples, got {n}"
            )));
        }
        let mut xa: Vec<f64> = a.column(0).iter().copied().collect();
        let mut xb: Vec<f64> = b.column(0).iter().copied().collect();
        xa.par_sort_unstable_by(f64::total_cmp);
        xb.par_sort_unstable_by(f64::total_cmp);
        xa.iter().zip(&xb).map(|(p, q)| (p - q).abs()).collect()
    } else {
        if n > MAX_ASSIGNMENT_SAMPLES {
            return Err(Error::Invalid(format!(
                "empirical_w1 in dimension {d} accepts at most {MAX_ASSIGNMENT_SAMPLES} samples, got {n}"
            )));
        }
        let rows_a: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).iter().copied().collect()).collect();
        let rows_b: Vec<Vec<f64>> = (0..n).map(|i| b.row(i).iter().copied().collect()).collect();
        let mut cost = vec![0.0; n * n];
        cost.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, c) in row.iter_mut().enumerate() {
                *c = rows_a[i]
                    .iter()
                    .zip(&rows_b[j])
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt();
            }
        });
        let perm = assignment::solve(&cost, n)?;
        perm.iter()
            .enumerate()
            .map(|(i, &j)| cost[i * n + j])
            .collect()
    };
    let nf = n as f64;
    let mean = costs.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    Ok(EmpiricalW1 {
        distance: mean,
        std_error: (var / nf).sqrt(),
        samples: n,
    })
}
