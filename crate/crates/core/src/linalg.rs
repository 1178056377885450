//! Dense symmetric linear algebra for small covariance matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{ensure_dim, Error, Result};

/// Relative threshold below which negative eigenvalues count as round-off.
pub const CLAMP_RELATIVE: f64 = 1e-10;

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteMatrix(what))
    }
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Symmetric positive-semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    /// Symmetrizes `m` and rejects it when an eigenvalue falls below
    /// `-CLAMP_RELATIVE * lambda_max`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::named(m, "matrix")
    }

    pub(crate) fn named(m: DMatrix<f64>, what: &'static str) -> Result<Self> {
        ensure_dim("square matrix", m.nrows(), m.ncols())?;
        check_finite(&m, what)?;
        let s = symmetrize(&m);
        let ev = sym_eigenvalues(&s);
        if let (Some(&lo), Some(&hi)) = (ev.first(), ev.last()) {
            if lo < -CLAMP_RELATIVE * hi.max(0.0) {
                return Err(Error::NotPsd {
                    what,
                    min_eigenvalue: lo,
                });
            }
        }
        Ok(Self(s))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Row-major `d x d` literal.
    pub fn from_row_slice(d: usize, data: &[f64]) -> Result<Self> {
        ensure_dim("covariance literal length", d * d, data.len())?;
        Self::new(DMatrix::from_row_slice(d, d, data))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        sym_eigenvalues(&self.0)
    }

    /// Strictly positive definite with `lambda_min > tol * max(lambda_max, 1)`.
    pub fn is_positive_definite(&self, tol: f64) -> bool {
        let ev = self.eigenvalues();
        match (ev.first(), ev.last()) {
            (Some(&lo), Some(&hi)) => lo > tol * hi.max(1.0),
            _ => false,
        }
    }

    /// `||A^{-1}||` for symmetric positive-definite `A`, as `1 / lambda_min`.
    pub fn inverse_norm(&self) -> f64 {
        1.0 / min_eigenvalue(&self.0)
    }

    pub fn norm(&self) -> f64 {
        max_eigenvalue(&self.0).max(0.0)
    }

    pub fn cholesky(&self) -> Option<DMatrix<f64>> {
        nalgebra::Cholesky::new(self.0.clone()).map(|c| c.l())
    }

    pub fn inverse(&self) -> Option<DMatrix<f64>> {
        nalgebra::Cholesky::new(self.0.clone()).map(|c| c.inverse())
    }
}

/// Multivariate normal distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: SpdMatrix,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        ensure_dim("gaussian mean vs covariance", cov.dim(), mean.len())?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("gaussian mean is not finite".into()));
        }
        Ok(Self { mean, cov })
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            cov: SpdMatrix::identity(d),
        }
    }

    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mean),
            SpdMatrix::from_diagonal(&[variance])?,
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    /// Square-root factor `F` with `F F^T = cov`: lower Cholesky when it
    /// exists, otherwise the symmetric square root.
    pub fn factor(&self) -> CovFactor {
        match self.cov.cholesky() {
            Some(l) => CovFactor::Cholesky(l),
            None => CovFactor::Symmetric(spd_sqrt(&self.cov).into_matrix()),
        }
    }

    /// Block-diagonal joint law of independent `parts`.
    pub fn independent(parts: &[&Gaussian]) -> Gaussian {
        let d: usize = parts.iter().map(|g| g.dim()).sum();
        let mut mean = DVector::zeros(d);
        let mut cov = DMatrix::zeros(d, d);
        let mut at = 0;
        for g in parts {
            let k = g.dim();
            mean.rows_mut(at, k).copy_from(&g.mean);
            cov.view_mut((at, at), (k, k)).copy_from(g.cov.matrix());
            at += k;
        }
        Gaussian {
            mean,
            cov: SpdMatrix(cov),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovFactor {
    Cholesky(DMatrix<f64>),
    /// Fallback for rank-deficient covariances.
    Symmetric(DMatrix<f64>),
}

impl CovFactor {
    pub fn matrix(&self) -> &DMatrix<f64> {
        match self {
            CovFactor::Cholesky(m) | CovFactor::Symmetric(m) => m,
        }
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self, CovFactor::Cholesky(_))
    }
}

/// Principal square root via eigendecomposition, negative eigenvalues clamped to 0.
pub fn spd_sqrt(m: &SpdMatrix) -> SpdMatrix {
    let eig = SymmetricEigen::new(m.0.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let r = v * DMatrix::from_diagonal(&roots) * v.transpose();
    SpdMatrix(symmetrize(&r))
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    check_finite(a, "spectral norm argument")?;
    if a.is_empty() {
        return Ok(0.0);
    }
    if a.is_square() && a == &a.transpose() {
        let ev = sym_eigenvalues(a);
        return Ok(ev.first().unwrap().abs().max(ev.last().unwrap().abs()));
    }
    let ata = a.transpose() * a;
    Ok(max_eigenvalue(&ata).max(0.0).sqrt())
}

/// Spectral norm of a small symmetric matrix given as a full row-major buffer.
pub(crate) fn sym_spectral_norm(m: &[f64], d: usize) -> f64 {
    match d {
        0 => 0.0,
        1 => m[0].abs(),
        2 => {
            let (a, b, c) = (m[0], m[1], m[3]);
            let half_tr = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            (half_tr + disc).abs().max((half_tr - disc).abs())
        }
        _ if m.iter().all(|&v| v == 0.0) => 0.0,
        _ => DMatrix::from_row_slice(d, d, m)
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0, |acc: f64, v| acc.max(v.abs())),
    }
}

/// `trace(sqrt(l * s * l))`, symmetrizing the product before the root.
pub fn trace_sqrt_sandwich(l: &SpdMatrix, s: &SpdMatrix) -> Result<f64> {
    ensure_dim("trace_sqrt_sandwich operands", l.dim(), s.dim())?;
    let prod = SpdMatrix(symmetrize(&(&l.0 * &s.0 * &l.0)));
    Ok(spd_sqrt(&prod).trace())
}

/// Squared Bures distance `tr A + tr B - 2 tr sqrt(A^1/2 B A^1/2)`, evaluated
/// as `min_U |A^1/2 - B^1/2 U|_F^2` over orthogonal `U` (the polar factor of
/// `B^1/2 A^1/2`). Forming the difference avoids the cancellation of the trace
/// form, so nearby matrices give a correspondingly small result.
pub fn bures_sq(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    ensure_dim("bures_sq operands", a.dim(), b.dim())?;
    let x = spd_sqrt(a).0;
    let y = spd_sqrt(b).0;
    let svd = (y.transpose() * &x).svd(true, true);
    let (Some(p), Some(q_t)) = (svd.u, svd.v_t) else {
        return Err(Error::Invalid("singular value decomposition failed".into()));
    };
    Ok((x - y * (p * q_t)).norm_squared())
}

/// `a >= b` in the Loewner order, up to `tol` on the smallest eigenvalue of `a - b`.
pub fn loewner_geq(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    if a.shape() != b.shape() {
        return false;
    }
    min_eigenvalue(&(a - b)) >= -tol
}

/// Log-determinant via LU; `None` when the determinant is not positive.
pub(crate) fn log_det_positive(m: &DMatrix<f64>) -> Option<f64> {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut log = 0.0;
    let mut sign = if lu.p().determinant::<f64>() < 0.0 {
        -1.0
    } else {
        1.0
    };
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        if d < 0.0 {
            sign = -sign;
        }
        log += d.abs().ln();
    }
    (sign > 0.0).then_some(log)
}
