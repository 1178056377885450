//! One step of the moment-matched Gaussian filter: prediction, joint
//! approximation of state and measurement, and conditioning.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::expr::VectorFunction;
use crate::linalg::{Gaussian, SpdMatrix};
use crate::model::NonlinearSsm;
use crate::quadrature::{integrate, Block, MomentAcc, QuadratureScheme};
use crate::sampling::Stream;

/// Gaussian approximation of `(X, Y)` built from the predicted state.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussian {
    pub mean_x: DVector<f64>,
    pub mean_y: DVector<f64>,
    pub p_x: SpdMatrix,
    pub p_y: SpdMatrix,
    /// `n x m` cross-covariance of state and measurement.
    pub c_xy: DMatrix<f64>,
}

impl JointGaussian {
    pub fn mean(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.mean_x.len() + self.mean_y.len());
        v.rows_mut(0, self.mean_x.len()).copy_from(&self.mean_x);
        v.rows_mut(self.mean_x.len(), self.mean_y.len())
            .copy_from(&self.mean_y);
        v
    }

    /// `[[p_x, c_xy], [c_xy^T, p_y]]`.
    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.mean_x.len(), self.mean_y.len());
        let mut c = DMatrix::zeros(n + m, n + m);
        c.view_mut((0, 0), (n, n)).copy_from(self.p_x.matrix());
        c.view_mut((n, n), (m, m)).copy_from(self.p_y.matrix());
        c.view_mut((0, n), (n, m)).copy_from(&self.c_xy);
        c.view_mut((n, 0), (m, n)).copy_from(&self.c_xy.transpose());
        c
    }

    pub fn to_gaussian(&self) -> Result<Gaussian> {
        Gaussian::new(
            self.mean(),
            SpdMatrix::named(self.cov_matrix(), "joint covariance")?,
        )
    }
}

fn moments(
    func: &VectorFunction,
    input: &Gaussian,
    scheme: &QuadratureScheme,
    stream: Stream,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    ensure_dim("function input vs Gaussian", func.in_dim(), input.dim())?;
    let out = func.out_dim();
    let blocks = [Block {
        gaussian: input,
        stream,
    }];
    let (acc, wt) = integrate(
        scheme,
        &blocks,
        || MomentAcc::new(out),
        |acc, x, w| {
            let mut y = vec![0.0; out];
            func.eval_into(x, &mut y)?;
            acc.push(&y, w);
            Ok(())
        },
    )?;
    Ok((acc.mean(), acc.cov(&wt)))
}

/// Estimate of `E[func(X)]` for `X ~ input`.
pub fn gauss_expect(
    func: &VectorFunction,
    input: &Gaussian,
    scheme: &QuadratureScheme,
) -> Result<DVector<f64>> {
    Ok(moments(func, input, scheme, Stream::Primary)?.0)
}

fn project_on(
    func: &VectorFunction,
    input: &Gaussian,
    noise_cov: &SpdMatrix,
    scheme: &QuadratureScheme,
    stream: Stream,
) -> Result<Gaussian> {
    ensure_dim(
        "noise covariance vs function output",
        func.out_dim(),
        noise_cov.dim(),
    )?;
    let (mean, cov) = moments(func, input, scheme, stream)?;
    let cov = SpdMatrix::named(cov + noise_cov.matrix(), "projected covariance")?;
    Gaussian::new(mean, cov)
}

/// Gaussian projection of `func(X) + N`, `X ~ input`, `N ~ N(0, noise_cov)`
/// independent: `N(E[func(X)], cov[func(X)] + noise_cov)`. Mean and covariance
/// come from the same sample (or grid).
pub fn project_gaussian(
    func: &VectorFunction,
    input: &Gaussian,
    noise_cov: &SpdMatrix,
    scheme: &QuadratureScheme,
) -> Result<Gaussian> {
    project_on(func, input, noise_cov, scheme, Stream::Primary)
}

/// Moment-matched prediction `N(m_X, P_X)` of `X = f(X_p) + U`.
pub fn predict(model: &NonlinearSsm, scheme: &QuadratureScheme) -> Result<Gaussian> {
    project_on(
        model.f(),
        model.prior(),
        model.sigma_u(),
        scheme,
        Stream::Primary,
    )
}

/// Gaussian approximation of `(X~, h(X~) + V)` with `X~ ~ x_tilde`. All
/// measurement moments come from one shared sample of `X~`.
pub fn joint_approx(
    model: &NonlinearSsm,
    x_tilde: &Gaussian,
    scheme: &QuadratureScheme,
) -> Result<JointGaussian> {
    let (n, m) = (model.state_dim(), model.meas_dim());
    ensure_dim("predicted state dimension", n, x_tilde.dim())?;
    let h = model.h();
    let blocks = [Block {
        gaussian: x_tilde,
        stream: Stream::Predicted,
    }];
    let (acc, wt) = integrate(
        scheme,
        &blocks,
        || MomentAcc::new(n + m),
        |acc, x, w| {
            let mut z = vec![0.0; n + m];
            z[..n].copy_from_slice(x);
            h.eval_into(x, &mut z[n..])?;
            acc.push(&z, w);
            Ok(())
        },
    )?;
    let mean = acc.mean();
    let cov = acc.cov(&wt);
    let p_y = cov.view((n, n), (m, m)) + model.sigma_v().matrix();
    Ok(JointGaussian {
        mean_x: x_tilde.mean().clone(),
        mean_y: mean.rows(n, m).into_owned(),
        p_x: x_tilde.cov().clone(),
        p_y: SpdMatrix::named(p_y, "measurement covariance")?,
        c_xy: cov.view((0, n), (n, m)).into_owned(),
    })
}

/// Condition the joint approximation on the measurement `y`.
pub fn update(joint: &JointGaussian, y: &DVector<f64>) -> Result<Gaussian> {
    ensure_dim("measurement length", joint.mean_y.len(), y.len())?;
    if !joint.p_y.is_positive_definite(1e-14) {
        return Err(Error::NotPositiveDefinite {
            what: "measurement covariance",
            eigenvalues: joint.p_y.eigenvalues(),
        });
    }
    let p_y_inv = joint
        .p_y
        .inverse()
        .ok_or_else(|| Error::NotPositiveDefinite {
            what: "measurement covariance",
            eigenvalues: joint.p_y.eigenvalues(),
        })?;
    let gain = &joint.c_xy * p_y_inv;
    let mean = &joint.mean_x + &gain * (y - &joint.mean_y);
    let cov = joint.p_x.matrix() - &gain * joint.c_xy.transpose();
    Gaussian::new(mean, SpdMatrix::named(cov, "posterior covariance")?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::loewner_geq;

    fn gh() -> QuadratureScheme {
        QuadratureScheme::gauss_hermite(5)
    }

    fn linear_model() -> (NonlinearSsm, DMatrix<f64>, DMatrix<f64>) {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 1.1]);
        let hm = DMatrix::from_row_slice(1, 2, &[1.0, -0.5]);
        let model = NonlinearSsm::new(
            VectorFunction::parse(&["0.9*x1 + 0.2*x2", "-0.1*x1 + 1.1*x2 + 0.3"], 2).unwrap(),
            VectorFunction::parse(&["x1 - 0.5*x2"], 2).unwrap(),
            SpdMatrix::from_row_slice(2, &[0.2, 0.05, 0.05, 0.1]).unwrap(),
            SpdMatrix::from_diagonal(&[0.3]).unwrap(),
            Gaussian::new(
                DVector::from_vec(vec![1.0, -0.5]),
                SpdMatrix::from_row_slice(2, &[1.0, 0.3, 0.3, 0.5]).unwrap(),
            )
            .unwrap(),
        )
        .unwrap();
        (model, a, hm)
    }

    #[test]
    fn identity_expectation() {
        let g = Gaussian::new(
            DVector::from_vec(vec![0.5, -1.0]),
            SpdMatrix::from_row_slice(2, &[1.0, 0.2, 0.2, 2.0]).unwrap(),
        )
        .unwrap();
        let id = VectorFunction::parse(&["x1", "x2"], 2).unwrap();
        let e = gauss_expect(&id, &g, &gh()).unwrap();
        assert!((e - g.mean()).abs().max() < 1e-14);
        let mc = gauss_expect(&id, &g, &QuadratureScheme::monte_carlo(100_000, 3)).unwrap();
        // CLT band: 4 standard errors
        assert!((mc[0] - 0.5).abs() < 4.0 * (1.0f64 / 1e5).sqrt());
        assert!((mc[1] + 1.0).abs() < 4.0 * (2.0f64 / 1e5).sqrt());
    }

    #[test]
    fn second_moment_exact_under_gh() {
        let sq = VectorFunction::parse(&["x1^2"], 1).unwrap();
        for order in 2..6 {
            let g = Gaussian::scalar(0.7, 2.5).unwrap();
            let e = gauss_expect(&sq, &g, &QuadratureScheme::gauss_hermite(order)).unwrap();
            assert!((e[0] - (0.49 + 2.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_and_zero_projection() {
        let g = Gaussian::new(
            DVector::from_vec(vec![1.0, 2.0]),
            SpdMatrix::from_row_slice(2, &[1.0, 0.4, 0.4, 0.8]).unwrap(),
        )
        .unwrap();
        let f = VectorFunction::parse(&["2*x1 - x2 + 1", "0.5*x2"], 2).unwrap();
        let noise = SpdMatrix::from_diagonal(&[0.1, 0.2]).unwrap();
        let p = project_gaussian(&f, &g, &noise, &gh()).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 0.0, 0.5]);
        let want_mean = &a * g.mean() + DVector::from_vec(vec![1.0, 0.0]);
        let want_cov = &a * g.cov().matrix() * a.transpose() + noise.matrix();
        assert!((p.mean() - want_mean).abs().max() < 1e-12);
        assert!((p.cov().matrix() - want_cov).abs().max() < 1e-12);

        let zero = VectorFunction::parse(&["0", "0*x1"], 2).unwrap();
        let p = project_gaussian(&zero, &g, &noise, &gh()).unwrap();
        assert_eq!(p.mean().abs().max(), 0.0);
        assert!((p.cov().matrix() - noise.matrix()).abs().max() < 1e-15);
    }

    #[test]
    fn linear_model_reproduces_kalman_algebra() {
        let (model, a, hm) = linear_model();
        let x = predict(&model, &gh()).unwrap();
        let pp = model.prior().cov().matrix();
        let px = &a * pp * a.transpose() + model.sigma_u().matrix();
        let mx = &a * model.prior().mean() + DVector::from_vec(vec![0.0, 0.3]);
        assert!((x.mean() - &mx).abs().max() < 1e-10);
        assert!((x.cov().matrix() - &px).abs().max() < 1e-10);

        let joint = joint_approx(&model, &x, &gh()).unwrap();
        let py = &hm * &px * hm.transpose() + model.sigma_v().matrix();
        let cxy = &px * hm.transpose();
        assert!((&joint.mean_y - &hm * &mx).abs().max() < 1e-10);
        assert!((joint.p_y.matrix() - &py).abs().max() < 1e-10);
        assert!((&joint.c_xy - &cxy).abs().max() < 1e-10);

        let y = DVector::from_vec(vec![0.4]);
        let post = update(&joint, &y).unwrap();
        let k = &cxy * py.clone().try_inverse().unwrap();
        let want_mean = &mx + &k * (&y - &hm * &mx);
        let want_cov = &px - &k * &py * k.transpose();
        assert!((post.mean() - want_mean).abs().max() < 1e-9);
        assert!((post.cov().matrix() - want_cov).abs().max() < 1e-9);
        assert!(loewner_geq(x.cov().matrix(), post.cov().matrix(), 1e-10));
    }

    #[test]
    fn update_special_cases() {
        let joint = JointGaussian {
            mean_x: DVector::from_vec(vec![1.0]),
            mean_y: DVector::from_vec(vec![2.0]),
            p_x: SpdMatrix::from_diagonal(&[3.0]).unwrap(),
            p_y: SpdMatrix::from_diagonal(&[2.0]).unwrap(),
            c_xy: DMatrix::zeros(1, 1),
        };
        let post = update(&joint, &DVector::from_vec(vec![-40.0])).unwrap();
        assert_eq!(post.mean()[0], 1.0);
        assert_eq!(post.cov().matrix()[(0, 0)], 3.0);

        let informative = JointGaussian {
            c_xy: DMatrix::from_element(1, 1, 1.5),
            ..joint.clone()
        };
        let post = update(&informative, &DVector::from_vec(vec![2.0])).unwrap();
        assert_eq!(post.mean()[0], 1.0);
        assert!(post.cov().matrix()[(0, 0)] < 3.0);

        // scalar Kalman by hand: prior N(1, 3), y = x + v, R = 2 => S = 5, K = 3/5
        let kal = JointGaussian {
            mean_x: DVector::from_vec(vec![1.0]),
            mean_y: DVector::from_vec(vec![1.0]),
            p_x: SpdMatrix::from_diagonal(&[3.0]).unwrap(),
            p_y: SpdMatrix::from_diagonal(&[5.0]).unwrap(),
            c_xy: DMatrix::from_element(1, 1, 3.0),
        };
        let post = update(&kal, &DVector::from_vec(vec![3.0])).unwrap();
        assert!((post.mean()[0] - (1.0 + 0.6 * 2.0)).abs() < 1e-15);
        assert!((post.cov().matrix()[(0, 0)] - (3.0 - 0.6 * 3.0)).abs() < 1e-15);

        let singular = JointGaussian {
            p_y: SpdMatrix::from_diagonal(&[0.0]).unwrap(),
            ..joint
        };
        assert!(update(&singular, &DVector::from_vec(vec![0.0])).is_err());
    }

    #[test]
    fn domain_error_aborts_batch() {
        let f = VectorFunction::parse(&["log(x1)"], 1).unwrap();
        let g = Gaussian::scalar(1.0, 1.0).unwrap();
        let err = gauss_expect(&f, &g, &QuadratureScheme::monte_carlo(10_000, 1)).unwrap_err();
        assert!(matches!(err, Error::Eval(_)), "{err}");
    }

    #[test]
    fn mc_is_deterministic() {
        let (model, ..) = linear_model();
        let s = QuadratureScheme::monte_carlo(50_000, 12);
        let a = predict(&model, &s).unwrap();
        let b = predict(&model, &s).unwrap();
        assert_eq!(a, b);
        let ja = joint_approx(&model, &a, &s).unwrap();
        let jb = joint_approx(&model, &b, &s).unwrap();
        assert_eq!(ja, jb);
    }
}
