//! Loewner bounds on the joint covariance against a sampled estimate.

use certify::{
    covariance_sandwich, lift_statistics, poincare_sandwich, Gaussian, NonlinearSsm,
    QuadratureScheme, SpdMatrix, VectorFunction,
};

fn main() -> certify::Result<()> {
    let scheme = QuadratureScheme::monte_carlo(400_000, 3);

    let square = VectorFunction::parse(&["x1^2/2"], 1)?;
    let v = poincare_sandwich(&square, &Gaussian::standard(1), &scheme)?;
    println!(
        "x^2/2 under N(0,1): {:.4} <= {:.4} <= {:.4}",
        v.lower[(0, 0)],
        v.cov[(0, 0)],
        v.upper[(0, 0)]
    );

    let model = NonlinearSsm::new(
        VectorFunction::parse(&["x1 + x1/(2*(1 + x1^2))"], 1)?,
        VectorFunction::parse(&["x1^2/2"], 1)?,
        SpdMatrix::from_diagonal(&[0.05])?,
        SpdMatrix::from_diagonal(&[0.05])?,
        Gaussian::scalar(0.2, 1.0)?,
    )?;
    let s = covariance_sandwich(&model, &scheme)?;
    let lift = lift_statistics(&model, &scheme)?;
    println!(
        "lower\n{}sampled cov(Z)\n{}upper\n{}",
        s.lower, lift.cov, s.upper
    );
    let tol = 5.0 * lift.cov_std_error;
    println!(
        "contained at 5 standard errors ({tol:.2e}): {}",
        s.contains(&lift.cov, tol)
    );
    Ok(())
}
