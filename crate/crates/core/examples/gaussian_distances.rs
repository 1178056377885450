//! Closed-form distances between Gaussians and the KL term of a joint step.

use certify::{distance_report, kl_joint, w1_centered_bound, w2_gaussian, Gaussian, SpdMatrix};
use nalgebra::{DMatrix, DVector};

fn main() -> certify::Result<()> {
    let a = Gaussian::new(
        DVector::zeros(2),
        SpdMatrix::from_row_slice(2, &[1.0, 0.3, 0.3, 0.5])?,
    )?;
    let b = Gaussian::new(DVector::zeros(2), SpdMatrix::from_diagonal(&[2.0, 0.4])?)?;
    println!("W2(a, b)             = {:.6}", w2_gaussian(&a, &b)?);
    println!("centered W1 bound    = {:.6}", w1_centered_bound(&a, &b)?);

    let shifted = Gaussian::new(DVector::from_vec(vec![1.0, -0.5]), b.cov().clone())?;
    let r = distance_report(&a, &shifted, None)?;
    println!(
        "shifted pair: W2 = {:.6}, centered bound {:?}",
        r.w2_exact, r.w1_centered
    );

    // state covariance, measurement covariance, cross-covariance, noise
    let p_x = SpdMatrix::from_diagonal(&[1.0])?;
    let cov_y = SpdMatrix::from_diagonal(&[0.9])?;
    let c_xy = DMatrix::from_element(1, 1, 0.4);
    let sigma_v = SpdMatrix::from_diagonal(&[0.05])?;
    println!(
        "KL of the joint step = {:.6}",
        kl_joint(&p_x, &cov_y, &c_xy, &sigma_v)?
    );
    Ok(())
}
