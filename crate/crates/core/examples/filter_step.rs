//! One predict / joint / update cycle, Monte Carlo against Gauss-Hermite.

use certify::{
    joint_approx, predict, update, Gaussian, NonlinearSsm, QuadratureScheme, SpdMatrix,
    VectorFunction,
};
use nalgebra::DVector;

fn main() -> certify::Result<()> {
    let model = NonlinearSsm::new(
        VectorFunction::parse(&["x1 + 0.1*x2", "x2 - 0.1*sin(x1)"], 2)?,
        VectorFunction::parse(&["atan(x2/ (1 + x1^2))"], 2)?,
        SpdMatrix::from_diagonal(&[0.01, 0.02])?,
        SpdMatrix::from_diagonal(&[0.1])?,
        Gaussian::new(
            DVector::from_vec(vec![0.5, 0.0]),
            SpdMatrix::from_diagonal(&[0.3, 0.3])?,
        )?,
    )?;
    let y = DVector::from_vec(vec![0.2]);
    for scheme in [
        QuadratureScheme::gauss_hermite(9),
        QuadratureScheme::monte_carlo(200_000, 11),
    ] {
        let pred = predict(&model, &scheme)?;
        let joint = joint_approx(&model, &pred, &scheme)?;
        let post = update(&joint, &y)?;
        println!("{scheme:?}");
        println!("  predicted mean {:.5?}", pred.mean().as_slice());
        println!(
            "  measurement    {:.5} +/- {:.5}",
            joint.mean_y[0],
            joint.p_y.matrix()[(0, 0)].sqrt()
        );
        println!("  posterior mean {:.5?}", post.mean().as_slice());
        println!("  posterior cov  {:.5?}", post.cov().matrix().as_slice());
    }
    Ok(())
}
