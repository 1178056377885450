//! Parse a model expression and read off exact first and second derivatives.

use certify::{composite_q, jf_aug, Gaussian, NonlinearSsm, SpdMatrix, VectorFunction};

fn main() -> certify::Result<()> {
    let f = VectorFunction::parse(&["x1 + (1 + x1)/(2*(1 + x1^4))"], 1)?;
    for x in [-1.0, 0.0, 0.5, 2.0] {
        let d = &f.eval_dual2(&[x])?[0];
        println!(
            "f({x:5.2}) = {:9.5}  f' = {:9.5}  f'' = {:9.5}",
            d.value(),
            d.gradient()[0],
            d.hess(0, 0)
        );
    }

    let g = VectorFunction::parse(&["sin(x1)*x2", "exp(-x1^2) + x2^2"], 2)?;
    println!("\nJacobian of {:?} at (0.3, -1.2):", g.sources());
    println!("{}", g.jacobian(&[0.3, -1.2])?);

    let model = NonlinearSsm::new(
        f,
        VectorFunction::parse(&["x1^2/2"], 1)?,
        SpdMatrix::from_diagonal(&[0.05])?,
        SpdMatrix::from_diagonal(&[0.05])?,
        Gaussian::scalar(0.2, 1.0)?,
    )?;
    let q = composite_q(&model);
    println!("q(x1, x2) = h(f(x1) + x2) = {:?}", q.sources());
    println!("q(0.2, 0.1) = {:.6}", q.eval_value(&[0.2, 0.1])?[0]);
    println!(
        "augmented Jacobian at x1 = 0.2:\n{}",
        jf_aug(&model, &[0.2])?
    );
    Ok(())
}
