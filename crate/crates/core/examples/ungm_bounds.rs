use std::time::Instant;

use certify::{
    BoundAnalysis, BoundMode, Gaussian, NonlinearSsm, QuadratureScheme, SpdMatrix, VectorFunction,
};

fn main() -> certify::Result<()> {
    for (name, f) in [
        ("f1", "x1 + (1 + x1)/(2*(1 + x1^4))"),
        ("f2", "x1 + x1/(2*(1 + x1^2))"),
    ] {
        let model = NonlinearSsm::new(
            VectorFunction::parse(&[f], 1)?,
            VectorFunction::parse(&["x1^2/2"], 1)?,
            SpdMatrix::from_diagonal(&[0.05])?,
            SpdMatrix::from_diagonal(&[0.05])?,
            Gaussian::scalar(0.2, 1.0)?,
        )?;
        for seed in [1, 2] {
            let t = Instant::now();
            let a =
                BoundAnalysis::compute(&model, &QuadratureScheme::monte_carlo(1_000_000, seed))?;
            println!(
                "{name} seed {seed}: poincare {:.3} gap {:.4} total {:.3} sqrt {:.3} ({:.2?})",
                a.poincare_term,
                a.gauss_gap_term,
                a.total(BoundMode::AsStated),
                a.total(BoundMode::SqrtSecondTerm),
                t.elapsed()
            );
        }
    }
    Ok(())
}
