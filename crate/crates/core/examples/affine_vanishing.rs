//! For linear-Gaussian models the filter is exact and every bound is zero.

use certify::{
    BoundAnalysis, BoundMode, Gaussian, NonlinearSsm, QuadratureScheme, SpdMatrix, VectorFunction,
};
use nalgebra::DVector;

fn main() -> certify::Result<()> {
    let model = NonlinearSsm::new(
        VectorFunction::parse(&["0.9*x1 + 0.2*x2", "-0.1*x1 + 0.8*x2 + 1"], 2)?,
        VectorFunction::parse(&["x1 - 2*x2"], 2)?,
        SpdMatrix::from_diagonal(&[0.1, 0.2])?,
        SpdMatrix::from_diagonal(&[0.3])?,
        Gaussian::new(
            DVector::from_vec(vec![1.0, -1.0]),
            SpdMatrix::from_row_slice(2, &[1.0, 0.2, 0.2, 0.5])?,
        )?,
    )?;
    let a = BoundAnalysis::compute(&model, &QuadratureScheme::gauss_hermite(5))?;
    println!("poincare term  {:.3e}", a.poincare_term);
    println!("gap block      {:.3e}", a.gauss_gap_term);
    for mode in BoundMode::ALL {
        println!("total {:9} {:.3e}", mode.name(), a.total(mode));
    }
    Ok(())
}
