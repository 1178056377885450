//! Sampled 1-Wasserstein distances: sorting in 1-D, exact matching above.

use certify::{chol_sample, empirical_w1_detailed, w2_gaussian, Gaussian, SpdMatrix};
use nalgebra::DVector;
use std::time::Instant;

fn main() -> certify::Result<()> {
    for c in [0.5, 1.0, 2.0] {
        let a = chol_sample(&Gaussian::scalar(0.0, 1.0)?, 100_000, 1)?;
        let b = chol_sample(&Gaussian::scalar(c, 1.0)?, 100_000, 2)?;
        let w = empirical_w1_detailed(&a, &b)?;
        println!("1-D shift {c}: {:.4} +/- {:.1e}", w.distance, w.std_error);
    }

    let a = Gaussian::new(DVector::zeros(2), SpdMatrix::from_diagonal(&[1.0, 0.25])?)?;
    let b = Gaussian::new(
        DVector::from_vec(vec![0.5, 0.0]),
        SpdMatrix::from_diagonal(&[0.5, 0.5])?,
    )?;
    println!(
        "closed-form W2 (an upper bound on W1) = {:.4}",
        w2_gaussian(&a, &b)?
    );
    for n in [256, 1024, 2048] {
        let t = Instant::now();
        let w = empirical_w1_detailed(&chol_sample(&a, n, 3)?, &chol_sample(&b, n, 4)?)?;
        println!(
            "2-D, N = {n:4}: {:.4} +/- {:.4}  ({:.2?})",
            w.distance,
            w.std_error,
            t.elapsed()
        );
    }
    Ok(())
}
