//! Moment-matched Gaussian filtering for nonlinear state-space models, with
//! Poincaré-type Wasserstein error bounds for the Gaussian approximation.

pub mod assignment;
pub mod bounds;
pub mod error;
pub mod experiment;
pub mod expr;
pub mod filter;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod quadrature;
pub mod sampling;
mod serde_matrix;

pub use bounds::{
    covariance_sandwich, dw_z_prz_bound, joint_wasserstein_bound, l4prime_norms, lift_statistics,
    poincare_sandwich, second_poincare_bound, BoundAnalysis, BoundMode, BoundReport, CovSandwich,
    L4Primes, LiftStatistics, VarianceSandwich,
};
pub use error::{Error, Result};
pub use experiment::{builtin_model, run_experiment, ExperimentConfig, Report};
pub use expr::{parse_expr, Dual2, ExprAst, VectorFunction};
pub use filter::{gauss_expect, joint_approx, predict, project_gaussian, update, JointGaussian};
pub use linalg::{Gaussian, SpdMatrix};
pub use metrics::{
    distance_report, empirical_w1, empirical_w1_detailed, kl_joint, w1_centered_bound, w1_upper_w2,
    w2_gaussian, DistanceReport, EmpiricalW1,
};
pub use model::{composite_q, jf_aug, lift_g, LiftedInput, NonlinearSsm};
pub use quadrature::QuadratureScheme;
pub use sampling::chol_sample;
