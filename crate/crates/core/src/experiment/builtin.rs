use std::path::PathBuf;

use super::config::{
    BoundsSection, EmpiricalSection, ExperimentConfig, ModelSection, NoiseSection, OutputSection,
    PriorSection,
};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureScheme;

pub const BUILTIN_NAMES: [&str; 2] = ["ungm-f1", "ungm-f2"];

pub const UNGM_F1: &str = "x1 + (1 + x1)/(2*(1 + x1^4))";
pub const UNGM_F2: &str = "x1 + x1/(2*(1 + x1^2))";
pub const UNGM_H: &str = "x1^2/2";

/// Scalar growth model with quadratic measurement, `U, V ~ N(0, 0.05)`,
/// prior `N(0.2, 1)`, Monte Carlo with 10^6 samples.
pub fn builtin_model(name: &str) -> Result<ExperimentConfig> {
    let f = match name {
        "ungm-f1" => UNGM_F1,
        "ungm-f2" => UNGM_F2,
        _ => {
            return Err(Error::UnknownBuiltin {
                name: name.to_string(),
                available: BUILTIN_NAMES.join(", "),
            })
        }
    };
    Ok(ExperimentConfig {
        model: ModelSection {
            state_dim: 1,
            meas_dim: 1,
            f: vec![f.to_string()],
            h: vec![UNGM_H.to_string()],
        },
        prior: PriorSection {
            mean: vec![0.2],
            cov: vec![1.0],
        },
        noise: NoiseSection {
            process_cov: vec![0.05],
            measurement_cov: vec![0.05],
        },
        scheme: QuadratureScheme::monte_carlo(1_000_000, 1),
        bounds: BoundsSection::default(),
        empirical: Some(EmpiricalSection {
            samples: 4096,
            seed: 1,
        }),
        output: OutputSection {
            report: PathBuf::from(format!("{name}-report.json")),
            density: None,
        },
    })
}
