use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::BoundMode;
use crate::error::{Error, Result};
use crate::expr::VectorFunction;
use crate::linalg::{Gaussian, SpdMatrix};
use crate::model::NonlinearSsm;
use crate::quadrature::QuadratureScheme;

pub const MIN_DENSITY_BINS: usize = 10;

/// Experiment description, read from and written to TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub prior: PriorSection,
    pub noise: NoiseSection,
    pub scheme: QuadratureScheme,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical: Option<EmpiricalSection>,
    pub output: OutputSection,
}

/// Expressions use variables `x1..xn`; `f` has `state_dim` components and
/// `h` has `meas_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub state_dim: usize,
    pub meas_dim: usize,
    pub f: Vec<String>,
    pub h: Vec<String>,
}

/// Covariances are row-major lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub process_cov: Vec<f64>,
    pub measurement_cov: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub modes: Vec<BoundMode>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            modes: BoundMode::ALL.to_vec(),
        }
    }
}

/// Sampled W1 between `Z` and the Gaussian approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpiricalSection {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub report: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensitySection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityVariable {
    X,
    Y,
}

impl DensityVariable {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "X" | "x" => Some(DensityVariable::X),
            "Y" | "y" => Some(DensityVariable::Y),
            _ => None,
        }
    }
}

/// Histogram of one component of `X` or `Y`. Without `range` the histogram
/// spans six standard deviations of the matched Gaussian on either side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySection {
    pub variable: DensityVariable,
    /// 1-based component index.
    #[serde(default = "first_component")]
    pub component: usize,
    pub bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

fn first_component() -> usize {
    1
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn square(data: &[f64], d: usize, what: &str) -> Result<SpdMatrix> {
    if data.len() != d * d {
        return Err(config_err(format!(
            "{what}: expected {} row-major entries, got {}",
            d * d,
            data.len()
        )));
    }
    SpdMatrix::new(DMatrix::from_row_slice(d, d, data))
        .map_err(|e| config_err(format!("{what}: {e}")))
}

fn functions(sources: &[String], dim: usize, in_dim: usize, what: &str) -> Result<VectorFunction> {
    if sources.len() != dim {
        return Err(config_err(format!(
            "model.{what}: expected {dim} expressions, got {}",
            sources.len()
        )));
    }
    let mut comps = Vec::with_capacity(dim);
    for (i, s) in sources.iter().enumerate() {
        let ast = crate::expr::parse_expr(s, in_dim)
            .map_err(|e| config_err(format!("model.{what}[{}] `{s}`: {e}", i + 1)))?;
        comps.push(ast);
    }
    VectorFunction::new(comps).ok_or_else(|| config_err(format!("model.{what} is empty")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    /// Checks that do not need the model built.
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.model.state_dim, self.model.meas_dim);
        if n == 0 || m == 0 {
            return Err(config_err(
                "model.state_dim and model.meas_dim must be at least 1",
            ));
        }
        // the bound pass integrates over (X_p, U)
        self.scheme.validate(2 * n)?;
        if self.bounds.modes.is_empty() {
            return Err(config_err("bounds.modes must list at least one mode"));
        }
        if let Some(e) = &self.empirical {
            if e.samples < 2 || e.samples > crate::metrics::MAX_ASSIGNMENT_SAMPLES {
                return Err(config_err(format!(
                    "empirical.samples must be in 2..={}, got {}",
                    crate::metrics::MAX_ASSIGNMENT_SAMPLES,
                    e.samples
                )));
            }
        }
        if let Some(d) = &self.output.density {
            if d.bins < MIN_DENSITY_BINS {
                return Err(config_err(format!(
                    "output.density.bins must be at least {MIN_DENSITY_BINS}, got {}",
                    d.bins
                )));
            }
            let dim = match d.variable {
                DensityVariable::X => n,
                DensityVariable::Y => m,
            };
            if d.component == 0 || d.component > dim {
                return Err(config_err(format!(
                    "output.density.component must be in 1..={dim}, got {}",
                    d.component
                )));
            }
            if let Some([lo, hi]) = d.range {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(config_err(format!(
                        "output.density.range [{lo}, {hi}] is empty or not finite"
                    )));
                }
            }
            if d.samples == Some(0) {
                return Err(config_err("output.density.samples must be positive"));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<NonlinearSsm> {
        self.validate()?;
        let (n, m) = (self.model.state_dim, self.model.meas_dim);
        let f = functions(&self.model.f, n, n, "f")?;
        let h = functions(&self.model.h, m, n, "h")?;
        if self.prior.mean.len() != n {
            return Err(config_err(format!(
                "prior.mean: expected {n} entries, got {}",
                self.prior.mean.len()
            )));
        }
        let prior = Gaussian::new(
            DVector::from_column_slice(&self.prior.mean),
            square(&self.prior.cov, n, "prior.cov")?,
        )?;
        let sigma_u = square(&self.noise.process_cov, n, "noise.process_cov")?;
        let sigma_v = square(&self.noise.measurement_cov, m, "noise.measurement_cov")?;
        NonlinearSsm::new(f, h, sigma_u, sigma_v, prior).map_err(|e| config_err(e.to_string()))
    }
}


/// Command-line adjustments applied on top of a loaded configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub modes: Option<Vec<BoundMode>>,
    pub report: Option<PathBuf>,
    pub density_variable: Option<DensityVariable>,
    pub bins: Option<usize>,
    pub range: Option<[f64; 2]>,
}

impl ExperimentConfig {
    /// `seed` replaces the Monte Carlo seed and the empirical seed; `samples`
    /// requires a Monte Carlo scheme. Density flags create the density
    /// section when it is missing, written next to the report.
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(report) = &o.report {
            self.output.report = report.clone();
        }
        if let Some(s) = o.seed {
            if let QuadratureScheme::MonteCarlo { seed, .. } = &mut self.scheme {
                *seed = s;
            }
            if let Some(e) = &mut self.empirical {
                e.seed = s;
            }
        }
        if let Some(n) = o.samples {
            match &mut self.scheme {
                QuadratureScheme::MonteCarlo { samples, .. } => *samples = n,
                QuadratureScheme::GaussHermite { .. } => {
                    return Err(config_err("--samples needs a monte_carlo scheme"));
                }
            }
        }
        if let Some(modes) = &o.modes {
            self.bounds.modes = modes.clone();
        }
        if o.density_variable.is_some() || o.bins.is_some() || o.range.is_some() {
            let density = match self.output.density.take() {
                Some(d) => d,
                None => {
                    let variable = o.density_variable.ok_or_else(|| {
                        config_err(
                            "--bins and --range need --emit-density or an [output.density] section",
                        )
                    })?;
                    let stem = self.output.report.with_extension("");
                    let name = format!(
                        "{}-density-{}.csv",
                        stem.file_name()
                            .map_or("report".into(), |s| s.to_string_lossy()),
                        if variable == DensityVariable::X {
                            "X"
                        } else {
                            "Y"
                        }
                    );
                    DensitySection {
                        variable,
                        component: 1,
                        bins: 100,
                        range: None,
                        path: stem.with_file_name(name),
                        samples: None,
                    }
                }
            };
            self.output.density = Some(DensitySection {
                variable: o.density_variable.unwrap_or(density.variable),
                bins: o.bins.unwrap_or(density.bins),
                range: o.range.or(density.range),
                ..density
            });
        }
        self.validate()
    }
}

#[cfg(test)]
mod override_tests {
    use super::*;
    use crate::experiment::builtin_model;

    #[test]
    fn overrides_apply() {
        let mut cfg = builtin_model("ungm-f2").unwrap();
        cfg.apply(&Overrides {
            seed: Some(7),
            samples: Some(5000),
            modes: Some(vec![BoundMode::SqrtSecondTerm]),
            report: Some(PathBuf::from("out/r.json")),
            density_variable: Some(DensityVariable::Y),
            bins: Some(40),
            range: Some([-1.0, 4.0]),
        })
        .unwrap();
        assert_eq!(cfg.scheme, QuadratureScheme::monte_carlo(5000, 7));
        assert_eq!(cfg.empirical.as_ref().unwrap().seed, 7);
        assert_eq!(cfg.bounds.modes, vec![BoundMode::SqrtSecondTerm]);
        let d = cfg.output.density.unwrap();
        assert_eq!(d.path, PathBuf::from("out/r-density-Y.csv"));
        assert_eq!((d.bins, d.range), (40, Some([-1.0, 4.0])));
    }

    #[test]
    fn override_errors() {
        let mut cfg = builtin_model("ungm-f2").unwrap();
        cfg.scheme = QuadratureScheme::gauss_hermite(10);
        assert!(cfg
            .clone()
            .apply(&Overrides {
                samples: Some(5000),
                ..Default::default()
            })
            .is_err());
        assert!(cfg
            .clone()
            .apply(&Overrides {
                bins: Some(50),
                ..Default::default()
            })
            .is_err());
        let bad_bins = Overrides {
            density_variable: Some(DensityVariable::X),
            bins: Some(3),
            ..Default::default()
        };
        assert!(cfg.apply(&bad_bins).is_err());
    }
}
