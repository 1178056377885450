use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::density::DensitySummary;
use crate::bounds::{BoundReport, LiftStatistics};
use crate::error::{Error, Result};
use crate::filter::JointGaussian;
use crate::linalg::Gaussian;
use crate::metrics::{DistanceReport, EmpiricalW1};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSummary {
    #[serde(with = "crate::serde_matrix::vector")]
    pub mean: DVector<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub cov: DMatrix<f64>,
}

impl From<&Gaussian> for GaussianSummary {
    fn from(g: &Gaussian) -> Self {
        Self {
            mean: g.mean().clone(),
            cov: g.cov().matrix().clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSummary {
    #[serde(with = "crate::serde_matrix::vector")]
    pub mean_x: DVector<f64>,
    #[serde(with = "crate::serde_matrix::vector")]
    pub mean_y: DVector<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub p_x: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub p_y: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub c_xy: DMatrix<f64>,
}

impl From<&JointGaussian> for JointSummary {
    fn from(j: &JointGaussian) -> Self {
        Self {
            mean_x: j.mean_x.clone(),
            mean_y: j.mean_y.clone(),
            p_x: j.p_x.matrix().clone(),
            p_y: j.p_y.matrix().clone(),
            c_xy: j.c_xy.clone(),
        }
    }
}

/// Output of one experiment. Everything except `timings` is a deterministic
/// function of the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub config: ExperimentConfig,
    pub prediction: GaussianSummary,
    pub joint: JointSummary,
    /// Moments of `Z = (X, Y)` from the shared draws.
    pub lifted: LiftStatistics,
    pub bounds: Vec<BoundReport>,
    /// Gaussian projection of `Z` against the filter's joint Gaussian.
    pub distances: DistanceReport,
    pub empirical: Option<EmpiricalW1>,
    pub kl: f64,
    pub density: Option<DensitySummary>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s =
            serde_json::to_string_pretty(self).map_err(|e| Error::Invalid(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Report =
            serde_json::from_str(text).map_err(|e| Error::Invalid(format!("report: {e}")))?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(Error::Invalid(format!(
                "report schema version {} is not supported (expected {SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// The report with timings cleared, for comparisons.
    pub fn without_timings(&self) -> Self {
        Self {
            timings: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let m = &self.config.model;
        let _ = writeln!(
            out,
            "model    f = [{}], h = [{}]",
            m.f.join(", "),
            m.h.join(", ")
        );
        let _ = writeln!(out, "scheme   {}", scheme_label(&self.config));
        for b in &self.bounds {
            let _ = writeln!(
                out,
                "bound    {:<10} total {:>12.6}  (poincare {:.6}, gaussian gap {:.6})",
                b.mode.name(),
                b.total,
                b.poincare_term,
                b.gauss_gap_term
            );
        }
        let _ = writeln!(
            out,
            "mean gap {:.6}",
            self.bounds.first().map_or(0.0, |b| b.mean_gap)
        );
        let _ = writeln!(out, "W2       {:.6}", self.distances.w2_exact);
        if let Some(c) = self.distances.w1_centered {
            let _ = writeln!(out, "W1 cov   {c:.6}");
        }
        if let Some(e) = &self.empirical {
            let _ = writeln!(
                out,
                "W1 emp   {:.6} +/- {:.6} (N = {})",
                e.distance, e.std_error, e.samples
            );
        }
        let _ = writeln!(out, "KL       {:.6e}", self.kl);
        if let Some(d) = &self.density {
            let _ = writeln!(
                out,
                "density  {} ({} of {} samples in range)",
                d.path, d.in_range, d.samples
            );
        }
        if let Some(t) = self.timings.get("total") {
            let _ = writeln!(out, "time     {t:.3} s");
        }
        out
    }
}

fn scheme_label(cfg: &ExperimentConfig) -> String {
    match cfg.scheme {
        crate::quadrature::QuadratureScheme::MonteCarlo { samples, seed } => {
            format!("monte_carlo, {samples} samples, seed {seed}")
        }
        crate::quadrature::QuadratureScheme::GaussHermite { order } => {
            format!("gauss_hermite, order {order}")
        }
    }
}
