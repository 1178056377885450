//! Configured experiments: model from TOML, filter step, bounds, distances,
//! JSON report and optional density CSV.

mod builtin;
mod config;
mod density;
mod report;
mod run;

use std::io::Write as _;
use std::path::Path;

pub use builtin::{builtin_model, BUILTIN_NAMES, UNGM_F1, UNGM_F2, UNGM_H};
pub use config::{
    BoundsSection, DensitySection, DensityVariable, EmpiricalSection, ExperimentConfig,
    ModelSection, NoiseSection, OutputSection, Overrides, PriorSection, MIN_DENSITY_BINS,
};
pub use density::{emit_density_csv, histogram, DensitySummary, Histogram};
pub use report::{GaussianSummary, JointSummary, Report, SCHEMA_VERSION};
pub use run::{evaluate, run_experiment, sample_z, sample_z_tilde, write_report};

use crate::error::{Error, Result};

/// Write through a temporary file in the target directory, then rename.
/// Missing parent directories are created.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
