//! Load a TOML experiment, override a few settings and write the report
//! plus a density CSV into a scratch directory.

use certify::experiment::{DensityVariable, Overrides};
use certify::{run_experiment, BoundMode, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/pendulum-demo.toml"
    );
    let mut config = ExperimentConfig::load(path.as_ref())?;
    let dir = tempfile::tempdir()?;
    config.apply(&Overrides {
        samples: Some(50_000),
        modes: Some(vec![BoundMode::AsStated, BoundMode::SqrtSecondTerm]),
        report: Some(dir.path().join("pendulum.json")),
        density_variable: Some(DensityVariable::X),
        bins: Some(40),
        ..Overrides::default()
    })?;
    if let Some(density) = config.output.density.as_mut() {
        density.path = dir.path().join("pendulum-x.csv");
    }
    let report = run_experiment(&config)?;
    print!("{}", report.summary());
    for entry in std::fs::read_dir(dir.path())? {
        let entry = entry?;
        println!(
            "wrote {} ({} bytes)",
            entry.file_name().to_string_lossy(),
            entry.metadata()?.len()
        );
    }
    Ok(())
}
