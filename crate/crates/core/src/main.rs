use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use certify::experiment::{
    builtin_model, run_experiment, DensityVariable, ExperimentConfig, Overrides, Report,
};
use certify::BoundMode;

/// Wasserstein error bounds for moment-matched Gaussian filters.
#[derive(Parser)]
#[command(name = "certify", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run a built-in benchmark (ungm-f1, ungm-f2).
    Builtin {
        name: String,
        /// Print the built-in config as TOML instead of running it.
        #[arg(long)]
        dump_config: bool,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Show a report written by `run` or `builtin`.
    Report {
        path: PathBuf,
        /// Print the headline numbers instead of the full JSON.
        #[arg(long)]
        summary: bool,
    },
}

#[derive(Args)]
struct RunFlags {
    /// Report path (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for Monte Carlo and empirical sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// as_stated, sqrt or both.
    #[arg(long, value_parser = parse_modes)]
    mode: Option<Modes>,
    /// Write a density CSV for X or Y.
    #[arg(long, value_parser = parse_variable)]
    emit_density: Option<DensityVariable>,
    #[arg(long)]
    bins: Option<usize>,
    /// Histogram range as `lo,hi`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    range: Option<[f64; 2]>,
}

#[derive(Clone)]
struct Modes(Vec<BoundMode>);

fn parse_modes(s: &str) -> Result<Modes, String> {
    match s {
        "both" => Ok(Modes(BoundMode::ALL.to_vec())),
        _ => BoundMode::from_name(s)
            .map(|m| Modes(vec![m]))
            .ok_or_else(|| format!("unknown mode `{s}` (as_stated, sqrt, both)")),
    }
}

fn parse_variable(s: &str) -> Result<DensityVariable, String> {
    DensityVariable::from_name(s).ok_or_else(|| format!("unknown variable `{s}` (X or Y)"))
}

fn parse_range(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok([p(lo)?, p(hi)?])
}

impl RunFlags {
    fn overrides(self) -> Overrides {
        Overrides {
            seed: self.seed,
            samples: self.samples,
            modes: self.mode.map(|m| m.0),
            report: self.out,
            density_variable: self.emit_density,
            bins: self.bins,
            range: self.range,
        }
    }
}

fn execute(mut config: ExperimentConfig, flags: RunFlags) -> certify::Result<()> {
    config.apply(&flags.overrides())?;
    let report = run_experiment(&config)?;
    print!("{}", report.summary());
    println!("report   {}", config.output.report.display());
    Ok(())
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("CERTIFY_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("CERTIFY_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Run { config, flags } => {
            ExperimentConfig::load(&config).and_then(|c| execute(c, flags))
        }
        Command::Builtin {
            name,
            dump_config,
            flags,
        } => builtin_model(&name).and_then(|mut c| {
            if dump_config {
                c.apply(&flags.overrides())?;
                print!("{}", c.to_toml()?);
                Ok(())
            } else {
                execute(c, flags)
            }
        }),
        Command::Report { path, summary } => Report::load(&path).and_then(|r| {
            if summary {
                print!("{}", r.summary());
            } else {
                print!("{}", r.to_json()?);
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
