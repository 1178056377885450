use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::{DensityVariable, ExperimentConfig};
use super::density::{histogram, Histogram};
use super::report::{Report, SCHEMA_VERSION};
use super::write_atomic;
use crate::bounds::BoundAnalysis;
use crate::error::{Error, Result};
use crate::filter::{joint_approx, predict, JointGaussian};
use crate::linalg::{Gaussian, SpdMatrix};
use crate::metrics::{distance_report, empirical_w1_detailed, kl_joint};
use crate::model::{lift_g, NonlinearSsm};
use crate::quadrature::QuadratureScheme;
use crate::sampling::{sample_stream, Stream};

const DEFAULT_DENSITY_SAMPLES: usize = 1_000_000;

/// `count` draws of `Z = g(X_p, U, V)`, one per row.
pub fn sample_z(model: &NonlinearSsm, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    let w = model.lifted_input().sample(count, seed)?;
    let g = lift_g(model);
    let (din, dout) = (g.in_dim(), g.out_dim());
    let wt = w.transpose();
    let mut out = vec![0.0; count * dout];
    out.par_chunks_mut(dout)
        .zip(wt.as_slice().par_chunks(din))
        .try_for_each(|(z, x)| g.eval_into(x, z))?;
    Ok(DMatrix::from_row_slice(count, dout, &out))
}

/// `count` draws of the filter's joint Gaussian, on a stream separate from
/// those used for `Z`.
pub fn sample_z_tilde(joint: &JointGaussian, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    sample_stream(&joint.to_gaussian()?, count, seed, Stream::Joint)
}

fn ensure_finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{what} is not finite ({v})")))
    }
}

struct Clock {
    start: Instant,
    timings: BTreeMap<String, f64>,
}

impl Clock {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            timings: BTreeMap::new(),
        }
    }

    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f().map_err(|e| e.in_stage(name))?;
        self.timings
            .insert(name.to_string(), t.elapsed().as_secs_f64());
        Ok(out)
    }
}

fn default_seed(scheme: &QuadratureScheme) -> u64 {
    match *scheme {
        QuadratureScheme::MonteCarlo { seed, .. } => seed,
        QuadratureScheme::GaussHermite { .. } => 1,
    }
}

fn density_histogram(
    config: &ExperimentConfig,
    model: &NonlinearSsm,
    prediction: &Gaussian,
    joint: &JointGaussian,
) -> Result<Option<(Histogram, usize)>> {
    let Some(d) = &config.output.density else {
        return Ok(None);
    };
    let count = d.samples.unwrap_or(match config.scheme {
        QuadratureScheme::MonteCarlo { samples, .. } => samples,
        QuadratureScheme::GaussHermite { .. } => DEFAULT_DENSITY_SAMPLES,
    });
    let z = sample_z(model, count, default_seed(&config.scheme))?;
    let c = d.component - 1;
    let (col, mean, var) = match d.variable {
        DensityVariable::X => (c, prediction.mean()[c], prediction.cov().matrix()[(c, c)]),
        DensityVariable::Y => (
            model.state_dim() + c,
            joint.mean_y[c],
            joint.p_y.matrix()[(c, c)],
        ),
    };
    let range = d.range.unwrap_or_else(|| {
        let sd = var.sqrt();
        [mean - 6.0 * sd, mean + 6.0 * sd]
    });
    let samples: Vec<f64> = z.column(col).iter().copied().collect();
    Ok(Some((
        histogram(&samples, d.bins, range, (mean, var))?,
        count,
    )))
}

/// Run every stage without touching the file system.
pub fn evaluate(config: &ExperimentConfig) -> Result<(Report, Option<Histogram>)> {
    let mut clock = Clock::new();
    let model = clock.stage("config", || config.build_model())?;
    let scheme = &config.scheme;
    let prediction = clock.stage("predict", || predict(&model, scheme))?;
    let joint = clock.stage("joint_approx", || joint_approx(&model, &prediction, scheme))?;
    let (analysis, bounds) = clock.stage("bounds", || {
        let analysis =
            BoundAnalysis::with_filter(&model, scheme, prediction.clone(), joint.clone())?;
        let bounds: Vec<_> = config
            .bounds
            .modes
            .iter()
            .map(|&m| analysis.report(m))
            .collect();
        for b in &bounds {
            ensure_finite("bound total", b.total)?;
            ensure_finite("poincare term", b.poincare_term)?;
            ensure_finite("gaussian gap term", b.gauss_gap_term)?;
        }
        Ok((analysis, bounds))
    })?;
    let kl = clock.stage("kl", || {
        let v = kl_joint(&joint.p_x, &joint.p_y, &joint.c_xy, model.sigma_v())?;
        ensure_finite("KL divergence", v)?;
        Ok(v)
    })?;
    let distances = clock.stage("distances", || {
        let proj = Gaussian::new(
            analysis.lift.mean.clone(),
            SpdMatrix::new(analysis.lift.cov.clone())?,
        )?;
        let r = distance_report(&proj, &joint.to_gaussian()?, Some(kl))?;
        ensure_finite("W2 distance", r.w2_exact)?;
        Ok(r)
    })?;
    let empirical = match &config.empirical {
        Some(e) => Some(clock.stage("empirical", || {
            let z = sample_z(&model, e.samples, e.seed)?;
            let zt = sample_z_tilde(&joint, e.samples, e.seed)?;
            empirical_w1_detailed(&z, &zt)
        })?),
        None => None,
    };
    let hist = clock.stage("density", || {
        density_histogram(config, &model, &prediction, &joint)
    })?;
    let density = hist.as_ref().map(|(h, count)| {
        let d = config
            .output
            .density
            .as_ref()
            .expect("histogram implies density section");
        super::density::DensitySummary {
            path: d.path.display().to_string(),
            samples: *count,
            in_range: h.in_range,
            range: [
                h.centers[0] - 0.5 * h.width,
                h.centers[h.centers.len() - 1] + 0.5 * h.width,
            ],
            bins: d.bins,
        }
    });
    let mut timings = clock.timings;
    timings.insert("total".into(), clock.start.elapsed().as_secs_f64());
    let report = Report {
        schema_version: SCHEMA_VERSION.to_string(),
        config: config.clone(),
        prediction: (&prediction).into(),
        joint: (&joint).into(),
        lifted: analysis.lift.clone(),
        bounds,
        distances,
        empirical,
        kl,
        density,
        timings,
    };
    Ok((report, hist.map(|(h, _)| h)))
}

pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    write_atomic(path, report.to_json()?.as_bytes()).map_err(|e| e.in_stage("write_report"))
}

/// Run the experiment and write the density CSV (if configured) and the
/// report. Nothing is written unless every stage succeeds.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    let (report, hist) = evaluate(config)?;
    if let (Some(h), Some(d)) = (&hist, &config.output.density) {
        write_atomic(&d.path, h.to_csv().as_bytes()).map_err(|e| e.in_stage("density"))?;
    }
    write_report(&report, &config.output.report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{builtin_model, DensitySection, EmpiricalSection};

    fn affine_config(dir: &Path) -> ExperimentConfig {
        let mut cfg = builtin_model("ungm-f2").unwrap();
        cfg.model.f = vec!["0.8*x1 + 0.1".into()];
        cfg.model.h = vec!["2*x1 - 1".into()];
        cfg.scheme = QuadratureScheme::gauss_hermite(5);
        cfg.empirical = Some(EmpiricalSection {
            samples: 512,
            seed: 3,
        });
        cfg.output.report = dir.join("affine.json");
        cfg
    }

    #[test]
    fn affine_report_vanishes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = affine_config(dir.path());
        let report = run_experiment(&cfg).unwrap();
        for b in &report.bounds {
            assert!(b.total <= 1e-6, "{b:?}");
        }
        assert!(report.kl.abs() <= 1e-9);
        assert!(report.distances.w2_exact < 1e-6);
        let back = Report::load(&cfg.output.report).unwrap();
        assert_eq!(back, report);
        assert!(report.summary().contains("as_stated"));
    }

    #[test]
    fn deterministic_modulo_timings() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = affine_config(dir.path());
        cfg.scheme = QuadratureScheme::monte_carlo(20_000, 9);
        let a = evaluate(&cfg)
            .unwrap()
            .0
            .without_timings()
            .to_json()
            .unwrap();
        let b = evaluate(&cfg)
            .unwrap()
            .0
            .without_timings()
            .to_json()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stage_errors_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = affine_config(dir.path());
        cfg.model.f = vec!["log(x1)".into()];
        cfg.scheme = QuadratureScheme::monte_carlo(5_000, 1);
        let err = run_experiment(&cfg).unwrap_err();
        assert!(err.to_string().contains("stage `predict`"), "{err}");
        assert!(!cfg.output.report.exists());
    }

    #[test]
    fn ungm_density_is_right_skewed() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = builtin_model("ungm-f1").unwrap();
        cfg.scheme = QuadratureScheme::monte_carlo(50_000, 2);
        cfg.empirical = None;
        cfg.output.report = dir.path().join("r.json");
        cfg.output.density = Some(DensitySection {
            variable: DensityVariable::Y,
            component: 1,
            bins: 60,
            range: None,
            path: dir.path().join("y.csv"),
            samples: Some(200_000),
        });
        let model = cfg.build_model().unwrap();
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.density.as_ref().unwrap().samples, 200_000);
        // Y = X^2/2 + V piles up near 0: more than half the mass lies below
        // the median (= mean) of the matched Gaussian
        let y = sample_z(&model, 200_000, 2).unwrap();
        let below = y
            .column(1)
            .iter()
            .filter(|&&v| v < report.joint.mean_y[0])
            .count();
        assert!(below as f64 / 200_000.0 > 0.5);
        let text = std::fs::read_to_string(dir.path().join("y.csv")).unwrap();
        let rows: Vec<(f64, f64)> = text
            .lines()
            .skip(1)
            .map(|l| {
                let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
                (v[0], v[1])
            })
            .collect();
        let mode = rows
            .iter()
            .cloned()
            .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a })
            .0;
        assert!(mode.abs() < 0.5, "mode at {mode}");
    }
}
