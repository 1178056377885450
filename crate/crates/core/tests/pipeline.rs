//! Library-level checks across filter, bounds and the experiment runner.

mod common;

use certify::experiment::{sample_z, DensitySection, DensityVariable, Overrides};
use certify::{builtin_model, joint_approx, predict, run_experiment, QuadratureScheme, Report};
use common::{ungm_f1, ungm_f2};
use nalgebra::DVector;
use serde_json::Value;

fn mean_var_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64, f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in xs {
        let d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    let (var, m4) = (m2 / n, m4 / n);
    (mean, var, (var / n).sqrt(), ((m4 - var * var) / n).sqrt())
}

#[test]
fn matched_measurement_differs_from_true_measurement() {
    // Y~ is built from the Gaussian projection of X, so its variance misses
    // the skew of f1(X) that Y inherits
    let model = ungm_f1();
    let scheme = QuadratureScheme::gauss_hermite(20);
    let pred = predict(&model, &scheme).unwrap();
    let joint = joint_approx(&model, &pred, &scheme).unwrap();
    let z = sample_z(&model, 1_000_000, 3).unwrap();
    let (_, var, _, var_se) = mean_var_se(z.column(1).iter().copied());
    let p_y = joint.p_y.matrix()[(0, 0)];
    assert!(
        (var - p_y).abs() > 5.0 * var_se,
        "var {var} vs {p_y} (se {var_se})"
    );
    // X is matched exactly
    let (xm, xv, xm_se, xv_se) = mean_var_se(z.column(0).iter().copied());
    assert!((xm - joint.mean_x[0]).abs() < 5.0 * xm_se);
    assert!((xv - joint.p_x.matrix()[(0, 0)]).abs() < 5.0 * xv_se);
}

#[test]
fn quadrature_and_sampling_agree_on_prediction() {
    for model in [ungm_f1(), ungm_f2()] {
        let gh = predict(&model, &QuadratureScheme::gauss_hermite(20)).unwrap();
        let mc = predict(&model, &QuadratureScheme::monte_carlo(1_000_000, 11)).unwrap();
        let var = gh.cov().matrix()[(0, 0)];
        let se = (var / 1e6).sqrt();
        assert!((gh.mean()[0] - mc.mean()[0]).abs() < 5.0 * se);
        // about seven standard errors for a near-Gaussian sample
        assert!((var - mc.cov().matrix()[(0, 0)]).abs() < 0.01 * var);
    }
}

// optional fields (e.g. the centered bound when means differ) may be null
fn all_finite(v: &Value) -> bool {
    match v {
        Value::Number(n) => n.as_f64().is_some_and(f64::is_finite),
        Value::Array(a) => a.iter().all(all_finite),
        Value::Object(o) => o.values().all(all_finite),
        _ => true,
    }
}

#[test]
fn experiment_writes_report_and_density() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = builtin_model("ungm-f2").unwrap();
    config
        .apply(&Overrides {
            samples: Some(50_000),
            report: Some(dir.path().join("out/report.json")),
            ..Default::default()
        })
        .unwrap();
    config.output.density = Some(DensitySection {
        variable: DensityVariable::X,
        component: 1,
        bins: 40,
        range: None,
        path: dir.path().join("out/density.csv"),
        samples: Some(20_000),
    });
    config.empirical.as_mut().unwrap().samples = 256;

    let report = run_experiment(&config).unwrap();
    let loaded = Report::load(&config.output.report).unwrap();
    assert_eq!(loaded, report);
    assert_eq!(
        Report::from_json(&report.to_json().unwrap()).unwrap(),
        report
    );

    let csv = std::fs::read_to_string(dir.path().join("out/density.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
    let d = report.density.as_ref().unwrap();
    assert_eq!((d.samples, d.bins), (20_000, 40));

    let json: Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    assert!(all_finite(&json), "{json}");
    assert!(report.bounds.iter().all(|b| b.total >= 0.0));
    assert!(report.kl >= 0.0);
    assert_eq!(
        report.prediction.mean,
        DVector::from_vec(vec![report.joint.mean_x[0]])
    );
}
