use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::MIN_DENSITY_BINS;
use super::write_atomic;
use crate::error::{Error, Result};

/// Histogram density with a Gaussian overlay evaluated at the bin centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
    pub gauss_density: Vec<f64>,
    pub width: f64,
    pub in_range: usize,
}

/// What was written, recorded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub path: String,
    pub samples: usize,
    pub in_range: usize,
    pub range: [f64; 2],
    pub bins: usize,
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Densities are normalized over the samples that fall inside `range`, so
/// `sum(density) * width = 1`. `matched` is the overlay `(mean, variance)`.
pub fn histogram(
    samples: &[f64],
    bins: usize,
    range: [f64; 2],
    matched: (f64, f64),
) -> Result<Histogram> {
    let [lo, hi] = range;
    if bins < MIN_DENSITY_BINS {
        return Err(Error::Invalid(format!(
            "density needs at least {MIN_DENSITY_BINS} bins, got {bins}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Invalid(format!(
            "density range [{lo}, {hi}] is empty or not finite"
        )));
    }
    if !(matched.1 > 0.0 && matched.0.is_finite()) {
        return Err(Error::Invalid(
            "overlay Gaussian needs a positive variance".into(),
        ));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        if x >= lo && x <= hi {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    let in_range: usize = counts.iter().sum();
    if in_range == 0 {
        return Err(Error::Invalid(format!(
            "no samples fall inside [{lo}, {hi}]"
        )));
    }
    let centers: Vec<f64> = (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect();
    let density = counts
        .iter()
        .map(|&c| c as f64 / (in_range as f64 * width))
        .collect();
    let gauss_density = centers
        .iter()
        .map(|&x| normal_pdf(x, matched.0, matched.1))
        .collect();
    Ok(Histogram {
        centers,
        density,
        gauss_density,
        width,
        in_range,
    })
}

impl Histogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center,density,gauss_density\n");
        for ((c, d), g) in self
            .centers
            .iter()
            .zip(&self.density)
            .zip(&self.gauss_density)
        {
            let _ = writeln!(out, "{c},{d},{g}");
        }
        out
    }
}

/// Write the histogram of `samples` as CSV (`bin_center,density,gauss_density`).
pub fn emit_density_csv(
    samples: &[f64],
    bins: usize,
    range: [f64; 2],
    matched: (f64, f64),
    path: &Path,
) -> Result<DensitySummary> {
    let hist = histogram(samples, bins, range, matched)?;
    write_atomic(path, hist.to_csv().as_bytes())?;
    Ok(DensitySummary {
        path: path.display().to_string(),
        samples: samples.len(),
        in_range: hist.in_range,
        range,
        bins,
    })
}
