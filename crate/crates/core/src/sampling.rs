//! Reproducible Gaussian sampling.
//!
//! Draws are produced in fixed chunks of [`CHUNK`] rows. Chunk `k` of stream
//! `s` under seed `seed` comes from its own ChaCha8 stream, so any chunk can be
//! generated independently and the result never depends on the worker count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Gaussian;

pub const CHUNK: usize = 65_536;

/// Independent random streams under one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Used by [`chol_sample`] and for the prior block of lifted inputs.
    Primary = 0,
    ProcessNoise = 1,
    MeasurementNoise = 2,
    Predicted = 3,
    Joint = 4,
}

pub(crate) fn chunk_rng(seed: u64, stream: Stream, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 40) | chunk as u64);
    rng
}

pub(crate) fn chunk_count(count: usize) -> usize {
    count.div_ceil(CHUNK)
}

pub(crate) fn chunk_rows(count: usize, chunk: usize) -> usize {
    CHUNK.min(count - chunk * CHUNK)
}

/// Row-major draws of `g` for one chunk, appended to `out`.
pub(crate) fn draw_chunk(
    g: &Gaussian,
    factor: &DMatrix<f64>,
    seed: u64,
    stream: Stream,
    chunk: usize,
    rows: usize,
    out: &mut Vec<f64>,
) {
    let d = g.dim();
    let mut rng = chunk_rng(seed, stream, chunk);
    let mut z = DVector::<f64>::zeros(d);
    for _ in 0..rows {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let x = g.mean() + factor * &z;
        out.extend(x.iter());
    }
}

pub(crate) fn sample_stream(
    g: &Gaussian,
    count: usize,
    seed: u64,
    stream: Stream,
) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::Invalid("sample count must be at least 1".into()));
    }
    let factor = g.factor();
    let factor = factor.matrix();
    let d = g.dim();
    let chunks: Vec<Vec<f64>> = (0..chunk_count(count))
        .into_par_iter()
        .map(|k| {
            let rows = chunk_rows(count, k);
            let mut buf = Vec::with_capacity(rows * d);
            draw_chunk(g, factor, seed, stream, k, rows, &mut buf);
            buf
        })
        .collect();
    let flat: Vec<f64> = chunks.concat();
    Ok(DMatrix::from_row_slice(count, d, &flat))
}

/// `count x d` matrix of draws from `g`: `mean + L z` with `L` the lower
/// Cholesky factor of the covariance (symmetric square root when Cholesky
/// fails, see [`Gaussian::factor`]). A pure function of `(g, count, seed)`.
pub fn chol_sample(g: &Gaussian, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    sample_stream(g, count, seed, Stream::Primary)
}
