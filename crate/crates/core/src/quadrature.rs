//! Gaussian expectations by Monte Carlo or tensor-product Gauss–Hermite.
//!
//! Every expectation in the crate goes through [`integrate`]: the integrand
//! visits weighted nodes chunk by chunk, each chunk folds into its own
//! accumulator, and the accumulators are merged in ascending chunk order.
//! Results are therefore identical for any number of worker threads.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Gaussian;
use crate::sampling::{chunk_count, chunk_rows, draw_chunk, Stream, CHUNK};

pub const MIN_MC_SAMPLES: usize = 1000;
pub const MAX_GH_ORDER: usize = 20;
/// Upper limit on the number of tensor-grid nodes.
pub const MAX_GH_NODES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuadratureScheme {
    MonteCarlo { samples: usize, seed: u64 },
    GaussHermite { order: usize },
}

impl QuadratureScheme {
    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        QuadratureScheme::MonteCarlo { samples, seed }
    }

    pub fn gauss_hermite(order: usize) -> Self {
        QuadratureScheme::GaussHermite { order }
    }

    /// Check the scheme can integrate over a `dim`-dimensional Gaussian.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            QuadratureScheme::MonteCarlo { samples, .. } if samples < MIN_MC_SAMPLES => {
                Err(Error::Scheme(format!(
                    "Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}"
                )))
            }
            QuadratureScheme::MonteCarlo { .. } => Ok(()),
            QuadratureScheme::GaussHermite { order } => {
                if !(1..=MAX_GH_ORDER).contains(&order) {
                    return Err(Error::Scheme(format!(
                        "Gauss-Hermite order must be in 1..={MAX_GH_ORDER}, got {order}"
                    )));
                }
                let nodes = (order as f64).powi(dim as i32);
                if nodes > MAX_GH_NODES as f64 {
                    return Err(Error::Scheme(format!(
                        "Gauss-Hermite order {order} in dimension {dim} needs {nodes} nodes \
                         (limit {MAX_GH_NODES}); lower the order or use monte_carlo"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, QuadratureScheme::MonteCarlo { .. })
    }
}

/// Probabilists' Gauss–Hermite rule: nodes and weights for `E[p(Z)]`,
/// `Z ~ N(0, 1)`, exact for polynomials of degree `2 * order - 1`.
///
/// Golub–Welsch: nodes are the eigenvalues of the symmetric Jacobi matrix with
/// off-diagonal `sqrt(k)`, weights the squared first eigenvector components.
/// Nodes are then polished by Newton steps on the normalized Hermite
/// polynomial and weights recomputed from the Christoffel formula.
pub fn hermite_rule(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for p in pairs.iter_mut() {
        for _ in 0..3 {
            let (h, dh, _) = normalized_hermite(order, p.0);
            if dh == 0.0 {
                break;
            }
            p.0 -= h / dh;
        }
        let (_, _, christoffel) = normalized_hermite(order, p.0);
        p.1 = 1.0 / christoffel;
    }
    // symmetrize against round-off: the exact rule is symmetric about 0
    let n = pairs.len();
    for i in 0..n / 2 {
        let x = 0.5 * (pairs[n - 1 - i].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[n - 1 - i].1);
        pairs[i] = (-x, w);
        pairs[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(x, w)| (x, w / total)).unzip()
}

/// `(p_n(x), p_n'(x), sum_{k<n} p_k(x)^2)` for the orthonormal Hermite
/// polynomials `p_k = He_k / sqrt(k!)`.
fn normalized_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut sum_sq = 0.0;
    for k in 0..n {
        sum_sq += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    // p_n' = sqrt(n) p_{n-1}
    (cur, (n as f64).sqrt() * prev, sum_sq)
}

/// Accumulator state that can absorb another chunk's state.
pub(crate) trait Merge {
    fn merge(&mut self, other: Self);
}

/// One independently drawn block of the integration variable.
pub(crate) struct Block<'a> {
    pub gaussian: &'a Gaussian,
    pub stream: Stream,
}

/// How totals normalize into expectations and covariances.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Weighting {
    pub total: f64,
    /// Bessel correction (`N - 1`) for Monte Carlo covariances.
    pub unbiased: bool,
}

impl Weighting {
    pub fn cov_divisor(&self) -> f64 {
        if self.unbiased {
            self.total - 1.0
        } else {
            self.total
        }
    }
}

/// Integrate over the concatenation of independent Gaussian `blocks`.
///
/// `visit(acc, point, weight)` is called once per node. Errors from `visit`
/// abort the whole pass.
pub(crate) fn integrate<A, I, V>(
    scheme: &QuadratureScheme,
    blocks: &[Block<'_>],
    init: I,
    visit: V,
) -> Result<(A, Weighting)>
where
    A: Merge + Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, &[f64], f64) -> Result<()> + Sync,
{
    let dim: usize = blocks.iter().map(|b| b.gaussian.dim()).sum();
    scheme.validate(dim)?;
    match *scheme {
        QuadratureScheme::MonteCarlo { samples, seed } => {
            let factors: Vec<DMatrix<f64>> = blocks
                .iter()
                .map(|b| b.gaussian.factor().matrix().clone())
                .collect();
            let parts: Vec<A> = (0..chunk_count(samples))
                .into_par_iter()
                .map(|k| {
                    let rows = chunk_rows(samples, k);
                    let draws: Vec<Vec<f64>> = blocks
                        .iter()
                        .zip(&factors)
                        .map(|(b, f)| {
                            let mut buf = Vec::with_capacity(rows * b.gaussian.dim());
                            draw_chunk(b.gaussian, f, seed, b.stream, k, rows, &mut buf);
                            buf
                        })
                        .collect();
                    let mut acc = init();
                    let mut point = vec![0.0; dim];
                    for r in 0..rows {
                        let mut at = 0;
                        for (b, d) in blocks.iter().zip(&draws) {
                            let w = b.gaussian.dim();
                            point[at..at + w].copy_from_slice(&d[r * w..(r + 1) * w]);
                            at += w;
                        }
                        visit(&mut acc, &point, 1.0)?;
                    }
                    Ok(acc)
                })
                .collect::<Result<Vec<A>>>()?;
            let acc = fold(parts, init);
            Ok((
                acc,
                Weighting {
                    total: samples as f64,
                    unbiased: true,
                },
            ))
        }
        QuadratureScheme::GaussHermite { order } => {
            let parts: Vec<&Gaussian> = blocks.iter().map(|b| b.gaussian).collect();
            let joint = Gaussian::independent(&parts);
            let factor = joint.factor().matrix().clone();
            let (nodes, weights) = hermite_rule(order);
            let total_nodes = order.pow(dim as u32);
            let parts: Vec<A> = (0..chunk_count(total_nodes))
                .into_par_iter()
                .map(|k| {
                    let mut acc = init();
                    let mut z = DVector::<f64>::zeros(dim);
                    let start = k * CHUNK;
                    for idx in start..start + chunk_rows(total_nodes, k) {
                        let mut rest = idx;
                        let mut w = 1.0;
                        for zi in z.iter_mut() {
                            let j = rest % order;
                            rest /= order;
                            *zi = nodes[j];
                            w *= weights[j];
                        }
                        let x = joint.mean() + &factor * &z;
                        visit(&mut acc, x.as_slice(), w)?;
                    }
                    Ok(acc)
                })
                .collect::<Result<Vec<A>>>()?;
            let acc = fold(parts, init);
            Ok((
                acc,
                Weighting {
                    total: 1.0,
                    unbiased: false,
                },
            ))
        }
    }
}

fn fold<A: Merge, I: Fn() -> A>(parts: Vec<A>, init: I) -> A {
    let mut it = parts.into_iter();
    let mut acc = it.next().unwrap_or_else(init);
    for p in it {
        acc.merge(p);
    }
    acc
}

/// Weighted running mean and scatter matrix (Welford, merged with Chan's
/// pairwise update).
#[derive(Debug, Clone)]
pub(crate) struct MomentAcc {
    pub weight: f64,
    pub mean: Vec<f64>,
    // full d x d, row-major
    pub scatter: Vec<f64>,
}

impl MomentAcc {
    pub fn new(d: usize) -> Self {
        Self {
            weight: 0.0,
            mean: vec![0.0; d],
            scatter: vec![0.0; d * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64], w: f64) {
        let d = self.dim();
        let prev = self.weight;
        self.weight += w;
        if self.weight == 0.0 {
            return;
        }
        let scale = w * prev / self.weight;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for i in 0..d {
            self.mean[i] += delta[i] * w / self.weight;
        }
        for i in 0..d {
            for j in 0..d {
                self.scatter[i * d + j] += scale * delta[i] * delta[j];
            }
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    pub fn cov(&self, weighting: &Weighting) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.scatter) / weighting.cov_divisor()
    }
}

impl Merge for MomentAcc {
    fn merge(&mut self, other: Self) {
        if other.weight == 0.0 {
            return;
        }
        if self.weight == 0.0 {
            *self = other;
            return;
        }
        let d = self.dim();
        let total = self.weight + other.weight;
        let delta: Vec<f64> = other
            .mean
            .iter()
            .zip(&self.mean)
            .map(|(b, a)| b - a)
            .collect();
        let scale = self.weight * other.weight / total;
        for i in 0..d {
            for j in 0..d {
                self.scatter[i * d + j] += other.scatter[i * d + j] + scale * delta[i] * delta[j];
            }
        }
        for i in 0..d {
            self.mean[i] += delta[i] * other.weight / total;
        }
        self.weight = total;
    }
}

/// Weighted sums of a fixed-length vector of scalar integrands, with
/// Neumaier compensation so that large grids sum to near machine precision.
#[derive(Debug, Clone)]
pub(crate) struct SumAcc {
    weight: [f64; 2],
    sums: Vec<f64>,
    comp: Vec<f64>,
}

fn compensated_add(sum: &mut f64, comp: &mut f64, v: f64) {
    let t = *sum + v;
    if sum.abs() >= v.abs() {
        *comp += (*sum - t) + v;
    } else {
        *comp += (v - t) + *sum;
    }
    *sum = t;
}

impl SumAcc {
    pub fn new(len: usize) -> Self {
        Self {
            weight: [0.0; 2],
            sums: vec![0.0; len],
            comp: vec![0.0; len],
        }
    }

    pub fn add_weight(&mut self, w: f64) {
        let [s, c] = &mut self.weight;
        compensated_add(s, c, w);
    }

    pub fn add(&mut self, i: usize, v: f64) {
        compensated_add(&mut self.sums[i], &mut self.comp[i], v);
    }

    pub fn means(&self) -> Vec<f64> {
        let w = self.weight[0] + self.weight[1];
        self.sums
            .iter()
            .zip(&self.comp)
            .map(|(s, c)| (s + c) / w)
            .collect()
    }
}

impl Merge for SumAcc {
    fn merge(&mut self, other: Self) {
        let [s, c] = &mut self.weight;
        compensated_add(s, c, other.weight[0]);
        *c += other.weight[1];
        for i in 0..self.sums.len() {
            compensated_add(&mut self.sums[i], &mut self.comp[i], other.sums[i]);
            self.comp[i] += other.comp[i];
        }
    }
}

impl<A: Merge, B: Merge> Merge for (A, B) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdMatrix;

    fn gaussian_moment(k: u32) -> f64 {
        // E[Z^k] = (k-1)!! for even k
        if k % 2 == 1 {
            return 0.0;
        }
        (1..k).step_by(2).map(|v| v as f64).product()
    }

    #[test]
    fn hermite_rule_integrates_polynomials_exactly() {
        for order in 1..=MAX_GH_ORDER {
            let (x, w) = hermite_rule(order);
            for k in 0..(2 * order as u32) {
                let q: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(xi, wi)| wi * xi.powi(k as i32))
                    .sum();
                let exact = gaussian_moment(k);
                // odd moments cancel terms of size E|Z|^k
                let scale = gaussian_moment(k + k % 2).max(1.0);
                assert!(
                    (q - exact).abs() <= 1e-11 * scale,
                    "order {order} moment {k}: {q} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn scheme_validation() {
        assert!(QuadratureScheme::monte_carlo(999, 1).validate(3).is_err());
        assert!(QuadratureScheme::monte_carlo(1000, 1).validate(30).is_ok());
        assert!(QuadratureScheme::gauss_hermite(0).validate(1).is_err());
        assert!(QuadratureScheme::gauss_hermite(21).validate(1).is_err());
        assert!(QuadratureScheme::gauss_hermite(5).validate(6).is_ok());
        assert!(QuadratureScheme::gauss_hermite(20).validate(5).is_err());
    }

    #[test]
    fn moment_acc_merge_matches_single_pass() {
        let xs: Vec<[f64; 2]> = (0..100)
            .map(|i| {
                let t = i as f64;
                [t.sin() * 3.0, (t * 0.37).cos() + t * 0.01]
            })
            .collect();
        let mut whole = MomentAcc::new(2);
        for x in &xs {
            whole.push(x, 1.0);
        }
        let mut a = MomentAcc::new(2);
        let mut b = MomentAcc::new(2);
        for x in &xs[..37] {
            a.push(x, 1.0);
        }
        for x in &xs[37..] {
            b.push(x, 1.0);
        }
        a.merge(b);
        for i in 0..2 {
            assert!((a.mean[i] - whole.mean[i]).abs() < 1e-13);
        }
        for i in 0..4 {
            assert!((a.scatter[i] - whole.scatter[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn integrate_gh_second_moment() {
        let g = Gaussian::new(
            DVector::from_vec(vec![1.0, -2.0]),
            SpdMatrix::from_row_slice(2, &[2.0, 0.3, 0.3, 1.0]).unwrap(),
        )
        .unwrap();
        let blocks = [Block {
            gaussian: &g,
            stream: Stream::Primary,
        }];
        let (acc, wt) = integrate(
            &QuadratureScheme::gauss_hermite(3),
            &blocks,
            || MomentAcc::new(2),
            |acc, x, w| {
                acc.push(x, w);
                Ok(())
            },
        )
        .unwrap();
        assert!((acc.mean() - g.mean()).abs().max() < 1e-13);
        assert!((acc.cov(&wt) - g.cov().matrix()).abs().max() < 1e-13);
    }
}
