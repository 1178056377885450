//! Additive-noise state-space model `X = f(X_p) + U`, `Y = h(X) + V` and the
//! functions built from it.
//!
//! Variable layout for the lifted map: `x1 = vars 1..n` (prior state),
//! `x2 = vars n+1..2n` (process noise), `x3 = vars 2n+1..2n+m` (measurement
//! noise).

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::expr::{BinOp, ExprAst, Node, VectorFunction};
use crate::linalg::{Gaussian, SpdMatrix};
use crate::sampling::{draw_chunk, Stream, CHUNK};

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearSsm {
    f: VectorFunction,
    h: VectorFunction,
    sigma_u: SpdMatrix,
    sigma_v: SpdMatrix,
    prior: Gaussian,
}

impl NonlinearSsm {
    pub fn new(
        f: VectorFunction,
        h: VectorFunction,
        sigma_u: SpdMatrix,
        sigma_v: SpdMatrix,
        prior: Gaussian,
    ) -> Result<Self> {
        let n = f.in_dim();
        ensure_dim("dynamic model output dimension", n, f.out_dim())?;
        ensure_dim("measurement model input dimension", n, h.in_dim())?;
        ensure_dim("prior dimension", n, prior.dim())?;
        ensure_dim("process noise dimension", n, sigma_u.dim())?;
        ensure_dim("measurement noise dimension", h.out_dim(), sigma_v.dim())?;
        for (what, m) in [
            ("process noise covariance", &sigma_u),
            ("measurement noise covariance", &sigma_v),
        ] {
            if !m.is_positive_definite(1e-12) {
                return Err(Error::NotPositiveDefinite {
                    what,
                    eigenvalues: m.eigenvalues(),
                });
            }
        }
        Ok(Self {
            f,
            h,
            sigma_u,
            sigma_v,
            prior,
        })
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.f.in_dim()
    }

    /// Measurement dimension `m`.
    pub fn meas_dim(&self) -> usize {
        self.h.out_dim()
    }

    pub fn f(&self) -> &VectorFunction {
        &self.f
    }

    pub fn h(&self) -> &VectorFunction {
        &self.h
    }

    pub fn sigma_u(&self) -> &SpdMatrix {
        &self.sigma_u
    }

    pub fn sigma_v(&self) -> &SpdMatrix {
        &self.sigma_v
    }

    pub fn prior(&self) -> &Gaussian {
        &self.prior
    }

    pub(crate) fn process_noise(&self) -> Gaussian {
        Gaussian::new(DVector::zeros(self.state_dim()), self.sigma_u.clone())
            .expect("dimensions checked at construction")
    }

    pub(crate) fn measurement_noise(&self) -> Gaussian {
        Gaussian::new(DVector::zeros(self.meas_dim()), self.sigma_v.clone())
            .expect("dimensions checked at construction")
    }

    /// Law of `W = (X_p, U, V)`.
    pub fn lifted_input(&self) -> LiftedInput {
        LiftedInput {
            prior: self.prior.clone(),
            process: self.process_noise(),
            measurement: self.measurement_noise(),
        }
    }

    // f_i(x1) + x2_i, as trees over the 2n (or wider) lifted variables
    fn predicted_state_nodes(&self) -> Vec<Node> {
        let n = self.state_dim();
        self.f
            .components()
            .iter()
            .enumerate()
            .map(|(i, c)| Node::binary(BinOp::Add, c.root().clone(), Node::Var(n + i)))
            .collect()
    }

    fn composite_nodes(&self) -> Vec<Node> {
        let x = self.predicted_state_nodes();
        self.h
            .components()
            .iter()
            .map(|c| c.root().substitute(&x))
            .collect()
    }
}

/// Gaussian input `W = (X_p, U, V)` of the lifted map, with block-diagonal
/// covariance `diag(P_p, Sigma_U, Sigma_V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedInput {
    prior: Gaussian,
    process: Gaussian,
    measurement: Gaussian,
}

impl LiftedInput {
    pub fn dim(&self) -> usize {
        self.prior.dim() + self.process.dim() + self.measurement.dim()
    }

    pub fn gaussian(&self) -> Gaussian {
        Gaussian::independent(&[&self.prior, &self.process, &self.measurement])
    }

    pub fn blocks(&self) -> [&Gaussian; 3] {
        [&self.prior, &self.process, &self.measurement]
    }

    /// `count x (2n+m)` draws of `W`. The prior block equals
    /// `chol_sample(prior, count, seed)` and the blocks use the same streams
    /// as Monte Carlo expectations over `W`, so statistics of these rows
    /// share their sample with the bound computations.
    pub fn sample(&self, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(Error::Invalid("sample count must be at least 1".into()));
        }
        let streams = [
            Stream::Primary,
            Stream::ProcessNoise,
            Stream::MeasurementNoise,
        ];
        let d = self.dim();
        let mut out = DMatrix::zeros(count, d);
        let mut col = 0;
        for (g, s) in self.blocks().into_iter().zip(streams) {
            let factor = g.factor().matrix().clone();
            let w = g.dim();
            let mut buf = Vec::new();
            for k in 0..count.div_ceil(CHUNK) {
                let rows = CHUNK.min(count - k * CHUNK);
                buf.clear();
                draw_chunk(g, &factor, seed, s, k, rows, &mut buf);
                for r in 0..rows {
                    for j in 0..w {
                        out[(k * CHUNK + r, col + j)] = buf[r * w + j];
                    }
                }
            }
            col += w;
        }
        Ok(out)
    }
}

/// `g(x1, x2, x3) = (f(x1) + x2, q(x1, x2) + x3)`, mapping `W` to `Z = (X, Y)`.
pub fn lift_g(model: &NonlinearSsm) -> VectorFunction {
    let (n, m) = (model.state_dim(), model.meas_dim());
    let arity = 2 * n + m;
    let mut comps = model.predicted_state_nodes();
    comps.extend(
        model
            .composite_nodes()
            .into_iter()
            .enumerate()
            .map(|(i, q)| Node::binary(BinOp::Add, q, Node::Var(2 * n + i))),
    );
    build(comps, arity)
}

/// `(f(x1) + x2, q(x1, x2))` over `2n` variables: the lifted map with the
/// measurement noise left out.
pub(crate) fn lift_core(model: &NonlinearSsm) -> VectorFunction {
    let mut comps = model.predicted_state_nodes();
    comps.extend(model.composite_nodes());
    build(comps, 2 * model.state_dim())
}

/// `q(x1, x2) = h(f(x1) + x2)` over `2n` variables.
pub fn composite_q(model: &NonlinearSsm) -> VectorFunction {
    build(model.composite_nodes(), 2 * model.state_dim())
}

fn build(nodes: Vec<Node>, arity: usize) -> VectorFunction {
    let comps = nodes
        .into_iter()
        .map(|n| ExprAst::new(n, arity).expect("substituted variables stay in range"))
        .collect();
    VectorFunction::new(comps).expect("at least one component of equal arity")
}

/// `[J_f(x1)^T ; I_n]`, the `2n x n` matrix mapping `grad h_i` at `f(x1) + u`
/// to `grad q_i`.
pub fn jf_aug(model: &NonlinearSsm, x1: &[f64]) -> Result<DMatrix<f64>> {
    let n = model.state_dim();
    ensure_dim("jf_aug point", n, x1.len())?;
    let jf = model.f.jacobian(x1)?;
    let mut out = DMatrix::zeros(2 * n, n);
    out.view_mut((0, 0), (n, n)).copy_from(&jf.transpose());
    out.view_mut((n, 0), (n, n)).fill_with_identity();
    Ok(out)
}
