//! Second-order forward-mode dual numbers.
//!
//! A [`Dual2`] carries a value together with its full gradient and Hessian with
//! respect to `arity` independent variables. The Hessian is stored as the packed
//! upper triangle, so the matrix it expands to is symmetric bit for bit.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dual2 {
    value: f64,
    grad: Vec<f64>,
    // row-major upper triangle, arity * (arity + 1) / 2 entries
    hess: Vec<f64>,
}

#[inline]
fn packed_len(arity: usize) -> usize {
    arity * (arity + 1) / 2
}

impl Dual2 {
    pub fn constant(value: f64, arity: usize) -> Self {
        Self {
            value,
            grad: vec![0.0; arity],
            hess: vec![0.0; packed_len(arity)],
        }
    }

    /// The independent variable `index` evaluated at `value`.
    pub fn variable(value: f64, index: usize, arity: usize) -> Self {
        let mut d = Self::constant(value, arity);
        d.grad[index] = 1.0;
        d
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn arity(&self) -> usize {
        self.grad.len()
    }

    pub fn gradient(&self) -> &[f64] {
        &self.grad
    }

    /// Entry `(i, j)` of the Hessian.
    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess[Self::packed_index(self.arity(), i.min(j), i.max(j))]
    }

    // rows 0..r hold k + (k-1) + ... + (k-r+1) entries
    #[inline]
    fn packed_index(k: usize, r: usize, c: usize) -> usize {
        r * k - r * r.saturating_sub(1) / 2 + (c - r)
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        let k = self.arity();
        DMatrix::from_fn(k, k, |i, j| {
            self.hess[Self::packed_index(k, i.min(j), i.max(j))]
        })
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.iter().all(|h| h.is_finite())
    }

    /// Apply a scalar function with value `f`, derivative `d1` and second
    /// derivative `d2` at `self.value`.
    pub fn chain(&self, f: f64, d1: f64, d2: f64) -> Self {
        let k = self.arity();
        let grad: Vec<f64> = self.grad.iter().map(|g| d1 * g).collect();
        let mut hess = Vec::with_capacity(self.hess.len());
        let mut idx = 0;
        for i in 0..k {
            for j in i..k {
                hess.push(d1 * self.hess[idx] + d2 * self.grad[i] * self.grad[j]);
                idx += 1;
            }
        }
        Self {
            value: f,
            grad,
            hess,
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            value: -self.value,
            grad: self.grad.iter().map(|g| -g).collect(),
            hess: self.hess.iter().map(|h| -h).collect(),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            value: self.value + o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a + b).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self {
            value: self.value - o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a - b).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let (a, b) = (self.value, o.value);
        let k = self.arity();
        let grad = self
            .grad
            .iter()
            .zip(&o.grad)
            .map(|(ga, gb)| a * gb + b * ga)
            .collect();
        let mut hess = Vec::with_capacity(self.hess.len());
        let mut idx = 0;
        for i in 0..k {
            for j in i..k {
                hess.push(
                    a * o.hess[idx]
                        + b * self.hess[idx]
                        + self.grad[i] * o.grad[j]
                        + o.grad[i] * self.grad[j],
                );
                idx += 1;
            }
        }
        Self {
            value: a * b,
            grad,
            hess,
        }
    }

    // In-place forms used by the expression evaluator, which owns its
    // intermediates and would otherwise allocate at every node.

    pub(crate) fn add_assign(&mut self, o: &Self) {
        self.value += o.value;
        self.grad.iter_mut().zip(&o.grad).for_each(|(a, b)| *a += b);
        self.hess.iter_mut().zip(&o.hess).for_each(|(a, b)| *a += b);
    }

    pub(crate) fn sub_assign(&mut self, o: &Self) {
        self.value -= o.value;
        self.grad.iter_mut().zip(&o.grad).for_each(|(a, b)| *a -= b);
        self.hess.iter_mut().zip(&o.hess).for_each(|(a, b)| *a -= b);
    }

    pub(crate) fn negate(&mut self) {
        self.value = -self.value;
        self.grad.iter_mut().for_each(|g| *g = -*g);
        self.hess.iter_mut().for_each(|h| *h = -*h);
    }

    pub(crate) fn scale(&mut self, c: f64) {
        self.value *= c;
        self.grad.iter_mut().for_each(|g| *g *= c);
        self.hess.iter_mut().for_each(|h| *h *= c);
    }

    pub(crate) fn div_scalar(&mut self, c: f64) {
        self.value /= c;
        self.grad.iter_mut().for_each(|g| *g /= c);
        self.hess.iter_mut().for_each(|h| *h /= c);
    }

    pub(crate) fn shift(&mut self, c: f64) {
        self.value += c;
    }

    pub(crate) fn chain_assign(&mut self, f: f64, d1: f64, d2: f64) {
        let k = self.arity();
        let mut idx = 0;
        for i in 0..k {
            for j in i..k {
                self.hess[idx] = d1 * self.hess[idx] + d2 * self.grad[i] * self.grad[j];
                idx += 1;
            }
        }
        self.grad.iter_mut().for_each(|g| *g *= d1);
        self.value = f;
    }

    pub(crate) fn mul_assign(&mut self, o: &Self) {
        let (a, b) = (self.value, o.value);
        let k = self.arity();
        let mut idx = 0;
        for i in 0..k {
            for j in i..k {
                self.hess[idx] = a * o.hess[idx]
                    + b * self.hess[idx]
                    + self.grad[i] * o.grad[j]
                    + o.grad[i] * self.grad[j];
                idx += 1;
            }
        }
        self.grad
            .iter_mut()
            .zip(&o.grad)
            .for_each(|(ga, gb)| *ga = a * gb + b * *ga);
        self.value = a * b;
    }

    pub(crate) fn div_assign(&mut self, o: &Self) {
        let b = o.value;
        let v = self.value / b;
        let k = self.arity();
        self.grad
            .iter_mut()
            .zip(&o.grad)
            .for_each(|(ga, gb)| *ga = (*ga - v * gb) / b);
        let mut idx = 0;
        for i in 0..k {
            for j in i..k {
                self.hess[idx] = (self.hess[idx]
                    - v * o.hess[idx]
                    - self.grad[i] * o.grad[j]
                    - o.grad[i] * self.grad[j])
                    / b;
                idx += 1;
            }
        }
        self.value = v;
    }

    /// Quotient rule, keeping the value channel equal to the plain `a / b`.
    pub fn div(&self, o: &Self) -> Self {
        let b = o.value;
        let v = self.value / b;
        let k = self.arity();
        let grad: Vec<f64> = self
            .grad
            .iter()
            .zip(&o.grad)
            .map(|(ga, gb)| (ga - v * gb) / b)
            .collect();
        let mut hess = Vec::with_capacity(self.hess.len());
        let mut idx = 0;
        for i in 0..k {
            for j in i..k {
                hess.push(
                    (self.hess[idx] - v * o.hess[idx] - grad[i] * o.grad[j] - o.grad[i] * grad[j])
                        / b,
                );
                idx += 1;
            }
        }
        Self {
            value: v,
            grad,
            hess,
        }
    }
}
