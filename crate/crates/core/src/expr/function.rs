use nalgebra::DMatrix;
use thiserror::Error;

use super::ast::{BinOp, ExprAst, Func, Node};
use super::dual::Dual2;
use super::parser::{parse_expr, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("component {component}: {function} is undefined at {argument}")]
    Domain {
        component: usize,
        function: &'static str,
        argument: f64,
    },

    #[error("component {component}: {function} is not differentiable at {argument}")]
    NonDifferentiable {
        component: usize,
        function: &'static str,
        argument: f64,
    },

    #[error("component {component}: evaluation produced a non-finite value")]
    NonFinite { component: usize },

    #[error("point has length {actual}, function expects {expected}")]
    Arity { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy)]
enum Fault {
    Domain(&'static str, f64),
    NonDifferentiable(&'static str, f64),
}

impl Fault {
    fn at(self, component: usize) -> EvalError {
        match self {
            Fault::Domain(function, argument) => EvalError::Domain {
                component,
                function,
                argument,
            },
            Fault::NonDifferentiable(function, argument) => EvalError::NonDifferentiable {
                component,
                function,
                argument,
            },
        }
    }
}

/// Numbers the tree walker can evaluate over: plain values and [`Dual2`].
trait Scalar: Sized {
    const DIFFERENTIATES: bool;
    fn constant(c: f64, arity: usize) -> Self;
    fn variable(x: f64, index: usize, arity: usize) -> Self;
    fn val(&self) -> f64;
    fn neg(self) -> Self;
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn div(self, o: Self) -> Self;
    fn scale(self, c: f64) -> Self;
    fn shift(self, c: f64) -> Self;
    fn div_const(self, c: f64) -> Self;
    /// `f` is the value; the closure yields first and second derivatives.
    fn apply(self, f: f64, derivs: impl FnOnce() -> (f64, f64)) -> Self;
    /// `b^e` for non-constant `e`, with `b > 0` already checked.
    fn pow_general(self, e: Self) -> Self;
}

impl Scalar for f64 {
    const DIFFERENTIATES: bool = false;
    fn constant(c: f64, _: usize) -> Self {
        c
    }
    fn variable(x: f64, _: usize, _: usize) -> Self {
        x
    }
    fn val(&self) -> f64 {
        *self
    }
    fn neg(self) -> Self {
        -self
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn div(self, o: Self) -> Self {
        self / o
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn shift(self, c: f64) -> Self {
        self + c
    }
    fn div_const(self, c: f64) -> Self {
        self / c
    }
    fn apply(self, f: f64, _: impl FnOnce() -> (f64, f64)) -> Self {
        f
    }
    fn pow_general(self, e: Self) -> Self {
        self.powf(e)
    }
}

impl Scalar for Dual2 {
    const DIFFERENTIATES: bool = true;
    fn constant(c: f64, arity: usize) -> Self {
        Dual2::constant(c, arity)
    }
    fn variable(x: f64, index: usize, arity: usize) -> Self {
        Dual2::variable(x, index, arity)
    }
    fn val(&self) -> f64 {
        self.value()
    }
    fn neg(mut self) -> Self {
        self.negate();
        self
    }
    fn add(mut self, o: Self) -> Self {
        self.add_assign(&o);
        self
    }
    fn sub(mut self, o: Self) -> Self {
        self.sub_assign(&o);
        self
    }
    fn mul(mut self, o: Self) -> Self {
        self.mul_assign(&o);
        self
    }
    fn div(mut self, o: Self) -> Self {
        self.div_assign(&o);
        self
    }
    fn scale(mut self, c: f64) -> Self {
        Dual2::scale(&mut self, c);
        self
    }
    fn shift(mut self, c: f64) -> Self {
        Dual2::shift(&mut self, c);
        self
    }
    fn div_const(mut self, c: f64) -> Self {
        self.div_scalar(c);
        self
    }
    fn apply(mut self, f: f64, derivs: impl FnOnce() -> (f64, f64)) -> Self {
        let (d1, d2) = derivs();
        self.chain_assign(f, d1, d2);
        self
    }
    fn pow_general(self, e: Self) -> Self {
        // b^e = exp(e ln b)
        let b = self.value();
        let value = b.powf(e.value());
        let ln_b = self.chain(b.ln(), 1.0 / b, -1.0 / (b * b));
        let exponent = Dual2::mul(&e, &ln_b);
        exponent.chain(value, value, value)
    }
}

fn literal(node: &Node) -> Option<f64> {
    match node {
        Node::Const(c) => Some(*c),
        Node::Neg(inner) => match **inner {
            Node::Const(c) => Some(-c),
            _ => None,
        },
        _ => None,
    }
}

fn eval_node<S: Scalar>(node: &Node, point: &[f64]) -> Result<S, Fault> {
    let arity = point.len();
    Ok(match node {
        Node::Const(c) => S::constant(*c, arity),
        Node::Var(i) => S::variable(point[*i], *i, arity),
        Node::Neg(a) => eval_node::<S>(a, point)?.neg(),
        Node::Binary(op, a, b) => {
            if *op == BinOp::Pow {
                return eval_pow(a, b, point);
            }
            // a literal operand needs no derivative channels
            match (op, literal(a), literal(b)) {
                (BinOp::Add, Some(c), None) => return Ok(eval_node::<S>(b, point)?.shift(c)),
                (BinOp::Add, None, Some(c)) => return Ok(eval_node::<S>(a, point)?.shift(c)),
                (BinOp::Sub, None, Some(c)) => return Ok(eval_node::<S>(a, point)?.shift(-c)),
                (BinOp::Mul, Some(c), None) => return Ok(eval_node::<S>(b, point)?.scale(c)),
                (BinOp::Mul, None, Some(c)) => return Ok(eval_node::<S>(a, point)?.scale(c)),
                (BinOp::Div, None, Some(c)) => return Ok(eval_node::<S>(a, point)?.div_const(c)),
                _ => {}
            }
            let lhs = eval_node::<S>(a, point)?;
            let rhs = eval_node::<S>(b, point)?;
            match op {
                BinOp::Add => lhs.add(rhs),
                BinOp::Sub => lhs.sub(rhs),
                BinOp::Mul => lhs.mul(rhs),
                BinOp::Div => lhs.div(rhs),
                BinOp::Pow => unreachable!(),
            }
        }
        Node::Call(func, a) => call(*func, eval_node::<S>(a, point)?)?,
    })
}

fn eval_pow<S: Scalar>(base: &Node, exponent: &Node, point: &[f64]) -> Result<S, Fault> {
    let b = eval_node::<S>(base, point)?;
    let x = b.val();
    if exponent.is_constant() {
        let c = eval_node::<f64>(exponent, point)?;
        let integral = c.fract() == 0.0 && c.abs() < i32::MAX as f64;
        if x < 0.0 && !integral {
            return Err(Fault::Domain("^", x));
        }
        if S::DIFFERENTIATES && x == 0.0 && !integral && c < 2.0 {
            return Err(Fault::NonDifferentiable("^", x));
        }
        let pw = |p: f64| -> f64 {
            if integral {
                x.powi(p as i32)
            } else {
                x.powf(p)
            }
        };
        let value = pw(c);
        return Ok(b.apply(value, || {
            let d1 = if c == 0.0 { 0.0 } else { c * pw(c - 1.0) };
            let d2 = if c == 0.0 || c == 1.0 {
                0.0
            } else {
                c * (c - 1.0) * pw(c - 2.0)
            };
            (d1, d2)
        }));
    }
    if x <= 0.0 {
        return Err(Fault::Domain("^", x));
    }
    let e = eval_node::<S>(exponent, point)?;
    Ok(b.pow_general(e))
}

fn call<S: Scalar>(func: Func, a: S) -> Result<S, Fault> {
    let x = a.val();
    Ok(match func {
        Func::Sin => a.apply(x.sin(), || (x.cos(), -x.sin())),
        Func::Cos => a.apply(x.cos(), || (-x.sin(), -x.cos())),
        Func::Tan => {
            let t = x.tan();
            a.apply(t, || {
                let sec2 = 1.0 + t * t;
                (sec2, 2.0 * t * sec2)
            })
        }
        Func::Exp => {
            let e = x.exp();
            a.apply(e, || (e, e))
        }
        Func::Log => {
            if x <= 0.0 {
                return Err(Fault::Domain("log", x));
            }
            a.apply(x.ln(), || (1.0 / x, -1.0 / (x * x)))
        }
        Func::Sqrt => {
            if x < 0.0 {
                return Err(Fault::Domain("sqrt", x));
            }
            if S::DIFFERENTIATES && x == 0.0 {
                return Err(Fault::NonDifferentiable("sqrt", x));
            }
            let s = x.sqrt();
            a.apply(s, || (0.5 / s, -0.25 / (s * x)))
        }
        Func::Tanh => {
            let t = x.tanh();
            a.apply(t, || {
                let sech2 = 1.0 - t * t;
                (sech2, -2.0 * t * sech2)
            })
        }
        Func::Atan => a.apply(x.atan(), || {
            let q = 1.0 / (1.0 + x * x);
            (q, -2.0 * x * q * q)
        }),
    })
}

/// A map `R^in_dim -> R^out_dim` whose components are expressions over the
/// same variables.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFunction {
    components: Vec<ExprAst>,
    in_dim: usize,
}

impl VectorFunction {
    /// `None` when `components` is empty or arities disagree.
    pub fn new(components: Vec<ExprAst>) -> Option<Self> {
        let in_dim = components.first()?.arity();
        if components.iter().any(|c| c.arity() != in_dim) {
            return None;
        }
        Some(Self { components, in_dim })
    }

    pub fn parse<S: AsRef<str>>(sources: &[S], in_dim: usize) -> Result<Self, ParseError> {
        if sources.is_empty() {
            return Err(ParseError::Empty);
        }
        let components = sources
            .iter()
            .map(|s| parse_expr(s.as_ref(), in_dim))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { components, in_dim })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ExprAst] {
        &self.components
    }

    /// Source text of each component, re-parseable with [`VectorFunction::parse`].
    pub fn sources(&self) -> Vec<String> {
        self.components.iter().map(|c| c.to_string()).collect()
    }

    fn check_point(&self, point: &[f64]) -> Result<(), EvalError> {
        if point.len() != self.in_dim {
            return Err(EvalError::Arity {
                expected: self.in_dim,
                actual: point.len(),
            });
        }
        Ok(())
    }

    /// Evaluate every component at `point` into `out`.
    pub fn eval_into(&self, point: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.check_point(point)?;
        for (i, (c, slot)) in self.components.iter().zip(out.iter_mut()).enumerate() {
            let v = eval_node::<f64>(c.root(), point).map_err(|f| f.at(i))?;
            if !v.is_finite() {
                return Err(EvalError::NonFinite { component: i });
            }
            *slot = v;
        }
        Ok(())
    }

    pub fn eval_value(&self, point: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.out_dim()];
        self.eval_into(point, &mut out)?;
        Ok(out)
    }

    /// Value, gradient and Hessian of every component at `point`.
    pub fn eval_dual2(&self, point: &[f64]) -> Result<Vec<Dual2>, EvalError> {
        self.check_point(point)?;
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let d = eval_node::<Dual2>(c.root(), point).map_err(|f| f.at(i))?;
                if !d.value().is_finite() {
                    return Err(EvalError::NonFinite { component: i });
                }
                if !d.is_finite() {
                    return Err(EvalError::NonDifferentiable {
                        component: i,
                        function: "expression",
                        argument: f64::NAN,
                    });
                }
                Ok(d)
            })
            .collect()
    }

    /// Jacobian `[J]_{ij} = d f_i / d x_j` at `point`.
    pub fn jacobian(&self, point: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let duals = self.eval_dual2(point)?;
        Ok(DMatrix::from_fn(self.out_dim(), self.in_dim, |i, j| {
            duals[i].gradient()[j]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const F1: &str = "x1 + (1 + x1)/(2*(1 + x1^4))";
    const F2: &str = "x1 + x1/(2*(1 + x1^2))";

    fn f1_direct(x: f64) -> f64 {
        x + (1.0 + x) / (2.0 * (1.0 + x * x * x * x))
    }

    #[test]
    fn ungm_values_at_origin() {
        let f1 = VectorFunction::parse(&[F1], 1).unwrap();
        let f2 = VectorFunction::parse(&[F2], 1).unwrap();
        assert_eq!(f2.eval_value(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(f1.eval_value(&[0.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn f1_matches_direct_arithmetic_on_grid() {
        let f1 = VectorFunction::parse(&[F1], 1).unwrap();
        for k in 0..64 {
            let x = -8.0 + 16.0 * k as f64 / 63.0;
            let got = f1.eval_value(&[x]).unwrap()[0];
            let want = f1_direct(x);
            assert!((got - want).abs() <= 1e-14 * want.abs().max(1.0), "x={x}");
        }
    }

    #[test]
    fn f1_gradient_at_origin_matches_finite_differences() {
        let f1 = VectorFunction::parse(&[F1], 1).unwrap();
        let h = 1e-5;
        let fd = (f1_direct(h) - f1_direct(-h)) / (2.0 * h);
        let d = &f1.eval_dual2(&[0.0]).unwrap()[0];
        assert!((fd - 1.5).abs() < 1e-9);
        assert!((d.gradient()[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn polynomial_dual() {
        let g = VectorFunction::parse(&["x1^2"], 1).unwrap();
        let d = &g.eval_dual2(&[3.0]).unwrap()[0];
        assert_eq!(d.value(), 9.0);
        assert_eq!(d.gradient(), &[6.0]);
        assert_eq!(d.hessian()[(0, 0)], 2.0);
    }

    #[test]
    fn domain_errors_carry_component() {
        let g = VectorFunction::parse(&["x1", "log(x1)"], 1).unwrap();
        assert!(matches!(
            g.eval_value(&[-1.0]),
            Err(EvalError::Domain {
                component: 1,
                function: "log",
                ..
            })
        ));
        let s = VectorFunction::parse(&["sqrt(x1 - 1)"], 1).unwrap();
        assert!(matches!(
            s.eval_value(&[0.0]),
            Err(EvalError::Domain { component: 0, .. })
        ));
        // sqrt(0) has a value but no derivative
        assert_eq!(s.eval_value(&[1.0]).unwrap(), vec![0.0]);
        assert!(matches!(
            s.eval_dual2(&[1.0]),
            Err(EvalError::NonDifferentiable { component: 0, .. })
        ));
        let frac = VectorFunction::parse(&["x1^0.5"], 1).unwrap();
        assert!(matches!(
            frac.eval_value(&[-2.0]),
            Err(EvalError::Domain { .. })
        ));
        let general = VectorFunction::parse(&["x1^x2"], 2).unwrap();
        assert!(matches!(
            general.eval_value(&[-2.0, 2.0]),
            Err(EvalError::Domain { .. })
        ));
    }

    #[test]
    fn non_finite_is_flagged() {
        let g = VectorFunction::parse(&["1/x1"], 1).unwrap();
        assert_eq!(
            g.eval_value(&[0.0]),
            Err(EvalError::NonFinite { component: 0 })
        );
        assert!(matches!(
            g.eval_value(&[1.0, 2.0]),
            Err(EvalError::Arity { .. })
        ));
    }

    #[test]
    fn integer_powers_are_smooth_at_zero() {
        let g = VectorFunction::parse(&["x1^1 + x1^2 + x1^3"], 1).unwrap();
        let d = &g.eval_dual2(&[0.0]).unwrap()[0];
        assert_eq!(d.value(), 0.0);
        assert_eq!(d.gradient(), &[1.0]);
        assert_eq!(d.hessian()[(0, 0)], 2.0);
    }

    #[test]
    fn general_power_derivatives() {
        // x^y at (2, 3): grad (y x^(y-1), x^y ln x)
        let g = VectorFunction::parse(&["x1^x2"], 2).unwrap();
        let d = &g.eval_dual2(&[2.0, 3.0]).unwrap()[0];
        let ln2 = 2f64.ln();
        assert_eq!(d.value(), 8.0);
        assert!((d.gradient()[0] - 12.0).abs() < 1e-12);
        assert!((d.gradient()[1] - 8.0 * ln2).abs() < 1e-12);
        let h = d.hessian();
        assert!((h[(0, 0)] - 12.0).abs() < 1e-12); // y(y-1)x^(y-2)
        assert!((h[(0, 1)] - (4.0 + 12.0 * ln2)).abs() < 1e-12); // x^(y-1)(1 + y ln x)
        assert!((h[(1, 1)] - 8.0 * ln2 * ln2).abs() < 1e-12);
    }

    #[test]
    fn mismatched_arity_rejected() {
        let a = parse_expr("x1", 1).unwrap();
        let b = parse_expr("x2", 2).unwrap();
        assert!(VectorFunction::new(vec![a, b]).is_none());
        assert!(VectorFunction::new(vec![]).is_none());
    }
}
