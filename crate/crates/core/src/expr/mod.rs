//! Model expressions: parsing, evaluation and exact second-order derivatives.

mod ast;
mod dual;
mod function;
mod parser;

pub use ast::{BinOp, ExprAst, Func, Node};
pub use dual::Dual2;
pub use function::{EvalError, VectorFunction};
pub use parser::{parse_expr, ParseError};
