//! The embedded expression language in which alternatives are written.
//!
//! Sources look like `lambda a, b: tanh(a) * (0.7 * b + 0.3)`: a parameter
//! list followed by a single pure expression over scalars and vectors. There
//! are no statements, loops or assignments.

mod ast;
mod builtins;
mod eval;
mod lexer;
mod parser;
mod signature;

pub use ast::{BinOp, Expr, Lambda};
pub use builtins::{Builtin, Shape};
pub use eval::{evaluate, infer_kind, EvalError, Kind, Value};
pub use lexer::Pos;
pub use parser::{parse, ParseError};
pub use signature::{canonical_signature, normalize_source, Signature};

use std::collections::HashMap;

/// Evaluates a parsed lambda with arguments looked up by parameter name.
pub fn evaluate_env(lambda: &Lambda, env: &HashMap<String, Value>) -> Result<Value, EvalError> {
    let mut args = Vec::with_capacity(lambda.params.len());
    for (i, p) in lambda.params.iter().enumerate() {
        args.push(env.get(p).ok_or(EvalError::Unbound(i))?);
    }
    evaluate(&lambda.body, &args)
}
