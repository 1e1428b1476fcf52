//! Double-precision evaluator over the scalar/vector numeric tower.
//!
//! Every intermediate result is checked: a NaN or infinity, a division by
//! zero, or a logarithm outside its domain raises `EvalError::Numeric` instead
//! of propagating through IEEE arithmetic.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{BinOp, Expr};
use super::builtins::{Builtin, Shape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Scalar,
    Vector,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Scalar => f.write_str("scalar"),
            Kind::Vector => f.write_str("vector"),
        }
    }
}

impl Value {
    pub fn kind(&self) -> Kind {
        match self {
            Value::Scalar(_) => Kind::Scalar,
            Value::Vector(_) => Kind::Vector,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(x) => Some(*x),
            Value::Vector(_) => None,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Value::Scalar(x) => std::slice::from_ref(x),
            Value::Vector(v) => v,
        }
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    fn describe(&self) -> String {
        match self {
            Value::Scalar(_) => "scalar".into(),
            Value::Vector(v) => format!("vector of length {}", v.len()),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Scalar(x)
    }
}

impl From<Vec<f64>> for Value {
    fn from(v: Vec<f64>) -> Self {
        Value::Vector(v)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("numeric error in `{op}`: {reason}")]
    Numeric { op: String, reason: String },
    #[error("`{func}` takes {expected} argument(s), got {got}")]
    Arity {
        func: String,
        expected: String,
        got: usize,
    },
    #[error("type error in `{op}`: expected {expected}, got {got}")]
    Type {
        op: String,
        expected: String,
        got: String,
    },
    #[error("parameter #{0} is not bound")]
    Unbound(usize),
}

fn numeric(op: &str, reason: impl Into<String>) -> EvalError {
    EvalError::Numeric {
        op: op.to_string(),
        reason: reason.into(),
    }
}

fn type_err(op: &str, expected: impl Into<String>, got: &Value) -> EvalError {
    EvalError::Type {
        op: op.to_string(),
        expected: expected.into(),
        got: got.describe(),
    }
}

fn finite(op: &str, x: f64) -> Result<f64, EvalError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(numeric(op, format!("non-finite result {x}")))
    }
}

/// Evaluates `body` with parameter `i` bound to `args[i]`.
pub fn evaluate(body: &Expr, args: &[&Value]) -> Result<Value, EvalError> {
    match body {
        Expr::Num(v) => Ok(Value::Scalar(finite("literal", *v)?)),
        Expr::Param(i) => args
            .get(*i)
            .map(|v| (*v).clone())
            .ok_or(EvalError::Unbound(*i)),
        Expr::Neg(e) => map_unary("-", evaluate(e, args)?, |x| Ok(-x)),
        Expr::Binary(op, a, b) => {
            let a = evaluate(a, args)?;
            let b = evaluate(b, args)?;
            binary(*op, &a, &b)
        }
        Expr::Call(f, argv) => {
            let vals = argv
                .iter()
                .map(|a| evaluate(a, args))
                .collect::<Result<Vec<_>, _>>()?;
            call(*f, vals)
        }
    }
}

fn map_unary(
    op: &str,
    v: Value,
    f: impl Fn(f64) -> Result<f64, EvalError>,
) -> Result<Value, EvalError> {
    match v {
        Value::Scalar(x) => Ok(Value::Scalar(finite(op, f(x)?)?)),
        Value::Vector(xs) => xs
            .into_iter()
            .map(|x| f(x).and_then(|y| finite(op, y)))
            .collect::<Result<Vec<_>, _>>()
            .map(Value::Vector),
    }
}

fn zip_with(
    op: &str,
    a: &Value,
    b: &Value,
    f: impl Fn(f64, f64) -> Result<f64, EvalError>,
) -> Result<Value, EvalError> {
    let g = |x, y| f(x, y).and_then(|r| finite(op, r));
    match (a, b) {
        (Value::Scalar(x), Value::Scalar(y)) => Ok(Value::Scalar(g(*x, *y)?)),
        (Value::Scalar(x), Value::Vector(ys)) => {
            ys.iter().map(|y| g(*x, *y)).collect::<Result<_, _>>().map(Value::Vector)
        }
        (Value::Vector(xs), Value::Scalar(y)) => {
            xs.iter().map(|x| g(*x, *y)).collect::<Result<_, _>>().map(Value::Vector)
        }
        (Value::Vector(xs), Value::Vector(ys)) => {
            if xs.len() != ys.len() {
                return Err(type_err(op, format!("vector of length {}", xs.len()), b));
            }
            xs.iter()
                .zip(ys)
                .map(|(x, y)| g(*x, *y))
                .collect::<Result<_, _>>()
                .map(Value::Vector)
        }
    }
}

fn divide(x: f64, y: f64) -> Result<f64, EvalError> {
    if y == 0.0 {
        Err(numeric("/", "division by zero"))
    } else {
        Ok(x / y)
    }
}

fn binary(op: BinOp, a: &Value, b: &Value) -> Result<Value, EvalError> {
    match op {
        BinOp::Add => zip_with("+", a, b, |x, y| Ok(x + y)),
        BinOp::Sub => zip_with("-", a, b, |x, y| Ok(x - y)),
        BinOp::Mul => zip_with("*", a, b, |x, y| Ok(x * y)),
        BinOp::Div => zip_with("/", a, b, divide),
        BinOp::Pow => zip_with("**", a, b, |x, y| Ok(x.powf(y))),
    }
}

fn require_vector<'v>(op: &str, v: &'v Value) -> Result<&'v [f64], EvalError> {
    match v {
        Value::Vector(xs) if !xs.is_empty() => Ok(xs),
        Value::Vector(_) => Err(numeric(op, "empty vector")),
        Value::Scalar(_) => Err(type_err(op, "vector", v)),
    }
}

fn reduce(f: Builtin, v: &Value) -> Result<Value, EvalError> {
    let op = f.name();
    let xs = match v {
        Value::Scalar(x) => return Ok(Value::Scalar(*x)),
        Value::Vector(xs) if xs.is_empty() => return Err(numeric(op, "empty-vector reduction")),
        Value::Vector(xs) => xs,
    };
    let n = xs.len() as f64;
    let mean = || xs.iter().sum::<f64>() / n;
    let var = || {
        let m = mean();
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
    };
    let r = match f {
        Builtin::Sum => xs.iter().sum(),
        Builtin::Mean => mean(),
        Builtin::Var => var(),
        Builtin::Std => var().sqrt(),
        Builtin::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
        Builtin::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        _ => unreachable!("{op} is not a reduction"),
    };
    Ok(Value::Scalar(finite(op, r)?))
}

pub(crate) fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn call(f: Builtin, args: Vec<Value>) -> Result<Value, EvalError> {
    if !f.accepts(args.len()) {
        return Err(EvalError::Arity {
            func: f.name().into(),
            expected: f.arity_text(),
            got: args.len(),
        });
    }
    let op = f.name();
    if f.shape(args.len()) == Shape::Reduction {
        return reduce(f, &args[0]);
    }
    let mut args = args.into_iter();
    let a = args.next().expect("arity checked");
    match f {
        Builtin::Tanh => map_unary(op, a, |x| Ok(x.tanh())),
        Builtin::Sigmoid => map_unary(op, a, |x| Ok(1.0 / (1.0 + (-x).exp()))),
        Builtin::Exp => map_unary(op, a, |x| Ok(x.exp())),
        Builtin::Log => map_unary(op, a, |x| {
            if x > 0.0 {
                Ok(x.ln())
            } else {
                Err(numeric(op, format!("log of non-positive value {x}")))
            }
        }),
        Builtin::Log1p => map_unary(op, a, |x| {
            if x > -1.0 {
                Ok(x.ln_1p())
            } else {
                Err(numeric(op, format!("log1p of value {x} <= -1")))
            }
        }),
        Builtin::Sqrt => map_unary(op, a, |x| {
            if x >= 0.0 {
                Ok(x.sqrt())
            } else {
                Err(numeric(op, format!("sqrt of negative value {x}")))
            }
        }),
        Builtin::Abs => map_unary(op, a, |x| Ok(x.abs())),
        Builtin::Sign => map_unary(op, a, |x| {
            Ok(if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            })
        }),
        Builtin::Clamp => {
            let lo = args.next().expect("arity checked");
            let v = zip_with(op, &a, &lo, |x, l| Ok(x.max(l)))?;
            match args.next() {
                Some(hi) => zip_with(op, &v, &hi, |x, h| Ok(x.min(h))),
                None => Ok(v),
            }
        }
        Builtin::Min => zip_with(op, &a, &args.next().expect("arity checked"), |x, y| {
            Ok(x.min(y))
        }),
        Builtin::Max => zip_with(op, &a, &args.next().expect("arity checked"), |x, y| {
            Ok(x.max(y))
        }),
        Builtin::Pow => zip_with(op, &a, &args.next().expect("arity checked"), |x, y| {
            Ok(x.powf(y))
        }),
        Builtin::Topk => {
            let xs = require_vector(op, &a)?;
            let k = match args.next().expect("arity checked") {
                Value::Scalar(k) => k,
                other => return Err(type_err(op, "scalar k", &other)),
            };
            if !(k >= 1.0) {
                return Err(numeric(op, format!("k must be at least 1, got {k}")));
            }
            let k = (k.floor() as usize).min(xs.len());
            let mut sorted = xs.to_vec();
            sorted.sort_by(|x, y| y.total_cmp(x));
            sorted.truncate(k);
            Ok(Value::Vector(sorted))
        }
        Builtin::Normalize => {
            let xs = require_vector(op, &a)?;
            let norm = xs.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(numeric(op, "cannot normalize a zero-norm vector"));
            }
            map_unary(op, a.clone(), |x| Ok(x / norm))
        }
        Builtin::Softmax => {
            let xs = require_vector(op, &a)?;
            map_unary(op, Value::Vector(softmax(xs)), Ok)
        }
        Builtin::Entropy => {
            let xs = require_vector(op, &a)?;
            let h = -softmax(xs)
                .into_iter()
                .filter(|p| *p > 0.0)
                .map(|p| p * p.ln())
                .sum::<f64>();
            Ok(Value::Scalar(finite(op, h)?))
        }
        Builtin::Stack => {
            let mut out = a.as_slice().to_vec();
            for v in args {
                out.extend_from_slice(v.as_slice());
            }
            Ok(Value::Vector(out))
        }
        Builtin::Mean | Builtin::Var | Builtin::Std | Builtin::Sum => {
            unreachable!("reductions handled above")
        }
    }
}

/// Static shape inference mirroring the evaluator's broadcasting rules.
/// Returns `None` when the expression is ill-typed for the given parameter kinds.
pub fn infer_kind(body: &Expr, params: &[Kind]) -> Option<Kind> {
    match body {
        Expr::Num(_) => Some(Kind::Scalar),
        Expr::Param(i) => params.get(*i).copied(),
        Expr::Neg(e) => infer_kind(e, params),
        Expr::Binary(_, a, b) => Some(join(infer_kind(a, params)?, infer_kind(b, params)?)),
        Expr::Call(f, args) => {
            let kinds = args
                .iter()
                .map(|a| infer_kind(a, params))
                .collect::<Option<Vec<_>>>()?;
            match f.shape(args.len()) {
                Shape::Reduction => Some(Kind::Scalar),
                Shape::Elementwise => kinds.into_iter().reduce(join),
                Shape::Constructor => Some(Kind::Vector),
                Shape::VectorMap | Shape::VectorReduce => {
                    if kinds[0] != Kind::Vector {
                        return None;
                    }
                    if *f == Builtin::Topk && kinds[1] != Kind::Scalar {
                        return None;
                    }
                    Some(if f.shape(args.len()) == Shape::VectorMap {
                        Kind::Vector
                    } else {
                        Kind::Scalar
                    })
                }
            }
        }
    }
}

fn join(a: Kind, b: Kind) -> Kind {
    if a == Kind::Vector || b == Kind::Vector {
        Kind::Vector
    } else {
        Kind::Scalar
    }
}
