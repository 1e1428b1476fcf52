//! The builtin function table.
//!
//! Elementwise functions broadcast between scalars and vectors. Reductions map
//! a vector to a scalar and pass scalars through unchanged. `min`/`max` are
//! reductions with one argument and elementwise with two.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Builtin {
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Log1p,
    Sqrt,
    Abs,
    Sign,
    Clamp,
    Mean,
    Var,
    Std,
    Sum,
    Min,
    Max,
    Topk,
    Normalize,
    Softmax,
    Entropy,
    Pow,
    Stack,
}

/// How a builtin treats the shape of its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Applied per element, broadcasting scalars against vectors.
    Elementwise,
    /// Vector to scalar; identity on scalars.
    Reduction,
    /// Requires a vector, produces a vector.
    VectorMap,
    /// Requires a vector, produces a scalar.
    VectorReduce,
    /// Builds a vector out of its arguments.
    Constructor,
}

impl Builtin {
    pub const ALL: [Builtin; 21] = [
        Builtin::Tanh,
        Builtin::Sigmoid,
        Builtin::Exp,
        Builtin::Log,
        Builtin::Log1p,
        Builtin::Sqrt,
        Builtin::Abs,
        Builtin::Sign,
        Builtin::Clamp,
        Builtin::Mean,
        Builtin::Var,
        Builtin::Std,
        Builtin::Sum,
        Builtin::Min,
        Builtin::Max,
        Builtin::Topk,
        Builtin::Normalize,
        Builtin::Softmax,
        Builtin::Entropy,
        Builtin::Pow,
        Builtin::Stack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Tanh => "tanh",
            Builtin::Sigmoid => "sigmoid",
            Builtin::Exp => "exp",
            Builtin::Log => "log",
            Builtin::Log1p => "log1p",
            Builtin::Sqrt => "sqrt",
            Builtin::Abs => "abs",
            Builtin::Sign => "sign",
            Builtin::Clamp => "clamp",
            Builtin::Mean => "mean",
            Builtin::Var => "var",
            Builtin::Std => "std",
            Builtin::Sum => "sum",
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Topk => "topk",
            Builtin::Normalize => "normalize",
            Builtin::Softmax => "softmax",
            Builtin::Entropy => "entropy",
            Builtin::Pow => "pow",
            Builtin::Stack => "stack",
        }
    }

    pub fn lookup(name: &str) -> Option<Builtin> {
        Builtin::ALL.iter().copied().find(|b| b.name() == name)
    }

    /// Inclusive bounds on the argument count; `None` means unbounded.
    pub fn arity(self) -> (usize, Option<usize>) {
        match self {
            Builtin::Clamp => (2, Some(3)),
            Builtin::Min | Builtin::Max => (1, Some(2)),
            Builtin::Topk | Builtin::Pow => (2, Some(2)),
            Builtin::Stack => (1, None),
            _ => (1, Some(1)),
        }
    }

    pub fn accepts(self, n: usize) -> bool {
        let (lo, hi) = self.arity();
        n >= lo && hi.is_none_or(|hi| n <= hi)
    }

    pub fn arity_text(self) -> String {
        match self.arity() {
            (lo, Some(hi)) if lo == hi => lo.to_string(),
            (lo, Some(hi)) => format!("{lo}..={hi}"),
            (lo, None) => format!("at least {lo}"),
        }
    }

    pub fn shape(self, nargs: usize) -> Shape {
        match self {
            Builtin::Mean | Builtin::Var | Builtin::Std | Builtin::Sum => Shape::Reduction,
            Builtin::Min | Builtin::Max if nargs == 1 => Shape::Reduction,
            Builtin::Topk | Builtin::Normalize | Builtin::Softmax => Shape::VectorMap,
            Builtin::Entropy => Shape::VectorReduce,
            Builtin::Stack => Shape::Constructor,
            _ => Shape::Elementwise,
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
