use std::fmt;

use super::builtins::Builtin;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "**",
        }
    }
}

/// Expression tree. Parameters are resolved to their position in the
/// enclosing lambda's parameter list.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Param(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Param(_) => 1,
            Expr::Neg(e) => 1 + e.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
            Expr::Call(_, args) => 1 + args.iter().map(Expr::depth).max().unwrap_or(0),
        }
    }

    /// Marks every parameter index referenced in this tree.
    pub fn collect_params(&self, used: &mut [bool]) {
        match self {
            Expr::Num(_) => {}
            Expr::Param(i) => {
                if let Some(slot) = used.get_mut(*i) {
                    *slot = true;
                }
            }
            Expr::Neg(e) => e.collect_params(used),
            Expr::Binary(_, a, b) => {
                a.collect_params(used);
                b.collect_params(used);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_params(used)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Binary(BinOp::Pow, ..) => 4,
            Expr::Num(_) | Expr::Param(_) | Expr::Call(..) => 5,
        }
    }

    pub(crate) fn write(&self, names: &[String], min_prec: u8, out: &mut String) {
        let prec = self.precedence();
        let wrap = prec < min_prec;
        if wrap {
            out.push('(');
        }
        match self {
            Expr::Num(v) => out.push_str(&format!("{v:?}")),
            Expr::Param(i) => match names.get(*i) {
                Some(n) => out.push_str(n),
                None => out.push_str(&format!("_p{i}")),
            },
            Expr::Neg(e) => {
                out.push('-');
                e.write(names, 3, out);
            }
            Expr::Binary(BinOp::Pow, a, b) => {
                a.write(names, 5, out);
                out.push_str(" ** ");
                b.write(names, 3, out);
            }
            Expr::Binary(op, a, b) => {
                a.write(names, prec, out);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                b.write(names, prec + 1, out);
            }
            Expr::Call(f, args) => {
                out.push_str(f.name());
                out.push('(');
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    a.write(names, 0, out);
                }
                out.push(')');
            }
        }
        if wrap {
            out.push(')');
        }
    }
}

/// A parsed alternative: declared parameters plus body.
#[derive(Debug, Clone, PartialEq)]
pub struct Lambda {
    pub params: Vec<String>,
    pub body: Expr,
}

impl Lambda {
    /// Declared parameters that the body never reads.
    pub fn unused_params(&self) -> Vec<String> {
        let mut used = vec![false; self.params.len()];
        self.body.collect_params(&mut used);
        self.params
            .iter()
            .zip(used)
            .filter(|(_, u)| !u)
            .map(|(p, _)| p.clone())
            .collect()
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut body = String::new();
        self.body.write(&self.params, 0, &mut body);
        if self.params.is_empty() {
            write!(f, "lambda: {body}")
        } else {
            write!(f, "lambda {}: {body}", self.params.join(", "))
        }
    }
}
