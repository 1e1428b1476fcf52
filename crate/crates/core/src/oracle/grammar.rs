//! Random well-typed expressions over named scalar and vector variables.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::expr::{infer_kind, BinOp, Builtin, Expr, Kind, Lambda};

pub const MAX_DEPTH: usize = 4;

const CONSTANTS: [f64; 9] = [0.001, 0.01, 0.05, 0.1, 0.3, 0.5, 1.0, 2.0, 3.0];

/// Generator over a fixed variable list; `Expr::Param(i)` refers to `vars[i]`.
pub struct Gen<'a, R: Rng> {
    pub rng: &'a mut R,
    pub vars: &'a [(String, Kind)],
}

impl<R: Rng> Gen<'_, R> {
    fn var_of(&mut self, kind: Kind) -> Option<Expr> {
        let idx: Vec<usize> = (0..self.vars.len()).filter(|&i| self.vars[i].1 == kind).collect();
        idx.choose(self.rng).map(|&i| Expr::Param(i))
    }

    fn constant(&mut self) -> Expr {
        Expr::Num(*CONSTANTS.choose(self.rng).expect("non-empty"))
    }

    fn has(&self, kind: Kind) -> bool {
        self.vars.iter().any(|(_, k)| *k == kind)
    }

    /// Expression of `kind` with depth at most `depth`, or `None` when no
    /// vector variable exists for a vector request.
    pub fn expr(&mut self, kind: Kind, depth: usize) -> Option<Expr> {
        match kind {
            Kind::Scalar => Some(self.scalar(depth.max(1))),
            Kind::Vector => self.vector(depth.max(1)),
        }
    }

    fn scalar_leaf(&mut self, depth: usize) -> Expr {
        let r: f64 = self.rng.random();
        if r < 0.3 && depth >= 2 && self.has(Kind::Vector) {
            let v = self.var_of(Kind::Vector).expect("has vector");
            let f = *[Builtin::Mean, Builtin::Max, Builtin::Std, Builtin::Sum, Builtin::Entropy]
                .choose(self.rng)
                .expect("non-empty");
            return Expr::Call(f, vec![v]);
        }
        if r < 0.8 {
            if let Some(v) = self.var_of(Kind::Scalar) {
                return v;
            }
        }
        self.constant()
    }

    pub fn scalar(&mut self, depth: usize) -> Expr {
        if depth <= 1 || self.rng.random_bool(0.25) {
            return self.scalar_leaf(depth);
        }
        let d = depth - 1;
        match self.rng.random_range(0..7) {
            0 | 1 => {
                let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul].choose(self.rng).expect("non-empty");
                Expr::binary(op, self.scalar(d), self.scalar(d))
            }
            2 if d >= 3 => {
                let den = Expr::binary(BinOp::Add, Expr::Num(1.0), Expr::Call(Builtin::Abs, vec![self.scalar(d - 2)]));
                Expr::binary(BinOp::Div, self.scalar(d), den)
            }
            3 => {
                let f = *[Builtin::Tanh, Builtin::Sigmoid, Builtin::Abs].choose(self.rng).expect("non-empty");
                Expr::Call(f, vec![self.scalar(d)])
            }
            4 if d >= 2 => {
                let f = *[Builtin::Log1p, Builtin::Sqrt].choose(self.rng).expect("non-empty");
                Expr::Call(f, vec![Expr::Call(Builtin::Abs, vec![self.scalar(d - 1)])])
            }
            5 if self.has(Kind::Vector) => {
                let f = *[Builtin::Mean, Builtin::Max, Builtin::Min, Builtin::Std, Builtin::Sum]
                    .choose(self.rng)
                    .expect("non-empty");
                let v = self.vector(d).expect("has vector");
                Expr::Call(f, vec![v])
            }
            _ => Expr::binary(BinOp::Mul, self.constant(), self.scalar(d)),
        }
    }

    pub fn vector(&mut self, depth: usize) -> Option<Expr> {
        if !self.has(Kind::Vector) {
            return None;
        }
        if depth <= 1 || self.rng.random_bool(0.25) {
            return self.var_of(Kind::Vector);
        }
        let d = depth - 1;
        let e = match self.rng.random_range(0..6) {
            0 | 1 => {
                let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul].choose(self.rng).expect("non-empty");
                let rhs = if self.rng.random_bool(0.5) {
                    self.vector(d)?
                } else {
                    self.scalar(d)
                };
                Expr::binary(op, self.vector(d)?, rhs)
            }
            2 => {
                let f = *[Builtin::Tanh, Builtin::Sigmoid, Builtin::Abs, Builtin::Sign]
                    .choose(self.rng)
                    .expect("non-empty");
                Expr::Call(f, vec![self.vector(d)?])
            }
            3 if d >= 3 => {
                let den = Expr::binary(BinOp::Add, Expr::Num(1.0), Expr::Call(Builtin::Abs, vec![self.vector(d - 2)?]));
                Expr::binary(BinOp::Div, self.vector(d)?, den)
            }
            4 => Expr::Call(Builtin::Softmax, vec![self.vector(d)?]),
            _ => Expr::binary(BinOp::Mul, self.constant(), self.vector(d)?),
        };
        Some(e)
    }
}

/// Turns an expression over `vars` into a lambda declaring only the variables it uses.
pub fn close_over(body: &Expr, vars: &[(String, Kind)]) -> Lambda {
    let mut used = vec![false; vars.len()];
    body.collect_params(&mut used);
    let mut remap = vec![usize::MAX; vars.len()];
    let mut params = Vec::new();
    // order parameters by first appearance
    let mut order = Vec::new();
    first_use(body, &mut order);
    for i in order {
        if remap[i] == usize::MAX {
            remap[i] = params.len();
            params.push(vars[i].0.clone());
        }
    }
    Lambda {
        params,
        body: map_params(body, &|i| Expr::Param(remap[i])),
    }
}

fn first_use(e: &Expr, out: &mut Vec<usize>) {
    match e {
        Expr::Num(_) => {}
        Expr::Param(i) => out.push(*i),
        Expr::Neg(a) => first_use(a, out),
        Expr::Binary(_, a, b) => {
            first_use(a, out);
            first_use(b, out);
        }
        Expr::Call(_, args) => args.iter().for_each(|a| first_use(a, out)),
    }
}

/// Replaces every parameter reference.
pub fn map_params(e: &Expr, f: &dyn Fn(usize) -> Expr) -> Expr {
    match e {
        Expr::Num(v) => Expr::Num(*v),
        Expr::Param(i) => f(*i),
        Expr::Neg(a) => Expr::Neg(Box::new(map_params(a, f))),
        Expr::Binary(op, a, b) => Expr::binary(*op, map_params(a, f), map_params(b, f)),
        Expr::Call(b, args) => Expr::Call(*b, args.iter().map(|a| map_params(a, f)).collect()),
    }
}

/// Subtrees in pre-order with their depth below the root (root = 0).
fn subtrees(e: &Expr) -> Vec<(&Expr, usize)> {
    fn go<'e>(e: &'e Expr, d: usize, out: &mut Vec<(&'e Expr, usize)>) {
        out.push((e, d));
        match e {
            Expr::Num(_) | Expr::Param(_) => {}
            Expr::Neg(a) => go(a, d + 1, out),
            Expr::Binary(_, a, b) => {
                go(a, d + 1, out);
                go(b, d + 1, out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| go(a, d + 1, out)),
        }
    }
    let mut out = Vec::new();
    go(e, 0, &mut out);
    out
}

fn replace_nth(e: &Expr, n: &mut usize, with: &Expr) -> Expr {
    if *n == 0 {
        *n = usize::MAX;
        return with.clone();
    }
    *n = n.wrapping_sub(1);
    match e {
        Expr::Num(_) | Expr::Param(_) => e.clone(),
        Expr::Neg(a) => Expr::Neg(Box::new(replace_nth(a, n, with))),
        Expr::Binary(op, a, b) => {
            let a2 = replace_nth(a, n, with);
            Expr::binary(*op, a2, replace_nth(b, n, with))
        }
        Expr::Call(f, args) => Expr::Call(*f, args.iter().map(|a| replace_nth(a, n, with)).collect()),
    }
}

/// Mutates one subtree of `lambda`: a constant is rescaled, or a subtree is
/// replaced by a fresh expression of the same kind over `vars` (which must
/// start with the lambda's own parameters). New subtrees are at most
/// `MAX_DEPTH` deep and never make the body deeper than
/// `max(MAX_DEPTH, original depth)`.
pub fn mutate<R: Rng>(rng: &mut R, lambda: &Lambda, vars: &[(String, Kind)]) -> Option<Lambda> {
    let kinds: Vec<Kind> = vars.iter().map(|(_, k)| *k).collect();
    let limit = lambda.body.depth().max(MAX_DEPTH);
    let subs = subtrees(&lambda.body);
    for _ in 0..8 {
        let pick = rng.random_range(0..subs.len());
        let (sub, at) = subs[pick];
        let budget = (limit - at).min(MAX_DEPTH);
        let replacement = match sub {
            Expr::Num(v) if rng.random_bool(0.6) => {
                let f = *[0.5, 0.8, 1.25, 2.0, -1.0].choose(rng).expect("non-empty");
                Expr::Num(v * f)
            }
            _ => {
                let kind = infer_kind(sub, &kinds)?;
                let mut g = Gen { rng: &mut *rng, vars };
                if rng_bool(g.rng, 0.3) {
                    // wrap: sub + c * fresh
                    if budget < 3 {
                        continue;
                    }
                    let fresh = g.expr(kind, budget - 2)?;
                    let c = g.constant();
                    Expr::binary(BinOp::Add, sub.clone(), Expr::binary(BinOp::Mul, c, fresh))
                } else {
                    g.expr(kind, budget)?
                }
            }
        };
        let mut n = pick;
        let body = replace_nth(&lambda.body, &mut n, &replacement);
        if body != lambda.body && body.depth() <= limit {
            return Some(close_over(&body, vars));
        }
    }
    None
}

fn rng_bool<R: Rng>(rng: &mut R, p: f64) -> bool {
    rng.random_bool(p)
}
