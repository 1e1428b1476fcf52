//! Offline proposal source: random grammar-generated edits.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grammar::{close_over, mutate, Gen, MAX_DEPTH};
use super::{ChatBackend, ChatRequest, OracleContext, Purpose, TransportError};
use crate::evolution::{Edit, MutationPlan};
use crate::expr::{infer_kind, parse, BinOp, Builtin, Expr, Kind, Lambda};
use crate::lattice::{topo_order, Alternative, Lattice, OUTPUT};
use crate::seed::derive_seed;

pub struct GrammarSampler {
    seed: u64,
}

type Vars = Vec<(String, Kind)>;

/// Kind of every node whose first typeable alternative has a known kind.
fn node_kinds(l: &Lattice, inputs: &[(String, Kind)]) -> HashMap<String, Kind> {
    let mut kinds: HashMap<String, Kind> = inputs.iter().cloned().collect();
    let order = topo_order(l).unwrap_or_else(|| l.nodes.keys().cloned().collect());
    for name in order {
        let k = l.nodes[&name].alternatives.iter().find_map(|a| {
            let pk: Option<Vec<Kind>> = a.params().iter().map(|p| kinds.get(p).copied()).collect();
            infer_kind(&a.lambda().body, &pk?)
        });
        if let Some(k) = k {
            kinds.insert(name, k);
        }
    }
    kinds
}

/// Whether any alternative of `from` reaches `to` through node references.
fn depends_on(l: &Lattice, from: &str, to: &str) -> bool {
    let mut seen = BTreeSet::new();
    let mut stack = vec![from];
    while let Some(n) = stack.pop() {
        if n == to {
            return true;
        }
        if !seen.insert(n) {
            continue;
        }
        if let Some(node) = l.node(n) {
            for a in &node.alternatives {
                stack.extend(l.node_refs(a));
            }
        }
    }
    false
}

fn mean_of(a: &Alternative) -> f64 {
    a.stats.as_ref().map_or(f64::NEG_INFINITY, |s| s.mean)
}

/// Index of the alternative with the highest (or lowest) mean; earliest wins ties.
fn extreme(alts: &[Alternative], highest: bool) -> usize {
    let mut best = 0;
    for (i, a) in alts.iter().enumerate() {
        let (m, b) = (mean_of(a), mean_of(&alts[best]));
        if (highest && m > b) || (!highest && m < b) {
            best = i;
        }
    }
    best
}

/// `lambda`'s own parameters first, then the rest of `pool`. `None` if a parameter has no known kind.
fn vars_for(lambda: &Lambda, pool: &Vars, kinds: &HashMap<String, Kind>) -> Option<Vars> {
    let mut vars: Vars = Vec::new();
    for p in &lambda.params {
        vars.push((p.clone(), *kinds.get(p)?));
    }
    for (n, k) in pool {
        if !lambda.params.contains(n) {
            vars.push((n.clone(), *k));
        }
    }
    Some(vars)
}

fn fresh<R: Rng>(rng: &mut R, kind: Kind, vars: &Vars) -> Option<String> {
    let mut g = Gen { rng, vars };
    let e = g.expr(kind, MAX_DEPTH)?;
    Some(close_over(&e, vars).to_string())
}

fn edited<R: Rng>(rng: &mut R, alt: &Alternative, pool: &Vars, kinds: &HashMap<String, Kind>) -> Option<String> {
    let vars = vars_for(alt.lambda(), pool, kinds)?;
    mutate(rng, alt.lambda(), &vars).map(|l| l.to_string())
}

struct Planner<'a> {
    ctx: &'a OracleContext<'a>,
    l: Lattice,
    kinds: HashMap<String, Kind>,
}

impl Planner<'_> {
    fn pool_for(&self, target: &str) -> Vars {
        let mut pool: Vars = self.ctx.task_inputs.to_vec();
        for name in self.l.nodes.keys() {
            if name == OUTPUT || name == target || depends_on(&self.l, name, target) {
                continue;
            }
            if let Some(k) = self.kinds.get(name) {
                pool.push((name.clone(), *k));
            }
        }
        pool
    }

    fn inner_nodes(&self) -> Vec<String> {
        self.l
            .nodes
            .keys()
            .filter(|n| *n != OUTPUT && self.kinds.contains_key(*n))
            .cloned()
            .collect()
    }

    /// A node on the best path, weighted by importance when it is known.
    fn best_path_node<R: Rng>(&self, rng: &mut R) -> Option<(String, usize)> {
        let best = self.ctx.best_path?;
        let nodes: Vec<(&String, usize)> = best
            .assignment
            .iter()
            .filter(|(n, i)| self.l.alternative(n, **i).is_some())
            .map(|(n, i)| (n, *i))
            .collect();
        let known: Vec<f64> = self
            .ctx
            .importance
            .map(|t| t.entries.iter().filter_map(|e| e.importance).collect())
            .unwrap_or_default();
        // output is never perturbed, so it and any failed node get the mean weight
        let fallback = if known.is_empty() { 1.0 } else { known.iter().sum::<f64>() / known.len() as f64 };
        let weight = |n: &str| {
            let imp = self.ctx.importance.and_then(|t| t.get(n)).and_then(|e| e.importance);
            imp.unwrap_or(fallback) + 1e-9
        };
        let (n, i) = nodes.choose_weighted(rng, |(n, _)| weight(n)).ok()?;
        Some(((*n).clone(), *i))
    }

    fn add_alternative<R: Rng>(&self, rng: &mut R) -> Option<Edit> {
        if rng.random_bool(0.6) {
            if let Some((node, i)) = self.best_path_node(rng) {
                let pool = self.pool_for(&node);
                let alt = &self.l.nodes[&node].alternatives[i];
                if let Some(source) = edited(rng, alt, &pool, &self.kinds) {
                    return Some(Edit::AddAlternative { node, source, name: None });
                }
            }
        }
        let names: Vec<&String> = self.l.nodes.keys().collect();
        let node = (*names.choose(rng)?).clone();
        let kind = *self.kinds.get(&node).unwrap_or(&self.ctx.output_kind);
        let pool = self.pool_for(&node);
        let alts = &self.l.nodes[&node].alternatives;
        let source = if !alts.is_empty() && rng.random_bool(0.5) {
            let best = &alts[extreme(alts, true)];
            edited(rng, best, &pool, &self.kinds).or_else(|| fresh(rng, kind, &pool))
        } else {
            fresh(rng, kind, &pool)
        }?;
        Some(Edit::AddAlternative { node, source, name: None })
    }

    /// A new node plus an output alternative that mixes it into the current best output.
    fn add_node<R: Rng>(&self, rng: &mut R) -> Option<Vec<Edit>> {
        let name = (0..).map(|k| format!("n{k}")).find(|n| !self.l.nodes.contains_key(n))?;
        let kind = if rng.random_bool(0.8) { Kind::Scalar } else { self.ctx.output_kind };
        let pool = self.pool_for(&name);
        let source = fresh(rng, kind, &pool)?;
        let out = self.l.output()?;
        let best = out.alternatives.get(extreme(&out.alternatives, true))?.lambda();
        let mut vars = vars_for(best, &Vec::new(), &self.kinds)?;
        vars.push((name.clone(), kind));
        let c = *[0.05, 0.1, 0.3, 0.5, 1.0].choose(rng)?;
        let mix = Expr::binary(BinOp::Mul, Expr::Num(c), Expr::Param(vars.len() - 1));
        let op = if rng.random_bool(0.5) { BinOp::Add } else { BinOp::Sub };
        let body = Expr::binary(op, best.body.clone(), mix);
        Some(vec![
            Edit::AddNode {
                name,
                sources: vec![source],
            },
            Edit::AddAlternative {
                node: OUTPUT.into(),
                source: close_over(&body, &vars).to_string(),
                name: None,
            },
        ])
    }

    fn recombine<R: Rng>(&self, rng: &mut R) -> Option<Edit> {
        let inner = self.inner_nodes();
        let picks: Vec<&String> = inner.choose_multiple(rng, 2).collect();
        let [a, b] = picks[..] else { return None };
        let vars: Vars = vec![(a.clone(), self.kinds[a]), (b.clone(), self.kinds[b])];
        let want = self.ctx.output_kind;
        let fit = |i: usize| match (vars[i].1, want) {
            (Kind::Vector, Kind::Scalar) => Expr::Call(Builtin::Mean, vec![Expr::Param(i)]),
            _ => Expr::Param(i),
        };
        if want == Kind::Vector && vars.iter().all(|(_, k)| *k == Kind::Scalar) {
            return None;
        }
        let c = *[0.3, 0.5, 0.7].choose(rng)?;
        let body = match rng.random_range(0..4) {
            0 => Expr::binary(BinOp::Add, fit(0), fit(1)),
            1 => Expr::binary(BinOp::Mul, fit(0), fit(1)),
            2 => Expr::binary(BinOp::Sub, fit(0), fit(1)),
            _ => Expr::binary(
                BinOp::Add,
                Expr::binary(BinOp::Mul, Expr::Num(c), fit(0)),
                Expr::binary(BinOp::Mul, Expr::Num(1.0 - c), fit(1)),
            ),
        };
        Some(Edit::AddAlternative {
            node: OUTPUT.into(),
            source: close_over(&body, &vars).to_string(),
            name: None,
        })
    }

    fn multi_alt_nodes(&self) -> Vec<String> {
        self.l
            .nodes
            .iter()
            .filter(|(_, n)| n.alternatives.len() >= 2)
            .map(|(k, _)| k.clone())
            .collect()
    }

    fn delete_worst<R: Rng>(&self, rng: &mut R) -> Option<Edit> {
        let node = self.multi_alt_nodes().choose(rng)?.clone();
        let alts = &self.l.nodes[&node].alternatives;
        let name = alts[extreme(alts, false)].name.clone();
        Some(Edit::DeleteAlternative { node, name })
    }

    fn replace_worst<R: Rng>(&self, rng: &mut R) -> Option<Edit> {
        let node = self.multi_alt_nodes().choose(rng)?.clone();
        let alts = &self.l.nodes[&node].alternatives;
        let (best, worst) = (extreme(alts, true), extreme(alts, false));
        if best == worst {
            return None;
        }
        let source = edited(rng, &alts[best], &self.pool_for(&node), &self.kinds)?;
        Some(Edit::ReplaceAlternative {
            node,
            name: alts[worst].name.clone(),
            source,
        })
    }

    fn one<R: Rng>(&self, rng: &mut R) -> Vec<Edit> {
        let r: f64 = rng.random();
        let picked = if r < 0.45 {
            self.add_alternative(rng).map(|e| vec![e])
        } else if r < 0.65 {
            self.add_node(rng)
        } else if r < 0.80 {
            self.recombine(rng).map(|e| vec![e])
        } else if r < 0.90 {
            self.delete_worst(rng).map(|e| vec![e])
        } else {
            self.replace_worst(rng).map(|e| vec![e])
        };
        picked
            .or_else(|| self.add_alternative(rng).map(|e| vec![e]))
            .unwrap_or_default()
    }
}

impl GrammarSampler {
    pub fn new(seed: u64) -> Self {
        GrammarSampler { seed }
    }

    fn rng(&self, req: &ChatRequest<'_>) -> ChaCha8Rng {
        let label = format!("grammar/{:?}/{}/{}", req.purpose, req.step, req.attempt);
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &label))
    }

    /// Sampled plan of one or two edits for the context's lattice.
    pub fn plan(&self, rng: &mut ChaCha8Rng, ctx: &OracleContext<'_>) -> MutationPlan {
        let planner = Planner {
            ctx,
            l: ctx.lattice.clone(),
            kinds: node_kinds(ctx.lattice, ctx.task_inputs),
        };
        let n = if rng.random_bool(0.5) { 2 } else { 1 };
        let mut edits = Vec::new();
        for _ in 0..n {
            edits.extend(planner.one(rng));
        }
        MutationPlan::new(edits)
    }

    fn hypotheses(ctx: &OracleContext<'_>) -> String {
        let mut s = String::new();
        for (i, node) in ctx.lattice.nodes.values().enumerate() {
            let alts = &node.alternatives;
            if alts.is_empty() {
                continue;
            }
            let b = &alts[extreme(alts, true)];
            let _ = writeln!(
                s,
                "{}. {} has {} alternative(s); build on {} (mean {})",
                i + 1,
                node.name,
                alts.len(),
                b.name,
                b.stats.as_ref().map_or("none".into(), |st| format!("{:.4}", st.mean))
            );
        }
        s
    }
}

impl ChatBackend for GrammarSampler {
    fn respond(&mut self, req: &ChatRequest<'_>) -> Result<String, TransportError> {
        let mut rng = self.rng(req);
        let ctx = req.context;
        let vars: Vars = ctx.task_inputs.to_vec();
        Ok(match req.purpose {
            Purpose::Hypotheses => Self::hypotheses(ctx),
            Purpose::Mutation => format!("```json\n{}\n```\n", self.plan(&mut rng, ctx).to_json()),
            Purpose::Regenerate => {
                let src = fresh(&mut rng, ctx.output_kind, &vars).unwrap_or_default();
                format!("```\n{src}\n```\n")
            }
            Purpose::Edit => {
                let current = req.current.unwrap_or_default();
                let kinds: HashMap<String, Kind> = vars.iter().cloned().collect();
                let src = parse(current)
                    .ok()
                    .and_then(|l| mutate(&mut rng, &l, &vars_for(&l, &vars, &kinds)?))
                    .map(|l| l.to_string())
                    .or_else(|| fresh(&mut rng, ctx.output_kind, &vars))
                    .unwrap_or_default();
                format!("```\n{src}\n```\n")
            }
        })
    }
}
