#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use evolattice::engine::{Batch, BatchToken, Candidate, EvaluationReport};
use evolattice::expr::{Kind, Value};
use evolattice::lattice::{deserialize_snapshot, Alternative, Lattice, Node, OUTPUT};
use evolattice::repair::{repair, RepairOptions};
use evolattice::tasks::{Task, TaskError};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value as Json;

pub const MINIMAL: &str = include_str!("../../fixtures/zerolm_minimal.lattice");
pub const MINIMAL_INPUTS: [&str; 5] = ["spec_topk_mean", "cov_sum", "spectral_cv_abs", "spectral_entropy", "spec_vec"];

pub fn minimal() -> Lattice {
    deserialize_snapshot(MINIMAL).unwrap().with_inputs(MINIMAL_INPUTS)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A smooth body over `params`, bounded enough that random lattices rarely fail.
fn body(rng: &mut ChaCha8Rng, params: &[String]) -> String {
    let terms: Vec<String> = params
        .iter()
        .map(|p| {
            let c = rng.random_range(1..10) as f64 / 10.0;
            match rng.random_range(0..5) {
                0 => format!("tanh({p})"),
                1 => format!("{c} * {p}"),
                2 => format!("sigmoid({p} - {c})"),
                3 => format!("{p}"),
                _ => format!("tanh({c} * {p} * {p})"),
            }
        })
        .collect();
    let op = if rng.random_bool(0.7) { " + " } else { " * " };
    let c = rng.random_range(0..20) as f64 / 10.0;
    format!("{} + {c}", terms.join(op))
}

fn source(rng: &mut ChaCha8Rng, params: Vec<String>) -> String {
    let b = body(rng, &params);
    format!("lambda {}: {b}", params.join(", "))
}

/// Acyclic lattice over input `x`: inner node `nK` may reference `x` and
/// any `nJ` with `J < K`; output references any inner node. Nodes may be
/// unreachable.
pub fn random_lattice(seed: u64, max_nodes: usize, max_alts: usize) -> Lattice {
    let mut rng = rng(seed);
    let inner = rng.random_range(0..max_nodes.max(1));
    let names: Vec<String> = (0..inner).map(|i| format!("n{i}")).collect();
    let mut l = Lattice::new(["x"]);
    for k in 0..=inner {
        let node = if k == inner { OUTPUT.to_string() } else { names[k].clone() };
        for _ in 0..rng.random_range(1..=max_alts) {
            let mut params: Vec<String> = names[..k]
                .iter()
                .filter(|_| rng.random_bool(0.4))
                .take(3)
                .cloned()
                .collect();
            if params.is_empty() || rng.random_bool(0.3) {
                params.push("x".into());
            }
            l.push(&node, &source(&mut rng, params)).unwrap();
        }
    }
    l
}

/// Random lattice with unreachable nodes pruned.
pub fn random_valid_lattice(seed: u64, max_nodes: usize, max_alts: usize) -> Lattice {
    repair(&random_lattice(seed, max_nodes, max_alts), &RepairOptions::default())
        .expect("output always has alternatives")
        .0
}

/// Tree-shaped lattice: every inner node has exactly one parent node, and
/// the parent's alternatives reference subsets of its children.
pub fn random_tree_lattice(seed: u64, max_nodes: usize, max_alts: usize) -> Lattice {
    let mut rng = rng(seed);
    let inner = rng.random_range(0..max_nodes.max(1));
    let names: Vec<String> = (0..inner)
        .map(|i| format!("n{i}"))
        .chain([OUTPUT.to_string()])
        .collect();
    let mut children: Vec<Vec<String>> = vec![Vec::new(); inner + 1];
    for i in 0..inner {
        let parent = rng.random_range(i + 1..=inner);
        children[parent].push(names[i].clone());
    }
    let mut l = Lattice::new(["x"]);
    for k in 0..=inner {
        for _ in 0..rng.random_range(1..=max_alts) {
            let mut params: Vec<String> = children[k].iter().filter(|_| rng.random_bool(0.6)).cloned().collect();
            if params.is_empty() {
                params.push("x".into());
            }
            l.push(&names[k], &source(&mut rng, params)).unwrap();
        }
    }
    l
}

/// Every closed assignment reachable from output, by exhaustive search.
pub fn brute_force_paths(l: &Lattice) -> BTreeSet<BTreeMap<String, usize>> {
    fn go(l: &Lattice, assigned: BTreeMap<String, usize>, mut pending: Vec<String>, out: &mut BTreeSet<BTreeMap<String, usize>>) {
        let Some(n) = pending.pop() else {
            out.insert(assigned);
            return;
        };
        if assigned.contains_key(&n) {
            go(l, assigned, pending, out);
            return;
        }
        for (i, alt) in l.nodes[&n].alternatives.iter().enumerate() {
            let mut a = assigned.clone();
            a.insert(n.clone(), i);
            let mut p = pending.clone();
            p.extend(alt.params().iter().filter(|q| l.nodes.contains_key(*q)).cloned());
            go(l, a, p, out);
        }
    }
    let mut out = BTreeSet::new();
    go(l, BTreeMap::new(), vec![OUTPUT.to_string()], &mut out);
    out
}

/// count(v) = sum over alternatives of the product of count(r) over referenced nodes.
pub fn recurrence_count(l: &Lattice) -> u128 {
    fn count(l: &Lattice, n: &str, memo: &mut BTreeMap<String, u128>) -> u128 {
        if let Some(c) = memo.get(n) {
            return *c;
        }
        let mut total = 0;
        for alt in &l.nodes[n].alternatives {
            let mut prod = 1;
            for r in alt.params().iter().filter(|q| l.nodes.contains_key(*q)) {
                prod *= count(l, r, memo);
            }
            total += prod;
        }
        memo.insert(n.to_string(), total);
        total
    }
    count(l, OUTPUT, &mut BTreeMap::new())
}

/// One input `x` per record; the score is the mean output. Linear in the
/// output, which makes perturbation effects easy to predict.
pub struct LinearTask {
    pub batch: Batch,
}

impl LinearTask {
    pub fn new(xs: &[f64]) -> Self {
        let records = xs.iter().map(|x| vec![("x".to_string(), Value::Scalar(*x))]).collect();
        LinearTask {
            batch: Batch::from_records(BatchToken::new(7, "linear"), records),
        }
    }
}

impl Task for LinearTask {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn inputs(&self) -> Vec<(String, Kind)> {
        vec![("x".into(), Kind::Scalar)]
    }

    fn output_kind(&self) -> Kind {
        Kind::Scalar
    }

    fn score(&self, candidate: &mut dyn Candidate) -> Result<f64, TaskError> {
        let out = candidate.run(&self.batch)?;
        let n = out.len() as f64;
        let s: f64 = out.iter().map(|v| v.as_slice().iter().sum::<f64>()).sum();
        Ok(s / n)
    }

    fn describe(&self) -> String {
        "mean output".into()
    }

    fn batches(&self) -> Vec<&Batch> {
        vec![&self.batch]
    }

    fn seed_lattice(&self) -> Lattice {
        let mut l = Lattice::new(["x"]);
        l.push(OUTPUT, "lambda x: x").unwrap();
        l
    }
}

pub fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    xs.choose(rng).unwrap()
}

/// Chat-completion stub on a local port. `reply` sees each request's
/// headers and JSON body and returns the assistant message; the pair is also
/// sent on the returned channel. Serves `max` connections, one request each.
pub fn stub_server_with(
    max: usize,
    mut reply: impl FnMut(&str, &Json) -> String + Send + 'static,
) -> (String, mpsc::Receiver<(String, Json)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for _ in 0..max {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let body: Json = serde_json::from_slice(&body).unwrap();
            let content = reply(&headers, &body);
            let _ = tx.send((headers, body));
            let payload = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
            let mut s = stream;
            write!(
                s,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1"), rx)
}

/// Serves `replies` in order, one per connection.
pub fn stub_server(replies: Vec<String>) -> (String, mpsc::Receiver<(String, Json)>) {
    let n = replies.len();
    let mut it = replies.into_iter();
    stub_server_with(n, move |_, _| it.next().unwrap())
}

/// Breaks a valid lattice in one to four ways. Original alternatives get
/// age 1 so injected ones (age 0) lose cycle tie-breaks.
pub fn corrupt(l: &Lattice, rng: &mut ChaCha8Rng) -> Lattice {
    let mut l = l.clone();
    for n in l.nodes.values_mut() {
        for a in &mut n.alternatives {
            a.age = 1;
        }
    }
    let names: Vec<String> = l.nodes.keys().cloned().collect();
    for _ in 0..rng.random_range(1..=4) {
        let target = pick(rng, &names).clone();
        let other = pick(rng, &names).clone();
        let node = l.nodes.get_mut(&target).unwrap();
        let fresh = node.next_alt_name();
        match rng.random_range(0..6) {
            // cycle (or self loop) through another node
            0 if other != OUTPUT => {
                let inner = l.nodes.get_mut(&other).unwrap();
                let name = inner.next_alt_name();
                let refs = l.nodes.keys().filter(|n| *n != OUTPUT && **n != other).cloned().collect::<Vec<_>>();
                let back = refs.first().cloned().unwrap_or_else(|| other.clone());
                let src = format!("lambda {back}: {back}");
                l.nodes.get_mut(&other).unwrap().alternatives.push(Alternative::new(name, src).unwrap());
            }
            1 => node.alternatives.push(Alternative::new(fresh, "lambda ghost: ghost").unwrap()),
            2 => node.alternatives.push(Alternative::new(fresh, "lambda output: output + 1").unwrap()),
            3 => {
                let name = format!("empty{}", rng.random_range(0..100));
                l.nodes.entry(name.clone()).or_insert_with(|| Node::new(name));
            }
            4 if target != OUTPUT => node.alternatives.clear(),
            _ => {
                if rng.random_bool(0.2) {
                    l.nodes.get_mut(OUTPUT).unwrap().alternatives.clear();
                } else {
                    let src = format!("lambda {other}: {other}");
                    node.alternatives.push(Alternative::new(fresh, src).unwrap());
                }
            }
        }
    }
    l
}

/// Independent group-by: sums per alternative, then two-pass variance.
pub fn group_by(r: &EvaluationReport) -> HashMap<(String, usize), (f64, f64, f64, usize)> {
    let mut groups: HashMap<(String, usize), Vec<f64>> = HashMap::new();
    for (p, s) in &r.scored {
        for (n, i) in &p.assignment {
            groups.entry((n.clone(), *i)).or_default().push(*s);
        }
    }
    groups
        .into_iter()
        .map(|(k, xs)| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let max = xs.iter().cloned().fold(f64::MIN, f64::max);
            (k, (mean, var.sqrt(), max, xs.len()))
        })
        .collect()
}
