//! Adversarial replies for robustness testing.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, TransportError};
use crate::seed::derive_seed;

const GARBAGE: [&str; 10] = [
    "lambda output: output + 1",
    "lambda x: x +",
    "lambda : 1",
    "lambda a, a: a",
    "lambda q: q / 0",
    "lambda nosuchnode: log(nosuchnode)",
    "not a lambda at all",
    "lambda x: exp(exp(exp(x)))",
    "lambda \"x\": x",
    "",
];

/// Random bytes, malformed JSON and plans full of bad edits.
pub struct FuzzBackend {
    seed: u64,
}

impl FuzzBackend {
    pub fn new(seed: u64) -> Self {
        FuzzBackend { seed }
    }
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &'a [String]) -> &'a str {
    xs.choose(rng).map_or("", String::as_str)
}

fn random_edit<R: Rng>(rng: &mut R, nodes: &[String], inputs: &[String]) -> Value {
    let node = if rng.random_bool(0.8) {
        pick(rng, nodes).to_string()
    } else {
        format!("ghost{}", rng.random_range(0..5))
    };
    let source = match rng.random_range(0..3) {
        0 => GARBAGE.choose(rng).expect("non-empty").to_string(),
        1 => {
            let r = pick(rng, nodes);
            let i = pick(rng, inputs);
            format!("lambda {r}, {i}: {r} * {i}")
        }
        _ => format!("lambda {}: {}", pick(rng, nodes), rng.random_range(-3.0..3.0)),
    };
    let alt = format!("{node}_{}", rng.random_range(0..4));
    match rng.random_range(0..5) {
        0 => json!({"op": "delete_alternative", "node": node, "name": alt}),
        1 => json!({"op": "add_node", "name": node, "sources": [source]}),
        2 => json!({"op": "replace_alternative", "node": node, "name": alt, "source": source}),
        3 => json!({"op": "add_alternative", "node": node, "source": source, "name": alt}),
        _ => json!({"op": "add_alternative", "node": node, "source": source}),
    }
}

impl ChatBackend for FuzzBackend {
    fn respond(&mut self, req: &ChatRequest<'_>) -> Result<String, TransportError> {
        let label = format!("fuzz/{:?}/{}/{}", req.purpose, req.step, req.attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &label));
        let nodes: Vec<String> = req.context.lattice.nodes.keys().cloned().collect();
        let inputs: Vec<String> = req.context.task_inputs.iter().map(|(n, _)| n.clone()).collect();
        Ok(match rng.random_range(0..10) {
            0 | 1 => {
                let n = rng.random_range(0..200);
                let bytes: Vec<u8> = (0..n).map(|_| rng.random()).collect();
                String::from_utf8_lossy(&bytes).into_owned()
            }
            2 => "```json\n[{\"op\": \"add_alternative\", \"node\": \n```".into(),
            3 => format!("```\n{}\n```", GARBAGE.choose(&mut rng).expect("non-empty")),
            _ => {
                let k = rng.random_range(1..5);
                let edits: Vec<Value> = (0..k).map(|_| random_edit(&mut rng, &nodes, &inputs)).collect();
                format!("```json\n{}\n```", Value::Array(edits))
            }
        })
    }
}
