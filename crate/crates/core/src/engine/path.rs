//! Paths and their enumeration.
//!
//! A path assigns one alternative to each node reachable from `output` under
//! the alternatives it has already chosen. Shared dependencies are assigned
//! once, so the path count is computed by a dynamic program over nodes in
//! referrer-first order whose state is the set of nodes still required.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::{reachable_from_output, topo_order, Lattice, OUTPUT};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Path {
    pub assignment: BTreeMap<String, usize>,
}

impl Path {
    pub fn get(&self, node: &str) -> Option<usize> {
        self.assignment.get(node).copied()
    }

    pub fn contains(&self, node: &str, alt: usize) -> bool {
        self.get(node) == Some(alt)
    }

    /// Whether this is a well-formed path of `lattice`: `output` assigned,
    /// every chosen alternative's node references assigned, nothing extra.
    pub fn is_closed_over(&self, lattice: &Lattice) -> bool {
        if !self.assignment.contains_key(OUTPUT) {
            return false;
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![OUTPUT];
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            let Some(i) = self.get(n) else { return false };
            let Some(alt) = lattice.alternative(n, i) else { return false };
            stack.extend(lattice.node_refs(alt));
        }
        seen.len() == self.assignment.len()
    }

    /// Alternative names along the path, for display.
    pub fn describe(&self, lattice: &Lattice) -> String {
        self.assignment
            .iter()
            .map(|(n, i)| match lattice.alternative(n, *i) {
                Some(a) => a.name.clone(),
                None => format!("{n}[{i}]"),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.assignment.iter().map(|(n, i)| format!("{n}={i}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    pub paths: Vec<Path>,
    pub total: u128,
    pub sampled: bool,
}

type Bits = Vec<u64>;

fn bit(bits: &Bits, i: usize) -> bool {
    bits[i / 64] >> (i % 64) & 1 == 1
}

fn set(bits: &mut Bits, i: usize, on: bool) {
    if on {
        bits[i / 64] |= 1 << (i % 64);
    } else {
        bits[i / 64] &= !(1 << (i % 64));
    }
}

/// Counting/unranking structure over the reachable part of an acyclic lattice.
pub struct PathSpace<'a> {
    lattice: &'a Lattice,
    order: Vec<String>,
    /// deps[k][a]: order positions referenced by alternative `a` of node `order[k]`.
    deps: Vec<Vec<Vec<usize>>>,
    memo: HashMap<(usize, Bits), u128>,
}

impl<'a> PathSpace<'a> {
    /// `None` if the reachable part of the lattice is cyclic or `output` is missing or empty.
    pub fn new(lattice: &'a Lattice) -> Option<Self> {
        if lattice.output().is_none_or(|o| o.alternatives.is_empty()) {
            return None;
        }
        let reachable = reachable_from_output(lattice);
        let mut sub = Lattice::default();
        for name in &reachable {
            sub.nodes.insert(name.clone(), lattice.nodes[name].clone());
        }
        let mut order = topo_order(&sub)?;
        order.reverse();
        let pos: HashMap<&str, usize> = order.iter().enumerate().map(|(k, n)| (n.as_str(), k)).collect();
        let deps = order
            .iter()
            .map(|n| {
                lattice.nodes[n]
                    .alternatives
                    .iter()
                    .map(|a| {
                        let set: BTreeSet<usize> = lattice.node_refs(a).map(|r| pos[r]).collect();
                        set.into_iter().collect()
                    })
                    .collect()
            })
            .collect();
        debug_assert_eq!(order.first().map(String::as_str), Some(OUTPUT));
        Some(PathSpace {
            lattice,
            order,
            deps,
            memo: HashMap::new(),
        })
    }

    fn start(&self) -> Bits {
        let mut b = vec![0u64; self.order.len().div_ceil(64).max(1)];
        set(&mut b, 0, true);
        b
    }

    fn next_required(&self, k: usize, alt: usize, req: &Bits) -> Bits {
        let mut r = req.clone();
        set(&mut r, k, false);
        for &d in &self.deps[k][alt] {
            set(&mut r, d, true);
        }
        r
    }

    fn count_from(&mut self, k: usize, req: Bits) -> u128 {
        if k == self.order.len() {
            return 1;
        }
        if !bit(&req, k) {
            return self.count_from(k + 1, req);
        }
        if let Some(&c) = self.memo.get(&(k, req.clone())) {
            return c;
        }
        let mut total: u128 = 0;
        for a in 0..self.deps[k].len() {
            let next = self.next_required(k, a, &req);
            total = total.saturating_add(self.count_from(k + 1, next));
        }
        self.memo.insert((k, req), total);
        total
    }

    pub fn total(&mut self) -> u128 {
        let s = self.start();
        self.count_from(0, s)
    }

    /// The `index`-th path in this structure's internal order.
    pub fn unrank(&mut self, mut index: u128) -> Path {
        let mut req = self.start();
        let mut assignment = BTreeMap::new();
        for k in 0..self.order.len() {
            if !bit(&req, k) {
                continue;
            }
            let nalts = self.deps[k].len();
            let mut chosen = nalts - 1;
            for a in 0..nalts {
                let next = self.next_required(k, a, &req);
                let c = self.count_from(k + 1, next);
                if index < c {
                    chosen = a;
                    break;
                }
                index -= c;
            }
            assignment.insert(self.order[k].clone(), chosen);
            req = self.next_required(k, chosen, &req);
        }
        Path { assignment }
    }

    /// Inverse of [`unrank`](Self::unrank). `None` if `path` is not a path of this lattice.
    pub fn rank(&mut self, path: &Path) -> Option<u128> {
        if !path.is_closed_over(self.lattice) {
            return None;
        }
        let mut req = self.start();
        let mut index: u128 = 0;
        for k in 0..self.order.len() {
            if !bit(&req, k) {
                continue;
            }
            let chosen = path.get(&self.order[k])?;
            for a in 0..chosen {
                let next = self.next_required(k, a, &req);
                index = index.saturating_add(self.count_from(k + 1, next));
            }
            req = self.next_required(k, chosen, &req);
        }
        Some(index)
    }

    /// Every path, sorted.
    pub fn all(&mut self) -> Vec<Path> {
        let mut out = Vec::new();
        let mut assignment = BTreeMap::new();
        let s = self.start();
        self.walk(0, s, &mut assignment, &mut out);
        out.sort();
        out
    }

    fn walk(&self, k: usize, req: Bits, asg: &mut BTreeMap<String, usize>, out: &mut Vec<Path>) {
        if k == self.order.len() {
            out.push(Path {
                assignment: asg.clone(),
            });
            return;
        }
        if !bit(&req, k) {
            return self.walk(k + 1, req, asg, out);
        }
        for a in 0..self.deps[k].len() {
            asg.insert(self.order[k].clone(), a);
            self.walk(k + 1, self.next_required(k, a, &req), asg, out);
        }
        asg.remove(&self.order[k]);
    }
}

/// Distinct uniform sample of `m` values from `0..n` (Floyd's algorithm).
fn sample_indices(rng: &mut ChaCha8Rng, n: u128, m: u128) -> BTreeSet<u128> {
    let mut chosen = BTreeSet::new();
    for j in (n - m)..n {
        let t = rng.random_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen
}

/// Enumerates paths of a valid lattice. If the total exceeds `budget`, a
/// uniform sample without replacement of `budget` paths is drawn with `seed`;
/// `best`, when it is a path of this lattice, is always part of the sample.
/// Returned paths are sorted.
pub fn enumerate_paths(lattice: &Lattice, budget: usize, seed: u64, best: Option<&Path>) -> Enumeration {
    enumerate_paths_including(lattice, budget, seed, best.map(std::slice::from_ref).unwrap_or_default())
}

/// Like [`enumerate_paths`], but every path of `include` that belongs to the
/// lattice is kept in a sample (up to `budget` of them, in the given order)
/// and the rest of the sample is uniform over the remaining paths.
pub fn enumerate_paths_including(lattice: &Lattice, budget: usize, seed: u64, include: &[Path]) -> Enumeration {
    let Some(mut space) = PathSpace::new(lattice) else {
        return Enumeration {
            paths: Vec::new(),
            total: 0,
            sampled: false,
        };
    };
    let total = space.total();
    let budget = budget.max(1) as u128;
    if total <= budget {
        return Enumeration {
            paths: space.all(),
            total,
            sampled: false,
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<u128> = Vec::new();
    for r in include.iter().filter_map(|p| space.rank(p)) {
        if !keep.contains(&r) && (keep.len() as u128) < budget {
            keep.push(r);
        }
    }
    let k = keep.len() as u128;
    keep.sort_unstable();
    let mut indices: Vec<u128> = sample_indices(&mut rng, total - k, budget - k)
        .into_iter()
        .map(|mut j| {
            // skip over kept ranks so the draw covers only the other paths
            for &r in &keep {
                if j >= r {
                    j += 1;
                }
            }
            j
        })
        .collect();
    indices.extend(keep);
    indices.sort_unstable();
    let mut paths: Vec<Path> = indices.into_iter().map(|i| space.unrank(i)).collect();
    paths.sort();
    Enumeration {
        paths,
        total,
        sampled: true,
    }
}

/// Path count of a lattice (0 if it has no executable path).
pub fn count_paths(lattice: &Lattice) -> u128 {
    PathSpace::new(lattice).map_or(0, |mut s| s.total())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> Lattice {
        let mut l = Lattice::new(["x"]);
        l.push("a", "lambda x: x").unwrap();
        l.push("a", "lambda x: 2 * x").unwrap();
        l.push("b", "lambda a: a + 1").unwrap();
        l.push("c", "lambda a: a - 1").unwrap();
        l.push("c", "lambda x: x").unwrap();
        l.push("output", "lambda b, c: b * c").unwrap();
        l
    }

    #[test]
    fn shared_dependency_is_assigned_once() {
        let l = diamond();
        let mut s = PathSpace::new(&l).unwrap();
        // a (2) shared by b and c; c's second alternative drops a from c's side only
        assert_eq!(s.total(), 4);
        let all = s.all();
        assert_eq!(all.len(), 4);
        for p in &all {
            assert!(p.is_closed_over(&l));
        }
    }

    #[test]
    fn rank_inverts_unrank() {
        let l = diamond();
        let mut s = PathSpace::new(&l).unwrap();
        for i in 0..s.total() {
            let p = s.unrank(i);
            assert_eq!(s.rank(&p), Some(i));
        }
    }

    #[test]
    fn single_path() {
        let mut l = Lattice::new(["x"]);
        l.push("output", "lambda x: x").unwrap();
        let e = enumerate_paths(&l, 10, 0, None);
        assert_eq!((e.paths.len(), e.total, e.sampled), (1, 1, false));
    }

    #[test]
    fn sample_keeps_every_included_path() {
        let l = diamond();
        let all = PathSpace::new(&l).unwrap().all();
        for seed in 0..20 {
            let e = enumerate_paths_including(&l, 3, seed, &[all[0].clone(), all[2].clone()]);
            assert_eq!(e.paths.len(), 3);
            assert!(e.paths.contains(&all[0]) && e.paths.contains(&all[2]));
            let mut d = e.paths.clone();
            d.dedup();
            assert_eq!(d.len(), 3);
        }
    }

    #[test]
    fn sample_keeps_best() {
        let l = diamond();
        let all = PathSpace::new(&l).unwrap().all();
        for seed in 0..20 {
            let e = enumerate_paths(&l, 2, seed, Some(&all[3]));
            assert!(e.sampled);
            assert_eq!(e.paths.len(), 2);
            assert!(e.paths.contains(&all[3]));
            assert_ne!(e.paths[0], e.paths[1]);
        }
    }
}
