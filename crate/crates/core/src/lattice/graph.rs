use std::collections::{BTreeSet, HashMap};

use super::{Lattice, OUTPUT};

/// Nodes reachable from `output` through any alternative.
pub fn reachable_from_output(lattice: &Lattice) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    if lattice.output().is_none() {
        return seen;
    }
    let mut stack = vec![OUTPUT.to_string()];
    while let Some(name) = stack.pop() {
        if !seen.insert(name.clone()) {
            continue;
        }
        if let Some(node) = lattice.node(&name) {
            for alt in &node.alternatives {
                for r in lattice.node_refs(alt) {
                    if !seen.contains(r) {
                        stack.push(r.to_string());
                    }
                }
            }
        }
    }
    seen
}

/// Strongly connected components of the node-dependency relation (Tarjan).
/// Returns a component id per node; ids are assigned in completion order.
pub fn strongly_connected(lattice: &Lattice) -> HashMap<String, usize> {
    struct State<'a> {
        lattice: &'a Lattice,
        index: HashMap<&'a str, usize>,
        low: HashMap<&'a str, usize>,
        on_stack: BTreeSet<&'a str>,
        stack: Vec<&'a str>,
        next: usize,
        comp: HashMap<String, usize>,
        ncomp: usize,
    }

    fn visit<'a>(s: &mut State<'a>, v: &'a str) {
        s.index.insert(v, s.next);
        s.low.insert(v, s.next);
        s.next += 1;
        s.stack.push(v);
        s.on_stack.insert(v);
        let lattice = s.lattice;
        let node = &lattice.nodes[v];
        let succ: BTreeSet<&'a str> = node
            .alternatives
            .iter()
            .flat_map(|a| lattice.node_refs(a))
            .collect();
        for w in succ {
            if !s.index.contains_key(w) {
                visit(s, w);
                let lw = s.low[w];
                let lv = s.low.get_mut(v).expect("visited");
                *lv = (*lv).min(lw);
            } else if s.on_stack.contains(w) {
                let iw = s.index[w];
                let lv = s.low.get_mut(v).expect("visited");
                *lv = (*lv).min(iw);
            }
        }
        if s.low[v] == s.index[v] {
            loop {
                let w = s.stack.pop().expect("non-empty");
                s.on_stack.remove(w);
                s.comp.insert(w.to_string(), s.ncomp);
                if w == v {
                    break;
                }
            }
            s.ncomp += 1;
        }
    }

    let mut s = State {
        lattice,
        index: HashMap::new(),
        low: HashMap::new(),
        on_stack: BTreeSet::new(),
        stack: Vec::new(),
        next: 0,
        comp: HashMap::new(),
        ncomp: 0,
    };
    for name in lattice.nodes.keys() {
        if !s.index.contains_key(name.as_str()) {
            visit(&mut s, name);
        }
    }
    s.comp
}

/// Dependencies-first order of all nodes, ties broken by name. `None` if cyclic.
pub fn topo_order(lattice: &Lattice) -> Option<Vec<String>> {
    let mut pending: HashMap<&str, BTreeSet<&str>> = lattice
        .nodes
        .iter()
        .map(|(name, node)| {
            let deps = node
                .alternatives
                .iter()
                .flat_map(|a| lattice.node_refs(a))
                .collect();
            (name.as_str(), deps)
        })
        .collect();
    let mut order = Vec::with_capacity(pending.len());
    while !pending.is_empty() {
        let ready: BTreeSet<&str> = pending
            .iter()
            .filter(|(_, deps)| deps.is_empty())
            .map(|(n, _)| *n)
            .collect();
        if ready.is_empty() {
            return None;
        }
        for n in &ready {
            pending.remove(n);
        }
        for deps in pending.values_mut() {
            deps.retain(|d| !ready.contains(d));
        }
        order.extend(ready.into_iter().map(str::to_string));
    }
    Some(order)
}
