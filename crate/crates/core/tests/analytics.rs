mod common;

use evolattice::analytics::{alternative_stats, node_importance, step_metrics, AnalyticsError};
use evolattice::engine::{EvaluationReport, GlobalCache, Path, PathSpace};
use evolattice::lattice::{Lattice, OUTPUT};
use evolattice::tasks::TaskError;
use proptest::prelude::*;
use rand::Rng;

fn report(scored: Vec<(Path, f64)>) -> EvaluationReport {
    EvaluationReport {
        enumerated_total: scored.len() as u128,
        scored,
        ..Default::default()
    }
}

#[test]
fn single_path_stats() {
    let p = Path {
        assignment: [("a".to_string(), 0), ("output".to_string(), 1)].into(),
    };
    let t = alternative_stats(&report(vec![(p, 0.42)]), 0).unwrap();
    assert_eq!(t.entries.len(), 2);
    for s in t.entries.values() {
        assert_eq!((s.mean, s.std, s.max, s.count), (0.42, 0.0, 0.42, 1));
    }
}

#[test]
fn empty_report_is_an_error() {
    assert_eq!(alternative_stats(&report(vec![]), 0), Err(AnalyticsError::EmptyReport));
}

#[test]
fn alternative_on_failed_paths_only_is_absent() {
    let l = common::minimal();
    let paths = PathSpace::new(&l).unwrap().all();
    let (ok, bad): (Vec<Path>, Vec<Path>) = paths.into_iter().partition(|p| p.get("zerolm_core") == Some(0));
    let mut r = report(ok.into_iter().map(|p| (p, 0.1)).collect());
    r.failed = bad.into_iter().map(|p| (p, TaskError::NonFinite("score"))).collect();
    let t = alternative_stats(&r, 3).unwrap();
    assert!(t.get("zerolm_core", 0).is_some());
    assert!(t.get("zerolm_core", 1).is_none());
    assert!(t.get("spec_top1_vec", 0).is_none());
}

#[test]
fn stats_match_group_by_on_random_reports() {
    for seed in 0..100u64 {
        let l = common::random_valid_lattice(seed, 10, 3);
        let mut rng = common::rng(seed);
        let scored: Vec<(Path, f64)> = PathSpace::new(&l)
            .unwrap()
            .all()
            .into_iter()
            .filter_map(|p| rng.random_bool(0.8).then(|| (p, rng.random_range(-1.0..1.0))))
            .collect();
        if scored.is_empty() {
            continue;
        }
        let r = report(scored);
        let t = alternative_stats(&r, 0).unwrap();
        let oracle = common::group_by(&r);
        assert_eq!(t.entries.len(), oracle.len());
        for ((n, i), s) in &t.entries {
            let (mean, std, max, count) = oracle[&(n.clone(), *i)];
            assert!((s.mean - mean).abs() <= 1e-12);
            assert!((s.std - std).abs() <= 1e-12);
            assert_eq!(s.max, max);
            assert_eq!(s.count, count);
            assert!(s.max >= s.mean - 1e-12);
        }
        // counts per node add up to the number of paths assigning it
        for name in l.nodes.keys() {
            let total: usize = t.entries.iter().filter(|((n, _), _)| n == name).map(|(_, s)| s.count).sum();
            let assigning = r.scored.iter().filter(|(p, _)| p.get(name).is_some()).count();
            assert_eq!(total, assigning);
        }
    }
}

#[test]
fn step_metrics_of_one_two_three() {
    let paths: Vec<Path> = (0..3)
        .map(|i| Path {
            assignment: [(OUTPUT.to_string(), i)].into(),
        })
        .collect();
    let r = report(paths.into_iter().zip([1.0, 2.0, 3.0]).collect());
    let m = step_metrics(&r, None);
    assert_eq!(m.best, Some(3.0));
    assert_eq!(m.mean, Some(2.0));
    assert_eq!(m.median, Some(2.0));
    assert!((m.variance.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(m.best_so_far, Some(3.0));
    assert_eq!(step_metrics(&r, Some(5.0)).best_so_far, Some(5.0));
}

#[test]
fn empty_metrics_carry_best_so_far() {
    let m = step_metrics(&report(vec![]), Some(0.5));
    assert_eq!(m.best_so_far, Some(0.5));
    assert_eq!((m.best, m.mean, m.median, m.p10), (None, None, None, None));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn percentiles_are_ordered(scores in prop::collection::vec(-100.0f64..100.0, 1..60)) {
        let r = report(
            scores
                .iter()
                .enumerate()
                .map(|(i, s)| (Path { assignment: [(OUTPUT.to_string(), i)].into() }, *s))
                .collect(),
        );
        let m = step_metrics(&r, None);
        let ps = [m.p10, m.p25, m.median, m.p75, m.p90].map(Option::unwrap);
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        for w in ps.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        // each percentile lies between the two closest ranks around q * (n - 1)
        for (q, p) in [0.10, 0.25, 0.5, 0.75, 0.90].into_iter().zip(ps) {
            let pos = q * (sorted.len() - 1) as f64;
            prop_assert!(p >= sorted[pos.floor() as usize] - 1e-12);
            prop_assert!(p <= sorted[pos.ceil() as usize] + 1e-12);
        }
        prop_assert_eq!(m.best, Some(sorted[sorted.len() - 1]));
    }
}

fn chain() -> Lattice {
    let mut l = Lattice::new(["x"]);
    l.push("a", "lambda x: x").unwrap();
    l.push("dead", "lambda x: x * 3").unwrap();
    l.push(OUTPUT, "lambda a, dead: a + 0 * dead").unwrap();
    l
}

fn chain_path() -> Path {
    Path {
        assignment: [("a".to_string(), 0), ("dead".to_string(), 0), (OUTPUT.to_string(), 0)].into(),
    }
}

#[test]
fn dead_value_has_zero_importance() {
    let task = common::LinearTask::new(&[0.3, -0.2]);
    let t = node_importance(&chain(), &chain_path(), &task, 0.01, 16, 1, &GlobalCache::default()).unwrap();
    assert_eq!(t.get("dead").unwrap().importance, Some(0.0));
    assert!(t.get("a").unwrap().importance.unwrap() > 0.0);
    assert!(t.get(OUTPUT).is_none());
    assert_eq!(t.entries.len(), 2);
}

#[test]
fn linear_pass_through_matches_folded_normal() {
    // one record with |x| < 1, so the perturbation scale is 1 and the score
    // moves by exactly delta
    let task = common::LinearTask::new(&[0.3]);
    let sigma = 0.01;
    let t = node_importance(&chain(), &chain_path(), &task, sigma, 1000, 5, &GlobalCache::default()).unwrap();
    let got = t.get("a").unwrap().importance.unwrap();
    let want = sigma * (2.0 / std::f64::consts::PI).sqrt();
    assert!((got - want).abs() / want < 0.10, "{got} vs {want}");
}

#[test]
fn importance_is_deterministic() {
    let task = common::LinearTask::new(&[0.3, 1.5]);
    let cache = GlobalCache::default();
    let a = node_importance(&chain(), &chain_path(), &task, 0.01, 1, 9, &cache);
    let b = node_importance(&chain(), &chain_path(), &task, 0.01, 1, 9, &GlobalCache::disabled());
    assert_eq!(a, b);
}

#[test]
fn importance_flags_failures() {
    let mut l = Lattice::new(["x"]);
    l.push("a", "lambda x: x").unwrap();
    // sqrt fails as soon as a drifts below zero
    l.push(OUTPUT, "lambda a: sqrt(a)").unwrap();
    let p = Path {
        assignment: [("a".to_string(), 0), (OUTPUT.to_string(), 0)].into(),
    };
    let task = common::LinearTask::new(&[0.0]);
    let t = node_importance(&l, &p, &task, 0.5, 32, 2, &GlobalCache::default()).unwrap();
    assert_eq!(t.get("a").unwrap().importance, None);
}
