use evolattice::baseline::{Baseline, BaselineMode};
use evolattice::engine::GlobalCache;
use evolattice::evolution::{Edit, MutationPlan};
use evolattice::lattice::OUTPUT;
use evolattice::oracle::{ChatBackend, GrammarSampler, Oracle, OracleSettings, ScriptedBackend};
use evolattice::tasks::{RankingConfig, RankingTask};

const START: &str = "lambda spec_topk_mean: tanh(spec_topk_mean)";

fn source_plan(src: &str) -> MutationPlan {
    MutationPlan::new(vec![Edit::AddAlternative {
        node: OUTPUT.into(),
        source: src.into(),
        name: None,
    }])
}

fn baseline<'a>(
    task: &'a RankingTask,
    cache: &'a GlobalCache,
    backend: impl ChatBackend + 'static,
    mode: BaselineMode,
) -> Baseline<'a> {
    let oracle = Oracle::new(Box::new(backend), OracleSettings::default());
    Baseline::new(task, cache, oracle, mode, 21, START.into())
}

#[test]
fn regenerated_teacher_jumps_at_step_three() {
    let task = RankingTask::new(
        RankingConfig {
            noise: 0.0,
            ..Default::default()
        },
        6,
    );
    let cache = GlobalCache::default();
    let plans = vec![MutationPlan::default(), MutationPlan::default(), source_plan(&task.config.teacher_source())];
    let mut b = baseline(&task, &cache, ScriptedBackend::new(plans, vec![]), BaselineMode::Regenerate);
    let start = b.candidate.score.unwrap();
    assert!(start < 1.0);
    let mut rows = Vec::new();
    for _ in 0..4 {
        let (rec, row) = b.step().unwrap();
        // one live program, one path
        assert!(rec.candidate_path_total <= 1);
        assert_eq!(row.path_total, 1);
        rows.push(row);
    }
    let accepted: Vec<bool> = rows.iter().map(|r| r.accepted).collect();
    assert_eq!(accepted, [false, false, true, false]);
    assert_eq!(rows[1].best_so_far, Some(start));
    assert!((rows[2].best_so_far.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(b.candidate.source, task.config.teacher_source());
    assert_eq!(b.candidate.history.len(), 4);
}

#[test]
fn unparseable_source_is_rejected() {
    let task = RankingTask::new(RankingConfig::default(), 6);
    let cache = GlobalCache::default();
    let plans = vec![source_plan("lambda loss: (loss")];
    let mut b = baseline(&task, &cache, ScriptedBackend::new(plans, vec![]), BaselineMode::Diff);
    let before = b.candidate.clone();
    let (rec, row) = b.step().unwrap();
    assert!(!rec.accepted && !row.accepted);
    assert!(rec.oracle_error.is_some());
    assert_eq!(b.candidate.source, before.source);
    assert_eq!(b.candidate.score, before.score);
}

#[test]
fn sampled_programs_stay_single_path() {
    let task = RankingTask::new(RankingConfig::default(), 2);
    let cache = GlobalCache::default();
    for mode in [BaselineMode::Regenerate, BaselineMode::Diff] {
        let mut b = baseline(&task, &cache, GrammarSampler::new(4), mode);
        let mut best = b.candidate.score;
        for _ in 0..40 {
            let (rec, row) = b.step().unwrap();
            assert!(row.path_total <= 1);
            assert_eq!(b.lattice(None).nodes.len(), 1);
            if rec.accepted {
                assert!(row.best_so_far > best);
            } else {
                assert_eq!(row.best_so_far, best);
            }
            best = row.best_so_far;
        }
    }
}
