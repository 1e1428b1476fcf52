use super::{ChatBackend, ChatRequest, Purpose, TransportError};
use crate::evolution::MutationPlan;

/// Hypotheses used when a script supplies none.
pub const DEFAULT_HYPOTHESES: [&str; 3] = [
    "add an alternative that combines the strongest inputs",
    "prune alternatives whose mean trails their node",
    "recombine two well-scoring nodes in output",
];

/// Replays a fixed list of plans: step `n` receives plan `n - 1`, and every
/// step after the list runs out receives an empty plan.
pub struct ScriptedBackend {
    plans: Vec<MutationPlan>,
    hypotheses: Vec<String>,
}

impl ScriptedBackend {
    pub fn new(plans: Vec<MutationPlan>, hypotheses: Vec<String>) -> Self {
        let hypotheses = if hypotheses.is_empty() {
            DEFAULT_HYPOTHESES.iter().map(|s| s.to_string()).collect()
        } else {
            hypotheses
        };
        ScriptedBackend { plans, hypotheses }
    }

    fn plan(&self, step: usize) -> Option<&MutationPlan> {
        step.checked_sub(1).and_then(|i| self.plans.get(i))
    }
}

impl ChatBackend for ScriptedBackend {
    fn respond(&mut self, req: &ChatRequest<'_>) -> Result<String, TransportError> {
        Ok(match req.purpose {
            Purpose::Hypotheses => self
                .hypotheses
                .iter()
                .enumerate()
                .map(|(i, h)| format!("{}. {h}\n", i + 1))
                .collect(),
            Purpose::Mutation => {
                let json = self.plan(req.step).map_or("[]".to_string(), MutationPlan::to_json);
                format!("```json\n{json}\n```\n")
            }
            // baselines take the first source the plan carries
            Purpose::Regenerate | Purpose::Edit => {
                let src = self
                    .plan(req.step)
                    .and_then(|p| p.edits.iter().find_map(|e| e.source()))
                    .or(req.current)
                    .unwrap_or_default();
                format!("```\n{src}\n```\n")
            }
        })
    }
}
