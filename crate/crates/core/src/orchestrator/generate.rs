//! Candidate generation for the selected arm.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::knowledge::{retrieve, KnowledgeBase};
use crate::model::{ArmId, CandidateId, CandidateSpec, ComponentSpace, MutationTag};

/// Up to `k` not-yet-run candidates from `pool`.
///
/// Picks round-robin across mutation kinds so a round covers as many kinds
/// as possible; within a kind, fewer targets first, then lower cost, then
/// candidate id.
pub fn generate_candidates(
    pool: &[CandidateSpec],
    k: usize,
    already_run: &BTreeSet<CandidateId>,
) -> Vec<CandidateSpec> {
    let mut by_kind: BTreeMap<MutationTag, Vec<&CandidateSpec>> = BTreeMap::new();
    for c in pool.iter().filter(|c| !already_run.contains(&c.candidate_id)) {
        by_kind.entry(c.primary_tag()).or_default().push(c);
    }
    let mut queues: Vec<VecDeque<&CandidateSpec>> = by_kind
        .into_values()
        .map(|mut v| {
            v.sort_by(|a, b| {
                a.targets
                    .len()
                    .cmp(&b.targets.len())
                    .then_with(|| a.estimated_cost.total_cmp(&b.estimated_cost))
                    .then_with(|| a.candidate_id.cmp(&b.candidate_id))
            });
            v.into()
        })
        .collect();
    let mut out = Vec::with_capacity(k);
    while out.len() < k && queues.iter().any(|q| !q.is_empty()) {
        for q in &mut queues {
            if out.len() == k {
                break;
            }
            if let Some(c) = q.pop_front() {
                out.push(c.clone());
            }
        }
    }
    out
}

/// Retrieval query describing an arm: its id plus its components' names
/// and descriptions.
pub fn arm_query(space: &ComponentSpace, arm: &ArmId) -> String {
    let mut q = arm.as_str().to_string();
    for c in space.components_of(arm) {
        q.push(' ');
        q.push_str(c.display_name());
        q.push(' ');
        q.push_str(&c.description);
    }
    q
}

/// Entry ids retrieved for `arm`; empty when there is no knowledge base.
pub fn retrieve_for_arm(
    kb: &KnowledgeBase,
    space: &ComponentSpace,
    arm: &ArmId,
    k_ret: usize,
) -> Vec<String> {
    if kb.is_empty() || k_ret == 0 {
        return Vec::new();
    }
    retrieve(&arm_query(space, arm), kb, k_ret)
        .map(|hits| hits.into_iter().map(|(e, _)| e.entry_id.clone()).collect())
        .unwrap_or_default()
}
