//! Rebuilds a study report from its run log without executing anything.
//!
//! A faithful replay re-derives every policy decision and reward from the
//! logged observations and fails on the first disagreement. Overriding
//! lambda switches to recomputation: the logged trajectory is kept, rewards
//! and arm statistics are recomputed, and the report is marked
//! `recomputed`.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{
    build_report, reward_of, select_arm, Progress, ReportInputs, RunRecord, StudyContext,
    StudyError,
};
use crate::analysis::StudyReport;
use crate::events::{Event, LogError, LogLine};
use crate::model::{CandidateId, CandidateSpec};

#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    /// Recompute rewards with this cost weight.
    pub lambda: Option<f64>,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("log diverges from recomputation at seq {seq}: {reason}")]
    Diverged { seq: u64, reason: String },
}

fn diverged(seq: u64, reason: impl Into<String>) -> ReplayError {
    ReplayError::Diverged {
        seq,
        reason: reason.into(),
    }
}

pub fn replay_log(lines: &[LogLine], opts: &ReplayOptions) -> Result<StudyReport, ReplayError> {
    let first = lines.first().ok_or(LogError::Truncated("empty log"))?;
    let Event::StudyStart {
        config,
        baseline_score: baseline,
        baseline_source,
        prior_weights,
        ..
    } = &first.event
    else {
        return Err(diverged(first.seq, "first event is not study_start"));
    };
    if !matches!(lines.last().map(|l| &l.event), Some(Event::StudyEnd { .. })) {
        return Err(LogError::Truncated("no study_end event").into());
    }

    let mut config = (**config).clone();
    let recompute = opts
        .lambda
        .is_some_and(|l| l.to_bits() != config.bandit.lambda.to_bits());
    if let Some(l) = opts.lambda {
        config.bandit.lambda = l;
    }
    let ctx = StudyContext::new(&config)?;
    let baseline = *baseline;
    let mut p = Progress::new(&ctx, prior_weights);
    let mut generated: BTreeMap<CandidateId, CandidateSpec> = BTreeMap::new();
    let mut round_records: Vec<RunRecord> = Vec::new();

    for line in &lines[1..] {
        let seq = line.seq;
        match &line.event {
            Event::StudyStart { .. } => return Err(diverged(seq, "second study_start")),
            Event::RoundStart {
                round,
                beta,
                arm,
                k,
                total_trials,
            } => {
                if *round != p.bandit.round {
                    return Err(diverged(seq, format!("round {round}, expected {}", p.bandit.round)));
                }
                if recompute {
                    continue;
                }
                let eligible = ctx.eligible_arms(&p.run_set);
                let expect = select_arm(config.run.policy, &p.bandit, &eligible, config.run.seed)?;
                if &expect != arm {
                    return Err(diverged(seq, format!("arm {arm} logged, policy selects {expect}")));
                }
                if beta.to_bits() != p.bandit.effective_beta().to_bits() {
                    return Err(diverged(seq, "beta differs"));
                }
                if *k != p.bandit.generation_budget(arm).map_err(StudyError::from)? {
                    return Err(diverged(seq, "generation budget differs"));
                }
                if *total_trials != p.bandit.total_trials {
                    return Err(diverged(seq, "trial count differs"));
                }
            }
            Event::Generation { candidates, .. } => {
                for c in candidates {
                    generated.insert(c.candidate_id.clone(), c.clone());
                }
            }
            Event::BudgetDrop { dropped, .. } => p.dropped += dropped.len() as u64,
            Event::Node { .. } | Event::ArmExhausted { .. } => {}
            Event::Execution {
                round,
                candidate_id,
                workspace_id,
                metrics,
                start_ms,
                end_ms,
            } => {
                let candidate = generated
                    .get(candidate_id)
                    .ok_or_else(|| diverged(seq, format!("candidate {candidate_id} was never generated")))?
                    .clone();
                round_records.push(RunRecord {
                    round: *round,
                    candidate,
                    metrics: metrics.clone(),
                    reward: None,
                    workspace_id: workspace_id.clone(),
                    start_ms: *start_ms,
                    end_ms: *end_ms,
                });
            }
            Event::Reward {
                candidate_id,
                arm,
                reward,
                ..
            } => {
                let rec = round_records
                    .iter_mut()
                    .find(|r| &r.candidate.candidate_id == candidate_id)
                    .ok_or_else(|| diverged(seq, format!("reward for unexecuted {candidate_id}")))?;
                let (r, _) = reward_of(&config, baseline, rec)
                    .map_err(StudyError::from)?
                    .ok_or_else(|| diverged(seq, format!("reward logged for failed {candidate_id}")))?;
                if !recompute && r.to_bits() != reward.to_bits() {
                    return Err(diverged(seq, format!("reward {reward} logged, recomputed {r}")));
                }
                p.bandit.update(arm, r).map_err(StudyError::from)?;
                rec.reward = Some(r);
                p.rewards.entry(arm.clone()).or_default().push(r);
            }
            Event::BanditUpdate { arm, stats, .. } => {
                if !recompute && p.bandit.arms.get(arm) != Some(stats) {
                    return Err(diverged(seq, format!("arm {arm} statistics differ")));
                }
            }
            Event::RoundEnd { .. } => {
                p.attempts += round_records.len() as u64;
                for r in &round_records {
                    p.run_set.insert(r.candidate.candidate_id.clone());
                }
                p.records.append(&mut round_records);
                p.rounds_completed += 1;
                p.bandit.advance_round();
            }
            Event::StudyEnd {
                stop_reason,
                report_digest,
                ..
            } => {
                let report = build_report(ReportInputs {
                    ctx: &ctx,
                    progress: &p,
                    baseline,
                    baseline_source,
                    stop_reason,
                    provenance: if recompute { "recomputed" } else { "original" },
                });
                if !recompute && &super::report_digest(&report) != report_digest {
                    return Err(diverged(seq, "report digest differs"));
                }
                return Ok(report);
            }
        }
    }
    unreachable!("last event was checked to be study_end")
}
