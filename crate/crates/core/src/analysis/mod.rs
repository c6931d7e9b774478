//! Component importance, criticality, top-k recovery and run statistics.

mod report;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{canonical_json, emit_report, format_sig, ReportFormat};

use crate::executor::FailureCategory;
use crate::model::{ArmId, ComponentId};
use crate::orchestrator::RunRecord;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the ground-truth set size {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("component {0} has no ground-truth importance")]
    UnknownComponent(ComponentId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub component_id: ComponentId,
    /// Mean of f(C) - f(x) over single-target observations.
    pub signed_effect: f64,
    /// |signed_effect|.
    pub importance: f64,
    /// Largest |f(C) - f(x)| among the observations.
    pub max_abs_effect: f64,
    pub critical: bool,
    pub n_observations: u64,
}

/// Per-component effects from successful single-target records on `metric`.
///
/// Sorted by importance descending, ties by component id.
pub fn component_effects(
    records: &[RunRecord],
    baseline: f64,
    metric: &str,
    tau_crit: f64,
) -> Vec<ImportanceEntry> {
    let mut deltas: BTreeMap<&ComponentId, Vec<f64>> = BTreeMap::new();
    for r in records {
        if !r.candidate.is_single_target() {
            continue;
        }
        if let Some(score) = r.metrics.primary(metric) {
            deltas
                .entry(&r.candidate.targets[0].component)
                .or_default()
                .push(baseline - score);
        }
    }
    let threshold = tau_crit * baseline.abs();
    let mut out: Vec<ImportanceEntry> = deltas
        .into_iter()
        .map(|(id, ds)| {
            let signed = stats::mean(&ds).expect("at least one observation");
            let importance = signed.abs();
            ImportanceEntry {
                component_id: id.clone(),
                signed_effect: signed,
                importance,
                max_abs_effect: ds.iter().fold(0.0_f64, |m, d| m.max(d.abs())),
                critical: importance >= threshold,
                n_observations: ds.len() as u64,
            }
        })
        .collect();
    sort_by_importance(&mut out);
    out
}

fn sort_by_importance(entries: &mut [ImportanceEntry]) {
    entries.sort_by(|a, b| {
        b.importance
            .total_cmp(&a.importance)
            .then_with(|| a.component_id.cmp(&b.component_id))
    });
}

/// Number of the first `k` predictions found in `ground_truth`.
pub fn acc_hits(pred: &[ComponentId], ground_truth: &BTreeSet<ComponentId>, k: usize) -> usize {
    let firsts: BTreeSet<&ComponentId> = pred.iter().take(k).collect();
    firsts.iter().filter(|c| ground_truth.contains(**c)).count()
}

/// `|first k of pred ∩ ground_truth| / k`.
pub fn acc_at_k(
    pred: &[ComponentId],
    ground_truth: &BTreeSet<ComponentId>,
    k: usize,
) -> Result<f64, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::ZeroK);
    }
    if k > ground_truth.len() {
        return Err(AnalysisError::KTooLarge {
            k,
            size: ground_truth.len(),
        });
    }
    Ok(acc_hits(pred, ground_truth, k) as f64 / k as f64)
}

/// The true top-k component ids by importance (ties by id).
pub fn true_top_k(importances: &BTreeMap<ComponentId, f64>, k: usize) -> Vec<ComponentId> {
    let mut v: Vec<(&ComponentId, f64)> = importances.iter().map(|(c, s)| (c, *s)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().take(k).map(|(c, _)| c.clone()).collect()
}

/// Sums in descending order so equal multisets give bit-equal sums.
fn canonical_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| b.total_cmp(a));
    values.into_iter().sum()
}

/// `sum(true top-k importances) - sum(importances of the first k of pred)`.
pub fn simple_regret(
    pred: &[ComponentId],
    importances: &BTreeMap<ComponentId, f64>,
    k: usize,
) -> Result<f64, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::ZeroK);
    }
    let mut chosen = Vec::new();
    let mut seen = BTreeSet::new();
    for c in pred.iter().take(k) {
        let s = importances
            .get(c)
            .ok_or_else(|| AnalysisError::UnknownComponent(c.clone()))?;
        if seen.insert(c) {
            chosen.push(*s);
        }
    }
    let mut all: Vec<f64> = importances.values().copied().collect();
    all.sort_by(|a, b| b.total_cmp(a));
    all.truncate(k);
    let best = canonical_sum(all);
    let got = canonical_sum(chosen);
    Ok((best - got).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Reproduction,
    Ablation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub stage: Stage,
    /// Completed without manual intervention.
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsrSummary {
    pub by_stage: BTreeMap<Stage, f64>,
    /// Product of the stage rates; absent when no task was recorded.
    pub end_to_end: Option<f64>,
}

pub fn task_success_rates(tasks: &[TaskOutcome]) -> TsrSummary {
    let mut counts: BTreeMap<Stage, (u64, u64)> = BTreeMap::new();
    for t in tasks {
        let e = counts.entry(t.stage).or_default();
        e.1 += 1;
        if t.completed {
            e.0 += 1;
        }
    }
    let by_stage: BTreeMap<Stage, f64> = counts
        .into_iter()
        .map(|(s, (ok, n))| (s, ok as f64 / n as f64))
        .collect();
    let end_to_end = end_to_end_tsr(by_stage.values().copied());
    TsrSummary {
        by_stage,
        end_to_end,
    }
}

pub fn end_to_end_tsr<I: IntoIterator<Item = f64>>(stages: I) -> Option<f64> {
    let mut it = stages.into_iter().peekable();
    it.peek()?;
    Some(it.product())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatistics {
    /// Successes over execution attempts; absent when nothing ran.
    pub exec_rate: Option<f64>,
    pub attempts: u64,
    pub successes: u64,
    pub failures: BTreeMap<FailureCategory, u64>,
    pub tsr: TsrSummary,
}

pub fn run_statistics(records: &[RunRecord], tasks: &[TaskOutcome]) -> RunStatistics {
    let attempts = records.len() as u64;
    let successes = records.iter().filter(|r| r.metrics.is_success()).count() as u64;
    let mut failures = BTreeMap::new();
    for r in records {
        if let Some(c) = r.metrics.failure_category {
            *failures.entry(c).or_insert(0) += 1;
        }
    }
    RunStatistics {
        exec_rate: (attempts > 0).then(|| successes as f64 / attempts as f64),
        attempts,
        successes,
        failures,
        tsr: task_success_rates(tasks),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm_id: ArmId,
    pub prior_weight: f64,
    pub pulls: u64,
    pub mean_reward: Option<f64>,
    pub std_reward: Option<f64>,
    /// 95% t-interval on the mean reward; needs two or more pulls.
    pub ci95: Option<[f64; 2]>,
}

pub fn arm_summary(arm_id: ArmId, prior_weight: f64, rewards: &[f64]) -> ArmSummary {
    let mean = stats::mean(rewards);
    let std = stats::sample_std(rewards);
    let ci95 = match (mean, std) {
        (Some(m), Some(s)) => stats::t_interval(m, s, rewards.len() as u64, 0.95).map(|(a, b)| [a, b]),
        _ => None,
    };
    ArmSummary {
        arm_id,
        prior_weight,
        pulls: rewards.len() as u64,
        mean_reward: mean,
        std_reward: std,
        ci95,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criticality {
    pub tau_crit: f64,
    pub metric: String,
    /// tau_crit · |f(C)| on the criticality metric.
    pub threshold: f64,
    pub aggregation: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSummary {
    pub top_k: Vec<ComponentId>,
    pub acc_at_k: Option<f64>,
    pub simple_regret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub policy: String,
    pub seed: u64,
    pub budget: u64,
    pub lambda: f64,
    pub provenance: String,
    pub baseline_score: f64,
    pub baseline_source: String,
    pub primary_metric: String,
    pub higher_is_better: bool,
    pub criticality: Criticality,
    pub importance: Vec<ImportanceEntry>,
    pub k: usize,
    pub top_k_pred: Vec<ComponentId>,
    pub ground_truth: Option<GroundTruthSummary>,
    pub statistics: RunStatistics,
    pub arms: Vec<ArmSummary>,
    pub total_cost_gpu_hours: f64,
    pub rounds_completed: u32,
    pub total_trials: u64,
    pub dropped_candidates: u64,
    pub stop_reason: String,
}

impl StudyReport {
    pub fn acc_at_k(&self) -> Option<f64> {
        self.ground_truth.as_ref().and_then(|g| g.acc_at_k)
    }

    pub fn simple_regret(&self) -> Option<f64> {
        self.ground_truth.as_ref().and_then(|g| g.simple_regret)
    }
}

/// Predicted top-k: the first `min(k, observed)` components by importance.
pub fn predicted_top_k(importance: &[ImportanceEntry], k: usize) -> Vec<ComponentId> {
    importance
        .iter()
        .take(k)
        .map(|e| e.component_id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[&str]) -> Vec<ComponentId> {
        xs.iter().map(|x| ComponentId::new(*x)).collect()
    }

    #[test]
    fn acc_examples() {
        let gt: BTreeSet<ComponentId> = ids(&["a", "b", "c", "d", "e"]).into_iter().collect();
        assert_eq!(acc_at_k(&ids(&["a", "b", "c", "d", "x"]), &gt, 5).unwrap(), 0.8);
        assert_eq!(acc_at_k(&ids(&["e", "d", "c", "b", "a"]), &gt, 5).unwrap(), 1.0);
        assert_eq!(acc_at_k(&ids(&["v", "w", "x", "y", "z"]), &gt, 5).unwrap(), 0.0);
        assert_eq!(
            acc_at_k(&ids(&["a"]), &gt, 6),
            Err(AnalysisError::KTooLarge { k: 6, size: 5 })
        );
    }

    #[test]
    fn regret_examples() {
        let imp: BTreeMap<ComponentId, f64> = [("a", 0.5), ("b", 0.3), ("c", 0.2), ("d", 0.1)]
            .into_iter()
            .map(|(c, s)| (ComponentId::new(c), s))
            .collect();
        let three: BTreeMap<_, _> = imp.iter().take(3).map(|(a, b)| (a.clone(), *b)).collect();
        assert!((simple_regret(&ids(&["a", "c"]), &three, 2).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(simple_regret(&ids(&["b", "a"]), &three, 2).unwrap(), 0.0);
        assert!((simple_regret(&ids(&["c", "d"]), &imp, 2).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(
            simple_regret(&ids(&["zz"]), &imp, 2),
            Err(AnalysisError::UnknownComponent("zz".into()))
        );
    }

    #[test]
    fn tsr_product_and_empty() {
        let e2e = end_to_end_tsr([0.963, 0.920]).unwrap();
        assert!((e2e - 0.886).abs() < 5e-4);
        assert_eq!(end_to_end_tsr(std::iter::empty()), None);
        let s = task_success_rates(&[
            TaskOutcome {
                stage: Stage::Reproduction,
                completed: true,
            },
            TaskOutcome {
                stage: Stage::Ablation,
                completed: false,
            },
            TaskOutcome {
                stage: Stage::Ablation,
                completed: true,
            },
        ]);
        assert_eq!(s.by_stage[&Stage::Ablation], 0.5);
        assert_eq!(s.end_to_end, Some(0.5));
    }

    #[test]
    fn empty_run_has_no_exec_rate() {
        let s = run_statistics(&[], &[]);
        assert_eq!(s.exec_rate, None);
    }
}
