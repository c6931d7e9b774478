//! Study loop: select an arm, generate candidates, execute them through the
//! round graph, feed rewards back, and report.
//!
//! A round never executes more candidates than the remaining budget; the
//! surplus is dropped and logged. Rewards are applied in candidate order
//! after all executions of the round finish, so the outcome does not depend
//! on `max_parallel`.

mod generate;
mod replay;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::thread;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use generate::{arm_query, generate_candidates, retrieve_for_arm};
pub use replay::{replay_log, ReplayError, ReplayOptions};

use crate::analysis::{
    self, arm_summary, component_effects, emit_report, predicted_top_k, run_statistics,
    Criticality, GroundTruthSummary, ReportFormat, Stage, StudyReport, TaskOutcome,
};
use crate::bandit::{compute_reward, BanditError, BanditState, RewardInput};
use crate::config::{CostSource, ExecutorConfig, Policy, StudyConfig};
use crate::events::{Event, EventLog, LogError};
use crate::executor::{
    execute_in_workspace, ExecRequest, Executor, ExecutorError, FailureCategory, MetricsRecord,
    SimulatedExecutor,
};
use crate::graph::{build_round_graph, schedule, GraphError, NodeKind, NodeStatus, Payload};
use crate::knowledge::{derive_arm_weights, KnowledgeBase};
use crate::model::{
    enumerate_candidates, ArmId, CandidateId, CandidateSpec, ComponentSpace, EnumerationError,
};
use crate::workspace::{
    instantiate, sha256_hex, BaseSnapshot, PatchOp, WorkspaceError, WorkspaceManager,
};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Enumeration(#[from] EnumerationError),
    #[error("baseline unavailable: {0}")]
    Baseline(String),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Executor(#[from] ExecutorError),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// One executed candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub round: u32,
    pub candidate: CandidateSpec,
    pub metrics: MetricsRecord,
    /// Present for successful candidates only.
    pub reward: Option<f64>,
    pub workspace_id: Option<String>,
    pub start_ms: u64,
    pub end_ms: u64,
}

/// Where candidates run. Without `workspaces` the executor is called
/// directly (simulation, scripted test executors).
pub struct ExecutionEnv<'a> {
    pub executor: &'a dyn Executor,
    pub workspaces: Option<WorkspaceEnv<'a>>,
}

pub struct WorkspaceEnv<'a> {
    pub manager: &'a WorkspaceManager,
    pub snapshot: &'a BaseSnapshot,
    /// Per-candidate archives go to `archive_root/<candidate_id>/`.
    pub archive_root: PathBuf,
    pub artifacts: Vec<String>,
}

impl<'a> ExecutionEnv<'a> {
    pub fn direct(executor: &'a dyn Executor) -> Self {
        Self {
            executor,
            workspaces: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub report: StudyReport,
    pub records: Vec<RunRecord>,
    pub bandit: BanditState,
}

/// Inputs derived once from the configuration.
#[derive(Debug, Clone)]
pub struct StudyContext {
    pub config: StudyConfig,
    pub space: ComponentSpace,
    pub kb: KnowledgeBase,
    pub pools: BTreeMap<ArmId, Vec<CandidateSpec>>,
    pub pool_size: usize,
    pub weights: BTreeMap<ArmId, f64>,
}

impl StudyContext {
    pub fn new(config: &StudyConfig) -> Result<Self, StudyError> {
        let problems = config.validate();
        if !problems.is_empty() {
            return Err(StudyError::Config(problems));
        }
        let space = config.component_space();
        let kb = config.knowledge_base();
        let all = enumerate_candidates(&space, config.space.max_targets, config.space.max_candidates)?;
        let pool_size = all.len();
        let mut pools: BTreeMap<ArmId, Vec<CandidateSpec>> =
            space.arm_ids().into_iter().map(|a| (a, Vec::new())).collect();
        for c in all {
            pools.entry(c.arm_id.clone()).or_default().push(c);
        }
        let weights = prior_weights(&space, &kb);
        Ok(Self {
            config: config.clone(),
            space,
            kb,
            pools,
            pool_size,
            weights,
        })
    }

    fn has_unrun(&self, arm: &ArmId, run: &BTreeSet<CandidateId>) -> bool {
        self.pools
            .get(arm)
            .is_some_and(|p| p.iter().any(|c| !run.contains(&c.candidate_id)))
    }

    fn eligible_arms(&self, run: &BTreeSet<CandidateId>) -> BTreeSet<ArmId> {
        self.pools
            .keys()
            .filter(|a| self.has_unrun(a, run))
            .cloned()
            .collect()
    }
}

/// Prior weight per arm: the configured weight, else the knowledge-derived
/// weight, else 1.0.
pub fn prior_weights(space: &ComponentSpace, kb: &KnowledgeBase) -> BTreeMap<ArmId, f64> {
    let declared = space.declared_weights();
    let mut w = derive_arm_weights(kb, space);
    for (arm, x) in declared {
        w.insert(arm, x);
    }
    w
}

/// Chooses the round's arm among `eligible` (arms with unrun candidates).
pub fn select_arm(
    policy: Policy,
    bandit: &BanditState,
    eligible: &BTreeSet<ArmId>,
    seed: u64,
) -> Result<ArmId, StudyError> {
    if eligible.is_empty() {
        return Err(BanditError::NoEligibleArm.into());
    }
    match policy {
        Policy::Ucb => Ok(bandit.select_arm_among(|a| eligible.contains(a))?),
        Policy::Random => {
            let mut h = Sha256::new();
            h.update(b"ablate/policy/random/v1");
            h.update(seed.to_le_bytes());
            h.update(bandit.round.to_le_bytes());
            let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
            let i = rng.gen_range(0..eligible.len());
            Ok(eligible.iter().nth(i).expect("index in range").clone())
        }
        Policy::Heuristic => {
            // fixed priority by prior weight; stays on an arm until it runs dry
            let mut order: Vec<(&ArmId, f64)> = bandit
                .arms
                .values()
                .filter(|a| eligible.contains(&a.arm_id))
                .map(|a| (&a.arm_id, a.prior_weight))
                .collect();
            order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            order
                .first()
                .map(|(a, _)| (*a).clone())
                .ok_or_else(|| BanditError::NoEligibleArm.into())
        }
    }
}

/// Patch ops for every target of `cand`, or the reason they cannot be
/// produced.
pub fn patch_ops(space: &ComponentSpace, cand: &CandidateSpec) -> Result<Vec<PatchOp>, String> {
    let mut ops = Vec::new();
    for t in &cand.targets {
        let comp = space
            .component(&t.component)
            .ok_or_else(|| format!("unknown component {}", t.component))?;
        let tag = t.mutation.tag();
        let template = comp
            .patches
            .get(&tag)
            .ok_or_else(|| format!("component {} declares no patch for {tag:?} mutations", comp.id))?;
        ops.extend(instantiate(template, &t.mutation).map_err(|e| e.to_string())?);
    }
    Ok(ops)
}

/// Reward and the cost that entered it, for a successful record.
pub fn reward_of(
    config: &StudyConfig,
    baseline: f64,
    record: &RunRecord,
) -> Result<Option<(f64, f64)>, BanditError> {
    let Some(score) = record.metrics.primary(&config.space.primary_metric) else {
        return Ok(None);
    };
    let cost = match config.run.reward_cost {
        CostSource::Declared => record.candidate.estimated_cost,
        CostSource::Observed => record.metrics.cost_gpu_hours,
    };
    let r = compute_reward(
        RewardInput {
            baseline_score: baseline,
            observed_score: score,
            cost,
        },
        config.bandit.lambda,
    )?;
    Ok(Some((r, cost)))
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Mutable study state shared by live runs and replay.
#[derive(Debug, Clone)]
pub(crate) struct Progress {
    pub bandit: BanditState,
    pub run_set: BTreeSet<CandidateId>,
    pub records: Vec<RunRecord>,
    pub rewards: BTreeMap<ArmId, Vec<f64>>,
    pub attempts: u64,
    pub dropped: u64,
    pub rounds_completed: u32,
}

impl Progress {
    pub fn new(ctx: &StudyContext, weights: &BTreeMap<ArmId, f64>) -> Self {
        Self {
            bandit: BanditState::new(ctx.config.bandit.params(), weights),
            run_set: BTreeSet::new(),
            records: Vec::new(),
            rewards: BTreeMap::new(),
            attempts: 0,
            dropped: 0,
            rounds_completed: 0,
        }
    }
}

pub(crate) struct ReportInputs<'a> {
    pub ctx: &'a StudyContext,
    pub progress: &'a Progress,
    pub baseline: f64,
    pub baseline_source: &'a str,
    pub stop_reason: &'a str,
    pub provenance: &'a str,
}

pub(crate) fn build_report(inp: ReportInputs<'_>) -> StudyReport {
    let cfg = &inp.ctx.config;
    let p = inp.progress;
    let primary = &cfg.space.primary_metric;
    let crit_metric = cfg.criticality_metric().to_string();
    let crit_baseline = cfg.run.criticality_baseline.unwrap_or(inp.baseline);
    let tau = cfg.run.tau_crit;

    let mut importance = component_effects(&p.records, inp.baseline, primary, tau);
    if crit_metric != *primary {
        let crit: BTreeMap<_, _> = component_effects(&p.records, crit_baseline, &crit_metric, tau)
            .into_iter()
            .map(|e| (e.component_id, e.critical))
            .collect();
        for e in &mut importance {
            e.critical = crit.get(&e.component_id).copied().unwrap_or(false);
        }
    } else if cfg.run.criticality_baseline.is_some() {
        let threshold = tau * crit_baseline.abs();
        for e in &mut importance {
            e.critical = e.importance >= threshold;
        }
    }

    let k = cfg.run.top_k;
    let top_k_pred = predicted_top_k(&importance, k);
    let ground_truth = cfg.resolved_ground_truth().map(|gt| {
        let set: BTreeSet<_> = gt.top_k.iter().cloned().collect();
        GroundTruthSummary {
            acc_at_k: analysis::acc_at_k(&top_k_pred, &set, k).ok(),
            simple_regret: gt
                .importances
                .as_ref()
                .and_then(|m| analysis::simple_regret(&top_k_pred, m, k).ok()),
            top_k: gt.top_k,
        }
    });

    let tasks = [
        TaskOutcome {
            stage: Stage::Reproduction,
            completed: true,
        },
        TaskOutcome {
            stage: Stage::Ablation,
            completed: true,
        },
    ];
    let arms = p
        .bandit
        .arms
        .values()
        .map(|a| {
            let rewards = p.rewards.get(&a.arm_id).map(Vec::as_slice).unwrap_or_default();
            arm_summary(a.arm_id.clone(), a.prior_weight, rewards)
        })
        .collect();

    StudyReport {
        policy: cfg.run.policy.to_string(),
        seed: cfg.run.seed,
        budget: cfg.run.budget,
        lambda: cfg.bandit.lambda,
        provenance: inp.provenance.to_string(),
        baseline_score: inp.baseline,
        baseline_source: inp.baseline_source.to_string(),
        primary_metric: primary.clone(),
        higher_is_better: cfg.space.higher_is_better,
        criticality: Criticality {
            tau_crit: tau,
            metric: crit_metric,
            threshold: tau * crit_baseline.abs(),
            aggregation: "mean over single-target observations".into(),
            note: "threshold is relative to |f(C)| and is not calibrated across metrics".into(),
        },
        importance,
        k,
        top_k_pred,
        ground_truth,
        statistics: run_statistics(&p.records, &tasks),
        arms,
        total_cost_gpu_hours: p.records.iter().map(|r| r.metrics.cost_gpu_hours).sum(),
        rounds_completed: p.rounds_completed,
        total_trials: p.bandit.total_trials,
        dropped_candidates: p.dropped,
        stop_reason: inp.stop_reason.to_string(),
    }
}

pub fn report_digest(report: &StudyReport) -> String {
    sha256_hex(emit_report(report, ReportFormat::Json).as_bytes())
}

/// The simulated executor described by `config`, if it declares one.
pub fn simulated_executor(config: &StudyConfig) -> Option<SimulatedExecutor> {
    match &config.executor {
        ExecutorConfig::Simulated { arms, .. } => Some(SimulatedExecutor::new(
            arms.clone(),
            config.space.baseline_score.unwrap_or(0.0),
        )),
        ExecutorConfig::Shell { .. } => None,
    }
}

/// Runs a simulated study entirely in memory.
pub fn run_simulated(config: &StudyConfig) -> Result<(StudyOutcome, EventLog), StudyError> {
    let exec = simulated_executor(config).ok_or_else(|| {
        StudyError::Config(vec!["executor is not simulated".into()])
    })?;
    let mut log = EventLog::in_memory();
    let out = run_study(config, &ExecutionEnv::direct(&exec), &mut log)?;
    Ok((out, log))
}

fn baseline_candidate() -> CandidateSpec {
    CandidateSpec {
        candidate_id: CandidateId::new("baseline"),
        targets: Vec::new(),
        arm_id: ArmId::new(""),
        description: "unmodified base configuration".into(),
        estimated_cost: 0.0,
    }
}

fn measure_baseline(ctx: &StudyContext, env: &ExecutionEnv<'_>) -> Result<f64, StudyError> {
    let primary = &ctx.config.space.primary_metric;
    let seed = ctx.config.run.seed;
    let cand = baseline_candidate();
    let outcome = match &env.workspaces {
        Some(w) => {
            let mut ws = w.manager.create_workspace(w.snapshot, &cand.candidate_id)?;
            let res = (|| {
                ws.apply_mutation(&[])?;
                let outcome = execute_in_workspace(env.executor, &cand, &mut ws, seed, primary)?;
                ws.harvest(&w.archive_root.join("baseline"), &w.artifacts, &outcome.logs)?;
                Ok::<_, StudyError>(outcome)
            })();
            if let Err(e) = w.manager.destroy(&mut ws) {
                log::warn!("baseline workspace cleanup failed: {e}");
            }
            res?
        }
        None => env.executor.execute(&ExecRequest {
            candidate: &cand,
            workspace: None,
            seed,
            primary_metric: primary,
        })?,
    };
    outcome.metrics.primary(primary).ok_or_else(|| {
        StudyError::Baseline(
            outcome
                .metrics
                .failure_reason
                .unwrap_or_else(|| "baseline run produced no primary metric".into()),
        )
    })
}

fn execute_candidate(
    ctx: &StudyContext,
    env: &ExecutionEnv<'_>,
    cand: &CandidateSpec,
) -> Result<(MetricsRecord, Option<String>), StudyError> {
    let primary = &ctx.config.space.primary_metric;
    let seed = ctx.config.run.seed;
    let Some(w) = &env.workspaces else {
        let out = env.executor.execute(&ExecRequest {
            candidate: cand,
            workspace: None,
            seed,
            primary_metric: primary,
        })?;
        return Ok((out.metrics, None));
    };

    let mapping_failure =
        |reason: String| MetricsRecord::failed(FailureCategory::MappingFailure, reason, 0.0, cand.estimated_cost);
    let archive = w.archive_root.join(cand.candidate_id.as_str());
    let mut ws = w.manager.create_workspace(w.snapshot, &cand.candidate_id)?;
    let ws_id = ws.workspace_id.clone();
    let res = (|| {
        let ops = match patch_ops(&ctx.space, cand) {
            Ok(ops) => ops,
            Err(reason) => return Ok(mapping_failure(reason)),
        };
        match ws.apply_mutation(&ops) {
            Ok(_) => {}
            Err(e) if e.is_mapping_failure() => return Ok(mapping_failure(e.to_string())),
            Err(e) => return Err(StudyError::from(e)),
        }
        let outcome = execute_in_workspace(env.executor, cand, &mut ws, seed, primary)?;
        ws.harvest(&archive, &w.artifacts, &outcome.logs)?;
        Ok(outcome.metrics)
    })();
    if let Err(e) = w.manager.destroy(&mut ws) {
        log::warn!("workspace {ws_id} cleanup failed: {e}");
    }
    let metrics = res?;
    std::fs::create_dir_all(&archive).map_err(|source| WorkspaceError::Io {
        path: archive.clone(),
        source,
    })?;
    let record_path = archive.join("metrics.json");
    let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    std::fs::write(&record_path, text).map_err(|source| WorkspaceError::Io {
        path: record_path,
        source,
    })?;
    Ok((metrics, Some(ws_id)))
}

/// Runs a study to completion, logging every step to `log`.
pub fn run_study(
    config: &StudyConfig,
    env: &ExecutionEnv<'_>,
    log: &mut EventLog,
) -> Result<StudyOutcome, StudyError> {
    let ctx = StudyContext::new(config)?;
    let cfg = &ctx.config;
    let (baseline, baseline_source) = match cfg.space.baseline_score {
        Some(b) => (b, "declared"),
        None => (measure_baseline(&ctx, env)?, "measured"),
    };
    log.append(Event::StudyStart {
        config: Box::new(cfg.clone()),
        config_digest: cfg.digest(),
        baseline_score: baseline,
        baseline_source: baseline_source.into(),
        prior_weights: ctx.weights.clone(),
        candidate_pool: ctx.pool_size,
    })?;

    let mut p = Progress::new(&ctx, &ctx.weights);
    let budget = cfg.run.budget;
    let max_parallel = cfg.run.max_parallel;

    let stop_reason = loop {
        if p.bandit.finished() {
            break "max_rounds";
        }
        if p.attempts >= budget {
            break "budget_exhausted";
        }
        let eligible = ctx.eligible_arms(&p.run_set);
        if eligible.is_empty() {
            break "candidates_exhausted";
        }
        let round = p.bandit.round;
        let arm = select_arm(cfg.run.policy, &p.bandit, &eligible, cfg.run.seed)?;
        let k = p.bandit.generation_budget(&arm)?;
        log.append(Event::RoundStart {
            round,
            beta: p.bandit.effective_beta(),
            arm: arm.clone(),
            k,
            total_trials: p.bandit.total_trials,
        })?;

        let mut cands = generate_candidates(&ctx.pools[&arm], k, &p.run_set);
        log.append(Event::Generation {
            round,
            arm: arm.clone(),
            candidates: cands.clone(),
            retrieved: retrieve_for_arm(&ctx.kb, &ctx.space, &arm, cfg.knowledge.k_ret),
        })?;
        let remaining = budget - p.attempts;
        if cands.len() as u64 > remaining {
            let dropped: Vec<CandidateId> = cands
                .split_off(remaining as usize)
                .into_iter()
                .map(|c| c.candidate_id)
                .collect();
            p.dropped += dropped.len() as u64;
            log.append(Event::BudgetDrop {
                round,
                dropped,
                remaining_budget: remaining,
            })?;
        }

        let graph = build_round_graph(&arm, &cands, round)?;
        let batches = schedule(&graph, max_parallel)?;
        let mut results: Vec<Option<RunRecord>> = vec![None; cands.len()];
        let mut ranking: Vec<(CandidateId, f64)> = Vec::new();

        for batch in &batches {
            let nodes: Vec<_> = batch
                .iter()
                .map(|id| graph.node(id).expect("scheduled node exists"))
                .collect();
            let execs: Vec<(usize, &CandidateSpec)> = nodes
                .iter()
                .filter_map(|n| match &n.payload {
                    Payload::Candidate { index, .. } => Some((*index, &cands[*index])),
                    _ => None,
                })
                .collect();
            let ran: Vec<Result<RunRecord, StudyError>> = thread::scope(|s| {
                let handles: Vec<_> = execs
                    .iter()
                    .map(|(_, cand)| {
                        let ctx = &ctx;
                        s.spawn(move || {
                            let start_ms = now_ms();
                            let (metrics, workspace_id) = execute_candidate(ctx, env, cand)?;
                            Ok(RunRecord {
                                round,
                                candidate: (*cand).clone(),
                                metrics,
                                reward: None,
                                workspace_id,
                                start_ms,
                                end_ms: now_ms(),
                            })
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("execution thread panicked"))
                    .collect()
            });
            for ((index, _), r) in execs.iter().zip(ran) {
                results[*index] = Some(r?);
            }

            for node in nodes {
                let start_ms = now_ms();
                let mut status = NodeStatus::Ok;
                let mut follow = Vec::new();
                match node.kind {
                    NodeKind::Generation => {}
                    NodeKind::Execution => {
                        let Payload::Candidate { index, .. } = &node.payload else {
                            unreachable!("execution nodes carry a candidate")
                        };
                        let r = results[*index].as_ref().expect("executed in this batch");
                        if !r.metrics.is_success() {
                            status = NodeStatus::Failed;
                        }
                        follow.push(Event::Execution {
                            round,
                            candidate_id: r.candidate.candidate_id.clone(),
                            workspace_id: r.workspace_id.clone(),
                            metrics: r.metrics.clone(),
                            start_ms: r.start_ms,
                            end_ms: r.end_ms,
                        });
                    }
                    NodeKind::Ranking => {
                        ranking = rank(&results, baseline, &cfg.space.primary_metric);
                    }
                    NodeKind::Reflection => {
                        for r in results.iter_mut().flatten() {
                            let Some((reward, cost)) = reward_of(cfg, baseline, r)? else {
                                continue;
                            };
                            p.bandit.update(&arm, reward)?;
                            r.reward = Some(reward);
                            p.rewards.entry(arm.clone()).or_default().push(reward);
                            follow.push(Event::Reward {
                                round,
                                candidate_id: r.candidate.candidate_id.clone(),
                                arm: arm.clone(),
                                reward,
                                cost,
                            });
                            follow.push(Event::BanditUpdate {
                                round,
                                arm: arm.clone(),
                                stats: p.bandit.arms[&arm].clone(),
                                total_trials: p.bandit.total_trials,
                            });
                        }
                    }
                }
                log.append(Event::Node {
                    round,
                    node_id: node.id.0.clone(),
                    kind: node.kind,
                    status,
                    start_ms,
                    end_ms: now_ms(),
                })?;
                for e in follow {
                    log.append(e)?;
                }
            }
        }

        let executed: Vec<RunRecord> = results.into_iter().flatten().collect();
        let successes = executed.iter().filter(|r| r.metrics.is_success()).count() as u64;
        p.attempts += executed.len() as u64;
        for r in &executed {
            p.run_set.insert(r.candidate.candidate_id.clone());
        }
        log.append(Event::RoundEnd {
            round,
            arm: arm.clone(),
            ranking,
            successes,
            failures: executed.len() as u64 - successes,
            attempts_so_far: p.attempts,
        })?;
        if !ctx.has_unrun(&arm, &p.run_set) {
            log.append(Event::ArmExhausted {
                round,
                arm: arm.clone(),
            })?;
        }
        p.records.extend(executed);
        p.rounds_completed += 1;
        p.bandit.advance_round();
    };

    let report = build_report(ReportInputs {
        ctx: &ctx,
        progress: &p,
        baseline,
        baseline_source,
        stop_reason,
        provenance: "original",
    });
    log.append(Event::StudyEnd {
        rounds_completed: p.rounds_completed,
        attempts: p.attempts,
        stop_reason: stop_reason.into(),
        report_digest: report_digest(&report),
    })?;
    Ok(StudyOutcome {
        report,
        records: p.records,
        bandit: p.bandit,
    })
}

/// Successful candidates by |f(C) - f(x)| descending, ties by id.
pub(crate) fn rank(
    results: &[Option<RunRecord>],
    baseline: f64,
    metric: &str,
) -> Vec<(CandidateId, f64)> {
    let mut v: Vec<(CandidateId, f64)> = results
        .iter()
        .flatten()
        .filter_map(|r| {
            r.metrics
                .primary(metric)
                .map(|s| (r.candidate.candidate_id.clone(), (baseline - s).abs()))
        })
        .collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}
