//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use ablate::analysis::stats::t_interval;
use ablate::analysis::{component_effects, emit_report, ReportFormat};
use ablate::bandit::{compute_reward, RewardInput};
use ablate::config::{Policy, StudyConfig};
use ablate::events::{determinism_digest, Event, EventLog};
use ablate::executor::{FailureCategory, MetricsRecord, RunStatus};
use ablate::model::{ArmId, CandidateSpec, ComponentId, Mutation, Target};
use ablate::orchestrator::{replay_log, run_simulated, run_study, ExecutionEnv, ReplayOptions, RunRecord};
use common::{reference_config, sim_config, Scripted};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

/// Mean Acc@k over seeds, as total hits / (k · seeds).
fn mean_acc(config: &StudyConfig, policy: Policy, seeds: u64) -> Result<f64, String> {
    let mut hits = 0.0;
    let mut k_total = 0.0;
    for seed in 0..seeds {
        let mut c = config.clone();
        c.run.seed = seed;
        c.run.policy = policy;
        let (out, _) = run_simulated(&c).map_err(|e| e.to_string())?;
        let acc = out.report.acc_at_k().ok_or("report has no Acc@k")?;
        let k = out.report.k as f64;
        hits += (acc * k).round();
        k_total += k;
    }
    Ok(hits / k_total)
}

fn ac1() -> Outcome {
    let start = Instant::now();
    let cfg = reference_config();
    let ucb = mean_acc(&cfg, Policy::Ucb, 100)?;
    let random = mean_acc(&cfg, Policy::Random, 100)?;
    let elapsed = start.elapsed();

    let mut uniform = cfg.clone();
    for e in &mut uniform.knowledge.entries {
        e.weight_hint = None;
    }
    let uniform_ucb = mean_acc(&uniform, Policy::Ucb, 100)?;
    println!("INFO AC1 ucb with uniform priors: mean Acc@5 {uniform_ucb:.3}");

    let gap = ucb - random;
    let summary = format!(
        "ucb {ucb:.3} (>= 0.80), random {random:.3} (<= 0.55), gap {gap:.3} (>= 0.25), {:.1}s (< 60s)",
        elapsed.as_secs_f64()
    );
    check(
        ucb >= 0.80 && random <= 0.55 && gap >= 0.25 && elapsed < Duration::from_secs(60),
        summary.clone(),
        summary,
    )
}

fn ac2() -> Outcome {
    let mut cfg = sim_config(
        &[
            ("a", 0.5, 0.0, 0.0, 0.0, 5),
            ("b", 0.9, 0.0, 0.0, 0.0, 5),
            ("c", 0.7, 0.0, 0.0, 0.0, 5),
        ],
        100,
        0,
    );
    cfg.space.baseline_score = Some(1.0);
    cfg.bandit.k_explore = 3;
    cfg.bandit.k_base = 2;
    cfg.bandit.k_exploit = 1;
    cfg.bandit.lambda = 0.0;
    cfg.ground_truth = None;
    let exec = Scripted {
        scores: [("a", 0.75), ("b", 0.5), ("c", 0.375)]
            .into_iter()
            .map(|(a, s)| (ArmId::new(a), s))
            .collect(),
    };
    // (beta, arm, K, mean, pulls, T) per round, hand-computed
    let expected: [(f64, &str, usize, f64, u64, u64); 5] = [
        (3.0, "b", 3, 0.5, 3, 3),
        (3.0, "c", 3, 0.625, 3, 6),
        (2.0, "a", 3, 0.25, 3, 9),
        (2.0, "c", 2, 0.625, 5, 11),
        (1.0, "b", 2, 0.5, 5, 13),
    ];
    let mut log = EventLog::in_memory();
    run_study(&cfg, &ExecutionEnv::direct(&exec), &mut log).map_err(|e| e.to_string())?;
    let mut starts = Vec::new();
    let mut updates: BTreeMap<u32, (String, f64, u64, u64)> = BTreeMap::new();
    for l in log.lines() {
        match &l.event {
            Event::RoundStart { beta, arm, k, .. } => starts.push((*beta, arm.to_string(), *k)),
            Event::BanditUpdate {
                round,
                arm,
                stats,
                total_trials,
            } => {
                updates.insert(*round, (arm.to_string(), stats.mean_reward, stats.pulls, *total_trials));
            }
            _ => {}
        }
    }
    if starts.len() != 5 {
        return Err(format!("{} rounds instead of 5", starts.len()));
    }
    for (r, (beta, arm, k, mean, pulls, t)) in expected.iter().enumerate() {
        let (b, a, kk) = &starts[r];
        let (ua, m, n, tt) = updates.get(&(r as u32)).ok_or(format!("no update in round {r}"))?;
        let ok = (b - beta).abs() < 1e-12
            && a == arm
            && kk == k
            && ua == arm
            && (m - mean).abs() < 1e-12
            && n == pulls
            && tt == t;
        if !ok {
            return Err(format!(
                "round {r}: got ({b}, {a}, {kk}, {m}, {n}, {tt}), expected ({beta}, {arm}, {k}, {mean}, {pulls}, {t})"
            ));
        }
    }
    Ok("5 rounds match (beta 3/3/2/2/1)".into())
}

fn ac3() -> Outcome {
    let r = compute_reward(
        RewardInput {
            baseline_score: 0.9129,
            observed_score: 0.8854,
            cost: 0.0,
        },
        0.0,
    )
    .map_err(|e| e.to_string())?;
    let rec = RunRecord {
        round: 0,
        candidate: CandidateSpec::new(
            vec![Target {
                component: "perturbation_gnn".into(),
                mutation: Mutation::Toggle,
            }],
            ArmId::new("perturbation_gnn"),
            String::new(),
            1.0,
        ),
        metrics: MetricsRecord::success(BTreeMap::from([("mse".to_string(), 0.0083)]), "mse", 0.0, 1.0),
        reward: None,
        workspace_id: None,
        start_ms: 0,
        end_ms: 0,
    };
    let fx = component_effects(&[rec], 0.0044, "mse", 0.05);
    let s = fx.first().ok_or("no effect computed")?;
    let msg = format!(
        "reward {r:.6} (0.0275), importance {:.6} (0.0039) critical={} vs threshold 0.00022",
        s.importance, s.critical
    );
    check(
        (r - 0.0275).abs() <= 1e-9 && (s.importance - 0.0039).abs() <= 1e-9 && s.critical,
        msg.clone(),
        msg,
    )
}

fn ac4() -> Outcome {
    let rows = [
        (7.580, 1.364, 4, 5.411, 9.749),
        (5.250, 0.945, 7, 4.375, 6.125),
        (6.570, 1.183, 7, 5.475, 7.665),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (m, s, n, lo, hi) in rows {
        let (a, b) = t_interval(m, s, n, 0.95).ok_or("no interval")?;
        ok &= (a - lo).abs() <= 0.02 && (b - hi).abs() <= 0.02;
        parts.push(format!("[{a:.3}, {b:.3}] vs [{lo}, {hi}]"));
    }
    check(ok, parts.join("; "), parts.join("; "))
}

fn ac5() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let stats = common::isolation::run_isolation(dir.path(), 2024, 1000, 4)?;
    check(
        stats.sequences == 1000,
        format!(
            "{} sequences, 4 concurrent workspaces, {} applied, {} rejected, no leaks",
            stats.sequences, stats.applied, stats.rejected
        ),
        format!("only {} sequences ran", stats.sequences),
    )
}

fn ac6() -> Outcome {
    let base = reference_config();
    for seed in [0, 1, 17] {
        let mut digests = Vec::new();
        let mut reports = Vec::new();
        for maxpar in [1, 4, 16] {
            let mut c = base.clone();
            c.run.seed = seed;
            c.run.max_parallel = maxpar;
            let (out, log) = run_simulated(&c).map_err(|e| e.to_string())?;
            let json = emit_report(&out.report, ReportFormat::Json);
            let replayed = replay_log(log.lines(), &ReplayOptions::default()).map_err(|e| e.to_string())?;
            if emit_report(&replayed, ReportFormat::Json) != json {
                return Err(format!("seed {seed}, max_parallel {maxpar}: replay differs"));
            }
            digests.push(determinism_digest(log.lines()));
            reports.push(json);
        }
        if digests.windows(2).any(|w| w[0] != w[1]) {
            return Err(format!("seed {seed}: log digests differ across max_parallel"));
        }
        if reports.windows(2).any(|w| w[0] != w[1]) {
            return Err(format!("seed {seed}: report.json differs across max_parallel"));
        }
    }
    Ok("3 seeds x max_parallel {1,4,16}: identical logs and reports; replay byte-identical".into())
}

/// Best achievable total importance over all k-subsets.
fn brute_best(imps: &[f64], k: usize) -> f64 {
    let m = imps.len();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize == k {
            let s: f64 = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| imps[i]).sum();
            best = best.max(s);
        }
    }
    best
}

fn ac7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut max_gap: f64 = 0.0;
    for study in 0..500 {
        let m = rng.gen_range(2..=10);
        let names: Vec<String> = (0..m).map(|i| format!("arm{i:02}")).collect();
        let arms: Vec<(&str, f64, f64, f64, f64, usize)> = names
            .iter()
            .map(|n| {
                (
                    n.as_str(),
                    rng.gen_range(0.0..3.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..0.3),
                    rng.gen_range(1..6),
                )
            })
            .collect();
        let budget = rng.gen_range(1..40);
        let mut cfg = sim_config(&arms, budget, rng.gen());
        cfg.run.policy = [Policy::Ucb, Policy::Random, Policy::Heuristic][rng.gen_range(0..3)];
        cfg.run.max_parallel = rng.gen_range(1..8);
        let (out, _) = run_simulated(&cfg).map_err(|e| format!("study {study}: {e}"))?;
        let r = &out.report;
        if r.statistics.attempts > budget {
            return Err(format!("study {study}: {} attempts > budget {budget}", r.statistics.attempts));
        }
        let regret = r.simple_regret().ok_or(format!("study {study}: no regret"))?;
        if regret < 0.0 {
            return Err(format!("study {study}: negative regret {regret}"));
        }
        let gt = cfg.resolved_ground_truth().ok_or("no ground truth")?;
        let imps: BTreeMap<ComponentId, f64> = gt.importances.ok_or("no importances")?;
        let k = r.k;
        let values: Vec<f64> = imps.values().copied().collect();
        let got: f64 = r.top_k_pred.iter().take(k).map(|c| imps[c]).sum();
        let oracle = (brute_best(&values, k) - got).max(0.0);
        let gap = (regret - oracle).abs();
        max_gap = max_gap.max(gap);
        if gap > 1e-9 {
            return Err(format!("study {study}: regret {regret} vs brute force {oracle}"));
        }
    }
    Ok(format!("500 studies: attempts <= B, regret >= 0, max |regret - brute force| = {max_gap:.1e}"))
}

fn ac8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let f = common::shell::Fixture::new(dir.path());
    let long = Duration::from_secs(20);
    let short = Duration::from_millis(200);
    let cases: [(&str, Duration, Option<FailureCategory>); 4] = [
        ("success", long, None),
        ("exit1", long, Some(FailureCategory::RuntimeFailure)),
        ("timeout", short, Some(FailureCategory::RuntimeFailure)),
        ("missing", long, Some(FailureCategory::EnvironmentFailure)),
    ];
    for i in 0..50 {
        let (name, t, cat) = cases[i % cases.len()];
        let m = f.run(name, t);
        let ok = match cat {
            None => m.status == RunStatus::Success && m.metrics.get("pearson") == Some(&0.91),
            Some(c) => m.status == RunStatus::Failed && m.failure_category == Some(c),
        };
        if !ok {
            return Err(format!("run {i} ({name}): {:?} {:?}", m.status, m.failure_category));
        }
    }
    check(
        f.base_unchanged(),
        "success/exit-1/timeout/missing categorized over 50 runs; base tree unchanged".into(),
        "base tree digest changed".into(),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("AC1 simulated benchmark", ac1),
        ("AC2 golden trace", ac2),
        ("AC3 reward and criticality oracle", ac3),
        ("AC4 confidence intervals", ac4),
        ("AC5 workspace isolation", ac5),
        ("AC6 determinism and replay", ac6),
        ("AC7 budget and regret", ac7),
        ("AC8 shell executor contract", ac8),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(msg) => println!("PASS {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
