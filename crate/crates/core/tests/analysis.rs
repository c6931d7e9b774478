use std::collections::{BTreeMap, BTreeSet};

use ablate::analysis::stats::{mean, sample_std, t_interval};
use ablate::analysis::{
    acc_at_k, arm_summary, canonical_json, component_effects, end_to_end_tsr, format_sig,
    simple_regret, true_top_k, AnalysisError,
};
use ablate::bandit::{compute_reward, RewardInput};
use ablate::executor::MetricsRecord;
use ablate::model::{ArmId, CandidateSpec, ComponentId, Mutation, Target};
use ablate::orchestrator::RunRecord;
use proptest::prelude::*;

fn record(component: &str, factor: f64, metric: &str, value: f64) -> RunRecord {
    RunRecord {
        round: 0,
        candidate: CandidateSpec::new(
            vec![Target {
                component: component.into(),
                mutation: Mutation::Scale { factor },
            }],
            ArmId::new(component),
            String::new(),
            1.0,
        ),
        metrics: MetricsRecord::success(BTreeMap::from([(metric.to_string(), value)]), metric, 0.0, 1.0),
        reward: None,
        workspace_id: None,
        start_ms: 0,
        end_ms: 0,
    }
}

#[test]
fn reward_for_unified_latent_drop() {
    let input = RewardInput {
        baseline_score: 0.9129,
        observed_score: 0.8854,
        cost: 0.5,
    };
    assert!((compute_reward(input, 0.0).unwrap() - 0.0275).abs() < 1e-9);
    assert!((compute_reward(input, 0.01).unwrap() - 0.0225).abs() < 1e-9);
}

#[test]
fn criticality_of_large_mse_increase() {
    let recs = vec![record("pert_gnn", 0.5, "mse", 0.0083)];
    let fx = component_effects(&recs, 0.0044, "mse", 0.05);
    assert_eq!(fx.len(), 1);
    assert!((fx[0].signed_effect + 0.0039).abs() < 1e-9);
    assert!((fx[0].importance - 0.0039).abs() < 1e-9);
    assert!(fx[0].critical);
    // a tiny change stays below 5% of the baseline
    let recs = vec![record("aggr", 0.5, "mse", 0.0044 + 0.0002)];
    assert!(!component_effects(&recs, 0.0044, "mse", 0.05)[0].critical);
}

#[test]
fn effects_average_and_skip_failures() {
    let mut recs = vec![
        record("a", 0.5, "score", 0.6),
        record("a", 2.0, "score", 1.2),
        record("b", 0.5, "score", 0.9),
    ];
    recs.push(RunRecord {
        metrics: MetricsRecord::failed(
            ablate::executor::FailureCategory::RuntimeFailure,
            "x",
            0.0,
            1.0,
        ),
        ..record("c", 0.5, "score", 0.0)
    });
    let fx = component_effects(&recs, 1.0, "score", 0.05);
    let ids: Vec<&str> = fx.iter().map(|e| e.component_id.as_str()).collect();
    assert_eq!(ids, ["a", "b"]);
    assert!((fx[0].signed_effect - 0.1).abs() < 1e-12);
    assert!((fx[0].max_abs_effect - 0.4).abs() < 1e-12);
    assert_eq!(fx[0].n_observations, 2);
}

#[test]
fn ci_spot_checks() {
    // (mean, std, n, lo, hi)
    let rows = [
        (7.580, 1.364, 4, 5.411, 9.749),
        (6.570, 1.183, 7, 5.475, 7.665),
        (6.700, 1.206, 7, 5.583, 7.817),
    ];
    for (m, s, n, lo, hi) in rows {
        let (a, b) = t_interval(m, s, n, 0.95).unwrap();
        assert!((a - lo).abs() <= 0.02, "{m}: {a} vs {lo}");
        assert!((b - hi).abs() <= 0.02, "{m}: {b} vs {hi}");
    }
}

#[test]
fn arm_summary_from_rewards() {
    let s = arm_summary(ArmId::new("a"), 1.0, &[1.0, 2.0, 3.0]);
    assert_eq!(s.mean_reward, Some(2.0));
    assert_eq!(s.std_reward, Some(1.0));
    let [lo, hi] = s.ci95.unwrap();
    // t(0.975, 2) = 4.302653
    assert!((hi - (2.0 + 4.302653 / 3f64.sqrt())).abs() < 1e-5);
    assert!((lo - (2.0 - 4.302653 / 3f64.sqrt())).abs() < 1e-5);
    assert_eq!(arm_summary(ArmId::new("a"), 1.0, &[1.0]).ci95, None);
    assert_eq!(mean(&[]), None);
    assert_eq!(sample_std(&[1.0]), None);
}

#[test]
fn tsr_and_formatting() {
    assert!((end_to_end_tsr([0.9, 0.8]).unwrap() - 0.72).abs() < 1e-12);
    assert_eq!(end_to_end_tsr(std::iter::empty()), None);
    assert_eq!(format_sig(0.02749999, 6), "0.0275000");
    assert_eq!(format_sig(123456789.0, 6), "1.23457e8");
    assert_eq!(format_sig(-0.0, 6), "0.00000");
    let v = serde_json::json!({"b": 1.0, "a": [1, 0.5]});
    assert_eq!(canonical_json(&v), "{\n  \"a\": [\n    1,\n    0.500000\n  ],\n  \"b\": 1.00000\n}\n");
}

#[test]
fn acc_at_k_edge_cases() {
    let gt: BTreeSet<ComponentId> = ["a", "b"].iter().map(|s| (*s).into()).collect();
    assert_eq!(acc_at_k(&[], &gt, 0), Err(AnalysisError::ZeroK));
    assert_eq!(
        acc_at_k(&[], &gt, 3),
        Err(AnalysisError::KTooLarge { k: 3, size: 2 })
    );
    // short prediction lists count missing slots as misses
    assert_eq!(acc_at_k(&["a".into()], &gt, 2), Ok(0.5));
}

/// Every k-subset of `0..n`.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

proptest! {
    #[test]
    fn regret_matches_brute_force(
        imps in prop::collection::vec(0.0f64..5.0, 1..10),
        pick in prop::collection::vec(any::<prop::sample::Index>(), 1..10),
        k in 1usize..10,
    ) {
        let m = imps.len();
        let k = k.min(m);
        let ids: Vec<ComponentId> = (0..m).map(|i| format!("c{i}").as_str().into()).collect();
        let map: BTreeMap<ComponentId, f64> = ids.iter().cloned().zip(imps.iter().copied()).collect();
        let mut pred: Vec<ComponentId> = Vec::new();
        for p in &pick {
            let c = ids[p.index(m)].clone();
            if !pred.contains(&c) {
                pred.push(c);
            }
        }
        let best = subsets(m, k)
            .iter()
            .map(|s| s.iter().map(|&i| imps[i]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let got: f64 = pred.iter().take(k).map(|c| map[c]).sum();
        let r = simple_regret(&pred, &map, k).unwrap();
        prop_assert!(r >= 0.0);
        prop_assert!((r - (best - got).max(0.0)).abs() < 1e-9);

        let top = true_top_k(&map, k);
        prop_assert_eq!(top.len(), k);
        prop_assert!(simple_regret(&top, &map, k).unwrap() < 1e-9);
        let gt: BTreeSet<ComponentId> = top.into_iter().collect();
        let hits = pred.iter().take(k).filter(|c| gt.contains(*c)).count();
        prop_assert_eq!(acc_at_k(&pred, &gt, k).unwrap(), hits as f64 / k as f64);
    }
}
