#![allow(dead_code)]

pub mod isolation;
pub mod shell;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ablate::config::{
    BanditSection, ExecutorConfig, GroundTruthConfig, KnowledgeSection, RunSection, SpaceSection,
    StudyConfig,
};
use ablate::executor::{
    ExecRequest, ExecutionOutcome, Executor, ExecutorError, MetricsRecord, SimulatedArmModel,
};
use ablate::model::{ArmDecl, ArmId, Component, MutationKind};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn reference_config() -> StudyConfig {
    StudyConfig::load(&repo_root().join("configs/perturbation_reference.json")).unwrap()
}

/// A component with its own arm admitting `n` distinct mutations:
/// toggle, then scale factors 0.5, 2, 3, ...
pub fn component(id: &str, n: usize) -> Component {
    assert!(n >= 1);
    let mut muts = vec![MutationKind::Toggle];
    if n > 1 {
        let mut factors = vec![0.5];
        factors.extend((2..n).map(|f| f as f64));
        muts.push(MutationKind::Scale { factors });
    }
    Component {
        id: id.into(),
        name: String::new(),
        arm_id: None,
        description: String::new(),
        allowed_mutations: muts,
        estimated_cost: Some(1.0),
        patches: BTreeMap::new(),
    }
}

/// Simulated config with one component per arm.
/// `arms`: (id, prior weight, mean, std, failure_prob, #candidates).
pub fn sim_config(arms: &[(&str, f64, f64, f64, f64, usize)], budget: u64, seed: u64) -> StudyConfig {
    StudyConfig {
        space: SpaceSection {
            components: arms.iter().map(|a| component(a.0, a.5)).collect(),
            baseline_score: Some(0.0),
            primary_metric: "score".into(),
            higher_is_better: true,
            max_targets: 1,
            max_candidates: 100_000,
        },
        arms: arms
            .iter()
            .map(|a| ArmDecl {
                id: a.0.into(),
                weight: Some(a.1),
            })
            .collect(),
        knowledge: KnowledgeSection::default(),
        bandit: BanditSection::default(),
        executor: ExecutorConfig::Simulated {
            arms: arms
                .iter()
                .map(|a| {
                    (
                        ArmId::new(a.0),
                        SimulatedArmModel {
                            reward_mean: a.2,
                            reward_std: a.3,
                            failure_prob: a.4,
                        },
                    )
                })
                .collect(),
            rng: "chacha8".into(),
        },
        ground_truth: Some(GroundTruthConfig {
            importances: None,
            top_k: None,
            from_simulated_env: true,
        }),
        run: RunSection {
            seed,
            budget,
            top_k: arms.len().min(5),
            ..RunSection::default()
        },
    }
}

/// Deterministic executor: each arm always scores its fixed value.
pub struct Scripted {
    pub scores: BTreeMap<ArmId, f64>,
}

impl Executor for Scripted {
    fn uses_workspace(&self) -> bool {
        false
    }

    fn execute(&self, req: &ExecRequest<'_>) -> Result<ExecutionOutcome, ExecutorError> {
        let s = self.scores[&req.candidate.arm_id];
        Ok(ExecutionOutcome {
            metrics: MetricsRecord::success(
                BTreeMap::from([(req.primary_metric.to_string(), s)]),
                req.primary_metric,
                0.0,
                req.candidate.estimated_cost,
            ),
            logs: Vec::new(),
        })
    }
}

/// Writes `files` under `dir`, creating parents.
pub fn write_tree(dir: &Path, files: &[(&str, &str)]) {
    for (rel, content) in files {
        let p = dir.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, content).unwrap();
    }
}
