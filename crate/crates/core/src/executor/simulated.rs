//! Seeded surrogate environment with per-arm Gaussian rewards.
//!
//! Randomness comes from ChaCha8 keyed by
//! `sha256("ablate/simulated/v1" || seed_le || candidate_id)`, so a draw
//! depends only on the study seed and the candidate, never on execution
//! order or thread count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExecRequest, ExecutionOutcome, Executor, ExecutorError, FailureCategory, MetricsRecord};
use crate::model::ArmId;

/// Extra metric carrying the raw Gaussian draw.
pub const OBSERVATION_METRIC: &str = "sim_observation";

const FAILURE_MIX: [(FailureCategory, f64); 3] = [
    (FailureCategory::MappingFailure, 0.5),
    (FailureCategory::EnvironmentFailure, 0.3),
    (FailureCategory::RuntimeFailure, 0.2),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedArmModel {
    pub reward_mean: f64,
    #[serde(default)]
    pub reward_std: f64,
    #[serde(default)]
    pub failure_prob: f64,
}

impl SimulatedArmModel {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.reward_mean.is_finite() {
            out.push("reward_mean must be finite".to_string());
        }
        if !(self.reward_std.is_finite() && self.reward_std >= 0.0) {
            out.push("reward_std must be non-negative".to_string());
        }
        if !(0.0..=1.0).contains(&self.failure_prob) {
            out.push("failure_prob must lie in [0, 1]".to_string());
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedExecutor {
    pub env: BTreeMap<ArmId, SimulatedArmModel>,
    pub baseline: f64,
}

impl SimulatedExecutor {
    pub fn new(env: BTreeMap<ArmId, SimulatedArmModel>, baseline: f64) -> Self {
        Self { env, baseline }
    }

    fn rng(seed: u64, candidate: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(b"ablate/simulated/v1");
        h.update(seed.to_le_bytes());
        h.update(candidate.as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

impl Executor for SimulatedExecutor {
    fn uses_workspace(&self) -> bool {
        false
    }

    fn execute(&self, req: &ExecRequest<'_>) -> Result<ExecutionOutcome, ExecutorError> {
        let arm = &req.candidate.arm_id;
        let model = self
            .env
            .get(arm)
            .ok_or_else(|| ExecutorError::UnknownArm(arm.clone()))?;
        let mut rng = Self::rng(req.seed, req.candidate.candidate_id.as_str());
        let cost = req.candidate.estimated_cost;

        let failure_draw: f64 = rng.gen();
        let category_draw: f64 = rng.gen();
        let z: f64 = rng.sample(StandardNormal);

        let metrics = if failure_draw < model.failure_prob {
            let mut acc = 0.0;
            let category = FAILURE_MIX
                .iter()
                .find(|(_, p)| {
                    acc += p;
                    category_draw < acc
                })
                .map(|(c, _)| *c)
                .unwrap_or(FailureCategory::RuntimeFailure);
            MetricsRecord::failed(category, "simulated failure", 0.0, cost)
        } else {
            let observation = model.reward_mean + model.reward_std * z;
            // score chosen so that |baseline - score| recovers the draw
            let score = self.baseline - observation;
            let metrics = BTreeMap::from([
                (req.primary_metric.to_string(), score),
                (OBSERVATION_METRIC.to_string(), observation),
            ]);
            MetricsRecord::success(metrics, req.primary_metric, 0.0, cost)
        };
        Ok(ExecutionOutcome {
            metrics,
            logs: Vec::new(),
        })
    }
}
