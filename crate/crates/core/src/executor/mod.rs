//! Pluggable candidate execution.
//!
//! Two executors ship with the engine: [`SimulatedExecutor`] draws rewards
//! from per-arm Gaussian models, and [`ShellExecutor`] runs a configured
//! command inside the candidate's workspace and reads the metrics file it
//! leaves behind.

mod shell;
mod simulated;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use shell::{parse_metrics_file, ShellExecutor, METRICS_FILE};
pub use simulated::{SimulatedArmModel, SimulatedExecutor, OBSERVATION_METRIC};

use crate::model::{ArmId, CandidateSpec};
use crate::workspace::{Workspace, WorkspaceError, WorkspaceState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Failed,
}

/// Failure taxonomy: the mutation could not be mapped onto code, the
/// environment did not produce usable output, or the run itself failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    MappingFailure,
    EnvironmentFailure,
    RuntimeFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub metrics: BTreeMap<String, f64>,
    pub wall_seconds: f64,
    pub cost_gpu_hours: f64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_category: Option<FailureCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

impl MetricsRecord {
    /// A successful record, downgraded to an environment failure when the
    /// primary metric is missing or non-finite.
    pub fn success(
        metrics: BTreeMap<String, f64>,
        primary_metric: &str,
        wall_seconds: f64,
        cost_gpu_hours: f64,
    ) -> Self {
        match metrics.get(primary_metric) {
            Some(v) if v.is_finite() => Self {
                metrics,
                wall_seconds,
                cost_gpu_hours,
                status: RunStatus::Success,
                failure_category: None,
                failure_reason: None,
            },
            _ => Self::failed(
                FailureCategory::EnvironmentFailure,
                format!("primary metric {primary_metric:?} missing or not finite"),
                wall_seconds,
                cost_gpu_hours,
            ),
        }
    }

    pub fn failed(
        category: FailureCategory,
        reason: impl Into<String>,
        wall_seconds: f64,
        cost_gpu_hours: f64,
    ) -> Self {
        Self {
            metrics: BTreeMap::new(),
            wall_seconds,
            cost_gpu_hours,
            status: RunStatus::Failed,
            failure_category: Some(category),
            failure_reason: Some(reason.into()),
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == RunStatus::Success
    }

    pub fn primary(&self, metric: &str) -> Option<f64> {
        if self.is_success() {
            self.metrics.get(metric).copied()
        } else {
            None
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecutorError {
    #[error("arm {0} is not modelled by the simulated environment")]
    UnknownArm(ArmId),
    #[error("shell executor needs a workspace")]
    NoWorkspace,
    #[error("failed to spawn command: {0}")]
    Spawn(std::io::Error),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
}

pub struct ExecRequest<'a> {
    pub candidate: &'a CandidateSpec,
    pub workspace: Option<&'a Path>,
    pub seed: u64,
    pub primary_metric: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionOutcome {
    pub metrics: MetricsRecord,
    /// (file name, content) pairs for the run archive.
    pub logs: Vec<(String, String)>,
}

pub trait Executor: Sync {
    /// Whether candidates need a materialized workspace.
    fn uses_workspace(&self) -> bool;

    /// Runs one candidate. `Err` means the executor itself is unusable;
    /// candidate-level failures are reported through a failed record.
    fn execute(&self, req: &ExecRequest<'_>) -> Result<ExecutionOutcome, ExecutorError>;
}

/// Runs `executor` inside `ws` and advances it to `Executed`.
pub fn execute_in_workspace<E: Executor + ?Sized>(
    executor: &E,
    candidate: &CandidateSpec,
    ws: &mut Workspace,
    seed: u64,
    primary_metric: &str,
) -> Result<ExecutionOutcome, ExecutorError> {
    if ws.state() != WorkspaceState::Mutated {
        return Err(WorkspaceError::InvalidState {
            op: "execute",
            state: ws.state(),
        }
        .into());
    }
    let outcome = executor.execute(&ExecRequest {
        candidate,
        workspace: Some(ws.path()),
        seed,
        primary_metric,
    })?;
    ws.mark_executed()?;
    Ok(outcome)
}
