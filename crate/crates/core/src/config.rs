//! Study configuration file.
//!
//! One JSON document with the sections `space`, `arms`, `knowledge`,
//! `bandit`, `executor`, `ground_truth` and `run`. Relative paths (the
//! knowledge file and the shell executor's base directory) are resolved
//! against the config file's directory by [`StudyConfig::load`], and the
//! knowledge file is inlined so a loaded config is self-contained.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{BanditParams, GenerationBudgets};
use crate::executor::SimulatedArmModel;
use crate::knowledge::{KnowledgeBase, KnowledgeEntry, DEFAULT_K_RET};
use crate::model::{
    validate_space, ArmDecl, ArmId, Component, ComponentId, ComponentSpace, DEFAULT_MAX_CANDIDATES,
};
use crate::workspace::sha256_hex;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("cannot read knowledge file {0}")]
    Knowledge(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub space: SpaceSection,
    #[serde(default)]
    pub arms: Vec<ArmDecl>,
    #[serde(default)]
    pub knowledge: KnowledgeSection,
    #[serde(default)]
    pub bandit: BanditSection,
    pub executor: ExecutorConfig,
    #[serde(default)]
    pub ground_truth: Option<GroundTruthConfig>,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSection {
    pub components: Vec<Component>,
    #[serde(default)]
    pub baseline_score: Option<f64>,
    pub primary_metric: String,
    #[serde(default = "yes")]
    pub higher_is_better: bool,
    #[serde(default = "one")]
    pub max_targets: usize,
    #[serde(default = "max_candidates")]
    pub max_candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSection {
    /// Knowledge file, relative to the config directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub entries: Vec<KnowledgeEntry>,
    #[serde(default = "k_ret")]
    pub k_ret: usize,
}

impl Default for KnowledgeSection {
    fn default() -> Self {
        Self {
            path: None,
            entries: Vec::new(),
            k_ret: DEFAULT_K_RET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSection {
    #[serde(default = "beta_base")]
    pub beta_base: f64,
    #[serde(default = "max_rounds")]
    pub max_rounds: u32,
    #[serde(default = "k_explore")]
    pub k_explore: usize,
    #[serde(default = "k_base")]
    pub k_base: usize,
    #[serde(default = "k_exploit")]
    pub k_exploit: usize,
    #[serde(default = "lambda")]
    pub lambda: f64,
}

impl Default for BanditSection {
    fn default() -> Self {
        Self {
            beta_base: beta_base(),
            max_rounds: max_rounds(),
            k_explore: k_explore(),
            k_base: k_base(),
            k_exploit: k_exploit(),
            lambda: lambda(),
        }
    }
}

impl BanditSection {
    pub fn params(&self) -> BanditParams {
        BanditParams {
            beta_base: self.beta_base,
            max_rounds: self.max_rounds,
            budgets: GenerationBudgets {
                explore: self.k_explore,
                base: self.k_base,
                exploit: self.k_exploit,
            },
            lambda: self.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExecutorConfig {
    Simulated {
        arms: BTreeMap<ArmId, SimulatedArmModel>,
        /// Generator used for draws; only `chacha8` is defined.
        #[serde(default = "chacha8")]
        rng: String,
    },
    Shell {
        base_dir: PathBuf,
        command: String,
        #[serde(default = "timeout_seconds")]
        timeout_seconds: f64,
        #[serde(default = "artifacts")]
        artifacts: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthConfig {
    /// Known importances s_i per component.
    #[serde(default)]
    pub importances: Option<BTreeMap<ComponentId, f64>>,
    /// Known top-k set, when importances are not available.
    #[serde(default)]
    pub top_k: Option<Vec<ComponentId>>,
    /// Rank components by the simulated environment's true arm means.
    #[serde(default)]
    pub from_simulated_env: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Ucb,
    Random,
    Heuristic,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Ucb => "ucb",
            Policy::Random => "random",
            Policy::Heuristic => "heuristic",
        })
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ucb" => Ok(Policy::Ucb),
            "random" => Ok(Policy::Random),
            "heuristic" | "heuristic-fixed-order" => Ok(Policy::Heuristic),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

/// Which cost feeds the reward's penalty term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSource {
    Declared,
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    /// B: maximum number of executed candidates.
    #[serde(default = "budget")]
    pub budget: u64,
    #[serde(default = "one")]
    pub max_parallel: usize,
    #[serde(default = "tau_crit")]
    pub tau_crit: f64,
    /// Metric used for criticality; defaults to the primary metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criticality_metric: Option<String>,
    /// f(C) on the criticality metric, required when it differs from the
    /// primary metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criticality_baseline: Option<f64>,
    #[serde(default = "ucb")]
    pub policy: Policy,
    #[serde(default = "declared")]
    pub reward_cost: CostSource,
    #[serde(default = "top_k")]
    pub top_k: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            budget: budget(),
            max_parallel: 1,
            tau_crit: tau_crit(),
            criticality_metric: None,
            criticality_baseline: None,
            policy: Policy::Ucb,
            reward_cost: CostSource::Declared,
            top_k: top_k(),
        }
    }
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn max_candidates() -> usize {
    DEFAULT_MAX_CANDIDATES
}
fn k_ret() -> usize {
    DEFAULT_K_RET
}
fn beta_base() -> f64 {
    2.0
}
fn max_rounds() -> u32 {
    5
}
fn k_explore() -> usize {
    5
}
fn k_base() -> usize {
    3
}
fn k_exploit() -> usize {
    2
}
fn lambda() -> f64 {
    0.01
}
fn chacha8() -> String {
    "chacha8".into()
}
fn timeout_seconds() -> f64 {
    3600.0
}
fn artifacts() -> Vec<String> {
    vec![crate::executor::METRICS_FILE.to_string()]
}
fn budget() -> u64 {
    25
}
fn tau_crit() -> f64 {
    0.05
}
fn ucb() -> Policy {
    Policy::Ucb
}
fn declared() -> CostSource {
    CostSource::Declared
}
fn top_k() -> usize {
    5
}

/// Ground truth resolved to a top-k set and, when known, importances.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedGroundTruth {
    pub top_k: Vec<ComponentId>,
    pub importances: Option<BTreeMap<ComponentId, f64>>,
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads, resolves relative paths and inlines the knowledge file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(kb_path) = cfg.knowledge.path.take() {
            let full = dir.join(&kb_path);
            let kb = KnowledgeBase::load(&full)
                .map_err(|e| ConfigError::Knowledge(e.to_string()))?;
            cfg.knowledge.entries.extend(kb.entries);
        }
        if let ExecutorConfig::Shell { base_dir, .. } = &mut cfg.executor {
            if base_dir.is_relative() {
                *base_dir = dir.join(&*base_dir);
            }
        }
        Ok(cfg)
    }

    pub fn component_space(&self) -> ComponentSpace {
        ComponentSpace {
            components: self.space.components.clone(),
            arms: self.arms.clone(),
            baseline_score: self.space.baseline_score,
            primary_metric: self.space.primary_metric.clone(),
            higher_is_better: self.space.higher_is_better,
        }
    }

    pub fn knowledge_base(&self) -> KnowledgeBase {
        KnowledgeBase {
            entries: self.knowledge.entries.clone(),
        }
    }

    pub fn criticality_metric(&self) -> &str {
        self.run
            .criticality_metric
            .as_deref()
            .unwrap_or(&self.space.primary_metric)
    }

    /// Stable digest of the config. `max_parallel` only affects scheduling,
    /// never results, so it is left out.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(run) = v.get_mut("run").and_then(|r| r.as_object_mut()) {
            run.remove("max_parallel");
        }
        sha256_hex(v.to_string().as_bytes())
    }

    pub fn resolved_ground_truth(&self) -> Option<ResolvedGroundTruth> {
        let gt = self.ground_truth.as_ref()?;
        let k = self.run.top_k;
        let importances = if let Some(m) = &gt.importances {
            Some(m.clone())
        } else if gt.from_simulated_env {
            match &self.executor {
                ExecutorConfig::Simulated { arms, .. } => Some(
                    self.space
                        .components
                        .iter()
                        .filter_map(|c| arms.get(&c.arm()).map(|m| (c.id.clone(), m.reward_mean.abs())))
                        .collect(),
                ),
                ExecutorConfig::Shell { .. } => None,
            }
        } else {
            None
        };
        let top_k = match (&gt.top_k, &importances) {
            (Some(t), _) => t.iter().take(k).cloned().collect(),
            (None, Some(m)) => crate::analysis::true_top_k(m, k),
            (None, None) => return None,
        };
        Some(ResolvedGroundTruth { top_k, importances })
    }

    /// Every schema and invariant violation, as human-readable lines.
    pub fn validate(&self) -> Vec<String> {
        let mut out: Vec<String> = validate_space(&self.component_space())
            .into_iter()
            .map(|v| v.to_string())
            .collect();
        let b = &self.bandit;
        if let Err(e) = b.params().validate() {
            out.push(e.to_string());
        }
        if self.run.budget == 0 {
            out.push("run.budget must be at least 1".into());
        }
        if self.run.max_parallel == 0 {
            out.push("run.max_parallel must be at least 1".into());
        }
        if !(self.run.tau_crit.is_finite() && self.run.tau_crit >= 0.0) {
            out.push("run.tau_crit must be non-negative".into());
        }
        if self.run.top_k == 0 {
            out.push("run.top_k must be at least 1".into());
        }
        if self.space.max_targets == 0 {
            out.push("space.max_targets must be at least 1".into());
        }
        if self.knowledge.k_ret == 0 {
            out.push("knowledge.k_ret must be at least 1".into());
        }
        if let Err(e) = KnowledgeBase::new(self.knowledge.entries.clone()) {
            out.push(e.to_string());
        }
        if self.criticality_metric() != self.space.primary_metric
            && self.run.criticality_baseline.is_none()
        {
            out.push("run.criticality_baseline is required with a non-primary criticality_metric".into());
        }
        let space = self.component_space();
        match &self.executor {
            ExecutorConfig::Simulated { arms, rng } => {
                if self.space.baseline_score.is_none() {
                    out.push("space.baseline_score is required with the simulated executor".into());
                }
                if rng != "chacha8" {
                    out.push(format!("unsupported simulated rng {rng:?} (expected \"chacha8\")"));
                }
                for arm in space.arm_ids() {
                    if !arms.contains_key(&arm) {
                        out.push(format!("simulated environment does not model arm {arm}"));
                    }
                }
                for (arm, model) in arms {
                    for p in model.problems() {
                        out.push(format!("simulated arm {arm}: {p}"));
                    }
                }
            }
            ExecutorConfig::Shell {
                command,
                timeout_seconds,
                ..
            } => {
                if command.trim().is_empty() {
                    out.push("executor.command is empty".into());
                }
                if !(timeout_seconds.is_finite() && *timeout_seconds > 0.0) {
                    out.push("executor.timeout_seconds must be positive".into());
                }
            }
        }
        if let Some(gt) = &self.ground_truth {
            let known: BTreeSet<&ComponentId> = space.components.iter().map(|c| &c.id).collect();
            if let Some(m) = &gt.importances {
                for (c, s) in m {
                    if !known.contains(c) {
                        out.push(format!("ground truth names unknown component {c}"));
                    }
                    if !(s.is_finite() && *s >= 0.0) {
                        out.push(format!("ground truth importance of {c} must be non-negative"));
                    }
                }
            }
            match self.resolved_ground_truth() {
                None => out.push("ground_truth declares neither importances nor top_k".into()),
                Some(r) if r.top_k.len() < self.run.top_k => out.push(format!(
                    "ground truth has {} components, fewer than top_k = {}",
                    r.top_k.len(),
                    self.run.top_k
                )),
                Some(_) => {}
            }
        }
        out
    }
}
