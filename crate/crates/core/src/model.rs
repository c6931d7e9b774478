//! Component space, mutation taxonomy and candidate configurations.
//!
//! A [`ComponentSpace`] declares the components of a target system, how they
//! group into arms (hypothesis families) and which mutations each component
//! admits. [`enumerate_candidates`] expands the space into concrete
//! [`CandidateSpec`]s, each identified by a stable content hash.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::workspace::PatchOp;

/// Default enumeration cap for [`enumerate_candidates`].
pub const DEFAULT_MAX_CANDIDATES: usize = 100_000;

/// Cost assumed for a component that does not declare one.
pub const DEFAULT_COST_GPU_HOURS: f64 = 1.0;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(
    /// Identifier of a declared component.
    ComponentId
);
string_id!(
    /// Identifier of an arm (hypothesis family).
    ArmId
);
string_id!(
    /// Content-hash identifier of a candidate configuration.
    CandidateId
);

/// Mutation family a component admits, as declared in the config.
///
/// Each declared kind expands into one or more concrete [`Mutation`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MutationKind {
    Toggle,
    Scale { factors: Vec<f64> },
    Replace { alternatives: Vec<String> },
    ParamGrid { param: String, values: Vec<serde_json::Value> },
}

impl MutationKind {
    pub fn tag(&self) -> MutationTag {
        match self {
            MutationKind::Toggle => MutationTag::Toggle,
            MutationKind::Scale { .. } => MutationTag::Scale,
            MutationKind::Replace { .. } => MutationTag::Replace,
            MutationKind::ParamGrid { .. } => MutationTag::ParamGrid,
        }
    }

    /// Concrete mutations this declaration expands to.
    pub fn expand(&self) -> Vec<Mutation> {
        match self {
            MutationKind::Toggle => vec![Mutation::Toggle],
            MutationKind::Scale { factors } => factors
                .iter()
                .map(|&factor| Mutation::Scale { factor })
                .collect(),
            MutationKind::Replace { alternatives } => alternatives
                .iter()
                .map(|a| Mutation::Replace {
                    alternative: a.clone(),
                })
                .collect(),
            MutationKind::ParamGrid { param, values } => values
                .iter()
                .map(|v| Mutation::ParamGrid {
                    param: param.clone(),
                    value: v.clone(),
                })
                .collect(),
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            MutationKind::Toggle => {}
            MutationKind::Scale { factors } => {
                if factors.is_empty() {
                    out.push("scale mutation declares no factors".to_string());
                }
                for f in factors {
                    if !(f.is_finite() && *f > 0.0) {
                        out.push(format!("scale factor {f} is not a positive finite number"));
                    }
                }
            }
            MutationKind::Replace { alternatives } => {
                if alternatives.is_empty() {
                    out.push("replace mutation declares no alternatives".to_string());
                }
                if alternatives.iter().any(|a| a.trim().is_empty()) {
                    out.push("replace alternative names must be non-empty".to_string());
                }
            }
            MutationKind::ParamGrid { param, values } => {
                if param.trim().is_empty() {
                    out.push("param_grid mutation has an empty param name".to_string());
                }
                if values.is_empty() {
                    out.push(format!("param_grid for {param:?} has an empty value list"));
                }
            }
        }
        out
    }
}

/// Discriminant of a mutation, used for diversity and patch lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationTag {
    Toggle,
    Scale,
    Replace,
    ParamGrid,
}

impl fmt::Display for MutationTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MutationTag::Toggle => "toggle",
            MutationTag::Scale => "scale",
            MutationTag::Replace => "replace",
            MutationTag::ParamGrid => "param_grid",
        })
    }
}

/// A concrete mutation applied to one target component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mutation {
    Toggle,
    Scale { factor: f64 },
    Replace { alternative: String },
    ParamGrid { param: String, value: serde_json::Value },
}

impl Mutation {
    pub fn tag(&self) -> MutationTag {
        match self {
            Mutation::Toggle => MutationTag::Toggle,
            Mutation::Scale { .. } => MutationTag::Scale,
            Mutation::Replace { .. } => MutationTag::Replace,
            Mutation::ParamGrid { .. } => MutationTag::ParamGrid,
        }
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mutation::Toggle => f.write_str("toggle"),
            Mutation::Scale { factor } => write!(f, "scale x{factor}"),
            Mutation::Replace { alternative } => write!(f, "replace with {alternative}"),
            Mutation::ParamGrid { param, value } => write!(f, "set {param}={value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: ComponentId,
    #[serde(default)]
    pub name: String,
    /// Defaults to the component id (one arm per component).
    #[serde(default)]
    pub arm_id: Option<ArmId>,
    #[serde(default)]
    pub description: String,
    pub allowed_mutations: Vec<MutationKind>,
    #[serde(default)]
    pub estimated_cost: Option<f64>,
    /// Declarative workspace patches per mutation kind. Values may use the
    /// placeholders `{factor}`, `{alternative}`, `{param}` and `{value}`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub patches: BTreeMap<MutationTag, Vec<PatchOp>>,
}

impl Component {
    pub fn arm(&self) -> ArmId {
        self.arm_id
            .clone()
            .unwrap_or_else(|| ArmId(self.id.0.clone()))
    }

    pub fn cost(&self) -> f64 {
        self.estimated_cost.unwrap_or(DEFAULT_COST_GPU_HOURS)
    }

    pub fn display_name(&self) -> &str {
        if self.name.is_empty() {
            self.id.as_str()
        } else {
            &self.name
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmDecl {
    pub id: ArmId,
    #[serde(default)]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpace {
    pub components: Vec<Component>,
    /// Declared arms. When empty, one arm per distinct component arm id is
    /// implied with weight 1.0.
    #[serde(default)]
    pub arms: Vec<ArmDecl>,
    /// f(C). `None` means the baseline is measured at study start.
    #[serde(default)]
    pub baseline_score: Option<f64>,
    pub primary_metric: String,
    #[serde(default = "default_true")]
    pub higher_is_better: bool,
}

fn default_true() -> bool {
    true
}

impl ComponentSpace {
    pub fn component(&self, id: &ComponentId) -> Option<&Component> {
        self.components.iter().find(|c| &c.id == id)
    }

    /// All arm ids, declared or implied, in lexicographic order.
    pub fn arm_ids(&self) -> Vec<ArmId> {
        let mut set: BTreeSet<ArmId> = self.arms.iter().map(|a| a.id.clone()).collect();
        if self.arms.is_empty() {
            set.extend(self.components.iter().map(Component::arm));
        }
        set.into_iter().collect()
    }

    /// Explicitly declared prior weights (arms without a weight are omitted).
    pub fn declared_weights(&self) -> BTreeMap<ArmId, f64> {
        self.arms
            .iter()
            .filter_map(|a| a.weight.map(|w| (a.id.clone(), w)))
            .collect()
    }

    pub fn components_of(&self, arm: &ArmId) -> Vec<&Component> {
        self.components.iter().filter(|c| &c.arm() == arm).collect()
    }
}

/// One executable mutation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSpec {
    pub candidate_id: CandidateId,
    /// Targets S(x) sorted by component id, each with its mutation.
    pub targets: Vec<Target>,
    /// Generating arm g(x).
    pub arm_id: ArmId,
    pub description: String,
    pub estimated_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub component: ComponentId,
    pub mutation: Mutation,
}

impl CandidateSpec {
    /// Builds a candidate, sorting targets and deriving the content id.
    pub fn new(mut targets: Vec<Target>, arm_id: ArmId, description: String, cost: f64) -> Self {
        targets.sort_by(|a, b| a.component.cmp(&b.component));
        let candidate_id = candidate_id_for(&targets, &arm_id);
        Self {
            candidate_id,
            targets,
            arm_id,
            description,
            estimated_cost: cost,
        }
    }

    pub fn is_single_target(&self) -> bool {
        self.targets.len() == 1
    }

    pub fn target_ids(&self) -> impl Iterator<Item = &ComponentId> {
        self.targets.iter().map(|t| &t.component)
    }

    /// Mutation tags of all targets (single-target candidates have one).
    pub fn primary_tag(&self) -> MutationTag {
        self.targets[0].mutation.tag()
    }

    /// Checks the candidate against `space`; returns every problem found.
    pub fn check(&self, space: &ComponentSpace) -> Vec<String> {
        let mut out = Vec::new();
        if self.targets.is_empty() {
            out.push(format!("candidate {} has no targets", self.candidate_id));
        }
        let mut seen = BTreeSet::new();
        let mut arm_matches = false;
        for t in &self.targets {
            if !seen.insert(&t.component) {
                out.push(format!("component {} targeted twice", t.component));
            }
            match space.component(&t.component) {
                None => out.push(format!("unknown target component {}", t.component)),
                Some(c) => {
                    if c.arm() == self.arm_id {
                        arm_matches = true;
                    }
                    let allowed = c
                        .allowed_mutations
                        .iter()
                        .any(|k| k.expand().contains(&t.mutation));
                    if !allowed {
                        out.push(format!(
                            "mutation {} not allowed on component {}",
                            t.mutation, t.component
                        ));
                    }
                }
            }
        }
        if !self.targets.is_empty() && !arm_matches {
            out.push(format!(
                "arm {} does not own any target of {}",
                self.arm_id, self.candidate_id
            ));
        }
        if !(self.estimated_cost.is_finite() && self.estimated_cost >= 0.0) {
            out.push("estimated_cost must be a non-negative finite number".to_string());
        }
        if candidate_id_for(&self.targets, &self.arm_id) != self.candidate_id {
            out.push(format!("candidate id {} does not match its content", self.candidate_id));
        }
        out
    }
}

/// Stable content hash over (targets, mutations, arm).
fn candidate_id_for(targets: &[Target], arm: &ArmId) -> CandidateId {
    #[derive(Serialize)]
    struct Key<'a> {
        arm: &'a ArmId,
        targets: &'a [Target],
    }
    let bytes = serde_json::to_vec(&Key { arm, targets }).expect("candidate key serializes");
    let digest = Sha256::digest(&bytes);
    CandidateId(format!("c{}", &hex::encode(digest)[..16]))
}

/// A single invariant violation found by [`validate_space`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    EmptySpace,
    DuplicateComponent { id: ComponentId },
    DuplicateArm { id: ArmId },
    OrphanArm { component: ComponentId, arm: ArmId },
    NegativeWeight { arm: ArmId },
    NoMutations { component: ComponentId },
    InvalidMutation { component: ComponentId, reason: String },
    InvalidCost { component: ComponentId },
    NonFiniteBaseline,
    EmptyPrimaryMetric,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySpace => f.write_str("component space is empty"),
            Violation::DuplicateComponent { id } => write!(f, "duplicate component id {id}"),
            Violation::DuplicateArm { id } => write!(f, "duplicate arm id {id}"),
            Violation::OrphanArm { component, arm } => {
                write!(f, "component {component} references undeclared arm {arm}")
            }
            Violation::NegativeWeight { arm } => {
                write!(f, "arm {arm} has a negative or non-finite prior weight")
            }
            Violation::NoMutations { component } => {
                write!(f, "component {component} allows no mutations")
            }
            Violation::InvalidMutation { component, reason } => {
                write!(f, "component {component}: {reason}")
            }
            Violation::InvalidCost { component } => {
                write!(f, "component {component} has a negative or non-finite cost")
            }
            Violation::NonFiniteBaseline => f.write_str("baseline score is not finite"),
            Violation::EmptyPrimaryMetric => f.write_str("primary metric name is empty"),
        }
    }
}

/// Checks every space invariant and returns the full violation list.
pub fn validate_space(space: &ComponentSpace) -> Vec<Violation> {
    let mut out = Vec::new();
    if space.components.is_empty() {
        out.push(Violation::EmptySpace);
    }
    if space.primary_metric.trim().is_empty() {
        out.push(Violation::EmptyPrimaryMetric);
    }
    if let Some(b) = space.baseline_score {
        if !b.is_finite() {
            out.push(Violation::NonFiniteBaseline);
        }
    }

    let mut arms = BTreeSet::new();
    for arm in &space.arms {
        if !arms.insert(&arm.id) {
            out.push(Violation::DuplicateArm { id: arm.id.clone() });
        }
        if let Some(w) = arm.weight {
            if !(w.is_finite() && w >= 0.0) {
                out.push(Violation::NegativeWeight { arm: arm.id.clone() });
            }
        }
    }

    let mut ids = BTreeSet::new();
    for c in &space.components {
        if !ids.insert(&c.id) {
            out.push(Violation::DuplicateComponent { id: c.id.clone() });
        }
        if !space.arms.is_empty() && !arms.contains(&c.arm()) {
            out.push(Violation::OrphanArm {
                component: c.id.clone(),
                arm: c.arm(),
            });
        }
        if c.allowed_mutations.is_empty() {
            out.push(Violation::NoMutations {
                component: c.id.clone(),
            });
        }
        for kind in &c.allowed_mutations {
            for reason in kind.problems() {
                out.push(Violation::InvalidMutation {
                    component: c.id.clone(),
                    reason,
                });
            }
        }
        if let Some(cost) = c.estimated_cost {
            if !(cost.is_finite() && cost >= 0.0) {
                out.push(Violation::InvalidCost {
                    component: c.id.clone(),
                });
            }
        }
    }
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum EnumerationError {
    #[error("max_targets must be at least 1")]
    ZeroTargets,
    #[error("candidate enumeration exceeds the cap of {cap}")]
    Overflow { cap: usize },
    #[error("invalid component space: {0} violation(s)")]
    InvalidSpace(usize),
}

/// Enumerates every candidate with at most `max_targets` targets.
///
/// Multi-target candidates are attributed to the arm of their
/// lexicographically smallest target component. Output is sorted by
/// candidate id.
pub fn enumerate_candidates(
    space: &ComponentSpace,
    max_targets: usize,
    cap: usize,
) -> Result<Vec<CandidateSpec>, EnumerationError> {
    if max_targets == 0 {
        return Err(EnumerationError::ZeroTargets);
    }
    let violations = validate_space(space);
    if !violations.is_empty() {
        return Err(EnumerationError::InvalidSpace(violations.len()));
    }

    let mut comps: Vec<&Component> = space.components.iter().collect();
    comps.sort_by(|a, b| a.id.cmp(&b.id));
    let options: Vec<Vec<Mutation>> = comps
        .iter()
        .map(|c| c.allowed_mutations.iter().flat_map(|k| k.expand()).collect())
        .collect();

    let mut out = Vec::new();
    let mut chosen: Vec<usize> = Vec::new();
    subsets(
        &comps,
        &options,
        max_targets,
        0,
        &mut chosen,
        &mut out,
        cap,
    )?;
    out.sort_by(|a, b| a.candidate_id.cmp(&b.candidate_id));
    Ok(out)
}

fn subsets(
    comps: &[&Component],
    options: &[Vec<Mutation>],
    max_targets: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    out: &mut Vec<CandidateSpec>,
    cap: usize,
) -> Result<(), EnumerationError> {
    for i in start..comps.len() {
        chosen.push(i);
        emit_products(comps, options, chosen, out, cap)?;
        if chosen.len() < max_targets {
            subsets(comps, options, max_targets, i + 1, chosen, out, cap)?;
        }
        chosen.pop();
    }
    Ok(())
}

fn emit_products(
    comps: &[&Component],
    options: &[Vec<Mutation>],
    chosen: &[usize],
    out: &mut Vec<CandidateSpec>,
    cap: usize,
) -> Result<(), EnumerationError> {
    let count = chosen
        .iter()
        .try_fold(1usize, |acc, &i| acc.checked_mul(options[i].len()))
        .ok_or(EnumerationError::Overflow { cap })?;
    if out.len().saturating_add(count) > cap {
        return Err(EnumerationError::Overflow { cap });
    }
    let arm = comps[chosen[0]].arm();
    let cost = chosen
        .iter()
        .map(|&i| comps[i].cost())
        .fold(0.0_f64, f64::max);
    let mut idx = vec![0usize; chosen.len()];
    loop {
        let targets: Vec<Target> = chosen
            .iter()
            .zip(&idx)
            .map(|(&c, &m)| Target {
                component: comps[c].id.clone(),
                mutation: options[c][m].clone(),
            })
            .collect();
        let description = targets
            .iter()
            .map(|t| {
                let name = comps
                    .iter()
                    .find(|c| c.id == t.component)
                    .map(|c| c.display_name())
                    .unwrap_or(t.component.as_str());
                format!("{} of {}", t.mutation, name)
            })
            .collect::<Vec<_>>()
            .join(" + ");
        out.push(CandidateSpec::new(targets, arm.clone(), description, cost));

        // odometer increment over the mutation options of each chosen component
        let mut pos = idx.len();
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < options[chosen[pos]].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}
