//! Dynamic-UCB arm selection over hypothesis families.
//!
//! The exploration coefficient follows a three-phase schedule over rounds,
//! unexplored arms are visited in order of their prior weight, and the
//! per-round generation budget is tiered by how often the selected arm has
//! been pulled.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ArmId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    #[error("bandit has no arms")]
    NoArms,
    #[error("no eligible arm to select")]
    NoEligibleArm,
    #[error("unknown arm {0}")]
    UnknownArm(ArmId),
    #[error("non-finite reward input: {0}")]
    NonFinite(&'static str),
    #[error("invalid bandit parameter: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub arm_id: ArmId,
    pub pulls: u64,
    /// Empirical mean; meaningless while `pulls == 0`.
    pub mean_reward: f64,
    pub sum_reward: f64,
    pub prior_weight: f64,
}

impl ArmStats {
    pub fn new(arm_id: ArmId, prior_weight: f64) -> Self {
        Self {
            arm_id,
            pulls: 0,
            mean_reward: 0.0,
            sum_reward: 0.0,
            prior_weight,
        }
    }
}

/// Candidates generated per round, by pull-count tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationBudgets {
    pub explore: usize,
    pub base: usize,
    pub exploit: usize,
}

impl Default for GenerationBudgets {
    fn default() -> Self {
        Self {
            explore: 5,
            base: 3,
            exploit: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditParams {
    pub beta_base: f64,
    pub max_rounds: u32,
    pub budgets: GenerationBudgets,
    pub lambda: f64,
}

impl Default for BanditParams {
    fn default() -> Self {
        Self {
            beta_base: 2.0,
            max_rounds: 5,
            budgets: GenerationBudgets::default(),
            lambda: 0.01,
        }
    }
}

impl BanditParams {
    pub fn validate(&self) -> Result<(), BanditError> {
        if !(self.beta_base.is_finite() && self.beta_base > 0.0) {
            return Err(BanditError::InvalidParameter("beta_base must be positive"));
        }
        if self.max_rounds == 0 {
            return Err(BanditError::InvalidParameter("max_rounds must be at least 1"));
        }
        let b = self.budgets;
        if b.explore == 0 || b.base == 0 || b.exploit == 0 {
            return Err(BanditError::InvalidParameter(
                "generation budgets must be positive",
            ));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(BanditError::InvalidParameter("lambda must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    pub arms: BTreeMap<ArmId, ArmStats>,
    pub total_trials: u64,
    pub round: u32,
    pub params: BanditParams,
}

impl BanditState {
    pub fn new(params: BanditParams, weights: &BTreeMap<ArmId, f64>) -> Self {
        let arms = weights
            .iter()
            .map(|(id, &w)| (id.clone(), ArmStats::new(id.clone(), w)))
            .collect();
        Self {
            arms,
            total_trials: 0,
            round: 0,
            params,
        }
    }

    /// Exploration coefficient for the current round.
    ///
    /// Boundaries `round < 0.3R` and `round >= 0.7R` are compared as
    /// `10·round < 3R` and `10·round >= 7R` in integers.
    pub fn effective_beta(&self) -> f64 {
        let round = u64::from(self.round) * 10;
        let r = u64::from(self.params.max_rounds);
        let base = self.params.beta_base;
        if round < 3 * r {
            1.5 * base
        } else if round >= 7 * r {
            0.5 * base
        } else {
            base
        }
    }

    pub fn exploration_bonus(&self, beta: f64, pulls: u64) -> f64 {
        beta * ((self.total_trials as f64 + 1.0).ln() / pulls as f64).sqrt()
    }

    pub fn ucb_score(&self, arm: &ArmStats, beta: f64) -> f64 {
        arm.mean_reward + self.exploration_bonus(beta, arm.pulls)
    }

    pub fn select_arm(&self) -> Result<ArmId, BanditError> {
        if self.arms.is_empty() {
            return Err(BanditError::NoArms);
        }
        self.select_arm_among(|_| true)
    }

    /// Selects among arms accepted by `eligible`. Unexplored eligible arms
    /// win by prior weight; otherwise the highest UCB score wins. Ties go to
    /// the lexicographically smallest arm id.
    pub fn select_arm_among<F>(&self, eligible: F) -> Result<ArmId, BanditError>
    where
        F: Fn(&ArmId) -> bool,
    {
        let candidates: Vec<&ArmStats> = self
            .arms
            .values()
            .filter(|a| eligible(&a.arm_id))
            .collect();
        if candidates.is_empty() {
            return Err(if self.arms.is_empty() {
                BanditError::NoArms
            } else {
                BanditError::NoEligibleArm
            });
        }

        let unexplored = candidates.iter().filter(|a| a.pulls == 0);
        if let Some(best) = argmax(unexplored.map(|a| (*a, a.prior_weight))) {
            return Ok(best.arm_id.clone());
        }

        let beta = self.effective_beta();
        let best = argmax(candidates.iter().map(|a| (*a, self.ucb_score(a, beta))))
            .expect("non-empty candidate set");
        Ok(best.arm_id.clone())
    }

    pub fn generation_budget(&self, arm: &ArmId) -> Result<usize, BanditError> {
        let stats = self
            .arms
            .get(arm)
            .ok_or_else(|| BanditError::UnknownArm(arm.clone()))?;
        let b = self.params.budgets;
        Ok(if stats.pulls < 3 {
            b.explore
        } else if stats.pulls > 10 {
            b.exploit
        } else {
            b.base
        })
    }

    /// Folds one reward into `arm` and increments the global trial count.
    /// On error the state is left untouched.
    pub fn update(&mut self, arm: &ArmId, reward: f64) -> Result<(), BanditError> {
        if !reward.is_finite() {
            return Err(BanditError::NonFinite("reward"));
        }
        let stats = self
            .arms
            .get_mut(arm)
            .ok_or_else(|| BanditError::UnknownArm(arm.clone()))?;
        stats.pulls += 1;
        stats.sum_reward += reward;
        stats.mean_reward = stats.sum_reward / stats.pulls as f64;
        self.total_trials += 1;
        Ok(())
    }

    pub fn advance_round(&mut self) {
        self.round += 1;
    }

    pub fn finished(&self) -> bool {
        self.round >= self.params.max_rounds
    }
}

/// First maximum in iteration order; the caller iterates in arm-id order.
fn argmax<'a, I>(items: I) -> Option<&'a ArmStats>
where
    I: Iterator<Item = (&'a ArmStats, f64)>,
{
    let mut best: Option<(&ArmStats, f64)> = None;
    for (arm, score) in items {
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((arm, score)),
        }
    }
    best.map(|(a, _)| a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardInput {
    pub baseline_score: f64,
    pub observed_score: f64,
    pub cost: f64,
}

/// `r(x) = |f(C) - f(x)| - lambda * cost(x)`; may be negative.
pub fn compute_reward(input: RewardInput, lambda: f64) -> Result<f64, BanditError> {
    if !input.baseline_score.is_finite() {
        return Err(BanditError::NonFinite("baseline_score"));
    }
    if !input.observed_score.is_finite() {
        return Err(BanditError::NonFinite("observed_score"));
    }
    if !input.cost.is_finite() || input.cost < 0.0 {
        return Err(BanditError::NonFinite("cost"));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(BanditError::NonFinite("lambda"));
    }
    Ok((input.baseline_score - input.observed_score).abs() - lambda * input.cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(arms: &[(&str, f64)]) -> BanditState {
        let w = arms.iter().map(|(a, w)| (ArmId::new(*a), *w)).collect();
        BanditState::new(BanditParams::default(), &w)
    }

    #[test]
    fn beta_schedule_plateaus() {
        let mut s = state(&[("a", 1.0)]);
        let mut seen = vec![];
        for round in 0..5 {
            s.round = round;
            seen.push(s.effective_beta());
        }
        assert_eq!(seen, vec![3.0, 3.0, 2.0, 2.0, 1.0]);
    }

    #[test]
    fn beta_boundaries_are_exact() {
        // R=10: 0.3R = 3 and 0.7R = 7 exactly.
        let mut s = state(&[("a", 1.0)]);
        s.params.max_rounds = 10;
        s.round = 2;
        assert_eq!(s.effective_beta(), 3.0);
        s.round = 3;
        assert_eq!(s.effective_beta(), 2.0);
        s.round = 6;
        assert_eq!(s.effective_beta(), 2.0);
        s.round = 7;
        assert_eq!(s.effective_beta(), 1.0);
    }

    #[test]
    fn unexplored_by_weight() {
        let s = state(&[("a", 0.9), ("b", 0.5)]);
        assert_eq!(s.select_arm().unwrap(), ArmId::new("a"));
    }

    #[test]
    fn weight_ties_go_lexicographic() {
        let s = state(&[("z", 1.0), ("m", 1.0), ("q", 1.0)]);
        assert_eq!(s.select_arm().unwrap(), ArmId::new("m"));
    }

    #[test]
    fn empty_bandit_errors() {
        let s = state(&[]);
        assert_eq!(s.select_arm(), Err(BanditError::NoArms));
    }

    #[test]
    fn budget_tiers() {
        let mut s = state(&[("a", 1.0)]);
        let a = ArmId::new("a");
        let set = |s: &mut BanditState, n: u64| s.arms.get_mut(&a).unwrap().pulls = n;
        set(&mut s, 2);
        assert_eq!(s.generation_budget(&a).unwrap(), 5);
        set(&mut s, 3);
        assert_eq!(s.generation_budget(&a).unwrap(), 3);
        set(&mut s, 10);
        assert_eq!(s.generation_budget(&a).unwrap(), 3);
        set(&mut s, 11);
        assert_eq!(s.generation_budget(&a).unwrap(), 2);
        assert!(matches!(
            s.generation_budget(&ArmId::new("x")),
            Err(BanditError::UnknownArm(_))
        ));
    }

    #[test]
    fn update_unknown_arm_leaves_state() {
        let mut s = state(&[("a", 1.0)]);
        let before = s.clone();
        assert!(s.update(&ArmId::new("b"), 0.3).is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn reward_rejects_non_finite() {
        let input = RewardInput {
            baseline_score: f64::NAN,
            observed_score: 0.0,
            cost: 0.0,
        };
        assert!(compute_reward(input, 0.01).is_err());
        let input = RewardInput {
            baseline_score: 1.0,
            observed_score: 0.0,
            cost: -1.0,
        };
        assert!(compute_reward(input, 0.01).is_err());
    }
}
