//! Group-relative advantages and the clipped surrogate objectives.
//!
//! Three objectives share the `min(ratio·A, clip(ratio)·A)` structure and
//! differ in ratio granularity:
//!
//! - GRPO: one sequence-level ratio `ρ_i = exp(Σ_t Δlp_t)` per completion,
//!   symmetric clip, plus a KL penalty to a frozen reference policy
//!   (objective = surrogate − β·KL).
//! - DAPO: token-level ratios `r_{i,t} = exp(Δlp_t)`, asymmetric clip bounds
//!   (a looser upper bound), loss averaged over all generated tokens, no KL.
//! - GSPO: a length-normalized sequence ratio `s_i = exp(mean_t Δlp_t)`
//!   shared by every token of the completion, symmetric clip, no KL.
//!
//! All objectives are reported as values to *maximize*; trainers negate for
//! descent. Gradients are taken with respect to the current-policy per-token
//! log-probabilities. Whenever the min selects a strictly clipped branch the
//! surrogate gradient for that ratio is exactly zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("group must contain at least {needed} completions, got {got}")]
    GroupTooSmall { needed: usize, got: usize },
    #[error("token log-prob vectors must be aligned, non-empty, and finite")]
    InvalidLogProbs,
    #[error("advantages not computed for group `{0}`")]
    MissingAdvantages(String),
    #[error("advantage vector length {got} does not match group size {expected}")]
    AdvantageShape { got: usize, expected: usize },
    #[error("invalid objective config: {0}")]
    InvalidConfig(String),
}

/// Aligned per-token natural-log probabilities of one completion under the
/// current, rollout-time (old), and frozen reference policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs {
    pub current: Vec<f64>,
    pub old: Vec<f64>,
    pub reference: Vec<f64>,
}

impl TokenLogProbs {
    pub fn new(
        current: Vec<f64>,
        old: Vec<f64>,
        reference: Vec<f64>,
    ) -> Result<Self, ObjectiveError> {
        let lp = TokenLogProbs {
            current,
            old,
            reference,
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    /// Length alignment, finiteness, and log-probs ≤ 0. Objective evaluation
    /// checks only alignment and finiteness so that finite-difference probes
    /// may nudge a coordinate across zero.
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        self.validate_aligned()?;
        let nonpositive = self
            .current
            .iter()
            .chain(&self.old)
            .chain(&self.reference)
            .all(|&v| v <= 0.0);
        if !nonpositive {
            return Err(ObjectiveError::InvalidLogProbs);
        }
        Ok(())
    }

    fn validate_aligned(&self) -> Result<(), ObjectiveError> {
        let n = self.current.len();
        if n == 0 || self.old.len() != n || self.reference.len() != n {
            return Err(ObjectiveError::InvalidLogProbs);
        }
        let finite = self
            .current
            .iter()
            .chain(&self.old)
            .chain(&self.reference)
            .all(|v| v.is_finite());
        if !finite {
            return Err(ObjectiveError::InvalidLogProbs);
        }
        Ok(())
    }
}

/// One completion inside a group: its log-probs and scalar reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRollout {
    pub logprobs: TokenLogProbs,
    pub reward: f64,
}

/// G completions sampled for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRollout {
    pub prompt_id: String,
    pub completions: Vec<CompletionRollout>,
    /// Standardized group-relative advantages, once computed.
    pub advantages: Option<Vec<f64>>,
}

impl GroupRollout {
    pub fn new(prompt_id: impl Into<String>, completions: Vec<CompletionRollout>) -> Self {
        GroupRollout {
            prompt_id: prompt_id.into(),
            completions,
            advantages: None,
        }
    }

    pub fn group_size(&self) -> usize {
        self.completions.len()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.completions.iter().map(|c| c.reward).collect()
    }

    /// Population standard deviation of the group's rewards.
    pub fn reward_std(&self) -> f64 {
        population_std(&self.rewards())
    }

    pub fn compute_advantages(&mut self, std_epsilon: f64) -> Result<&[f64], ObjectiveError> {
        let adv = group_advantages(&self.rewards(), std_epsilon)?;
        self.advantages = Some(adv);
        Ok(self.advantages.as_deref().unwrap())
    }

    fn advantages_checked(&self) -> Result<&[f64], ObjectiveError> {
        let adv = self
            .advantages
            .as_deref()
            .ok_or_else(|| ObjectiveError::MissingAdvantages(self.prompt_id.clone()))?;
        if adv.len() != self.completions.len() {
            return Err(ObjectiveError::AdvantageShape {
                got: adv.len(),
                expected: self.completions.len(),
            });
        }
        Ok(adv)
    }
}

fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

/// Standardized group-relative advantages `A_i = (r_i − mean) / std` using the
/// population standard deviation. Groups with `std < std_epsilon` get all-zero
/// advantages instead of a division blow-up.
pub fn group_advantages(rewards: &[f64], std_epsilon: f64) -> Result<Vec<f64>, ObjectiveError> {
    if rewards.len() < 2 {
        return Err(ObjectiveError::GroupTooSmall {
            needed: 2,
            got: rewards.len(),
        });
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = population_std(rewards);
    if std < std_epsilon {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Importance ratio of one completion. Length-normalized (`exp(mean Δlp)`,
/// the GSPO sequence ratio, a geometric mean of token ratios) or plain
/// (`exp(sum Δlp)`, the GRPO sequence ratio).
pub fn sequence_ratio(lp: &TokenLogProbs, normalized: bool) -> f64 {
    let sum: f64 = lp
        .current
        .iter()
        .zip(&lp.old)
        .map(|(cur, old)| cur - old)
        .sum();
    if normalized {
        (sum / lp.len() as f64).exp()
    } else {
        sum.exp()
    }
}

/// Low-variance KL estimator: `mean_t exp(Δ_t) − Δ_t − 1` with
/// `Δ_t = lp_ref − lp_cur`. Nonnegative by convexity; zero iff the policies
/// agree on every token.
pub fn kl_low_var(current: &[f64], reference: &[f64]) -> f64 {
    debug_assert_eq!(current.len(), reference.len());
    let n = current.len() as f64;
    current
        .iter()
        .zip(reference)
        .map(|(cur, refv)| {
            let delta = refv - cur;
            delta.exp() - delta - 1.0
        })
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Grpo,
    Dapo,
    Gspo,
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "grpo" => Ok(Algorithm::Grpo),
            "dapo" => Ok(Algorithm::Dapo),
            "gspo" => Ok(Algorithm::Gspo),
            other => Err(format!("unknown algorithm `{other}` (grpo|dapo|gspo)")),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::Grpo => f.write_str("grpo"),
            Algorithm::Dapo => f.write_str("dapo"),
            Algorithm::Gspo => f.write_str("gspo"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub algorithm: Algorithm,
    /// Symmetric clip half-width for GRPO/GSPO.
    pub eps: f64,
    /// Asymmetric clip bounds for DAPO.
    pub eps_low: f64,
    pub eps_high: f64,
    /// KL penalty coefficient β. Applies where the objective carries a KL
    /// term — GRPO only, unless `kl_all_algorithms` is set.
    pub kl_coef: f64,
    /// Experimental: add the same group-averaged KL penalty to DAPO and GSPO,
    /// whose objectives carry none as written.
    pub kl_all_algorithms: bool,
    /// Degeneracy guard for advantage standardization and dynamic sampling.
    pub std_epsilon: f64,
    /// Evaluate GRPO with token-level ratios instead of the sequence-level
    /// ratio the objective is written with.
    pub token_level_grpo: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            algorithm: Algorithm::Grpo,
            eps: 0.2,
            eps_low: 0.2,
            eps_high: 0.3,
            kl_coef: 0.01,
            kl_all_algorithms: false,
            std_epsilon: 1e-6,
            token_level_grpo: false,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !(self.eps > 0.0 && self.eps_low > 0.0 && self.eps_high > 0.0) {
            return Err(ObjectiveError::InvalidConfig(
                "clip widths must be positive".into(),
            ));
        }
        if self.kl_coef < 0.0 {
            return Err(ObjectiveError::InvalidConfig("kl_coef must be >= 0".into()));
        }
        if self.std_epsilon.is_nan() || self.std_epsilon <= 0.0 {
            return Err(ObjectiveError::InvalidConfig(
                "std_epsilon must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Objective value J (to maximize) and `∂J/∂lp_cur` mirroring the token shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveResult {
    pub value: f64,
    pub grad: Vec<Vec<f64>>,
}

/// `min(ratio·a, clip(ratio, lo, hi)·a)` plus the active-branch derivative
/// factor d(min)/d(ratio). Ties resolve to the unclipped branch, whose
/// derivative equals the clipped one whenever the clip is not binding.
fn clipped_term(ratio: f64, a: f64, lo: f64, hi: f64) -> (f64, f64) {
    let unclipped = ratio * a;
    let clipped = ratio.clamp(lo, hi) * a;
    if unclipped <= clipped {
        (unclipped, a)
    } else {
        (clipped, 0.0)
    }
}

fn validate_group(group: &GroupRollout) -> Result<(), ObjectiveError> {
    if group.group_size() < 2 {
        return Err(ObjectiveError::GroupTooSmall {
            needed: 2,
            got: group.group_size(),
        });
    }
    for c in &group.completions {
        c.logprobs.validate_aligned()?;
    }
    Ok(())
}

/// Subtract `β · (1/G) Σ_i kl_low_var(i)` from the objective and accumulate
/// its gradient `−β/(G·|o_i|)·(1 − exp(Δ_t))` per token.
fn add_kl_penalty(group: &GroupRollout, kl_coef: f64, value: &mut f64, grad: &mut [Vec<f64>]) {
    let g = group.group_size() as f64;
    for (row, completion) in grad.iter_mut().zip(&group.completions) {
        let lp = &completion.logprobs;
        *value -= kl_coef * kl_low_var(&lp.current, &lp.reference) / g;
        let t = lp.len() as f64;
        for (slot, (cur, refv)) in row.iter_mut().zip(lp.current.iter().zip(&lp.reference)) {
            let delta = refv - cur;
            *slot -= kl_coef / (g * t) * (1.0 - delta.exp());
        }
    }
}

/// GRPO: sequence-level clipped surrogate minus β times the low-variance KL,
/// both averaged over the group. With `token_level_grpo` the surrogate uses
/// token ratios averaged per-sequence instead.
pub fn grpo_objective(
    group: &GroupRollout,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveResult, ObjectiveError> {
    cfg.validate()?;
    validate_group(group)?;
    let adv = group.advantages_checked()?;
    let g = group.group_size() as f64;
    let (lo, hi) = (1.0 - cfg.eps, 1.0 + cfg.eps);
    let mut value = 0.0;
    let mut grad: Vec<Vec<f64>> = Vec::with_capacity(group.group_size());
    for (completion, &a) in group.completions.iter().zip(adv) {
        let lp = &completion.logprobs;
        let tokens = lp.len();
        let mut row = vec![0.0; tokens];
        if cfg.token_level_grpo {
            let t = tokens as f64;
            for (idx, (cur, old)) in lp.current.iter().zip(&lp.old).enumerate() {
                let ratio = (cur - old).exp();
                let (term, dfactor) = clipped_term(ratio, a, lo, hi);
                value += term / (g * t);
                row[idx] += dfactor * ratio / (g * t);
            }
        } else {
            let ratio = sequence_ratio(lp, false);
            let (term, dfactor) = clipped_term(ratio, a, lo, hi);
            value += term / g;
            let per_token = dfactor * ratio / g;
            for slot in row.iter_mut() {
                *slot += per_token;
            }
        }
        grad.push(row);
    }
    if cfg.kl_coef > 0.0 {
        add_kl_penalty(group, cfg.kl_coef, &mut value, &mut grad);
    }
    Ok(ObjectiveResult { value, grad })
}

/// DAPO: token-level ratios, asymmetric clip, loss averaged over all
/// generated tokens; no KL term.
pub fn dapo_objective(
    group: &GroupRollout,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveResult, ObjectiveError> {
    cfg.validate()?;
    validate_group(group)?;
    let adv = group.advantages_checked()?;
    let total_tokens: usize = group.completions.iter().map(|c| c.logprobs.len()).sum();
    let t = total_tokens as f64;
    let (lo, hi) = (1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
    let mut value = 0.0;
    let mut grad: Vec<Vec<f64>> = Vec::with_capacity(group.group_size());
    for (completion, &a) in group.completions.iter().zip(adv) {
        let lp = &completion.logprobs;
        let mut row = vec![0.0; lp.len()];
        for (idx, (cur, old)) in lp.current.iter().zip(&lp.old).enumerate() {
            let ratio = (cur - old).exp();
            let (term, dfactor) = clipped_term(ratio, a, lo, hi);
            value += term / t;
            row[idx] = dfactor * ratio / t;
        }
        grad.push(row);
    }
    if cfg.kl_all_algorithms && cfg.kl_coef > 0.0 {
        add_kl_penalty(group, cfg.kl_coef, &mut value, &mut grad);
    }
    Ok(ObjectiveResult { value, grad })
}

/// GSPO: length-normalized sequence ratio shared by every token, symmetric
/// clip, averaged over the group; no KL term.
pub fn gspo_objective(
    group: &GroupRollout,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveResult, ObjectiveError> {
    cfg.validate()?;
    validate_group(group)?;
    let adv = group.advantages_checked()?;
    let g = group.group_size() as f64;
    let (lo, hi) = (1.0 - cfg.eps, 1.0 + cfg.eps);
    let mut value = 0.0;
    let mut grad: Vec<Vec<f64>> = Vec::with_capacity(group.group_size());
    for (completion, &a) in group.completions.iter().zip(adv) {
        let lp = &completion.logprobs;
        let ratio = sequence_ratio(lp, true);
        let (term, dfactor) = clipped_term(ratio, a, lo, hi);
        value += term / g;
        let per_token = dfactor * ratio / (g * lp.len() as f64);
        grad.push(vec![per_token; lp.len()]);
    }
    if cfg.kl_all_algorithms && cfg.kl_coef > 0.0 {
        add_kl_penalty(group, cfg.kl_coef, &mut value, &mut grad);
    }
    Ok(ObjectiveResult { value, grad })
}

/// Dispatch on `cfg.algorithm`.
pub fn evaluate_objective(
    group: &GroupRollout,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveResult, ObjectiveError> {
    match cfg.algorithm {
        Algorithm::Grpo => grpo_objective(group, cfg),
        Algorithm::Dapo => dapo_objective(group, cfg),
        Algorithm::Gspo => gspo_objective(group, cfg),
    }
}

/// Outcome of dynamic sampling: groups kept for the update and how many were
/// dropped for having (near-)identical rewards.
#[derive(Debug)]
pub struct FilterOutcome {
    pub retained: Vec<GroupRollout>,
    pub dropped: usize,
}

/// Drop groups whose reward population-std is below `std_epsilon`; such
/// groups carry no within-group learning signal.
pub fn dynamic_sample_filter(groups: Vec<GroupRollout>, std_epsilon: f64) -> FilterOutcome {
    let total = groups.len();
    let retained: Vec<GroupRollout> = groups
        .into_iter()
        .filter(|g| g.reward_std() >= std_epsilon)
        .collect();
    let dropped = total - retained.len();
    FilterOutcome { retained, dropped }
}

/// Optional pre-advantage shaping: subtract `penalty_per_token` for every
/// token beyond `budget` from each completion's reward. Off unless configured.
pub fn apply_overlong_penalty(groups: &mut [GroupRollout], budget: usize, penalty_per_token: f64) {
    for group in groups.iter_mut() {
        for completion in &mut group.completions {
            let len = completion.logprobs.len();
            if len > budget {
                completion.reward -= penalty_per_token * (len - budget) as f64;
            }
        }
    }
}
