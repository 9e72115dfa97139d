//! The four binary reward signals and their weighted composite.
//!
//! Signals:
//! - `format_reward` — 1 iff the completion matches the structured contract.
//! - `modality_reward` — 1 iff the tag before `<think>` equals the reference
//!   modality (case-insensitive).
//! - `llm_accuracy_reward` — strict YES/NO semantic match from a judge, with
//!   short-circuits: empty/one-character answers are 0, exact matches are 1
//!   without a judge call, and answers carrying bracketed placeholder text
//!   (`[insert` / `[your answer`) are 0 before any judge call — an upstream
//!   guard for the known judge exploit, which fools the judge itself.
//! - `embedding_reward` — 1 iff cosine similarity to the reference clears the
//!   threshold tau, guarded by a degeneracy gate (minimum length/word count,
//!   bounded non-alphanumeric ratio, optional punctuation stripping) that
//!   closes the short-token similarity exploit.
//!
//! Accuracy signals score the first `<answer>…</answer>` block found anywhere
//! in the raw text, falling back to the whole text — deliberately independent
//! of format validity, so a malformed completion can still earn accuracy
//! credit while losing the format reward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine_similarity, EmbedError, EmbeddingGateway};
use crate::judge::{JudgeError, JudgeGateway, JudgeRequest, JudgeTemplate};
use crate::structured::{scoring_answer, ReferenceAnswer, StructuredCompletion};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("invalid reward weights: {0}")]
    InvalidWeights(String),
    #[error("invalid gating policy: {0}")]
    InvalidGate(String),
    #[error("tau must lie in (0, 1], got {0}")]
    InvalidTau(f64),
    #[error("completion group must be non-empty")]
    EmptyGroup,
    #[error("judge gateway: {0}")]
    Judge(#[from] JudgeError),
    #[error("embedding gateway: {0}")]
    Embedding(#[from] EmbedError),
    #[error("scoring completion {index} failed after {} successes: {source}", partial.len())]
    GroupMember {
        index: usize,
        source: Box<RewardError>,
        partial: Vec<RewardBreakdown>,
    },
}

/// Composite weights over the four signals. Must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub w_fmt: f64,
    pub w_llm: f64,
    pub w_emb: f64,
    pub w_mod: f64,
}

impl RewardWeights {
    /// Final composite: format 0.10, modality 0.045, judge 0.5175,
    /// embedding 0.3375.
    pub const fn medix() -> Self {
        RewardWeights {
            w_fmt: 0.10,
            w_llm: 0.5175,
            w_emb: 0.3375,
            w_mod: 0.045,
        }
    }

    /// Equal split of the non-format mass between judge and embedding.
    pub const fn v1() -> Self {
        RewardWeights {
            w_fmt: 0.10,
            w_llm: 0.45,
            w_emb: 0.45,
            w_mod: 0.0,
        }
    }

    /// Judge-favored split (0.6/0.4 of the non-format mass).
    pub const fn v2() -> Self {
        RewardWeights {
            w_fmt: 0.10,
            w_llm: 0.54,
            w_emb: 0.36,
            w_mod: 0.0,
        }
    }

    /// Embedding-favored split (0.4/0.6 of the non-format mass).
    pub const fn v3() -> Self {
        RewardWeights {
            w_fmt: 0.10,
            w_llm: 0.36,
            w_emb: 0.54,
            w_mod: 0.0,
        }
    }

    /// Single-signal ablation: all non-format mass on the judge.
    pub const fn llm_only() -> Self {
        RewardWeights {
            w_fmt: 0.10,
            w_llm: 0.90,
            w_emb: 0.0,
            w_mod: 0.0,
        }
    }

    /// Single-signal ablation: all non-format mass on the embedding signal.
    pub const fn embedding_only() -> Self {
        RewardWeights {
            w_fmt: 0.10,
            w_llm: 0.0,
            w_emb: 0.90,
            w_mod: 0.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "medix" => Some(Self::medix()),
            "v1" => Some(Self::v1()),
            "v2" => Some(Self::v2()),
            "v3" => Some(Self::v3()),
            "llm-only" => Some(Self::llm_only()),
            "embedding-only" => Some(Self::embedding_only()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        let all = [self.w_fmt, self.w_llm, self.w_emb, self.w_mod];
        if all.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(RewardError::InvalidWeights(format!(
                "each weight must lie in [0,1]: {all:?}"
            )));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(RewardError::InvalidWeights(format!(
                "weights must sum to 1 within {WEIGHT_SUM_TOLERANCE:e}, got {sum}"
            )));
        }
        Ok(())
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self::medix()
    }
}

/// Degeneracy gate applied before the embedding signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatingPolicy {
    pub min_chars: usize,
    pub min_words: usize,
    pub max_nonalnum_ratio: f64,
    pub strip_punct_before_embed: bool,
}

impl Default for GatingPolicy {
    fn default() -> Self {
        GatingPolicy {
            min_chars: 3,
            min_words: 1,
            max_nonalnum_ratio: 0.5,
            strip_punct_before_embed: true,
        }
    }
}

impl GatingPolicy {
    pub fn validate(&self) -> Result<(), RewardError> {
        if self.min_chars < 1 {
            return Err(RewardError::InvalidGate("min_chars must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_nonalnum_ratio) {
            return Err(RewardError::InvalidGate(
                "max_nonalnum_ratio must lie in [0,1]".into(),
            ));
        }
        Ok(())
    }

    /// True when the answer is too degenerate to be worth embedding.
    fn rejects(&self, answer: &str) -> bool {
        let chars = answer.chars().count();
        if chars < self.min_chars {
            return true;
        }
        if answer.split_whitespace().count() < self.min_words {
            return true;
        }
        let nonalnum = answer.chars().filter(|c| !c.is_alphanumeric()).count();
        nonalnum as f64 / chars as f64 > self.max_nonalnum_ratio
    }
}

/// Per-completion signal values, gate flag, and weighted composite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_fmt: f64,
    pub r_llm: f64,
    pub r_emb: f64,
    pub r_mod: f64,
    pub gated_emb: bool,
    pub composite: f64,
}

/// Everything composite scoring needs besides the completion itself.
pub struct RewardContext<'a> {
    pub weights: RewardWeights,
    pub tau: f64,
    /// `None` disables the gate entirely (the vulnerable configuration).
    pub gate: Option<&'a GatingPolicy>,
    pub judge: &'a dyn JudgeGateway,
    pub embedder: &'a dyn EmbeddingGateway,
}

/// 1 iff the completion parsed as format-valid.
pub fn format_reward(completion: &StructuredCompletion) -> f64 {
    if completion.format_valid {
        1.0
    } else {
        0.0
    }
}

/// 1 iff the tag preceding `<think>` canonicalizes to the reference modality.
pub fn modality_reward(completion: &StructuredCompletion, reference: &ReferenceAnswer) -> f64 {
    if completion.modality == Some(reference.modality) {
        1.0
    } else {
        0.0
    }
}

fn has_placeholder(answer: &str) -> bool {
    let lower = answer.to_lowercase();
    lower.contains("[insert") || lower.contains("[your answer")
}

/// Strict YES/NO semantic accuracy via the judge, with the short-circuits
/// described at module level.
pub fn llm_accuracy_reward(
    completion: &StructuredCompletion,
    reference: &ReferenceAnswer,
    judge: &dyn JudgeGateway,
) -> Result<f64, RewardError> {
    let answer = scoring_answer(&completion.raw);
    if answer.is_empty() || answer.chars().count() == 1 {
        return Ok(0.0);
    }
    if answer == reference.answer {
        return Ok(1.0);
    }
    if has_placeholder(&answer) {
        return Ok(0.0);
    }
    let verdict = judge.query(&JudgeRequest {
        template: JudgeTemplate::RlYesNo,
        question: String::new(),
        reference: reference.answer.clone(),
        candidate: answer,
    })?;
    Ok(f64::from(verdict.score.min(1)))
}

fn strip_punctuation(text: &str) -> String {
    text.chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .trim()
        .to_string()
}

/// Thresholded cosine similarity with the degeneracy gate applied first.
/// Returns `(reward, gated)`; a gated answer earns 0 without any embedding
/// call. Exact matches (after optional punctuation stripping) earn 1 without
/// any embedding call either.
pub fn embedding_reward(
    completion: &StructuredCompletion,
    reference: &ReferenceAnswer,
    embedder: &dyn EmbeddingGateway,
    tau: f64,
    gate: Option<&GatingPolicy>,
) -> Result<(f64, bool), RewardError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(RewardError::InvalidTau(tau));
    }
    let answer = scoring_answer(&completion.raw);
    if let Some(policy) = gate {
        if policy.rejects(&answer) {
            return Ok((0.0, true));
        }
    }
    let strip = gate.is_some_and(|g| g.strip_punct_before_embed);
    let (candidate, target) = if strip {
        (
            strip_punctuation(&answer),
            strip_punctuation(&reference.answer),
        )
    } else {
        (answer, reference.answer.clone())
    };
    if candidate == target {
        return Ok((1.0, false));
    }
    let vectors = embedder.embed_texts(&[candidate.as_str(), target.as_str()])?;
    let cos = cosine_similarity(&vectors[0], &vectors[1])?;
    Ok((if cos >= tau { 1.0 } else { 0.0 }, false))
}

/// Score all four signals and combine them. Judge and embedding calls are
/// skipped when their weight is zero; skipped signals report 0.
pub fn composite_reward(
    completion: &StructuredCompletion,
    reference: &ReferenceAnswer,
    ctx: &RewardContext<'_>,
) -> Result<RewardBreakdown, RewardError> {
    ctx.weights.validate()?;
    if let Some(gate) = ctx.gate {
        gate.validate()?;
    }
    let r_fmt = format_reward(completion);
    let r_mod = modality_reward(completion, reference);
    let r_llm = if ctx.weights.w_llm == 0.0 {
        0.0
    } else {
        llm_accuracy_reward(completion, reference, ctx.judge)?
    };
    let (r_emb, gated_emb) = if ctx.weights.w_emb == 0.0 {
        (0.0, false)
    } else {
        embedding_reward(completion, reference, ctx.embedder, ctx.tau, ctx.gate)?
    };
    let w = &ctx.weights;
    let composite = w.w_fmt * r_fmt + w.w_llm * r_llm + w.w_emb * r_emb + w.w_mod * r_mod;
    Ok(RewardBreakdown {
        r_fmt,
        r_llm,
        r_emb,
        r_mod,
        gated_emb,
        composite,
    })
}

/// Score a whole group, order-preserving. Any member failure aborts the group
/// with the breakdowns completed so far attached to the error.
pub fn score_group(
    completions: &[StructuredCompletion],
    reference: &ReferenceAnswer,
    ctx: &RewardContext<'_>,
) -> Result<Vec<RewardBreakdown>, RewardError> {
    if completions.is_empty() {
        return Err(RewardError::EmptyGroup);
    }
    let mut results = Vec::with_capacity(completions.len());
    for (index, completion) in completions.iter().enumerate() {
        match composite_reward(completion, reference, ctx) {
            Ok(breakdown) => results.push(breakdown),
            Err(source) => {
                return Err(RewardError::GroupMember {
                    index,
                    source: Box::new(source),
                    partial: results,
                })
            }
        }
    }
    Ok(results)
}
