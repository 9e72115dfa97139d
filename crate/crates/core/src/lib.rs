//! Engine for reward-guided generation of structured medical answers.
//!
//! The crate provides four layers that compose into a desk-scale RL stack:
//!
//! - [`structured`] — parsing and normalization of the
//!   `[modality]<think>…</think><answer>…</answer>` output contract.
//! - [`reward`] — the four binary reward signals (format, LLM accuracy,
//!   embedding similarity, modality recognition), anti-hacking gates, and
//!   their weighted composite.
//! - [`grouprl`] — group-relative advantages and the GRPO/DAPO/GSPO clipped
//!   surrogate objectives with analytic gradients.
//! - [`eval`] — the three-stage generate → judge → score benchmark pipeline.
//!
//! Judges and embedders are reached through gateway traits ([`judge`],
//! [`embed`]) with both OpenAI-compatible HTTP clients and deterministic
//! mocks, so everything here runs reproducibly without any model server.
//! [`toylab`] closes the loop with a tabular softmax policy trained against
//! the composite reward on a synthetic QA task.

pub mod embed;
pub mod eval;
pub mod grouprl;
pub mod judge;
pub mod net;
pub mod reward;
pub mod structured;
pub mod toylab;
mod util;

pub use embed::{cosine_similarity, EmbedError, EmbeddingGateway, EmbeddingVector, MockEmbedder};
pub use grouprl::{
    dynamic_sample_filter, group_advantages, Algorithm, GroupRollout, ObjectiveConfig,
    ObjectiveError, ObjectiveResult, TokenLogProbs,
};
pub use judge::{
    render_prompt, JudgeError, JudgeGateway, JudgeRequest, JudgeTemplate, JudgeVerdict, MockJudge,
    VerdictKind,
};
pub use reward::{
    composite_reward, score_group, GatingPolicy, RewardBreakdown, RewardContext, RewardError,
    RewardWeights,
};
pub use structured::{
    normalize_answer, parse_completion, strip_reasoning, ModalityTag, ReferenceAnswer,
    StructuredCompletion,
};
