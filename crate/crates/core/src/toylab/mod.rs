//! Desk-scale end-to-end loop: a tabular softmax policy over template slots
//! generates structured completions for a synthetic QA task, gets scored by
//! the composite reward, and is updated by plain gradient ascent on a
//! group-relative clipped objective.
//!
//! A completion is assembled from four sampled slots:
//!
//! 1. layout — the output skeleton (well-formed, answer-before-think,
//!    missing answer block, trailing commentary); only the first parses as
//!    format-valid, so the format signal is learnable,
//! 2. modality — one of the sixteen canonical tags,
//! 3. filler — a reward-neutral reasoning sentence,
//! 4. answer — drawn from a closed vocabulary containing every reference
//!    answer, distractors, and the two known exploit strings.
//!
//! Each slot draw is one "token" for [`TokenLogProbs`] purposes: `lp_old` is
//! recorded at sampling time (on-policy), `lp_ref` comes from the frozen
//! initial policy. Every step samples with an RNG derived from
//! `(seed, step)` only, so a zero learning rate reproduces identical draws
//! step after step and the whole run is a pure function of seed and config.

pub mod gradcheck;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingGateway;
use crate::grouprl::{
    apply_overlong_penalty, evaluate_objective, CompletionRollout, GroupRollout, ObjectiveConfig,
    ObjectiveError, TokenLogProbs,
};
use crate::judge::JudgeGateway;
use crate::reward::{score_group, GatingPolicy, RewardContext, RewardError, RewardWeights};
use crate::structured::{parse_completion, ModalityTag, ReferenceAnswer};
use crate::util::splitmix64;

pub const SLOT_LAYOUT: usize = 0;
pub const SLOT_MODALITY: usize = 1;
pub const SLOT_FILLER: usize = 2;
pub const SLOT_ANSWER: usize = 3;
pub const SLOT_COUNT: usize = 4;

const LAYOUTS: [&str; 4] = [
    "well-formed",
    "answer-before-think",
    "missing-answer-block",
    "trailing-commentary",
];

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid synthetic task: {0}")]
    InvalidTask(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("policy snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskPrompt {
    pub id: String,
    pub question: String,
    pub reference: ReferenceAnswer,
}

/// Closed-vocabulary QA task. Every reference answer is reachable through the
/// answer slot; the exploit strings sit in the same vocabulary so reward
/// hacking is a live option for the policy rather than a hypothetical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub prompts: Vec<TaskPrompt>,
    pub layout_vocab: Vec<String>,
    pub modality_vocab: Vec<String>,
    pub filler_vocab: Vec<String>,
    pub answer_vocab: Vec<String>,
    pub exploit_answers: Vec<String>,
}

impl SyntheticTask {
    /// Eight prompts across eight modalities, three distractor answers, both
    /// exploit strings.
    pub fn default_task() -> Self {
        let spec: [(&str, &str, &str); 8] = [
            (
                "q1",
                "Is the heart size in this image smaller or larger than if the image was taken AP?",
                "<X_RAY> smaller",
            ),
            (
                "q2",
                "What does the dark blue color on the perfusion image represent?",
                "<CT_SCAN> low perfusion",
            ),
            (
                "q3",
                "What does the white arrow point to in image B?",
                "<ANGIOGRAPHY> renal artery",
            ),
            (
                "q4",
                "Which area is shown in section G of the image?",
                "<MICROSCOPY> optic tract",
            ),
            (
                "q5",
                "What is the echogenic focus with posterior shadowing?",
                "<ULTRASOUND> gallstones",
            ),
            (
                "q6",
                "What is the most likely diagnosis for the ring-enhancing lesion?",
                "<MRI_SCAN> glioblastoma",
            ),
            (
                "q7",
                "What does the blurred disc margin indicate?",
                "<FUNDUS_PHOTOGRAPHY> papilledema",
            ),
            (
                "q8",
                "What is the irregular pigmented lesion?",
                "<CLINICAL_PHOTOGRAPHY> melanoma",
            ),
        ];
        let prompts: Vec<TaskPrompt> = spec
            .iter()
            .map(|(id, question, reference)| TaskPrompt {
                id: id.to_string(),
                question: question.to_string(),
                reference: ReferenceAnswer::parse(reference).expect("valid reference"),
            })
            .collect();
        let exploit_answers = vec![
            "-".to_string(),
            "[insert your answer here based on the medical reasoning provided above]".to_string(),
        ];
        let mut answer_vocab: Vec<String> =
            prompts.iter().map(|p| p.reference.answer.clone()).collect();
        answer_vocab.extend(
            ["larger", "hepatic cyst", "bowel obstruction"]
                .iter()
                .map(|s| s.to_string()),
        );
        answer_vocab.extend(exploit_answers.iter().cloned());
        SyntheticTask {
            prompts,
            layout_vocab: LAYOUTS.iter().map(|l| l.to_string()).collect(),
            modality_vocab: ModalityTag::ALL.iter().map(|t| t.surface()).collect(),
            filler_vocab: vec![
                "the finding is consistent with the reference anatomy".to_string(),
                "projection geometry explains the appearance".to_string(),
                "the enhancement pattern localizes the lesion".to_string(),
            ],
            answer_vocab,
            exploit_answers,
        }
    }

    /// Degenerate task for exercising dynamic sampling: one option per slot,
    /// so every completion in every group is identical and every group gets
    /// dropped for zero reward variance.
    pub fn constant_reward_task() -> Self {
        let prompts = vec![TaskPrompt {
            id: "const".to_string(),
            question: "Is the heart size smaller or larger on the PA view?".to_string(),
            reference: ReferenceAnswer::parse("<X_RAY> smaller").expect("valid reference"),
        }];
        SyntheticTask {
            prompts,
            layout_vocab: vec!["well-formed".to_string()],
            modality_vocab: vec![ModalityTag::XRay.surface()],
            filler_vocab: vec!["projection geometry explains the appearance".to_string()],
            answer_vocab: vec!["smaller".to_string()],
            exploit_answers: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.prompts.is_empty() {
            return Err(TrainError::InvalidTask("no prompts".into()));
        }
        for p in &self.prompts {
            if !self.answer_vocab.contains(&p.reference.answer) {
                return Err(TrainError::InvalidTask(format!(
                    "reference answer `{}` unreachable through the answer vocabulary",
                    p.reference.answer
                )));
            }
            if !self
                .modality_vocab
                .contains(&p.reference.modality.surface())
            {
                return Err(TrainError::InvalidTask(format!(
                    "reference modality `{}` not in the modality vocabulary",
                    p.reference.modality.surface()
                )));
            }
        }
        if self.filler_vocab.is_empty() {
            return Err(TrainError::InvalidTask("empty filler vocabulary".into()));
        }
        if self.layout_vocab.is_empty() {
            return Err(TrainError::InvalidTask("empty layout vocabulary".into()));
        }
        for layout in &self.layout_vocab {
            if !LAYOUTS.contains(&layout.as_str()) {
                return Err(TrainError::InvalidTask(format!(
                    "unknown layout `{layout}` (known: {LAYOUTS:?})"
                )));
            }
        }
        Ok(())
    }

    pub fn slot_sizes(&self) -> [usize; SLOT_COUNT] {
        [
            self.layout_vocab.len(),
            self.modality_vocab.len(),
            self.filler_vocab.len(),
            self.answer_vocab.len(),
        ]
    }

    fn exploit_indices(&self) -> Vec<usize> {
        self.answer_vocab
            .iter()
            .enumerate()
            .filter(|(_, a)| self.exploit_answers.contains(a))
            .map(|(i, _)| i)
            .collect()
    }

    /// Assemble the raw completion text for a slot assignment.
    pub fn assemble(&self, actions: &[usize; SLOT_COUNT]) -> String {
        let tag = &self.modality_vocab[actions[SLOT_MODALITY]];
        let filler = &self.filler_vocab[actions[SLOT_FILLER]];
        let answer = &self.answer_vocab[actions[SLOT_ANSWER]];
        match self.layout_vocab[actions[SLOT_LAYOUT]].as_str() {
            "well-formed" => format!("{tag}<think>{filler}</think><answer>{answer}</answer>"),
            "answer-before-think" => {
                format!("{tag}<answer>{answer}</answer><think>{filler}</think>")
            }
            "missing-answer-block" => format!("{tag}<think>{filler}</think>{answer}"),
            _ => format!("{tag}<think>{filler}</think><answer>{answer}</answer> I hope this helps"),
        }
    }
}

/// Per-prompt, per-slot logit table with softmax sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularPolicy {
    /// `logits[prompt][slot][option]`
    pub logits: Vec<Vec<Vec<f64>>>,
    pub temperature: f64,
}

impl TabularPolicy {
    pub fn uniform(task: &SyntheticTask, temperature: f64) -> Self {
        assert!(temperature > 0.0, "temperature must be positive");
        let sizes = task.slot_sizes();
        TabularPolicy {
            logits: vec![sizes.iter().map(|&n| vec![0.0; n]).collect(); task.prompts.len()],
            temperature,
        }
    }

    pub fn probs(&self, prompt: usize, slot: usize) -> Vec<f64> {
        softmax_scaled(&self.logits[prompt][slot], self.temperature)
    }

    pub fn log_prob(&self, prompt: usize, slot: usize, option: usize) -> f64 {
        let scaled: Vec<f64> = self.logits[prompt][slot]
            .iter()
            .map(|z| z / self.temperature)
            .collect();
        let lse = log_sum_exp(&scaled);
        scaled[option] - lse
    }

    fn sample(&self, prompt: usize, slot: usize, rng: &mut ChaCha8Rng) -> usize {
        let probs = self.probs(prompt, slot);
        let draw: f64 = rng.random();
        let mut cumulative = 0.0;
        for (idx, p) in probs.iter().enumerate() {
            cumulative += p;
            if draw < cumulative {
                return idx;
            }
        }
        probs.len() - 1
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), TrainError> {
        let json =
            serde_json::to_string_pretty(self).map_err(|e| TrainError::Snapshot(e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| TrainError::Snapshot(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TrainError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| TrainError::Snapshot(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| TrainError::Snapshot(e.to_string()))
    }
}

fn softmax_scaled(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// One sampled completion with the slot choices that produced it.
#[derive(Debug, Clone)]
pub struct ToySample {
    pub actions: [usize; SLOT_COUNT],
    pub raw: String,
    pub logprobs: TokenLogProbs,
}

/// A group of samples for one prompt.
#[derive(Debug, Clone)]
pub struct ToyGroup {
    pub prompt_idx: usize,
    pub samples: Vec<ToySample>,
}

/// Sample `group_size` completions per prompt. `lp_old = lp_cur` at sampling
/// time; `lp_ref` is evaluated under the frozen `reference` policy.
pub fn sample_rollouts(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    task: &SyntheticTask,
    group_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ToyGroup>, TrainError> {
    if group_size < 2 {
        return Err(TrainError::InvalidConfig(
            "group_size must be at least 2".into(),
        ));
    }
    let mut groups = Vec::with_capacity(task.prompts.len());
    for prompt_idx in 0..task.prompts.len() {
        let mut samples = Vec::with_capacity(group_size);
        for _ in 0..group_size {
            let mut actions = [0usize; SLOT_COUNT];
            let mut current = Vec::with_capacity(SLOT_COUNT);
            let mut reference_lp = Vec::with_capacity(SLOT_COUNT);
            for (slot, action_slot) in actions.iter_mut().enumerate() {
                let action = policy.sample(prompt_idx, slot, rng);
                *action_slot = action;
                current.push(policy.log_prob(prompt_idx, slot, action));
                reference_lp.push(reference.log_prob(prompt_idx, slot, action));
            }
            let raw = task.assemble(&actions);
            let logprobs = TokenLogProbs {
                current: current.clone(),
                old: current,
                reference: reference_lp,
            };
            samples.push(ToySample {
                actions,
                raw,
                logprobs,
            });
        }
        groups.push(ToyGroup {
            prompt_idx,
            samples,
        });
    }
    Ok(groups)
}

/// Reward configuration the trainer scores completions with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardSettings {
    pub weights: RewardWeights,
    pub tau: f64,
    /// `None` disables the embedding gate.
    pub gate: Option<GatingPolicy>,
}

impl Default for RewardSettings {
    fn default() -> Self {
        RewardSettings {
            weights: RewardWeights::medix(),
            tau: 0.8,
            gate: Some(GatingPolicy::default()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub objective: ObjectiveConfig,
    pub steps: usize,
    pub group_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Updates per sampled batch. 1 keeps everything on-policy (all ratios
    /// start at 1); higher values let clipping engage.
    pub inner_epochs: usize,
    pub temperature: f64,
    /// Reward shaping: linear penalty per token beyond this length budget.
    pub overlong_budget: Option<usize>,
    pub overlong_penalty: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: ObjectiveConfig::default(),
            steps: 300,
            group_size: 5,
            learning_rate: 2.0,
            seed: 1,
            inner_epochs: 1,
            temperature: 1.0,
            overlong_budget: None,
            overlong_penalty: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: usize,
    pub mean_composite: f64,
    pub mean_fmt: f64,
    pub mean_llm: f64,
    pub mean_emb: f64,
    pub mean_mod: f64,
    pub dropped_groups: usize,
    pub objective_value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<TrainLogEntry>,
}

impl TrainLog {
    pub fn mean_composite(&self, range: std::ops::Range<usize>) -> f64 {
        let slice = &self.entries[range];
        slice.iter().map(|e| e.mean_composite).sum::<f64>() / slice.len() as f64
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("log entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_jsonl())
    }
}

/// Probability mass the policy puts on exploit answers, averaged over prompts.
pub fn exploit_mass(policy: &TabularPolicy, task: &SyntheticTask) -> f64 {
    let indices = task.exploit_indices();
    let mut total = 0.0;
    for prompt in 0..task.prompts.len() {
        let probs = policy.probs(prompt, SLOT_ANSWER);
        total += indices.iter().map(|&i| probs[i]).sum::<f64>();
    }
    total / task.prompts.len() as f64
}

/// Probability mass on one specific answer string, averaged over prompts.
pub fn answer_mass(policy: &TabularPolicy, task: &SyntheticTask, answer: &str) -> f64 {
    let Some(index) = task.answer_vocab.iter().position(|a| a == answer) else {
        return 0.0;
    };
    let mut total = 0.0;
    for prompt in 0..task.prompts.len() {
        total += policy.probs(prompt, SLOT_ANSWER)[index];
    }
    total / task.prompts.len() as f64
}

fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(
        seed ^ (step as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    ))
}

/// Run sample → score → filter → advantage → objective → ascent for
/// `cfg.steps` steps. The policy is updated in place; the returned log is a
/// pure function of `(seed, configs)` given deterministic gateways.
pub fn train(
    policy: &mut TabularPolicy,
    task: &SyntheticTask,
    cfg: &TrainConfig,
    rewards: &RewardSettings,
    judge: &dyn JudgeGateway,
    embedder: &dyn EmbeddingGateway,
) -> Result<TrainLog, TrainError> {
    task.validate()?;
    rewards.weights.validate()?;
    cfg.objective.validate()?;
    if cfg.group_size < 2 {
        return Err(TrainError::InvalidConfig("group_size must be >= 2".into()));
    }
    if cfg.steps == 0 {
        return Err(TrainError::InvalidConfig("steps must be >= 1".into()));
    }
    let inner_epochs = cfg.inner_epochs.max(1);
    let reference_policy = policy.clone();
    let mut log = TrainLog::default();

    for step in 0..cfg.steps {
        let mut rng = step_rng(cfg.seed, step);
        let groups = sample_rollouts(policy, &reference_policy, task, cfg.group_size, &mut rng)?;

        // Score every sampled completion.
        let mut signal_sums = [0.0f64; 5]; // composite, fmt, llm, emb, mod
        let mut sample_count = 0usize;
        let mut rollouts: Vec<GroupRollout> = Vec::with_capacity(groups.len());
        for group in &groups {
            let prompt = &task.prompts[group.prompt_idx];
            let completions: Vec<_> = group
                .samples
                .iter()
                .map(|s| parse_completion(&s.raw))
                .collect();
            let ctx = RewardContext {
                weights: rewards.weights,
                tau: rewards.tau,
                gate: rewards.gate.as_ref(),
                judge,
                embedder,
            };
            let breakdowns = score_group(&completions, &prompt.reference, &ctx)?;
            let completions_rollout: Vec<CompletionRollout> = group
                .samples
                .iter()
                .zip(&breakdowns)
                .map(|(sample, b)| CompletionRollout {
                    logprobs: sample.logprobs.clone(),
                    reward: b.composite,
                })
                .collect();
            for b in &breakdowns {
                signal_sums[0] += b.composite;
                signal_sums[1] += b.r_fmt;
                signal_sums[2] += b.r_llm;
                signal_sums[3] += b.r_emb;
                signal_sums[4] += b.r_mod;
                sample_count += 1;
            }
            rollouts.push(GroupRollout::new(prompt.id.clone(), completions_rollout));
        }

        if let Some(budget) = cfg.overlong_budget {
            apply_overlong_penalty(&mut rollouts, budget, cfg.overlong_penalty);
        }

        // Dynamic sampling: drop zero-signal groups, keeping the pairing with
        // the sampled actions.
        let keep: Vec<bool> = rollouts
            .iter()
            .map(|g| g.reward_std() >= cfg.objective.std_epsilon)
            .collect();
        let dropped = keep.iter().filter(|k| !**k).count();
        let mut retained: Vec<(GroupRollout, &ToyGroup)> = rollouts
            .into_iter()
            .zip(&groups)
            .zip(&keep)
            .filter(|(_, keep)| **keep)
            .map(|((rollout, toy), _)| (rollout, toy))
            .collect();

        let mut objective_value = 0.0;
        let mut grad_norm = 0.0;
        if !retained.is_empty() {
            for (rollout, _) in retained.iter_mut() {
                rollout.compute_advantages(cfg.objective.std_epsilon)?;
            }
            let group_count = retained.len() as f64;
            for epoch in 0..inner_epochs {
                if epoch > 0 {
                    for (rollout, toy) in retained.iter_mut() {
                        for (completion, sample) in rollout.completions.iter_mut().zip(&toy.samples)
                        {
                            for slot in 0..SLOT_COUNT {
                                completion.logprobs.current[slot] =
                                    policy.log_prob(toy.prompt_idx, slot, sample.actions[slot]);
                            }
                        }
                    }
                }
                // Chain rule needs the softmax under the policy lp_cur was
                // computed with, so cache it per (prompt, slot) this epoch.
                let prob_table: Vec<Vec<Vec<f64>>> = (0..task.prompts.len())
                    .map(|p| (0..SLOT_COUNT).map(|s| policy.probs(p, s)).collect())
                    .collect();
                let mut logit_grad: Vec<Vec<Vec<f64>>> = policy
                    .logits
                    .iter()
                    .map(|slots| slots.iter().map(|opts| vec![0.0; opts.len()]).collect())
                    .collect();
                let mut objective_sum = 0.0;
                for (rollout, toy) in retained.iter() {
                    let result = evaluate_objective(rollout, &cfg.objective)?;
                    objective_sum += result.value;
                    for (sample_idx, sample) in toy.samples.iter().enumerate() {
                        for slot in 0..SLOT_COUNT {
                            let g = result.grad[sample_idx][slot] / group_count;
                            if g == 0.0 {
                                continue;
                            }
                            let probs = &prob_table[toy.prompt_idx][slot];
                            let action = sample.actions[slot];
                            let row = &mut logit_grad[toy.prompt_idx][slot];
                            for (option, &p) in probs.iter().enumerate() {
                                let indicator = if option == action { 1.0 } else { 0.0 };
                                row[option] += g * (indicator - p) / cfg.temperature;
                            }
                        }
                    }
                }
                objective_value = objective_sum / group_count;
                grad_norm = logit_grad
                    .iter()
                    .flatten()
                    .flatten()
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                for (prompt, slots) in logit_grad.iter().enumerate() {
                    for (slot, row) in slots.iter().enumerate() {
                        for (option, g) in row.iter().enumerate() {
                            policy.logits[prompt][slot][option] += cfg.learning_rate * g;
                        }
                    }
                }
            }
        }

        let n = sample_count as f64;
        log.entries.push(TrainLogEntry {
            step,
            mean_composite: signal_sums[0] / n,
            mean_fmt: signal_sums[1] / n,
            mean_llm: signal_sums[2] / n,
            mean_emb: signal_sums[3] / n,
            mean_mod: signal_sums[4] / n,
            dropped_groups: dropped,
            objective_value,
            grad_norm,
        });
    }
    Ok(log)
}
