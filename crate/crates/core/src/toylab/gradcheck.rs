//! Central-difference gradient oracle.
//!
//! Probes any scalar functional of a [`GroupRollout`] coordinate-by-coordinate
//! in the current-policy log-probs. Independent of the analytic gradient
//! paths, which is the point: tests compare the two.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::grouprl::{CompletionRollout, GroupRollout, ObjectiveError, TokenLogProbs};

/// Central finite differences with the given step on every `lp_cur`
/// coordinate. The rollout itself is never mutated.
pub fn finite_difference_gradient<F>(
    mut objective: F,
    rollout: &GroupRollout,
    step: f64,
) -> Result<Vec<Vec<f64>>, ObjectiveError>
where
    F: FnMut(&GroupRollout) -> Result<f64, ObjectiveError>,
{
    if step.is_nan() || step <= 0.0 {
        return Err(ObjectiveError::InvalidConfig(
            "finite-difference step must be > 0".into(),
        ));
    }
    let mut work = rollout.clone();
    let mut grad: Vec<Vec<f64>> = rollout
        .completions
        .iter()
        .map(|c| vec![0.0; c.logprobs.len()])
        .collect();
    for (i, row) in grad.iter_mut().enumerate() {
        for (t, slot) in row.iter_mut().enumerate() {
            let original = work.completions[i].logprobs.current[t];
            work.completions[i].logprobs.current[t] = original + step;
            let plus = objective(&work)?;
            work.completions[i].logprobs.current[t] = original - step;
            let minus = objective(&work)?;
            work.completions[i].logprobs.current[t] = original;
            *slot = (plus - minus) / (2.0 * step);
        }
    }
    Ok(grad)
}

/// Hybrid comparison metric: `|a − b| / max(|a|, |b|, 1e-4)`.
///
/// Pure relative error is meaningless for near-zero coordinates — central
/// differences on an objective of magnitude ~1 carry ~1e-10 of cancellation
/// noise, which would swamp any ratio of two tiny numbers. The 1e-4 floor
/// turns the check absolute below that scale, so a 1e-5 tolerance still
/// demands agreement to 1e-9 there.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Largest per-coordinate [`relative_error`] across two gradient tensors.
pub fn max_relative_error(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(&a, &b)| relative_error(a, b)))
        .fold(0.0, f64::max)
}

/// Random rollout instance for gradient checks: group size in
/// `2..=max_group`, per-completion lengths in `1..=max_tokens`, log-probs in
/// a range where ratios land on both sides of the usual clip bounds, rewards
/// with enough spread that standardized advantages are well away from zero.
pub fn random_rollout(rng: &mut ChaCha8Rng, max_group: usize, max_tokens: usize) -> GroupRollout {
    let group_size = rng.random_range(2..=max_group.max(2));
    loop {
        let mut completions = Vec::with_capacity(group_size);
        for _ in 0..group_size {
            let tokens = rng.random_range(1..=max_tokens.max(1));
            let mut old = Vec::with_capacity(tokens);
            let mut current = Vec::with_capacity(tokens);
            let mut reference = Vec::with_capacity(tokens);
            for _ in 0..tokens {
                let base: f64 = rng.random_range(-3.0..-0.4);
                old.push(base);
                current.push((base + rng.random_range(-0.3..0.3)).min(-1e-4));
                reference.push((base + rng.random_range(-0.3..0.3)).min(-1e-4));
            }
            completions.push(CompletionRollout {
                logprobs: TokenLogProbs::new(current, old, reference).expect("valid log-probs"),
                reward: rng.random_range(0.0..1.0),
            });
        }
        let mut rollout = GroupRollout::new("gradcheck", completions);
        // Regenerate near-degenerate reward sets; they only make the
        // finite-difference comparison noise-dominated, not more informative
        // (the gradient is linear in the advantage).
        if rollout.reward_std() > 0.05 {
            let small_advantage = rollout
                .compute_advantages(1e-6)
                .expect("group size >= 2")
                .iter()
                .any(|a| a.abs() < 0.05);
            rollout.advantages = None;
            if !small_advantage {
                return rollout;
            }
        }
    }
}
