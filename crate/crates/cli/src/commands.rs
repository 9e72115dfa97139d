//! Subcommand implementations.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use medrl_core::eval::{EvalPipeline, EvalSuite};
use medrl_core::grouprl::{Algorithm, ObjectiveConfig};
use medrl_core::reward::{composite_reward, RewardBreakdown, RewardContext};
use medrl_core::structured::{parse_completion, ReferenceAnswer};
use medrl_core::toylab::gradcheck::{
    finite_difference_gradient, max_relative_error, random_rollout,
};
use medrl_core::toylab::{self, TabularPolicy};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompletionRow {
    id: String,
    text: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceRow {
    id: String,
    reference: String,
}

#[derive(Debug, Serialize)]
struct BreakdownRow<'a> {
    id: &'a str,
    #[serde(flatten)]
    breakdown: &'a RewardBreakdown,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: T = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: malformed row", path.display(), idx + 1))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn score(
    config: &RunConfig,
    completions_path: &Path,
    references_path: &Path,
    out_dir: &Path,
) -> Result<()> {
    let completions: Vec<CompletionRow> = read_jsonl(completions_path)?;
    if completions.is_empty() {
        bail!("no completions in {}", completions_path.display());
    }
    let reference_rows: Vec<ReferenceRow> = read_jsonl(references_path)?;
    let mut references = HashMap::new();
    for (idx, row) in reference_rows.into_iter().enumerate() {
        let parsed = ReferenceAnswer::parse(&row.reference)
            .with_context(|| format!("{}:{}: bad reference", references_path.display(), idx + 1))?;
        references.insert(row.id, parsed);
    }

    let judge = config.build_judge()?;
    let embedder = config.build_embedder()?;
    let settings = config.reward_settings()?;
    config.echo_into(out_dir)?;

    let ctx = RewardContext {
        weights: settings.weights,
        tau: settings.tau,
        gate: settings.gate.as_ref(),
        judge: judge.as_ref(),
        embedder: embedder.as_ref(),
    };

    let mut rows = String::new();
    let mut sums = [0.0f64; 5];
    for row in &completions {
        let reference = references
            .get(&row.id)
            .with_context(|| format!("completion `{}` has no reference", row.id))?;
        let completion = parse_completion(&row.text);
        let breakdown = composite_reward(&completion, reference, &ctx)
            .with_context(|| format!("scoring completion `{}`", row.id))?;
        sums[0] += breakdown.composite;
        sums[1] += breakdown.r_fmt;
        sums[2] += breakdown.r_llm;
        sums[3] += breakdown.r_emb;
        sums[4] += breakdown.r_mod;
        rows.push_str(&serde_json::to_string(&BreakdownRow {
            id: &row.id,
            breakdown: &breakdown,
        })?);
        rows.push('\n');
    }
    std::fs::write(out_dir.join("breakdowns.jsonl"), rows)?;

    let n = completions.len() as f64;
    let w = settings.weights;
    let summary = serde_json::json!({
        "count": completions.len(),
        "weights": {"preset": config.weights.preset, "w_fmt": w.w_fmt, "w_llm": w.w_llm, "w_emb": w.w_emb, "w_mod": w.w_mod},
        "tau": settings.tau,
        "mean_composite": sums[0] / n,
        "mean_fmt": sums[1] / n,
        "mean_llm": sums[2] / n,
        "mean_emb": sums[3] / n,
        "mean_mod": sums[4] / n,
    });
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;

    println!(
        "weights {} (w_fmt={} w_llm={} w_emb={} w_mod={}), tau {}",
        config.weights.preset, w.w_fmt, w.w_llm, w.w_emb, w.w_mod, settings.tau
    );
    println!(
        "scored {} completions: mean composite {:.4} (fmt {:.4}, llm {:.4}, emb {:.4}, mod {:.4})",
        completions.len(),
        sums[0] / n,
        sums[1] / n,
        sums[2] / n,
        sums[3] / n,
        sums[4] / n
    );
    println!("artifacts in {}", out_dir.display());
    Ok(())
}

pub fn train_toy(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let task = config.train.build_task()?;
    let judge = config.build_judge()?;
    let embedder = config.build_embedder()?;
    let settings = config.reward_settings()?;
    let train_cfg = config.train_config();
    config.echo_into(out_dir)?;

    let mut policy = TabularPolicy::uniform(&task, train_cfg.temperature);
    let initial_exploit = toylab::exploit_mass(&policy, &task);
    let log = toylab::train(
        &mut policy,
        &task,
        &train_cfg,
        &settings,
        judge.as_ref(),
        embedder.as_ref(),
    )?;
    log.write_jsonl(&out_dir.join("train_log.jsonl"))?;
    policy.save(&out_dir.join("policy.json"))?;

    let steps = log.entries.len();
    let window = steps.min(100);
    let first = log.mean_composite(0..window);
    let last = log.mean_composite(steps - window..steps);
    let dropped_total: usize = log.entries.iter().map(|e| e.dropped_groups).sum();
    println!(
        "{} for {} steps (seed {}): mean composite {:.4} -> {:.4}",
        config.objective.algorithm, steps, train_cfg.seed, first, last
    );
    println!(
        "dropped groups total {}, exploit mass {:.5} -> {:.5}",
        dropped_total,
        initial_exploit,
        toylab::exploit_mass(&policy, &task)
    );
    println!("artifacts in {}", out_dir.display());
    Ok(())
}

pub fn eval(config: &RunConfig, bench: &Path, resume: bool, out_dir: &Path) -> Result<()> {
    let suite = EvalSuite::load(bench)?;
    let judge = config.build_judge()?;
    config.echo_into(out_dir)?;
    let pipeline = EvalPipeline {
        suite,
        judge: judge.as_ref(),
        out_dir: out_dir.to_path_buf(),
        resume,
    };
    let report = pipeline.run()?;
    print!("{}", report.to_markdown());
    println!("artifacts in {}", out_dir.display());
    Ok(())
}

pub fn objective_check(config: &RunConfig, instances: usize, step: f64) -> Result<()> {
    let tolerance = 1e-5;
    let mut failed = false;
    for algorithm in [Algorithm::Grpo, Algorithm::Dapo, Algorithm::Gspo] {
        let cfg = ObjectiveConfig {
            algorithm,
            ..config.objective
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9e37).wrapping_add(7));
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let mut rollout = random_rollout(&mut rng, 8, 8);
            rollout.compute_advantages(cfg.std_epsilon)?;
            let analytic = medrl_core::grouprl::evaluate_objective(&rollout, &cfg)?;
            let numeric = finite_difference_gradient(
                |r| medrl_core::grouprl::evaluate_objective(r, &cfg).map(|res| res.value),
                &rollout,
                step,
            )?;
            worst = worst.max(max_relative_error(&analytic.grad, &numeric));
        }
        let status = if worst < tolerance { "ok" } else { "FAIL" };
        println!(
            "{algorithm}: max relative error {worst:.3e} over {instances} instances ({status})"
        );
        failed |= worst >= tolerance;
    }
    if failed {
        bail!("analytic gradients diverge from finite differences beyond {tolerance:e}");
    }
    Ok(())
}
