//! Run configuration: one TOML file, strict about unknown keys, with
//! environment-variable overrides for endpoint URLs and credentials so
//! secrets never live in the file. The fully resolved config is echoed into
//! every run directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use medrl_core::embed::{EmbeddingEndpointConfig, EmbeddingGateway, HttpEmbedder, MockEmbedder};
use medrl_core::judge::{HttpJudge, JudgeEndpointConfig, JudgeGateway, MockJudge};
use medrl_core::reward::{GatingPolicy, RewardWeights};
use medrl_core::toylab::{RewardSettings, TrainConfig};

pub const ENV_JUDGE_BASE_URL: &str = "MEDRL_JUDGE_BASE_URL";
pub const ENV_JUDGE_API_KEY: &str = "MEDRL_JUDGE_API_KEY";
pub const ENV_EMBED_BASE_URL: &str = "MEDRL_EMBED_BASE_URL";
pub const ENV_EMBED_API_KEY: &str = "MEDRL_EMBED_API_KEY";

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub weights: WeightsConfig,
    pub reward: RewardConfig,
    pub objective: medrl_core::grouprl::ObjectiveConfig,
    pub train: TrainSection,
    pub gateways: GatewaysConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsConfig {
    /// One of medix | v1 | v2 | v3 | llm-only | embedding-only | custom.
    pub preset: String,
    /// Explicit weights, required when preset = "custom".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom: Option<RewardWeights>,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig {
            preset: "medix".to_string(),
            custom: None,
        }
    }
}

impl WeightsConfig {
    pub fn resolve(&self) -> Result<RewardWeights> {
        let weights = match self.preset.as_str() {
            "custom" => self
                .custom
                .context("weights.preset = \"custom\" requires a [weights.custom] table")?,
            name => RewardWeights::preset(name)
                .with_context(|| format!("unknown weights preset `{name}`"))?,
        };
        weights.validate()?;
        Ok(weights)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub tau: f64,
    pub gating: GatingConfig,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            tau: 0.8,
            gating: GatingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatingConfig {
    pub enabled: bool,
    #[serde(flatten)]
    pub policy: GatingPolicy,
}

impl Default for GatingConfig {
    fn default() -> Self {
        GatingConfig {
            enabled: true,
            policy: GatingPolicy::default(),
        }
    }
}

impl GatingConfig {
    pub fn as_option(&self) -> Option<GatingPolicy> {
        self.enabled.then_some(self.policy)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Synthetic task variant: "default" or "constant-reward".
    pub task: String,
    pub steps: usize,
    pub group_size: usize,
    pub learning_rate: f64,
    pub inner_epochs: usize,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlong_budget: Option<usize>,
    pub overlong_penalty: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            task: "default".to_string(),
            steps: d.steps,
            group_size: d.group_size,
            learning_rate: d.learning_rate,
            inner_epochs: d.inner_epochs,
            temperature: d.temperature,
            overlong_budget: d.overlong_budget,
            overlong_penalty: d.overlong_penalty,
        }
    }
}

impl TrainSection {
    pub fn build_task(&self) -> Result<medrl_core::toylab::SyntheticTask> {
        match self.task.as_str() {
            "default" => Ok(medrl_core::toylab::SyntheticTask::default_task()),
            "constant-reward" => Ok(medrl_core::toylab::SyntheticTask::constant_reward_task()),
            other => bail!("unknown task `{other}` (default|constant-reward)"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct GatewaysConfig {
    pub judge: JudgeGatewayConfig,
    pub embedder: EmbedGatewayConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JudgeGatewayConfig {
    /// "mock" or "http".
    pub mode: String,
    /// Scripted response table for the mock.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    pub http: JudgeEndpointConfig,
}

impl Default for JudgeGatewayConfig {
    fn default() -> Self {
        JudgeGatewayConfig {
            mode: "mock".to_string(),
            fixture: None,
            http: JudgeEndpointConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedGatewayConfig {
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    pub http: EmbeddingEndpointConfig,
}

impl Default for EmbedGatewayConfig {
    fn default() -> Self {
        EmbedGatewayConfig {
            mode: "mock".to_string(),
            fixture: None,
            http: EmbeddingEndpointConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        config.apply_env_overrides();
        Ok(config)
    }

    /// Endpoint URLs and API keys come from the environment when set.
    fn apply_env_overrides(&mut self) {
        if let Ok(url) = std::env::var(ENV_JUDGE_BASE_URL) {
            self.gateways.judge.http.base_url = url;
        }
        if let Ok(key) = std::env::var(ENV_JUDGE_API_KEY) {
            self.gateways.judge.http.api_key = Some(key);
        }
        if let Ok(url) = std::env::var(ENV_EMBED_BASE_URL) {
            self.gateways.embedder.http.base_url = url;
        }
        if let Ok(key) = std::env::var(ENV_EMBED_API_KEY) {
            self.gateways.embedder.http.api_key = Some(key);
        }
    }

    pub fn build_judge(&self) -> Result<Box<dyn JudgeGateway>> {
        match self.gateways.judge.mode.as_str() {
            "mock" => match &self.gateways.judge.fixture {
                Some(path) => Ok(Box::new(MockJudge::from_fixture_file(path)?)),
                None => Ok(Box::new(MockJudge::new())),
            },
            "http" => Ok(Box::new(HttpJudge::new(self.gateways.judge.http.clone())?)),
            other => bail!("unknown judge gateway mode `{other}` (mock|http)"),
        }
    }

    pub fn build_embedder(&self) -> Result<Box<dyn EmbeddingGateway>> {
        match self.gateways.embedder.mode.as_str() {
            "mock" => match &self.gateways.embedder.fixture {
                Some(path) => Ok(Box::new(MockEmbedder::from_fixture_file(path)?)),
                None => Ok(Box::new(MockEmbedder::default())),
            },
            "http" => Ok(Box::new(HttpEmbedder::new(
                self.gateways.embedder.http.clone(),
            )?)),
            other => bail!("unknown embedder gateway mode `{other}` (mock|http)"),
        }
    }

    pub fn reward_settings(&self) -> Result<RewardSettings> {
        Ok(RewardSettings {
            weights: self.weights.resolve()?,
            tau: self.reward.tau,
            gate: self.reward.gating.as_option(),
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            objective: self.objective,
            steps: self.train.steps,
            group_size: self.train.group_size,
            learning_rate: self.train.learning_rate,
            seed: self.seed,
            inner_epochs: self.train.inner_epochs,
            temperature: self.train.temperature,
            overlong_budget: self.train.overlong_budget,
            overlong_penalty: self.train.overlong_penalty,
        }
    }

    /// Serialize the fully resolved configuration into the run directory.
    pub fn echo_into(&self, out_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        let path = out_dir.join("effective_config.toml");
        let body = toml::to_string_pretty(self).context("serializing effective config")?;
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
