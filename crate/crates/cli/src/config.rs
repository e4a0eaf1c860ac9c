//! Experiment configuration: strict JSON documents with documented defaults
//! applied only for absent keys.

use cmdp_lab::campaign::CampaignSpec;
use cmdp_lab::cup::CupConfig;
use cmdp_lab::envspec::EnvSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// On-disk document. Every field is optional; unknown keys are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub env: Option<serde_json::Value>,
    pub cup: Option<CupPatch>,
    pub campaign: Option<CampaignPatch>,
    pub seed: Option<u64>,
    pub output_path: Option<String>,
    pub baseline: Option<bool>,
}

/// Trainer overrides. Absent keys fall back to the defaults documented on
/// [`CupConfig`], with `gamma` and `cost_limit` taken from the environment
/// and `seed` from the top-level seed.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CupPatch {
    pub gamma: Option<f64>,
    pub lambda_gae: Option<f64>,
    pub horizon: Option<usize>,
    pub episodes: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub nu_init: Option<f64>,
    pub nu_max: Option<f64>,
    pub nu_lr: Option<f64>,
    pub policy_lr: Option<f64>,
    pub optimization_epochs: Option<usize>,
    pub minibatch: Option<usize>,
    pub iterations: Option<usize>,
    pub cost_limit: Option<f64>,
    pub seed: Option<u64>,
}

/// Campaign overrides; defaults per [`CampaignSpec`], seed from the
/// top-level seed.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignPatch {
    pub n_cmdps: Option<usize>,
    pub pairs_per_cmdp: Option<usize>,
    pub lambdas: Option<Vec<f64>>,
    pub state_range: Option<(usize, usize)>,
    pub action_range: Option<(usize, usize)>,
}

/// Fully resolved configuration: all defaults applied.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub env: Option<EnvSpec>,
    pub cup: CupConfig,
    pub campaign: CampaignSpec,
    pub seed: u64,
    pub output_path: Option<String>,
    pub baseline: bool,
}

pub fn load_raw(path: &Path) -> Result<RawConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ConfigError(format!("invalid config: {e}")))
}

pub fn resolve(raw: &RawConfig) -> Result<ResolvedConfig, ConfigError> {
    let seed = raw.seed.unwrap_or(1);
    let env = match &raw.env {
        None => None,
        Some(value) => Some(
            EnvSpec::from_value(value).map_err(|e| ConfigError(format!("invalid env: {e}")))?,
        ),
    };

    let mut cup = CupConfig {
        seed,
        ..CupConfig::default()
    };
    if let Some(spec) = &env {
        // The environment's discount and budget are the defaults the trainer
        // inherits; explicit cup keys still win below.
        let cmdp = spec
            .build()
            .map_err(|e| ConfigError(format!("invalid env: {e}")))?;
        cup.gamma = cmdp.gamma;
        cup.cost_limit = cmdp.cost_limit;
    }
    if let Some(patch) = &raw.cup {
        if let Some(v) = patch.gamma {
            cup.gamma = v;
        }
        if let Some(v) = patch.lambda_gae {
            cup.lambda_gae = v;
        }
        if let Some(v) = patch.horizon {
            cup.horizon = v;
        }
        if let Some(v) = patch.episodes {
            cup.episodes = v;
        }
        if let Some(v) = patch.alpha {
            cup.alpha = v;
        }
        if let Some(v) = patch.beta {
            cup.beta = v;
        }
        if let Some(v) = patch.nu_init {
            cup.nu_init = v;
        }
        if let Some(v) = patch.nu_max {
            cup.nu_max = v;
        }
        if let Some(v) = patch.nu_lr {
            cup.nu_lr = v;
        }
        if let Some(v) = patch.policy_lr {
            cup.policy_lr = v;
        }
        if let Some(v) = patch.optimization_epochs {
            cup.optimization_epochs = v;
        }
        if let Some(v) = patch.minibatch {
            cup.minibatch = v;
        }
        if let Some(v) = patch.iterations {
            cup.iterations = v;
        }
        if let Some(v) = patch.cost_limit {
            cup.cost_limit = v;
        }
        if let Some(v) = patch.seed {
            cup.seed = v;
        }
    }

    let mut campaign = CampaignSpec {
        seed,
        ..CampaignSpec::default()
    };
    if let Some(patch) = &raw.campaign {
        if let Some(v) = patch.n_cmdps {
            campaign.n_cmdps = v;
        }
        if let Some(v) = patch.pairs_per_cmdp {
            campaign.pairs_per_cmdp = v;
        }
        if let Some(v) = &patch.lambdas {
            campaign.lambdas = v.clone();
        }
        if let Some(v) = patch.state_range {
            campaign.state_range = v;
        }
        if let Some(v) = patch.action_range {
            campaign.action_range = v;
        }
    }

    Ok(ResolvedConfig {
        env,
        cup,
        campaign,
        seed,
        output_path: raw.output_path.clone(),
        baseline: raw.baseline.unwrap_or(false),
    })
}

impl ResolvedConfig {
    /// The resolved document with every default made explicit; feeding it
    /// back through `resolve` reproduces the same configuration.
    pub fn to_value(&self) -> serde_json::Value {
        let cup = &self.cup;
        let campaign = &self.campaign;
        serde_json::json!({
            "env": self.env.as_ref().map(|e| e.to_value()),
            "cup": {
                "gamma": cup.gamma,
                "lambda_gae": cup.lambda_gae,
                "horizon": cup.horizon,
                "episodes": cup.episodes,
                "alpha": cup.alpha,
                "beta": cup.beta,
                "nu_init": cup.nu_init,
                "nu_max": cup.nu_max,
                "nu_lr": cup.nu_lr,
                "policy_lr": cup.policy_lr,
                "optimization_epochs": cup.optimization_epochs,
                "minibatch": cup.minibatch,
                "iterations": cup.iterations,
                "cost_limit": cup.cost_limit,
                "seed": cup.seed,
            },
            "campaign": {
                "n_cmdps": campaign.n_cmdps,
                "pairs_per_cmdp": campaign.pairs_per_cmdp,
                "lambdas": campaign.lambdas,
                "state_range": campaign.state_range,
                "action_range": campaign.action_range,
            },
            "seed": self.seed,
            "output_path": self.output_path,
            "baseline": self.baseline,
        })
    }
}
