//! Flat key-value configuration shared by every subcommand.
//!
//! Precedence: built-in defaults, then the `--config` file, then command-line
//! flags. Keys mirror the field names of the core config structs.

use std::path::Path;

use anyhow::{bail, Context, Result};
use guae_core::{EstimatorConfig, RewardConfig, StdKind, TrainConfig, Variant};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub seed: Option<u64>,
    // reward
    pub lambda: Option<f64>,
    pub tau_click: Option<f64>,
    pub click_threshold: Option<f64>,
    pub rho: Option<f64>,
    pub strict_enumerated: Option<bool>,
    // estimator
    pub variant: Option<Variant>,
    pub epsilon: Option<f64>,
    pub sigma0: Option<f64>,
    pub tau_gate: Option<f64>,
    pub p_low: Option<f64>,
    pub p_high: Option<f64>,
    pub std_kind: Option<StdKind>,
    // training
    pub k: Option<usize>,
    pub beta: Option<f64>,
    pub learning_rate: Option<f64>,
    pub steps: Option<u64>,
    pub temperature: Option<f64>,
    // simulated environment
    pub n_states: Option<usize>,
    pub n_actions: Option<usize>,
    pub init_mass: Option<f64>,
    pub n_groups: Option<usize>,
    pub bernoulli_p: Option<f64>,
    // diagnostics
    pub low_std_threshold: Option<f64>,
}

macro_rules! layer {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    /// Values set in `top` win.
    pub fn layered(mut self, top: &Overrides) -> Self {
        layer!(self, top;
            seed, lambda, tau_click, click_threshold, rho, strict_enumerated,
            variant, epsilon, sigma0, tau_gate, p_low, p_high, std_kind,
            k, beta, learning_rate, steps, temperature,
            n_states, n_actions, init_mass, n_groups, bernoulli_p,
            low_std_threshold,
        );
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimSettings {
    pub n_states: usize,
    pub n_actions: usize,
    /// Initial probability on the favored wrong arm of every state.
    pub init_mass: f64,
    pub n_groups: usize,
    pub bernoulli_p: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            n_states: 1,
            n_actions: 5,
            init_mass: 0.99,
            n_groups: 10_000,
            bernoulli_p: 0.5,
        }
    }
}

/// Every effective parameter of a run. Serialized into manifests and trace
/// headers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub reward: RewardConfig,
    pub train: TrainConfig,
    pub sim: SimSettings,
    pub low_std_threshold: f64,
}

impl Settings {
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut reward = RewardConfig::default();
        let mut est = EstimatorConfig::default();
        let mut train = TrainConfig::default();
        let mut sim = SimSettings::default();

        macro_rules! set {
            ($dst:expr, $f:ident) => {
                if let Some(v) = o.$f {
                    $dst.$f = v;
                }
            };
        }
        set!(reward, lambda);
        set!(reward, tau_click);
        set!(reward, click_threshold);
        set!(reward, rho);
        set!(reward, strict_enumerated);
        set!(est, variant);
        set!(est, epsilon);
        set!(est, sigma0);
        set!(est, tau_gate);
        set!(est, p_low);
        set!(est, p_high);
        set!(est, std_kind);
        set!(train, k);
        set!(train, beta);
        set!(train, learning_rate);
        set!(train, steps);
        set!(train, temperature);
        set!(sim, n_states);
        set!(sim, n_actions);
        set!(sim, init_mass);
        set!(sim, n_groups);
        set!(sim, bernoulli_p);
        train.estimator = est;

        reward.validate().context("invalid reward config")?;
        est.validate().context("invalid estimator config")?;
        train.validate().context("invalid training config")?;
        if sim.n_states == 0 || sim.n_actions < 2 {
            bail!("need n_states >= 1 and n_actions >= 2");
        }
        let low_std_threshold = o.low_std_threshold.unwrap_or(0.01);
        if !(low_std_threshold > 0.0) {
            bail!("low_std_threshold must be positive, got {low_std_threshold}");
        }
        Ok(Settings {
            seed: o.seed.unwrap_or(0),
            reward,
            train,
            sim,
            low_std_threshold,
        })
    }
}
