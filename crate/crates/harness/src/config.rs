//! Experiment configuration: a TOML file with `[env]`, `[agent]`, `[feedback]`
//! and `[run]` sections, plus the presets compiled into the binary.

use std::path::{Path, PathBuf};

use ecoach_core::agents::{AgentConfig, AgentKind, AgentOverrides, TamerFeatures, UpdateMode};
use ecoach_core::feedback::{AdvantageRefresh, FeedbackKind};
use ecoach_core::mdp::{build_five_state_chain, build_gridworld, random_mdp, GridworldSpec, RandomMdpSpec, TabularMdp};
use ecoach_core::rng::seeded;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {origin}: {source}")]
    Parse {
        origin: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("`{0}` is neither a config file nor a preset name")]
    UnknownConfig(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Environment section, selected by its `kind` key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvSpec {
    /// Remaining keys are [`GridworldSpec`] fields; all default to the 10x10
    /// lava layout.
    Gridworld(GridworldSpec),
    Chain {
        #[serde(default = "default_chain_gamma")]
        gamma: f64,
    },
    RandomMdp {
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        /// Seeds the MDP draw, not the runs.
        #[serde(default)]
        seed: u64,
    },
}

fn default_chain_gamma() -> f64 {
    0.5
}

impl EnvSpec {
    pub fn build(&self) -> Result<TabularMdp, ConfigError> {
        match self {
            Self::Gridworld(spec) => build_gridworld(spec).map_err(|e| ConfigError::Invalid(e.to_string())),
            Self::Chain { gamma } => Ok(build_five_state_chain(*gamma)),
            Self::RandomMdp {
                n_states,
                n_actions,
                gamma,
                seed,
            } => Ok(random_mdp(
                RandomMdpSpec {
                    n_states: *n_states,
                    n_actions: *n_actions,
                    gamma: *gamma,
                },
                &mut seeded(*seed),
            )),
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        let gamma = match self {
            Self::Gridworld(spec) => {
                spec.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                spec.gamma
            }
            Self::Chain { gamma } => *gamma,
            Self::RandomMdp {
                n_states,
                n_actions,
                gamma,
                ..
            } => {
                if *n_states == 0 || *n_actions == 0 {
                    return Err(ConfigError::Invalid("random MDP needs at least one state and action".into()));
                }
                *gamma
            }
        };
        if !(0.0..1.0).contains(&gamma) {
            return Err(ConfigError::Invalid(format!("gamma {gamma} outside [0, 1)")));
        }
        Ok(())
    }
}

/// Agent section. Unset keys take the per-kind defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_mode: Option<UpdateMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tamer_features: Option<TamerFeatures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tamer_flush: Option<bool>,
}

impl AgentSection {
    pub fn new(kind: AgentKind) -> Self {
        Self {
            kind,
            alpha: None,
            lambda: None,
            epsilon: None,
            update_mode: None,
            tamer_features: None,
            tamer_flush: None,
        }
    }

    pub fn overrides(&self) -> AgentOverrides {
        AgentOverrides {
            alpha: self.alpha,
            lambda: self.lambda,
            epsilon: self.epsilon,
            update_mode: self.update_mode,
            tamer_features: self.tamer_features,
            tamer_flush: self.tamer_flush,
        }
    }

    /// The full agent config for an environment with discount `gamma`.
    pub fn resolve(&self, gamma: f64) -> AgentConfig {
        self.overrides().apply(AgentConfig::for_kind(self.kind, gamma))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    pub scheme: FeedbackKind,
    #[serde(default)]
    pub advantage_refresh: AdvantageRefresh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub episodes: usize,
    pub step_cap: usize,
    pub seeds: usize,
    pub master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            episodes: 150,
            step_cap: 1000,
            seeds: 10,
            master_seed: 0,
            output: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub agent: AgentSection,
    pub feedback: FeedbackSection,
    #[serde(default)]
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_owned(),
            source: Box::new(e),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Reads `name` as a file if one exists at that path, else as a preset.
    pub fn load(name: &str) -> Result<Self, ConfigError> {
        let path = Path::new(name);
        if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.to_owned(),
                source,
            })?;
            return Self::from_toml(&text, name);
        }
        match preset(name) {
            Some(text) => Self::from_toml(text, name),
            None => Err(ConfigError::UnknownConfig(name.to_owned())),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.check()?;
        if self.run.episodes == 0 {
            return Err(ConfigError::Invalid("episodes must be at least 1".into()));
        }
        if self.run.step_cap == 0 {
            return Err(ConfigError::Invalid("step_cap must be at least 1".into()));
        }
        if self.run.seeds == 0 {
            return Err(ConfigError::Invalid("seeds must be at least 1".into()));
        }
        if self.feedback.scheme == FeedbackKind::Human {
            return Err(ConfigError::Invalid("human feedback is only available through `serve`".into()));
        }
        let gamma = match &self.env {
            EnvSpec::Gridworld(spec) => spec.gamma,
            EnvSpec::Chain { gamma } | EnvSpec::RandomMdp { gamma, .. } => *gamma,
        };
        self.agent
            .resolve(gamma)
            .check(self.agent.kind)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

const PRESETS: &[(&str, &str)] = &[
    ("fig1_ecoach_reward", include_str!("../presets/fig1_ecoach_reward.toml")),
    ("fig1_ecoach_policy", include_str!("../presets/fig1_ecoach_policy.toml")),
    ("fig1_ecoach_advantage", include_str!("../presets/fig1_ecoach_advantage.toml")),
    ("fig1_qlearning_reward", include_str!("../presets/fig1_qlearning_reward.toml")),
    ("fig1_qlearning_policy", include_str!("../presets/fig1_qlearning_policy.toml")),
    ("fig1_qlearning_advantage", include_str!("../presets/fig1_qlearning_advantage.toml")),
    ("fig1_tamer_reward", include_str!("../presets/fig1_tamer_reward.toml")),
    ("fig1_tamer_policy", include_str!("../presets/fig1_tamer_policy.toml")),
    ("fig1_tamer_advantage", include_str!("../presets/fig1_tamer_advantage.toml")),
    ("fig1_random", include_str!("../presets/fig1_random.toml")),
    ("chain_ecoach", include_str!("../presets/chain_ecoach.toml")),
    ("chain_coach", include_str!("../presets/chain_coach.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
