//! Learners driven by a per-step scalar feedback signal.
//!
//! Every agent follows the same protocol per episode: [`Agent::begin_episode`],
//! then for `t = 0, 1, ...` an [`Agent::act`] followed by exactly one
//! [`Agent::observe`] carrying the trainer's feedback for that step, and
//! finally [`Agent::end_episode`].

mod coach;
mod ecoach;
mod qlearning;
mod random;
mod reinforce;
mod tamer;

pub use coach::CoachAgent;
pub use ecoach::EcoachAgent;
pub use qlearning::QLearningAgent;
pub use random::{random_act, RandomAgent};
pub use reinforce::{reinforce_delta, ReinforceAgent, TrajectoryStep};
pub use tamer::{tamer_update_rew_model, TamerAgent, TamerFeatures};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{ActionId, StateId, TabularMdp};
use crate::policy::StochasticPolicy;
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("feedback for step {got} but the agent is at step {expected}")]
    StepMismatch { expected: usize, got: usize },
    #[error("feature vector has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("TAMER needs deterministic transitions; ({state}, {action}) is stochastic")]
    StochasticModel { state: StateId, action: ActionId },
    #[error("feedback {0} is not finite")]
    NonFiniteFeedback(f64),
    #[error("invalid agent config: {0}")]
    Config(String),
}

/// Monotone counter bumped whenever the agent's behaviour policy may have
/// changed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyVersion(pub u64);

impl PolicyVersion {
    pub fn bump(&mut self) {
        self.0 += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    #[serde(rename = "e-coach")]
    Ecoach,
    Coach,
    Reinforce,
    Tamer,
    #[serde(rename = "q-learning")]
    QLearning,
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] = [
        Self::Ecoach,
        Self::Coach,
        Self::Reinforce,
        Self::Tamer,
        Self::QLearning,
        Self::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ecoach => "e-coach",
            Self::Coach => "coach",
            Self::Reinforce => "reinforce",
            Self::Tamer => "tamer",
            Self::QLearning => "q-learning",
            Self::Random => "random",
        }
    }

    pub fn default_alpha(self) -> f64 {
        match self {
            Self::Ecoach | Self::Coach | Self::Reinforce => 0.05,
            Self::Tamer | Self::QLearning => 0.1,
            Self::Random => 0.0,
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| AgentError::Config(format!("unknown agent kind `{s}`")))
    }
}

/// When policy-gradient learners fold their updates into `theta`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    /// Every step, as feedback arrives.
    #[default]
    Online,
    /// Accumulate against the episode-start policy, apply at episode end.
    FrozenThetaPerEpisode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Trace decay, read by COACH only.
    pub lambda: f64,
    /// Exploration rate for Q-learning; TAMER's optional exploration.
    pub epsilon: f64,
    pub update_mode: UpdateMode,
    pub tamer_features: TamerFeatures,
    /// Apply TAMER's still-delayed feedback at episode end instead of
    /// dropping it.
    pub tamer_flush: bool,
}

impl AgentConfig {
    pub fn for_kind(kind: AgentKind, gamma: f64) -> Self {
        Self {
            alpha: kind.default_alpha(),
            gamma,
            lambda: 0.9,
            epsilon: match kind {
                AgentKind::QLearning => 0.1,
                _ => 0.0,
            },
            update_mode: UpdateMode::Online,
            tamer_features: TamerFeatures::State,
            tamer_flush: false,
        }
    }

    pub fn check(&self, kind: AgentKind) -> Result<(), AgentError> {
        if kind != AgentKind::Random && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(AgentError::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(AgentError::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(AgentError::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(AgentError::Config(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        Ok(())
    }
}

/// Optional replacements for the [`AgentConfig::for_kind`] defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub update_mode: Option<UpdateMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tamer_features: Option<TamerFeatures>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tamer_flush: Option<bool>,
}

impl AgentOverrides {
    pub fn apply(&self, mut cfg: AgentConfig) -> AgentConfig {
        cfg.alpha = self.alpha.unwrap_or(cfg.alpha);
        cfg.lambda = self.lambda.unwrap_or(cfg.lambda);
        cfg.epsilon = self.epsilon.unwrap_or(cfg.epsilon);
        cfg.update_mode = self.update_mode.unwrap_or(cfg.update_mode);
        cfg.tamer_features = self.tamer_features.unwrap_or(cfg.tamer_features);
        cfg.tamer_flush = self.tamer_flush.unwrap_or(cfg.tamer_flush);
        cfg
    }
}

/// One step of trainer feedback: action `a` in `s` led to `next_state` and the
/// trainer answered `f`. `t` is the step index within the episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub s: StateId,
    pub a: ActionId,
    pub next_state: StateId,
    pub f: f64,
    pub t: usize,
}

/// Serialisable snapshot of an agent's learned tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub kind: AgentKind,
    pub n_states: usize,
    pub n_actions: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub theta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub q: Option<Vec<f64>>,
}

pub trait Agent: Send {
    fn kind(&self) -> AgentKind;

    /// Resets per-episode state (traces, step counter).
    fn begin_episode(&mut self);

    fn act(&mut self, s: StateId, rng: &mut SimRng) -> ActionId;

    /// Consumes the feedback for the step most recently acted on.
    fn observe(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError>;

    /// Accounts for a step the trainer left unanswered without learning from
    /// it: the step counter advances, `ev.f` is ignored, and traces and
    /// models stay as they were.
    fn skip(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError>;

    fn end_episode(&mut self);

    /// Index of the next step within the current episode.
    fn step_index(&self) -> usize;

    /// Current behaviour policy as an explicit table.
    fn policy(&self) -> StochasticPolicy;

    fn action_probs(&self, s: StateId) -> Vec<f64> {
        self.policy().row(s).to_vec()
    }

    fn policy_version(&self) -> PolicyVersion;

    fn checkpoint(&self) -> AgentCheckpoint;
}

/// Step check for [`Agent::skip`], where the feedback value is irrelevant.
pub(crate) fn check_skip(expected: usize, ev: &FeedbackEvent) -> Result<(), AgentError> {
    check_step(expected, &FeedbackEvent { f: 0.0, ..*ev })
}

pub(crate) fn check_step(expected: usize, ev: &FeedbackEvent) -> Result<(), AgentError> {
    if ev.t != expected {
        return Err(AgentError::StepMismatch { expected, got: ev.t });
    }
    if !ev.f.is_finite() {
        return Err(AgentError::NonFiniteFeedback(ev.f));
    }
    Ok(())
}

pub fn build_agent(kind: AgentKind, mdp: &TabularMdp, config: &AgentConfig) -> Result<Box<dyn Agent>, AgentError> {
    config.check(kind)?;
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    Ok(match kind {
        AgentKind::Ecoach => Box::new(EcoachAgent::new(n, na, config.clone())),
        AgentKind::Coach => Box::new(CoachAgent::new(n, na, config.clone())),
        AgentKind::Reinforce => Box::new(ReinforceAgent::new(n, na, config.clone())),
        AgentKind::Tamer => Box::new(TamerAgent::new(mdp, config.clone())?),
        AgentKind::QLearning => Box::new(QLearningAgent::new(n, na, config.clone())),
        AgentKind::Random => Box::new(RandomAgent::new(n, na)),
    })
}
