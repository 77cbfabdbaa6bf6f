use serde::{Deserialize, Serialize};

use super::{check_skip, check_step, Agent, AgentCheckpoint, AgentConfig, AgentError, AgentKind, FeedbackEvent, PolicyVersion, UpdateMode};
use crate::gradient::{EligibilityTrace, ParamTable, SoftmaxTabularPolicy};
use crate::mdp::{ActionId, StateId};
use crate::policy::StochasticPolicy;
use crate::rng::SimRng;

/// Softmax policy learner whose trace is the undecayed sum of scores and
/// whose step size carries a `gamma^t` factor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EcoachAgent {
    config: AgentConfig,
    policy: SoftmaxTabularPolicy,
    trace: EligibilityTrace,
    /// Accumulated update in frozen mode.
    pending: ParamTable,
    t: usize,
    version: PolicyVersion,
}

impl EcoachAgent {
    pub fn new(n_states: usize, n_actions: usize, config: AgentConfig) -> Self {
        Self {
            config,
            policy: SoftmaxTabularPolicy::new(n_states, n_actions),
            trace: EligibilityTrace::zeros(n_states, n_actions),
            pending: ParamTable::zeros(n_states, n_actions),
            t: 0,
            version: PolicyVersion::default(),
        }
    }

    pub fn with_policy(policy: SoftmaxTabularPolicy, config: AgentConfig) -> Self {
        let (n, na) = (policy.n_states(), policy.n_actions());
        Self {
            policy,
            ..Self::new(n, na, config)
        }
    }

    pub fn softmax(&self) -> &SoftmaxTabularPolicy {
        &self.policy
    }

    pub fn trace(&self) -> &EligibilityTrace {
        &self.trace
    }

    /// Update accumulated so far this episode in frozen mode.
    pub fn pending_update(&self) -> &ParamTable {
        &self.pending
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// `a ~ pi_theta(s, .)`.
    pub fn ecoach_act(&self, s: StateId, rng: &mut SimRng) -> ActionId {
        self.policy.sample_action(s, rng)
    }

    /// `e += score(s, a)`, then `theta += alpha * gamma^t * f * e`.
    pub fn ecoach_feedback(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError> {
        check_step(self.t, ev)?;
        self.trace.add_score(&self.policy.score(ev.s, ev.a));
        let scale = self.config.alpha * self.config.gamma.powi(self.t as i32) * ev.f;
        if scale != 0.0 {
            match self.config.update_mode {
                UpdateMode::Online => {
                    if self.policy.apply(self.trace.table(), scale) {
                        self.version.bump();
                    }
                }
                UpdateMode::FrozenThetaPerEpisode => self.pending.add_scaled(self.trace.table(), scale),
            }
        }
        self.t += 1;
        Ok(())
    }

    fn reset_episode(&mut self) {
        self.trace.reset();
        self.pending.clear();
        self.t = 0;
    }
}

impl Agent for EcoachAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Ecoach
    }

    fn begin_episode(&mut self) {
        self.reset_episode();
    }

    fn act(&mut self, s: StateId, rng: &mut SimRng) -> ActionId {
        self.ecoach_act(s, rng)
    }

    fn observe(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError> {
        self.ecoach_feedback(ev)
    }

    fn skip(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError> {
        check_skip(self.t, ev)?;
        self.t += 1;
        Ok(())
    }

    fn end_episode(&mut self) {
        if self.policy.apply(&self.pending, 1.0) {
            self.version.bump();
        }
        self.reset_episode();
    }

    fn step_index(&self) -> usize {
        self.t
    }

    fn policy(&self) -> StochasticPolicy {
        self.policy.to_stochastic()
    }

    fn action_probs(&self, s: StateId) -> Vec<f64> {
        self.policy.action_probs(s)
    }

    fn policy_version(&self) -> PolicyVersion {
        self.version
    }

    fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            kind: AgentKind::Ecoach,
            n_states: self.policy.n_states(),
            n_actions: self.policy.n_actions(),
            theta: Some(self.policy.theta().as_slice().to_vec()),
            weights: None,
            q: None,
        }
    }
}
