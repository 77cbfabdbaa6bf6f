use serde::{Deserialize, Serialize};

use super::{check_step, Agent, AgentCheckpoint, AgentConfig, AgentError, AgentKind, FeedbackEvent, PolicyVersion};
use crate::gradient::{ParamTable, SoftmaxTabularPolicy};
use crate::mdp::{ActionId, StateId};
use crate::policy::StochasticPolicy;
use crate::rng::SimRng;

/// `(s_t, a_t, r_{t+1})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub s: StateId,
    pub a: ActionId,
    pub r: f64,
}

/// Monte-Carlo policy-gradient step for one finished episode, evaluated
/// against `policy` throughout:
/// `sum_t alpha * gamma^t * G_t * score(s_t, a_t)`.
pub fn reinforce_delta(policy: &SoftmaxTabularPolicy, trajectory: &[TrajectoryStep], alpha: f64, gamma: f64) -> ParamTable {
    let mut delta = ParamTable::zeros(policy.n_states(), policy.n_actions());
    let mut ret = 0.0;
    let mut returns = vec![0.0; trajectory.len()];
    for (g, step) in returns.iter_mut().zip(trajectory).rev() {
        ret = step.r + gamma * ret;
        *g = ret;
    }
    let mut discount = 1.0;
    for (step, g) in trajectory.iter().zip(&returns) {
        let scale = alpha * discount * g;
        if scale != 0.0 {
            let score = policy.score(step.s, step.a);
            delta.add_row(step.s, &score.row, scale);
        }
        discount *= gamma;
    }
    delta
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReinforceAgent {
    config: AgentConfig,
    policy: SoftmaxTabularPolicy,
    trajectory: Vec<TrajectoryStep>,
    version: PolicyVersion,
}

impl ReinforceAgent {
    pub fn new(n_states: usize, n_actions: usize, config: AgentConfig) -> Self {
        Self {
            config,
            policy: SoftmaxTabularPolicy::new(n_states, n_actions),
            trajectory: Vec::new(),
            version: PolicyVersion::default(),
        }
    }

    pub fn with_policy(policy: SoftmaxTabularPolicy, config: AgentConfig) -> Self {
        Self {
            config,
            policy,
            trajectory: Vec::new(),
            version: PolicyVersion::default(),
        }
    }

    pub fn softmax(&self) -> &SoftmaxTabularPolicy {
        &self.policy
    }

    /// Applies one episode's update. An empty trajectory is a no-op.
    pub fn reinforce_episode(&mut self, trajectory: &[TrajectoryStep]) {
        let delta = reinforce_delta(&self.policy, trajectory, self.config.alpha, self.config.gamma);
        if self.policy.apply(&delta, 1.0) {
            self.version.bump();
        }
    }
}

impl Agent for ReinforceAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Reinforce
    }

    fn begin_episode(&mut self) {
        self.trajectory.clear();
    }

    fn act(&mut self, s: StateId, rng: &mut SimRng) -> ActionId {
        self.policy.sample_action(s, rng)
    }

    fn observe(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError> {
        check_step(self.trajectory.len(), ev)?;
        self.trajectory.push(TrajectoryStep {
            s: ev.s,
            a: ev.a,
            r: ev.f,
        });
        Ok(())
    }

    /// A trajectory needs every step, so a skipped one enters with no reward.
    fn skip(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError> {
        self.observe(&FeedbackEvent { f: 0.0, ..*ev })
    }

    fn end_episode(&mut self) {
        let trajectory = std::mem::take(&mut self.trajectory);
        self.reinforce_episode(&trajectory);
    }

    fn step_index(&self) -> usize {
        self.trajectory.len()
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
            kind: AgentKind::Reinforce,
            n_states: self.policy.n_states(),
            n_actions: self.policy.n_actions(),
            theta: Some(self.policy.theta().as_slice().to_vec()),
            weights: None,
            q: None,
        }
    }
}
