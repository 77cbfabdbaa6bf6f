use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_skip, check_step, Agent, AgentCheckpoint, AgentConfig, AgentError, AgentKind, FeedbackEvent, PolicyVersion};
use crate::mdp::{ActionId, StateId};
use crate::policy::{argmax, DeterministicPolicy, StochasticPolicy};
use crate::rng::SimRng;

/// Tabular Q-learning on the trainer's feedback in place of reward.
///
/// Terminal successors are never acted from, so their rows stay at zero and
/// the bootstrap through them is zero without a special case.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QLearningAgent {
    config: AgentConfig,
    n_actions: usize,
    q: Vec<f64>,
    t: usize,
    version: PolicyVersion,
}

impl QLearningAgent {
    pub fn new(n_states: usize, n_actions: usize, config: AgentConfig) -> Self {
        Self {
            config,
            n_actions,
            q: vec![0.0; n_states * n_actions],
            t: 0,
            version: PolicyVersion::default(),
        }
    }

    pub fn q_row(&self, s: StateId) -> &[f64] {
        &self.q[s.0 * self.n_actions..(s.0 + 1) * self.n_actions]
    }

    pub fn q(&self, s: StateId, a: ActionId) -> f64 {
        self.q[s.0 * self.n_actions + a.0]
    }

    pub fn greedy_action(&self, s: StateId) -> ActionId {
        ActionId(argmax(self.q_row(s)))
    }

    pub fn greedy_policy(&self) -> DeterministicPolicy {
        let n_states = self.q.len() / self.n_actions;
        DeterministicPolicy::new((0..n_states).map(|s| self.greedy_action(StateId(s))).collect())
    }

    /// Epsilon-greedy draw: one uniform decides exploration, a second picks
    /// the exploratory action.
    pub fn qlearning_act(&self, s: StateId, epsilon: f64, rng: &mut SimRng) -> ActionId {
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            ActionId(rng.random_range(0..self.n_actions))
        } else {
            self.greedy_action(s)
        }
    }

    /// `Q(s,a) = (1 - alpha) Q(s,a) + alpha (f + gamma max_b Q(s', b))`.
    pub fn qlearning_feedback(&mut self, ev: &FeedbackEvent, alpha: f64, gamma: f64) {
        let bootstrap = self.q_row(ev.next_state).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let before = self.greedy_action(ev.s);
        let idx = ev.s.0 * self.n_actions + ev.a.0;
        self.q[idx] = (1.0 - alpha) * self.q[idx] + alpha * (ev.f + gamma * bootstrap);
        if self.greedy_action(ev.s) != before {
            self.version.bump();
        }
    }
}

impl Agent for QLearningAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::QLearning
    }

    fn begin_episode(&mut self) {
        self.t = 0;
    }

    fn act(&mut self, s: StateId, rng: &mut SimRng) -> ActionId {
        self.qlearning_act(s, self.config.epsilon, rng)
    }

    fn observe(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError> {
        check_step(self.t, ev)?;
        self.qlearning_feedback(ev, self.config.alpha, self.config.gamma);
        self.t += 1;
        Ok(())
    }

    fn skip(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError> {
        check_skip(self.t, ev)?;
        self.t += 1;
        Ok(())
    }

    fn end_episode(&mut self) {
        self.t = 0;
    }

    fn step_index(&self) -> usize {
        self.t
    }

    fn policy(&self) -> StochasticPolicy {
        StochasticPolicy::epsilon_greedy(&self.greedy_policy(), self.n_actions, self.config.epsilon)
    }

    fn action_probs(&self, s: StateId) -> Vec<f64> {
        let mut row = vec![self.config.epsilon / self.n_actions as f64; self.n_actions];
        row[self.greedy_action(s).0] += 1.0 - self.config.epsilon;
        row
    }

    fn policy_version(&self) -> PolicyVersion {
        self.version
    }

    fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            kind: AgentKind::QLearning,
            n_states: self.q.len() / self.n_actions,
            n_actions: self.n_actions,
            theta: None,
            weights: None,
            q: Some(self.q.clone()),
        }
    }
}
