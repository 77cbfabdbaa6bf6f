use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_skip, check_step, Agent, AgentCheckpoint, AgentError, AgentKind, FeedbackEvent, PolicyVersion};
use crate::mdp::{ActionId, StateId};
use crate::policy::StochasticPolicy;
use crate::rng::SimRng;

/// Uniform over actions; ignores feedback.
pub fn random_act(n_actions: usize, rng: &mut SimRng) -> ActionId {
    ActionId(rng.random_range(0..n_actions))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomAgent {
    n_states: usize,
    n_actions: usize,
    t: usize,
}

impl RandomAgent {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            t: 0,
        }
    }
}

impl Agent for RandomAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Random
    }

    fn begin_episode(&mut self) {
        self.t = 0;
    }

    fn act(&mut self, _s: StateId, rng: &mut SimRng) -> ActionId {
        random_act(self.n_actions, rng)
    }

    fn observe(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError> {
        check_step(self.t, ev)?;
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
        StochasticPolicy::uniform(self.n_states, self.n_actions)
    }

    fn action_probs(&self, _s: StateId) -> Vec<f64> {
        vec![1.0 / self.n_actions as f64; self.n_actions]
    }

    fn policy_version(&self) -> PolicyVersion {
        PolicyVersion::default()
    }

    fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            kind: AgentKind::Random,
            n_states: self.n_states,
            n_actions: self.n_actions,
            theta: None,
            weights: None,
            q: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn four_actions_are_uniform() {
        let mut rng = seeded(12);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[random_act(4, &mut rng).0] += 1;
        }
        let sd = (0.25 * 0.75 / n as f64).sqrt();
        assert!(counts.iter().all(|c| (*c as f64 / n as f64 - 0.25).abs() < 5.0 * sd));
    }

    #[test]
    fn single_action_is_always_zero() {
        let mut rng = seeded(13);
        assert!((0..100).all(|_| random_act(1, &mut rng) == ActionId(0)));
    }

    #[test]
    fn stream_is_reproducible() {
        let draw = || {
            let mut rng = seeded(14);
            (0..50).map(|_| random_act(4, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }
}
