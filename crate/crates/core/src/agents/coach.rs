use serde::{Deserialize, Serialize};

use super::{check_skip, check_step, Agent, AgentCheckpoint, AgentConfig, AgentError, AgentKind, FeedbackEvent, PolicyVersion, UpdateMode};
use crate::gradient::{EligibilityTrace, ParamTable, SoftmaxTabularPolicy};
use crate::mdp::{ActionId, StateId};
use crate::policy::StochasticPolicy;
use crate::rng::SimRng;

/// The original COACH learner: lambda-decayed trace, no discount on the
/// feedback.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoachAgent {
    config: AgentConfig,
    policy: SoftmaxTabularPolicy,
    trace: EligibilityTrace,
    pending: ParamTable,
    t: usize,
    version: PolicyVersion,
}

impl CoachAgent {
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

    pub fn softmax(&self) -> &SoftmaxTabularPolicy {
        &self.policy
    }

    pub fn trace(&self) -> &EligibilityTrace {
        &self.trace
    }

    /// `e = lambda * e + score(s, a)`, then `theta += alpha * f * e`.
    pub fn coach_feedback(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError> {
        check_step(self.t, ev)?;
        self.trace.decay(self.config.lambda);
        self.trace.add_score(&self.policy.score(ev.s, ev.a));
        let scale = self.config.alpha * ev.f;
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

impl Agent for CoachAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Coach
    }

    fn begin_episode(&mut self) {
        self.reset_episode();
    }

    fn act(&mut self, s: StateId, rng: &mut SimRng) -> ActionId {
        self.policy.sample_action(s, rng)
    }

    fn observe(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError> {
        self.coach_feedback(ev)
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
            kind: AgentKind::Coach,
            n_states: self.policy.n_states(),
            n_actions: self.policy.n_actions(),
            theta: Some(self.policy.theta().as_slice().to_vec()),
            weights: None,
            q: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::EcoachAgent;
    use crate::rng::seeded;
    use rand::Rng;

    fn ev(s: usize, a: usize, f: f64, t: usize) -> FeedbackEvent {
        FeedbackEvent {
            s: StateId(s),
            a: ActionId(a),
            next_state: StateId(s),
            f,
            t,
        }
    }

    #[test]
    fn lambda_one_gamma_one_matches_ecoach() {
        let mut cfg = AgentConfig::for_kind(AgentKind::Coach, 1.0);
        cfg.lambda = 1.0;
        cfg.alpha = 0.2;
        let mut coach = CoachAgent::new(3, 2, cfg.clone());
        let mut ecoach = EcoachAgent::new(3, 2, cfg);
        let (mut r1, mut r2) = (seeded(5), seeded(5));
        let mut feedback = seeded(6);
        for _ in 0..20 {
            coach.begin_episode();
            ecoach.begin_episode();
            for t in 0..15 {
                let s = StateId(t % 3);
                let a1 = coach.act(s, &mut r1);
                let a2 = ecoach.act(s, &mut r2);
                assert_eq!(a1, a2);
                let f = feedback.random_range(-1.0..1.0);
                coach.observe(&ev(s.0, a1.0, f, t)).unwrap();
                ecoach.observe(&ev(s.0, a2.0, f, t)).unwrap();
                assert_eq!(coach.softmax().theta(), ecoach.softmax().theta());
            }
            coach.end_episode();
            ecoach.end_episode();
        }
    }

    #[test]
    fn lambda_zero_keeps_only_current_score() {
        let mut cfg = AgentConfig::for_kind(AgentKind::Coach, 0.9);
        cfg.lambda = 0.0;
        let mut agent = CoachAgent::new(2, 2, cfg);
        agent.begin_episode();
        agent.observe(&ev(0, 0, 0.0, 0)).unwrap();
        agent.observe(&ev(1, 1, 0.0, 1)).unwrap();
        assert_eq!(agent.trace().table().row(StateId(0)), &[0.0, 0.0]);
        assert_eq!(agent.trace().table().row(StateId(1)), &[-0.5, 0.5]);
    }

    #[test]
    fn no_discount_on_late_feedback() {
        let mut cfg = AgentConfig::for_kind(AgentKind::Coach, 0.5);
        cfg.lambda = 0.0;
        cfg.alpha = 1.0;
        let mut agent = CoachAgent::new(2, 2, cfg);
        agent.begin_episode();
        agent.observe(&ev(1, 0, 0.0, 0)).unwrap();
        agent.observe(&ev(0, 0, 1.0, 1)).unwrap();
        assert_eq!(agent.softmax().theta().row(StateId(0)), &[0.5, -0.5]);
    }
}
