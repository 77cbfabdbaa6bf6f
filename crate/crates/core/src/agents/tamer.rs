use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_skip, check_step, Agent, AgentCheckpoint, AgentConfig, AgentError, AgentKind, FeedbackEvent, PolicyVersion};
use crate::mdp::{ActionId, StateId, TabularMdp};
use crate::policy::{argmax, DeterministicPolicy, StochasticPolicy};
use crate::rng::SimRng;

/// Feedback is applied this many steps after the action it refers to.
pub const FEEDBACK_DELAY: usize = 2;

/// Feature map for TAMER's linear feedback model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TamerFeatures {
    /// One-hot state indicators; a transition's features are
    /// `onehot(s') - onehot(s)`.
    #[default]
    State,
    /// One-hot `(state, action)` indicators; a transition's features are
    /// `onehot(s, a)`.
    StateAction,
}

impl TamerFeatures {
    pub fn dim(self, n_states: usize, n_actions: usize) -> usize {
        match self {
            Self::State => n_states,
            Self::StateAction => n_states * n_actions,
        }
    }
}

/// `w += alpha * (r - w . df) * df` with `df = f_prev1 - f_prev2`, skipped
/// when `r == 0`.
pub fn tamer_update_rew_model(
    w: &mut [f64],
    r: f64,
    f_prev2: &[f64],
    f_prev1: &[f64],
    alpha: f64,
) -> Result<(), AgentError> {
    for f in [f_prev2, f_prev1] {
        if f.len() != w.len() {
            return Err(AgentError::Dimension {
                expected: w.len(),
                got: f.len(),
            });
        }
    }
    if r == 0.0 {
        return Ok(());
    }
    let df: Vec<f64> = f_prev1.iter().zip(f_prev2).map(|(a, b)| a - b).collect();
    let projected: f64 = w.iter().zip(&df).map(|(wi, d)| wi * d).sum();
    let err = r - projected;
    for (wi, d) in w.iter_mut().zip(&df) {
        *wi += alpha * err * d;
    }
    Ok(())
}

/// Linear model of the trainer's feedback, acting greedily on the predicted
/// feedback of each action's known successor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TamerAgent {
    config: AgentConfig,
    n_states: usize,
    n_actions: usize,
    successor: Vec<usize>,
    w: Vec<f64>,
    queue: VecDeque<FeedbackEvent>,
    greedy: Vec<ActionId>,
    t: usize,
    version: PolicyVersion,
}

impl TamerAgent {
    /// Fails if any non-terminal transition is stochastic.
    pub fn new(mdp: &TabularMdp, config: AgentConfig) -> Result<Self, AgentError> {
        let (n, na) = (mdp.n_states(), mdp.n_actions());
        let mut successor = Vec::with_capacity(n * na);
        for s in mdp.states() {
            for a in mdp.actions() {
                let next = mdp
                    .deterministic_successor(s, a)
                    .ok_or(AgentError::StochasticModel { state: s, action: a })?;
                successor.push(next.0);
            }
        }
        let dim = config.tamer_features.dim(n, na);
        Ok(Self {
            config,
            n_states: n,
            n_actions: na,
            successor,
            w: vec![0.0; dim],
            queue: VecDeque::new(),
            greedy: vec![ActionId(0); n],
            t: 0,
            version: PolicyVersion::default(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn features(&self) -> TamerFeatures {
        self.config.tamer_features
    }

    /// Replaces the weights, e.g. when restoring a checkpoint.
    pub fn set_weights(&mut self, w: Vec<f64>) -> Result<(), AgentError> {
        if w.len() != self.w.len() {
            return Err(AgentError::Dimension {
                expected: self.w.len(),
                got: w.len(),
            });
        }
        self.w = w;
        self.refresh_greedy();
        Ok(())
    }

    /// Nonzero entries of the feature difference for `s -a-> next`.
    fn transition_features(&self, s: StateId, a: ActionId, next: StateId) -> [(usize, f64); 2] {
        match self.config.tamer_features {
            TamerFeatures::State if next == s => [(s.0, 0.0), (s.0, 0.0)],
            TamerFeatures::State => [(next.0, 1.0), (s.0, -1.0)],
            TamerFeatures::StateAction => [(s.0 * self.n_actions + a.0, 1.0), (0, 0.0)],
        }
    }

    /// Predicted feedback for taking `a` in `s`.
    pub fn projected_feedback(&self, s: StateId, a: ActionId) -> f64 {
        let next = StateId(self.successor[s.0 * self.n_actions + a.0]);
        self.transition_features(s, a, next)
            .iter()
            .map(|(i, d)| self.w[*i] * d)
            .sum()
    }

    /// `argmax_a w . (f(T(s, a)) - f(s))`, ties to the lowest index.
    pub fn tamer_choose_action(&self, s: StateId) -> ActionId {
        let projected: Vec<f64> = (0..self.n_actions)
            .map(|a| self.projected_feedback(s, ActionId(a)))
            .collect();
        ActionId(argmax(&projected))
    }

    fn update_from(&mut self, ev: &FeedbackEvent) {
        if ev.f == 0.0 {
            return;
        }
        let df = self.transition_features(ev.s, ev.a, ev.next_state);
        let projected: f64 = df.iter().map(|(i, d)| self.w[*i] * d).sum();
        let err = ev.f - projected;
        for (i, d) in df {
            self.w[i] += self.config.alpha * err * d;
        }
        self.refresh_greedy();
    }

    fn refresh_greedy(&mut self) {
        let mut changed = false;
        for s in 0..self.n_states {
            let a = self.tamer_choose_action(StateId(s));
            if self.greedy[s] != a {
                self.greedy[s] = a;
                changed = true;
            }
        }
        if changed {
            self.version.bump();
        }
    }

    fn apply_due(&mut self) {
        while let Some(ev) = self.queue.front().copied() {
            if ev.t + FEEDBACK_DELAY > self.t {
                break;
            }
            self.queue.pop_front();
            self.update_from(&ev);
        }
    }

    pub fn greedy_policy(&self) -> DeterministicPolicy {
        DeterministicPolicy::new(self.greedy.clone())
    }
}

impl Agent for TamerAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Tamer
    }

    fn begin_episode(&mut self) {
        self.queue.clear();
        self.t = 0;
    }

    fn act(&mut self, s: StateId, rng: &mut SimRng) -> ActionId {
        self.apply_due();
        let eps = self.config.epsilon;
        if eps > 0.0 && rng.random::<f64>() < eps {
            ActionId(rng.random_range(0..self.n_actions))
        } else {
            self.greedy[s.0]
        }
    }

    fn observe(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError> {
        check_step(self.t, ev)?;
        self.queue.push_back(*ev);
        self.t += 1;
        Ok(())
    }

    fn skip(&mut self, ev: &FeedbackEvent) -> Result<(), AgentError> {
        check_skip(self.t, ev)?;
        self.t += 1;
        Ok(())
    }

    /// Feedback still in flight when the episode stops is dropped, since the
    /// loop that would have applied it never runs, unless `tamer_flush` asks
    /// for it to be applied now.
    fn end_episode(&mut self) {
        if self.config.tamer_flush {
            while let Some(ev) = self.queue.pop_front() {
                self.update_from(&ev);
            }
        }
        self.queue.clear();
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
        row[self.greedy[s.0].0] += 1.0 - self.config.epsilon;
        row
    }

    fn policy_version(&self) -> PolicyVersion {
        self.version
    }

    fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            kind: AgentKind::Tamer,
            n_states: self.n_states,
            n_actions: self.n_actions,
            theta: None,
            weights: Some(self.w.clone()),
            q: None,
        }
    }
}
