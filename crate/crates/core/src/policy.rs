//! Explicit policy tables consumed by the solvers and trainer models.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{ActionId, StateId};

/// Row sums further than this from one are rejected.
pub const ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("policy table has {got} entries, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("policy row for state {state} sums to {sum}")]
    NotStochastic { state: usize, sum: f64 },
    #[error("policy entry ({state}, {action}) = {value} is not a probability")]
    BadEntry { state: usize, action: usize, value: f64 },
    #[error("policy covers {got_states}x{got_actions}, MDP is {states}x{actions}")]
    Mismatch {
        states: usize,
        actions: usize,
        got_states: usize,
        got_actions: usize,
    },
}

/// `pi(s, a)` as a dense row-stochastic table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn from_table(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self, PolicyError> {
        let policy = Self {
            n_states,
            n_actions,
            probs,
        };
        policy.check()?;
        Ok(policy)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, PolicyError> {
        let n_actions = rows.first().map_or(0, Vec::len);
        let probs: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_table(rows.len(), n_actions, probs)
    }

    /// Epsilon-greedy mixture around a deterministic choice per state.
    pub fn epsilon_greedy(greedy: &DeterministicPolicy, n_actions: usize, epsilon: f64) -> Self {
        let n_states = greedy.len();
        let mut probs = vec![epsilon / n_actions as f64; n_states * n_actions];
        for (s, a) in greedy.actions().iter().enumerate() {
            probs[s * n_actions + a.0] += 1.0 - epsilon;
        }
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: StateId, a: ActionId) -> f64 {
        self.probs[s.0 * self.n_actions + a.0]
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        &self.probs[s.0 * self.n_actions..(s.0 + 1) * self.n_actions]
    }

    pub fn table(&self) -> &[f64] {
        &self.probs
    }

    pub fn check(&self) -> Result<(), PolicyError> {
        if self.probs.len() != self.n_states * self.n_actions || self.n_actions == 0 {
            return Err(PolicyError::Shape {
                expected: self.n_states * self.n_actions,
                got: self.probs.len(),
            });
        }
        for (s, row) in self.probs.chunks(self.n_actions).enumerate() {
            for (a, p) in row.iter().enumerate() {
                if !(0.0..=1.0 + ROW_TOL).contains(p) {
                    return Err(PolicyError::BadEntry {
                        state: s,
                        action: a,
                        value: *p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(PolicyError::NotStochastic { state: s, sum });
            }
        }
        Ok(())
    }

    pub fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<(), PolicyError> {
        if self.n_states != n_states || self.n_actions != n_actions {
            return Err(PolicyError::Mismatch {
                states: n_states,
                actions: n_actions,
                got_states: self.n_states,
                got_actions: self.n_actions,
            });
        }
        self.check()
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: StateId, rng: &mut R) -> ActionId {
        sample_categorical(self.row(s), rng)
    }
}

/// Inverse-CDF draw from a probability row.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> ActionId {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return ActionId(a);
        }
    }
    // Rounding left a sliver above the last cumulative sum.
    ActionId(row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1))
}

/// One action per state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    actions: Vec<ActionId>,
}

impl DeterministicPolicy {
    pub fn new(actions: Vec<ActionId>) -> Self {
        Self { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action(&self, s: StateId) -> ActionId {
        self.actions[s.0]
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.actions
    }

    pub fn to_stochastic(&self, n_actions: usize) -> StochasticPolicy {
        StochasticPolicy::epsilon_greedy(self, n_actions, 0.0)
    }
}

/// Index of the largest entry, ties to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
