//! Tabular softmax policies, their score function, and eligibility traces.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::{ActionId, StateId};
use crate::policy::{sample_categorical, StochasticPolicy};

/// Logits are clamped to `[-THETA_LIMIT, THETA_LIMIT]` after every update.
pub const THETA_LIMIT: f64 = 50.0;

/// Dense `(state, action)` table that remembers which rows are nonzero, so
/// that adding it to a large parameter table only touches visited states.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawParamTable")]
pub struct ParamTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    #[serde(skip)]
    active: Vec<usize>,
    #[serde(skip)]
    is_active: Vec<bool>,
}

impl PartialEq for ParamTable {
    fn eq(&self, other: &Self) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions && self.values == other.values
    }
}

#[derive(Deserialize)]
struct RawParamTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl TryFrom<RawParamTable> for ParamTable {
    type Error = String;

    fn try_from(raw: RawParamTable) -> Result<Self, Self::Error> {
        if raw.values.len() != raw.n_states * raw.n_actions {
            return Err(format!(
                "table has {} values, expected {}x{}",
                raw.values.len(),
                raw.n_states,
                raw.n_actions
            ));
        }
        Ok(Self::from_values(raw.n_states, raw.n_actions, raw.values))
    }
}

impl ParamTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
            active: Vec::new(),
            is_active: vec![false; n_states],
        }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_states * n_actions);
        let mut t = Self::zeros(n_states, n_actions);
        t.values = values;
        for s in 0..n_states {
            if t.row(StateId(s)).iter().any(|x| *x != 0.0) {
                t.mark(s);
            }
        }
        t
    }

    fn mark(&mut self, s: usize) {
        if !self.is_active[s] {
            self.is_active[s] = true;
            self.active.push(s);
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: StateId, a: ActionId) -> f64 {
        self.values[s.0 * self.n_actions + a.0]
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        &self.values[s.0 * self.n_actions..(s.0 + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Rows that may hold nonzero entries, in first-touch order.
    pub fn active_rows(&self) -> &[usize] {
        &self.active
    }

    pub fn add_row(&mut self, s: StateId, row: &[f64], scale: f64) {
        self.mark(s.0);
        let base = s.0 * self.n_actions;
        for (x, r) in self.values[base..base + self.n_actions].iter_mut().zip(row) {
            *x += scale * r;
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParamTable, scale: f64) {
        for &s in &other.active {
            self.add_row(StateId(s), other.row(StateId(s)), scale);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for &s in &self.active {
            let base = s * self.n_actions;
            for x in &mut self.values[base..base + self.n_actions] {
                *x *= factor;
            }
        }
    }

    pub fn clear(&mut self) {
        for &s in &self.active {
            let base = s * self.n_actions;
            self.values[base..base + self.n_actions].fill(0.0);
            self.is_active[s] = false;
        }
        self.active.clear();
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Score `grad_theta log pi(s, a)`: nonzero only in row `s`, where it equals
/// `onehot(a) - pi(s, .)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Score {
    pub state: StateId,
    pub row: Vec<f64>,
}

impl Score {
    pub fn to_table(&self, n_states: usize) -> ParamTable {
        let mut t = ParamTable::zeros(n_states, self.row.len());
        t.add_row(self.state, &self.row, 1.0);
        t
    }
}

/// Per-state softmax over a logit table `theta[s][a]`, initialised at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxTabularPolicy {
    theta: ParamTable,
}

impl SoftmaxTabularPolicy {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            theta: ParamTable::zeros(n_states, n_actions),
        }
    }

    pub fn from_logits(n_states: usize, n_actions: usize, logits: Vec<f64>) -> Self {
        let mut p = Self {
            theta: ParamTable::from_values(n_states, n_actions, logits),
        };
        p.clamp_all();
        p
    }

    pub fn n_states(&self) -> usize {
        self.theta.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.theta.n_actions
    }

    pub fn theta(&self) -> &ParamTable {
        &self.theta
    }

    fn clamp_all(&mut self) {
        for x in &mut self.theta.values {
            *x = x.clamp(-THETA_LIMIT, THETA_LIMIT);
        }
    }

    /// Writes `pi(s, .)` into `out`, shifting by the row max before
    /// exponentiating.
    pub fn probs_into(&self, s: StateId, out: &mut [f64]) {
        let row = self.theta.row(s);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, x) in out.iter_mut().zip(row) {
            *o = (x - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }

    pub fn action_probs(&self, s: StateId) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions()];
        self.probs_into(s, &mut out);
        out
    }

    pub fn log_prob(&self, s: StateId, a: ActionId) -> f64 {
        let row = self.theta.row(s);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        row[a.0] - lse
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, s: StateId, rng: &mut R) -> ActionId {
        sample_categorical(&self.action_probs(s), rng)
    }

    pub fn score(&self, s: StateId, a: ActionId) -> Score {
        let mut row = self.action_probs(s);
        for x in &mut row {
            *x = -*x;
        }
        row[a.0] += 1.0;
        Score { state: s, row }
    }

    /// `theta += scale * delta`, clamped. Returns whether any logit moved.
    pub fn apply(&mut self, delta: &ParamTable, scale: f64) -> bool {
        if scale == 0.0 {
            return false;
        }
        let mut moved = false;
        let na = self.n_actions();
        for &s in delta.active_rows() {
            self.theta.mark(s);
            let base = s * na;
            for (x, d) in self.theta.values[base..base + na].iter_mut().zip(delta.row(StateId(s))) {
                let new = (*x + scale * d).clamp(-THETA_LIMIT, THETA_LIMIT);
                moved |= new != *x;
                *x = new;
            }
        }
        moved
    }

    pub fn to_stochastic(&self) -> StochasticPolicy {
        let na = self.n_actions();
        let mut probs = vec![0.0; self.n_states() * na];
        for (s, out) in probs.chunks_mut(na).enumerate() {
            self.probs_into(StateId(s), out);
        }
        StochasticPolicy::from_table(self.n_states(), na, probs).expect("softmax rows are stochastic")
    }
}

/// Running sum of scores within an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EligibilityTrace {
    e: ParamTable,
}

impl EligibilityTrace {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            e: ParamTable::zeros(n_states, n_actions),
        }
    }

    pub fn table(&self) -> &ParamTable {
        &self.e
    }

    pub fn get(&self, s: StateId, a: ActionId) -> f64 {
        self.e.get(s, a)
    }

    pub fn add_score(&mut self, score: &Score) {
        self.e.add_row(score.state, &score.row, 1.0);
    }

    /// `e' = e + score(policy, s, a)`, leaving `self` untouched.
    pub fn updated(&self, policy: &SoftmaxTabularPolicy, s: StateId, a: ActionId) -> Self {
        let mut next = self.clone();
        next.add_score(&policy.score(s, a));
        next
    }

    pub fn decay(&mut self, lambda: f64) {
        if lambda != 1.0 {
            self.e.scale(lambda);
        }
    }

    pub fn reset(&mut self) {
        self.e.clear();
    }
}

/// `e' = e + score(policy, s, a)`.
pub fn trace_update(
    e: &EligibilityTrace,
    policy: &SoftmaxTabularPolicy,
    s: StateId,
    a: ActionId,
) -> EligibilityTrace {
    e.updated(policy, s, a)
}
