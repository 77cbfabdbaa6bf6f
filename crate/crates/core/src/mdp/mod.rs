//! Finite MDPs and the step dynamics every learner and trainer model consumes.

mod chain;
mod gridworld;
mod random;

pub use chain::{build_five_state_chain, ChainAction, ChainState};
pub use gridworld::{build_gridworld, Cell, GridAction, Gridworld, GridworldSpec};
pub use random::{random_mdp, RandomMdpSpec};

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row sums further than this from one are reported by [`TabularMdp::validate`].
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("table shape mismatch: {0}")]
    Shape(String),
    #[error("state {0} out of range (n_states = {1})")]
    StateOutOfRange(usize, usize),
    #[error("action {0} out of range (n_actions = {1})")]
    ActionOutOfRange(usize, usize),
    #[error("cannot step from terminal state {0}")]
    TerminalStep(StateId),
    #[error("invalid gridworld: {0}")]
    InvalidGrid(String),
}

/// Result of one environment transition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: StateId,
    pub reward: f64,
    /// Set exactly when `next_state` is terminal.
    pub done: bool,
}

/// A finite MDP `<S, A, T, R, gamma>` with a single start state.
///
/// Terminal states are absorbing zero-reward self-loops, so infinite-horizon
/// value formulas apply without special cases. The table is immutable once
/// built; share it freely between readers.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Dense `T[s][a][s']`, row-major.
    transition: Vec<f64>,
    /// `R[s][a]`.
    reward: Vec<f64>,
    gamma: f64,
    start: StateId,
    terminal: Vec<bool>,
    /// Nonzero entries of each `T[s][a][..]` row, for sweeps and sampling.
    successors: Vec<Vec<(usize, f64)>>,
}

impl TabularMdp {
    /// Assembles an MDP from dense tables. Only shapes are checked here;
    /// stochasticity and terminal structure are reported by [`Self::validate`].
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        start: StateId,
        terminal: Vec<bool>,
    ) -> Result<Self, MdpError> {
        if n_states == 0 || n_actions == 0 {
            return Err(MdpError::Shape("need at least one state and one action".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(MdpError::Shape(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(MdpError::Shape(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if terminal.len() != n_states {
            return Err(MdpError::Shape(format!(
                "terminal has {} entries, expected {}",
                terminal.len(),
                n_states
            )));
        }
        if start.0 >= n_states {
            return Err(MdpError::StateOutOfRange(start.0, n_states));
        }
        let successors = transition
            .chunks(n_states)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, p)| **p != 0.0)
                    .map(|(j, p)| (j, *p))
                    .collect()
            })
            .collect();
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            start,
            terminal,
            successors,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.terminal[s.0]
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.n_states).map(StateId)
    }

    pub fn actions(&self) -> impl Iterator<Item = ActionId> {
        (0..self.n_actions).map(ActionId)
    }

    pub fn reward(&self, s: StateId, a: ActionId) -> f64 {
        self.reward[s.0 * self.n_actions + a.0]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    pub fn transition_prob(&self, s: StateId, a: ActionId, next: StateId) -> f64 {
        self.transition[(s.0 * self.n_actions + a.0) * self.n_states + next.0]
    }

    /// Dense row `T[s][a][..]`.
    pub fn transition_row(&self, s: StateId, a: ActionId) -> &[f64] {
        let base = (s.0 * self.n_actions + a.0) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    pub fn transition_table(&self) -> &[f64] {
        &self.transition
    }

    /// Nonzero `(s', p)` pairs of `T[s][a][..]`.
    pub fn successors(&self, s: StateId, a: ActionId) -> &[(usize, f64)] {
        &self.successors[s.0 * self.n_actions + a.0]
    }

    /// The unique successor if `T[s][a][..]` is a point mass.
    pub fn deterministic_successor(&self, s: StateId, a: ActionId) -> Option<StateId> {
        match self.successors(s, a) {
            [(j, p)] if (*p - 1.0).abs() <= STOCHASTIC_TOL => Some(StateId(*j)),
            _ => None,
        }
    }

    /// True when every transition row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.states()
            .all(|s| self.actions().all(|a| self.deterministic_successor(s, a).is_some()))
    }

    pub fn check_state(&self, s: StateId) -> Result<(), MdpError> {
        if s.0 < self.n_states {
            Ok(())
        } else {
            Err(MdpError::StateOutOfRange(s.0, self.n_states))
        }
    }

    pub fn check_action(&self, a: ActionId) -> Result<(), MdpError> {
        if a.0 < self.n_actions {
            Ok(())
        } else {
            Err(MdpError::ActionOutOfRange(a.0, self.n_actions))
        }
    }

    /// Same dynamics with a replacement reward table. Terminal states keep
    /// their zero reward.
    pub fn with_rewards(&self, reward: Vec<f64>) -> Result<Self, MdpError> {
        if reward.len() != self.reward.len() {
            return Err(MdpError::Shape(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                self.reward.len()
            )));
        }
        let mut out = self.clone();
        out.reward = reward;
        for s in 0..self.n_states {
            if self.terminal[s] {
                for a in 0..self.n_actions {
                    out.reward[s * self.n_actions + a] = 0.0;
                }
            }
        }
        Ok(out)
    }

    /// Samples `s' ~ T[s][a][..]` and returns `R[s][a]`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        s: StateId,
        a: ActionId,
        rng: &mut R,
    ) -> Result<StepOutcome, MdpError> {
        self.check_state(s)?;
        self.check_action(a)?;
        if self.is_terminal(s) {
            return Err(MdpError::TerminalStep(s));
        }
        let row = self.successors(s, a);
        let next = match row {
            [(j, _)] => *j,
            _ => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = row.last().map(|(j, _)| *j).unwrap_or(s.0);
                for (j, p) in row {
                    acc += p;
                    if u < acc {
                        pick = *j;
                        break;
                    }
                }
                pick
            }
        };
        let next_state = StateId(next);
        Ok(StepOutcome {
            next_state,
            reward: self.reward(s, a),
            done: self.is_terminal(next_state),
        })
    }

    /// Reports every structural violation; an empty report means well-formed.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        if !(0.0..1.0).contains(&self.gamma) || !self.gamma.is_finite() {
            issues.push(ValidationIssue::Discount { gamma: self.gamma });
        }
        for s in self.states() {
            for a in self.actions() {
                let row = self.transition_row(s, a);
                for (j, p) in row.iter().enumerate() {
                    if *p < 0.0 || !p.is_finite() {
                        issues.push(ValidationIssue::NegativeProbability {
                            state: s,
                            action: a,
                            next: StateId(j),
                            value: *p,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    issues.push(ValidationIssue::RowSum {
                        state: s,
                        action: a,
                        sum,
                        deficit: 1.0 - sum,
                    });
                }
                if self.is_terminal(s) {
                    if (row[s.0] - 1.0).abs() > STOCHASTIC_TOL {
                        issues.push(ValidationIssue::TerminalEscapes { state: s, action: a });
                    }
                    let r = self.reward(s, a);
                    if r != 0.0 {
                        issues.push(ValidationIssue::TerminalReward {
                            state: s,
                            action: a,
                            reward: r,
                        });
                    }
                }
            }
        }
        ValidationReport { issues }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ValidationIssue {
    RowSum {
        state: StateId,
        action: ActionId,
        sum: f64,
        deficit: f64,
    },
    NegativeProbability {
        state: StateId,
        action: ActionId,
        next: StateId,
        value: f64,
    },
    TerminalEscapes {
        state: StateId,
        action: ActionId,
    },
    TerminalReward {
        state: StateId,
        action: ActionId,
        reward: f64,
    },
    Discount {
        gamma: f64,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RowSum {
                state,
                action,
                sum,
                deficit,
            } => write!(f, "T[{state}][{action}] sums to {sum} (deficit {deficit:e})"),
            Self::NegativeProbability {
                state,
                action,
                next,
                value,
            } => write!(f, "T[{state}][{action}][{next}] = {value} is not a probability"),
            Self::TerminalEscapes { state, action } => {
                write!(f, "terminal {state} does not self-loop under {action}")
            }
            Self::TerminalReward {
                state,
                action,
                reward,
            } => write!(f, "terminal {state} pays {reward} under {action}"),
            Self::Discount { gamma } => write!(f, "discount {gamma} outside [0, 1)"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}
