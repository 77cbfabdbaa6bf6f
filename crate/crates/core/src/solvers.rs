//! Exact dynamic-programming quantities for tabular MDPs.
//!
//! Everything here is a pure function of an immutable MDP and policy table,
//! used both as synthetic-trainer ground truth and as the reference side of
//! the convergence checks. Iterative methods stop on the sup-norm residual of
//! the fixed-point equation they solve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{ActionId, StateId, TabularMdp};
use crate::policy::{argmax, DeterministicPolicy, PolicyError, StochasticPolicy};

/// Tolerance for the theorem checks.
pub const THEOREM_TOL: f64 = 1e-10;
/// Tolerance for trainer models queried inside the training loop.
pub const ORACLE_TOL: f64 = 1e-6;
/// Sweep cap for the iterative solvers.
pub const MAX_SWEEPS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("no convergence after {sweeps} sweeps (residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("discount {0} outside [0, 1)")]
    Discount(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    v: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(n_states: usize) -> Self {
        Self { v: vec![0.0; n_states] }
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Self { v }
    }

    pub fn get(&self, s: StateId) -> f64 {
        self.v[s.0]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn max_abs_diff(&self, other: &ValueTable) -> f64 {
        sup_diff(&self.v, &other.v)
    }
}

/// A real value per `(state, action)`: Q-values or advantages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_actions: usize,
    q: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            q: vec![0.0; n_states * n_actions],
        }
    }

    pub fn get(&self, s: StateId, a: ActionId) -> f64 {
        self.q[s.0 * self.n_actions + a.0]
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        &self.q[s.0 * self.n_actions..(s.0 + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn greedy(&self) -> DeterministicPolicy {
        DeterministicPolicy::new(
            self.q
                .chunks(self.n_actions)
                .map(|row| ActionId(argmax(row)))
                .collect(),
        )
    }
}

/// Unnormalised discounted visitation `d(s) = sum_t gamma^t P_t(s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyTable {
    d: Vec<f64>,
}

impl OccupancyTable {
    pub fn get(&self, s: StateId) -> f64 {
        self.d[s.0]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }

    pub fn total(&self) -> f64 {
        self.d.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalSolution {
    pub values: ValueTable,
    pub q: QTable,
    pub policy: DeterministicPolicy,
}

/// Both scalings of the expected per-state L1 gap between two policies under
/// the reference policy's discounted visitation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyDistance {
    /// `sum_s d(s) sum_a |pi*(s,a) - pi(s,a)|` with the raw occupancy.
    pub unnormalized: f64,
    /// Same expectation under the proper distribution `(1 - gamma) d`.
    pub normalized: f64,
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn check_inputs(mdp: &TabularMdp, tol: f64) -> Result<(), SolverError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(SolverError::Tolerance(tol));
    }
    let g = mdp.gamma();
    if !(0.0..1.0).contains(&g) {
        return Err(SolverError::Discount(g));
    }
    Ok(())
}

fn backup(mdp: &TabularMdp, s: StateId, a: ActionId, v: &[f64]) -> f64 {
    let future: f64 = mdp.successors(s, a).iter().map(|(j, p)| p * v[*j]).sum();
    mdp.reward(s, a) + mdp.gamma() * future
}

fn q_from_values(mdp: &TabularMdp, v: &[f64]) -> QTable {
    let mut q = QTable::zeros(mdp.n_states(), mdp.n_actions());
    for s in mdp.states() {
        for a in mdp.actions() {
            q.q[s.0 * mdp.n_actions() + a.0] = if mdp.is_terminal(s) {
                0.0
            } else {
                backup(mdp, s, a, v)
            };
        }
    }
    q
}

/// Optimal values by synchronous value iteration. The greedy policy breaks
/// ties toward the lowest action index, so it is a function of the MDP alone.
///
/// Panics when `tol <= 0` or the discount is outside `[0, 1)`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> OptimalSolution {
    if let Err(e) = check_inputs(mdp, tol) {
        panic!("value_iteration: {e}");
    }
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    loop {
        for s in mdp.states() {
            next[s.0] = if mdp.is_terminal(s) {
                0.0
            } else {
                mdp.actions()
                    .map(|a| backup(mdp, s, a, &v))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
        }
        let residual = sup_diff(&v, &next);
        std::mem::swap(&mut v, &mut next);
        if residual <= tol {
            break;
        }
    }
    let q = q_from_values(mdp, &v);
    let policy = q.greedy();
    OptimalSolution {
        values: ValueTable { v },
        q,
        policy,
    }
}

/// `min_pi V^pi`, via value iteration on the reward-negated MDP.
pub fn min_values(mdp: &TabularMdp, tol: f64) -> ValueTable {
    let negated = mdp
        .with_rewards(mdp.reward_table().iter().map(|r| -r).collect())
        .expect("same shape");
    let sol = value_iteration(&negated, tol);
    ValueTable {
        v: sol.values.v.iter().map(|x| -x).collect(),
    }
}

/// Policy-averaged one-step model: sparse `P^pi` rows and `r^pi`.
struct PolicyModel {
    rows: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
}

impl PolicyModel {
    fn new(mdp: &TabularMdp, pi: &StochasticPolicy) -> Self {
        let n = mdp.n_states();
        let mut rows = Vec::with_capacity(n);
        let mut reward = vec![0.0; n];
        let mut dense = vec![0.0; n];
        let mut touched = Vec::new();
        for s in mdp.states() {
            if mdp.is_terminal(s) {
                rows.push(vec![(s.0, 1.0)]);
                continue;
            }
            for a in mdp.actions() {
                let p_a = pi.prob(s, a);
                if p_a == 0.0 {
                    continue;
                }
                reward[s.0] += p_a * mdp.reward(s, a);
                for (j, p) in mdp.successors(s, a) {
                    if dense[*j] == 0.0 {
                        touched.push(*j);
                    }
                    dense[*j] += p_a * p;
                }
            }
            touched.sort_unstable();
            rows.push(touched.iter().map(|j| (*j, dense[*j])).collect());
            for j in touched.drain(..) {
                dense[j] = 0.0;
            }
        }
        Self { rows, reward }
    }
}

/// `V^pi` and `Q^pi` by iterative evaluation, optionally warm-started.
pub fn policy_evaluation(
    mdp: &TabularMdp,
    pi: &StochasticPolicy,
    tol: f64,
    warm_start: Option<&ValueTable>,
) -> Result<(ValueTable, QTable), SolverError> {
    check_inputs(mdp, tol)?;
    pi.check_shape(mdp.n_states(), mdp.n_actions())?;
    let model = PolicyModel::new(mdp, pi);
    let n = mdp.n_states();
    let mut v = match warm_start {
        Some(w) if w.len() == n => w.v.clone(),
        _ => vec![0.0; n],
    };
    for (s, t) in mdp.terminal_mask().iter().enumerate() {
        if *t {
            v[s] = 0.0;
        }
    }
    let mut next = vec![0.0; n];
    let gamma = mdp.gamma();
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        for (s, x) in next.iter_mut().enumerate() {
            *x = if mdp.terminal_mask()[s] {
                0.0
            } else {
                model.reward[s] + gamma * model.rows[s].iter().map(|(j, p)| p * v[*j]).sum::<f64>()
            };
        }
        residual = sup_diff(&v, &next);
        std::mem::swap(&mut v, &mut next);
        if residual <= tol {
            let q = q_from_values(mdp, &v);
            return Ok((ValueTable { v }, q));
        }
    }
    Err(SolverError::NoConvergence {
        sweeps: MAX_SWEEPS,
        residual,
    })
}

/// `A^pi(s, a) = Q^pi(s, a) - V^pi(s)`.
pub fn advantage(mdp: &TabularMdp, pi: &StochasticPolicy, tol: f64) -> Result<QTable, SolverError> {
    let (v, q) = policy_evaluation(mdp, pi, tol, None)?;
    Ok(advantage_from(&v, &q))
}

pub fn advantage_from(v: &ValueTable, q: &QTable) -> QTable {
    let mut a = q.clone();
    for (s, row) in a.q.chunks_mut(q.n_actions).enumerate() {
        for x in row {
            *x -= v.v[s];
        }
    }
    a
}

/// Discounted visitation from the start state, solving
/// `d = p0 + gamma (P^pi)^T d` by fixed-point iteration.
pub fn occupancy(mdp: &TabularMdp, pi: &StochasticPolicy, tol: f64) -> Result<OccupancyTable, SolverError> {
    check_inputs(mdp, tol)?;
    pi.check_shape(mdp.n_states(), mdp.n_actions())?;
    let model = PolicyModel::new(mdp, pi);
    let n = mdp.n_states();
    let gamma = mdp.gamma();
    let mut d = vec![0.0; n];
    d[mdp.start().0] = 1.0;
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        next.iter_mut().for_each(|x| *x = 0.0);
        next[mdp.start().0] = 1.0;
        for (s, row) in model.rows.iter().enumerate() {
            let mass = gamma * d[s];
            if mass == 0.0 {
                continue;
            }
            for (j, p) in row {
                next[*j] += mass * p;
            }
        }
        residual = sup_diff(&d, &next);
        std::mem::swap(&mut d, &mut next);
        if residual <= tol {
            return Ok(OccupancyTable { d });
        }
    }
    Err(SolverError::NoConvergence {
        sweeps: MAX_SWEEPS,
        residual,
    })
}

/// `rho^pi = sum_s d(s) sum_a pi(s,a) R(s,a)`.
pub fn pg_objective(mdp: &TabularMdp, pi: &StochasticPolicy, tol: f64) -> Result<f64, SolverError> {
    let d = occupancy(mdp, pi, tol)?;
    Ok(mdp
        .states()
        .map(|s| {
            let expected: f64 = mdp.actions().map(|a| pi.prob(s, a) * mdp.reward(s, a)).sum();
            d.get(s) * expected
        })
        .sum())
}

pub fn policy_distance(
    mdp: &TabularMdp,
    pi_star: &StochasticPolicy,
    pi: &StochasticPolicy,
    tol: f64,
) -> Result<PolicyDistance, SolverError> {
    pi.check_shape(mdp.n_states(), mdp.n_actions())?;
    let d = occupancy(mdp, pi_star, tol)?;
    let unnormalized: f64 = mdp
        .states()
        .map(|s| {
            let gap: f64 = pi_star.row(s).iter().zip(pi.row(s)).map(|(x, y)| (x - y).abs()).sum();
            d.get(s) * gap
        })
        .sum();
    Ok(PolicyDistance {
        unnormalized,
        normalized: (1.0 - mdp.gamma()) * unnormalized,
    })
}

/// Expected discounted return of `pi` over the first `horizon` steps.
pub fn finite_horizon_values(mdp: &TabularMdp, pi: &StochasticPolicy, horizon: usize) -> ValueTable {
    let mut v = vec![0.0; mdp.n_states()];
    for _ in 0..horizon {
        let next: Vec<f64> = mdp
            .states()
            .map(|s| {
                if mdp.is_terminal(s) {
                    0.0
                } else {
                    mdp.actions().map(|a| pi.prob(s, a) * backup(mdp, s, a, &v)).sum()
                }
            })
            .collect();
        v = next;
    }
    ValueTable { v }
}

/// Lowest `horizon`-step discounted return over all (history-dependent)
/// policies, by backward induction.
pub fn finite_horizon_min_values(mdp: &TabularMdp, horizon: usize) -> ValueTable {
    let mut v = vec![0.0; mdp.n_states()];
    for _ in 0..horizon {
        let next: Vec<f64> = mdp
            .states()
            .map(|s| {
                if mdp.is_terminal(s) {
                    0.0
                } else {
                    mdp.actions().map(|a| backup(mdp, s, a, &v)).fold(f64::INFINITY, f64::min)
                }
            })
            .collect();
        v = next;
    }
    ValueTable { v }
}
