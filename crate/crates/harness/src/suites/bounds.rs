//! Value loss of a policy close to the optimum, infinite and finite horizon.
//!
//! Each trial draws a 5-state, 3-action MDP, takes its optimal policy `pi*`
//! and mixes each state's row with a random distribution:
//! `pi2(s) = (1 - e_s) onehot(pi*(s)) + e_s u_s`, `e_s ~ U[0, 0.3]`.
//!
//! * Infinite horizon: `V*(s0) - V^pi2(s0) <= W * delta`, with
//!   `delta = sum_s d^pi*(s) sum_a |pi*(s,a) - pi2(s,a)|` and
//!   `W = max(|V*(s0)|, |Vmin(s0)|)`.
//! * Horizon `L`: with `delta = max_s sum_a |pi*(s,a) - pi2(s,a)|`,
//!   `(1-delta)^L V_L^pi*(s0) + (1 - (1-delta)^L) Vmin_L(s0) <= V_L^pi2(s0)`.

use ecoach_core::mdp::{random_mdp, RandomMdpSpec, TabularMdp};
use ecoach_core::policy::StochasticPolicy;
use ecoach_core::rng::{derive, uniform_simplex};
use ecoach_core::solvers::{finite_horizon_min_values, finite_horizon_values, min_values, occupancy, policy_evaluation, value_iteration};
use rand::Rng;

use super::{tally, CheckRow, SuiteError, SuiteOptions};

const N_STATES: usize = 5;
const N_ACTIONS: usize = 3;
const MAX_MIX: f64 = 0.3;
const TOL: f64 = 1e-12;
/// Allowance for solver residuals in the exact comparisons.
pub const SLACK: f64 = 1e-9;
pub const HORIZONS: [usize; 2] = [3, 10];

/// Headroom of each inequality for one trial; negative means violated.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundTrial {
    pub gamma: f64,
    pub delta: f64,
    pub infinite_margin: f64,
    /// One entry per horizon in [`HORIZONS`].
    pub finite_margins: Vec<f64>,
}

fn perturb(mdp: &TabularMdp, star: &StochasticPolicy, rng: &mut impl Rng) -> StochasticPolicy {
    let mut table = star.table().to_vec();
    for row in table.chunks_mut(mdp.n_actions()) {
        let e = rng.random_range(0.0..=MAX_MIX);
        let u = uniform_simplex(mdp.n_actions(), rng);
        for (p, q) in row.iter_mut().zip(u) {
            *p = (1.0 - e) * *p + e * q;
        }
    }
    StochasticPolicy::from_table(mdp.n_states(), mdp.n_actions(), table).expect("mixture of distributions")
}

fn l1_row(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn bound_trial(seed: u64, index: usize) -> Result<BoundTrial, SuiteError> {
    let mut rng = derive(seed, index as u64);
    let gamma = if index.is_multiple_of(2) { 0.5 } else { 0.9 };
    let mdp = random_mdp(
        RandomMdpSpec {
            n_states: N_STATES,
            n_actions: N_ACTIONS,
            gamma,
        },
        &mut rng,
    );
    let s0 = mdp.start();
    let opt = value_iteration(&mdp, TOL);
    let star = opt.policy.to_stochastic(N_ACTIONS);
    let pi2 = perturb(&mdp, &star, &mut rng);

    let v_star = opt.values.get(s0);
    let v_min = min_values(&mdp, TOL).get(s0);
    let (v2, _) = policy_evaluation(&mdp, &pi2, TOL, None)?;
    let d = occupancy(&mdp, &star, TOL)?;
    let delta: f64 = mdp.states().map(|s| d.get(s) * l1_row(star.row(s), pi2.row(s))).sum();
    let w = v_star.abs().max(v_min.abs());
    let infinite_margin = w * delta - (v_star - v2.get(s0)) + SLACK;

    let delta_max = mdp
        .states()
        .map(|s| l1_row(star.row(s), pi2.row(s)))
        .fold(0.0, f64::max);
    let finite_margins = HORIZONS
        .iter()
        .map(|&l| {
            let keep = (1.0 - delta_max).powi(l as i32);
            let lower = keep * finite_horizon_values(&mdp, &star, l).get(s0)
                + (1.0 - keep) * finite_horizon_min_values(&mdp, l).get(s0);
            finite_horizon_values(&mdp, &pi2, l).get(s0) - lower + SLACK
        })
        .collect();
    Ok(BoundTrial {
        gamma,
        delta,
        infinite_margin,
        finite_margins,
    })
}

pub fn theorem2_bound(opts: &SuiteOptions) -> Result<Vec<CheckRow>, SuiteError> {
    let trials: Vec<BoundTrial> = (0..opts.trials).map(|i| bound_trial(opts.seed, i)).collect::<Result<_, _>>()?;
    let n = trials.len();
    let summarize = |name: &str, margins: Vec<f64>| {
        let ok = margins.iter().filter(|m| **m >= 0.0).count();
        let worst = margins.into_iter().fold(f64::INFINITY, f64::min);
        CheckRow::new(tally(name, ok, n), worst, 0.0)
    };
    let mut rows = vec![summarize(
        "infinite-horizon value loss <= W*delta",
        trials.iter().map(|t| t.infinite_margin).collect(),
    )];
    for (k, l) in HORIZONS.iter().enumerate() {
        rows.push(summarize(
            &format!("finite-horizon lower bound L={l}"),
            trials.iter().map(|t| t.finite_margins[k]).collect(),
        ));
    }
    Ok(rows)
}
