//! Policy feedback as a reward: the MDP whose reward is `1` exactly when the
//! trainer's target action is taken has that target as its greedy optimum.

use std::collections::VecDeque;

use ecoach_core::feedback::{make_target_policy, policy_feedback};
use ecoach_core::mdp::{build_gridworld, random_mdp, ActionId, GridworldSpec, RandomMdpSpec, StateId, TabularMdp};
use ecoach_core::policy::DeterministicPolicy;
use ecoach_core::rng::derive;
use ecoach_core::solvers::{value_iteration, THEOREM_TOL};
use rand::Rng;

use super::{tally, CheckRow, SuiteError, SuiteOptions};

const GAMMAS: [f64; 3] = [0.5, 0.9, 0.99];

/// States reachable from the start when acting by `target`.
pub fn reachable_under(mdp: &TabularMdp, target: &DeterministicPolicy) -> Vec<bool> {
    let mut seen = vec![false; mdp.n_states()];
    let mut queue = VecDeque::from([mdp.start()]);
    seen[mdp.start().0] = true;
    while let Some(s) = queue.pop_front() {
        if mdp.is_terminal(s) {
            continue;
        }
        for (j, _) in mdp.successors(s, target.action(s)) {
            if !seen[*j] {
                seen[*j] = true;
                queue.push_back(StateId(*j));
            }
        }
    }
    seen
}

/// Non-terminal reachable states where the indicator MDP's greedy optimum
/// differs from `target`.
pub fn indicator_mismatches(mdp: &TabularMdp, target: &DeterministicPolicy) -> usize {
    let reward = mdp
        .states()
        .flat_map(|s| mdp.actions().map(move |a| (s, a)))
        .map(|(s, a)| policy_feedback(target, s, a))
        .collect();
    let indicator = mdp.with_rewards(reward).expect("same shape");
    let greedy = value_iteration(&indicator, THEOREM_TOL).policy;
    reachable_under(mdp, target)
        .iter()
        .enumerate()
        .filter(|(s, r)| **r && !mdp.is_terminal(StateId(*s)) && greedy.action(StateId(*s)) != target.action(StateId(*s)))
        .count()
}

/// The same comparison on the 10x10 lava gridworld, whose goal ends the
/// episode. Near the goal the indicator MDP prefers to keep collecting `+1`
/// by stepping away and back rather than finishing, so this is expected to be
/// nonzero.
pub fn terminating_goal_mismatches() -> usize {
    let mdp = build_gridworld(&GridworldSpec::default()).expect("default layout is valid");
    let target = make_target_policy(&mdp, THEOREM_TOL);
    indicator_mismatches(&mdp, &target)
}

pub fn policy_feedback_equivalence(opts: &SuiteOptions) -> Result<Vec<CheckRow>, SuiteError> {
    let mut failed = 0;
    let mut mismatched_states = 0;
    for k in 0..opts.trials {
        let mut rng = derive(opts.seed, k as u64);
        let spec = RandomMdpSpec {
            n_states: 3 + k % 8,
            n_actions: 2 + k % 3,
            gamma: GAMMAS[k % GAMMAS.len()],
        };
        let mdp = random_mdp(spec, &mut rng);
        let target = DeterministicPolicy::new(
            (0..spec.n_states)
                .map(|_| ActionId(rng.random_range(0..spec.n_actions)))
                .collect(),
        );
        let m = indicator_mismatches(&mdp, &target);
        mismatched_states += m;
        failed += usize::from(m > 0);
    }
    Ok(vec![CheckRow::at_most(
        tally("greedy optimum equals target on reachable states", opts.trials - failed, opts.trials),
        mismatched_states as f64,
        0.0,
    )])
}
