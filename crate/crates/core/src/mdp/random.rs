use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{StateId, TabularMdp};
use crate::rng::uniform_simplex;

/// Shape of the random instances used by the theorem suites: transition rows
/// drawn from a flat Dirichlet, rewards uniform in `[-1, 1]`, start state 0,
/// no terminal states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomMdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
}

pub fn random_mdp<R: Rng + ?Sized>(spec: RandomMdpSpec, rng: &mut R) -> TabularMdp {
    let RandomMdpSpec {
        n_states,
        n_actions,
        gamma,
    } = spec;
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(uniform_simplex(n_states, rng));
    }
    let reward = (0..n_states * n_actions)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    TabularMdp::new(
        n_states,
        n_actions,
        transition,
        reward,
        gamma,
        StateId(0),
        vec![false; n_states],
    )
    .expect("random tables are well-shaped")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn rows_are_stochastic() {
        let mut rng = seeded(5);
        for gamma in [0.5, 0.9] {
            let mdp = random_mdp(
                RandomMdpSpec {
                    n_states: 5,
                    n_actions: 3,
                    gamma,
                },
                &mut rng,
            );
            assert!(mdp.validate().is_empty(), "{}", mdp.validate());
            assert!(mdp.reward_table().iter().all(|r| (-1.0..=1.0).contains(r)));
        }
    }
}
