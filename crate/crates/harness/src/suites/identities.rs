//! `E_{a~pi} A^pi(s, a) = 0`, and a state-dependent baseline contributes
//! nothing to the softmax policy gradient.

use ecoach_core::gradient::SoftmaxTabularPolicy;
use ecoach_core::mdp::{random_mdp, RandomMdpSpec};
use ecoach_core::rng::derive;
use ecoach_core::solvers::{advantage_from, policy_evaluation};
use rand::Rng;

use super::{CheckRow, SuiteError, SuiteOptions};

pub const MEAN_ADVANTAGE_LIMIT: f64 = 1e-8;
pub const BASELINE_LIMIT: f64 = 1e-10;
const TOL: f64 = 1e-12;

/// `sum_a d pi(s, a) / d theta(s, b) * c` for every `b`, using
/// `d pi(s, a) / d theta(s, b) = pi(s, a) (1[a = b] - pi(s, b))`.
pub fn baseline_gradient(probs: &[f64], c: f64) -> Vec<f64> {
    (0..probs.len())
        .map(|b| {
            probs
                .iter()
                .enumerate()
                .map(|(a, p)| p * (f64::from(u8::from(a == b)) - probs[b]) * c)
                .sum()
        })
        .collect()
}

pub fn advantage_identities(opts: &SuiteOptions) -> Result<Vec<CheckRow>, SuiteError> {
    let mut worst_mean = 0.0f64;
    let mut worst_baseline = 0.0f64;
    for k in 0..opts.trials {
        let mut rng = derive(opts.seed, k as u64);
        let spec = RandomMdpSpec {
            n_states: rng.random_range(2..=8),
            n_actions: rng.random_range(2..=4),
            gamma: rng.random_range(0.5..0.95),
        };
        let mdp = random_mdp(spec, &mut rng);
        let logits = (0..spec.n_states * spec.n_actions).map(|_| rng.random_range(-3.0..=3.0)).collect();
        let policy = SoftmaxTabularPolicy::from_logits(spec.n_states, spec.n_actions, logits);
        let pi = policy.to_stochastic();
        let (v, q) = policy_evaluation(&mdp, &pi, TOL, None)?;
        let adv = advantage_from(&v, &q);
        for s in mdp.states() {
            let mean: f64 = pi.row(s).iter().zip(adv.row(s)).map(|(p, a)| p * a).sum();
            worst_mean = worst_mean.max(mean.abs());
            let random_c = rng.random_range(-10.0..=10.0);
            for c in [v.get(s), random_c] {
                let g = baseline_gradient(pi.row(s), c);
                worst_baseline = g.iter().fold(worst_baseline, |m, x| m.max(x.abs()));
            }
        }
    }
    Ok(vec![
        CheckRow::at_most("max |E_pi A(s,.)|", worst_mean, MEAN_ADVANTAGE_LIMIT),
        CheckRow::at_most("max |sum_a grad pi(s,a) * c|", worst_baseline, BASELINE_LIMIT),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_gradient_of_uniform_is_zero() {
        assert!(baseline_gradient(&[0.25; 4], 3.0).iter().all(|g| g.abs() < 1e-16));
    }

    #[test]
    fn baseline_gradient_terms_match_hand_values() {
        // probs (0.2, 0.8), b = 0: 0.2 * 0.8 - 0.8 * 0.2 = 0.
        let g = baseline_gradient(&[0.2, 0.8], 1.0);
        assert!(g.iter().all(|x| x.abs() < 1e-16));
    }
}
