use ecoach_core::agents::{build_agent, AgentConfig, AgentKind, FeedbackEvent};
use ecoach_core::gradient::{EligibilityTrace, SoftmaxTabularPolicy, THETA_LIMIT};
use ecoach_core::mdp::{random_mdp, ActionId, RandomMdpSpec, StateId};
use ecoach_core::rng::seeded;
use proptest::prelude::*;

fn logits(n_states: usize, n_actions: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-5.0f64..5.0, n_states * n_actions)
}

fn shape() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..5, 2usize..5).prop_flat_map(|(ns, na)| (Just(ns), Just(na), logits(ns, na)))
}

proptest! {
    #[test]
    fn score_matches_finite_differences((ns, na, theta) in shape(), s in 0usize..5, a in 0usize..5) {
        let (s, a) = (StateId(s % ns), ActionId(a % na));
        let policy = SoftmaxTabularPolicy::from_logits(ns, na, theta.clone());
        let score = policy.score(s, a);
        let h = 1e-6;
        for b in 0..na {
            let bump = |d: f64| {
                let mut t = theta.clone();
                t[s.0 * na + b] += d;
                SoftmaxTabularPolicy::from_logits(ns, na, t).log_prob(s, a)
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            prop_assert!((fd - score.row[b]).abs() < 1e-6, "component {}: {} vs {}", b, fd, score.row[b]);
        }
    }

    #[test]
    fn probabilities_ignore_a_shift_of_the_row((ns, na, theta) in shape(), c in -20.0f64..20.0) {
        let shifted: Vec<f64> = theta.iter().map(|x| x + c).collect();
        let p = SoftmaxTabularPolicy::from_logits(ns, na, theta);
        let q = SoftmaxTabularPolicy::from_logits(ns, na, shifted);
        for s in 0..ns {
            for (x, y) in p.action_probs(StateId(s)).iter().zip(q.action_probs(StateId(s))) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rows_are_stochastic((ns, na, theta) in shape()) {
        let pi = SoftmaxTabularPolicy::from_logits(ns, na, theta).to_stochastic();
        prop_assert!(pi.check().is_ok());
        for s in 0..ns {
            let total: f64 = pi.row(StateId(s)).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(pi.row(StateId(s)).iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn trace_is_the_sum_of_its_scores(
        (ns, na, theta) in shape(),
        steps in proptest::collection::vec((0usize..5, 0usize..5), 1..20),
    ) {
        let policy = SoftmaxTabularPolicy::from_logits(ns, na, theta);
        let mut forward = EligibilityTrace::zeros(ns, na);
        let mut backward = EligibilityTrace::zeros(ns, na);
        let mut direct = vec![0.0; ns * na];
        let steps: Vec<(StateId, ActionId)> = steps.iter().map(|&(s, a)| (StateId(s % ns), ActionId(a % na))).collect();
        for &(s, a) in &steps {
            forward = forward.updated(&policy, s, a);
            for (b, x) in policy.score(s, a).row.iter().enumerate() {
                direct[s.0 * na + b] += x;
            }
        }
        for &(s, a) in steps.iter().rev() {
            backward.add_score(&policy.score(s, a));
        }
        for (i, d) in direct.iter().enumerate() {
            let (s, b) = (StateId(i / na), ActionId(i % na));
            prop_assert!((forward.get(s, b) - d).abs() < 1e-12);
            prop_assert!((backward.get(s, b) - d).abs() < 1e-12);
        }
        // Each score row sums to zero, so every trace row does too.
        for s in 0..ns {
            let row: f64 = (0..na).map(|b| forward.get(StateId(s), ActionId(b))).sum();
            prop_assert!(row.abs() < 1e-10);
        }
    }

    #[test]
    fn extreme_feedback_keeps_parameters_finite(
        seed in any::<u64>(),
        fs in proptest::collection::vec(-10.0f64..=10.0, 1..200),
        kind in prop_oneof![Just(AgentKind::Ecoach), Just(AgentKind::Coach), Just(AgentKind::Reinforce)],
    ) {
        let mdp = random_mdp(RandomMdpSpec { n_states: 4, n_actions: 3, gamma: 0.99 }, &mut seeded(seed));
        let config = AgentConfig { alpha: 1e3, ..AgentConfig::for_kind(kind, mdp.gamma()) };
        let mut agent = build_agent(kind, &mdp, &config).unwrap();
        let mut rng = seeded(seed ^ 1);
        agent.begin_episode();
        let mut s = mdp.start();
        for (t, f) in fs.iter().enumerate() {
            let a = agent.act(s, &mut rng);
            let out = mdp.step(s, a, &mut rng).unwrap();
            agent.observe(&FeedbackEvent { s, a, next_state: out.next_state, f: *f, t }).unwrap();
            s = out.next_state;
        }
        agent.end_episode();
        let theta = agent.checkpoint().theta.unwrap();
        prop_assert!(theta.iter().all(|x| x.is_finite() && x.abs() <= THETA_LIMIT));
        prop_assert!(agent.policy().check().is_ok());
    }
}
