//! Monte-Carlo check that the frozen-policy E-COACH update is an unbiased
//! policy-gradient step, under reward and advantage feedback, and that its
//! expectation agrees with REINFORCE.

use ecoach_core::agents::{reinforce_delta, Agent, AgentConfig, AgentKind, EcoachAgent, FeedbackEvent, TrajectoryStep, UpdateMode};
use ecoach_core::gradient::SoftmaxTabularPolicy;
use ecoach_core::mdp::{random_mdp, ActionId, RandomMdpSpec, StateId, TabularMdp};
use ecoach_core::rng::{derive, seeded, SimRng};
use ecoach_core::solvers::{advantage_from, occupancy, policy_evaluation, QTable};
use rand::Rng;
use rayon::prelude::*;

use super::{CheckRow, SuiteError, SuiteOptions};

pub const DEFAULT_EPISODES: usize = 100_000;
/// Episodes are cut once `gamma^t` falls below this.
pub const TRUNCATION: f64 = 1e-6;
pub const Z_LIMIT: f64 = 4.0;
const ALPHA: f64 = 0.05;
const THETA_RANGE: f64 = 2.0;
const EXACT_TOL: f64 = 1e-13;

/// Componentwise sample mean and its standard error.
#[derive(Clone, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

impl McEstimate {
    /// Largest componentwise `|mean - target| / se`.
    pub fn max_z_against(&self, target: &[f64]) -> f64 {
        max_z(self.mean.iter().zip(target).zip(&self.se).map(|((m, t), se)| (m - t, *se)))
    }

    /// Largest componentwise z-score of the difference of two independent
    /// estimates.
    pub fn max_z_between(&self, other: &McEstimate) -> f64 {
        max_z(
            self.mean
                .iter()
                .zip(&other.mean)
                .zip(self.se.iter().zip(&other.se))
                .map(|((a, b), (sa, sb))| (a - b, sa.hypot(*sb))),
        )
    }
}

fn max_z(items: impl Iterator<Item = (f64, f64)>) -> f64 {
    items
        .map(|(diff, se)| if se > 0.0 { diff.abs() / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY })
        .fold(0.0, f64::max)
}

struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, m2), x) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = x - *m;
            *m += d / n;
            *m2 += d * (x - *m);
        }
    }

    fn finish(self) -> McEstimate {
        let n = self.n as f64;
        let se = self.m2.iter().map(|m2| (m2 / (n - 1.0) / n).sqrt()).collect();
        McEstimate { mean: self.mean, se }
    }
}

/// One random 2-state, 2-action instance with a fixed random policy.
#[derive(Clone, Debug)]
pub struct GradientDraw {
    pub gamma: f64,
    pub horizon: usize,
    pub theta: Vec<f64>,
    /// `alpha * d(s) * pi(s, b) * A(s, b)`, the expected update.
    pub exact: Vec<f64>,
    pub reward: McEstimate,
    pub advantage: McEstimate,
    pub reinforce: McEstimate,
}

/// Smallest `L` with `gamma^L < TRUNCATION`.
pub fn truncation_horizon(gamma: f64) -> usize {
    let mut l = 0;
    let mut g = 1.0;
    while g >= TRUNCATION {
        g *= gamma;
        l += 1;
    }
    l
}

enum Signal<'a> {
    Reward,
    Advantage(&'a QTable),
}

fn ecoach_estimate(
    mdp: &TabularMdp,
    policy: &SoftmaxTabularPolicy,
    signal: Signal<'_>,
    horizon: usize,
    episodes: usize,
    rng: &mut SimRng,
) -> Result<McEstimate, SuiteError> {
    let config = AgentConfig {
        alpha: ALPHA,
        update_mode: UpdateMode::FrozenThetaPerEpisode,
        ..AgentConfig::for_kind(AgentKind::Ecoach, mdp.gamma())
    };
    let mut agent = EcoachAgent::with_policy(policy.clone(), config);
    let mut acc = Welford::new(mdp.n_states() * mdp.n_actions());
    for _ in 0..episodes {
        // Never ending the episode keeps theta frozen; the pending update is
        // the per-episode sample.
        agent.begin_episode();
        let mut s = mdp.start();
        for t in 0..horizon {
            let a = agent.act(s, rng);
            let out = mdp.step(s, a, rng).map_err(|e| SuiteError::Simulation(e.to_string()))?;
            let f = match signal {
                Signal::Reward => out.reward,
                Signal::Advantage(adv) => adv.get(s, a),
            };
            agent
                .observe(&FeedbackEvent {
                    s,
                    a,
                    next_state: out.next_state,
                    f,
                    t,
                })
                .map_err(|e| SuiteError::Simulation(e.to_string()))?;
            s = out.next_state;
        }
        acc.push(agent.pending_update().as_slice());
    }
    Ok(acc.finish())
}

fn reinforce_estimate(
    mdp: &TabularMdp,
    policy: &SoftmaxTabularPolicy,
    horizon: usize,
    episodes: usize,
    rng: &mut SimRng,
) -> Result<McEstimate, SuiteError> {
    let mut acc = Welford::new(mdp.n_states() * mdp.n_actions());
    let mut traj = Vec::with_capacity(horizon);
    for _ in 0..episodes {
        traj.clear();
        let mut s = mdp.start();
        for _ in 0..horizon {
            let a = policy.sample_action(s, rng);
            let out = mdp.step(s, a, rng).map_err(|e| SuiteError::Simulation(e.to_string()))?;
            traj.push(TrajectoryStep { s, a, r: out.reward });
            s = out.next_state;
        }
        acc.push(reinforce_delta(policy, &traj, ALPHA, mdp.gamma()).as_slice());
    }
    Ok(acc.finish())
}

pub fn gradient_draw(seed: u64, index: usize, episodes: usize) -> Result<GradientDraw, SuiteError> {
    let mut rng = derive(seed, index as u64);
    let gamma = if index.is_multiple_of(2) { 0.5 } else { 0.9 };
    let mdp = random_mdp(
        RandomMdpSpec {
            n_states: 2,
            n_actions: 2,
            gamma,
        },
        &mut rng,
    );
    let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-THETA_RANGE..=THETA_RANGE)).collect();
    let policy = SoftmaxTabularPolicy::from_logits(2, 2, theta.clone());
    let pi = policy.to_stochastic();
    let (v, q) = policy_evaluation(&mdp, &pi, EXACT_TOL, None)?;
    let adv = advantage_from(&v, &q);
    let d = occupancy(&mdp, &pi, EXACT_TOL)?;
    let exact = (0..4)
        .map(|i| {
            let (s, b) = (StateId(i / 2), ActionId(i % 2));
            ALPHA * d.get(s) * pi.prob(s, b) * adv.get(s, b)
        })
        .collect();
    let horizon = truncation_horizon(gamma);
    let mut sims: Vec<SimRng> = (0..3).map(|_| seeded(rng.random())).collect();
    let reward = ecoach_estimate(&mdp, &policy, Signal::Reward, horizon, episodes, &mut sims[0])?;
    let advantage = ecoach_estimate(&mdp, &policy, Signal::Advantage(&adv), horizon, episodes, &mut sims[1])?;
    let reinforce = reinforce_estimate(&mdp, &policy, horizon, episodes, &mut sims[2])?;
    Ok(GradientDraw {
        gamma,
        horizon,
        theta,
        exact,
        reward,
        advantage,
        reinforce,
    })
}

pub fn gradient_identity(opts: &SuiteOptions) -> Result<Vec<CheckRow>, SuiteError> {
    let episodes = opts.episodes.unwrap_or(DEFAULT_EPISODES);
    let draws: Vec<GradientDraw> = (0..opts.trials)
        .into_par_iter()
        .map(|i| gradient_draw(opts.seed, i, episodes))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(3 * draws.len());
    for (i, d) in draws.iter().enumerate() {
        rows.push(CheckRow::at_most(
            format!("reward-vs-exact draw {i} gamma {}", d.gamma),
            d.reward.max_z_against(&d.exact),
            Z_LIMIT,
        ));
    }
    for (i, d) in draws.iter().enumerate() {
        rows.push(CheckRow::at_most(
            format!("advantage-vs-reward draw {i} gamma {}", d.gamma),
            d.advantage.max_z_between(&d.reward),
            Z_LIMIT,
        ));
    }
    for (i, d) in draws.iter().enumerate() {
        rows.push(CheckRow::at_most(
            format!("reinforce-vs-ecoach draw {i} gamma {}", d.gamma),
            d.reinforce.max_z_between(&d.reward),
            Z_LIMIT,
        ));
    }
    Ok(rows)
}
