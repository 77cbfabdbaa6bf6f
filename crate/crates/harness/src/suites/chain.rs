//! The five-state chain where discounting the feedback matters: with
//! `gamma = 0.5` the optimum goes right from the center, but an undiscounted
//! trace learner is pulled left by the larger undiscounted total.

use ecoach_core::agents::{build_agent, AgentConfig, AgentKind};
use ecoach_core::episode::run_episode;
use ecoach_core::feedback::SyntheticTrainer;
use ecoach_core::mdp::{build_five_state_chain, ChainAction, ChainState};
use ecoach_core::rng::derive;

use super::{CheckRow, SuiteError, SuiteOptions};

pub const DEFAULT_EPISODES: usize = 2000;
pub const ALPHA: f64 = 0.05;
pub const PREFERENCE: f64 = 0.9;
const STEP_CAP: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChainLearner {
    Ecoach,
    Coach { lambda: f64 },
}

impl ChainLearner {
    fn label(self) -> String {
        match self {
            Self::Ecoach => "e-coach".into(),
            Self::Coach { lambda } => format!("coach lambda={lambda}"),
        }
    }
}

/// Final `P(right | center)` after training on reward feedback.
///
/// Every reward on the chain is positive and the two first moves differ by
/// little, so with a large `alpha` whichever move is sampled early gets
/// locked in; the discounted preference only shows reliably for small steps.
pub fn chain_center_preference(
    learner: ChainLearner,
    gamma: f64,
    alpha: f64,
    episodes: usize,
    seed: u64,
    replicate: usize,
) -> Result<f64, SuiteError> {
    let mdp = build_five_state_chain(gamma);
    let (kind, lambda) = match learner {
        ChainLearner::Ecoach => (AgentKind::Ecoach, 1.0),
        ChainLearner::Coach { lambda } => (AgentKind::Coach, lambda),
    };
    let config = AgentConfig {
        alpha,
        lambda,
        ..AgentConfig::for_kind(kind, gamma)
    };
    let mut agent = build_agent(kind, &mdp, &config).map_err(|e| SuiteError::Simulation(e.to_string()))?;
    let mut trainer = SyntheticTrainer::Reward;
    let mut rng = derive(seed, replicate as u64);
    for _ in 0..episodes {
        run_episode(&mdp, agent.as_mut(), &mut trainer, STEP_CAP, &mut rng)
            .map_err(|e| SuiteError::Simulation(e.to_string()))?;
    }
    Ok(agent.action_probs(ChainState::Center.id())[ChainAction::Right.id().0])
}

pub fn coach_counterexample(opts: &SuiteOptions) -> Result<Vec<CheckRow>, SuiteError> {
    let episodes = opts.episodes.unwrap_or(DEFAULT_EPISODES);
    let learners = [
        ChainLearner::Ecoach,
        ChainLearner::Coach { lambda: 0.9 },
        ChainLearner::Coach { lambda: 1.0 },
    ];
    let mut rows = Vec::new();
    for gamma in [0.5, 0.9] {
        for learner in learners {
            let wants_right = gamma == 0.5 && learner == ChainLearner::Ecoach;
            let mut worst = f64::INFINITY;
            for r in 0..opts.trials {
                let p_right = chain_center_preference(learner, gamma, ALPHA, episodes, opts.seed, r)?;
                worst = worst.min(if wants_right { p_right } else { 1.0 - p_right });
            }
            let dir = if wants_right { "right" } else { "left" };
            rows.push(CheckRow::at_least(
                format!("{} gamma={gamma} min P({dir}|center)", learner.label()),
                worst,
                PREFERENCE,
            ));
        }
    }
    Ok(rows)
}
