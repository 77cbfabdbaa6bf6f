//! The act / step / feedback / observe loop shared by every front end.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentError, FeedbackEvent};
use crate::feedback::{FeedbackError, FeedbackSource};
use crate::mdp::{MdpError, TabularMdp};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub steps: usize,
    /// Undiscounted sum of environment rewards.
    pub total_reward: f64,
    pub discounted_return: f64,
    pub reached_terminal: bool,
    /// The feedback source went away mid-episode.
    pub interrupted: bool,
}

/// Runs one episode from the start state until a terminal state, the step
/// cap, or the feedback source closing. One `rng` drives both the agent and
/// the environment.
pub fn run_episode(
    mdp: &TabularMdp,
    agent: &mut dyn Agent,
    source: &mut dyn FeedbackSource,
    max_steps: usize,
    rng: &mut SimRng,
) -> Result<EpisodeStats, EpisodeError> {
    agent.begin_episode();
    source.begin_episode(mdp, agent)?;
    let gamma = mdp.gamma();
    let mut stats = EpisodeStats {
        steps: 0,
        total_reward: 0.0,
        discounted_return: 0.0,
        reached_terminal: mdp.is_terminal(mdp.start()),
        interrupted: false,
    };
    let mut s = mdp.start();
    let mut discount = 1.0;
    while !stats.reached_terminal && stats.steps < max_steps {
        let a = agent.act(s, rng);
        let out = mdp.step(s, a, rng)?;
        stats.total_reward += out.reward;
        stats.discounted_return += discount * out.reward;
        discount *= gamma;
        let Some(f) = source.feedback(mdp, agent, s, a, out.next_state)? else {
            stats.interrupted = true;
            break;
        };
        agent.observe(&FeedbackEvent {
            s,
            a,
            next_state: out.next_state,
            f,
            t: stats.steps,
        })?;
        stats.steps += 1;
        stats.reached_terminal = out.done;
        s = out.next_state;
    }
    agent.end_episode();
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{build_agent, AgentConfig, AgentKind};
    use crate::feedback::{human_feedback_channel, AdvantageRefresh, FeedbackKind, SyntheticTrainer};
    use crate::mdp::{build_gridworld, GridworldSpec};
    use crate::rng::seeded;
    use std::time::Duration;

    #[test]
    fn start_on_goal_is_an_empty_episode() {
        let spec = GridworldSpec {
            width: 1,
            height: 1,
            start: crate::mdp::Cell::new(0, 0),
            goal: crate::mdp::Cell::new(0, 0),
            lava: vec![],
            ..GridworldSpec::default()
        };
        let mdp = build_gridworld(&spec).unwrap();
        let mut agent = build_agent(AgentKind::Random, &mdp, &AgentConfig::for_kind(AgentKind::Random, 0.95)).unwrap();
        let mut src = SyntheticTrainer::Reward;
        let stats = run_episode(&mdp, agent.as_mut(), &mut src, 10, &mut seeded(0)).unwrap();
        assert_eq!(stats.steps, 0);
        assert!(stats.reached_terminal);
    }

    #[test]
    fn step_cap_is_honoured() {
        let mdp = build_gridworld(&GridworldSpec::default()).unwrap();
        let mut agent = build_agent(AgentKind::Random, &mdp, &AgentConfig::for_kind(AgentKind::Random, 0.95)).unwrap();
        let mut src = SyntheticTrainer::for_kind(FeedbackKind::Reward, &mdp, AdvantageRefresh::default()).unwrap();
        let mut rng = seeded(1);
        for _ in 0..20 {
            let stats = run_episode(&mdp, agent.as_mut(), &mut src, 7, &mut rng).unwrap();
            assert!(stats.steps <= 7);
        }
    }

    #[test]
    fn reward_feedback_matches_environment_stream() {
        // The agent's discounted feedback sum equals the environment return.
        struct Recorder(Vec<f64>, SyntheticTrainer);
        impl FeedbackSource for Recorder {
            fn feedback(
                &mut self,
                mdp: &TabularMdp,
                agent: &dyn Agent,
                s: crate::mdp::StateId,
                a: crate::mdp::ActionId,
                next: crate::mdp::StateId,
            ) -> Result<Option<f64>, FeedbackError> {
                let f = self.1.feedback(mdp, agent, s, a, next)?;
                self.0.push(f.unwrap());
                Ok(f)
            }
        }
        let mdp = build_gridworld(&GridworldSpec::three_by_three()).unwrap();
        let mut agent = build_agent(AgentKind::Random, &mdp, &AgentConfig::for_kind(AgentKind::Random, 0.95)).unwrap();
        let mut rec = Recorder(Vec::new(), SyntheticTrainer::Reward);
        let stats = run_episode(&mdp, agent.as_mut(), &mut rec, 1000, &mut seeded(2)).unwrap();
        assert_eq!(rec.0.iter().sum::<f64>(), stats.total_reward);
        assert_eq!(rec.0.len(), stats.steps);
    }

    #[test]
    fn closed_human_channel_ends_episode() {
        let mdp = build_gridworld(&GridworldSpec::three_by_three()).unwrap();
        let mut agent = build_agent(AgentKind::Ecoach, &mdp, &AgentConfig::for_kind(AgentKind::Ecoach, 0.95)).unwrap();
        let (tx, mut rx) = human_feedback_channel(Some(Duration::from_secs(5)));
        drop(tx);
        let stats = run_episode(&mdp, agent.as_mut(), &mut rx, 100, &mut seeded(3)).unwrap();
        assert!(stats.interrupted);
        assert_eq!(stats.steps, 0);
        assert_eq!(agent.step_index(), 0);
    }

    #[test]
    fn silent_human_leaves_theta_unchanged() {
        let mdp = build_gridworld(&GridworldSpec::three_by_three()).unwrap();
        let mut agent = build_agent(AgentKind::Ecoach, &mdp, &AgentConfig::for_kind(AgentKind::Ecoach, 0.95)).unwrap();
        let (_tx, mut rx) = human_feedback_channel(Some(Duration::from_millis(1)));
        let before = agent.checkpoint();
        run_episode(&mdp, agent.as_mut(), &mut rx, 5, &mut seeded(4)).unwrap();
        assert_eq!(agent.checkpoint(), before);
    }
}
