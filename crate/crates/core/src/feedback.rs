//! Synthetic trainers for the reward, policy and advantage schemes, and the
//! hand-off that lets a live human stand in for any of them.

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, PolicyVersion};
use crate::mdp::{ActionId, StateId, TabularMdp};
use crate::policy::{DeterministicPolicy, StochasticPolicy};
use crate::solvers::{advantage_from, policy_evaluation, value_iteration, QTable, SolverError, ValueTable, ORACLE_TOL, THEOREM_TOL};

/// Human feedback outside `[-HUMAN_FEEDBACK_LIMIT, HUMAN_FEEDBACK_LIMIT]` is refused.
pub const HUMAN_FEEDBACK_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeedbackError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("feedback {0} outside [-{HUMAN_FEEDBACK_LIMIT}, {HUMAN_FEEDBACK_LIMIT}]")]
    OutOfRange(f64),
    #[error("no step is waiting for feedback")]
    NoPendingStep,
    #[error("step {0} already has feedback")]
    AlreadyAnswered(usize),
    #[error("feedback channel closed")]
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackKind {
    Reward,
    Policy,
    Advantage,
    Human,
}

impl FeedbackKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Reward => "reward",
            Self::Policy => "policy",
            Self::Advantage => "advantage",
            Self::Human => "human",
        }
    }
}

/// `R(s, a)`.
pub fn reward_feedback(mdp: &TabularMdp, s: StateId, a: ActionId) -> f64 {
    mdp.reward(s, a)
}

/// Indicator of agreement with the target.
pub fn policy_feedback(target: &DeterministicPolicy, s: StateId, a: ActionId) -> f64 {
    if target.action(s) == a {
        1.0
    } else {
        0.0
    }
}

/// Greedy optimal policy, used as the policy-feedback trainer's target.
pub fn make_target_policy(mdp: &TabularMdp, tol: f64) -> DeterministicPolicy {
    value_iteration(mdp, tol).policy
}

/// When the advantage oracle re-evaluates the agent's policy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvantageRefresh {
    /// On any query after the policy version moved.
    #[default]
    OnPolicyChange,
    /// At most once per `k` queries.
    EveryKSteps(usize),
    /// Only at episode boundaries; the episode-start policy is used throughout.
    EpisodeStart,
}

#[derive(Clone, Debug)]
struct CachedAdvantage {
    version: PolicyVersion,
    advantage: QTable,
}

/// `A^pi(s, a)` for the agent's current policy, re-evaluated only when the
/// policy has changed since the cached evaluation.
#[derive(Clone, Debug)]
pub struct AdvantageOracle {
    tol: f64,
    refresh: AdvantageRefresh,
    cached: Option<CachedAdvantage>,
    warm: Option<ValueTable>,
    since_refresh: usize,
    evaluations: usize,
}

impl AdvantageOracle {
    pub fn new(tol: f64, refresh: AdvantageRefresh) -> Self {
        Self {
            tol,
            refresh,
            cached: None,
            warm: None,
            since_refresh: 0,
            evaluations: 0,
        }
    }

    /// How many policy evaluations have run so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    fn evaluate(&mut self, mdp: &TabularMdp, policy: &StochasticPolicy, version: PolicyVersion) -> Result<(), SolverError> {
        let (v, q) = policy_evaluation(mdp, policy, self.tol, self.warm.as_ref())?;
        self.cached = Some(CachedAdvantage {
            version,
            advantage: advantage_from(&v, &q),
        });
        self.warm = Some(v);
        self.since_refresh = 0;
        self.evaluations += 1;
        Ok(())
    }

    fn stale(&self, version: PolicyVersion) -> bool {
        self.cached.as_ref().is_none_or(|c| c.version != version)
    }

    /// Refreshes at an episode boundary if the policy moved.
    pub fn begin_episode(&mut self, mdp: &TabularMdp, policy: &StochasticPolicy, version: PolicyVersion) -> Result<(), SolverError> {
        if self.refresh == AdvantageRefresh::EpisodeStart && self.stale(version) {
            self.evaluate(mdp, policy, version)?;
        }
        Ok(())
    }

    /// The snapshot closure is only called when a re-evaluation is due.
    pub fn advantage_feedback(
        &mut self,
        mdp: &TabularMdp,
        snapshot: impl FnOnce() -> StochasticPolicy,
        version: PolicyVersion,
        s: StateId,
        a: ActionId,
    ) -> Result<f64, SolverError> {
        let due = match (self.cached.is_none(), self.refresh) {
            (true, _) => true,
            (false, AdvantageRefresh::OnPolicyChange) => self.stale(version),
            (false, AdvantageRefresh::EveryKSteps(k)) => self.stale(version) && self.since_refresh >= k.max(1),
            (false, AdvantageRefresh::EpisodeStart) => false,
        };
        if due {
            self.evaluate(mdp, &snapshot(), version)?;
        }
        self.since_refresh += 1;
        Ok(self.cached.as_ref().expect("evaluated above").advantage.get(s, a))
    }
}

/// Anything that can answer "how good was `a` in `s`?" during training.
pub trait FeedbackSource {
    fn begin_episode(&mut self, _mdp: &TabularMdp, _agent: &dyn Agent) -> Result<(), FeedbackError> {
        Ok(())
    }

    /// `Ok(None)` means the source has gone away and the episode should stop.
    fn feedback(
        &mut self,
        mdp: &TabularMdp,
        agent: &dyn Agent,
        s: StateId,
        a: ActionId,
        next_state: StateId,
    ) -> Result<Option<f64>, FeedbackError>;
}

/// One of the three synthetic trainers.
#[derive(Clone, Debug)]
pub enum SyntheticTrainer {
    Reward,
    Policy(DeterministicPolicy),
    Advantage(AdvantageOracle),
}

impl SyntheticTrainer {
    /// The trainer for `kind`, with the value-iteration target for `Policy`.
    /// `Human` has no synthetic counterpart.
    pub fn for_kind(kind: FeedbackKind, mdp: &TabularMdp, refresh: AdvantageRefresh) -> Option<Self> {
        match kind {
            FeedbackKind::Reward => Some(Self::Reward),
            FeedbackKind::Policy => Some(Self::Policy(make_target_policy(mdp, THEOREM_TOL))),
            FeedbackKind::Advantage => Some(Self::Advantage(AdvantageOracle::new(ORACLE_TOL, refresh))),
            FeedbackKind::Human => None,
        }
    }

    pub fn kind(&self) -> FeedbackKind {
        match self {
            Self::Reward => FeedbackKind::Reward,
            Self::Policy(_) => FeedbackKind::Policy,
            Self::Advantage(_) => FeedbackKind::Advantage,
        }
    }
}

impl FeedbackSource for SyntheticTrainer {
    fn begin_episode(&mut self, mdp: &TabularMdp, agent: &dyn Agent) -> Result<(), FeedbackError> {
        if let Self::Advantage(oracle) = self {
            oracle.begin_episode(mdp, &agent.policy(), agent.policy_version())?;
        }
        Ok(())
    }

    fn feedback(
        &mut self,
        mdp: &TabularMdp,
        agent: &dyn Agent,
        s: StateId,
        a: ActionId,
        _next_state: StateId,
    ) -> Result<Option<f64>, FeedbackError> {
        let f = match self {
            Self::Reward => reward_feedback(mdp, s, a),
            Self::Policy(target) => policy_feedback(target, s, a),
            Self::Advantage(oracle) => oracle.advantage_feedback(mdp, || agent.policy(), agent.policy_version(), s, a)?,
        };
        Ok(Some(f))
    }
}

/// A step waiting for the human's verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingStep {
    pub t: usize,
    pub s: StateId,
    pub a: ActionId,
    pub next_state: StateId,
}

/// What the consumer got for a pending step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HumanReply {
    Value(f64),
    /// The wait elapsed with no input.
    Silence,
    Closed,
}

#[derive(Default)]
struct ChannelState {
    pending: Option<PendingStep>,
    answer: Option<f64>,
    closed: bool,
}

#[derive(Default)]
struct Shared {
    state: Mutex<ChannelState>,
    ready: Condvar,
}

impl Shared {
    fn close(&self) {
        self.state.lock().expect("channel lock").closed = true;
        self.ready.notify_all();
    }
}

/// The trainer's end. Dropping it closes the channel.
pub struct HumanFeedbackSender {
    shared: Arc<Shared>,
}

/// The learner's end. Dropping it closes the channel.
pub struct HumanFeedbackReceiver {
    shared: Arc<Shared>,
    timeout: Option<Duration>,
}

/// Single-producer, single-consumer hand-off. `timeout` bounds each wait;
/// `None` waits until feedback arrives or the sender goes away.
pub fn human_feedback_channel(timeout: Option<Duration>) -> (HumanFeedbackSender, HumanFeedbackReceiver) {
    let shared = Arc::new(Shared::default());
    (
        HumanFeedbackSender { shared: shared.clone() },
        HumanFeedbackReceiver { shared, timeout },
    )
}

impl HumanFeedbackSender {
    /// Delivers `f` to the step currently waiting.
    pub fn send(&self, f: f64) -> Result<PendingStep, FeedbackError> {
        if !f.is_finite() || f.abs() > HUMAN_FEEDBACK_LIMIT {
            return Err(FeedbackError::OutOfRange(f));
        }
        let mut st = self.shared.state.lock().expect("channel lock");
        if st.closed {
            return Err(FeedbackError::Closed);
        }
        let step = st.pending.ok_or(FeedbackError::NoPendingStep)?;
        if st.answer.is_some() {
            return Err(FeedbackError::AlreadyAnswered(step.t));
        }
        st.answer = Some(f);
        self.shared.ready.notify_all();
        Ok(step)
    }

    pub fn pending(&self) -> Option<PendingStep> {
        let st = self.shared.state.lock().expect("channel lock");
        if st.answer.is_some() {
            None
        } else {
            st.pending
        }
    }

    /// Blocks until a step is waiting for an answer, or the channel closes.
    pub fn wait_pending(&self, timeout: Duration) -> Option<PendingStep> {
        let deadline = Instant::now() + timeout;
        let mut st = self.shared.state.lock().expect("channel lock");
        loop {
            if st.closed {
                return None;
            }
            if let (Some(p), None) = (st.pending, st.answer) {
                return Some(p);
            }
            let left = deadline.checked_duration_since(Instant::now())?;
            st = self.shared.ready.wait_timeout(st, left).expect("channel lock").0;
        }
    }

    pub fn close(&self) {
        self.shared.close();
    }
}

impl Drop for HumanFeedbackSender {
    fn drop(&mut self) {
        self.shared.close();
    }
}

impl HumanFeedbackReceiver {
    /// Publishes `step` and waits for its answer.
    pub fn await_feedback(&self, step: PendingStep) -> HumanReply {
        let mut st = self.shared.state.lock().expect("channel lock");
        if st.closed {
            return HumanReply::Closed;
        }
        st.pending = Some(step);
        st.answer = None;
        self.shared.ready.notify_all();
        let deadline = self.timeout.map(|d| Instant::now() + d);
        let reply = loop {
            if let Some(f) = st.answer {
                break HumanReply::Value(f);
            }
            if st.closed {
                break HumanReply::Closed;
            }
            match deadline {
                None => st = self.shared.ready.wait(st).expect("channel lock"),
                Some(deadline) => match deadline.checked_duration_since(Instant::now()) {
                    Some(left) if !left.is_zero() => {
                        st = self.shared.ready.wait_timeout(st, left).expect("channel lock").0;
                    }
                    _ => break HumanReply::Silence,
                },
            }
        };
        st.pending = None;
        st.answer = None;
        reply
    }
}

impl Drop for HumanFeedbackReceiver {
    fn drop(&mut self) {
        self.shared.close();
    }
}

impl FeedbackSource for HumanFeedbackReceiver {
    /// Silence is delivered as zero feedback.
    fn feedback(
        &mut self,
        _mdp: &TabularMdp,
        agent: &dyn Agent,
        s: StateId,
        a: ActionId,
        next_state: StateId,
    ) -> Result<Option<f64>, FeedbackError> {
        let step = PendingStep {
            t: agent.step_index(),
            s,
            a,
            next_state,
        };
        Ok(match self.await_feedback(step) {
            HumanReply::Value(f) => Some(f),
            HumanReply::Silence => Some(0.0),
            HumanReply::Closed => None,
        })
    }
}
