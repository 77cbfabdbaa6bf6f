//! One live training session: a gridworld, a learner and the step awaiting
//! the trainer's verdict.

use ecoach_core::agents::{build_agent, Agent, AgentCheckpoint, AgentConfig, FeedbackEvent};
use ecoach_core::feedback::HUMAN_FEEDBACK_LIMIT;
use ecoach_core::mdp::{ActionId, GridAction, Gridworld, StateId};
use ecoach_core::rng::{derive, SimRng};

use crate::protocol::{
    AckMessage, EpisodeEndMessage, ErrorCode, FrameMessage, Layout, Pacing, PendingTransition, ProtocolError,
    ServerMessage, SessionInfo, SessionRequest, SilencePolicy,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionStatus {
    /// Ready for `advance`.
    Idle,
    AwaitingFeedback,
    Ended,
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    t: usize,
    s: StateId,
    a: ActionId,
    next_state: StateId,
    done: bool,
    reached_terminal: bool,
}

pub struct Session {
    id: String,
    world: Gridworld,
    agent: Box<dyn Agent>,
    request: SessionRequest,
    seed: u64,
    rng: SimRng,
    episode: usize,
    s: StateId,
    episode_reward: f64,
    previous_action: Option<ActionId>,
    pending: Option<Pending>,
    ended: bool,
}

fn action_name(a: ActionId) -> String {
    match GridAction::from_id(a) {
        Some(GridAction::Up) => "up",
        Some(GridAction::Down) => "down",
        Some(GridAction::Left) => "left",
        Some(GridAction::Right) => "right",
        None => "unknown",
    }
    .to_owned()
}

impl Session {
    /// Builds the session and the messages announcing it: `session-start`
    /// with the full layout, then a frame with the agent on the start cell.
    /// The rng is the one a single-seed harness run with master seed `seed`
    /// would use.
    pub fn create(id: String, request: SessionRequest, seed: u64) -> Result<(Self, Vec<ServerMessage>), ProtocolError> {
        let invalid = |m: String| ProtocolError::new(ErrorCode::InvalidSession, m);
        let world = Gridworld::new(request.env.clone()).map_err(|e| invalid(e.to_string()))?;
        if !(0.0..1.0).contains(&request.env.gamma) {
            return Err(invalid(format!("gamma {} outside [0, 1)", request.env.gamma)));
        }
        if request.env.start == request.env.goal {
            return Err(invalid("start cell is the goal".into()));
        }
        if request.step_cap == 0 || request.episodes == Some(0) {
            return Err(invalid("step_cap and episodes must be at least 1".into()));
        }
        if request.mode.timeout_ms() == Some(0) {
            return Err(invalid("step_timeout_ms must be positive".into()));
        }
        let mdp = world.mdp();
        let config: AgentConfig = request.config.apply(AgentConfig::for_kind(request.agent, mdp.gamma()));
        config.check(request.agent).map_err(|e| invalid(e.to_string()))?;
        let agent = build_agent(request.agent, mdp, &config).map_err(|e| invalid(e.to_string()))?;
        let s = mdp.start();
        let session = Self {
            id,
            world,
            agent,
            request,
            seed,
            rng: derive(seed, 0),
            episode: 0,
            s,
            episode_reward: 0.0,
            previous_action: None,
            pending: None,
            ended: false,
        };
        let messages = vec![ServerMessage::SessionStart(session.info()), session.frame()];
        Ok((session, messages))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn info(&self) -> SessionInfo {
        let spec = self.world.spec();
        SessionInfo {
            session: self.id.clone(),
            layout: Layout {
                width: spec.width,
                height: spec.height,
                start: spec.start,
                goal: spec.goal,
                lava: spec.lava.clone(),
                walls: Vec::new(),
                actions: (0..self.world.mdp().n_actions()).map(|a| action_name(ActionId(a))).collect(),
            },
            agent: self.request.agent,
            mode: self.request.mode,
            silence: self.request.silence,
            step_cap: self.request.step_cap,
            auto_advance: self.request.auto_advance,
            seed: self.seed,
        }
    }

    pub fn status(&self) -> SessionStatus {
        if self.ended {
            SessionStatus::Ended
        } else if self.pending.is_some() {
            SessionStatus::AwaitingFeedback
        } else {
            SessionStatus::Idle
        }
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    /// `(episode, t)` of the step awaiting feedback.
    pub fn pending_key(&self) -> Option<(usize, usize)> {
        self.pending.map(|p| (self.episode, p.t))
    }

    pub fn agent(&self) -> &dyn Agent {
        self.agent.as_ref()
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        self.agent.checkpoint()
    }

    fn frame(&self) -> ServerMessage {
        let cell_state = self.pending.map_or(self.s, |p| p.next_state);
        ServerMessage::Frame(FrameMessage {
            session: self.id.clone(),
            episode: self.episode,
            t: self.pending.map_or(self.agent.step_index(), |p| p.t),
            cell: self.world.cell_of(cell_state),
            previous_action: self.previous_action.map(action_name),
            pending: self.pending.map(|p| PendingTransition {
                s: p.s,
                a: p.a.0,
                next_state: p.next_state,
            }),
            episode_reward: self.episode_reward,
            probs: self.agent.action_probs(cell_state),
            episode_over: self.pending.is_some_and(|p| p.done),
            timeout_ms: self.pending.and(self.request.mode.timeout_ms()),
        })
    }

    /// Samples an action, steps the grid and emits the frame for the new
    /// pending step.
    pub fn advance(&mut self) -> Result<Vec<ServerMessage>, ProtocolError> {
        match self.status() {
            SessionStatus::Ended => return Err(ProtocolError::new(ErrorCode::SessionEnded, "session has ended")),
            SessionStatus::AwaitingFeedback => {
                return Err(ProtocolError::new(
                    ErrorCode::AwaitingFeedback,
                    "the current step still awaits feedback",
                ))
            }
            SessionStatus::Idle => {}
        }
        let t = self.agent.step_index();
        if t == 0 {
            self.agent.begin_episode();
        }
        let mdp = self.world.mdp();
        let a = self.agent.act(self.s, &mut self.rng);
        let out = mdp
            .step(self.s, a, &mut self.rng)
            .map_err(|e| ProtocolError::new(ErrorCode::Internal, e.to_string()))?;
        self.episode_reward += out.reward;
        self.previous_action = Some(a);
        self.pending = Some(Pending {
            t,
            s: self.s,
            a,
            next_state: out.next_state,
            done: out.done || t + 1 >= self.request.step_cap,
            reached_terminal: out.done,
        });
        Ok(vec![self.frame()])
    }

    fn check_pending(&self, episode: usize, t: usize) -> Result<Pending, ProtocolError> {
        if self.ended {
            return Err(ProtocolError::new(ErrorCode::SessionEnded, "session has ended"));
        }
        match self.pending {
            Some(p) if episode == self.episode && t == p.t => Ok(p),
            Some(p) => Err(ProtocolError::new(
                ErrorCode::StaleFeedback,
                format!(
                    "feedback for (episode {episode}, t {t}) but (episode {}, t {}) is pending",
                    self.episode, p.t
                ),
            )),
            None => Err(ProtocolError::new(
                ErrorCode::StaleFeedback,
                format!("feedback for (episode {episode}, t {t}) but no step is pending"),
            )),
        }
    }

    /// Applies the trainer's verdict on the pending step.
    pub fn apply_feedback(&mut self, episode: usize, t: usize, f: f64) -> Result<Vec<ServerMessage>, ProtocolError> {
        let p = self.check_pending(episode, t)?;
        if !(f.is_finite() && f.abs() <= HUMAN_FEEDBACK_LIMIT) {
            return Err(ProtocolError::new(
                ErrorCode::OutOfRange,
                format!("feedback {f} outside [-{HUMAN_FEEDBACK_LIMIT}, {HUMAN_FEEDBACK_LIMIT}]"),
            ));
        }
        self.agent
            .observe(&event(&p, f))
            .map_err(|e| ProtocolError::new(ErrorCode::Internal, e.to_string()))?;
        let auto = self.request.auto_advance;
        self.finish_step(p, f, false, auto)
    }

    /// Fires when a paced step's countdown for `(episode, t)` runs out. A
    /// no-op unless that exact step is still pending.
    pub fn timeout_tick(&mut self, episode: usize, t: usize) -> Vec<ServerMessage> {
        if !matches!(self.request.mode, Pacing::Paced { .. }) {
            return Vec::new();
        }
        let Ok(p) = self.check_pending(episode, t) else {
            return Vec::new();
        };
        let ev = event(&p, 0.0);
        let applied = match self.request.silence {
            SilencePolicy::Zero => self.agent.observe(&ev),
            SilencePolicy::Skip => self.agent.skip(&ev),
        };
        let result = applied
            .map_err(|e| ProtocolError::new(ErrorCode::Internal, e.to_string()))
            .and_then(|()| self.finish_step(p, 0.0, true, true));
        result.unwrap_or_else(|e| vec![e.into_message(Some(self.id.clone()))])
    }

    fn finish_step(&mut self, p: Pending, f: f64, silent: bool, advance: bool) -> Result<Vec<ServerMessage>, ProtocolError> {
        let mut out = vec![ServerMessage::Ack(AckMessage {
            session: self.id.clone(),
            episode: self.episode,
            t: p.t,
            f,
            silent,
            state: p.s,
            cell: self.world.cell_of(p.s),
            probs: self.agent.action_probs(p.s),
        })];
        self.pending = None;
        self.s = p.next_state;
        if p.done {
            self.agent.end_episode();
            out.push(ServerMessage::EpisodeEnd(EpisodeEndMessage {
                session: self.id.clone(),
                episode: self.episode,
                steps: p.t + 1,
                total_reward: self.episode_reward,
                reached_terminal: p.reached_terminal,
                capped: !p.reached_terminal,
            }));
            self.episode += 1;
            self.s = self.world.mdp().start();
            self.episode_reward = 0.0;
            self.previous_action = None;
            if self.request.episodes.is_some_and(|n| self.episode >= n) {
                self.ended = true;
            }
        }
        if advance && !self.ended {
            out.extend(self.advance()?);
        }
        Ok(out)
    }

    /// Ends the session; later requests are rejected.
    pub fn close(&mut self) {
        self.ended = true;
        self.pending = None;
    }
}

fn event(p: &Pending, f: f64) -> FeedbackEvent {
    FeedbackEvent {
        s: p.s,
        a: p.a,
        next_state: p.next_state,
        f,
        t: p.t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ecoach_core::agents::AgentKind;
    use ecoach_core::mdp::{Cell, GridworldSpec};

    fn step_on_feedback(kind: AgentKind) -> SessionRequest {
        SessionRequest {
            mode: Pacing::StepOnFeedback,
            ..SessionRequest::new(kind)
        }
    }

    fn frame(m: &ServerMessage) -> &FrameMessage {
        match m {
            ServerMessage::Frame(f) => f,
            other => panic!("expected frame, got {other:?}"),
        }
    }

    #[test]
    fn creation_shows_agent_on_start_cell() {
        let (session, msgs) = Session::create("a".into(), step_on_feedback(AgentKind::Ecoach), 1).unwrap();
        assert!(matches!(&msgs[0], ServerMessage::SessionStart(info) if info.layout.width == 10 && info.layout.lava.len() == 3));
        let f = frame(&msgs[1]);
        assert_eq!((f.episode, f.t, f.cell, f.pending), (0, 0, Cell::new(0, 0), None));
        assert_eq!(f.probs, vec![0.25; 4]);
        assert_eq!(session.status(), SessionStatus::Idle);
    }

    #[test]
    fn advance_then_feedback() {
        let (mut session, _) = Session::create("a".into(), step_on_feedback(AgentKind::Ecoach), 2).unwrap();
        let msgs = session.advance().unwrap();
        let f = frame(&msgs[0]).clone();
        let p = f.pending.unwrap();
        assert_eq!(p.s, StateId(0));
        assert_eq!(f.timeout_ms, None);
        assert_eq!(session.status(), SessionStatus::AwaitingFeedback);
        assert_eq!(session.advance().unwrap_err().code, ErrorCode::AwaitingFeedback);

        let msgs = session.apply_feedback(0, 0, 1.0).unwrap();
        let ServerMessage::Ack(ack) = &msgs[0] else { panic!() };
        assert!(ack.probs[p.a] > 0.25);
        // Auto-advance produced the next pending frame.
        assert_eq!(frame(&msgs[1]).t, 1);
        assert_eq!(session.pending_key(), Some((0, 1)));
    }

    #[test]
    fn zero_feedback_leaves_probabilities() {
        let (mut session, _) = Session::create("a".into(), step_on_feedback(AgentKind::Ecoach), 3).unwrap();
        session.advance().unwrap();
        let msgs = session.apply_feedback(0, 0, 0.0).unwrap();
        let ServerMessage::Ack(ack) = &msgs[0] else { panic!() };
        assert_eq!(ack.probs, vec![0.25; 4]);
    }

    #[test]
    fn duplicate_and_out_of_range_feedback_are_rejected() {
        let (mut session, _) = Session::create("a".into(), step_on_feedback(AgentKind::Ecoach), 4).unwrap();
        session.advance().unwrap();
        assert_eq!(session.apply_feedback(0, 0, 11.0).unwrap_err().code, ErrorCode::OutOfRange);
        assert_eq!(session.apply_feedback(0, 0, f64::NAN).unwrap_err().code, ErrorCode::OutOfRange);
        session.apply_feedback(0, 0, 1.0).unwrap();
        let theta = session.checkpoint();
        assert_eq!(session.apply_feedback(0, 0, 1.0).unwrap_err().code, ErrorCode::StaleFeedback);
        assert_eq!(session.checkpoint(), theta);
    }

    #[test]
    fn ticks_only_fire_for_the_pending_step_in_paced_mode() {
        let (mut session, _) = Session::create("a".into(), SessionRequest::new(AgentKind::Ecoach), 5).unwrap();
        let msgs = session.advance().unwrap();
        assert_eq!(frame(&msgs[0]).timeout_ms, Some(1500));
        assert!(session.timeout_tick(0, 7).is_empty());
        let before = session.checkpoint();
        let msgs = session.timeout_tick(0, 0);
        let ServerMessage::Ack(ack) = &msgs[0] else { panic!() };
        assert!(ack.silent);
        assert_eq!(session.checkpoint(), before);
        assert_eq!(frame(&msgs[1]).t, 1);
        // Answered before the tick: the tick becomes a no-op.
        session.apply_feedback(0, 1, -1.0).unwrap();
        assert!(session.timeout_tick(0, 1).is_empty());

        let (mut sof, _) = Session::create("b".into(), step_on_feedback(AgentKind::Ecoach), 5).unwrap();
        sof.advance().unwrap();
        assert!(sof.timeout_tick(0, 0).is_empty());
        assert_eq!(sof.pending_key(), Some((0, 0)));
    }

    #[test]
    fn skip_silence_does_not_grow_the_trace() {
        let req = SessionRequest {
            silence: SilencePolicy::Skip,
            ..SessionRequest::new(AgentKind::Ecoach)
        };
        let (mut session, _) = Session::create("a".into(), req, 6).unwrap();
        session.advance().unwrap();
        session.timeout_tick(0, 0);
        // With an empty trace, +1 at t = 1 moves only the row of step 1.
        let (s1, a1) = {
            let p = session.pending.unwrap();
            (p.s, p.a)
        };
        session.apply_feedback(0, 1, 1.0).unwrap();
        let theta = session.checkpoint().theta.unwrap();
        let moved: Vec<usize> = (0..theta.len()).filter(|i| theta[*i] != 0.0).map(|i| i / 4).collect();
        assert!(moved.iter().all(|s| *s == s1.0));
        assert!(theta[s1.0 * 4 + a1.0] > 0.0);
    }

    #[test]
    fn episode_end_resets_to_start_and_counts_episodes() {
        let req = SessionRequest {
            env: GridworldSpec::three_by_three(),
            step_cap: 3,
            episodes: Some(2),
            mode: Pacing::StepOnFeedback,
            ..SessionRequest::new(AgentKind::Ecoach)
        };
        let (mut session, _) = Session::create("a".into(), req, 7).unwrap();
        session.advance().unwrap();
        let mut ends = Vec::new();
        while session.status() == SessionStatus::AwaitingFeedback {
            let (e, t) = session.pending_key().unwrap();
            for m in session.apply_feedback(e, t, 0.0).unwrap() {
                if let ServerMessage::EpisodeEnd(end) = m {
                    ends.push(end);
                }
            }
        }
        assert_eq!(ends.len(), 2);
        assert!(ends.iter().all(|e| e.steps <= 3 && e.capped != e.reached_terminal));
        assert_eq!(session.status(), SessionStatus::Ended);
        assert_eq!(session.advance().unwrap_err().code, ErrorCode::SessionEnded);
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let mut req = step_on_feedback(AgentKind::Ecoach);
        req.env.goal = req.env.start;
        assert_eq!(Session::create("a".into(), req, 0).err().unwrap().code, ErrorCode::InvalidSession);
        let mut req = step_on_feedback(AgentKind::Ecoach);
        req.config.alpha = Some(-1.0);
        assert_eq!(Session::create("a".into(), req, 0).err().unwrap().code, ErrorCode::InvalidSession);
        let mut req = step_on_feedback(AgentKind::Ecoach);
        req.env.width = 0;
        assert_eq!(Session::create("a".into(), req, 0).err().unwrap().code, ErrorCode::InvalidSession);
    }
}
