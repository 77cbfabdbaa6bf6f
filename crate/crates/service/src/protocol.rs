//! Wire messages. Every message is one JSON object on one line, carrying
//! `protocol_version` and a `kind` discriminator.

use ecoach_core::agents::{AgentKind, AgentOverrides};
use ecoach_core::mdp::{Cell, GridworldSpec, StateId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_STEP_TIMEOUT_MS: u64 = 1500;
pub const DEFAULT_STEP_CAP: usize = 1000;

/// How a session waits for the trainer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Pacing {
    /// Unanswered steps time out and count as silence.
    Paced {
        #[serde(default = "default_timeout")]
        step_timeout_ms: u64,
    },
    /// The agent waits indefinitely for each verdict.
    StepOnFeedback,
}

fn default_timeout() -> u64 {
    DEFAULT_STEP_TIMEOUT_MS
}

impl Default for Pacing {
    fn default() -> Self {
        Self::Paced {
            step_timeout_ms: DEFAULT_STEP_TIMEOUT_MS,
        }
    }
}

impl Pacing {
    pub fn timeout_ms(self) -> Option<u64> {
        match self {
            Self::Paced { step_timeout_ms } => Some(step_timeout_ms),
            Self::StepOnFeedback => None,
        }
    }
}

/// What a timed-out step means to the learner.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SilencePolicy {
    /// Observe `f = 0`: traces still accumulate.
    #[default]
    Zero,
    /// Advance the step counter without touching traces or models.
    Skip,
}

fn default_step_cap() -> usize {
    DEFAULT_STEP_CAP
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    #[serde(default)]
    pub env: GridworldSpec,
    pub agent: AgentKind,
    #[serde(default)]
    pub config: AgentOverrides,
    #[serde(default)]
    pub mode: Pacing,
    #[serde(default)]
    pub silence: SilencePolicy,
    #[serde(default = "default_step_cap")]
    pub step_cap: usize,
    /// Stop the session after this many episodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    /// Session rng seed; drawn by the service when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Take the next step as soon as feedback is applied.
    #[serde(default = "yes")]
    pub auto_advance: bool,
}

impl SessionRequest {
    pub fn new(agent: AgentKind) -> Self {
        Self {
            env: GridworldSpec::default(),
            agent,
            config: AgentOverrides::default(),
            mode: Pacing::default(),
            silence: SilencePolicy::default(),
            step_cap: DEFAULT_STEP_CAP,
            episodes: None,
            seed: None,
            auto_advance: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackMessage {
    pub session: String,
    pub episode: usize,
    pub t: usize,
    pub f: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClientMessage {
    SessionStart(SessionRequest),
    Advance { session: String },
    Feedback(FeedbackMessage),
    Close { session: String },
}

/// Static grid description, sent once per session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub width: usize,
    pub height: usize,
    pub start: Cell,
    pub goal: Cell,
    pub lava: Vec<Cell>,
    /// The built-in grids have no interior walls; kept for renderers.
    pub walls: Vec<Cell>,
    /// Action names in action-index order.
    pub actions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session: String,
    pub layout: Layout,
    pub agent: AgentKind,
    pub mode: Pacing,
    pub silence: SilencePolicy,
    pub step_cap: usize,
    pub auto_advance: bool,
    pub seed: u64,
}

/// The step awaiting a verdict: action `a` in `s` led to `next_state`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingTransition {
    pub s: StateId,
    pub a: usize,
    pub next_state: StateId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMessage {
    pub session: String,
    pub episode: usize,
    /// Index of the pending step, or of the next step when nothing is pending.
    pub t: usize,
    pub cell: Cell,
    pub previous_action: Option<String>,
    pub pending: Option<PendingTransition>,
    pub episode_reward: f64,
    /// `pi(cell, .)` in action-index order.
    pub probs: Vec<f64>,
    /// The pending step ends the episode.
    pub episode_over: bool,
    /// Countdown for the pending step in paced mode.
    pub timeout_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AckMessage {
    pub session: String,
    pub episode: usize,
    pub t: usize,
    /// Value applied; 0 for a timed-out step.
    pub f: f64,
    /// The step timed out rather than being answered.
    pub silent: bool,
    pub state: StateId,
    pub cell: Cell,
    /// `pi(state, .)` after the update.
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEndMessage {
    pub session: String,
    pub episode: usize,
    pub steps: usize,
    pub total_reward: f64,
    pub reached_terminal: bool,
    /// The step cap cut the episode short.
    pub capped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    Malformed,
    UnsupportedVersion,
    InvalidSession,
    UnknownSession,
    StaleFeedback,
    OutOfRange,
    AwaitingFeedback,
    SessionEnded,
    Internal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMessage {
    pub session: Option<String>,
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ServerMessage {
    SessionStart(SessionInfo),
    Frame(FrameMessage),
    Ack(AckMessage),
    EpisodeEnd(EpisodeEndMessage),
    Error(ErrorMessage),
}

impl ServerMessage {
    pub fn session(&self) -> Option<&str> {
        match self {
            Self::SessionStart(m) => Some(&m.session),
            Self::Frame(m) => Some(&m.session),
            Self::Ack(m) => Some(&m.session),
            Self::EpisodeEnd(m) => Some(&m.session),
            Self::Error(m) => m.session.as_deref(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct ProtocolError {
    pub code: ErrorCode,
    pub message: String,
}

impl ProtocolError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn into_message(self, session: Option<String>) -> ServerMessage {
        ServerMessage::Error(ErrorMessage {
            session,
            code: self.code,
            message: self.message,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    protocol_version: u32,
    #[serde(flatten)]
    message: M,
}

#[derive(Deserialize)]
struct VersionOnly {
    protocol_version: Option<u32>,
}

/// One line of JSON, without the trailing newline.
pub fn encode<M: Serialize>(message: &M) -> String {
    serde_json::to_string(&Envelope {
        protocol_version: PROTOCOL_VERSION,
        message,
    })
    .expect("protocol messages always serialise")
}

fn decode<M: for<'de> Deserialize<'de>>(line: &str) -> Result<M, ProtocolError> {
    let version: VersionOnly =
        serde_json::from_str(line).map_err(|e| ProtocolError::new(ErrorCode::Malformed, e.to_string()))?;
    match version.protocol_version {
        Some(PROTOCOL_VERSION) => {}
        Some(v) => {
            return Err(ProtocolError::new(
                ErrorCode::UnsupportedVersion,
                format!("protocol version {v} is not supported (expected {PROTOCOL_VERSION})"),
            ))
        }
        None => return Err(ProtocolError::new(ErrorCode::Malformed, "missing protocol_version")),
    }
    let env: Envelope<M> =
        serde_json::from_str(line).map_err(|e| ProtocolError::new(ErrorCode::Malformed, e.to_string()))?;
    Ok(env.message)
}

pub fn decode_client(line: &str) -> Result<ClientMessage, ProtocolError> {
    decode(line)
}

pub fn decode_server(line: &str) -> Result<ServerMessage, ProtocolError> {
    decode(line)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feedback_wire_form_is_flat() {
        let msg = ClientMessage::Feedback(FeedbackMessage {
            session: "abc".into(),
            episode: 2,
            t: 5,
            f: -1.0,
        });
        assert_eq!(
            encode(&msg),
            r#"{"protocol_version":1,"kind":"feedback","session":"abc","episode":2,"t":5,"f":-1.0}"#
        );
        assert_eq!(decode_client(&encode(&msg)).unwrap(), msg);
    }

    #[test]
    fn session_start_defaults() {
        let msg = decode_client(r#"{"protocol_version":1,"kind":"session-start","agent":"e-coach"}"#).unwrap();
        assert_eq!(msg, ClientMessage::SessionStart(SessionRequest::new(AgentKind::Ecoach)));
    }

    #[test]
    fn full_session_start_parses() {
        let line = r#"{"protocol_version":1,"kind":"session-start","agent":"e-coach","env":{"width":5,"height":5,"goal":[4,4],"lava":[]},"config":{"alpha":0.2},"mode":{"type":"paced","step_timeout_ms":1500},"silence":"zero","step_cap":1000,"episodes":20,"seed":7,"auto_advance":true}"#;
        let ClientMessage::SessionStart(req) = decode_client(line).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!((req.env.width, req.env.goal, req.env.gamma), (5, Cell::new(4, 4), 0.95));
        assert_eq!(req.config.alpha, Some(0.2));
        assert_eq!((req.episodes, req.seed), (Some(20), Some(7)));
    }

    #[test]
    fn pacing_forms() {
        let line = r#"{"protocol_version":1,"kind":"session-start","agent":"tamer","mode":{"type":"step-on-feedback"},"silence":"skip"}"#;
        let ClientMessage::SessionStart(req) = decode_client(line).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(req.mode, Pacing::StepOnFeedback);
        assert_eq!(req.silence, SilencePolicy::Skip);
        let paced: Pacing = serde_json::from_str(r#"{"type":"paced"}"#).unwrap();
        assert_eq!(paced.timeout_ms(), Some(1500));
    }

    #[test]
    fn unknown_agent_and_bad_version_are_rejected() {
        let err = decode_client(r#"{"protocol_version":1,"kind":"session-start","agent":"sarsa"}"#).unwrap_err();
        assert_eq!(err.code, ErrorCode::Malformed);
        let err = decode_client(r#"{"protocol_version":9,"kind":"advance","session":"x"}"#).unwrap_err();
        assert_eq!(err.code, ErrorCode::UnsupportedVersion);
        let err = decode_client(r#"{"kind":"advance","session":"x"}"#).unwrap_err();
        assert_eq!(err.code, ErrorCode::Malformed);
    }

    #[test]
    fn server_messages_round_trip() {
        let msgs = [
            ServerMessage::Ack(AckMessage {
                session: "s".into(),
                episode: 0,
                t: 3,
                f: 1.0,
                silent: false,
                state: StateId(4),
                cell: Cell::new(4, 0),
                probs: vec![0.1, 0.2, 0.3, 0.4],
            }),
            ServerMessage::EpisodeEnd(EpisodeEndMessage {
                session: "s".into(),
                episode: 1,
                steps: 18,
                total_reward: 1.0,
                reached_terminal: true,
                capped: false,
            }),
            ProtocolError::new(ErrorCode::StaleFeedback, "late").into_message(Some("s".into())),
        ];
        for m in msgs {
            let line = encode(&m);
            assert!(!line.contains('\n'));
            assert_eq!(decode_server(&line).unwrap(), m);
        }
    }
}
