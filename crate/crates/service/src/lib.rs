//! Live training sessions driven by a human trainer over a line-oriented JSON
//! protocol.
//!
//! [`session::Session`] is the per-session state machine, [`hub::Hub`] the
//! registry that routes requests to sessions, and [`server`] the WebSocket
//! transport with the paced-mode timers.

pub mod hub;
pub mod protocol;
pub mod server;
pub mod session;

pub use hub::Hub;
pub use protocol::PROTOCOL_VERSION;
pub use server::{router, serve, serve_blocking};
pub use session::{Session, SessionStatus};
