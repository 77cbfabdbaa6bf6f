//! The registry of live sessions. Each session sits behind its own lock, so
//! transitions within a session are serialised while sessions run
//! independently.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use ecoach_core::agents::AgentCheckpoint;
use ecoach_core::rng::derive;
use rand::Rng;

use crate::protocol::{decode_client, ClientMessage, ErrorCode, ProtocolError, ServerMessage};
use crate::session::{Session, SessionStatus};

pub struct Hub {
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    created: AtomicU64,
    master_seed: u64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // A panic inside one transition must not wedge the whole service.
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Hub {
    /// Session ids and default session seeds are drawn from `master_seed`.
    pub fn new(master_seed: u64) -> Self {
        Self {
            sessions: Mutex::new(HashMap::new()),
            created: AtomicU64::new(0),
            master_seed,
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ProtocolError> {
        lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| ProtocolError::new(ErrorCode::UnknownSession, format!("no session `{id}`")))
    }

    /// Handles one request. `emit` sees every resulting message while the
    /// session is still locked, so per-session output order matches the
    /// order of transitions.
    pub fn handle_with(&self, msg: ClientMessage, emit: &mut dyn FnMut(ServerMessage)) {
        let (session_id, result) = match msg {
            ClientMessage::SessionStart(request) => {
                let n = self.created.fetch_add(1, Ordering::Relaxed);
                let mut rng = derive(self.master_seed, n);
                let id = format!("{n:x}-{:016x}", rng.random::<u64>());
                let seed = request.seed.unwrap_or_else(|| rng.random());
                match Session::create(id.clone(), request, seed) {
                    Ok((session, out)) => {
                        let cell = Arc::new(Mutex::new(session));
                        let guard = lock(&cell);
                        lock(&self.sessions).insert(id, Arc::clone(&cell));
                        out.into_iter().for_each(&mut *emit);
                        drop(guard);
                        return;
                    }
                    Err(e) => (None, Err(e)),
                }
            }
            ClientMessage::Advance { session } => {
                let r = self.session(&session).and_then(|cell| {
                    let mut s = lock(&cell);
                    s.advance().map(|out| out.into_iter().for_each(&mut *emit))
                });
                (Some(session), r)
            }
            ClientMessage::Feedback(fb) => {
                let r = self.session(&fb.session).and_then(|cell| {
                    let mut s = lock(&cell);
                    s.apply_feedback(fb.episode, fb.t, fb.f)
                        .map(|out| out.into_iter().for_each(&mut *emit))
                });
                (Some(fb.session), r)
            }
            ClientMessage::Close { session } => {
                let r = self.session(&session).map(|_| self.remove(&session));
                (Some(session), r)
            }
        };
        if let Err(e) = result {
            emit(e.into_message(session_id));
        }
    }

    pub fn handle(&self, msg: ClientMessage) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        self.handle_with(msg, &mut |m| out.push(m));
        out
    }

    /// Decodes and handles one protocol line.
    pub fn handle_line_with(&self, line: &str, emit: &mut dyn FnMut(ServerMessage)) {
        match decode_client(line) {
            Ok(msg) => self.handle_with(msg, emit),
            Err(e) => emit(e.into_message(None)),
        }
    }

    pub fn handle_line(&self, line: &str) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        self.handle_line_with(line, &mut |m| out.push(m));
        out
    }

    /// A paced step's countdown ran out.
    pub fn tick_with(&self, session: &str, episode: usize, t: usize, emit: &mut dyn FnMut(ServerMessage)) {
        if let Ok(cell) = self.session(session) {
            let mut s = lock(&cell);
            s.timeout_tick(episode, t).into_iter().for_each(emit);
        }
    }

    pub fn tick(&self, session: &str, episode: usize, t: usize) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        self.tick_with(session, episode, t, &mut |m| out.push(m));
        out
    }

    pub fn remove(&self, session: &str) {
        // Never hold the registry lock while waiting on a session.
        let removed = lock(&self.sessions).remove(session);
        if let Some(cell) = removed {
            lock(&cell).close();
        }
    }

    pub fn len(&self) -> usize {
        lock(&self.sessions).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn checkpoint(&self, session: &str) -> Option<AgentCheckpoint> {
        self.session(session).ok().map(|c| lock(&c).checkpoint())
    }

    pub fn status(&self, session: &str) -> Option<SessionStatus> {
        self.session(session).ok().map(|c| lock(&c).status())
    }
}
