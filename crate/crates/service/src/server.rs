//! WebSocket transport: each text frame from the client holds one or more
//! protocol lines; each server message goes out as one text frame.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::mpsc::{unbounded_channel, UnboundedSender};

use crate::hub::Hub;
use crate::protocol::{encode, ServerMessage};

pub const WS_PATH: &str = "/ws";

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route(WS_PATH, get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(hub)
}

async fn upgrade(ws: WebSocketUpgrade, State(hub): State<Arc<Hub>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, hub))
}

type Outbox = UnboundedSender<ServerMessage>;

/// Queues `msg` and, for a paced pending frame, arms its countdown.
fn dispatch(hub: &Arc<Hub>, out: &Outbox, msg: ServerMessage) {
    if let ServerMessage::Frame(frame) = &msg {
        if let (Some(_), Some(ms)) = (frame.pending, frame.timeout_ms) {
            let (hub, out) = (Arc::clone(hub), out.clone());
            let (session, episode, t) = (frame.session.clone(), frame.episode, frame.t);
            tokio::spawn(async move {
                tokio::time::sleep(Duration::from_millis(ms)).await;
                let hub2 = Arc::clone(&hub);
                hub.tick_with(&session, episode, t, &mut |m| dispatch(&hub2, &out, m));
            });
        }
    }
    // A closed outbox means the client is gone; the session is torn down
    // by the connection task.
    let _ = out.send(msg);
}

async fn connection(socket: WebSocket, hub: Arc<Hub>) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = unbounded_channel::<ServerMessage>();
    let writer = tokio::spawn(async move {
        while let Some(msg) = rx.recv().await {
            if sink.send(Message::Text(encode(&msg).into())).await.is_err() {
                break;
            }
        }
    });
    let mut owned = Vec::new();
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(text) => text,
            Message::Close(_) => break,
            _ => continue,
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            hub.handle_line_with(line, &mut |m| {
                if let ServerMessage::SessionStart(info) = &m {
                    owned.push(info.session.clone());
                }
                dispatch(&hub, &tx, m);
            });
        }
    }
    for id in owned {
        hub.remove(&id);
    }
    drop(tx);
    let _ = writer.await;
}

pub async fn serve(listener: TcpListener, hub: Arc<Hub>) -> io::Result<()> {
    axum::serve(listener, router(hub)).await
}

/// Runs the service on its own runtime until the process is stopped.
pub fn serve_blocking(addr: SocketAddr, master_seed: u64) -> io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = TcpListener::bind(addr).await?;
        eprintln!("listening on ws://{}{WS_PATH}", listener.local_addr()?);
        serve(listener, Arc::new(Hub::new(master_seed))).await
    })
}
