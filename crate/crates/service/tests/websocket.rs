use std::sync::Arc;
use std::time::Duration;

use ecoach_core::agents::{build_agent, AgentCheckpoint, AgentConfig, AgentKind, AgentOverrides};
use ecoach_core::episode::run_episode;
use ecoach_core::feedback::SyntheticTrainer;
use ecoach_core::mdp::{ActionId, Gridworld};
use ecoach_core::rng::derive;
use ecoach_service::protocol::{
    decode_server, encode, ClientMessage, ErrorCode, FeedbackMessage, Pacing, ServerMessage, SessionRequest,
    SilencePolicy,
};
use ecoach_service::{serve, Hub};
use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start_server() -> (Arc<Hub>, String) {
    let hub = Arc::new(Hub::new(11));
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("ws://{}/ws", listener.local_addr().unwrap());
    tokio::spawn(serve(listener, Arc::clone(&hub)));
    (hub, url)
}

async fn connect(url: &str) -> Socket {
    connect_async(url).await.unwrap().0
}

async fn send(ws: &mut Socket, msg: &ClientMessage) {
    ws.send(Message::Text(encode(msg).into())).await.unwrap();
}

async fn recv(ws: &mut Socket) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("server replied in time")
            .unwrap()
            .unwrap();
        if let Message::Text(text) = msg {
            return decode_server(&text).unwrap();
        }
    }
}

/// Opens a session and returns its id along with the initial frame's probabilities.
async fn open(ws: &mut Socket, request: SessionRequest) -> (String, Vec<f64>) {
    send(ws, &ClientMessage::SessionStart(request)).await;
    let ServerMessage::SessionStart(info) = recv(ws).await else {
        panic!("expected session-start");
    };
    let ServerMessage::Frame(frame) = recv(ws).await else {
        panic!("expected initial frame");
    };
    assert!(frame.pending.is_none());
    (info.session, frame.probs)
}

fn manual(kind: AgentKind, seed: u64) -> SessionRequest {
    SessionRequest {
        mode: Pacing::StepOnFeedback,
        auto_advance: false,
        step_cap: 60,
        episodes: Some(4),
        seed: Some(seed),
        config: AgentOverrides {
            alpha: Some(0.5),
            ..AgentOverrides::default()
        },
        ..SessionRequest::new(kind)
    }
}

/// Drives a session with reward feedback over the socket and returns the
/// agent's checkpoint after every episode.
async fn replay_reward_oracle(hub: &Hub, ws: &mut Socket, request: SessionRequest) -> Vec<AgentCheckpoint> {
    let world = Gridworld::new(request.env.clone()).unwrap();
    let episodes = request.episodes.unwrap();
    let (id, _) = open(ws, request).await;
    let mut checkpoints = Vec::new();
    while checkpoints.len() < episodes {
        send(ws, &ClientMessage::Advance { session: id.clone() }).await;
        let ServerMessage::Frame(frame) = recv(ws).await else {
            panic!("expected a frame");
        };
        let pending = frame.pending.expect("advance leaves a step pending");
        let f = world.mdp().reward(pending.s, ActionId(pending.a));
        let fb = FeedbackMessage {
            session: id.clone(),
            episode: frame.episode,
            t: frame.t,
            f,
        };
        send(ws, &ClientMessage::Feedback(fb)).await;
        assert!(matches!(recv(ws).await, ServerMessage::Ack(_)));
        if frame.episode_over {
            assert!(matches!(recv(ws).await, ServerMessage::EpisodeEnd(_)));
            checkpoints.push(hub.checkpoint(&id).unwrap());
        }
    }
    checkpoints
}

fn in_process(request: &SessionRequest) -> Vec<AgentCheckpoint> {
    let world = Gridworld::new(request.env.clone()).unwrap();
    let mdp = world.mdp();
    let config = request.config.apply(AgentConfig::for_kind(request.agent, mdp.gamma()));
    let mut agent = build_agent(request.agent, mdp, &config).unwrap();
    let mut rng = derive(request.seed.unwrap(), 0);
    (0..request.episodes.unwrap())
        .map(|_| {
            run_episode(mdp, agent.as_mut(), &mut SyntheticTrainer::Reward, request.step_cap, &mut rng).unwrap();
            agent.checkpoint()
        })
        .collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn transport_reproduces_in_process_runs_bit_for_bit() {
    let (hub, url) = start_server().await;
    let mut ws = connect(&url).await;
    for (kind, seed) in [(AgentKind::Ecoach, 3), (AgentKind::Tamer, 8), (AgentKind::QLearning, 5)] {
        let request = manual(kind, seed);
        let remote = replay_reward_oracle(&hub, &mut ws, request.clone()).await;
        let local = in_process(&request);
        assert_eq!(remote, local, "{kind:?}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn feedback_moves_the_acknowledged_row_in_its_direction() {
    let (_hub, url) = start_server().await;
    let mut ws = connect(&url).await;
    for f in [1.0, -1.0] {
        let (id, before) = open(&mut ws, manual(AgentKind::Ecoach, 1)).await;
        send(&mut ws, &ClientMessage::Advance { session: id.clone() }).await;
        let ServerMessage::Frame(frame) = recv(&mut ws).await else {
            panic!("expected a frame");
        };
        let a = frame.pending.unwrap().a;
        let fb = FeedbackMessage {
            session: id,
            episode: 0,
            t: 0,
            f,
        };
        send(&mut ws, &ClientMessage::Feedback(fb)).await;
        let ServerMessage::Ack(ack) = recv(&mut ws).await else {
            panic!("expected an ack");
        };
        assert!(!ack.silent);
        assert!((ack.probs[a] - before[a]) * f > 0.0, "{f}: {} -> {}", before[a], ack.probs[a]);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn duplicate_feedback_is_rejected() {
    let (_hub, url) = start_server().await;
    let mut ws = connect(&url).await;
    let (id, _) = open(&mut ws, manual(AgentKind::Coach, 2)).await;
    send(&mut ws, &ClientMessage::Advance { session: id.clone() }).await;
    recv(&mut ws).await;
    let fb = ClientMessage::Feedback(FeedbackMessage {
        session: id,
        episode: 0,
        t: 0,
        f: 1.0,
    });
    send(&mut ws, &fb).await;
    assert!(matches!(recv(&mut ws).await, ServerMessage::Ack(_)));
    send(&mut ws, &fb).await;
    match recv(&mut ws).await {
        ServerMessage::Error(e) => assert_eq!(e.code, ErrorCode::StaleFeedback),
        other => panic!("expected an error, got {other:?}"),
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn connections_do_not_share_sessions() {
    let (hub, url) = start_server().await;
    let (mut a, mut b) = (connect(&url).await, connect(&url).await);
    let (id_a, _) = open(&mut a, manual(AgentKind::Ecoach, 1)).await;
    let (id_b, _) = open(&mut b, manual(AgentKind::Ecoach, 1)).await;
    assert_ne!(id_a, id_b);
    let untouched = hub.checkpoint(&id_b).unwrap();
    send(&mut a, &ClientMessage::Advance { session: id_a.clone() }).await;
    recv(&mut a).await;
    let fb = FeedbackMessage {
        session: id_a.clone(),
        episode: 0,
        t: 0,
        f: 2.0,
    };
    send(&mut a, &ClientMessage::Feedback(fb)).await;
    assert!(matches!(recv(&mut a).await, ServerMessage::Ack(_)));
    assert_ne!(hub.checkpoint(&id_a).unwrap(), untouched);
    assert_eq!(hub.checkpoint(&id_b).unwrap(), untouched);

    // Dropping a connection tears down its sessions only.
    a.close(None).await.unwrap();
    for _ in 0..100 {
        if hub.checkpoint(&id_a).is_none() {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert!(hub.checkpoint(&id_a).is_none());
    assert!(hub.checkpoint(&id_b).is_some());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn paced_steps_time_out_into_silent_acks() {
    let (_hub, url) = start_server().await;
    let mut ws = connect(&url).await;
    for silence in [SilencePolicy::Zero, SilencePolicy::Skip] {
        let request = SessionRequest {
            mode: Pacing::Paced { step_timeout_ms: 30 },
            silence,
            seed: Some(4),
            ..SessionRequest::new(AgentKind::Ecoach)
        };
        let (id, before) = open(&mut ws, request).await;
        send(&mut ws, &ClientMessage::Advance { session: id.clone() }).await;
        let ServerMessage::Frame(frame) = recv(&mut ws).await else {
            panic!("expected a frame");
        };
        assert_eq!(frame.timeout_ms, Some(30));
        let ServerMessage::Ack(ack) = recv(&mut ws).await else {
            panic!("expected a silent ack");
        };
        assert!(ack.silent && ack.f == 0.0 && ack.t == 0);
        assert_eq!(ack.probs, before);
        // The countdown advances on its own.
        let ServerMessage::Frame(next) = recv(&mut ws).await else {
            panic!("expected the next frame");
        };
        assert_eq!(next.t, 1);
        send(&mut ws, &ClientMessage::Close { session: id }).await;
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn malformed_text_gets_an_error_and_the_connection_survives() {
    let (_hub, url) = start_server().await;
    let mut ws = connect(&url).await;
    ws.send(Message::Text("not json".into())).await.unwrap();
    assert!(matches!(recv(&mut ws).await, ServerMessage::Error(e) if e.code == ErrorCode::Malformed));
    ws.send(Message::Text(r#"{"protocol_version":99,"kind":"close","session":"x"}"#.into()))
        .await
        .unwrap();
    assert!(matches!(recv(&mut ws).await, ServerMessage::Error(e) if e.code == ErrorCode::UnsupportedVersion));
    let (_, probs) = open(&mut ws, SessionRequest::new(AgentKind::Random)).await;
    assert_eq!(probs, vec![0.25; 4]);
}
