//! Gateway between a live simulation and operator clients.
//!
//! One task owns the [`World`] and is its only writer. It steps the world
//! at a wall-clock pace, publishes a snapshot every few steps and, between
//! steps, answers commands that clients send through a single queue.
//! Connection tasks never touch the world: they forward commands and relay
//! published snapshots.
//!
//! Endpoints: `GET /ws` (see [`protocol`]) and `GET /health`.

pub mod protocol;

use std::collections::HashSet;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;
use triage_core::sim::{Command, World};

pub use protocol::{parse_client_message, Ack, AckStatus, CommandMessage, SnapshotMessage, PROTO_VERSION};

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    /// Simulated seconds per wall second. `None` steps as fast as possible.
    pub pace: Option<f64>,
    /// Snapshots per simulated second.
    pub snapshot_rate: f64,
    /// Hold the simulation at t = 0 until the first client connects.
    pub wait_for_client: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { pace: Some(1.0), snapshot_rate: 5.0, wait_for_client: false }
    }
}

#[derive(Debug, Clone, Default)]
struct Latest {
    frame: Option<Arc<str>>,
    t: f64,
    step: u64,
    finished: bool,
}

struct Shared {
    latest: Mutex<Latest>,
    frames: broadcast::Sender<Arc<str>>,
    commands: mpsc::Sender<(Command, oneshot::Sender<Result<u64, String>>)>,
    client_seen: tokio::sync::Notify,
}

/// Handle to a running gateway.
#[derive(Clone)]
pub struct Gateway {
    shared: Arc<Shared>,
}

impl Gateway {
    /// Starts the simulation task. The returned handle yields the world
    /// once its run is complete.
    pub fn spawn(world: World, config: ServiceConfig) -> (Gateway, JoinHandle<World>) {
        let (frames, _) = broadcast::channel(1024);
        let (tx, rx) = mpsc::channel(256);
        let shared = Arc::new(Shared {
            latest: Mutex::new(Latest::default()),
            frames,
            commands: tx,
            client_seen: tokio::sync::Notify::new(),
        });
        let handle = tokio::spawn(sim_loop(world, config, shared.clone(), rx));
        (Gateway { shared }, handle)
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/ws", get(ws_handler))
            .route("/health", get(health))
            .with_state(self.clone())
    }

    /// Simulated time of the latest snapshot.
    pub fn sim_time(&self) -> f64 {
        self.shared.latest.lock().expect("lock").t
    }

    /// Latest snapshot frame and a receiver for every later one, taken
    /// together so nothing is missed or repeated.
    fn subscribe(&self) -> (Option<Arc<str>>, broadcast::Receiver<Arc<str>>) {
        let latest = self.shared.latest.lock().expect("lock");
        (latest.frame.clone(), self.shared.frames.subscribe())
    }
}

/// Serves the gateway on `listener` until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, world: World, config: ServiceConfig) -> std::io::Result<()> {
    let (gw, _sim) = Gateway::spawn(world, config);
    axum::serve(listener, gw.router()).await
}

fn publish(shared: &Shared, world: &World, seq: &mut u64) {
    let snap = world.snapshot();
    let (t, step, finished) = (snap.t, snap.step, snap.finished);
    let frame: Arc<str> = serde_json::to_string(&SnapshotMessage::new(*seq, snap)).expect("serializes").into();
    *seq += 1;
    let mut latest = shared.latest.lock().expect("lock");
    *latest = Latest { frame: Some(frame.clone()), t, step, finished };
    let _ = shared.frames.send(frame);
}

async fn sim_loop(
    mut world: World,
    config: ServiceConfig,
    shared: Arc<Shared>,
    mut rx: mpsc::Receiver<(Command, oneshot::Sender<Result<u64, String>>)>,
) -> World {
    let dt = world.scenario().sim.dt;
    let every = ((1.0 / (config.snapshot_rate * dt)).round() as u64).max(1);
    let mut seq = 0;
    publish(&shared, &world, &mut seq);
    if config.wait_for_client {
        shared.client_seen.notified().await;
    }
    let mut ticker = config.pace.filter(|p| *p > 0.0 && p.is_finite()).map(|p| {
        let mut i = tokio::time::interval(Duration::from_secs_f64(dt / p));
        i.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Burst);
        i
    });
    while !world.is_finished() {
        match ticker.as_mut() {
            Some(t) => {
                t.tick().await;
            }
            None => tokio::task::yield_now().await,
        }
        while let Ok((cmd, reply)) = rx.try_recv() {
            let r = world.submit(cmd).map(|()| world.step_index()).map_err(|e| e.as_str().to_string());
            let _ = reply.send(r);
        }
        world.step();
        if world.step_index().is_multiple_of(every) || world.is_finished() {
            publish(&shared, &world, &mut seq);
        }
    }
    world
}

async fn health(State(gw): State<Gateway>) -> impl IntoResponse {
    let latest = gw.shared.latest.lock().expect("lock").clone();
    Json(json!({
        "status": "ok",
        "service": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "proto_version": PROTO_VERSION,
        "sim_time": latest.t,
        "step": latest.step,
        "finished": latest.finished,
    }))
}

async fn ws_handler(ws: WebSocketUpgrade, State(gw): State<Gateway>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, gw))
}

async fn send_json<T: serde::Serialize>(socket: &mut WebSocket, v: &T) -> bool {
    let text = serde_json::to_string(v).expect("serializes");
    socket.send(Message::Text(text.into())).await.is_ok()
}

async fn client(mut socket: WebSocket, gw: Gateway) {
    let (first, mut frames) = gw.subscribe();
    gw.shared.client_seen.notify_one();
    if let Some(f) = first {
        if socket.send(Message::Text(f.to_string().into())).await.is_err() {
            return;
        }
    }
    let mut seen_ids: HashSet<String> = HashSet::new();
    loop {
        tokio::select! {
            frame = frames.recv() => match frame {
                Ok(f) => {
                    if socket.send(Message::Text(f.to_string().into())).await.is_err() {
                        return;
                    }
                }
                // A slow client skips frames; the next one is complete anyway.
                Err(broadcast::error::RecvError::Lagged(_)) => {}
                Err(broadcast::error::RecvError::Closed) => return,
            },
            msg = socket.recv() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t.to_string(),
                    Some(Ok(Message::Binary(_))) => {
                        if !send_json(&mut socket, &Ack::rejected(None, "malformed")).await {
                            return;
                        }
                        continue;
                    }
                    Some(Ok(_)) => continue,
                    Some(Err(_)) | None => return,
                };
                let ack = handle_command(&gw, &mut seen_ids, &text).await;
                if !send_json(&mut socket, &ack).await {
                    return;
                }
            }
        }
    }
}

async fn handle_command(gw: &Gateway, seen: &mut HashSet<String>, text: &str) -> Ack {
    let msg = match parse_client_message(text) {
        Ok(m) => m,
        Err((id, reason)) => return Ack::rejected(id, reason),
    };
    if !seen.insert(msg.command_id.clone()) {
        return Ack::rejected(Some(msg.command_id), "duplicate_command_id");
    }
    let (tx, rx) = oneshot::channel();
    if gw.shared.commands.send((msg.command, tx)).await.is_err() {
        return Ack::rejected(Some(msg.command_id), "finished");
    }
    match rx.await {
        Ok(Ok(step)) => Ack::accepted(msg.command_id, step),
        Ok(Err(reason)) => Ack::rejected(Some(msg.command_id), &reason),
        Err(_) => Ack::rejected(Some(msg.command_id), "finished"),
    }
}
