use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};
use triage_core::sim::{load_scenario, replay_script, run_headless, Policy, World};
use triage_service::{Gateway, ServiceConfig};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn world(name: &str, policy: Policy) -> World {
    let path = format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    let s = load_scenario(&std::fs::read_to_string(path).unwrap(), &[]).unwrap();
    World::new(s, policy).unwrap()
}

async fn start(w: World, cfg: ServiceConfig) -> (String, tokio::task::JoinHandle<World>) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let (gw, sim) = Gateway::spawn(w, cfg);
    let router = gw.router();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    (addr, sim)
}

async fn connect(addr: &str) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

async fn next_json(ws: &mut Ws) -> Value {
    loop {
        let m = tokio::time::timeout(Duration::from_secs(20), ws.next()).await.unwrap().unwrap().unwrap();
        if let Message::Text(t) = m {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Sends a command and returns its ack, skipping snapshots in between.
async fn command(ws: &mut Ws, body: Value) -> Value {
    ws.send(Message::Text(body.to_string().into())).await.unwrap();
    loop {
        let v = next_json(ws).await;
        if v["type"] == "ack" {
            return v;
        }
    }
}

async fn snapshot_until(ws: &mut Ws, pred: impl Fn(&Value) -> bool) -> Value {
    loop {
        let v = next_json(ws).await;
        if v["type"] == "snapshot" && pred(&v) {
            return v;
        }
    }
}

fn paced(pace: f64) -> ServiceConfig {
    ServiceConfig { pace: Some(pace), snapshot_rate: 5.0, wait_for_client: true }
}

#[tokio::test]
async fn first_message_is_a_full_snapshot() {
    let (addr, _sim) = start(world("minimal.toml", Policy::Manual), paced(1.0)).await;
    let mut ws = connect(&addr).await;
    let v = next_json(&mut ws).await;
    assert_eq!(v["type"], "snapshot");
    assert_eq!(v["proto_version"], 1);
    for key in ["t", "step", "robots", "casualties", "links", "plugins", "basestation", "finished"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["robots"].as_array().unwrap().len(), 2);
    assert!(v["plugins"].as_array().unwrap().iter().any(|p| p["name"] == "lwir" && p["enabled"] == true));
}

#[tokio::test]
async fn clients_see_the_same_sequence_and_time_is_monotone() {
    let (addr, _sim) = start(world("minimal.toml", Policy::Auto), paced(50.0)).await;
    let mut a = connect(&addr).await;
    let mut b = connect(&addr).await;
    let mut sa = Vec::new();
    let mut sb = Vec::new();
    for _ in 0..40 {
        sa.push(next_json(&mut a).await);
        sb.push(next_json(&mut b).await);
    }
    let start = sa[0]["seq"].as_u64().unwrap().max(sb[0]["seq"].as_u64().unwrap());
    let pick = |s: &Vec<Value>| -> Vec<Value> { s.iter().filter(|v| v["seq"].as_u64().unwrap() >= start).cloned().collect() };
    let (pa, pb) = (pick(&sa), pick(&sb));
    let n = pa.len().min(pb.len());
    assert!(n > 20);
    assert_eq!(pa[..n], pb[..n]);
    for w in sa.windows(2) {
        assert!(w[1]["t"].as_f64().unwrap() > w[0]["t"].as_f64().unwrap());
        assert_eq!(w[1]["seq"].as_u64().unwrap(), w[0]["seq"].as_u64().unwrap() + 1);
    }
    // Default rate: five snapshots per simulated second.
    let dt = sa[1]["t"].as_f64().unwrap() - sa[0]["t"].as_f64().unwrap();
    assert!((dt - 0.2).abs() < 1e-9, "{dt}");
}

#[tokio::test]
async fn commands_are_acknowledged() {
    let (addr, _sim) = start(world("minimal.toml", Policy::Manual), paced(20.0)).await;
    let mut ws = connect(&addr).await;
    // Wait for the overhead sweep to put the casualty on the map.
    snapshot_until(&mut ws, |s| !s["casualties"].as_array().unwrap().is_empty()).await;

    let bad = command(&mut ws, json!({"type": "command", "command_id": "t0", "kind": "trigger", "robot": "ugv1"})).await;
    assert_eq!(bad["status"], "rejected");
    assert_eq!(bad["reason"], "no_target");

    let ok = command(&mut ws, json!({"type": "command", "command_id": "d1", "kind": "dispatch", "robot": "ugv1", "casualty": 0})).await;
    assert_eq!(ok["status"], "accepted", "{ok}");
    assert_eq!(ok["command_id"], "d1");
    let step = ok["step"].as_u64().unwrap();
    let s = snapshot_until(&mut ws, |s| s["step"].as_u64().unwrap() > step).await;
    let ugv = s["robots"].as_array().unwrap().iter().find(|r| r["id"] == "ugv1").unwrap().clone();
    assert_eq!(ugv["status"], "moving");
    assert_eq!(ugv["target"], 0);

    let far = command(&mut ws, json!({"type": "command", "command_id": "t1", "kind": "trigger", "robot": "ugv1"})).await;
    assert_eq!(far["status"], "rejected");
    assert_eq!(far["reason"], "not_in_position");

    let dup = command(&mut ws, json!({"type": "command", "command_id": "d1", "kind": "dispatch", "robot": "ugv1", "casualty": 0})).await;
    assert_eq!(dup["reason"], "duplicate_command_id");

    let unknown = command(&mut ws, json!({"type": "command", "command_id": "d2", "kind": "dispatch", "robot": "ugv9", "casualty": 0})).await;
    assert_eq!(unknown["reason"], "unknown_robot");

    ws.send(Message::Text("{not json".into())).await.unwrap();
    let m = loop {
        let v = next_json(&mut ws).await;
        if v["type"] == "ack" {
            break v;
        }
    };
    assert_eq!(m["reason"], "malformed");
    assert_eq!(m["command_id"], Value::Null);
}

#[tokio::test]
async fn disconnecting_client_does_not_stop_the_run_and_log_replays() {
    let w = world("minimal.toml", Policy::Manual);
    let scenario = w.scenario().clone();
    let (addr, sim) = start(w, ServiceConfig { pace: Some(400.0), snapshot_rate: 5.0, wait_for_client: true }).await;
    let mut ws = connect(&addr).await;
    snapshot_until(&mut ws, |s| !s["casualties"].as_array().unwrap().is_empty()).await;
    let ack = command(&mut ws, json!({"type": "command", "command_id": "1", "kind": "dispatch", "robot": "ugv1", "casualty": 0})).await;
    assert_eq!(ack["status"], "accepted");
    drop(ws);
    let world = tokio::time::timeout(Duration::from_secs(60), sim).await.unwrap().unwrap();
    assert!(world.is_finished());
    let events = world.events().to_vec();
    let cmd: Vec<&String> = events.iter().filter(|l| l.contains("\"origin\":\"operator\"")).collect();
    assert_eq!(cmd.len(), 1);
    let cmd_step = serde_json::from_str::<Value>(cmd[0]).unwrap()["step"].as_u64().unwrap();
    assert_eq!(cmd_step, ack["step"].as_u64().unwrap());

    // The log alone reproduces the run without the gateway.
    let replay = run_headless(scenario, &replay_script(&events).unwrap()).unwrap();
    assert_eq!(replay.events, events);
}

#[tokio::test]
async fn toggling_lwir_makes_mmwave_the_respiration_source() {
    let (addr, sim) = start(world("minimal.toml", Policy::Auto), paced(100.0)).await;
    let mut ws = connect(&addr).await;
    let ack = command(&mut ws, json!({"type": "command", "command_id": "x", "kind": "toggle_plugin", "plugin": "lwir", "enabled": false})).await;
    assert_eq!(ack["status"], "accepted");
    let s = snapshot_until(&mut ws, |s| {
        s["casualties"].as_array().unwrap().iter().any(|c| !c["scorecard"].is_null())
    })
    .await;
    let card = &s["casualties"][0]["scorecard"];
    assert_eq!(card["sources"]["respiration_bpm"], "mmwave");
    assert!(s["plugins"].as_array().unwrap().iter().any(|p| p["name"] == "lwir" && p["enabled"] == false));
    drop(ws);
    sim.abort();
}

#[tokio::test]
async fn pace_scales_simulated_time() {
    let (addr, _sim) = start(world("minimal.toml", Policy::Manual), paced(2.0)).await;
    let mut ws = connect(&addr).await;
    let t0 = std::time::Instant::now();
    let first = next_json(&mut ws).await["t"].as_f64().unwrap();
    let v = snapshot_until(&mut ws, |s| s["t"].as_f64().unwrap() >= first + 3.0).await;
    let wall = t0.elapsed().as_secs_f64();
    let sim = v["t"].as_f64().unwrap() - first;
    let ratio = sim / wall;
    assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
}

#[tokio::test]
async fn health_reports_version() {
    let (addr, _sim) = start(world("minimal.toml", Policy::Manual), paced(1.0)).await;
    let mut s = TcpStream::connect(&addr).await.unwrap();
    s.write_all(b"GET /health HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 200"), "{buf}");
    let body: Value = serde_json::from_str(buf.split("\r\n\r\n").nth(1).unwrap()).unwrap();
    assert_eq!(body["status"], "ok");
    assert_eq!(body["proto_version"], 1);
    assert_eq!(body["version"], env!("CARGO_PKG_VERSION"));
}
