use std::collections::BTreeSet;

use serde_json::Value;
use triage_core::sim::{
    load_scenario, replay_script, run_headless, Command, Origin, Policy, RunOutput, Scenario, Script, ScriptEntry,
    SimError, World,
};

fn scenario(name: &str, overrides: &[(&str, &str)]) -> Scenario {
    let path = format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap();
    let ov: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    load_scenario(&text, &ov).unwrap()
}

fn parsed(out: &RunOutput) -> Vec<Value> {
    out.events.iter().map(|l| serde_json::from_str::<Value>(l).unwrap()).collect()
}

fn of_kind(events: &[Value], kind: &str) -> Vec<Value> {
    events.iter().filter(|v| v["kind"] == kind).cloned().collect()
}

fn xyz(v: &Value) -> [f64; 3] {
    let a = v.as_array().unwrap();
    [a[0].as_f64().unwrap(), a[1].as_f64().unwrap(), a[2].as_f64().unwrap()]
}

#[test]
fn minimal_auto_delivers_one_scorecard() {
    let s = scenario("minimal.toml", &[]);
    let duration = s.sim.duration;
    let out = run_headless(s, &Script::auto()).unwrap();
    assert_eq!(out.scorecards.len(), 1);
    let ev = parsed(&out);
    let d = of_kind(&ev, "scorecard_delivered");
    assert_eq!(d.len(), 1);
    assert!(d[0]["t"].as_f64().unwrap() < duration);
}

#[test]
fn sweep_finds_ten_clusters() {
    let out = run_headless(scenario("sweep10.toml", &[]), &Script::auto()).unwrap();
    assert_eq!(out.metrics.truth_count, 10);
    assert_eq!(out.metrics.cluster_count, 10);
    assert_eq!(out.metrics.found, 10);
    assert!(out.metrics.localization_rmse_m.unwrap() < 1.0);
}

#[test]
fn reference_run_is_deterministic() {
    let a = run_headless(scenario("reference.toml", &[]), &Script::auto()).unwrap();
    let b = run_headless(scenario("reference.toml", &[]), &Script::auto()).unwrap();
    assert_eq!(a.events_text(), b.events_text());
    assert_eq!(a.scorecards_json(), b.scorecards_json());
    assert_eq!(a.scorecards.len(), 5);
    let c = run_headless(scenario("reference.toml", &[("seed", "2025")]), &Script::auto()).unwrap();
    assert_ne!(a.events_text(), c.events_text());
}

#[test]
fn override_dt_reaches_event_log() {
    let out = run_headless(scenario("minimal.toml", &[("sim.dt", "0.05")]), &Script::auto()).unwrap();
    let start = &parsed(&out)[0];
    assert_eq!(start["kind"], "start");
    assert_eq!(start["dt"], 0.05);
}

/// Localization RMSE and cluster counts rebuilt from the first and last
/// records of the log alone.
#[test]
fn metrics_match_event_log_recomputation() {
    for name in ["reference.toml", "sweep10.toml"] {
        let out = run_headless(scenario(name, &[]), &Script::auto()).unwrap();
        let ev = parsed(&out);
        let truth: Vec<[f64; 3]> =
            ev[0]["casualties"].as_array().unwrap().iter().map(|c| xyz(&c["position"])).collect();
        let end = ev.last().unwrap();
        assert_eq!(end["kind"], "end");
        let clusters: Vec<[f64; 3]> =
            end["clusters"].as_array().unwrap().iter().map(|c| xyz(&c["position"])).collect();
        let mut sq = Vec::new();
        for t in &truth {
            let d = clusters
                .iter()
                .map(|c| ((c[0] - t[0]).powi(2) + (c[1] - t[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            if d <= 4.0 {
                sq.push(d * d);
            }
        }
        let rmse = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
        assert_eq!(out.metrics.cluster_count, clusters.len());
        assert_eq!(out.metrics.found, sq.len());
        assert!((out.metrics.localization_rmse_m.unwrap() - rmse).abs() < 1e-12, "{name}");

        let lat: Vec<f64> = of_kind(&ev, "scorecard_delivered").iter().map(|d| d["latency"].as_f64().unwrap()).collect();
        assert_eq!(out.metrics.latency_s.count, lat.len());
        if let Some(max) = out.metrics.latency_s.max {
            let m = lat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!((max - m).abs() < 1e-6);
        }
    }
}

#[test]
fn basestation_scorecards_refer_to_replicated_map_entries() {
    let s = scenario("reference.toml", &[]);
    let mut w = World::new(s, Policy::Auto).unwrap();
    w.run_to_end();
    let base = w.store("base").unwrap();
    let mapped: BTreeSet<u64> = base
        .stream("casualty_map")
        .map(|r| serde_json::from_slice::<Value>(&r.payload).unwrap()["casualty_id"].as_u64().unwrap())
        .collect();
    let cards = w.basestation_scorecards();
    assert!(!cards.is_empty());
    for id in cards.keys() {
        assert!(mapped.contains(id), "scorecard for {id} without map entry");
    }
}

#[test]
fn isolated_basestation_receives_everything_at_the_end() {
    let s = scenario("reference.toml", &[]);
    let until = s.sim.duration - 10.0;
    let mut s = s;
    s.link.outages.push(triage_core::sim::Outage { node: "base".into(), start: 0.0, end: until });
    let out = run_headless(s, &Script::auto()).unwrap();
    let ev = parsed(&out);
    let delivered = of_kind(&ev, "scorecard_delivered");
    assert_eq!(delivered.len(), 5);
    for d in delivered {
        assert!(d["t"].as_f64().unwrap() >= until);
    }
    assert_eq!(out.scorecards.len(), 5);
}

#[test]
fn replaying_a_log_reproduces_it() {
    let s = scenario("minimal.toml", &[]);
    let cmds = vec![
        ScriptEntry { at: Some(20.0), step: None, command: Command::Dispatch { robot: "ugv1".into(), casualty: 0 }, origin: Origin::Script },
        ScriptEntry { at: Some(25.0), step: None, command: Command::Trigger { robot: "ugv1".into() }, origin: Origin::Script },
        ScriptEntry { at: Some(60.0), step: None, command: Command::Trigger { robot: "ugv1".into() }, origin: Origin::Script },
    ];
    let out = run_headless(s.clone(), &Script::manual(cmds)).unwrap();
    let ev = parsed(&out);
    let rejected = of_kind(&ev, "command_rejected");
    assert_eq!(rejected.len(), 1);
    assert_eq!(rejected[0]["reason"], "not_in_position");
    assert_eq!(out.scorecards.len(), 1);
    let again = run_headless(s, &replay_script(&out.events).unwrap()).unwrap();
    assert_eq!(out.events_text(), again.events_text());
}

#[test]
fn disabling_lwir_falls_back_to_mmwave_for_respiration() {
    let s = scenario("minimal.toml", &[]);
    let toggle = ScriptEntry {
        at: None,
        step: Some(0),
        command: Command::TogglePlugin { plugin: "lwir".into(), enabled: false },
        origin: Origin::Script,
    };
    let mut script = Script::auto();
    script.commands.push(toggle);
    let out = run_headless(s.clone(), &script).unwrap();
    let sc = out.scorecards.values().next().unwrap();
    assert_eq!(sc.sources["respiration_bpm"], "mmwave");
    let base = run_headless(s, &Script::auto()).unwrap();
    assert_eq!(base.scorecards.values().next().unwrap().sources["respiration_bpm"], "lwir");
}

#[test]
fn script_with_unknown_robot_is_rejected() {
    let script = Script::manual(vec![ScriptEntry {
        at: Some(1.0),
        step: None,
        command: Command::Trigger { robot: "ugv7".into() },
        origin: Origin::Script,
    }]);
    let e = run_headless(scenario("minimal.toml", &[]), &script).unwrap_err();
    assert_eq!(e, SimError::ScriptReferencesUnknownEntity { kind: "robot", name: "ugv7".into() });
}
