//! Deterministic discrete-time mission simulator.
//!
//! A seeded scenario drives one UAV-style overhead sweep, UGVs that drive
//! to casualties and run assessments, and a distance-based radio model
//! that replicates every node's records opportunistically. All randomness
//! comes from named ChaCha8 streams derived from the scenario seed, and
//! nothing reads the wall clock, so a scenario plus a script fully
//! determines the event log.

mod metrics;
mod scenario;
mod script;
pub mod sensors;
mod world;

pub use metrics::{LatencyStats, Metrics};
pub use scenario::{
    load_scenario, parse_override, BasestationSpec, CameraSpec, CasualtySpec, DetectionParams, FieldSpec,
    GroundParams, LinkParams, Outage, RobotKind, RobotSpec, Scenario, SimParams, SCENARIO_VERSION,
};
pub use script::{replay_script, run_headless, RunOutput, Script, ScriptEntry};
pub use world::{
    CasualtyView, Command, LinkView, Origin, PluginView, Policy, Rejection, RobotStatus, RobotView, Snapshot, World,
    STANDOFF_M, TRIGGER_RADIUS_M,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("scenario schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("casualty {index} at {position:?} lies outside the field")]
    Bounds { index: usize, position: [f64; 2] },
    #[error("script error at `{path}`: {message}")]
    Script { path: String, message: String },
    #[error("script references unknown {kind} {name:?}")]
    ScriptReferencesUnknownEntity { kind: &'static str, name: String },
    #[error("plugin configuration: {0}")]
    Plugins(String),
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the named random stream `name` under scenario seed `seed`.
pub fn stream_seed(seed: u64, name: &str) -> u64 {
    splitmix(seed ^ splitmix(fnv1a(name)))
}
