//! Assessment plugins, fusion of their outputs and the per-casualty
//! scorecard.
//!
//! Plugins run in simulated time: each reports how long it would have
//! taken, and anything slower than its descriptor's timeout is cut off and
//! contributes nothing.

mod fusion;
mod plugins;
mod scorecard;

pub use fusion::{fuse_heart_rate, fuse_respiration_y1, fuse_respiration_y2, fuse_vitals, FusedVitals, FusionMode};
pub use plugins::{
    builtin_plugin, default_plugin_configs, Alertness, ClassifierPlugin, ClassifierTarget, DescriptionPlugin,
    InjuryProfile, Subject, Trauma, VitalsPlugin, VitalsSensor, BUILTIN_PLUGINS,
};
pub use scorecard::{
    assemble_scorecard, build_scorecard, latest_scorecards, AlertnessFields, Scorecard, TraumaFields, MANIKIN_NOTE,
    SCORECARD_STREAM,
};

use serde::{Deserialize, Serialize};

use crate::geoloc::{CasualtyId, CasualtyMap};
use crate::vitals::RateEstimate;

pub const DEFAULT_PLUGIN_TIMEOUT_S: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OrchestratorError {
    #[error("plugin {0:?} configured twice")]
    DuplicatePlugin(String),
    #[error("unknown plugin {0:?}")]
    UnknownPlugin(String),
    #[error("plugin {name:?}: timeout must be positive, got {timeout}")]
    InvalidTimeout { name: String, timeout: f64 },
    #[error("casualty {0} is not in the casualty map")]
    UnknownCasualty(CasualtyId),
    #[error("scorecard could not be stored: {0}")]
    Store(String),
}

pub type Result<T> = std::result::Result<T, OrchestratorError>;

/// Scorecard field a plugin may fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    HeartRate,
    Respiration,
    Trauma,
    SevereHemorrhage,
    RespiratoryDistress,
    Alertness,
    Description,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginDescriptor {
    pub name: String,
    pub enabled: bool,
    pub produces: Vec<Field>,
    pub timeout_s: f64,
}

/// One value emitted by a plugin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum FieldValue {
    HeartRate(RateEstimate),
    Respiration(RateEstimate),
    Trauma { region: TraumaRegion, present: bool },
    SevereHemorrhage { present: bool },
    RespiratoryDistress { present: bool },
    Alertness { kind: AlertnessKind, normal: bool },
    Description { text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraumaRegion {
    Head,
    Torso,
    UpperExtremity,
    LowerExtremity,
}

impl TraumaRegion {
    pub const ALL: [TraumaRegion; 4] = [
        TraumaRegion::Head,
        TraumaRegion::Torso,
        TraumaRegion::UpperExtremity,
        TraumaRegion::LowerExtremity,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TraumaRegion::Head => "head",
            TraumaRegion::Torso => "torso",
            TraumaRegion::UpperExtremity => "upper_extremity",
            TraumaRegion::LowerExtremity => "lower_extremity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertnessKind {
    Ocular,
    Verbal,
    Motor,
}

impl AlertnessKind {
    pub const ALL: [AlertnessKind; 3] = [AlertnessKind::Ocular, AlertnessKind::Verbal, AlertnessKind::Motor];

    pub fn name(&self) -> &'static str {
        match self {
            AlertnessKind::Ocular => "ocular",
            AlertnessKind::Verbal => "verbal",
            AlertnessKind::Motor => "motor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginResult {
    pub plugin: String,
    pub values: Vec<FieldValue>,
    pub completed: bool,
    pub elapsed_s: f64,
}

/// What a plugin sees when triggered.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentContext {
    pub casualty_id: CasualtyId,
    pub trigger_time: f64,
    /// Per-assessment seed; plugins derive their own streams from it.
    pub seed: u64,
    pub subject: Subject,
}

/// What a plugin would have produced and how long it would have taken.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginOutput {
    pub values: Vec<FieldValue>,
    pub elapsed_s: f64,
}

pub trait AssessmentPlugin: Send {
    fn run(&mut self, ctx: &AssessmentContext) -> PluginOutput;
}

struct Entry {
    descriptor: PluginDescriptor,
    plugin: Box<dyn AssessmentPlugin>,
}

/// Enabled plugins, in configuration order.
#[derive(Default)]
pub struct Registry {
    entries: Vec<Entry>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.iter().map(|e| &e.descriptor)).finish()
    }
}

impl Registry {
    pub fn descriptors(&self) -> impl Iterator<Item = &PluginDescriptor> {
        self.entries.iter().map(|e| &e.descriptor)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.descriptor.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Builds a registry from descriptors and their implementations. Disabled
/// plugins are validated and then dropped.
pub fn configure(plugins: Vec<(PluginDescriptor, Box<dyn AssessmentPlugin>)>) -> Result<Registry> {
    let mut seen = std::collections::BTreeSet::new();
    let mut entries = Vec::new();
    for (descriptor, plugin) in plugins {
        if !seen.insert(descriptor.name.clone()) {
            return Err(OrchestratorError::DuplicatePlugin(descriptor.name));
        }
        if !(descriptor.timeout_s > 0.0 && descriptor.timeout_s.is_finite()) {
            return Err(OrchestratorError::InvalidTimeout {
                name: descriptor.name,
                timeout: descriptor.timeout_s,
            });
        }
        if descriptor.enabled {
            entries.push(Entry { descriptor, plugin });
        }
    }
    Ok(Registry { entries })
}

/// Invokes every enabled plugin once. A plugin slower than its timeout is
/// reported as incomplete, with no values and `elapsed_s` equal to the
/// timeout.
pub fn run_assessment(
    map: &CasualtyMap,
    registry: &mut Registry,
    ctx: &AssessmentContext,
) -> Result<Vec<PluginResult>> {
    if !map.contains(ctx.casualty_id) {
        return Err(OrchestratorError::UnknownCasualty(ctx.casualty_id));
    }
    Ok(registry
        .entries
        .iter_mut()
        .map(|e| {
            let out = e.plugin.run(ctx);
            let completed = out.elapsed_s <= e.descriptor.timeout_s;
            PluginResult {
                plugin: e.descriptor.name.clone(),
                values: if completed { out.values } else { Vec::new() },
                completed,
                elapsed_s: out.elapsed_s.min(e.descriptor.timeout_s),
            }
        })
        .collect())
}

/// Wall time of an assessment: plugins run side by side, so the slowest
/// (capped at its timeout) decides.
pub fn assessment_duration(results: &[PluginResult]) -> f64 {
    results.iter().map(|r| r.elapsed_s).fold(0.0, f64::max)
}
