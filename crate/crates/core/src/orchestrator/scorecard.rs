use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{fuse_vitals, FieldValue, FusionMode, OrchestratorError, PluginResult, Result};
use crate::geoloc::{CasualtyId, CasualtyMap};
use crate::meshsync::{RecordKey, Store};

pub const SCORECARD_STREAM: &str = "scorecard";
pub const MANIKIN_NOTE: &str = "non-animated manikin: heart rate reported as zero";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraumaFields {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torso: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_extremity: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_extremity: Option<bool>,
}

/// `Some(true)` is a normal response.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertnessFields {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ocular: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verbal: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub motor: Option<bool>,
}

/// Per-casualty triage report. Unpopulated fields are omitted from the
/// JSON form; `sources` maps each populated field path (`trauma.head`,
/// `heart_rate_bpm`, ...) to the plugin that filled it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub casualty_id: CasualtyId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heart_rate_bpm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub respiration_bpm: Option<f64>,
    #[serde(default)]
    pub trauma: TraumaFields,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub severe_hemorrhage: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub respiratory_distress: Option<bool>,
    #[serde(default)]
    pub alertness: AlertnessFields,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub sources: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotations: BTreeMap<String, String>,
    pub assessed_at: f64,
}

impl Scorecard {
    /// Key-sorted, compact JSON. This is the stored and printed form.
    pub fn to_canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("scorecard serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    pub fn from_json(bytes: &[u8]) -> serde_json::Result<Self> {
        serde_json::from_slice(bytes)
    }

    /// Number of populated report fields (`sources` entries).
    pub fn populated(&self) -> usize {
        self.sources.len()
    }
}

/// Scorecard from completed plugin results. Incomplete results never
/// contribute. With `manikin` set the heart rate is forced to zero and
/// annotated.
pub fn assemble_scorecard(
    casualty_id: CasualtyId,
    results: &[PluginResult],
    mode: FusionMode,
    manikin: bool,
    assessed_at: f64,
) -> Scorecard {
    let mut sc = Scorecard {
        casualty_id,
        assessed_at,
        ..Default::default()
    };
    let fused = fuse_vitals(mode, results);
    if let Some((e, src)) = fused.heart_rate {
        sc.heart_rate_bpm = Some(e.bpm);
        sc.sources.insert("heart_rate_bpm".into(), src);
    }
    if let Some((e, src)) = fused.respiration {
        sc.respiration_bpm = Some(e.bpm);
        sc.sources.insert("respiration_bpm".into(), src);
    }
    if manikin {
        sc.heart_rate_bpm = Some(0.0);
        sc.sources.insert("heart_rate_bpm".into(), "manikin_rule".into());
        sc.annotations.insert("heart_rate_bpm".into(), MANIKIN_NOTE.into());
    }
    for r in results.iter().filter(|r| r.completed) {
        for v in &r.values {
            let path = match v {
                FieldValue::HeartRate(_) | FieldValue::Respiration(_) => continue,
                FieldValue::Trauma { region, present } => {
                    let slot = match region {
                        super::TraumaRegion::Head => &mut sc.trauma.head,
                        super::TraumaRegion::Torso => &mut sc.trauma.torso,
                        super::TraumaRegion::UpperExtremity => &mut sc.trauma.upper_extremity,
                        super::TraumaRegion::LowerExtremity => &mut sc.trauma.lower_extremity,
                    };
                    *slot = Some(*present);
                    format!("trauma.{}", region.name())
                }
                FieldValue::SevereHemorrhage { present } => {
                    sc.severe_hemorrhage = Some(*present);
                    "severe_hemorrhage".into()
                }
                FieldValue::RespiratoryDistress { present } => {
                    sc.respiratory_distress = Some(*present);
                    "respiratory_distress".into()
                }
                FieldValue::Alertness { kind, normal } => {
                    let slot = match kind {
                        super::AlertnessKind::Ocular => &mut sc.alertness.ocular,
                        super::AlertnessKind::Verbal => &mut sc.alertness.verbal,
                        super::AlertnessKind::Motor => &mut sc.alertness.motor,
                    };
                    *slot = Some(*normal);
                    format!("alertness.{}", kind.name())
                }
                FieldValue::Description { text } => {
                    sc.description = Some(text.clone());
                    "description".into()
                }
            };
            sc.sources.insert(path, r.plugin.clone());
        }
    }
    sc
}

/// Assembles the scorecard and appends it to the local `scorecard` stream.
pub fn build_scorecard(
    map: &CasualtyMap,
    store: &mut Store,
    casualty_id: CasualtyId,
    results: &[PluginResult],
    mode: FusionMode,
    manikin: bool,
    assessed_at: f64,
) -> Result<(Scorecard, RecordKey)> {
    if !map.contains(casualty_id) {
        return Err(OrchestratorError::UnknownCasualty(casualty_id));
    }
    let sc = assemble_scorecard(casualty_id, results, mode, manikin, assessed_at);
    let key = store
        .put_local(SCORECARD_STREAM, sc.to_canonical_json().into_bytes(), assessed_at)
        .map_err(|e| OrchestratorError::Store(e.to_string()))?;
    Ok((sc, key))
}

/// Latest scorecard per casualty among the records a store holds, resolved
/// by highest `(assessed_at, seq, origin)`.
pub fn latest_scorecards(store: &Store) -> BTreeMap<CasualtyId, Scorecard> {
    let mut best: BTreeMap<CasualtyId, (f64, u64, String, Scorecard)> = BTreeMap::new();
    for r in store.stream(SCORECARD_STREAM) {
        let Ok(sc) = Scorecard::from_json(&r.payload) else { continue };
        let rank = (sc.assessed_at, r.key.seq, r.key.origin.clone());
        let newer = best.get(&sc.casualty_id).is_none_or(|(t, s, o, _)| {
            (rank.0, rank.1, &rank.2).partial_cmp(&(*t, *s, o)) == Some(std::cmp::Ordering::Greater)
        });
        if newer {
            best.insert(sc.casualty_id, (rank.0, rank.1, rank.2, sc));
        }
    }
    best.into_iter().map(|(k, v)| (k, v.3)).collect()
}
