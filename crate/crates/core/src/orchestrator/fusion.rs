use serde::{Deserialize, Serialize};

use super::{FieldValue, PluginResult};
use crate::vitals::RateEstimate;

/// Which deployment's fallback rules apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Respiration from PCR, falling back to MTTS; heart rate from MTTS.
    Year1,
    /// Respiration from LWIR, falling back to mmWave; heart rate from mmWave.
    #[default]
    Year2,
}

fn first_valid(primary: &RateEstimate, fallback: &RateEstimate) -> RateEstimate {
    if primary.valid {
        primary.clone()
    } else if fallback.valid {
        fallback.clone()
    } else {
        RateEstimate::invalid(primary.source.clone())
    }
}

/// The mmWave respiration rate is reported only when LWIR has none.
pub fn fuse_respiration_y2(lwir: &RateEstimate, mmwave: &RateEstimate) -> RateEstimate {
    first_valid(lwir, mmwave)
}

/// The MTTS respiration rate is reported only when PCR has none.
pub fn fuse_respiration_y1(pcr: &RateEstimate, mtts: &RateEstimate) -> RateEstimate {
    first_valid(pcr, mtts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedVitals {
    /// `(estimate, plugin)`; `None` when no plugin produced a valid value.
    pub heart_rate: Option<(RateEstimate, String)>,
    pub respiration: Option<(RateEstimate, String)>,
}

fn rate_from(results: &[PluginResult], plugin: &str, hr: bool) -> RateEstimate {
    results
        .iter()
        .filter(|r| r.completed && r.plugin == plugin)
        .flat_map(|r| &r.values)
        .find_map(|v| match v {
            FieldValue::HeartRate(e) if hr => Some(e.clone()),
            FieldValue::Respiration(e) if !hr => Some(e.clone()),
            _ => None,
        })
        .map(|mut e| {
            e.source = plugin.to_string();
            e
        })
        .unwrap_or_else(|| RateEstimate::invalid(plugin))
}

fn keep(e: RateEstimate) -> Option<(RateEstimate, String)> {
    e.valid.then(|| {
        let s = e.source.clone();
        (e, s)
    })
}

pub fn fuse_heart_rate(mode: FusionMode, results: &[PluginResult]) -> Option<(RateEstimate, String)> {
    let plugin = match mode {
        FusionMode::Year1 => "mtts",
        FusionMode::Year2 => "mmwave",
    };
    keep(rate_from(results, plugin, true))
}

/// Applies the mode's rules to completed plugin results. Missing or
/// incomplete plugins count as invalid estimates.
pub fn fuse_vitals(mode: FusionMode, results: &[PluginResult]) -> FusedVitals {
    let respiration = match mode {
        FusionMode::Year1 => fuse_respiration_y1(&rate_from(results, "pcr", false), &rate_from(results, "mtts", false)),
        FusionMode::Year2 => {
            fuse_respiration_y2(&rate_from(results, "lwir", false), &rate_from(results, "mmwave", false))
        }
    };
    FusedVitals {
        heart_rate: fuse_heart_rate(mode, results),
        respiration: keep(respiration),
    }
}
