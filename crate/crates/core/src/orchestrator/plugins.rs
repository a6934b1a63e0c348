//! Built-in plugins. Vitals plugins synthesize a sensor trace from the
//! subject's true rates and run the real estimator on it; classifier
//! plugins stand in for learned injury models and report each true label
//! with a fixed probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    AlertnessKind, AssessmentContext, AssessmentPlugin, Field, FieldValue, PluginDescriptor, PluginOutput,
    TraumaRegion, DEFAULT_PLUGIN_TIMEOUT_S,
};
use super::FusionMode;
use crate::vitals::synth::{synth_vital_signal, Modality, MotionArtifact, SynthSpec};
use crate::vitals::{
    estimate_hr_mmwave, estimate_rate_mmwave, estimate_rate_mtts, estimate_rr_pcr, estimate_rr_thermal, PcrConfig,
    RateEstimate, ThermalConfig, RESPIRATION_BAND, RPPG_BAND,
};

pub const BUILTIN_PLUGINS: [&str; 8] = [
    "lwir",
    "mmwave",
    "pcr",
    "mtts",
    "trauma",
    "hemorrhage",
    "respiratory_distress",
    "alertness",
];

/// Processing overhead added to every vitals window, seconds.
const VITALS_OVERHEAD_S: f64 = 2.0;
const CLASSIFIER_ELAPSED_S: f64 = 4.0;
const DESCRIPTION_ELAPSED_S: f64 = 6.0;
/// Respiration windows are 30 s, so their plugins need more than the
/// default allowance.
const VITALS_TIMEOUT_S: f64 = 40.0;
const RESPIRATION_WINDOW_S: f64 = 30.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Trauma {
    pub head: bool,
    pub torso: bool,
    pub upper_extremity: bool,
    pub lower_extremity: bool,
}

impl Trauma {
    pub fn get(&self, r: TraumaRegion) -> bool {
        match r {
            TraumaRegion::Head => self.head,
            TraumaRegion::Torso => self.torso,
            TraumaRegion::UpperExtremity => self.upper_extremity,
            TraumaRegion::LowerExtremity => self.lower_extremity,
        }
    }
}

/// `true` means normal response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Alertness {
    pub ocular: bool,
    pub verbal: bool,
    pub motor: bool,
}

impl Default for Alertness {
    fn default() -> Self {
        Alertness {
            ocular: true,
            verbal: true,
            motor: true,
        }
    }
}

impl Alertness {
    pub fn get(&self, k: AlertnessKind) -> bool {
        match k {
            AlertnessKind::Ocular => self.ocular,
            AlertnessKind::Verbal => self.verbal,
            AlertnessKind::Motor => self.motor,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjuryProfile {
    pub trauma: Trauma,
    pub severe_hemorrhage: bool,
    pub respiratory_distress: bool,
    pub alertness: Alertness,
}

/// Ground truth about the person in front of the sensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub hr_bpm: f64,
    pub rr_bpm: f64,
    /// Non-animated manikin: no physiological signal at all.
    pub manikin: bool,
    pub injuries: InjuryProfile,
    pub thermal_contrast_f: f64,
    pub thermal_drift_f_per_s: f64,
    /// Fraction of thermal frames lost to head motion.
    pub motion_fraction: f64,
    pub chest_visibility: f64,
    pub face_visibility: f64,
    pub snr_db: f64,
}

impl Default for Subject {
    fn default() -> Self {
        Subject {
            hr_bpm: 72.0,
            rr_bpm: 14.0,
            manikin: false,
            injuries: InjuryProfile::default(),
            thermal_contrast_f: 10.0,
            thermal_drift_f_per_s: 0.0,
            motion_fraction: 0.0,
            chest_visibility: 1.0,
            face_visibility: 1.0,
            snr_db: 15.0,
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn plugin_seed(ctx: &AssessmentContext, name: &str) -> u64 {
    let mut z = ctx.seed ^ fnv1a(name);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VitalsSensor {
    Lwir,
    MmWave,
    Pcr,
    Mtts,
}

impl VitalsSensor {
    pub fn plugin_name(&self) -> &'static str {
        match self {
            VitalsSensor::Lwir => "lwir",
            VitalsSensor::MmWave => "mmwave",
            VitalsSensor::Pcr => "pcr",
            VitalsSensor::Mtts => "mtts",
        }
    }

    fn produces(&self) -> Vec<Field> {
        match self {
            VitalsSensor::Lwir | VitalsSensor::Pcr => vec![Field::Respiration],
            VitalsSensor::MmWave | VitalsSensor::Mtts => vec![Field::HeartRate, Field::Respiration],
        }
    }
}

#[derive(Debug, Clone)]
pub struct VitalsPlugin {
    pub sensor: VitalsSensor,
    pub thermal: ThermalConfig,
    pub pcr: PcrConfig,
}

impl VitalsPlugin {
    pub fn new(sensor: VitalsSensor) -> Self {
        VitalsPlugin {
            sensor,
            thermal: ThermalConfig::default(),
            pcr: PcrConfig::default(),
        }
    }

    fn spec(&self, subject: &Subject, seed: u64) -> SynthSpec {
        let (modality, rate) = match self.sensor {
            VitalsSensor::Lwir => (Modality::Thermal, 15.0),
            VitalsSensor::MmWave => (Modality::MmWave, 20.0),
            VitalsSensor::Pcr => (Modality::Pcr, 20.0),
            VitalsSensor::Mtts => (Modality::Mtts, 30.0),
        };
        let hr = subject.hr_bpm.clamp(30.0, 200.0);
        let rr = subject.rr_bpm.clamp(4.0, 40.0);
        let mut spec = SynthSpec::new(hr, rr, modality, seed)
            .snr_db(subject.snr_db)
            .window(RESPIRATION_WINDOW_S, rate);
        match self.sensor {
            VitalsSensor::Lwir => {
                spec = spec
                    .contrast(if subject.manikin { 0.0 } else { subject.thermal_contrast_f })
                    .drift(subject.thermal_drift_f_per_s);
                if subject.motion_fraction > 0.0 {
                    spec = spec.artifact(MotionArtifact::Bursts {
                        fraction: subject.motion_fraction,
                        magnitude_px: 8.0,
                    });
                }
            }
            VitalsSensor::MmWave | VitalsSensor::Pcr => {
                let v = if subject.manikin { 0.0 } else { subject.chest_visibility };
                spec = spec.chest_visibility(v);
            }
            VitalsSensor::Mtts => {
                let v = if subject.manikin { 0.0 } else { subject.face_visibility };
                spec = spec.snr_db(subject.snr_db + 20.0 * v.max(1e-3).log10());
            }
        }
        spec
    }

    fn estimate(&self, subject: &Subject, seed: u64) -> Vec<FieldValue> {
        let name = self.sensor.plugin_name();
        let trace = match synth_vital_signal(&self.spec(subject, seed)) {
            Ok(t) => t,
            Err(_) => return Vec::new(),
        };
        let or_invalid = |r: crate::vitals::Result<RateEstimate>| {
            let mut e = r.unwrap_or_else(|_| RateEstimate::invalid(name));
            e.source = name.to_string();
            e
        };
        match self.sensor {
            VitalsSensor::Lwir => {
                let Some(th) = trace.into_thermal() else { return Vec::new() };
                let e = estimate_rr_thermal(&th, &self.thermal).map(|t| t.average);
                vec![FieldValue::Respiration(or_invalid(e))]
            }
            VitalsSensor::Pcr => {
                let Some(s) = trace.into_series() else { return Vec::new() };
                vec![FieldValue::Respiration(or_invalid(estimate_rr_pcr(&s, &self.pcr)))]
            }
            VitalsSensor::MmWave => {
                let Some(s) = trace.into_series() else { return Vec::new() };
                vec![
                    FieldValue::HeartRate(or_invalid(estimate_hr_mmwave(&s))),
                    FieldValue::Respiration(or_invalid(estimate_rate_mmwave(&s, &RESPIRATION_BAND))),
                ]
            }
            VitalsSensor::Mtts => {
                let Some(s) = trace.into_series() else { return Vec::new() };
                vec![
                    FieldValue::HeartRate(or_invalid(estimate_rate_mtts(&s, &RPPG_BAND))),
                    FieldValue::Respiration(or_invalid(estimate_rate_mtts(&s, &RESPIRATION_BAND))),
                ]
            }
        }
    }
}

impl AssessmentPlugin for VitalsPlugin {
    fn run(&mut self, ctx: &AssessmentContext) -> PluginOutput {
        let seed = plugin_seed(ctx, self.sensor.plugin_name());
        PluginOutput {
            values: self.estimate(&ctx.subject, seed),
            elapsed_s: RESPIRATION_WINDOW_S + VITALS_OVERHEAD_S,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierTarget {
    Trauma,
    Hemorrhage,
    RespiratoryDistress,
    Alertness,
}

impl ClassifierTarget {
    pub fn plugin_name(&self) -> &'static str {
        match self {
            ClassifierTarget::Trauma => "trauma",
            ClassifierTarget::Hemorrhage => "hemorrhage",
            ClassifierTarget::RespiratoryDistress => "respiratory_distress",
            ClassifierTarget::Alertness => "alertness",
        }
    }

    fn produces(&self) -> Field {
        match self {
            ClassifierTarget::Trauma => Field::Trauma,
            ClassifierTarget::Hemorrhage => Field::SevereHemorrhage,
            ClassifierTarget::RespiratoryDistress => Field::RespiratoryDistress,
            ClassifierTarget::Alertness => Field::Alertness,
        }
    }
}

/// Reports each true label with probability `accuracy`, its negation
/// otherwise, independently per sub-field.
#[derive(Debug, Clone)]
pub struct ClassifierPlugin {
    pub target: ClassifierTarget,
    pub accuracy: f64,
}

impl AssessmentPlugin for ClassifierPlugin {
    fn run(&mut self, ctx: &AssessmentContext) -> PluginOutput {
        let mut rng = ChaCha8Rng::seed_from_u64(plugin_seed(ctx, self.target.plugin_name()));
        let mut noisy = |truth: bool| if rng.random::<f64>() < self.accuracy { truth } else { !truth };
        let inj = &ctx.subject.injuries;
        let values = match self.target {
            ClassifierTarget::Trauma => TraumaRegion::ALL
                .iter()
                .map(|&region| FieldValue::Trauma {
                    region,
                    present: noisy(inj.trauma.get(region)),
                })
                .collect(),
            ClassifierTarget::Hemorrhage => vec![FieldValue::SevereHemorrhage {
                present: noisy(inj.severe_hemorrhage),
            }],
            ClassifierTarget::RespiratoryDistress => vec![FieldValue::RespiratoryDistress {
                present: noisy(inj.respiratory_distress),
            }],
            ClassifierTarget::Alertness => AlertnessKind::ALL
                .iter()
                .map(|&kind| FieldValue::Alertness {
                    kind,
                    normal: noisy(inj.alertness.get(kind)),
                })
                .collect(),
        };
        PluginOutput {
            values,
            elapsed_s: CLASSIFIER_ELAPSED_S,
        }
    }
}

/// Free-text summary of what is visibly wrong with the subject.
#[derive(Debug, Clone, Default)]
pub struct DescriptionPlugin;

impl AssessmentPlugin for DescriptionPlugin {
    fn run(&mut self, ctx: &AssessmentContext) -> PluginOutput {
        let inj = &ctx.subject.injuries;
        let regions: Vec<String> = TraumaRegion::ALL
            .iter()
            .filter(|r| inj.trauma.get(**r))
            .map(|r| r.name().replace('_', " "))
            .collect();
        let mut text = if ctx.subject.manikin {
            "Manikin lying on the ground".to_string()
        } else {
            "Person lying on the ground".to_string()
        };
        if regions.is_empty() {
            text.push_str(", no visible wounds");
        } else {
            text.push_str(&format!(", visible wounds: {}", regions.join(", ")));
        }
        if inj.severe_hemorrhage {
            text.push_str(", heavy bleeding");
        }
        text.push('.');
        PluginOutput {
            values: vec![FieldValue::Description { text }],
            elapsed_s: DESCRIPTION_ELAPSED_S,
        }
    }
}

/// Descriptor and implementation for a built-in plugin name.
pub fn builtin_plugin(
    name: &str,
    classifier_accuracy: f64,
) -> Option<(Vec<Field>, f64, Box<dyn AssessmentPlugin>)> {
    let vitals = |s: VitalsSensor| Some((s.produces(), VITALS_TIMEOUT_S, Box::new(VitalsPlugin::new(s)) as Box<dyn AssessmentPlugin>));
    let classifier = |t: ClassifierTarget| {
        Some((
            vec![t.produces()],
            DEFAULT_PLUGIN_TIMEOUT_S,
            Box::new(ClassifierPlugin {
                target: t,
                accuracy: classifier_accuracy,
            }) as Box<dyn AssessmentPlugin>,
        ))
    };
    match name {
        "lwir" => vitals(VitalsSensor::Lwir),
        "mmwave" => vitals(VitalsSensor::MmWave),
        "pcr" => vitals(VitalsSensor::Pcr),
        "mtts" => vitals(VitalsSensor::Mtts),
        "trauma" => classifier(ClassifierTarget::Trauma),
        "hemorrhage" => classifier(ClassifierTarget::Hemorrhage),
        "respiratory_distress" => classifier(ClassifierTarget::RespiratoryDistress),
        "alertness" => classifier(ClassifierTarget::Alertness),
        "description" => Some((
            vec![Field::Description],
            DEFAULT_PLUGIN_TIMEOUT_S,
            Box::new(DescriptionPlugin) as Box<dyn AssessmentPlugin>,
        )),
        _ => None,
    }
}

/// Every built-in plugin, enabled per the mode's sensor suite.
pub fn default_plugin_configs(mode: FusionMode) -> Vec<PluginDescriptor> {
    BUILTIN_PLUGINS
        .iter()
        .chain(std::iter::once(&"description"))
        .map(|&name| {
            let (produces, timeout_s, _) = builtin_plugin(name, 0.8).expect("builtin");
            let enabled = match (name, mode) {
                ("lwir" | "mmwave", FusionMode::Year1) | ("pcr" | "mtts", FusionMode::Year2) => false,
                _ => true,
            };
            PluginDescriptor {
                name: name.to_string(),
                enabled,
                produces,
                timeout_s,
            }
        })
        .collect()
}
