//! Ground-truth trace generator.
//!
//! Every trace is a closed-form composition of two waveforms,
//!
//! ```text
//! cardiac(t) = sin(2π·f_h·t + φ_h) + 0.25·sin(2π·2f_h·t + φ_h2)
//! resp(t)    = sin(2π·f_r·t + φ_r)
//! ```
//!
//! with `f_h = hr/60`, `f_r = rr/60` and phases drawn (in that order) from a
//! ChaCha8 stream seeded with `seed`. White Gaussian noise follows from the
//! same stream, sample by sample. Modalities mix the waveforms as follows:
//!
//! | modality | signal | SNR reference |
//! |----------|--------|---------------|
//! | mmwave   | `0.4 mm·cardiac + 4 mm·resp` (m) | cardiac term |
//! | pcr      | `0.8 m + 5 mm·resp + 0.1 mm·cardiac` (m) | respiratory term |
//! | rgb      | `base_c·(1 + 0.004·sig_c·cardiac + 0.002·resp)` per channel | green pulse term |
//! | thermal  | `ambient + 0.1·contrast·resp + drift·t` (°F) | respiratory term |
//! | mtts     | `cardiac + 0.5·resp` (network output stand-in) | cardiac term |
//!
//! `sig = (0.33, 0.77, 0.53)` is the standardized skin pulse signature and
//! `base = (0.62, 0.45, 0.36)` the mean skin color.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::{Result, RgbTrace, SampleSeries, ThermalRoiTrace, VitalsError};

pub const CARDIAC_HARMONIC: f64 = 0.25;
pub const MMWAVE_CARDIAC_M: f64 = 0.4e-3;
pub const MMWAVE_RESP_M: f64 = 4.0e-3;
pub const PCR_RANGE_M: f64 = 0.8;
pub const PCR_RESP_M: f64 = 5.0e-3;
pub const PCR_CARDIAC_M: f64 = 0.1e-3;
pub const RGB_BASE: [f64; 3] = [0.62, 0.45, 0.36];
pub const RGB_SIGNATURE: [f64; 3] = [0.33, 0.77, 0.53];
pub const RGB_PULSE: f64 = 0.004;
pub const RGB_RESP: f64 = 0.002;
/// ROI swing in °F per °F of breath-to-ambient contrast.
pub const THERMAL_SWING_PER_DEGREE: f64 = 0.1;
pub const THERMAL_AMBIENT_F: f64 = 70.0;
pub const MTTS_RESP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Rgb,
    #[serde(rename = "mmwave")]
    MmWave,
    Pcr,
    Thermal,
    Mtts,
}

impl Modality {
    pub fn name(&self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::MmWave => "mmwave",
            Modality::Pcr => "pcr",
            Modality::Thermal => "thermal",
            Modality::Mtts => "mtts",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "rgb" => Modality::Rgb,
            "mmwave" => Modality::MmWave,
            "pcr" => Modality::Pcr,
            "thermal" => Modality::Thermal,
            "mtts" => Modality::Mtts,
            _ => return None,
        })
    }

    /// (duration s, sample rate Hz)
    pub fn default_window(&self) -> (f64, f64) {
        match self {
            Modality::Rgb | Modality::Mtts => (10.0, 30.0),
            Modality::MmWave | Modality::Pcr => (30.0, 20.0),
            Modality::Thermal => (30.0, 15.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionArtifact {
    #[default]
    None,
    /// Quasi-periodic body sway: four harmonics of `freq_hz` with 1/h
    /// amplitudes whose phases random-walk at `jitter` rad/√s. Added to
    /// radar displacement (meters) or as a common illumination change (rgb).
    Sway {
        freq_hz: f64,
        amplitude: f64,
        jitter: f64,
    },
    /// Head-motion bursts (thermal): roughly `fraction` of the frames fall
    /// in 1 s bursts with keypoint displacement `magnitude_px`, depressed pose
    /// confidence and a corrupted ROI reading.
    Bursts { fraction: f64, magnitude_px: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub hr_bpm: f64,
    pub rr_bpm: f64,
    pub modality: Modality,
    /// `f64::INFINITY` disables noise.
    pub noise_snr_db: f64,
    pub artifact: MotionArtifact,
    pub seed: u64,
    pub duration_s: Option<f64>,
    pub sample_rate: Option<f64>,
    /// Thermal only: breath-to-ambient contrast, °F.
    pub contrast_f: f64,
    /// Thermal only: linear sensor drift, °F/s.
    pub drift_f_per_s: f64,
    /// Scales the chest-motion terms (0 models a side view with no chest
    /// signal). Radar modalities only.
    pub chest_visibility: f64,
    /// Scales every vital-sign term. Noise stays referenced to the nominal
    /// signal, so 0 gives a noise-only trace at the configured SNR.
    pub signal_gain: f64,
}

impl SynthSpec {
    pub fn new(hr_bpm: f64, rr_bpm: f64, modality: Modality, seed: u64) -> Self {
        SynthSpec {
            hr_bpm,
            rr_bpm,
            modality,
            noise_snr_db: f64::INFINITY,
            artifact: MotionArtifact::None,
            seed,
            duration_s: None,
            sample_rate: None,
            contrast_f: 10.0,
            drift_f_per_s: 0.0,
            chest_visibility: 1.0,
            signal_gain: 1.0,
        }
    }

    pub fn snr_db(mut self, snr: f64) -> Self {
        self.noise_snr_db = snr;
        self
    }

    pub fn artifact(mut self, a: MotionArtifact) -> Self {
        self.artifact = a;
        self
    }

    pub fn window(mut self, duration_s: f64, sample_rate: f64) -> Self {
        self.duration_s = Some(duration_s);
        self.sample_rate = Some(sample_rate);
        self
    }

    pub fn contrast(mut self, contrast_f: f64) -> Self {
        self.contrast_f = contrast_f;
        self
    }

    pub fn drift(mut self, drift_f_per_s: f64) -> Self {
        self.drift_f_per_s = drift_f_per_s;
        self
    }

    pub fn chest_visibility(mut self, v: f64) -> Self {
        self.chest_visibility = v;
        self
    }

    /// Drops the vital signs and keeps the noise; a noise-free spec gets
    /// 0 dB so the trace is not constant.
    pub fn noise_only(mut self) -> Self {
        self.signal_gain = 0.0;
        if self.noise_snr_db.is_infinite() {
            self.noise_snr_db = 0.0;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    Series(SampleSeries),
    Rgb(RgbTrace),
    Thermal(ThermalRoiTrace),
}

impl Trace {
    pub fn into_series(self) -> Option<SampleSeries> {
        match self {
            Trace::Series(s) => Some(s),
            _ => None,
        }
    }

    pub fn into_rgb(self) -> Option<RgbTrace> {
        match self {
            Trace::Rgb(t) => Some(t),
            _ => None,
        }
    }

    pub fn into_thermal(self) -> Option<ThermalRoiTrace> {
        match self {
            Trace::Thermal(t) => Some(t),
            _ => None,
        }
    }
}

/// Phases of the closed-form components for a seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phases {
    pub cardiac: f64,
    pub harmonic: f64,
    pub respiratory: f64,
}

impl Phases {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Phases {
            cardiac: rng.random::<f64>() * TAU,
            harmonic: rng.random::<f64>() * TAU,
            respiratory: rng.random::<f64>() * TAU,
        }
    }

    pub fn for_seed(seed: u64) -> Self {
        Self::draw(&mut ChaCha8Rng::seed_from_u64(seed))
    }
}

pub fn cardiac_waveform(hr_bpm: f64, phases: &Phases, t: f64) -> f64 {
    let f = hr_bpm / 60.0;
    (TAU * f * t + phases.cardiac).sin() + CARDIAC_HARMONIC * (TAU * 2.0 * f * t + phases.harmonic).sin()
}

pub fn respiratory_waveform(rr_bpm: f64, phases: &Phases, t: f64) -> f64 {
    (TAU * rr_bpm / 60.0 * t + phases.respiratory).sin()
}

/// RMS of the cardiac waveform over whole periods.
pub fn cardiac_rms() -> f64 {
    ((1.0 + CARDIAC_HARMONIC * CARDIAC_HARMONIC) / 2.0).sqrt()
}

fn noise_sigma(reference_rms: f64, snr_db: f64) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        reference_rms / 10f64.powf(snr_db / 20.0)
    }
}

struct Sway {
    freq_hz: f64,
    amplitude: f64,
    jitter_step: f64,
    phases: [f64; 4],
}

impl Sway {
    fn next(&mut self, t: f64, rng: &mut ChaCha8Rng) -> f64 {
        let mut v = 0.0;
        for (h, phase) in self.phases.iter_mut().enumerate() {
            let k = (h + 1) as f64;
            v += self.amplitude / k * (TAU * k * self.freq_hz * t + *phase).sin();
            let step: f64 = StandardNormal.sample(rng);
            *phase += self.jitter_step * step;
        }
        v
    }
}

/// Generates a deterministic trace embedding the given rates.
pub fn synth_vital_signal(spec: &SynthSpec) -> Result<Trace> {
    if !(30.0..=200.0).contains(&spec.hr_bpm) {
        return Err(VitalsError::ParamOutOfRange(format!("hr_bpm {} not in [30, 200]", spec.hr_bpm)));
    }
    if !(4.0..=40.0).contains(&spec.rr_bpm) {
        return Err(VitalsError::ParamOutOfRange(format!("rr_bpm {} not in [4, 40]", spec.rr_bpm)));
    }
    if spec.noise_snr_db.is_nan() {
        return Err(VitalsError::ParamOutOfRange("noise_snr_db is NaN".into()));
    }
    let (default_duration, default_rate) = spec.modality.default_window();
    let duration = spec.duration_s.unwrap_or(default_duration);
    let fs = spec.sample_rate.unwrap_or(default_rate);
    if !(duration > 0.0 && fs > 0.0 && duration.is_finite() && fs.is_finite()) {
        return Err(VitalsError::ParamOutOfRange("window must be positive".into()));
    }
    let n = (duration * fs).round() as usize;
    if n < 2 {
        return Err(VitalsError::ParamOutOfRange("window shorter than two samples".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phases = Phases::draw(&mut rng);
    let ts: Vec<f64> = (0..n).map(|i| i as f64 / fs).collect();
    let mut sway = match spec.artifact {
        MotionArtifact::Sway {
            freq_hz,
            amplitude,
            jitter,
        } => Some(Sway {
            freq_hz,
            amplitude,
            jitter_step: jitter / fs.sqrt(),
            phases: [0.0, 1.0, 2.0, 3.0],
        }),
        _ => None,
    };
    let gain = spec.signal_gain;
    let cardiac = |t: f64| gain * cardiac_waveform(spec.hr_bpm, &phases, t);
    let resp = |t: f64| gain * respiratory_waveform(spec.rr_bpm, &phases, t);
    let vis = spec.chest_visibility;

    match spec.modality {
        Modality::MmWave | Modality::Pcr | Modality::Mtts => {
            let (sigma, offset) = match spec.modality {
                Modality::MmWave => (noise_sigma(MMWAVE_CARDIAC_M * cardiac_rms(), spec.noise_snr_db), 0.0),
                Modality::Pcr => (
                    noise_sigma(PCR_RESP_M * std::f64::consts::FRAC_1_SQRT_2, spec.noise_snr_db),
                    PCR_RANGE_M,
                ),
                _ => (noise_sigma(cardiac_rms(), spec.noise_snr_db), 0.0),
            };
            let mut values = Vec::with_capacity(n);
            for &t in &ts {
                let clean = match spec.modality {
                    Modality::MmWave => vis * (MMWAVE_CARDIAC_M * cardiac(t) + MMWAVE_RESP_M * resp(t)),
                    Modality::Pcr => vis * (PCR_RESP_M * resp(t) + PCR_CARDIAC_M * cardiac(t)),
                    _ => cardiac(t) + MTTS_RESP * resp(t),
                };
                let artifact = sway.as_mut().map_or(0.0, |s| s.next(t, &mut rng));
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(offset + clean + artifact + sigma * z);
            }
            Ok(Trace::Series(SampleSeries::uniform(0.0, fs, values)?))
        }
        Modality::Rgb => {
            let sigma = noise_sigma(
                RGB_BASE[1] * RGB_PULSE * RGB_SIGNATURE[1] * cardiac_rms(),
                spec.noise_snr_db,
            );
            let mut frames = Vec::with_capacity(n);
            for &t in &ts {
                let c = cardiac(t);
                let r = resp(t);
                let illum = 1.0 + sway.as_mut().map_or(0.0, |s| s.next(t, &mut rng));
                let mut px = [0.0; 3];
                for (ch, v) in px.iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let clean = RGB_BASE[ch] * (1.0 + RGB_PULSE * RGB_SIGNATURE[ch] * c + RGB_RESP * r);
                    *v = (clean * illum + sigma * z).clamp(0.0, 1.0);
                }
                frames.push(px);
            }
            Ok(Trace::Rgb(RgbTrace::new(ts, frames)?))
        }
        Modality::Thermal => {
            let swing = THERMAL_SWING_PER_DEGREE * spec.contrast_f;
            let sigma = noise_sigma(swing * std::f64::consts::FRAC_1_SQRT_2, spec.noise_snr_db);
            let in_burst = burst_mask(&spec.artifact, n, fs, &mut rng);
            let jitter = Normal::new(0.0, 0.4).expect("valid normal");
            let mut intensity = Vec::with_capacity(n);
            let mut displacement = Vec::with_capacity(n);
            let mut confidence = Vec::with_capacity(n);
            for (i, &t) in ts.iter().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                let d: f64 = jitter.sample(&mut rng);
                let mut value = THERMAL_AMBIENT_F + swing * resp(t) + spec.drift_f_per_s * t + sigma * z;
                let (disp, conf) = match (in_burst[i], spec.artifact) {
                    (true, MotionArtifact::Bursts { magnitude_px, .. }) => {
                        // ROI slides off the nostrils
                        value += 3.0 * swing * (rng.random::<f64>() - 0.5);
                        (magnitude_px + d.abs(), 0.3)
                    }
                    _ => (d.abs(), 0.92),
                };
                intensity.push(value);
                displacement.push(disp);
                confidence.push(conf);
            }
            Ok(Trace::Thermal(ThermalRoiTrace::new(ts, intensity, displacement, confidence)?))
        }
    }
}

/// Marks frames covered by 1 s motion bursts so that about `fraction` of
/// the window is affected. Burst starts are drawn uniformly.
fn burst_mask(artifact: &MotionArtifact, n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut mask = vec![false; n];
    let MotionArtifact::Bursts { fraction, .. } = *artifact else {
        return mask;
    };
    let burst_len = fs.round().max(1.0) as usize;
    let target = ((fraction.clamp(0.0, 1.0)) * n as f64).round() as usize;
    let mut covered = 0;
    let mut guard = 0;
    while covered < target && guard < 10_000 {
        guard += 1;
        let start = rng.random_range(0..n);
        for slot in mask.iter_mut().skip(start).take(burst_len) {
            if !*slot && covered < target {
                *slot = true;
                covered += 1;
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vitals::{dominant_frequency, BandSpec};

    #[test]
    fn rejects_out_of_range_rates() {
        assert!(synth_vital_signal(&SynthSpec::new(20.0, 15.0, Modality::MmWave, 1)).is_err());
        assert!(synth_vital_signal(&SynthSpec::new(75.0, 50.0, Modality::MmWave, 1)).is_err());
        assert!(synth_vital_signal(&SynthSpec::new(75.0, 3.0, Modality::Pcr, 1)).is_err());
    }

    #[test]
    fn mmwave_is_the_documented_composition() {
        let s = synth_vital_signal(&SynthSpec::new(75.0, 15.0, Modality::MmWave, 1))
            .unwrap()
            .into_series()
            .unwrap();
        let ph = Phases::for_seed(1);
        for (t, v) in s.timestamps().iter().zip(s.values()) {
            let expect = MMWAVE_CARDIAC_M * cardiac_waveform(75.0, &ph, *t)
                + MMWAVE_RESP_M * respiratory_waveform(15.0, &ph, *t);
            assert_eq!(*v, expect);
        }
        let hr = dominant_frequency(&s, &BandSpec::new(1.0, 3.0)).unwrap();
        let rr = dominant_frequency(&s, &BandSpec::new(0.1, 0.5)).unwrap();
        assert!((hr.frequency_hz - 1.25).abs() < 0.005, "{hr:?}");
        assert!((rr.frequency_hz - 0.25).abs() < 0.005, "{rr:?}");
    }

    #[test]
    fn same_seed_bit_identical() {
        for m in [Modality::Rgb, Modality::MmWave, Modality::Pcr, Modality::Thermal, Modality::Mtts] {
            let spec = SynthSpec::new(65.0, 12.0, m, 7)
                .snr_db(20.0)
                .artifact(MotionArtifact::Bursts {
                    fraction: 0.1,
                    magnitude_px: 6.0,
                });
            assert_eq!(synth_vital_signal(&spec).unwrap(), synth_vital_signal(&spec).unwrap());
        }
        let a = synth_vital_signal(&SynthSpec::new(65.0, 12.0, Modality::MmWave, 7).snr_db(10.0)).unwrap();
        let b = synth_vital_signal(&SynthSpec::new(65.0, 12.0, Modality::MmWave, 8).snr_db(10.0)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn default_windows() {
        let rgb = synth_vital_signal(&SynthSpec::new(65.0, 12.0, Modality::Rgb, 7))
            .unwrap()
            .into_rgb()
            .unwrap();
        assert_eq!(rgb.len(), 300);
        let th = synth_vital_signal(&SynthSpec::new(65.0, 12.0, Modality::Thermal, 7))
            .unwrap()
            .into_thermal()
            .unwrap();
        assert_eq!(th.len(), 450);
    }

    #[test]
    fn burst_fraction_is_respected() {
        let th = synth_vital_signal(
            &SynthSpec::new(65.0, 12.0, Modality::Thermal, 3).artifact(MotionArtifact::Bursts {
                fraction: 0.6,
                magnitude_px: 8.0,
            }),
        )
        .unwrap()
        .into_thermal()
        .unwrap();
        let moving = th.displacement().iter().filter(|d| **d > 3.0).count();
        let frac = moving as f64 / th.len() as f64;
        assert!((frac - 0.6).abs() < 0.02, "{frac}");
    }
}
