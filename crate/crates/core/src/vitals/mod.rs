//! Heart-rate and respiration-rate estimation from sensor traces.
//!
//! All operations are pure. Series are resampled onto a uniform grid at the
//! median sample interval whenever their timestamps are irregular.

mod chrom;
mod filter;
mod peaks;
mod pipelines;
mod spectrum;
pub mod synth;
pub mod trace_csv;

pub use chrom::{chrom_bvp, green_bvp};
pub use filter::{bandpass, detrend, resample_uniform};
pub use peaks::{find_peaks, rate_from_peaks};
pub use pipelines::{
    estimate_hr_rppg, estimate_rate_mmwave, estimate_rate_mtts, estimate_rr_pcr,
    estimate_hr_mmwave, estimate_rr_thermal, sliding_median, PcrConfig, RppgConfig, RppgMethod, ThermalConfig,
    ThermalEstimate,
};
pub use spectrum::{dominant_frequency, SpectralPeak};

use serde::{Deserialize, Serialize};

/// Minimum spectral quality for a cardiac-band estimate to count as valid.
pub const Q_MIN: f64 = 0.3;
/// Respiration windows hold few resolvable bins, so noise alone piles more
/// of its power into one lobe and the gate sits higher.
pub const Q_MIN_RESPIRATION: f64 = 0.55;
/// Interval-regularity gate for the peak-count (MTTS) estimator.
pub const MTTS_Q_MIN: f64 = 0.85;

pub const RPPG_BAND: BandSpec = BandSpec { f_lo: 0.75, f_hi: 3.0 };
/// Cardiac band used by the radar pipeline. Matches the rPPG band so the
/// whole 45–180 bpm range is representable.
pub const MMWAVE_HR_BAND: BandSpec = BandSpec { f_lo: 0.75, f_hi: 3.0 };
pub const RESPIRATION_BAND: BandSpec = BandSpec { f_lo: 0.1, f_hi: 0.5 };

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VitalsError {
    #[error("invalid series: {0}")]
    InvalidSeries(&'static str),
    #[error("band [{f_lo}, {f_hi}] Hz invalid for Nyquist {nyquist} Hz")]
    BandInvalid { f_lo: f64, f_hi: f64, nyquist: f64 },
    #[error("series of {duration:.2} s is shorter than the required {required:.2} s")]
    SeriesTooShort { duration: f64, required: f64 },
    #[error("need at least two peaks, found {0}")]
    TooFewPeaks(usize),
    #[error("trace is degenerate: {0}")]
    DegenerateTrace(&'static str),
    #[error("only {stable_fraction:.2} of frames passed the stability gates")]
    InsufficientStableFrames { stable_fraction: f64 },
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
}

pub type Result<T, E = VitalsError> = std::result::Result<T, E>;

fn validate_timestamps(timestamps: &[f64]) -> Result<()> {
    if timestamps.len() < 2 {
        return Err(VitalsError::InvalidSeries("need at least two samples"));
    }
    if timestamps.iter().any(|t| !t.is_finite()) {
        return Err(VitalsError::InvalidSeries("non-finite timestamp"));
    }
    if timestamps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(VitalsError::InvalidSeries("timestamps must be strictly increasing"));
    }
    Ok(())
}

fn median_interval(timestamps: &[f64]) -> f64 {
    let mut dts: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    dts.sort_by(f64::total_cmp);
    let n = dts.len();
    if n % 2 == 1 {
        dts[n / 2]
    } else {
        0.5 * (dts[n / 2 - 1] + dts[n / 2])
    }
}

/// Timestamped scalar signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    timestamps: Vec<f64>,
    values: Vec<f64>,
    sample_rate_hint: f64,
}

/// Rates recovered from printed timestamps carry rounding noise; snap them
/// to the nearest micro-hertz so a series and its text round trip agree.
fn snap_rate(f: f64) -> f64 {
    let r = (f * 1e6).round() / 1e6;
    if (r - f).abs() <= 1e-9 * f {
        r
    } else {
        f
    }
}

impl SampleSeries {
    pub fn new(timestamps: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_timestamps(&timestamps)?;
        if timestamps.len() != values.len() {
            return Err(VitalsError::InvalidSeries("timestamps and values differ in length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VitalsError::InvalidSeries("non-finite value"));
        }
        let sample_rate_hint = snap_rate(1.0 / median_interval(&timestamps));
        Ok(SampleSeries {
            timestamps,
            values,
            sample_rate_hint,
        })
    }

    /// Uniform series starting at `t0`.
    pub fn uniform(t0: f64, sample_rate: f64, values: Vec<f64>) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(VitalsError::InvalidSeries("sample rate must be positive"));
        }
        let timestamps = (0..values.len()).map(|i| t0 + i as f64 / sample_rate).collect();
        let mut s = Self::new(timestamps, values)?;
        s.sample_rate_hint = sample_rate;
        Ok(s)
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sample_rate_hint(&self) -> f64 {
        self.sample_rate_hint
    }

    /// Span covered by the samples, counting one interval per sample.
    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hint
    }

    pub fn is_uniform(&self) -> bool {
        let dt = 1.0 / self.sample_rate_hint;
        self.timestamps
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt)
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        SampleSeries {
            timestamps: self.timestamps.clone(),
            values,
            sample_rate_hint: self.sample_rate_hint,
        }
    }

    /// Same samples with every timestamp shifted by `offset` seconds.
    pub fn shifted(&self, offset: f64) -> Self {
        SampleSeries {
            timestamps: self.timestamps.iter().map(|t| t + offset).collect(),
            values: self.values.clone(),
            sample_rate_hint: self.sample_rate_hint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub f_lo: f64,
    pub f_hi: f64,
}

impl BandSpec {
    pub fn new(f_lo: f64, f_hi: f64) -> Self {
        BandSpec { f_lo, f_hi }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        if !(self.f_lo > 0.0 && self.f_lo < self.f_hi && self.f_hi < nyquist) {
            return Err(VitalsError::BandInvalid {
                f_lo: self.f_lo,
                f_hi: self.f_hi,
                nyquist,
            });
        }
        Ok(())
    }

    pub fn bpm_range(&self) -> (f64, f64) {
        (self.f_lo * 60.0, self.f_hi * 60.0)
    }

    /// Default spectral quality gate for this band.
    pub fn q_min(&self) -> f64 {
        if self.f_hi <= RESPIRATION_BAND.f_hi {
            Q_MIN_RESPIRATION
        } else {
            Q_MIN
        }
    }

    /// Peak-count rate snapped into the band when it lies outside by less
    /// than the resolution of a `duration_s` window, as a spectral peak
    /// would be; `None` when it lies further out.
    pub fn snap_bpm(&self, bpm: f64, duration_s: f64) -> Option<f64> {
        let (lo, hi) = self.bpm_range();
        let slack = 60.0 / duration_s;
        (bpm > lo - slack && bpm < hi + slack).then(|| bpm.clamp(lo, hi))
    }

    pub fn contains_bpm(&self, bpm: f64) -> bool {
        let (lo, hi) = self.bpm_range();
        // tolerate rounding from the Hz -> bpm conversion
        bpm >= lo - 1e-9 && bpm <= hi + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Beats or breaths per minute. Zero when invalid.
    pub bpm: f64,
    pub quality: f64,
    pub valid: bool,
    pub source: String,
}

impl RateEstimate {
    pub fn invalid(source: impl Into<String>) -> Self {
        RateEstimate {
            bpm: 0.0,
            quality: 0.0,
            valid: false,
            source: source.into(),
        }
    }

    pub fn valid(bpm: f64, quality: f64, source: impl Into<String>) -> Self {
        RateEstimate {
            bpm,
            quality: quality.clamp(0.0, 1.0),
            valid: true,
            source: source.into(),
        }
    }
}

/// Per-frame mean skin-mask color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgbTrace {
    timestamps: Vec<f64>,
    rgb: Vec<[f64; 3]>,
}

impl RgbTrace {
    pub fn new(timestamps: Vec<f64>, rgb: Vec<[f64; 3]>) -> Result<Self> {
        validate_timestamps(&timestamps)?;
        if timestamps.len() != rgb.len() {
            return Err(VitalsError::InvalidSeries("timestamps and frames differ in length"));
        }
        if rgb.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(VitalsError::InvalidSeries("channel values must lie in [0, 1]"));
        }
        Ok(RgbTrace { timestamps, rgb })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn frames(&self) -> &[[f64; 3]] {
        &self.rgb
    }

    pub fn len(&self) -> usize {
        self.rgb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rgb.is_empty()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.rgb.iter().map(|f| f[c]).collect()
    }
}

/// Nostril ROI intensity with the pose-tracker side channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalRoiTrace {
    timestamps: Vec<f64>,
    /// Mean temperature-filtered ROI intensity, °F.
    intensity: Vec<f64>,
    /// Head keypoint displacement since the previous frame, pixels.
    displacement: Vec<f64>,
    /// Pose confidence in [0, 1].
    confidence: Vec<f64>,
}

impl ThermalRoiTrace {
    pub fn new(
        timestamps: Vec<f64>,
        intensity: Vec<f64>,
        displacement: Vec<f64>,
        confidence: Vec<f64>,
    ) -> Result<Self> {
        validate_timestamps(&timestamps)?;
        let n = timestamps.len();
        if intensity.len() != n || displacement.len() != n || confidence.len() != n {
            return Err(VitalsError::InvalidSeries("thermal streams differ in length"));
        }
        if intensity.iter().chain(&displacement).any(|v| !v.is_finite()) {
            return Err(VitalsError::InvalidSeries("non-finite value"));
        }
        if confidence.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(VitalsError::InvalidSeries("confidence must lie in [0, 1]"));
        }
        Ok(ThermalRoiTrace {
            timestamps,
            intensity,
            displacement,
            confidence,
        })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn displacement(&self) -> &[f64] {
        &self.displacement
    }

    pub fn confidence(&self) -> &[f64] {
        &self.confidence
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}
