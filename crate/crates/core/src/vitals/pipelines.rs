use serde::{Deserialize, Serialize};

use super::chrom::{chrom_bvp, green_bvp};
use super::filter::{bandpass, resample_uniform};
use super::peaks::{find_peaks, rate_from_peaks};
use super::spectrum::dominant_frequency;
use super::synth::THERMAL_SWING_PER_DEGREE;
use super::{
    BandSpec, RateEstimate, Result, RgbTrace, SampleSeries, ThermalRoiTrace, VitalsError,
    MMWAVE_HR_BAND, MTTS_Q_MIN, Q_MIN, Q_MIN_RESPIRATION, RESPIRATION_BAND, RPPG_BAND,
};

/// Cycles at the low band edge a peak-count window must span.
const MTTS_MIN_CYCLES: f64 = 3.0;
/// Radar windows shorter than this are rejected.
const RADAR_MIN_DURATION_S: f64 = 10.0;
/// Band-limited displacement below this RMS is treated as no signal.
const MMWAVE_MIN_RMS_M: f64 = 1e-6;

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt()
}

fn require_duration(s: &SampleSeries, required: f64) -> Result<()> {
    let duration = s.duration();
    if duration + 1e-9 < required {
        return Err(VitalsError::SeriesTooShort { duration, required });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RppgMethod {
    #[default]
    Chrom,
    Green,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RppgConfig {
    pub method: RppgMethod,
    pub band: BandSpec,
    pub q_min: f64,
}

impl Default for RppgConfig {
    fn default() -> Self {
        RppgConfig {
            method: RppgMethod::Chrom,
            band: RPPG_BAND,
            q_min: Q_MIN,
        }
    }
}

/// Camera heart rate: BVP extraction, band-pass, spectral peak.
pub fn estimate_hr_rppg(trace: &RgbTrace, cfg: &RppgConfig) -> Result<RateEstimate> {
    let bvp = match cfg.method {
        RppgMethod::Chrom => chrom_bvp(trace)?,
        RppgMethod::Green => green_bvp(trace)?,
    };
    let filtered = bandpass(&bvp, &cfg.band)?;
    let peak = dominant_frequency(&filtered, &cfg.band)?;
    if peak.quality < cfg.q_min {
        return Ok(RateEstimate {
            quality: peak.quality,
            ..RateEstimate::invalid("rppg")
        });
    }
    Ok(RateEstimate::valid(peak.frequency_hz * 60.0, peak.quality, "rppg"))
}

/// Radar chest-displacement rate in the given band (cardiac or
/// respiratory).
pub fn estimate_rate_mmwave(displacement: &SampleSeries, band: &BandSpec) -> Result<RateEstimate> {
    require_duration(displacement, RADAR_MIN_DURATION_S)?;
    let filtered = bandpass(displacement, band)?;
    let peak = dominant_frequency(&filtered, band)?;
    if rms(filtered.values()) < MMWAVE_MIN_RMS_M || peak.quality < band.q_min() {
        return Ok(RateEstimate {
            quality: peak.quality,
            ..RateEstimate::invalid("mmwave")
        });
    }
    Ok(RateEstimate::valid(peak.frequency_hz * 60.0, peak.quality, "mmwave"))
}

/// Median of the most recent `window` valid estimates.
pub fn sliding_median(estimates: &[RateEstimate], window: usize) -> RateEstimate {
    let window = window.max(1);
    let recent: Vec<&RateEstimate> = estimates.iter().filter(|e| e.valid).collect();
    let recent = &recent[recent.len().saturating_sub(window)..];
    let Some(last) = recent.last() else {
        let source = estimates.last().map_or("median", |e| e.source.as_str());
        return RateEstimate::invalid(source);
    };
    let mut bpm: Vec<f64> = recent.iter().map(|e| e.bpm).collect();
    bpm.sort_by(f64::total_cmp);
    let n = bpm.len();
    let median = if n % 2 == 1 {
        bpm[n / 2]
    } else {
        0.5 * (bpm[n / 2 - 1] + bpm[n / 2])
    };
    let quality = recent.iter().map(|e| e.quality).sum::<f64>() / n as f64;
    RateEstimate::valid(median, quality, last.source.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcrConfig {
    pub band: BandSpec,
    pub min_spacing_s: f64,
    pub min_prominence: f64,
    pub q_min: f64,
    /// Band-limited range fluctuation below this RMS means the chest is
    /// not in view.
    pub min_rms_m: f64,
}

impl Default for PcrConfig {
    fn default() -> Self {
        PcrConfig {
            band: RESPIRATION_BAND,
            min_spacing_s: 1.6,
            min_prominence: 0.25,
            q_min: Q_MIN_RESPIRATION,
            min_rms_m: 1e-4,
        }
    }
}

/// Pulsed-radar respiration: band-pass the range trace and count peaks.
pub fn estimate_rr_pcr(distance: &SampleSeries, cfg: &PcrConfig) -> Result<RateEstimate> {
    require_duration(distance, RADAR_MIN_DURATION_S)?;
    let filtered = bandpass(distance, &cfg.band)?;
    let peak = dominant_frequency(&filtered, &cfg.band)?;
    let invalid = RateEstimate {
        quality: peak.quality,
        ..RateEstimate::invalid("pcr")
    };
    if rms(filtered.values()) < cfg.min_rms_m || peak.quality < cfg.q_min {
        return Ok(invalid);
    }
    let peaks = find_peaks(&filtered, cfg.min_spacing_s, cfg.min_prominence);
    match rate_from_peaks(&peaks, filtered.timestamps()) {
        Ok(bpm) => match cfg.band.snap_bpm(bpm, filtered.duration()) {
            Some(bpm) => Ok(RateEstimate::valid(bpm, peak.quality, "pcr")),
            None => Ok(invalid),
        },
        Err(_) => Ok(invalid),
    }
}

/// Peak-count rate on a learned-model output signal (the network itself is
/// not part of this crate). Quality is interval regularity,
/// `1 - std/mean` of the inter-peak intervals; it means nothing with fewer
/// than two intervals, and the window must span three cycles at the low
/// band edge like the spectral estimators.
pub fn estimate_rate_mtts(signal: &SampleSeries, band: &BandSpec) -> Result<RateEstimate> {
    require_duration(signal, MTTS_MIN_CYCLES / band.f_lo)?;
    let filtered = bandpass(signal, band)?;
    let peaks = find_peaks(&filtered, 0.7 / band.f_hi, 0.2);
    let ts = filtered.timestamps();
    if peaks.len() < 3 {
        return Ok(RateEstimate::invalid("mtts"));
    }
    let bpm = rate_from_peaks(&peaks, ts)?;
    let intervals: Vec<f64> = peaks.windows(2).map(|w| ts[w[1]] - ts[w[0]]).collect();
    let mean = intervals.iter().sum::<f64>() / intervals.len() as f64;
    let sd = (intervals.iter().map(|i| (i - mean).powi(2)).sum::<f64>() / intervals.len() as f64).sqrt();
    let quality = (1.0 - sd / mean).clamp(0.0, 1.0);
    match band.snap_bpm(bpm, filtered.duration()) {
        Some(bpm) if quality >= MTTS_Q_MIN => Ok(RateEstimate::valid(bpm, quality, "mtts")),
        _ => Ok(RateEstimate {
            quality,
            ..RateEstimate::invalid("mtts")
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalConfig {
    pub baseline_window_s: f64,
    pub motion_threshold_px: f64,
    pub conf_min: f64,
    pub smoothing_s: f64,
    pub min_spacing_s: f64,
    /// Prominence fraction at full pose confidence; raised as mean
    /// confidence drops.
    pub base_prominence: f64,
    /// Breath-to-ambient contrast below which no rate is reported, °F.
    pub min_contrast_f: f64,
    pub band: BandSpec,
    pub q_min: f64,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        ThermalConfig {
            baseline_window_s: 5.0,
            motion_threshold_px: 3.0,
            conf_min: 0.5,
            smoothing_s: 0.5,
            min_spacing_s: 1.4,
            base_prominence: 0.2,
            min_contrast_f: 5.0,
            band: RESPIRATION_BAND,
            q_min: Q_MIN_RESPIRATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalEstimate {
    /// Rate averaged over the window.
    pub average: RateEstimate,
    /// Rate from the most recent inter-peak interval.
    pub instantaneous_bpm: Option<f64>,
    /// Fewer than 20% of frames were gated out.
    pub stable: bool,
    pub gated_fraction: f64,
    pub contrast_estimate_f: f64,
    pub peaks: Vec<usize>,
}

/// Centered moving average whose window shrinks symmetrically at the
/// edges (so a linear ramp is reproduced exactly).
fn centered_moving_average(x: &[f64], half: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            (prefix[i + h + 1] - prefix[i - h]) / (2 * h + 1) as f64
        })
        .collect()
}

/// Replaces gated samples by linear interpolation between the nearest kept
/// neighbors (held constant past the ends).
fn fill_gated(values: &[f64], keep: &[bool]) -> Vec<f64> {
    let n = values.len();
    let kept: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    let mut out = values.to_vec();
    let mut k = 0;
    for i in 0..n {
        if keep[i] {
            continue;
        }
        while k + 1 < kept.len() && kept[k + 1] < i {
            k += 1;
        }
        let (a, b) = (kept[k], kept.get(k + 1).copied());
        out[i] = match b {
            _ if i < a => values[a],
            Some(b) => values[a] + (values[b] - values[a]) * (i - a) as f64 / (b - a) as f64,
            None => values[a],
        };
    }
    out
}

/// Thermal respiration from the nostril ROI.
///
/// Frames whose head keypoints moved more than the motion threshold or
/// whose pose confidence is below `conf_min` are dropped and bridged by
/// interpolation. The bridged intensity has a centered moving-average
/// baseline removed, is smoothed, and peak-detected. The averaged rate only
/// uses inter-peak intervals free of gated frames, and clear of the ends
/// where the shrinking baseline window bends the waveform, when any exist.
pub fn estimate_rr_thermal(trace: &ThermalRoiTrace, cfg: &ThermalConfig) -> Result<ThermalEstimate> {
    let n = trace.len();
    let keep: Vec<bool> = trace
        .displacement()
        .iter()
        .zip(trace.confidence())
        .map(|(&d, &c)| d <= cfg.motion_threshold_px && c >= cfg.conf_min)
        .collect();
    let kept = keep.iter().filter(|k| **k).count();
    let stable_fraction = kept as f64 / n as f64;
    if stable_fraction < 0.5 {
        return Err(VitalsError::InsufficientStableFrames { stable_fraction });
    }
    let gated_fraction = 1.0 - stable_fraction;
    let stable = gated_fraction < 0.2;

    let raw = SampleSeries::new(trace.timestamps().to_vec(), fill_gated(trace.intensity(), &keep))?;
    let series = resample_uniform(&raw);
    let fs = series.sample_rate_hint();
    let half_baseline = ((cfg.baseline_window_s * fs) / 2.0).round() as usize;
    let half_smooth = ((cfg.smoothing_s * fs) / 2.0).round() as usize;
    let baseline = centered_moving_average(series.values(), half_baseline);
    let detrended: Vec<f64> = series.values().iter().zip(&baseline).map(|(x, b)| x - b).collect();
    let smoothed = series.with_values(centered_moving_average(&detrended, half_smooth));

    let peak = dominant_frequency(&smoothed, &cfg.band)?;
    let band_limited = bandpass(&series, &cfg.band)?;
    let contrast_estimate_f =
        std::f64::consts::SQRT_2 * rms(band_limited.values()) / THERMAL_SWING_PER_DEGREE;

    let kept_conf: Vec<f64> = trace
        .confidence()
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(c, _)| *c)
        .collect();
    let mean_conf = kept_conf.iter().sum::<f64>() / kept_conf.len() as f64;
    let prominence = (cfg.base_prominence * (2.0 - mean_conf)).min(0.9);
    let peaks = find_peaks(&smoothed, cfg.min_spacing_s, prominence);

    let ts = smoothed.timestamps();
    let original_ts = trace.timestamps();
    let gated_between = |a: f64, b: f64| {
        original_ts
            .iter()
            .zip(&keep)
            .any(|(t, k)| !*k && *t >= a && *t <= b)
    };
    let intervals: Vec<(f64, bool)> = peaks
        .windows(2)
        .map(|w| (ts[w[1]] - ts[w[0]], gated_between(ts[w[0]], ts[w[1]])))
        .collect();
    let last = ts.len() - 1;
    let clean: Vec<f64> = intervals
        .iter()
        .zip(peaks.windows(2))
        .filter(|((_, g), w)| !g && w[0] >= half_baseline && last - w[1] >= half_baseline)
        .map(|((i, _), _)| *i)
        .collect();

    let mut estimate = ThermalEstimate {
        average: RateEstimate {
            quality: peak.quality,
            ..RateEstimate::invalid("lwir")
        },
        instantaneous_bpm: intervals.last().map(|(i, _)| 60.0 / i),
        stable,
        gated_fraction,
        contrast_estimate_f,
        peaks: peaks.clone(),
    };
    if intervals.is_empty()
        || peak.quality < cfg.q_min
        || contrast_estimate_f < cfg.min_contrast_f
    {
        return Ok(estimate);
    }
    let bpm = if clean.is_empty() {
        rate_from_peaks(&peaks, ts)?
    } else {
        60.0 * clean.len() as f64 / clean.iter().sum::<f64>()
    };
    if let Some(bpm) = cfg.band.snap_bpm(bpm, smoothed.duration()) {
        estimate.average = RateEstimate::valid(bpm, peak.quality, "lwir");
    }
    Ok(estimate)
}

/// Convenience: radar heart rate in the default cardiac band.
pub fn estimate_hr_mmwave(displacement: &SampleSeries) -> Result<RateEstimate> {
    estimate_rate_mmwave(displacement, &MMWAVE_HR_BAND)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vitals::synth::{synth_vital_signal, Modality, MotionArtifact, SynthSpec};

    fn series(spec: SynthSpec) -> SampleSeries {
        synth_vital_signal(&spec).unwrap().into_series().unwrap()
    }

    #[test]
    fn rppg_recovers_generator_rate() {
        let t = synth_vital_signal(&SynthSpec::new(66.0, 14.0, Modality::Rgb, 3).snr_db(20.0))
            .unwrap()
            .into_rgb()
            .unwrap();
        assert_eq!(t.len(), 300);
        let e = estimate_hr_rppg(&t, &RppgConfig::default()).unwrap();
        assert!(e.valid && (e.bpm - 66.0).abs() <= 2.0, "{e:?}");
        assert_eq!(e.source, "rppg");
    }

    #[test]
    fn rppg_closes_loop_seed_seven() {
        let t = synth_vital_signal(&SynthSpec::new(65.0, 12.0, Modality::Rgb, 7).snr_db(20.0))
            .unwrap()
            .into_rgb()
            .unwrap();
        let e = estimate_hr_rppg(&t, &RppgConfig::default()).unwrap();
        assert!(e.valid && (e.bpm - 65.0).abs() <= 2.0, "{e:?}");
    }

    #[test]
    fn rppg_green_option() {
        let t = synth_vital_signal(&SynthSpec::new(90.0, 14.0, Modality::Rgb, 3).snr_db(20.0))
            .unwrap()
            .into_rgb()
            .unwrap();
        let cfg = RppgConfig {
            method: RppgMethod::Green,
            ..Default::default()
        };
        let e = estimate_hr_rppg(&t, &cfg).unwrap();
        assert!(e.valid && (e.bpm - 90.0).abs() <= 2.0, "{e:?}");
    }

    #[test]
    fn mmwave_both_bands_from_one_signal() {
        let s = series(SynthSpec::new(75.0, 15.0, Modality::MmWave, 11).snr_db(20.0));
        let hr = estimate_rate_mmwave(&s, &MMWAVE_HR_BAND).unwrap();
        let rr = estimate_rate_mmwave(&s, &RESPIRATION_BAND).unwrap();
        assert!(hr.valid && (hr.bpm - 75.0).abs() <= 2.0, "{hr:?}");
        assert!(rr.valid && (rr.bpm - 15.0).abs() <= 1.0, "{rr:?}");
    }

    #[test]
    fn mmwave_sway_artifact_invalidates_heart_rate() {
        let s = series(
            SynthSpec::new(75.0, 15.0, Modality::MmWave, 4)
                .snr_db(20.0)
                .artifact(MotionArtifact::Sway {
                    freq_hz: 0.7,
                    amplitude: 20e-3,
                    jitter: 1.5,
                }),
        );
        let hr = estimate_rate_mmwave(&s, &MMWAVE_HR_BAND).unwrap();
        assert!(!hr.valid, "{hr:?}");
    }

    #[test]
    fn mmwave_short_window_rejected() {
        let s = series(SynthSpec::new(75.0, 15.0, Modality::MmWave, 1).window(8.0, 20.0));
        assert!(matches!(
            estimate_rate_mmwave(&s, &MMWAVE_HR_BAND),
            Err(VitalsError::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn sliding_median_examples() {
        let v = |b: f64| RateEstimate::valid(b, 0.8, "mmwave");
        assert_eq!(sliding_median(&[v(72.0), v(74.0), v(120.0)], 5).bpm, 74.0);
        let inv = [RateEstimate::invalid("mmwave"), RateEstimate::invalid("mmwave")];
        assert!(!sliding_median(&inv, 3).valid);
        assert_eq!(sliding_median(&[v(15.0)], 3).bpm, 15.0);
        // only the most recent `window` valid estimates count
        let seq = [v(10.0), v(20.0), RateEstimate::invalid("mmwave"), v(30.0), v(40.0)];
        assert_eq!(sliding_median(&seq, 2).bpm, 35.0);
    }

    #[test]
    fn pcr_examples() {
        for rr in [12.0, 20.0] {
            let s = series(SynthSpec::new(70.0, rr, Modality::Pcr, 5).snr_db(20.0));
            let e = estimate_rr_pcr(&s, &PcrConfig::default()).unwrap();
            assert!(e.valid && (e.bpm - rr).abs() <= 1.0, "{rr}: {e:?}");
        }
        let flat = series(SynthSpec::new(70.0, 12.0, Modality::Pcr, 5).chest_visibility(0.0));
        assert!(!estimate_rr_pcr(&flat, &PcrConfig::default()).unwrap().valid);
    }

    #[test]
    fn mtts_peak_count() {
        let s = series(SynthSpec::new(80.0, 15.0, Modality::Mtts, 2).snr_db(20.0));
        let hr = estimate_rate_mtts(&s, &RPPG_BAND).unwrap();
        assert!(hr.valid && (hr.bpm - 80.0).abs() <= 3.0, "{hr:?}");
    }

    fn thermal(spec: SynthSpec) -> ThermalRoiTrace {
        synth_vital_signal(&spec).unwrap().into_thermal().unwrap()
    }

    #[test]
    fn thermal_removes_linear_drift() {
        let t = thermal(SynthSpec::new(70.0, 15.0, Modality::Thermal, 9).snr_db(20.0).drift(0.05));
        let e = estimate_rr_thermal(&t, &ThermalConfig::default()).unwrap();
        assert!(e.stable);
        assert!(e.average.valid && (e.average.bpm - 15.0).abs() <= 1.0, "{e:?}");
        assert!(e.instantaneous_bpm.is_some());
    }

    #[test]
    fn thermal_mostly_moving_rejected() {
        let t = thermal(SynthSpec::new(70.0, 15.0, Modality::Thermal, 9).artifact(MotionArtifact::Bursts {
            fraction: 0.6,
            magnitude_px: 8.0,
        }));
        assert!(matches!(
            estimate_rr_thermal(&t, &ThermalConfig::default()),
            Err(VitalsError::InsufficientStableFrames { .. })
        ));
    }

    #[test]
    fn thermal_low_contrast_invalid() {
        let t = thermal(SynthSpec::new(70.0, 15.0, Modality::Thermal, 9).snr_db(20.0).contrast(2.0));
        let e = estimate_rr_thermal(&t, &ThermalConfig::default()).unwrap();
        assert!(!e.average.valid, "{e:?}");
        let t = thermal(SynthSpec::new(70.0, 15.0, Modality::Thermal, 9).snr_db(20.0).contrast(8.0));
        assert!(estimate_rr_thermal(&t, &ThermalConfig::default()).unwrap().average.valid);
    }

    #[test]
    fn thermal_moderate_motion_is_unstable_but_usable() {
        let t = thermal(SynthSpec::new(70.0, 18.0, Modality::Thermal, 12).snr_db(20.0).artifact(
            MotionArtifact::Bursts {
                fraction: 0.25,
                magnitude_px: 8.0,
            },
        ));
        let e = estimate_rr_thermal(&t, &ThermalConfig::default()).unwrap();
        assert!(!e.stable);
        assert!((e.gated_fraction - 0.25).abs() < 0.02);
        assert!(e.average.valid && (e.average.bpm - 18.0).abs() <= 2.0, "{e:?}");
    }

    #[test]
    fn moving_average_reproduces_ramp() {
        let x: Vec<f64> = (0..40).map(|i| 0.3 * i as f64 - 2.0).collect();
        let m = centered_moving_average(&x, 5);
        for (a, b) in x.iter().zip(&m) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_filling() {
        let v = [0.0, 9.0, 9.0, 3.0, 9.0];
        let k = [false, true, false, true, false];
        assert_eq!(fill_gated(&v, &k), vec![9.0, 9.0, 6.0, 3.0, 3.0]);
    }
}
