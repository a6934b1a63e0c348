use super::filter::bandpass;
use super::{Result, RgbTrace, SampleSeries, VitalsError, RPPG_BAND};

const MIN_FRAMES: usize = 64;
const DEGENERATE_STD: f64 = 1e-12;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Channels divided by their window mean. Fails on a zero-mean or
/// zero-variance channel.
fn normalized_channels(trace: &RgbTrace) -> Result<[Vec<f64>; 3]> {
    if trace.len() < MIN_FRAMES {
        return Err(VitalsError::InvalidSeries("CHROM needs at least 64 frames"));
    }
    let mut out: [Vec<f64>; 3] = Default::default();
    for (c, slot) in out.iter_mut().enumerate() {
        let ch = trace.channel(c);
        let m = mean(&ch);
        if m <= 0.0 {
            return Err(VitalsError::DegenerateTrace("channel mean is zero"));
        }
        let n: Vec<f64> = ch.iter().map(|v| v / m).collect();
        if std_dev(&n) < DEGENERATE_STD {
            return Err(VitalsError::DegenerateTrace("channel has zero variance"));
        }
        *slot = n;
    }
    Ok(out)
}

/// Chrominance blood-volume-pulse signal.
///
/// With mean-normalized channels `X = 3R - 2G` and `Y = 1.5R + G - 1.5B`;
/// both projections are band-limited to the cardiac band, then
/// `S = X - (σX/σY)·Y`. Output is zero-mean and on the trace's (resampled)
/// time grid.
pub fn chrom_bvp(trace: &RgbTrace) -> Result<SampleSeries> {
    let [r, g, b] = normalized_channels(trace)?;
    let x: Vec<f64> = r.iter().zip(&g).map(|(r, g)| 3.0 * r - 2.0 * g).collect();
    let y: Vec<f64> = r
        .iter()
        .zip(&g)
        .zip(&b)
        .map(|((r, g), b)| 1.5 * r + g - 1.5 * b)
        .collect();
    let ts = trace.timestamps().to_vec();
    let xf = bandpass(&SampleSeries::new(ts.clone(), x)?, &RPPG_BAND)?;
    let yf = bandpass(&SampleSeries::new(ts, y)?, &RPPG_BAND)?;
    let sy = std_dev(yf.values());
    if sy < DEGENERATE_STD {
        return Err(VitalsError::DegenerateTrace("Y projection has no in-band energy"));
    }
    let alpha = std_dev(xf.values()) / sy;
    let s: Vec<f64> = xf
        .values()
        .iter()
        .zip(yf.values())
        .map(|(x, y)| x - alpha * y)
        .collect();
    let m = mean(&s);
    Ok(xf.with_values(s.into_iter().map(|v| v - m).collect()))
}

/// Green-channel alternative: the mean-normalized green channel, inverted
/// so that blood-volume increases point up, zero-mean.
pub fn green_bvp(trace: &RgbTrace) -> Result<SampleSeries> {
    let [_, g, _] = normalized_channels(trace)?;
    let m = mean(&g);
    SampleSeries::new(trace.timestamps().to_vec(), g.iter().map(|v| m - v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vitals::dominant_frequency;
    use std::f64::consts::TAU;

    /// Skin-tone base with a pulse following the standardized skin
    /// pulse signature and an optional common illumination drift.
    fn trace(pulse_hz: f64, drift_hz: Option<f64>) -> RgbTrace {
        let fs = 30.0;
        let base = [0.62, 0.45, 0.36];
        let signature = [0.33, 0.77, 0.53];
        let n = 300;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 / fs).collect();
        let frames = ts
            .iter()
            .map(|&t| {
                let p = 0.004 * (TAU * pulse_hz * t).sin();
                let illum = drift_hz.map_or(1.0, |f| 1.0 + 0.1 * (TAU * f * t).sin());
                let mut px = [0.0; 3];
                for c in 0..3 {
                    px[c] = base[c] * (1.0 + signature[c] * p) * illum;
                }
                px
            })
            .collect();
        RgbTrace::new(ts, frames).unwrap()
    }

    #[test]
    fn constant_color_is_degenerate() {
        let ts: Vec<f64> = (0..100).map(|i| i as f64 / 30.0).collect();
        let t = RgbTrace::new(ts, vec![[0.5, 0.4, 0.3]; 100]).unwrap();
        assert!(matches!(chrom_bvp(&t), Err(VitalsError::DegenerateTrace(_))));
    }

    #[test]
    fn short_trace_rejected() {
        let ts: Vec<f64> = (0..32).map(|i| i as f64 / 30.0).collect();
        let t = RgbTrace::new(ts, vec![[0.5, 0.4, 0.3]; 32]).unwrap();
        assert!(matches!(chrom_bvp(&t), Err(VitalsError::InvalidSeries(_))));
    }

    #[test]
    fn recovers_embedded_pulse() {
        let s = chrom_bvp(&trace(1.1, None)).unwrap();
        assert!(s.values().iter().sum::<f64>().abs() < 1e-9);
        let p = dominant_frequency(&s, &RPPG_BAND).unwrap();
        assert!((p.frequency_hz - 1.1).abs() < 0.05, "{p:?}");
    }

    #[test]
    fn illumination_drift_does_not_move_the_peak() {
        let clean = dominant_frequency(&chrom_bvp(&trace(1.1, None)).unwrap(), &RPPG_BAND).unwrap();
        let drifted =
            dominant_frequency(&chrom_bvp(&trace(1.1, Some(0.05))).unwrap(), &RPPG_BAND).unwrap();
        assert!((drifted.frequency_hz - 1.1).abs() < 0.05);
        assert!((drifted.frequency_hz - clean.frequency_hz).abs() < 0.02);
    }

    #[test]
    fn green_variant_tracks_pulse() {
        let s = green_bvp(&trace(1.3, None)).unwrap();
        let p = dominant_frequency(&s, &RPPG_BAND).unwrap();
        assert!((p.frequency_hz - 1.3).abs() < 0.05);
    }
}
