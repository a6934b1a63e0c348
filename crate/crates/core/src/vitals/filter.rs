use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{median_interval, BandSpec, Result, SampleSeries};

/// Returns the series on a uniform grid at its median sample interval,
/// linearly interpolating. Uniform input is returned unchanged.
pub fn resample_uniform(s: &SampleSeries) -> SampleSeries {
    if s.is_uniform() {
        return s.clone();
    }
    let ts = s.timestamps();
    let vs = s.values();
    let dt = median_interval(ts);
    let t0 = ts[0];
    let span = ts[ts.len() - 1] - t0;
    let n = ((span / dt) + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        while j + 2 < ts.len() && ts[j + 1] < t {
            j += 1;
        }
        let (ta, tb) = (ts[j], ts[j + 1]);
        let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        out.push(vs[j] + w * (vs[j + 1] - vs[j]));
    }
    SampleSeries::uniform(t0, 1.0 / dt, out).expect("resampled grid is valid")
}

/// Removes the least-squares line.
pub fn detrend(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return values.to_vec();
    }
    let nf = n as f64;
    let mean_x = (nf - 1.0) / 2.0;
    let mean_y = values.iter().sum::<f64>() / nf;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    values
        .iter()
        .enumerate()
        .map(|(i, y)| y - mean_y - slope * (i as f64 - mean_x))
        .collect()
}

/// Gain of the band mask: unity on `[f_lo, f_hi]`, raised-cosine skirts of
/// width `0.1 * f_lo` outside both edges, zero beyond.
pub(crate) fn band_gain(f: f64, band: &BandSpec) -> f64 {
    let w = 0.1 * band.f_lo;
    if f >= band.f_lo && f <= band.f_hi {
        1.0
    } else if f < band.f_lo && f > band.f_lo - w {
        0.5 * (1.0 - (std::f64::consts::PI * (f - (band.f_lo - w)) / w).cos())
    } else if f > band.f_hi && f < band.f_hi + w {
        0.5 * (1.0 + (std::f64::consts::PI * (f - band.f_hi) / w).cos())
    } else {
        0.0
    }
}

/// Zero-phase band-pass by frequency-domain masking.
///
/// The detrended series is mirrored into an even extension of twice its
/// length so the implied periodic signal has no jump at the seam, masked
/// with a real symmetric gain, and transformed back. Output has the same
/// length as the (resampled) input.
pub fn bandpass(s: &SampleSeries, band: &BandSpec) -> Result<SampleSeries> {
    let s = resample_uniform(s);
    let fs = s.sample_rate_hint();
    band.validate(fs)?;

    let x = detrend(s.values());
    let n = x.len();
    let m = 2 * n;
    let mut buf: Vec<Complex64> = x
        .iter()
        .chain(x.iter().rev())
        .map(|&v| Complex64::new(v, 0.0))
        .collect();

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = if k <= m / 2 { k } else { m - k };
        *c *= band_gain(kk as f64 * fs / m as f64, band);
    }
    planner.plan_fft_inverse(m).process(&mut buf);

    let scale = 1.0 / m as f64;
    let out = buf[..n].iter().map(|c| c.re * scale).collect();
    Ok(s.with_values(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn tone(f: f64, fs: f64, secs: f64, amp: f64) -> Vec<f64> {
        let n = (fs * secs) as usize;
        (0..n).map(|i| amp * (TAU * f * i as f64 / fs).sin()).collect()
    }

    fn rms(v: &[f64]) -> f64 {
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    }

    /// Drops the first and last tenth, where the finite window's edge
    /// transient lives.
    fn interior(v: &[f64]) -> &[f64] {
        let k = v.len() / 10;
        &v[k..v.len() - k]
    }

    #[test]
    fn in_band_tone_passes() {
        let x = tone(1.2, 20.0, 15.0, 1.0);
        let s = SampleSeries::uniform(0.0, 20.0, x.clone()).unwrap();
        let y = bandpass(&s, &BandSpec::new(1.0, 3.0)).unwrap();
        assert_eq!(y.len(), x.len());
        let ratio = rms(y.values()) / rms(&x);
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn out_of_band_tone_rejected() {
        let x = tone(0.2, 20.0, 15.0, 1.0);
        let s = SampleSeries::uniform(0.0, 20.0, x.clone()).unwrap();
        let y = bandpass(&s, &BandSpec::new(1.0, 3.0)).unwrap();
        let ratio = rms(interior(y.values())) / rms(interior(&x));
        assert!(ratio < 0.01, "ratio {ratio}");
    }

    #[test]
    fn separates_respiratory_component() {
        let fs = 20.0;
        let resp = tone(0.25, fs, 30.0, 1.0);
        let cardiac = tone(1.2, fs, 30.0, 0.5);
        let mixed: Vec<f64> = resp.iter().zip(&cardiac).map(|(a, b)| a + b).collect();
        let s = SampleSeries::uniform(0.0, fs, mixed).unwrap();
        let y = bandpass(&s, &BandSpec::new(0.1, 0.5)).unwrap();
        let (y, resp) = (interior(y.values()), interior(&resp));
        let dot: f64 = y.iter().zip(resp).map(|(a, b)| a * b).sum();
        let corr = dot / (rms(y) * rms(resp) * resp.len() as f64);
        assert!(corr > 0.99, "corr {corr}");
    }

    #[test]
    fn rejects_band_above_nyquist() {
        let s = SampleSeries::uniform(0.0, 4.0, vec![0.0; 64]).unwrap();
        assert!(matches!(
            bandpass(&s, &BandSpec::new(1.0, 2.0)),
            Err(super::super::VitalsError::BandInvalid { .. })
        ));
    }

    #[test]
    fn gain_is_continuous_at_edges() {
        let b = BandSpec::new(1.0, 3.0);
        assert_eq!(band_gain(1.0, &b), 1.0);
        assert!(band_gain(0.999_999, &b) > 0.999);
        assert!(band_gain(0.900_001, &b) < 1e-6);
        assert_eq!(band_gain(0.9, &b), 0.0);
        assert!(band_gain(3.000_001, &b) > 0.999);
        assert_eq!(band_gain(3.1, &b), 0.0);
    }

    #[test]
    fn resampling_irregular_series() {
        let ts = vec![0.0, 0.1, 0.2, 0.35, 0.4, 0.5, 0.6];
        let vs: Vec<f64> = ts.iter().map(|t| 2.0 * t).collect();
        let s = SampleSeries::new(ts, vs).unwrap();
        assert!(!s.is_uniform());
        let r = resample_uniform(&s);
        assert!(r.is_uniform());
        assert_eq!(r.len(), 7);
        for (t, v) in r.timestamps().iter().zip(r.values()) {
            assert!((v - 2.0 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn detrend_removes_line() {
        let v: Vec<f64> = (0..50).map(|i| 3.0 + 0.5 * i as f64).collect();
        assert!(detrend(&v).iter().all(|x| x.abs() < 1e-9));
    }
}
