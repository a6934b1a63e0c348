use super::{Result, SampleSeries, VitalsError};

/// Indices of local maxima (flat tops resolve to their middle sample).
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = x.len();
    if n < 3 {
        return peaks;
    }
    let mut i = 1;
    while i < n - 1 {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead < n - 1 && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
            }
        }
        i += 1;
    }
    peaks
}

/// Topographic prominence of the peak at `p`.
fn prominence(x: &[f64], p: usize) -> f64 {
    let h = x[p];
    let mut left_min = h;
    for i in (0..p).rev() {
        if x[i] > h {
            break;
        }
        left_min = left_min.min(x[i]);
    }
    let mut right_min = h;
    for &v in &x[p + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Peak picking with a prominence floor and a minimum time spacing.
///
/// `min_prominence` is a fraction of the signal's max-min range. Spacing is
/// enforced greedily from the tallest peak down, so within any `min_spacing`
/// window only the highest peak survives. Output is sorted ascending.
pub fn find_peaks(s: &SampleSeries, min_spacing: f64, min_prominence: f64) -> Vec<usize> {
    let x = s.values();
    let ts = s.timestamps();
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Vec::new();
    }
    let threshold = min_prominence * range;
    let candidates: Vec<usize> = local_maxima(x)
        .into_iter()
        .filter(|&p| prominence(x, p) >= threshold)
        .collect();

    let mut by_height = candidates.clone();
    by_height.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for p in by_height {
        if kept.iter().all(|&k| (ts[k] - ts[p]).abs() >= min_spacing) {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    kept
}

/// Rate in events per minute from the mean inter-peak interval.
pub fn rate_from_peaks(indices: &[usize], timestamps: &[f64]) -> Result<f64> {
    if indices.len() < 2 {
        return Err(VitalsError::TooFewPeaks(indices.len()));
    }
    let first = timestamps[indices[0]];
    let last = timestamps[indices[indices.len() - 1]];
    let mean_interval = (last - first) / (indices.len() - 1) as f64;
    Ok(60.0 / mean_interval)
}
