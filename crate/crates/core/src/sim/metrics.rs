use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::world::World;
use crate::geoloc::Point3;
use crate::orchestrator::{AlertnessKind, Scorecard, TraumaRegion};

/// A truth casualty counts as found when a cluster lies within this
/// horizontal distance.
pub const MATCH_RADIUS_M: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub p90: Option<f64>,
    pub max: Option<f64>,
}

impl LatencyStats {
    pub fn from_samples(mut xs: Vec<f64>) -> LatencyStats {
        xs.sort_by(f64::total_cmp);
        let n = xs.len();
        if n == 0 {
            return LatencyStats { count: 0, mean: None, median: None, p90: None, max: None };
        }
        // Nearest-rank percentiles.
        let rank = |p: f64| xs[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        LatencyStats {
            count: n,
            mean: Some(xs.iter().sum::<f64>() / n as f64),
            median: Some(rank(0.5)),
            p90: Some(rank(0.9)),
            max: Some(xs[n - 1]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldAccuracy {
    pub correct: usize,
    pub total: usize,
}

/// End-of-run summary. Everything is computed from the final casualty map,
/// the scorecards held by the basestation and the delivery times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub truth_count: usize,
    pub cluster_count: usize,
    pub cluster_count_error: usize,
    pub found: usize,
    pub localization_rmse_m: Option<f64>,
    pub scorecards_delivered: usize,
    pub casualties_with_scorecard: usize,
    pub hr_mae_bpm: Option<f64>,
    pub hr_count: usize,
    pub rr_mae_bpm: Option<f64>,
    pub rr_count: usize,
    pub latency_s: LatencyStats,
    pub field_accuracy: BTreeMap<String, FieldAccuracy>,
}

fn horizontal(a: &Point3, b: &Point3) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

fn mae(errs: &[f64]) -> Option<f64> {
    (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
}

impl Metrics {
    pub fn compute(world: &World) -> Metrics {
        let truth = world.truth_positions();
        let specs = &world.scenario().casualties;
        let clusters: Vec<Point3> = world.casualty_map().clusters().iter().map(|c| c.point()).collect();

        let mut sq = Vec::new();
        for t in truth {
            let best = clusters.iter().map(|c| horizontal(c, t)).fold(f64::INFINITY, f64::min);
            if best <= MATCH_RADIUS_M {
                sq.push(best * best);
            }
        }
        let rmse = mae(&sq).map(f64::sqrt);

        let cards = world.basestation_scorecards();
        let (mut hr, mut rr) = (Vec::new(), Vec::new());
        let mut acc: BTreeMap<String, FieldAccuracy> = BTreeMap::new();
        let mut tally = |name: &str, got: Option<bool>, want: bool| {
            if let Some(g) = got {
                let e = acc.entry(name.to_string()).or_insert(FieldAccuracy { correct: 0, total: 0 });
                e.total += 1;
                e.correct += (g == want) as usize;
            }
        };
        for (id, sc) in &cards {
            let Some(k) = world.truth_for(*id) else { continue };
            let spec = &specs[k];
            if let Some(v) = sc.heart_rate_bpm {
                if !spec.manikin {
                    hr.push((v - spec.hr_bpm).abs());
                }
            }
            if let Some(v) = sc.respiration_bpm {
                if !spec.manikin {
                    rr.push((v - spec.rr_bpm).abs());
                }
            }
            score_fields(sc, &spec.injuries, &mut tally);
        }

        let latencies: Vec<f64> = world
            .delivered()
            .iter()
            .filter_map(|(key, t)| {
                let store = world.store(&world.scenario().basestation.id)?;
                let rec = store.get(key)?;
                let sc = Scorecard::from_json(&rec.payload).ok()?;
                Some(t - sc.assessed_at)
            })
            .collect();

        Metrics {
            truth_count: truth.len(),
            cluster_count: clusters.len(),
            cluster_count_error: clusters.len().abs_diff(truth.len()),
            found: sq.len(),
            localization_rmse_m: rmse,
            scorecards_delivered: latencies.len(),
            casualties_with_scorecard: cards.len(),
            hr_mae_bpm: mae(&hr),
            hr_count: hr.len(),
            rr_mae_bpm: mae(&rr),
            rr_count: rr.len(),
            latency_s: LatencyStats::from_samples(latencies),
            field_accuracy: acc,
        }
    }
}

fn score_fields(sc: &Scorecard, truth: &crate::orchestrator::InjuryProfile, tally: &mut impl FnMut(&str, Option<bool>, bool)) {
    for r in TraumaRegion::ALL {
        let got = match r {
            TraumaRegion::Head => sc.trauma.head,
            TraumaRegion::Torso => sc.trauma.torso,
            TraumaRegion::UpperExtremity => sc.trauma.upper_extremity,
            TraumaRegion::LowerExtremity => sc.trauma.lower_extremity,
        };
        tally(&format!("trauma.{}", r.name()), got, truth.trauma.get(r));
    }
    tally("severe_hemorrhage", sc.severe_hemorrhage, truth.severe_hemorrhage);
    tally("respiratory_distress", sc.respiratory_distress, truth.respiratory_distress);
    for k in AlertnessKind::ALL {
        let (got, want) = match k {
            AlertnessKind::Ocular => (sc.alertness.ocular, truth.alertness.ocular),
            AlertnessKind::Verbal => (sc.alertness.verbal, truth.alertness.verbal),
            AlertnessKind::Motor => (sc.alertness.motor, truth.alertness.motor),
        };
        tally(&format!("alertness.{}", k.name()), got, want);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let s = LatencyStats::from_samples((1..=10).map(f64::from).rev().collect());
        assert_eq!(s.count, 10);
        assert_eq!(s.median, Some(5.0));
        assert_eq!(s.p90, Some(9.0));
        assert_eq!(s.max, Some(10.0));
        assert_eq!(s.mean, Some(5.5));
        assert_eq!(LatencyStats::from_samples(vec![]).mean, None);
    }
}
