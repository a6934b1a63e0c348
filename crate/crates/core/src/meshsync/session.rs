use std::collections::BTreeMap;

use super::store::{diff, Store};
use super::{stream_rank, LinkState, MeshError, NodeId};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyncSummary {
    pub a_to_b: usize,
    pub b_to_a: usize,
    /// False when the session hit its record budget before finishing.
    pub complete: bool,
}

impl SyncSummary {
    pub fn transferred(&self) -> usize {
        self.a_to_b + self.b_to_a
    }
}

/// Full bidirectional reconciliation: afterwards both stores hold the union.
pub fn sync_session(a: &mut Store, b: &mut Store, link: &LinkState) -> Result<SyncSummary, MeshError> {
    sync_session_limited(a, b, link, usize::MAX)
}

/// Reconciliation that stops after `budget` records, modelling a contact
/// window that closes mid-session. Each record moves whole or not at all,
/// and transfer order is stream priority, then origin, then seq, so the
/// receiver's prefixes stay contiguous and the next session resumes.
pub fn sync_session_limited(
    a: &mut Store,
    b: &mut Store,
    link: &LinkState,
    budget: usize,
) -> Result<SyncSummary, MeshError> {
    let (lo, hi) = link.pair();
    let (na, nb) = (a.node().to_string(), b.node().to_string());
    let joins = (na == lo && nb == hi) || (na == hi && nb == lo);
    if !joins {
        return Err(MeshError::LinkMismatch {
            link: (lo, hi),
            a: na,
            b: nb,
        });
    }
    if !link.permits_sync() {
        return Err(MeshError::LinkTooWeak {
            quality: link.quality,
            threshold: link.threshold,
        });
    }

    let (da, db) = (a.digest(), b.digest());
    // (priority, stream, origin, seq, a_is_source)
    let mut queue = Vec::new();
    for (ranges, from_a) in [(diff(&da, &db), true), (diff(&db, &da), false)] {
        for r in ranges {
            let rank = stream_rank(&r.stream).0;
            for k in r.keys() {
                queue.push((rank, k.stream.clone(), k.origin.clone(), k.seq, from_a, k));
            }
        }
    }
    queue.sort_by(|x, y| (x.0, &x.1, &x.2, x.3, !x.4).cmp(&(y.0, &y.1, &y.2, y.3, !y.4)));

    let mut summary = SyncSummary {
        complete: queue.len() <= budget,
        ..Default::default()
    };
    for (.., from_a, key) in queue.into_iter().take(budget) {
        let (src, dst) = if from_a { (&*a, &mut *b) } else { (&*b, &mut *a) };
        let rec = src.get(&key).expect("diff only names held keys").clone();
        if dst.insert(rec) {
            if from_a {
                summary.a_to_b += 1;
            } else {
                summary.b_to_a += 1;
            }
        }
    }
    Ok(summary)
}

/// Remembers which links were last seen usable and schedules a session
/// whenever one becomes usable.
#[derive(Debug, Clone, Default)]
pub struct LinkMonitor {
    up: BTreeMap<(NodeId, NodeId), bool>,
}

impl LinkMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_up(&self, a: &str, b: &str) -> bool {
        let key = if a <= b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) };
        self.up.get(&key).copied().unwrap_or(false)
    }

    /// Pairs whose quality crossed the threshold upward, ordered by
    /// `(min id, max id)`. A pair never seen before counts as down.
    pub fn on_link_event(&mut self, changes: &[LinkState]) -> Vec<(NodeId, NodeId)> {
        let mut scheduled = Vec::new();
        for l in changes {
            let pair = l.pair();
            let now = l.permits_sync();
            let was = self.up.insert(pair.clone(), now).unwrap_or(false);
            if now && !was {
                scheduled.push(pair);
            }
        }
        scheduled.sort();
        scheduled.dedup();
        scheduled
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(node: &str, stream: &str, n: usize) -> Store {
        let mut s = Store::new(node);
        for i in 0..n {
            s.put_local(stream, vec![i as u8], i as f64).unwrap();
        }
        s
    }

    #[test]
    fn one_way_fill_then_idempotent() {
        let mut a = store("A", "scorecard", 3);
        let mut b = Store::new("B");
        let link = LinkState::new("A", "B", 0.9);
        let s = sync_session(&mut a, &mut b, &link).unwrap();
        assert_eq!((s.a_to_b, s.b_to_a, s.complete), (3, 0, true));
        assert_eq!(b.len(), 3);
        assert_eq!(sync_session(&mut a, &mut b, &link).unwrap().transferred(), 0);
    }

    #[test]
    fn weak_link_changes_nothing() {
        let mut a = store("A", "scorecard", 3);
        let mut b = Store::new("B");
        let e = sync_session(&mut a, &mut b, &LinkState::new("A", "B", 0.3)).unwrap_err();
        assert!(matches!(e, MeshError::LinkTooWeak { .. }));
        assert!(b.is_empty());
    }

    #[test]
    fn wrong_link_rejected() {
        let mut a = store("A", "s", 1);
        let mut b = Store::new("B");
        let e = sync_session(&mut a, &mut b, &LinkState::new("A", "C", 0.9)).unwrap_err();
        assert!(matches!(e, MeshError::LinkMismatch { .. }));
    }

    #[test]
    fn records_hop_through_intermediary() {
        let mut a = store("A", "scorecard", 2);
        let mut b = Store::new("B");
        let mut c = Store::new("C");
        sync_session(&mut a, &mut b, &LinkState::new("A", "B", 1.0)).unwrap();
        sync_session(&mut b, &mut c, &LinkState::new("B", "C", 1.0)).unwrap();
        assert_eq!(c.len(), 2);
        assert!(a.records().all(|r| c.get(&r.key) == Some(r)));
    }

    #[test]
    fn bidirectional_union() {
        let mut a = store("A", "robot_pose", 2);
        let mut b = store("B", "scorecard", 1);
        let s = sync_session(&mut a, &mut b, &LinkState::new("B", "A", 0.5)).unwrap();
        assert_eq!((s.a_to_b, s.b_to_a), (2, 1));
        assert_eq!(a, Store::load("A", &b.dump()).unwrap());
    }

    #[test]
    fn budget_favours_scorecards_and_resumes() {
        let mut a = store("A", "robot_pose", 4);
        for i in 0..2 {
            a.put_local("scorecard", vec![i], 0.0).unwrap();
            a.put_local("casualty_map", vec![i], 0.0).unwrap();
        }
        a.put_local("notes", vec![], 0.0).unwrap();
        let mut b = Store::new("B");
        let link = LinkState::new("A", "B", 1.0);
        let s = sync_session_limited(&mut a, &mut b, &link, 3).unwrap();
        assert!(!s.complete);
        assert_eq!(b.stream("scorecard").count(), 2);
        assert_eq!(b.stream("casualty_map").count(), 1);
        assert_eq!(b.stream("robot_pose").count(), 0);
        let s = sync_session(&mut a, &mut b, &link).unwrap();
        assert!(s.complete);
        assert_eq!(s.a_to_b, 6);
        assert_eq!(b.dump(), a.dump());
    }

    #[test]
    fn monitor_schedules_upward_crossings_in_pair_order() {
        let mut m = LinkMonitor::new();
        assert_eq!(m.on_link_event(&[LinkState::new("u", "g", 0.4)]), vec![]);
        assert_eq!(
            m.on_link_event(&[LinkState::new("u", "g", 0.8)]),
            vec![("g".to_string(), "u".to_string())]
        );
        assert_eq!(m.on_link_event(&[LinkState::new("g", "u", 0.9)]), vec![]);
        assert_eq!(m.on_link_event(&[LinkState::new("u", "g", 0.4)]), vec![]);
        assert!(!m.is_up("g", "u"));
        let got = m.on_link_event(&[LinkState::new("z", "b", 0.7), LinkState::new("u", "g", 0.6)]);
        assert_eq!(
            got,
            vec![("b".to_string(), "z".to_string()), ("g".to_string(), "u".to_string())]
        );
    }
}
