use serde::{Deserialize, Serialize};

use super::{GeolocError, Point3};

pub type CasualtyId = u64;

/// Merge / association radius, meters (horizontal).
pub const ASSOCIATION_RADIUS_M: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasualtyEstimate {
    pub casualty_id: CasualtyId,
    pub position: [f64; 3],
    pub total_weight: f64,
    pub detection_count: u64,
    /// Created by a ground association rather than by aerial clustering.
    #[serde(default)]
    pub from_ground: bool,
}

impl CasualtyEstimate {
    pub fn point(&self) -> Point3 {
        Point3::from(self.position)
    }
}

/// A ground-level estimate logged against the casualty it was associated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundEstimate {
    pub casualty_id: CasualtyId,
    pub position: [f64; 3],
    pub spawned: bool,
}

/// Streaming casualty map with persistent IDs.
///
/// Membership is decided against the cluster center at arrival time and
/// clusters are never merged afterwards. Ground estimates are logged but
/// never move a center.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CasualtyMap {
    clusters: Vec<CasualtyEstimate>,
    next_id: CasualtyId,
    ground_log: Vec<GroundEstimate>,
}

fn horizontal_distance(a: &Point3, b: &Point3) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

impl CasualtyMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clusters(&self) -> &[CasualtyEstimate] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn get(&self, id: CasualtyId) -> Option<&CasualtyEstimate> {
        // ids are appended in increasing order
        self.clusters
            .binary_search_by_key(&id, |c| c.casualty_id)
            .ok()
            .map(|i| &self.clusters[i])
    }

    pub fn contains(&self, id: CasualtyId) -> bool {
        self.get(id).is_some()
    }

    pub fn ground_log(&self) -> &[GroundEstimate] {
        &self.ground_log
    }

    /// Next id that would be handed out.
    pub fn next_id(&self) -> CasualtyId {
        self.next_id
    }

    /// Nearest cluster by horizontal distance; exact ties go to the lower id.
    pub fn nearest(&self, point: &Point3) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.clusters.iter().enumerate() {
            let d = horizontal_distance(&c.point(), point);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best
    }

    fn spawn(&mut self, point: &Point3, weight: f64, from_ground: bool) -> CasualtyId {
        let id = self.next_id;
        self.next_id += 1;
        self.clusters.push(CasualtyEstimate {
            casualty_id: id,
            position: [point.x, point.y, point.z],
            total_weight: weight,
            detection_count: 1,
            from_ground,
        });
        id
    }

    /// Folds an aerial world-frame detection into the map and returns the
    /// casualty id it was assigned to.
    pub fn cluster_update(&mut self, point: &Point3, weight: f64) -> Result<CasualtyId, GeolocError> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(GeolocError::InvalidParameter("weight must be positive"));
        }
        if !(point.x.is_finite() && point.y.is_finite() && point.z.is_finite()) {
            return Err(GeolocError::InvalidParameter("point must be finite"));
        }
        match self.nearest(point) {
            Some((i, d)) if d <= ASSOCIATION_RADIUS_M => {
                let c = &mut self.clusters[i];
                let total = c.total_weight + weight;
                let merged = (c.point() * c.total_weight + point * weight) / total;
                c.position = [merged.x, merged.y, merged.z];
                c.total_weight = total;
                c.detection_count += 1;
                Ok(c.casualty_id)
            }
            _ => Ok(self.spawn(point, weight, false)),
        }
    }

    /// Matches a ground-level estimate to an existing casualty within the
    /// association radius, or registers it as a new casualty.
    pub fn associate(&mut self, point: &Point3) -> CasualtyId {
        let (id, spawned) = match self.nearest(point) {
            Some((i, d)) if d <= ASSOCIATION_RADIUS_M => (self.clusters[i].casualty_id, false),
            _ => (self.spawn(point, 1.0, true), true),
        };
        self.ground_log.push(GroundEstimate {
            casualty_id: id,
            position: [point.x, point.y, point.z],
            spawned,
        });
        id
    }
}
