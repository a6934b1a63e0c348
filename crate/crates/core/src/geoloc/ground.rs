use serde::{Deserialize, Serialize};

use super::{GeolocError, Point3};

pub const DEFAULT_HALF_WIDTH_RAD: f64 = 0.05;
pub const DEFAULT_CLUSTER_GAP_M: f64 = 0.5;

/// Point in the ground robot's local frame: x forward, y left, z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl LidarPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        LidarPoint { x, y, z }
    }

    /// Counter-clockwise azimuth from the forward axis.
    pub fn azimuth(&self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn range(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::TAU);
    if r > std::f64::consts::PI {
        r - std::f64::consts::TAU
    } else {
        r
    }
}

/// Crops the scan to an angular slice around a camera bearing, splits the
/// slice into range-gap clusters and returns the centroid of the nearest one.
///
/// `bearing` uses the camera convention (positive to the right of the optical
/// axis, optical axis aligned with the lidar's forward axis), so the slice is
/// centered on azimuth `-bearing`.
pub fn localize_from_lidar(
    points: &[LidarPoint],
    bearing: f64,
    half_width: f64,
    cluster_gap: f64,
) -> Result<Point3, GeolocError> {
    if !(half_width > 0.0) {
        return Err(GeolocError::InvalidParameter("half_width must be positive"));
    }
    if !(cluster_gap > 0.0) {
        return Err(GeolocError::InvalidParameter("cluster_gap must be positive"));
    }
    let center = -bearing;
    let mut window: Vec<&LidarPoint> = points
        .iter()
        .filter(|p| p.x.is_finite() && p.y.is_finite() && p.z.is_finite())
        .filter(|p| wrap_angle(p.azimuth() - center).abs() <= half_width)
        .collect();
    if window.is_empty() {
        return Err(GeolocError::NoPointsInWindow);
    }
    window.sort_by(|a, b| a.range().total_cmp(&b.range()));

    let mut end = 1;
    while end < window.len() && window[end].range() - window[end - 1].range() <= cluster_gap {
        end += 1;
    }
    let nearest = &window[..end];
    let n = nearest.len() as f64;
    let sum = nearest
        .iter()
        .fold(Point3::zeros(), |acc, p| acc + Point3::new(p.x, p.y, p.z));
    Ok(sum / n)
}

/// Rotates a local-frame point by `heading` (counter-clockwise from east)
/// and translates it by the robot's world position. z is not rotated.
pub fn local_to_world(local: &Point3, heading: f64, gps: &Point3) -> Point3 {
    let (s, c) = heading.sin_cos();
    Point3::new(
        c * local.x - s * local.y + gps.x,
        s * local.x + c * local.y + gps.y,
        local.z + gps.z,
    )
}
