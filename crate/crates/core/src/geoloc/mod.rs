//! Image-space detections to world-frame casualty estimates.
//!
//! World frame: x east, y north, z up (meters). Camera frame follows the
//! usual pinhole convention: x to the right of the image, y down the image,
//! z along the optical axis.

mod cluster;
mod ground;
mod projection;

pub use cluster::{CasualtyEstimate, CasualtyId, CasualtyMap, GroundEstimate, ASSOCIATION_RADIUS_M};
pub use ground::{
    local_to_world, localize_from_lidar, LidarPoint, DEFAULT_CLUSTER_GAP_M, DEFAULT_HALF_WIDTH_RAD,
};
pub use projection::{
    bearing_from_pixel, detection_weight, pixel_to_world, project_to_pixel, MIN_DETECTION_WEIGHT,
};

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

pub type Point3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeolocError {
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("orientation is not a proper rotation")]
    InvalidOrientation,
    #[error("pixel ray does not intersect the ground plane")]
    RayNonIntersecting,
    #[error("camera is not above the ground plane")]
    CameraBelowGround,
    #[error("no lidar points inside the angular window")]
    NoPointsInWindow,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Pinhole intrinsics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: f64,
    pub image_height: f64,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        image_width: f64,
        image_height: f64,
    ) -> Result<Self, GeolocError> {
        let cam = CameraModel {
            fx,
            fy,
            cx,
            cy,
            image_width,
            image_height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera with the principal point at the image center.
    pub fn centered(focal: f64, image_width: f64, image_height: f64) -> Result<Self, GeolocError> {
        Self::new(focal, focal, image_width / 2.0, image_height / 2.0, image_width, image_height)
    }

    pub fn validate(&self) -> Result<(), GeolocError> {
        let all_finite = [self.fx, self.fy, self.cx, self.cy, self.image_width, self.image_height]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(GeolocError::InvalidCamera("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeolocError::InvalidCamera("focal lengths must be positive".into()));
        }
        if !(self.cx > 0.0 && self.cx < self.image_width) {
            return Err(GeolocError::InvalidCamera("cx outside image".into()));
        }
        if !(self.cy > 0.0 && self.cy < self.image_height) {
            return Err(GeolocError::InvalidCamera("cy outside image".into()));
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (0.0..=self.image_width).contains(&u) && (0.0..=self.image_height).contains(&v)
    }

    /// Distance from the principal point to the farthest image corner.
    pub fn max_radius(&self) -> f64 {
        [
            (0.0, 0.0),
            (self.image_width, 0.0),
            (0.0, self.image_height),
            (self.image_width, self.image_height),
        ]
        .iter()
        .map(|&(u, v)| (u - self.cx).hypot(v - self.cy))
        .fold(0.0, f64::max)
    }
}

/// Camera position and camera→world rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorPose {
    pub position: Point3,
    pub orientation: Rotation3<f64>,
}

impl SensorPose {
    pub fn new(position: Point3, orientation: Matrix3<f64>) -> Result<Self, GeolocError> {
        let orthonormal = (orientation.transpose() * orientation - Matrix3::identity()).amax() < 1e-9;
        if !orthonormal || (orientation.determinant() - 1.0).abs() > 1e-9 {
            return Err(GeolocError::InvalidOrientation);
        }
        Ok(SensorPose {
            position,
            orientation: Rotation3::from_matrix_unchecked(orientation),
        })
    }

    /// Straight-down camera with image right pointing east and image down
    /// pointing south.
    pub fn nadir(position: Point3) -> Self {
        let m = Matrix3::from_columns(&[
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, -1.0, 0.0),
            Vector3::new(0.0, 0.0, -1.0),
        ]);
        SensorPose {
            position,
            orientation: Rotation3::from_matrix_unchecked(m),
        }
    }

    /// Forward-looking camera. `yaw` is the optical-axis heading measured
    /// counter-clockwise from east, `pitch_down` tilts the axis below the
    /// horizon.
    pub fn looking(position: Point3, yaw: f64, pitch_down: f64) -> Self {
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch_down.sin_cos();
        let forward = Vector3::new(cy * cp, sy * cp, -sp);
        let right = Vector3::new(sy, -cy, 0.0);
        let down = forward.cross(&right);
        let m = Matrix3::from_columns(&[right, down, forward]);
        SensorPose {
            position,
            orientation: Rotation3::from_matrix_unchecked(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub pixel_u: f64,
    pub pixel_v: f64,
    pub timestamp: f64,
    pub source_robot: u32,
}
