use super::{CameraModel, Detection, GeolocError, Point3, SensorPose};

/// Floor of the aerial detection weight.
pub const MIN_DETECTION_WEIGHT: f64 = 0.1;

/// Rays whose world z-component is at or above this are treated as never
/// reaching the ground.
const RAY_Z_EPS: f64 = -1e-9;

/// Back-projects a detection pixel and intersects the ray with `z = ground_z`.
pub fn pixel_to_world(
    det: &Detection,
    cam: &CameraModel,
    pose: &SensorPose,
    ground_z: f64,
) -> Result<Point3, GeolocError> {
    if pose.position.z <= ground_z {
        return Err(GeolocError::CameraBelowGround);
    }
    let ray_cam = Point3::new(
        (det.pixel_u - cam.cx) / cam.fx,
        (det.pixel_v - cam.cy) / cam.fy,
        1.0,
    );
    let ray = pose.orientation * ray_cam;
    if ray.z >= RAY_Z_EPS {
        return Err(GeolocError::RayNonIntersecting);
    }
    let t = (ground_z - pose.position.z) / ray.z;
    let mut hit = pose.position + ray * t;
    // Pin exactly onto the plane.
    hit.z = ground_z;
    Ok(hit)
}

/// Forward pinhole projection of a world point. `None` when the point is
/// behind the camera.
pub fn project_to_pixel(point: &Point3, cam: &CameraModel, pose: &SensorPose) -> Option<(f64, f64)> {
    let p = pose.orientation.inverse() * (point - pose.position);
    if p.z <= 0.0 {
        return None;
    }
    Some((cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy))
}

/// Confidence of an aerial detection: 1 at the principal point, falling
/// linearly with radial pixel distance down to [`MIN_DETECTION_WEIGHT`] at
/// the farthest corner.
pub fn detection_weight(det: &Detection, cam: &CameraModel) -> f64 {
    let r = (det.pixel_u - cam.cx).hypot(det.pixel_v - cam.cy);
    (1.0 - r / cam.max_radius()).max(MIN_DETECTION_WEIGHT)
}

/// Horizontal bearing of an image column relative to the optical axis,
/// positive to the right.
pub fn bearing_from_pixel(centroid_u: f64, cam: &CameraModel) -> f64 {
    ((centroid_u - cam.cx) / cam.fx).atan()
}
