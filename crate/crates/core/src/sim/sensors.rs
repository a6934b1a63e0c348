//! Simulated sensors: the UAV's overhead detector, the UGV's lidar and
//! camera bearing, and the UAV's sweep pattern.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geoloc::{CameraModel, Detection, LidarPoint, Point3, SensorPose};

/// Boustrophedon waypoints over `[0, width] x [0, height]`: lanes parallel
/// to x, `spacing` apart, starting half a lane in from the south edge.
pub fn lawnmower(width: f64, height: f64, spacing: f64) -> Vec<[f64; 2]> {
    let mut pts = Vec::new();
    let mut y = (spacing / 2.0).min(height / 2.0);
    let mut eastward = true;
    loop {
        let (a, b) = if eastward { (0.0, width) } else { (width, 0.0) };
        pts.push([a, y]);
        pts.push([b, y]);
        if y + spacing / 2.0 >= height {
            break;
        }
        y = (y + spacing).min(height - spacing / 2.0).max(y + 1e-6);
        eastward = !eastward;
    }
    pts
}

/// Ground footprint of a nadir camera at `altitude`: half-extents (x, y).
pub fn footprint_half_extents(cam: &CameraModel, altitude: f64) -> (f64, f64) {
    (
        altitude * cam.cx.max(cam.image_width - cam.cx) / cam.fx,
        altitude * cam.cy.max(cam.image_height - cam.cy) / cam.fy,
    )
}

/// One frame of the overhead detector. Each casualty whose true position
/// projects inside the image is reported with probability `p_det`, at its
/// exact projection plus isotropic Gaussian pixel noise. Three draws are
/// made per visible casualty (detect, then u and v noise) in casualty order.
#[allow(clippy::too_many_arguments)]
pub fn uav_detect<R: Rng>(
    casualties: &[Point3],
    cam: &CameraModel,
    pose: &SensorPose,
    p_det: f64,
    sigma_px: f64,
    timestamp: f64,
    source_robot: u32,
    rng: &mut R,
) -> Vec<(usize, Detection)> {
    let noise = Normal::new(0.0, sigma_px.max(0.0)).expect("sigma is finite");
    let mut out = Vec::new();
    for (i, c) in casualties.iter().enumerate() {
        let Some((u, v)) = crate::geoloc::project_to_pixel(c, cam, pose) else { continue };
        if !cam.contains(u, v) {
            continue;
        }
        let hit = rng.random::<f64>() < p_det;
        let (du, dv) = (noise.sample(rng), noise.sample(rng));
        if !hit {
            continue;
        }
        let (pu, pv) = if sigma_px > 0.0 { (u + du, v + dv) } else { (u, v) };
        if !cam.contains(pu, pv) {
            continue;
        }
        out.push((
            i,
            Detection {
                pixel_u: pu,
                pixel_v: pv,
                timestamp,
                source_robot,
            },
        ));
    }
    out
}

/// Height of the lidar above ground, m.
pub const LIDAR_HEIGHT_M: f64 = 0.5;
const BODY_LENGTH_M: f64 = 1.7;
const BODY_WIDTH_M: f64 = 0.45;
const BODY_HEIGHT_M: f64 = 0.25;
const CLUTTER_POINTS: usize = 120;

/// Lidar returns in the robot frame (x forward along `heading`, y left,
/// z relative to the lidar). Each casualty is a lying body, modelled as an
/// ellipse of surface points of which only the half facing the robot is
/// seen; clutter returns come from objects 6 to 30 m away.
pub fn lidar_scan<R: Rng>(
    robot: &Point3,
    heading: f64,
    casualties: &[(Point3, f64)],
    sigma: f64,
    rng: &mut R,
) -> Vec<LidarPoint> {
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("sigma is finite");
    let (s, c) = heading.sin_cos();
    let to_local = |w: Point3| {
        let d = w - robot;
        LidarPoint::new(c * d.x + s * d.y, -s * d.x + c * d.y, w.z - robot.z)
    };
    let mut pts = Vec::new();
    for (center, yaw) in casualties {
        let (ys, yc) = yaw.sin_cos();
        let toward = (robot - center).xy();
        for k in 0..72 {
            let a = k as f64 * std::f64::consts::TAU / 72.0;
            let (lx, ly) = (0.5 * BODY_LENGTH_M * a.cos(), 0.5 * BODY_WIDTH_M * a.sin());
            let off = nalgebra::Vector2::new(yc * lx - ys * ly, ys * lx + yc * ly);
            if off.dot(&toward) < 0.0 {
                continue;
            }
            for h in [0.4, 0.8] {
                let w = Point3::new(
                    center.x + off.x + noise.sample(rng),
                    center.y + off.y + noise.sample(rng),
                    center.z + h * BODY_HEIGHT_M + noise.sample(rng),
                );
                pts.push(to_local(w));
            }
        }
    }
    for _ in 0..CLUTTER_POINTS {
        let az = rng.random::<f64>() * std::f64::consts::TAU;
        let r = 6.0 + 24.0 * rng.random::<f64>();
        let z = rng.random::<f64>() * 1.5;
        pts.push(LidarPoint::new(r * az.cos(), r * az.sin(), z - robot.z));
    }
    pts
}

/// Image column at which the robot's forward camera sees `target`, with
/// pixel noise. `None` when the target is behind the camera or off-image.
pub fn camera_column<R: Rng>(
    robot: &Point3,
    heading: f64,
    target: &Point3,
    cam: &CameraModel,
    sigma_px: f64,
    rng: &mut R,
) -> Option<f64> {
    let d = target - robot;
    let (s, c) = heading.sin_cos();
    let fwd = c * d.x + s * d.y;
    let left = -s * d.x + c * d.y;
    let noise = Normal::new(0.0, sigma_px.max(0.0)).expect("sigma is finite").sample(rng);
    if fwd <= 0.0 {
        return None;
    }
    let u = cam.cx + cam.fx * (-left / fwd) + noise;
    (0.0..=cam.image_width).contains(&u).then_some(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geoloc::{bearing_from_pixel, localize_from_lidar, local_to_world, project_to_pixel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cam() -> CameraModel {
        CameraModel::centered(800.0, 1280.0, 720.0).unwrap()
    }

    #[test]
    fn lawnmower_covers_field() {
        let w = lawnmower(100.0, 80.0, 28.0);
        assert_eq!(w[0], [0.0, 14.0]);
        assert_eq!(w[1], [100.0, 14.0]);
        assert_eq!(w[2], [100.0, 42.0]);
        let last = w.last().unwrap();
        assert!(last[1] + 14.0 >= 80.0);
        assert_eq!(w.len() % 2, 0);
        let one = lawnmower(10.0, 5.0, 28.0);
        assert_eq!(one, vec![[0.0, 2.5], [10.0, 2.5]]);
    }

    #[test]
    fn footprint_at_forty_meters() {
        let (hx, hy) = footprint_half_extents(&cam(), 40.0);
        assert!((hx - 32.0).abs() < 1e-12 && (hy - 18.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_detector_reports_exact_projection() {
        let pose = SensorPose::nadir(Point3::new(10.0, 10.0, 40.0));
        let cas = [Point3::new(12.0, 7.0, 0.0), Point3::new(80.0, 80.0, 0.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = uav_detect(&cas, &cam(), &pose, 1.0, 0.0, 0.0, 0, &mut rng);
        assert_eq!(d.len(), 1);
        let (u, v) = project_to_pixel(&cas[0], &cam(), &pose).unwrap();
        assert_eq!((d[0].1.pixel_u, d[0].1.pixel_v), (u, v));
    }

    #[test]
    fn detection_count_is_binomial() {
        let pose = SensorPose::nadir(Point3::new(0.0, 0.0, 40.0));
        let cas = [Point3::new(1.0, 1.0, 0.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = (0..1000)
            .filter(|_| !uav_detect(&cas, &cam(), &pose, 0.9, 2.0, 0.0, 0, &mut rng).is_empty())
            .count() as f64;
        let sd = (1000.0f64 * 0.9 * 0.1).sqrt();
        assert!((n - 900.0).abs() <= 3.0 * sd, "{n}");
    }

    #[test]
    fn lidar_and_bearing_localize_body() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let robot = Point3::new(3.0, 4.0, LIDAR_HEIGHT_M);
        let body = Point3::new(4.2, 5.1, 0.0);
        let heading = (body.y - robot.y).atan2(body.x - robot.x) + 0.1;
        let scan = lidar_scan(&robot, heading, &[(body, 0.7)], 0.02, &mut rng);
        let u = camera_column(&robot, heading, &body, &cam(), 1.0, &mut rng).unwrap();
        let local = localize_from_lidar(&scan, bearing_from_pixel(u, &cam()), 0.05, 0.5).unwrap();
        let w = local_to_world(&local, heading, &robot);
        // The slice hits the near surface, so the fix is off by at most half
        // a body length.
        assert!((w.xy() - body.xy()).norm() < 0.5 * BODY_LENGTH_M + 0.05, "{w:?}");
        let across = (body.y - robot.y).atan2(body.x - robot.x) + std::f64::consts::FRAC_PI_2;
        let scan = lidar_scan(&robot, heading, &[(body, across)], 0.02, &mut rng);
        let local = localize_from_lidar(&scan, bearing_from_pixel(u, &cam()), 0.05, 0.5).unwrap();
        let w = local_to_world(&local, heading, &robot);
        assert!((w.xy() - body.xy()).norm() < 0.5 * BODY_WIDTH_M + 0.05, "{w:?}");
    }
}
