//! Hemispherical tactile sensor renderer.
//!
//! Each sensor ray leaves the fingertip centre; the gel surface along it sits
//! at `r = min(R, first object hit)`, never deeper than the deformation cap.
//! The gel recovers fully between frames.

use nalgebra::Vector3;

use super::world::SimObject;
use crate::classifier::TactileFrame;
use crate::kinematics::Side;
use crate::perception::{
    control_pixels, disk_pixels, pixel_direction, TactileCloud, TactilePoint, SENSOR_RESOLUTION,
};

pub const MAX_DEFORMATION: f64 = 20.0;

/// An object prepared for ray casting in the sensor frame.
struct Body<'a> {
    object: &'a SimObject,
    /// Sensor origin in the object frame.
    origin: Vector3<f64>,
    center: Vector3<f64>,
    bound: f64,
}

fn prepare<'a>(objects: &'a [SimObject], radius: f64) -> Vec<Body<'a>> {
    objects
        .iter()
        .filter_map(|o| {
            let center = o.pose.position;
            let bound = o.shape.bounding_radius();
            (center.norm() - bound <= radius).then(|| Body {
                object: o,
                origin: o.pose.inverse().transform_point(&Vector3::zeros()),
                center,
                bound,
            })
        })
        .collect()
}

/// Gel radius along `dir` and the index of the object that set it.
fn cast(bodies: &[Body], dir: &Vector3<f64>, radius: f64) -> (f64, Option<usize>) {
    let floor = (radius - MAX_DEFORMATION).max(0.0);
    let mut r = radius;
    let mut who = None;
    for (k, b) in bodies.iter().enumerate() {
        let along = b.center.dot(dir);
        if along < -b.bound || (b.center - dir * along).norm_squared() > b.bound * b.bound {
            continue;
        }
        let d_local = b.object.pose.orientation.inverse() * dir;
        if let Some(t) = b.object.shape.ray_hit(&b.origin, &d_local) {
            if t < r {
                r = t;
                who = Some(k);
            }
        }
    }
    (r.max(floor), who)
}

/// Control-mode cloud: only the stride-subsampled pixels are rendered.
pub fn render_control_cloud(objects: &[SimObject], radius: f64, sensor: Side) -> TactileCloud {
    let mut cloud = render_cloud(objects, radius, control_pixels(), sensor);
    cloud.capture_mode = crate::perception::CaptureMode::ControlTruncated;
    cloud
}

pub fn render_cloud(objects: &[SimObject], radius: f64, pixels: &[u32], sensor: Side) -> TactileCloud {
    let bodies = prepare(objects, radius);
    let n = SENSOR_RESOLUTION;
    let points = pixels
        .iter()
        .map(|&k| {
            let k = k as usize;
            let dir = pixel_direction(k / n, k % n).expect("pixel inside sensor disk");
            let (r, _) = cast(&bodies, &dir, radius);
            TactilePoint::along(&dir, r, radius, Some(k as u32))
        })
        .collect();
    TactileCloud::new(points, sensor, radius)
}

#[derive(Clone, Debug)]
pub struct TactileRender {
    /// Labels are left at background; perception fills them.
    pub frame: TactileFrame,
    /// Per pixel: 0 for no contact, else the object's `id + 1`.
    pub object_ids: Vec<u32>,
}

pub fn render_frame(objects: &[SimObject], radius: f64) -> TactileRender {
    let bodies = prepare(objects, radius);
    let n = SENSOR_RESOLUTION;
    let mut depth = vec![0f32; n * n];
    let mut ids = vec![0u32; n * n];
    for &k in disk_pixels() {
        let k = k as usize;
        let dir = pixel_direction(k / n, k % n).expect("pixel inside sensor disk");
        let (r, who) = cast(&bodies, &dir, radius);
        depth[k] = (radius - r) as f32;
        if let Some(b) = who {
            ids[k] = bodies[b].object.id + 1;
        }
    }
    TactileRender {
        frame: TactileFrame::from_deformation(depth, radius),
        object_ids: ids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Pose;
    use crate::perception::{truncate_for_control, CONTROL_POINT_LIMIT};
    use crate::simworld::shapes::Shape;
    use nalgebra::Rotation3;

    const R: f64 = 15.5;

    fn sphere_at(c: Vector3<f64>, r: f64) -> SimObject {
        SimObject {
            id: 4,
            class_id: 17,
            shape: Shape::Sphere { r },
            pose: Pose::new(c, Rotation3::identity()),
        }
    }

    #[test]
    fn no_contact_is_uniform() {
        let cloud = render_control_cloud(&[], R, Side::Right);
        assert!(cloud.len() <= CONTROL_POINT_LIMIT);
        assert!(cloud.points.iter().all(|p| p.r == R && p.deformation == 0.0));
        let f = render_frame(&[], R);
        assert!(f.frame.depth.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn centred_sphere_matches_closed_form_cap() {
        // Sphere of radius 5 pressed 4 mm along the pole.
        let rho = 5.0;
        let dc = R - 4.0 + rho;
        let render = render_frame(&[sphere_at(Vector3::new(0.0, 0.0, dc), rho)], R);
        let n = SENSOR_RESOLUTION;
        let mut worst: f64 = 0.0;
        for &k in disk_pixels() {
            let k = k as usize;
            let d = pixel_direction(k / n, k % n).unwrap();
            let cos_a = d.z;
            let disc = rho * rho - dc * dc * (1.0 - cos_a * cos_a);
            let expect = if disc >= 0.0 { (R - (dc * cos_a - disc.sqrt())).max(0.0) } else { 0.0 };
            worst = worst.max((f64::from(render.frame.depth[k]) - expect).abs());
        }
        assert!(worst < 1e-4, "{worst}");
        let peak = render.frame.depth.iter().cloned().fold(0f32, f32::max);
        assert!((f64::from(peak) - 4.0).abs() < 0.01);
    }

    #[test]
    fn deformation_never_exceeds_cap() {
        // Object swallowing the sensor origin.
        let f = render_frame(&[sphere_at(Vector3::new(0.0, 0.0, 2.0), 10.0)], R);
        let max = f.frame.depth.iter().cloned().fold(0f32, f32::max);
        assert!(f64::from(max) <= MAX_DEFORMATION.min(R) + 1e-6);
    }

    #[test]
    fn control_cloud_equals_truncated_full_cloud() {
        let objs = [sphere_at(Vector3::new(2.0, -1.0, 17.0), 6.0)];
        let full = render_cloud(&objs, R, disk_pixels(), Side::Right);
        let a = truncate_for_control(&full, CONTROL_POINT_LIMIT);
        let b = render_control_cloud(&objs, R, Side::Right);
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn rerender_is_identical() {
        let objs = [sphere_at(Vector3::new(1.0, 2.0, 18.0), 6.0)];
        let a = render_frame(&objs, R);
        let b = render_frame(&objs, R);
        assert_eq!(a.frame.depth, b.frame.depth);
        assert_eq!(a.frame.rgb, b.frame.rgb);
        assert_eq!(a.object_ids, b.object_ids);
    }
}
