//! Sensor presses used to collect classification data.
//!
//! The objects lie flat on a table above the fingertip (sensor pole +z) and
//! the fingertip is pushed into them. Every press draws an in-plane rotation,
//! an offset from the pole and a peak indentation; frames within a press
//! ramp the indentation up to that peak.

use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::shapes::Shape;
use super::world::SimObject;
use crate::error::{Error, Result};
use crate::kinematics::Pose;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PressParams {
    /// Peak indentation range, mm.
    pub min_depth: f64,
    pub max_depth: f64,
    /// Largest distance of the contact centre from the pole, mm.
    pub max_offset: f64,
}

impl Default for PressParams {
    fn default() -> Self {
        Self {
            min_depth: 6.0,
            max_depth: 10.0,
            max_offset: 3.0,
        }
    }
}

impl PressParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_depth > 0.0 && self.min_depth <= self.max_depth && self.max_offset >= 0.0) {
            return Err(Error::InvalidParameter(
                "press needs 0 < min_depth <= max_depth and max_offset >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Randomised pose of one press.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Press {
    /// Long-axis direction in the sensor xy plane, rad.
    pub angle: f64,
    /// Contact centre in the sensor xy plane, mm.
    pub offset: [f64; 2],
    /// Peak indentation, mm.
    pub depth: f64,
}

impl Press {
    pub fn sample(params: &PressParams, rng: &mut impl Rng) -> Self {
        let rho = params.max_offset * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        Self {
            angle: rng.random_range(0.0..std::f64::consts::TAU),
            offset: [rho * phi.cos(), rho * phi.sin()],
            depth: rng.random_range(params.min_depth..=params.max_depth),
        }
    }

    /// Indentation of frame `k` of `frames`: a ramp from half depth to the
    /// full depth.
    pub fn frame_depth(&self, k: usize, frames: usize) -> f64 {
        let frames = frames.max(1);
        self.depth * (0.5 + 0.5 * (k + 1) as f64 / frames as f64)
    }
}

/// Objects of `shapes` laid side by side on a table and pressed to `depth`
/// at `press`. Returns sensor-frame objects with ids 0, 1, ...
pub fn place_pressed(shapes: &[(u8, Shape)], press: &Press, depth: f64, fingertip_radius: f64) -> Vec<SimObject> {
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), press.angle);
    let lateral = rot * Vector3::y();
    let widths: Vec<f64> = shapes.iter().map(|(_, s)| s.rest_height()).collect();
    let total: f64 = widths.iter().sum::<f64>() * 2.0 + 0.2 * (shapes.len().saturating_sub(1)) as f64;
    let centre = Vector3::new(press.offset[0], press.offset[1], 0.0);
    let start = -0.5 * total;
    let lay = |table: f64| -> Vec<SimObject> {
        let mut c = start;
        shapes
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, ((class_id, shape), w))| {
                let along = c + w;
                c += 2.0 * w + 0.2;
                let mut p = centre + lateral * along;
                p.z = table - w;
                SimObject {
                    id: i as u32,
                    class_id: *class_id,
                    shape: *shape,
                    pose: Pose::new(p, rot),
                }
            })
            .collect()
    };
    // Nearest surface distance from the sensor centre equals the gel radius
    // along the deepest ray.
    let gap = |objs: &[SimObject]| {
        objs.iter()
            .map(|o| o.sdf(&Vector3::zeros()))
            .fold(f64::INFINITY, f64::min)
    };
    let want = fingertip_radius - depth;
    let (mut lo, mut hi) = (0.0, fingertip_radius + 60.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if gap(&lay(mid)) < want {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lay(0.5 * (lo + hi))
}
