//! Grasp outcome model.
//!
//! The gripper descends on a straight line from the bowl rim centre through
//! the planned grasp point. Objects close to that line near the top of the
//! pile can be caught; the nearest one is, and a neighbour touching it comes
//! along at a configured rate.

use nalgebra::{Rotation3, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::world::{SimObject, WorldState};
use crate::error::{Error, Result};
use crate::grasp_planner::GraspTarget;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraspParams {
    /// Largest horizontal distance from the descent line at which an object
    /// is caught, mm.
    pub capture_radius: f64,
    /// Only objects whose top lies within this depth below the grasp point
    /// are reachable, mm.
    pub reach_depth: f64,
    /// Largest in-hand offset of the object from the fingertip pole, mm.
    pub contact_zone: f64,
    /// Standard deviation of the placement noise added to the miss, mm.
    pub offset_noise: f64,
    /// Probability that a touching neighbour is grasped too.
    pub two_object_rate: f64,
    /// Surface gap below which a neighbour counts as touching, mm.
    pub proximity: f64,
    /// Probability that the depth camera returns an unusable frame.
    pub depth_dropout_rate: f64,
    /// Fingertip indentation reached when the fingers close, mm.
    pub close_depth: f64,
}

impl Default for GraspParams {
    fn default() -> Self {
        Self {
            capture_radius: 8.0,
            reach_depth: 12.0,
            contact_zone: 5.0,
            offset_noise: 1.0,
            two_object_rate: 0.1,
            proximity: 1.0,
            depth_dropout_rate: 0.0,
            close_depth: 8.5,
        }
    }
}

impl GraspParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.capture_radius,
            self.reach_depth,
            self.contact_zone,
            self.offset_noise,
            self.proximity,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("grasp distances must be >= 0".into()));
        }
        for (name, p) in [
            ("two_object_rate", self.two_object_rate),
            ("depth_dropout_rate", self.depth_dropout_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.close_depth > 0.0) {
            return Err(Error::InvalidParameter("close_depth must be positive".into()));
        }
        Ok(())
    }
}

/// An object taken from the pile with its in-hand placement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspedObject {
    /// As it lay in the bowl.
    pub object: SimObject,
    /// Orientation in the gripper frame: a spin about the inter-finger axis.
    pub in_hand: Rotation3<f64>,
    /// Centre relative to the right fingertip centre in the gripper xz
    /// plane, mm.
    pub offset: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspOutcome {
    None,
    One(GraspedObject),
    Two([GraspedObject; 2]),
}

impl GraspOutcome {
    pub fn objects(&self) -> &[GraspedObject] {
        match self {
            GraspOutcome::None => &[],
            GraspOutcome::One(g) => std::slice::from_ref(g),
            GraspOutcome::Two(g) => g,
        }
    }
}

/// Point of the descent line at height `z`.
fn descent_point(target: &GraspTarget, z: f64) -> Vector2<f64> {
    let v = target.v;
    if v.z.abs() < 1e-9 {
        return target.p_mean.xy();
    }
    let t = (z - target.p_cen.z) / v.z;
    (target.p_cen + v * t).xy()
}

fn surface_gap(a: &SimObject, b: &SimObject) -> f64 {
    a.shape
        .axis_samples(0.5)
        .iter()
        .map(|(p, r)| b.sdf(&a.pose.transform_point(p)) - r)
        .fold(f64::INFINITY, f64::min)
}

fn yaw(o: &SimObject) -> f64 {
    let x = o.pose.orientation * Vector3::x();
    x.y.atan2(x.x)
}

/// Try to grasp along `target`. Caught objects leave the pile.
pub fn grasp_attempt(
    world: &mut WorldState,
    target: &GraspTarget,
    params: &GraspParams,
    rng: &mut impl Rng,
) -> GraspOutcome {
    let top = target.p_mean.z;
    let miss_of = |o: &SimObject| o.pose.position.xy() - descent_point(target, o.pose.position.z);
    let primary = world
        .objects
        .iter()
        .filter(|o| o.top_z() >= top - params.reach_depth)
        .map(|o| (miss_of(o).norm(), o))
        .filter(|(d, _)| *d <= params.capture_radius)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
        .map(|(_, o)| o.clone());
    let Some(primary) = primary else {
        return GraspOutcome::None;
    };

    // The horizontal miss, taken in wrist coordinates, becomes the in-hand
    // offset across the fingertip tangent plane.
    let wrist = target.theta;
    let to_gripper = |w: Vector2<f64>| {
        let (s, c) = wrist.sin_cos();
        (c * w.x + s * w.y, -s * w.x + c * w.y)
    };
    let noise = Normal::new(0.0, params.offset_noise.max(1e-12)).expect("finite sigma");
    let limit = params.capture_radius.min(params.contact_zone);
    let (mx, my) = to_gripper(miss_of(&primary));
    let mut off = Vector2::new(mx + noise.sample(rng), my + noise.sample(rng));
    if off.norm() > limit {
        off *= limit / off.norm();
    }
    let spin = yaw(&primary) - wrist;
    let first = GraspedObject {
        in_hand: Rotation3::from_axis_angle(&Vector3::y_axis(), spin),
        offset: (off.x, off.y),
        object: primary.clone(),
    };

    let neighbour = world
        .objects
        .iter()
        .filter(|o| o.id != primary.id)
        .map(|o| (surface_gap(&primary, o).min(surface_gap(o, &primary)), o))
        .filter(|(g, _)| *g <= params.proximity)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
        .map(|(_, o)| o.clone());
    let take_two = neighbour.is_some() && rng.random::<f64>() < params.two_object_rate;
    match neighbour.filter(|_| take_two) {
        Some(second) => {
            let pair = side_by_side(first, second);
            world.remove(&[pair[0].object.id, pair[1].object.id]);
            GraspOutcome::Two(pair)
        }
        None => {
            world.remove(&[primary.id]);
            GraspOutcome::One(first)
        }
    }
}

/// Place `second` next to `first` in the hand, parallel and touching. The
/// pair straddles the first object's original offset.
fn side_by_side(mut first: GraspedObject, second: SimObject) -> [GraspedObject; 2] {
    let axis = first.in_hand * Vector3::x();
    // Perpendicular to the shared long axis within the gripper xz plane.
    let lateral = Vector3::y().cross(&axis).normalize();
    let gap = first.object.shape.rest_height() + second.shape.rest_height() + 0.2;
    let (ox, oz) = first.offset;
    let half = 0.5 * gap;
    first.offset = (ox - half * lateral.x, oz - half * lateral.z);
    let b = GraspedObject {
        in_hand: first.in_hand,
        offset: (ox + half * lateral.x, oz + half * lateral.z),
        object: second,
    };
    [first, b]
}

/// Roll the depth-camera dropout die.
pub fn depth_dropout(params: &GraspParams, rng: &mut impl Rng) -> bool {
    params.depth_dropout_rate > 0.0 && rng.random::<f64>() < params.depth_dropout_rate
}
