//! Quasi-static synthetic world.
//!
//! A bowl of primitive objects, its overhead height map, a grasp outcome
//! model, objects held and rolled between the fingertips, and the
//! hemispherical tactile renderer.

pub mod catalog;
pub mod grasp;
pub mod hand;
pub mod press;
pub mod scenario;
pub mod shapes;
pub mod tactile;
pub mod world;

pub use grasp::{grasp_attempt, GraspOutcome, GraspParams, GraspedObject};
pub use hand::{apply_finger_motion, close_on, closing_pose, Attachment};
pub use press::{place_pressed, Press, PressParams};
pub use scenario::Scenario;
pub use shapes::Shape;
pub use tactile::{render_cloud, render_control_cloud, render_frame, TactileRender, MAX_DEFORMATION};
pub use world::{render_heightmap, spawn_bowl, Bowl, ObjectCount, SimObject, WorldState};

use crate::controller::Plant;
use crate::error::Result;
use crate::kinematics::{GripperModel, JointVector, Side};
use crate::perception::TactileCloud;

/// Close the fingers on grasped objects, giving each its in-hand pose.
pub fn close_on_grasp(model: &GripperModel, grasped: &[GraspedObject], close_depth: f64) -> Result<Attachment> {
    let objects = grasped
        .iter()
        .map(|g| SimObject {
            pose: crate::kinematics::Pose::new(nalgebra::Vector3::zeros(), g.in_hand),
            ..g.object.clone()
        })
        .collect();
    let offsets: Vec<(f64, f64)> = grasped.iter().map(|g| g.offset).collect();
    close_on(model, objects, &offsets, close_depth)
}

/// Full-resolution frame of one sensor for the held objects.
pub fn render_tactile(att: &Attachment, model: &GripperModel, side: Side) -> TactileRender {
    render_frame(&att.in_sensor_frame(model, side), model.fingertip_radius)
}

/// Held objects as a controller plant: the right sensor is rendered at
/// control resolution and finger motion rolls the objects.
#[derive(Clone, Debug)]
pub struct HandPlant {
    pub model: GripperModel,
    pub attachment: Attachment,
}

impl Plant for HandPlant {
    fn sense(&self) -> TactileCloud {
        render_control_cloud(
            &self.attachment.in_sensor_frame(&self.model, Side::Right),
            self.model.fingertip_radius,
            Side::Right,
        )
    }

    fn actuate(&mut self, q_right: &JointVector) -> Result<()> {
        apply_finger_motion(&mut self.attachment, &self.model, q_right).map(|_| ())
    }

    fn q_right(&self) -> JointVector {
        self.attachment.q_right
    }
}
