//! Objects held between the fingertips.
//!
//! Held objects live in the gripper frame. Under finger motion both
//! fingertip surfaces move the object the same way (the fingers are mirror
//! images), so the object is carried with the controlled fingertip and only
//! keeps the spin about the inter-finger axis. Its centre is then re-centred
//! between the fingertips. This is rolling without slipping on both contacts
//! for a quasi-static grasp.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::world::SimObject;
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, GripperModel, JointVector, Pose, Side};

/// Largest closing angle tried when closing on an object. The fingertip
/// centres meet on the mid-plane at about 0.432 rad on the default model,
/// and indentation stops growing with the angle beyond that.
pub const MAX_CLOSE_ANGLE: f64 = 0.43;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    /// Object poses in the gripper frame. The first is the primary object.
    pub objects: Vec<SimObject>,
    pub q_right: JointVector,
    /// Closest primary-object surface point relative to the right fingertip
    /// centre, gripper frame, mm.
    pub offset: Vector3<f64>,
}

/// Joint vector closing the right finger by `alpha` with the distal links
/// kept parallel, so the sensor pole faces the other finger.
pub fn closing_pose(alpha: f64) -> JointVector {
    JointVector::new(0.0, -alpha, alpha, 0.0)
}

fn midplane(model: &GripperModel, q_right: &JointVector) -> f64 {
    let pr = forward_kinematics(model, q_right, Side::Right).position;
    let pl = forward_kinematics(model, &model.mirror(q_right), Side::Left).position;
    0.5 * (pr.y + pl.y)
}

/// Closest point of `obj` to `p` minus `p`, from the SDF gradient.
fn surface_offset(obj: &SimObject, p: &Vector3<f64>) -> Vector3<f64> {
    let h = 1e-5;
    let grad = Vector3::from_fn(|i, _| {
        let mut a = *p;
        let mut b = *p;
        a[i] += h;
        b[i] -= h;
        (obj.sdf(&a) - obj.sdf(&b)) / (2.0 * h)
    });
    let n = grad.try_normalize(1e-12).unwrap_or_else(Vector3::y);
    -n * obj.sdf(p)
}

impl Attachment {
    fn primary_offset(&self, model: &GripperModel) -> Vector3<f64> {
        let p = forward_kinematics(model, &self.q_right, Side::Right).position;
        surface_offset(&self.objects[0], &p)
    }

    /// Depth of the deepest held object into the right fingertip, mm.
    pub fn penetration(&self, model: &GripperModel) -> f64 {
        let p = forward_kinematics(model, &self.q_right, Side::Right).position;
        let d = self
            .objects
            .iter()
            .map(|o| o.sdf(&p))
            .fold(f64::INFINITY, f64::min);
        model.fingertip_radius - d
    }

    /// Object poses in a fingertip's sensor frame.
    pub fn in_sensor_frame(&self, model: &GripperModel, side: Side) -> Vec<SimObject> {
        let q = match side {
            Side::Right => self.q_right,
            Side::Left => model.mirror(&self.q_right),
        };
        let inv = forward_kinematics(model, &q, side).inverse();
        self.objects
            .iter()
            .map(|o| SimObject {
                pose: inv.compose(&o.pose),
                ..*o
            })
            .collect()
    }
}

/// Close both fingers on `objects` so that the right fingertip is indented
/// by `close_depth`. Object centres are placed at `tip + offset` in the
/// gripper xz plane, on the mid-plane between the fingers.
///
/// `objects` carry their in-hand orientation; their positions are
/// overwritten. `offsets[k]` is the xz displacement of object k from the
/// right fingertip centre.
pub fn close_on(
    model: &GripperModel,
    mut objects: Vec<SimObject>,
    offsets: &[(f64, f64)],
    close_depth: f64,
) -> Result<Attachment> {
    if objects.is_empty() || objects.len() != offsets.len() {
        return Err(Error::InvalidParameter(
            "close_on needs one offset per object".into(),
        ));
    }
    let place = |objects: &mut [SimObject], alpha: f64| -> JointVector {
        let q = closing_pose(alpha);
        let tip = forward_kinematics(model, &q, Side::Right).position;
        let y = midplane(model, &q);
        for (o, (ox, oz)) in objects.iter_mut().zip(offsets) {
            o.pose.position = Vector3::new(tip.x + ox, y, tip.z + oz);
        }
        q
    };
    let depth = |objects: &mut [SimObject], alpha: f64| {
        let q = place(objects, alpha);
        let p = forward_kinematics(model, &q, Side::Right).position;
        model.fingertip_radius - objects.iter().map(|o| o.sdf(&p)).fold(f64::INFINITY, f64::min)
    };
    let (mut lo, mut hi) = (0.0, MAX_CLOSE_ANGLE);
    if depth(&mut objects, hi) < close_depth {
        lo = hi;
    } else if depth(&mut objects, lo) < close_depth {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if depth(&mut objects, mid) < close_depth {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    } else {
        hi = lo;
    }
    let alpha = if lo == hi { lo } else { hi };
    let q_right = place(&mut objects, alpha);
    let mut att = Attachment {
        objects,
        q_right,
        offset: Vector3::zeros(),
    };
    att.offset = att.primary_offset(model);
    if att.penetration(model) <= 0.0 {
        return Err(Error::DroppedObject);
    }
    Ok(att)
}

/// Move the fingers to `q_right` (left = mirror) and carry the held objects.
/// Returns the new contact offset.
pub fn apply_finger_motion(
    att: &mut Attachment,
    model: &GripperModel,
    q_right: &JointVector,
) -> Result<Vector3<f64>> {
    let old = forward_kinematics(model, &att.q_right, Side::Right);
    let new = forward_kinematics(model, q_right, Side::Right);
    let delta = new.orientation * old.orientation.inverse();
    let y_mid = midplane(model, q_right);
    let spin = Rotation3::from_axis_angle(&Vector3::y_axis(), delta.scaled_axis().y);
    for o in &mut att.objects {
        let mut c = new.position + delta * (o.pose.position - old.position);
        c.y = y_mid;
        o.pose = Pose::new(c, spin * o.pose.orientation);
    }
    att.q_right = *q_right;
    if att.penetration(model) <= 0.0 {
        return Err(Error::DroppedObject);
    }
    att.offset = att.primary_offset(model);
    Ok(att.offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::shapes::Shape;

    fn sphere(r: f64) -> SimObject {
        SimObject {
            id: 0,
            class_id: 17,
            shape: Shape::Sphere { r },
            pose: Pose::identity(),
        }
    }

    #[test]
    fn closing_reaches_requested_depth() {
        let m = GripperModel::default();
        for r in [2.5, 5.0, 10.0] {
            let att = close_on(&m, vec![sphere(r)], &[(0.0, 0.0)], 7.0).unwrap();
            assert!((att.penetration(&m) - 7.0).abs() < 1e-6, "r = {r}");
            // Symmetric: the object sits on the mid-plane y = 0.
            assert!(att.objects[0].pose.position.y.abs() < 1e-9);
            // Pole faces the object: offset is along -y.
            assert!((att.offset.normalize() + Vector3::y()).norm() < 1e-6);
        }
    }

    #[test]
    fn zero_motion_keeps_offset() {
        let m = GripperModel::default();
        let mut att = close_on(&m, vec![sphere(5.0)], &[(3.0, -2.0)], 7.0).unwrap();
        let before = att.clone();
        let q = att.q_right;
        let off = apply_finger_motion(&mut att, &m, &q).unwrap();
        assert!((off - before.offset).norm() < 1e-9);
        assert_eq!(att.objects[0].pose.position, before.objects[0].pose.position);
    }

    /// Tip rotation about a world axis, via the joint increment the model's
    /// Jacobian predicts for a pure rotation.
    fn rotate_tip(m: &GripperModel, q: &JointVector, omega: Vector3<f64>) -> JointVector {
        use crate::kinematics::jacobian_full;
        let j = jacobian_full(m, q, Side::Right);
        let target = nalgebra::Vector6::new(0.0, 0.0, 0.0, omega.x, omega.y, omega.z);
        let dq = j.svd(true, true).solve(&target, 1e-12).unwrap();
        JointVector::from_vector(&(q.as_vector() + dq))
    }

    #[test]
    fn normal_rotation_keeps_offset_magnitude() {
        let m = GripperModel::default();
        let mut att = close_on(&m, vec![sphere(5.0)], &[(0.0, 0.0)], 7.0).unwrap();
        let before = att.offset.norm();
        let q = rotate_tip(&m, &att.q_right, att.offset.normalize() * 1e-3);
        let off = apply_finger_motion(&mut att, &m, &q).unwrap();
        assert!((off.norm() - before).abs() < 1e-6);
    }

    // Only x: the finger cannot turn its tip about z without translating it.
    #[test]
    fn tangent_rotation_rolls_arc_length() {
        let m = GripperModel::default();
        for axis in [Vector3::x(), -Vector3::x()] {
            let mut att = close_on(&m, vec![sphere(5.0)], &[(1.0, 1.0)], 7.0).unwrap();
            let before = att.offset;
            let r_eff = before.norm();
            let phi = 2e-3;
            let old_rot = forward_kinematics(&m, &att.q_right, Side::Right).orientation;
            let q = rotate_tip(&m, &att.q_right, axis * phi);
            let new_rot = forward_kinematics(&m, &q, Side::Right).orientation;
            let actual_phi = (new_rot * old_rot.inverse()).angle();
            let off = apply_finger_motion(&mut att, &m, &q).unwrap();
            let arc = (off - before).norm();
            assert!((arc - r_eff * actual_phi).abs() < 0.01 * r_eff * actual_phi, "{axis}");
        }
    }

    #[test]
    fn separated_fingers_drop_object() {
        let m = GripperModel::default();
        let mut att = close_on(&m, vec![sphere(3.0)], &[(0.0, 0.0)], 5.0).unwrap();
        let r = apply_finger_motion(&mut att, &m, &closing_pose(0.0));
        assert!(matches!(r, Err(Error::DroppedObject)));
    }
}
