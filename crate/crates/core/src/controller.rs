//! Tactile in-hand alignment controller.
//!
//! Each step turns the right sensor's cloud into a contact estimate, measures
//! the angle between the inter-fingertip axis and the fingertip-to-object
//! vector, and asks the right fingertip for a velocity that rolls the object
//! onto that axis while holding the indentation at a set radius. Joint rates
//! come from the damped pseudoinverse of the reduced Jacobian, with joint
//! centering pushed through the null space. The left finger copies the
//! result through the mirror map.

use std::path::Path;

use nalgebra::{Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    damped_pseudoinverse, forward_kinematics, jacobian_full, reduced_jacobian, GripperModel,
    JointVector, ReducedJacobian, Side,
};
use crate::perception::{
    object_contact_estimate, segment_with_threshold, DbscanParams, TactileCloud,
};
use crate::rng::SimRng;

/// Minimum length of `a` and `b` for the alignment angle to be defined, mm.
pub const MIN_VECTOR_LENGTH: f64 = 1e-6;
/// Contact is still considered held when the deepest point clears the
/// detection threshold minus this margin, mm.
pub const CONTACT_HYSTERESIS: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    /// Pseudoinverse damping.
    pub damping: f64,
    /// Joint-centering gain C.
    pub penalty_gain: f64,
    /// Diagonal of K_p for (y, omega_x, omega_z).
    pub kp: [f64; 3],
    /// Control period, s.
    pub dt: f64,
    /// Target radius at the contact estimate (C_y), mm.
    pub contact_offset: f64,
    pub convergence_angle: f64,
    pub convergence_window: usize,
    pub max_iterations: usize,
    /// Share of the primary cluster (least deformed first) averaged into the
    /// contact estimate.
    pub centroid_fraction: f64,
    /// Use the unit rotation axis instead of the raw cross product.
    pub normalize_rotation_axis: bool,
    pub perception: DbscanParams,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            damping: 0.05,
            penalty_gain: 0.5,
            kp: [0.3, 0.5, 0.5],
            dt: 0.1,
            contact_offset: 10.0,
            convergence_angle: 0.05,
            convergence_window: 5,
            max_iterations: 300,
            centroid_fraction: 0.3,
            normalize_rotation_axis: false,
            perception: DbscanParams::default(),
        }
    }
}

impl ControllerParams {
    /// Checks the parameter ranges; `contact_offset` must lie inside the
    /// fingertip of `model`.
    pub fn validate(&self, model: &GripperModel) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return bad("damping must be >= 0");
        }
        if !(self.penalty_gain >= 0.0 && self.penalty_gain.is_finite()) {
            return bad("penalty_gain must be >= 0");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.kp.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return bad("kp entries must be positive");
        }
        if !(self.contact_offset > 0.0 && self.contact_offset < model.fingertip_radius) {
            return bad("contact_offset must lie in (0, fingertip_radius)");
        }
        if !(self.convergence_angle > 0.0) || self.convergence_window == 0 {
            return bad("convergence criterion must be positive");
        }
        if !(self.centroid_fraction > 0.0 && self.centroid_fraction <= 1.0) {
            return bad("centroid_fraction must lie in (0, 1]");
        }
        self.perception.validate()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::InvalidParameter(format!("controller config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("controller params serialise")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentError {
    /// Angle between `a` and `b`, rad.
    pub theta_ab: f64,
    /// `b x a / (|a| |b|)`; its norm is `sin(theta_ab)`.
    pub v_rot: Vector3<f64>,
    /// Right to left fingertip centre, mm.
    pub a: Vector3<f64>,
    /// Right fingertip centre to the object contact, mm.
    pub b: Vector3<f64>,
}

/// All points in the gripper frame.
pub fn alignment_error(
    p_ft_left: &Vector3<f64>,
    p_ft_right: &Vector3<f64>,
    p_obj: &Vector3<f64>,
) -> Result<AlignmentError> {
    let a = p_ft_left - p_ft_right;
    let b = p_obj - p_ft_right;
    let (na, nb) = (a.norm(), b.norm());
    if na < MIN_VECTOR_LENGTH {
        return Err(Error::DegenerateGeometry("fingertips coincide"));
    }
    if nb < MIN_VECTOR_LENGTH {
        return Err(Error::DegenerateGeometry("contact at the fingertip centre"));
    }
    let cos = (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(AlignmentError {
        theta_ab: cos.acos(),
        v_rot: b.cross(&a) / (na * nb),
        a,
        b,
    })
}

/// Desired right-fingertip rate (y mm/s, omega_x rad/s, omega_z rad/s).
///
/// Positive `y` moves the right fingertip (which sits on the +y side) away
/// from the object, so a contact radius below `contact_offset` (too deep)
/// backs off and one above it closes in.
pub fn desired_velocity(err: &AlignmentError, deformed_radius: f64, params: &ControllerParams) -> Vector3<f64> {
    let axis = if params.normalize_rotation_axis {
        err.v_rot.try_normalize(1e-12).unwrap_or_else(Vector3::zeros)
    } else {
        err.v_rot
    };
    let g = |i: usize| params.kp[i] / params.dt;
    Vector3::new(
        g(0) * (params.contact_offset - deformed_radius),
        g(1) * axis.x * err.theta_ab,
        g(2) * axis.z * err.theta_ab,
    )
}

/// `J+ v + (I - J+ J) (-C (q - q_mid))`.
pub fn joint_rate(
    j: &ReducedJacobian,
    v_des: &Vector3<f64>,
    q: &JointVector,
    model: &GripperModel,
    params: &ControllerParams,
) -> Result<Vector4<f64>> {
    let pinv = damped_pseudoinverse(j, params.damping)?;
    let f_pen = -params.penalty_gain * (q.as_vector() - model.q_mid().as_vector());
    let null = Matrix4::identity() - pinv * j;
    Ok(pinv * v_des + null * f_pen)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    /// Right-finger joint rates, rad/s.
    pub q_dot: Vector4<f64>,
    pub q_next_right: JointVector,
    pub q_next_left: JointVector,
    pub converged: bool,
    pub error: AlignmentError,
    pub deformed_radius: f64,
    pub v_des: Vector3<f64>,
    /// True when contact was only found with the relaxed threshold.
    pub hysteresis: bool,
}

/// One line of an episode trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub q_right: [f64; 4],
    pub q_left: [f64; 4],
    pub theta_ab: f64,
    pub deformed_radius: f64,
    pub v_des: [f64; 3],
    pub converged: bool,
}

/// Stateful controller: owns the convergence streak and the random stream
/// used for clustering augmentation.
#[derive(Clone, Debug)]
pub struct Controller {
    pub model: GripperModel,
    pub params: ControllerParams,
    rng: SimRng,
    streak: usize,
    steps: usize,
}

impl Controller {
    pub fn new(model: GripperModel, params: ControllerParams, rng: SimRng) -> Result<Self> {
        model.validate()?;
        params.validate(&model)?;
        Ok(Self {
            model,
            params,
            rng,
            streak: 0,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn reset(&mut self) {
        self.streak = 0;
        self.steps = 0;
    }

    /// One control period from the right sensor's cloud (sensor frame).
    pub fn step(&mut self, q_right: &JointVector, cloud_right: &TactileCloud) -> Result<ControlCommand> {
        let p = &self.params;
        let threshold = p.perception.deform_threshold;
        let (seg, hysteresis) = match segment_with_threshold(cloud_right, &p.perception, threshold, &mut self.rng) {
            Ok(s) => (s, false),
            Err(Error::NoContact) => {
                let relaxed = threshold - CONTACT_HYSTERESIS;
                match segment_with_threshold(cloud_right, &p.perception, relaxed, &mut self.rng) {
                    Ok(s) => (s, true),
                    Err(Error::NoContact) => return Err(Error::LostContact),
                    Err(e) => return Err(e),
                }
            }
            Err(e) => return Err(e),
        };
        let contact = object_contact_estimate(&seg.primary(), p.centroid_fraction)?;

        let tip_r = forward_kinematics(&self.model, q_right, Side::Right);
        let q_left = self.model.mirror(q_right);
        let tip_l = forward_kinematics(&self.model, &q_left, Side::Left);
        let p_obj = tip_r.transform_point(&contact.position);
        let error = alignment_error(&tip_l.position, &tip_r.position, &p_obj)?;
        let v_des = desired_velocity(&error, contact.deformed_radius, p);

        let j = reduced_jacobian(&jacobian_full(&self.model, q_right, Side::Right));
        let q_dot = joint_rate(&j, &v_des, q_right, &self.model, p)?;
        let q_next_right = self
            .model
            .clamp_to_limits(&JointVector::from_vector(&(q_right.as_vector() + q_dot * p.dt)));
        let q_next_left = self.model.mirror(&q_next_right);

        self.steps += 1;
        if error.theta_ab < p.convergence_angle {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        Ok(ControlCommand {
            q_dot,
            q_next_right,
            q_next_left,
            converged: self.streak >= p.convergence_window,
            error,
            deformed_radius: contact.deformed_radius,
            v_des,
            hysteresis,
        })
    }
}

/// Something the controller can sense and move.
pub trait Plant {
    /// Current right-sensor cloud, sensor frame.
    fn sense(&self) -> TactileCloud;
    /// Command both fingers (left = mirror of right).
    fn actuate(&mut self, q_right: &JointVector) -> Result<()>;
    fn q_right(&self) -> JointVector;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopOutcome {
    Converged,
    Timeout,
    LostContact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopRun {
    pub outcome: LoopOutcome,
    pub trace: Vec<TraceRecord>,
}

impl ClosedLoopRun {
    pub fn steps(&self) -> usize {
        self.trace.len()
    }

    pub fn final_theta(&self) -> Option<f64> {
        self.trace.last().map(|r| r.theta_ab)
    }

    /// Share of consecutive step pairs whose angle did not grow.
    pub fn non_increasing_fraction(&self) -> f64 {
        let pairs = self.trace.windows(2).count();
        if pairs == 0 {
            return 1.0;
        }
        let ok = self
            .trace
            .windows(2)
            .filter(|w| w[1].theta_ab <= w[0].theta_ab)
            .count();
        ok as f64 / pairs as f64
    }
}

/// Run the controller against `plant` until convergence, loss of contact or
/// `max_iterations`.
pub fn run_closed_loop(controller: &mut Controller, plant: &mut impl Plant) -> Result<ClosedLoopRun> {
    controller.reset();
    let mut trace = Vec::new();
    let dt = controller.params.dt;
    for k in 0..controller.params.max_iterations {
        let q = plant.q_right();
        let cmd = match controller.step(&q, &plant.sense()) {
            Ok(c) => c,
            Err(Error::LostContact) => {
                return Ok(ClosedLoopRun {
                    outcome: LoopOutcome::LostContact,
                    trace,
                })
            }
            Err(e) => return Err(e),
        };
        trace.push(TraceRecord {
            t: k as f64 * dt,
            q_right: q.0,
            q_left: controller.model.mirror(&q).0,
            theta_ab: cmd.error.theta_ab,
            deformed_radius: cmd.deformed_radius,
            v_des: cmd.v_des.into(),
            converged: cmd.converged,
        });
        if cmd.converged {
            return Ok(ClosedLoopRun {
                outcome: LoopOutcome::Converged,
                trace,
            });
        }
        match plant.actuate(&cmd.q_next_right) {
            Ok(()) => {}
            Err(Error::DroppedObject) => {
                return Ok(ClosedLoopRun {
                    outcome: LoopOutcome::LostContact,
                    trace,
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ClosedLoopRun {
        outcome: LoopOutcome::Timeout,
        trace,
    })
}
