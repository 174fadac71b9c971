//! Kinematics of one 4-DOF finger of the gripper.
//!
//! Each finger is a serial chain of four revolute joints with axes ordered
//! (x, z, z, x) from base to tip. At `q = 0` the links point along the
//! gripper +x axis (the approach direction), so the two z joints act as
//! closing hinges and the two x joints roll the finger about its length.
//! The fingertip frame sits at the centre of the hemispherical sensor with
//! its local +z (the sensor pole) facing the opposite finger.
//!
//! The right finger is the controlled one. Its base sits on the gripper +y
//! side, so a positive gripper-frame `y` rate moves it away from the left
//! finger. The left finger base is the right base rotated by pi about x and
//! reflected to -y; joint values map between the two fingers through
//! [`GripperModel::mirror`].

use std::path::Path;

use nalgebra::{Matrix3, Rotation3, SMatrix, Unit, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Jacobian = SMatrix<f64, 6, 4>;
pub type ReducedJacobian = SMatrix<f64, 3, 4>;
pub type PseudoInverse = SMatrix<f64, 4, 3>;

/// Reciprocal-condition floor below which an undamped normal matrix is
/// treated as singular.
pub const RANK_TOLERANCE: f64 = 1e-12;

pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub lower: f64,
    pub upper: f64,
}

impl JointLimit {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.lower && q <= self.upper
    }

    /// Signed distance to the nearest bound, negative outside.
    pub fn margin(&self, q: f64) -> f64 {
        (q - self.lower).min(self.upper - q)
    }
}

/// Joint values of one finger, radians, base to tip.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JointVector(pub [f64; 4]);

impl JointVector {
    pub const ZERO: JointVector = JointVector([0.0; 4]);

    pub fn new(q1: f64, q2: f64, q3: f64, q4: f64) -> Self {
        Self([q1, q2, q3, q4])
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::from(self.0)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self([v[0], v[1], v[2], v[3]])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for JointVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Rigid pose in the gripper frame. Positions in mm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: Rotation3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: Rotation3::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: Rotation3<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation * other.position,
            orientation: self.orientation * other.orientation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * v
    }

    /// Max deviation of `RᵀR` from identity, plus `|det R - 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.orientation.matrix();
        let dev = (m.transpose() * m - Matrix3::identity()).amax();
        dev.max((m.determinant() - 1.0).abs())
    }
}

/// Gripper-frame translation rate `y` and integrated rotation about x and z.
///
/// The two angles are the x and z components of the rotation vector taking
/// the home fingertip orientation to the current one. This is a convention:
/// the controller only consumes the corresponding angular-velocity rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FingertipState {
    pub y: f64,
    pub theta_x: f64,
    pub theta_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasePose {
    pub position: [f64; 3],
    /// Roll, pitch, yaw in radians (fixed-axis x, y, z).
    pub rpy: [f64; 3],
}

impl BasePose {
    pub fn to_pose(&self) -> Pose {
        Pose::new(
            Vector3::from(self.position),
            Rotation3::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        )
    }
}

/// Geometry shared by every module: link lengths, joint axes and limits,
/// finger bases and the sensor radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperModel {
    pub model_version: u32,
    /// (p12, p23, p34, p4ft) in mm.
    pub link_lengths: [f64; 4],
    /// Direction of every link at `q = 0`, in the finger base frame.
    pub link_direction: [f64; 3],
    pub fingertip_radius: f64,
    pub joint_axes: [[f64; 3]; 4],
    pub joint_limits: [JointLimit; 4],
    pub right_base: BasePose,
    pub left_base: BasePose,
    /// Fixed rotation from the last link frame to the sensor frame.
    pub fingertip_mount_rpy: [f64; 3],
    /// Per-joint factors mapping right-finger joint values to the left finger.
    pub mirror_signs: [f64; 4],
}

impl Default for GripperModel {
    fn default() -> Self {
        let half_sep = 40.0;
        let x_limit = JointLimit::new(-45f64.to_radians(), 90f64.to_radians());
        let z_limit = JointLimit::new(-90f64.to_radians(), 90f64.to_radians());
        Self {
            model_version: MODEL_VERSION,
            link_lengths: [24.0, 95.52, 24.0, 55.0],
            link_direction: [1.0, 0.0, 0.0],
            fingertip_radius: 15.5,
            joint_axes: [
                [1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.0, 0.0, 1.0],
                [1.0, 0.0, 0.0],
            ],
            joint_limits: [x_limit, z_limit, z_limit, x_limit],
            right_base: BasePose {
                position: [0.0, half_sep, 0.0],
                rpy: [0.0, 0.0, 0.0],
            },
            left_base: BasePose {
                position: [0.0, -half_sep, 0.0],
                rpy: [std::f64::consts::PI, 0.0, 0.0],
            },
            fingertip_mount_rpy: [std::f64::consts::FRAC_PI_2, 0.0, 0.0],
            mirror_signs: [-1.0, 1.0, 1.0, -1.0],
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.model_version != MODEL_VERSION {
            return bad(format!(
                "unsupported model_version {} (expected {MODEL_VERSION})",
                self.model_version
            ));
        }
        if let Some(l) = self.link_lengths.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return bad(format!("link length {l} must be positive"));
        }
        if !(self.fingertip_radius > 0.0 && self.fingertip_radius.is_finite()) {
            return bad("fingertip_radius must be positive".into());
        }
        for (i, lim) in self.joint_limits.iter().enumerate() {
            if !(lim.lower.is_finite() && lim.upper.is_finite() && lim.lower <= lim.upper) {
                return bad(format!("joint {} limit interval is empty", i + 1));
            }
        }
        for (i, a) in self.joint_axes.iter().enumerate() {
            let n = Vector3::from(*a).norm();
            if (n - 1.0).abs() > 1e-9 {
                return bad(format!("joint {} axis is not unit length", i + 1));
            }
        }
        if (Vector3::from(self.link_direction).norm() - 1.0).abs() > 1e-9 {
            return bad("link_direction is not unit length".into());
        }
        if self.mirror_signs.iter().any(|s| s.abs() != 1.0) {
            return bad("mirror_signs must be +1 or -1".into());
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let model: GripperModel = toml::from_str(s)
            .map_err(|e| Error::InvalidParameter(format!("gripper model: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: GripperModel =
            toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("gripper model serialises")
    }

    pub fn q_mid(&self) -> JointVector {
        JointVector(std::array::from_fn(|i| self.joint_limits[i].mid()))
    }

    pub fn base_pose(&self, side: Side) -> Pose {
        match side {
            Side::Right => self.right_base.to_pose(),
            Side::Left => self.left_base.to_pose(),
        }
    }

    /// Map joint values between the fingers. Involutive.
    pub fn mirror(&self, q: &JointVector) -> JointVector {
        JointVector(std::array::from_fn(|i| self.mirror_signs[i] * q.0[i]))
    }

    pub fn clamp_to_limits(&self, q: &JointVector) -> JointVector {
        JointVector(std::array::from_fn(|i| {
            let lim = &self.joint_limits[i];
            q.0[i].clamp(lim.lower, lim.upper)
        }))
    }

    fn mount(&self) -> Rotation3<f64> {
        let [r, p, y] = self.fingertip_mount_rpy;
        Rotation3::from_euler_angles(r, p, y)
    }

    fn chain(&self, q: &JointVector, side: Side) -> ChainFrames {
        let base = self.base_pose(side);
        let dir = Vector3::from(self.link_direction);
        let mut rot = base.orientation;
        let mut pos = base.position;
        let mut origins = [Vector3::zeros(); 4];
        let mut axes = [Vector3::zeros(); 4];
        for i in 0..4 {
            let local = Unit::new_unchecked(Vector3::from(self.joint_axes[i]));
            origins[i] = pos;
            axes[i] = rot * local.into_inner();
            rot *= Rotation3::from_axis_angle(&local, q.0[i]);
            pos += rot * (dir * self.link_lengths[i]);
        }
        ChainFrames {
            origins,
            axes,
            tip: Pose::new(pos, rot * self.mount()),
        }
    }
}

struct ChainFrames {
    origins: [Vector3<f64>; 4],
    axes: [Vector3<f64>; 4],
    tip: Pose,
}

/// Fingertip-origin pose of one finger in the gripper frame.
pub fn forward_kinematics(model: &GripperModel, q: &JointVector, side: Side) -> Pose {
    model.chain(q, side).tip
}

/// Geometric Jacobian of the fingertip origin: rows 0..3 linear velocity,
/// rows 3..6 angular velocity, both in the gripper frame.
pub fn jacobian_full(model: &GripperModel, q: &JointVector, side: Side) -> Jacobian {
    let frames = model.chain(q, side);
    let tip = frames.tip.position;
    let mut j = Jacobian::zeros();
    for i in 0..4 {
        let w = frames.axes[i];
        let v = w.cross(&(tip - frames.origins[i]));
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&v);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&w);
    }
    j
}

/// Task rows (y translation, rotation about x, rotation about z).
pub fn reduced_jacobian(j_all: &Jacobian) -> ReducedJacobian {
    let mut j = ReducedJacobian::zeros();
    j.row_mut(0).copy_from(&j_all.row(1));
    j.row_mut(1).copy_from(&j_all.row(3));
    j.row_mut(2).copy_from(&j_all.row(5));
    j
}

/// `(JᵀJ + λ²I)⁻¹Jᵀ`, evaluated as `Jᵀ(JJᵀ + λ²I)⁻¹`.
///
/// The two forms agree for every `λ > 0`. The second one stays defined at
/// `λ = 0` for a full-row-rank `J`, where it is the Moore-Penrose inverse;
/// the 4×4 normal matrix of a 3×4 Jacobian is always singular there.
pub fn damped_pseudoinverse(j: &ReducedJacobian, damping: f64) -> Result<PseudoInverse> {
    if !(damping >= 0.0 && damping.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "damping must be finite and >= 0, got {damping}"
        )));
    }
    let normal = j * j.transpose() + Matrix3::identity() * (damping * damping);
    if damping == 0.0 {
        let eig = normal.symmetric_eigenvalues();
        let max = eig.amax();
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let rcond = if max > 0.0 { min / max } else { 0.0 };
        if rcond < RANK_TOLERANCE {
            return Err(Error::RankDeficient { rcond });
        }
    }
    // Solve rather than invert: the explicit inverse loses about two more
    // digits on the poorly scaled (mm against rad) rows.
    let chol = normal.cholesky().ok_or(Error::RankDeficient { rcond: 0.0 })?;
    Ok(chol.solve(j).transpose())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitCheck {
    pub within: bool,
    pub margins: [f64; 4],
    /// Index of the joint with the most negative margin, if any is outside.
    pub worst: Option<usize>,
}

/// Closed-interval limit check with signed margins.
pub fn within_limits(model: &GripperModel, q: &JointVector) -> LimitCheck {
    let margins: [f64; 4] = std::array::from_fn(|i| model.joint_limits[i].margin(q.0[i]));
    let within = margins.iter().all(|m| *m >= 0.0);
    let worst = if within {
        None
    } else {
        margins
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    };
    LimitCheck {
        within,
        margins,
        worst,
    }
}

pub fn fingertip_state(model: &GripperModel, q: &JointVector, side: Side) -> FingertipState {
    let pose = forward_kinematics(model, q, side);
    let home = forward_kinematics(model, &JointVector::ZERO, side);
    let rel = pose.orientation * home.orientation.inverse();
    let rv = rel.scaled_axis();
    FingertipState {
        y: pose.position.y,
        theta_x: rv.x,
        theta_z: rv.z,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4 as V4};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(model: &GripperModel, rng: &mut impl Rng) -> JointVector {
        JointVector(std::array::from_fn(|i| {
            let l = model.joint_limits[i];
            rng.random_range(l.lower..=l.upper)
        }))
    }

    // Independent oracle: homogeneous 4×4 matrices from hand-written
    // elementary rotations, no nalgebra rotation types involved.
    fn rot_x(a: f64) -> Matrix4<f64> {
        let (s, c) = a.sin_cos();
        Matrix4::new(
            1.0, 0.0, 0.0, 0.0, 0.0, c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0,
        )
    }
    fn rot_z(a: f64) -> Matrix4<f64> {
        let (s, c) = a.sin_cos();
        Matrix4::new(
            c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        )
    }
    fn trans(x: f64, y: f64, z: f64) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m[(0, 3)] = x;
        m[(1, 3)] = y;
        m[(2, 3)] = z;
        m
    }

    fn oracle_tip(model: &GripperModel, q: &JointVector, side: Side) -> Matrix4<f64> {
        let l = model.link_lengths;
        let base = match side {
            Side::Right => trans(0.0, 40.0, 0.0),
            Side::Left => trans(0.0, -40.0, 0.0) * rot_x(std::f64::consts::PI),
        };
        base * rot_x(q[0])
            * trans(l[0], 0.0, 0.0)
            * rot_z(q[1])
            * trans(l[1], 0.0, 0.0)
            * rot_z(q[2])
            * trans(l[2], 0.0, 0.0)
            * rot_x(q[3])
            * trans(l[3], 0.0, 0.0)
            * rot_x(std::f64::consts::FRAC_PI_2)
    }

    #[test]
    fn home_pose_is_sum_of_links() {
        let m = GripperModel::default();
        let p = forward_kinematics(&m, &JointVector::ZERO, Side::Right);
        let reach: f64 = m.link_lengths.iter().sum();
        assert!((p.position - Vector3::new(reach, 40.0, 0.0)).norm() < 1e-12);
        // Sensor poles face each other at home.
        let pole_r = p.orientation * Vector3::z();
        let pl = forward_kinematics(&m, &JointVector::ZERO, Side::Left);
        let pole_l = pl.orientation * Vector3::z();
        assert!((pole_r - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        assert!((pole_l - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn first_joint_moves_tip_on_circle() {
        let m = GripperModel::default();
        // Give the chain an off-axis tip so joint 1 actually moves it.
        let bent = JointVector::new(0.0, -0.4, 0.3, 0.0);
        let axis_point = Vector3::new(0.0, 40.0, 0.0);
        let radius = |q: &JointVector| {
            let p = forward_kinematics(&m, q, Side::Right).position - axis_point;
            (p.y * p.y + p.z * p.z).sqrt()
        };
        let r0 = radius(&bent);
        assert!(r0 > 1.0);
        for k in 0..20 {
            let phi = -0.7 + 0.08 * k as f64;
            let q = JointVector::new(phi, bent[1], bent[2], bent[3]);
            assert!((radius(&q) - r0).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_transform_composition_oracle() {
        let m = GripperModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let q = random_q(&m, &mut rng);
            for side in [Side::Right, Side::Left] {
                let pose = forward_kinematics(&m, &q, side);
                let t = oracle_tip(&m, &q, side);
                let p = Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)]);
                assert!((pose.position - p).norm() < 1e-9);
                let r = t.fixed_view::<3, 3>(0, 0).into_owned();
                assert!((pose.orientation.matrix() - r).amax() < 1e-12);
                assert!(pose.orthonormality_error() < 1e-9);
            }
        }
    }

    #[test]
    fn mirror_reflects_across_xz_plane() {
        let m = GripperModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let q = random_q(&m, &mut rng);
            let pr = forward_kinematics(&m, &q, Side::Right).position;
            let pl = forward_kinematics(&m, &m.mirror(&q), Side::Left).position;
            assert!((pl - Vector3::new(pr.x, -pr.y, pr.z)).norm() < 1e-9);
            assert_eq!(m.mirror(&m.mirror(&q)), q);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = GripperModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let eps = 1e-6;
        for _ in 0..100 {
            let q = random_q(&m, &mut rng);
            let j = jacobian_full(&m, &q, Side::Right);
            for i in 0..4 {
                let mut qp = q;
                let mut qm = q;
                qp.0[i] += eps;
                qm.0[i] -= eps;
                let fp = forward_kinematics(&m, &qp, Side::Right);
                let fm = forward_kinematics(&m, &qm, Side::Right);
                let dv = (fp.position - fm.position) / (2.0 * eps);
                // Vee of the skew part; acos-based axis-angle loses precision here.
                let d = (fp.orientation * fm.orientation.inverse()).into_inner();
                let dw = Vector3::new(d[(2, 1)] - d[(1, 2)], d[(0, 2)] - d[(2, 0)], d[(1, 0)] - d[(0, 1)])
                    / (4.0 * eps);
                assert!((dv - j.fixed_view::<3, 1>(0, i)).amax() < 1e-6);
                assert!((dw - j.fixed_view::<3, 1>(3, i)).amax() < 1e-6);
            }
        }
    }

    #[test]
    fn reduced_selects_rows_2_4_6() {
        let j = Jacobian::from_fn(|r, c| (10 * (r + 1) + c) as f64);
        let red = reduced_jacobian(&j);
        for c in 0..4 {
            assert_eq!(red[(0, c)], (20 + c) as f64);
            assert_eq!(red[(1, c)], (40 + c) as f64);
            assert_eq!(red[(2, c)], (60 + c) as f64);
        }
        assert_eq!(reduced_jacobian(&Jacobian::zeros()), ReducedJacobian::zeros());
    }

    #[test]
    fn reduced_product_matches_full_rows() {
        let m = GripperModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let q = random_q(&m, &mut rng);
            let qd = V4::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let full = jacobian_full(&m, &q, Side::Right) * qd;
            let red = reduced_jacobian(&jacobian_full(&m, &q, Side::Right)) * qd;
            assert!((red[0] - full[1]).abs() < 1e-12);
            assert!((red[1] - full[3]).abs() < 1e-12);
            assert!((red[2] - full[5]).abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_rows_pseudoinverse_is_transpose() {
        let j = ReducedJacobian::new(
            1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
        );
        let p = damped_pseudoinverse(&j, 0.0).unwrap();
        assert!((p - j.transpose()).amax() < 1e-15);
    }

    #[test]
    fn rank_deficient_without_damping() {
        let j = ReducedJacobian::new(
            1.0, 2.0, 0.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
        );
        assert!(matches!(
            damped_pseudoinverse(&j, 0.0),
            Err(Error::RankDeficient { .. })
        ));
        assert!(damped_pseudoinverse(&j, 0.1).is_ok());
        assert!(damped_pseudoinverse(&j, -1.0).is_err());
    }

    #[test]
    fn damping_shrinks_pseudoinverse_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let j = ReducedJacobian::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let smax = j.singular_values().max();
        let mut prev = f64::INFINITY;
        for k in 0..30 {
            let lambda = smax * (1.0 + k as f64);
            let n = damped_pseudoinverse(&j, lambda).unwrap().norm();
            assert!(n < prev);
            prev = n;
        }
        assert!(prev < 0.05 / smax);
    }

    #[test]
    fn matches_normal_form_for_positive_damping() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let j = ReducedJacobian::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let lambda = 0.1;
            let normal = j.transpose() * j + SMatrix::<f64, 4, 4>::identity() * lambda * lambda;
            let literal = normal.try_inverse().unwrap() * j.transpose();
            let ours = damped_pseudoinverse(&j, lambda).unwrap();
            assert!((literal - ours).amax() < 1e-9);
        }
    }

    #[test]
    fn within_limits_boundaries() {
        let m = GripperModel::default();
        let mid = m.q_mid();
        let c = within_limits(&m, &mid);
        assert!(c.within);
        for i in 0..4 {
            assert!((c.margins[i] - m.joint_limits[i].half_width()).abs() < 1e-12);
        }
        let mut at_upper = mid;
        at_upper.0[2] = m.joint_limits[2].upper;
        let c = within_limits(&m, &at_upper);
        assert!(c.within);
        assert_eq!(c.margins[2], 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let i = rng.random_range(0..4);
            let mut q = mid;
            let lim = m.joint_limits[i];
            q.0[i] = if rng.random_bool(0.5) {
                lim.upper + rng.random_range(1e-6..1.0)
            } else {
                lim.lower - rng.random_range(1e-6..1.0)
            };
            let c = within_limits(&m, &q);
            assert!(!c.within);
            assert_eq!(c.worst, Some(i));
        }
    }

    #[test]
    fn model_file_round_trip() {
        let m = GripperModel::default();
        let text = m.to_toml_string();
        assert!(text.contains("model_version"));
        assert_eq!(GripperModel::from_toml_str(&text).unwrap(), m);
        let broken = text.replace("fingertip_radius = 15.5", "fingertip_radius = -1.0");
        assert!(GripperModel::from_toml_str(&broken).is_err());
    }

    #[test]
    fn fingertip_state_tracks_rotation() {
        let m = GripperModel::default();
        let s0 = fingertip_state(&m, &JointVector::ZERO, Side::Right);
        assert!((s0.y - 40.0).abs() < 1e-12);
        assert!(s0.theta_x.abs() < 1e-12 && s0.theta_z.abs() < 1e-12);
        let s = fingertip_state(&m, &JointVector::new(0.0, 0.0, 0.0, 0.2), Side::Right);
        assert!((s.theta_x - 0.2).abs() < 1e-12);
        let s = fingertip_state(&m, &JointVector::new(0.0, -0.1, 0.0, 0.0), Side::Right);
        assert!((s.theta_z + 0.1).abs() < 1e-12);
    }

    fn full_rank_matrix() -> impl Strategy<Value = ReducedJacobian> {
        proptest::collection::vec(-1.0f64..1.0, 12)
            .prop_map(|v| ReducedJacobian::from_row_slice(&v))
            .prop_filter("well conditioned", |j| {
                let s = j.singular_values();
                s.min() > 0.05 * s.max()
            })
    }

    proptest! {
        #[test]
        fn moore_penrose_identities(j in full_rank_matrix()) {
            let p = damped_pseudoinverse(&j, 0.0).unwrap();
            prop_assert!((j * p * j - j).amax() < 1e-9);
            prop_assert!((p * j * p - p).amax() < 1e-9);
        }

        #[test]
        fn null_space_is_invisible_to_task(j in full_rank_matrix(),
                                           z in proptest::collection::vec(-10.0f64..10.0, 4)) {
            let p = damped_pseudoinverse(&j, 0.0).unwrap();
            let z = V4::from_column_slice(&z);
            let proj = SMatrix::<f64, 4, 4>::identity() - p * j;
            prop_assert!((j * proj * z).norm() <= 1e-9 * z.norm().max(1e-300));
        }

        #[test]
        fn reduced_jacobian_is_linear(a in -3.0f64..3.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Jacobian::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let y = Jacobian::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let lhs = reduced_jacobian(&(x * a + y));
            let rhs = reduced_jacobian(&x) * a + reduced_jacobian(&y);
            prop_assert!((lhs - rhs).amax() < 1e-12);
        }
    }
}
