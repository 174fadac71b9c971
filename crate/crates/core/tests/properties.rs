use std::collections::{BTreeSet, HashMap};

use nalgebra::{Rotation2, Vector2, Vector3};
use proptest::prelude::*;
use tactsort::classifier::logreg::softmax;
use tactsort::classifier::preprocess::pca_pose;
use tactsort::controller::{alignment_error, desired_velocity, ControllerParams};
use tactsort::grasp_planner::grasp_pose;
use tactsort::kinematics::{reduced_jacobian, within_limits, GripperModel, Jacobian, JointVector};
use tactsort::perception::{
    dbscan, object_contact_estimate, select_clusters, CandidatePoint, DbscanLabel, DbscanParams, TactilePoint,
    MAX_CLUSTERS,
};
use tactsort::simworld::catalog::NUM_CLASSES;

fn joint_vector() -> impl Strategy<Value = JointVector> {
    prop::array::uniform4(-4.0f64..4.0).prop_map(JointVector)
}

fn small_matrix() -> impl Strategy<Value = Jacobian> {
    prop::collection::vec(-10.0f64..10.0, 24).prop_map(|v| Jacobian::from_column_slice(&v))
}

/// Index sets of the non-noise clusters, independent of numbering.
fn partition(labels: &[DbscanLabel], ids: impl Fn(usize) -> usize) -> BTreeSet<BTreeSet<usize>> {
    let mut groups: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let DbscanLabel::Cluster(c) = l {
            groups.entry(*c).or_default().insert(ids(i));
        }
    }
    groups.into_values().collect()
}

fn angle_gap(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mirroring_twice_is_the_identity(q in joint_vector()) {
        let m = GripperModel::default();
        let back = m.mirror(&m.mirror(&q));
        for i in 0..4 {
            prop_assert_eq!(back.0[i], q.0[i]);
        }
    }

    #[test]
    fn clamped_configurations_are_within_limits(q in joint_vector()) {
        let m = GripperModel::default();
        let c = m.clamp_to_limits(&q);
        prop_assert!(within_limits(&m, &c).within);
        if within_limits(&m, &q).within {
            prop_assert_eq!(c, q);
        }
    }

    #[test]
    fn row_selection_is_linear(a in small_matrix(), b in small_matrix(), s in -3.0f64..3.0, t in -3.0f64..3.0) {
        let lhs = reduced_jacobian(&(a * s + b * t));
        let rhs = reduced_jacobian(&a) * s + reduced_jacobian(&b) * t;
        prop_assert!((lhs - rhs).amax() <= 1e-12);
    }

    #[test]
    fn dbscan_partition_survives_reordering(
        centres in prop::collection::vec((-60.0f64..60.0, -60.0f64..60.0), 1..6),
        jitter in prop::collection::vec((-0.4f64..0.4, -0.4f64..0.4, -0.4f64..0.4), 60),
        seed in any::<u64>(),
    ) {
        // Blobs either merge or sit at least eps apart, so border
        // assignment cannot depend on visiting order.
        let params = DbscanParams { eps: 1.5, min_pts: 4, ..DbscanParams::default() };
        let pts: Vec<Vector3<f64>> = jitter
            .iter()
            .enumerate()
            .map(|(i, (x, y, z))| {
                let (cx, cy) = centres[i % centres.len()];
                Vector3::new((cx / 4.0).round() * 4.0 + x, (cy / 4.0).round() * 4.0 + y, *z)
            })
            .collect();
        let mut order: Vec<usize> = (0..pts.len()).collect();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let shuffled: Vec<Vector3<f64>> = order.iter().map(|&i| pts[i]).collect();
        let a = partition(&dbscan(&pts, &params), |i| i);
        let b = partition(&dbscan(&shuffled, &params), |i| order[i]);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn at_most_four_clusters_are_kept(
        labels in prop::collection::vec(prop::option::of(0usize..9), 1..120),
        augmented in prop::collection::vec(any::<bool>(), 120),
    ) {
        let labels: Vec<DbscanLabel> = labels.into_iter().map(|l| l.map_or(DbscanLabel::Noise, DbscanLabel::Cluster)).collect();
        let cands: Vec<CandidatePoint> = (0..labels.len())
            .map(|i| CandidatePoint {
                point: TactilePoint::from_position(Vector3::new(0.0, 0.0, 10.0), 15.5),
                augmented: augmented[i],
            })
            .collect();
        if let Ok(clusters) = select_clusters(&labels, &cands) {
            prop_assert!(!clusters.is_empty() && clusters.len() <= MAX_CLUSTERS);
            for w in clusters.windows(2) {
                prop_assert!(w[0].members.len() >= w[1].members.len());
            }
            for c in &clusters {
                prop_assert!(c.members.iter().all(|&i| !cands[i].augmented));
            }
        }
    }

    #[test]
    fn contact_estimate_lies_within_the_cluster_extent(
        pts in prop::collection::vec((-15.0f64..15.0, -15.0f64..15.0, -15.0f64..15.0), 4..80),
        fraction in 0.01f64..1.0,
    ) {
        let cluster: Vec<TactilePoint> = pts
            .iter()
            .map(|(x, y, z)| TactilePoint::from_position(Vector3::new(*x, *y, *z), 15.5))
            .collect();
        let est = object_contact_estimate(&cluster, fraction).unwrap();
        prop_assert_eq!(est.used_points, ((fraction * cluster.len() as f64).floor() as usize).max(1));
        for k in 0..3 {
            let lo = cluster.iter().map(|p| p.position[k]).fold(f64::INFINITY, f64::min);
            let hi = cluster.iter().map(|p| p.position[k]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(est.position[k] >= lo - 1e-9 && est.position[k] <= hi + 1e-9);
        }
        let r_max = cluster.iter().map(|p| p.r).fold(0.0, f64::max);
        prop_assert!(est.deformed_radius <= r_max + 1e-9);
    }

    #[test]
    fn aligned_contact_at_the_offset_commands_nothing(
        right in prop::array::uniform3(-50.0f64..50.0),
        dir in prop::array::uniform3(-1.0f64..1.0),
        along in 0.05f64..0.95,
    ) {
        let params = ControllerParams::default();
        let d = Vector3::from(dir);
        prop_assume!(d.norm() > 0.1);
        let r = Vector3::from(right);
        let left = r + d * 80.0 / d.norm();
        let obj = r + (left - r) * along;
        let err = alignment_error(&left, &r, &obj).unwrap();
        prop_assert!(err.theta_ab < 1e-6);
        let v = desired_velocity(&err, params.contact_offset, &params);
        prop_assert!(v.amax() < 1e-6 * params.kp.iter().cloned().fold(0.0, f64::max) / params.dt);
    }

    #[test]
    fn wrist_angle_ignores_scale(v in prop::array::uniform3(-100.0f64..100.0), s in 0.01f64..100.0) {
        let cen = Vector3::new(3.0, -2.0, 1.0);
        let v = Vector3::from(v);
        let a = grasp_pose(cen + v, cen);
        let b = grasp_pose(cen + v * s, cen);
        prop_assert!(a.theta > -std::f64::consts::PI - 1e-12 && a.theta <= std::f64::consts::PI);
        if v.x.hypot(v.y) > 1e-6 {
            prop_assert!(angle_gap(a.theta, b.theta, std::f64::consts::TAU) < 1e-9);
        }
    }

    #[test]
    fn softmax_is_a_distribution_and_shift_invariant(
        logits in prop::collection::vec(-30.0f64..30.0, NUM_CLASSES),
        shift in -500.0f64..500.0,
    ) {
        let l: [f64; NUM_CLASSES] = logits.clone().try_into().unwrap();
        let shifted: [f64; NUM_CLASSES] = std::array::from_fn(|k| l[k] + shift);
        let (p, q) = (softmax(&l), softmax(&shifted));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        for k in 0..NUM_CLASSES {
            prop_assert!((p[k] - q[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn principal_axis_follows_rigid_motion(
        pts in prop::collection::vec((-20.0f64..20.0, -3.0f64..3.0, 0.1f64..1.0), 12..60),
        phi in 0.0f64..std::f64::consts::TAU,
        shift in prop::array::uniform2(-50.0f64..50.0),
    ) {
        let base: Vec<(f64, f64, f64)> = pts.clone();
        let pose = pca_pose(&base).unwrap();
        prop_assume!(!pose.isotropic);
        let rot = Rotation2::new(phi);
        let moved: Vec<(f64, f64, f64)> = base
            .iter()
            .map(|&(x, y, w)| {
                let p = rot * Vector2::new(x, y) + Vector2::from(shift);
                (p.x, p.y, w)
            })
            .collect();
        let after = pca_pose(&moved).unwrap();
        let c = rot * Vector2::from(pose.center) + Vector2::from(shift);
        prop_assert!((Vector2::from(after.center) - c).norm() < 1e-7);
        // Elongated sets have a well separated spectrum, so the axis is
        // stable to rounding.
        prop_assert!(angle_gap(after.angle, pose.angle + phi, std::f64::consts::PI) < 1e-6);
        prop_assert!((0.0..std::f64::consts::PI).contains(&after.angle));
    }
}
