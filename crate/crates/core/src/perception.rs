//! Tactile point-cloud perception.
//!
//! A cloud sampled from the fingertip depth image is split into deformed and
//! undeformed points, lightly augmented with undeformed samples, clustered
//! with DBSCAN, and reduced to at most four contact clusters. The primary
//! (largest) cluster feeds the contact estimate used by the controller.

use std::collections::HashMap;

use nalgebra::Vector3;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Side;

pub const MAX_CLUSTERS: usize = 4;
pub const CONTROL_POINT_LIMIT: usize = 5000;
/// Allowed excess of a measured radius over the nominal sensor radius.
pub const CALIBRATION_SLACK: f64 = 0.5;
pub const MIN_CLUSTER_POINTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointLabel {
    Undeformed,
    Noise,
    /// Selected cluster rank, 1 = largest.
    Cluster(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TactilePoint {
    /// Fingertip frame, mm.
    pub position: Vector3<f64>,
    /// Radial distance from the fingertip origin, mm.
    pub r: f64,
    /// `fingertip_radius - r`.
    pub deformation: f64,
    pub label: PointLabel,
    /// Row-major index into the source depth image, when there is one.
    pub pixel: Option<u32>,
}

impl TactilePoint {
    pub fn from_position(position: Vector3<f64>, fingertip_radius: f64) -> Self {
        let r = position.norm();
        Self {
            position,
            r,
            deformation: fingertip_radius - r,
            label: PointLabel::Undeformed,
            pixel: None,
        }
    }

    /// Point at radius `r` along the unit direction `dir`.
    pub fn along(dir: &Vector3<f64>, r: f64, fingertip_radius: f64, pixel: Option<u32>) -> Self {
        Self {
            position: dir * r,
            r,
            deformation: fingertip_radius - r,
            label: PointLabel::Undeformed,
            pixel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureMode {
    Full,
    ControlTruncated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TactileCloud {
    pub points: Vec<TactilePoint>,
    pub capture_mode: CaptureMode,
    pub sensor: Side,
    pub fingertip_radius: f64,
}

impl TactileCloud {
    pub fn new(points: Vec<TactilePoint>, sensor: Side, fingertip_radius: f64) -> Self {
        Self {
            points,
            capture_mode: CaptureMode::Full,
            sensor,
            fingertip_radius,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let rmax = self.fingertip_radius + CALIBRATION_SLACK;
        for (i, p) in self.points.iter().enumerate() {
            if !(p.r >= 0.0 && p.r <= rmax) {
                return Err(Error::InvalidParameter(format!(
                    "point {i}: radius {} outside [0, {rmax}]",
                    p.r
                )));
            }
            if (p.deformation - (self.fingertip_radius - p.r)).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "point {i}: deformation inconsistent with radius"
                )));
            }
        }
        if self.capture_mode == CaptureMode::ControlTruncated
            && self.points.len() > CONTROL_POINT_LIMIT
        {
            return Err(Error::InvalidParameter(format!(
                "control cloud has {} points (limit {CONTROL_POINT_LIMIT})",
                self.points.len()
            )));
        }
        let mut labels: Vec<u8> = self
            .points
            .iter()
            .filter_map(|p| match p.label {
                PointLabel::Cluster(k) => Some(k),
                _ => None,
            })
            .collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() > MAX_CLUSTERS {
            return Err(Error::InvalidParameter(format!(
                "{} cluster labels (max {MAX_CLUSTERS})",
                labels.len()
            )));
        }
        Ok(())
    }

    pub fn max_deformation(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.deformation)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DbscanParams {
    /// Neighbourhood radius, mm.
    pub eps: f64,
    pub min_pts: usize,
    /// Fraction of undeformed points added to the clustering input.
    pub augment_fraction: f64,
    /// A point is deformed when its deformation exceeds this, mm.
    pub deform_threshold: f64,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            eps: 1.5,
            min_pts: 8,
            augment_fraction: 0.04,
            deform_threshold: 3.0,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter("eps must be positive".into()));
        }
        if self.min_pts < 1 {
            return Err(Error::InvalidParameter("min_pts must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.augment_fraction) {
            return Err(Error::InvalidParameter(
                "augment_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

fn partition_indices(cloud: &TactileCloud, threshold: f64) -> (Vec<usize>, Vec<usize>) {
    (0..cloud.points.len()).partition(|&i| cloud.points[i].deformation > threshold)
}

/// Split into (deformed, undeformed). Deformation exactly at the threshold
/// counts as undeformed.
pub fn threshold_deformed(
    cloud: &TactileCloud,
    params: &DbscanParams,
) -> (Vec<TactilePoint>, Vec<TactilePoint>) {
    let (d, u) = partition_indices(cloud, params.deform_threshold);
    (
        d.into_iter().map(|i| cloud.points[i]).collect(),
        u.into_iter().map(|i| cloud.points[i]).collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidatePoint {
    pub point: TactilePoint,
    /// Sampled from the undeformed set; never counted in cluster statistics.
    pub augmented: bool,
}

fn augment_count(undeformed: usize, fraction: f64) -> usize {
    ((fraction * undeformed as f64).floor() as usize).min(undeformed)
}

fn sample_indices(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let mut picked = index::sample(rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Deformed points followed by `floor(fraction * |undeformed|)` undeformed
/// points drawn uniformly without replacement.
pub fn augment_for_clustering(
    deformed: &[TactilePoint],
    undeformed: &[TactilePoint],
    params: &DbscanParams,
    rng: &mut impl Rng,
) -> Vec<CandidatePoint> {
    let k = augment_count(undeformed.len(), params.augment_fraction);
    let mut out: Vec<CandidatePoint> = deformed
        .iter()
        .map(|p| CandidatePoint {
            point: *p,
            augmented: false,
        })
        .collect();
    out.extend(
        sample_indices(rng, undeformed.len(), k)
            .into_iter()
            .map(|i| CandidatePoint {
                point: undeformed[i],
                augmented: true,
            }),
    );
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DbscanLabel {
    Noise,
    /// Clusters are numbered in discovery order.
    Cluster(usize),
}

struct HashGrid {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl HashGrid {
    fn new(points: &[Vector3<f64>], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { cell, cells }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    fn neighbours(&self, points: &[Vector3<f64>], i: usize, eps: f64, out: &mut Vec<usize>) {
        out.clear();
        let p = &points[i];
        let (kx, ky, kz) = Self::key(p, self.cell);
        let eps2 = eps * eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        out.extend(
                            bucket
                                .iter()
                                .copied()
                                .filter(|&j| (points[j] - p).norm_squared() <= eps2),
                        );
                    }
                }
            }
        }
    }
}

/// DBSCAN with Euclidean neighbourhoods `|p - q| <= eps` (a point is its own
/// neighbour). Clusters are seeded from the lowest-index unassigned core
/// point; a border point joins the first cluster that reaches it.
pub fn dbscan(points: &[Vector3<f64>], params: &DbscanParams) -> Vec<DbscanLabel> {
    let n = points.len();
    let grid = HashGrid::new(points, params.eps);
    let mut buf = Vec::new();
    let core: Vec<bool> = (0..n)
        .map(|i| {
            grid.neighbours(points, i, params.eps, &mut buf);
            buf.len() >= params.min_pts
        })
        .collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    let mut queue = Vec::new();
    for seed in 0..n {
        if labels[seed].is_some() || !core[seed] {
            continue;
        }
        labels[seed] = Some(next);
        queue.push(seed);
        while let Some(p) = queue.pop() {
            grid.neighbours(points, p, params.eps, &mut buf);
            for &q in &buf {
                if labels[q].is_none() {
                    labels[q] = Some(next);
                    if core[q] {
                        queue.push(q);
                    }
                }
            }
        }
        next += 1;
    }
    labels
        .into_iter()
        .map(|l| l.map_or(DbscanLabel::Noise, DbscanLabel::Cluster))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    /// DBSCAN cluster id this came from.
    pub source_label: usize,
    /// Indices of non-augmented members in the clustering input.
    pub members: Vec<usize>,
}

/// Up to four clusters ordered by descending size (ties: lower DBSCAN id
/// first). Augmented and noise points are excluded.
pub fn select_clusters(labels: &[DbscanLabel], candidates: &[CandidatePoint]) -> Result<Vec<Cluster>> {
    let mut by_label: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, (label, cand)) in labels.iter().zip(candidates).enumerate() {
        if let DbscanLabel::Cluster(c) = label {
            if !cand.augmented {
                by_label.entry(*c).or_default().push(i);
            }
        }
    }
    let mut clusters: Vec<Cluster> = by_label
        .into_iter()
        .map(|(source_label, members)| Cluster {
            source_label,
            members,
        })
        .collect();
    clusters.sort_by(|a, b| {
        b.members
            .len()
            .cmp(&a.members.len())
            .then(a.source_label.cmp(&b.source_label))
    });
    clusters.truncate(MAX_CLUSTERS);
    if clusters.is_empty() {
        return Err(Error::NoContact);
    }
    Ok(clusters)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactEstimate {
    /// Fingertip frame, mm.
    pub position: Vector3<f64>,
    /// Mean radius of the averaged subset, mm.
    pub deformed_radius: f64,
    pub used_points: usize,
}

/// Mean of the `max(1, floor(fraction * n))` cluster points with the largest
/// radius, i.e. the least deformed rim of the contact patch.
pub fn object_contact_estimate(cluster: &[TactilePoint], fraction: f64) -> Result<ContactEstimate> {
    if cluster.len() < MIN_CLUSTER_POINTS {
        return Err(Error::DegenerateCluster {
            points: cluster.len(),
            required: MIN_CLUSTER_POINTS,
        });
    }
    let k = ((fraction * cluster.len() as f64).floor() as usize).clamp(1, cluster.len());
    let mut order: Vec<usize> = (0..cluster.len()).collect();
    order.sort_by(|&a, &b| cluster[b].r.total_cmp(&cluster[a].r).then(a.cmp(&b)));
    let chosen = &order[..k];
    let position = chosen
        .iter()
        .map(|&i| cluster[i].position)
        .sum::<Vector3<f64>>()
        / k as f64;
    let deformed_radius = chosen.iter().map(|&i| cluster[i].r).sum::<f64>() / k as f64;
    Ok(ContactEstimate {
        position,
        deformed_radius,
        used_points: k,
    })
}

/// Uniform stride subsampling to at most `limit` points.
pub fn truncate_for_control(cloud: &TactileCloud, limit: usize) -> TactileCloud {
    let stride = control_stride(cloud.points.len(), limit);
    TactileCloud {
        points: cloud.points.iter().step_by(stride).copied().collect(),
        capture_mode: CaptureMode::ControlTruncated,
        sensor: cloud.sensor,
        fingertip_radius: cloud.fingertip_radius,
    }
}

pub fn control_stride(n: usize, limit: usize) -> usize {
    let limit = limit.max(1);
    n.div_ceil(limit).max(1)
}

/// Side length of the square tactile image.
pub const SENSOR_RESOLUTION: usize = 640;

/// Direction of the hemisphere ray seen by pixel (row, col) in the fingertip
/// frame (pole = +z), or `None` outside the inscribed disk. The image is an
/// orthographic view of the hemisphere from above its pole.
pub fn pixel_direction(row: usize, col: usize) -> Option<Vector3<f64>> {
    let half = SENSOR_RESOLUTION as f64 / 2.0;
    let u = (col as f64 + 0.5) / half - 1.0;
    let v = (row as f64 + 0.5) / half - 1.0;
    let s = u * u + v * v;
    (s < 1.0).then(|| Vector3::new(u, v, (1.0 - s).sqrt()))
}

/// Pixel coordinates (fractional, row and col) onto which a fingertip-frame
/// direction projects.
pub fn direction_to_pixel(dir: &Vector3<f64>) -> (f64, f64) {
    let half = SENSOR_RESOLUTION as f64 / 2.0;
    let d = dir.normalize();
    ((d.y + 1.0) * half - 0.5, (d.x + 1.0) * half - 0.5)
}

/// Row-major indices of every pixel inside the sensor disk.
pub fn disk_pixels() -> &'static [u32] {
    static PIXELS: std::sync::OnceLock<Vec<u32>> = std::sync::OnceLock::new();
    PIXELS.get_or_init(|| {
        let n = SENSOR_RESOLUTION;
        (0..n * n)
            .filter(|&k| pixel_direction(k / n, k % n).is_some())
            .map(|k| k as u32)
            .collect()
    })
}

/// Pixels rendered in control mode: the disk pixels at uniform stride, so
/// that the result equals `truncate_for_control` of the full cloud.
pub fn control_pixels() -> &'static [u32] {
    static PIXELS: std::sync::OnceLock<Vec<u32>> = std::sync::OnceLock::new();
    PIXELS.get_or_init(|| {
        let all = disk_pixels();
        let stride = control_stride(all.len(), CONTROL_POINT_LIMIT);
        all.iter().step_by(stride).copied().collect()
    })
}

/// Cloud from a row-major deformation image (mm), restricted to `pixels`.
pub fn cloud_from_deformation(
    deformation: &[f32],
    pixels: &[u32],
    fingertip_radius: f64,
    sensor: Side,
) -> TactileCloud {
    let n = SENSOR_RESOLUTION;
    let points = pixels
        .iter()
        .map(|&k| {
            let k = k as usize;
            let dir = pixel_direction(k / n, k % n).expect("pixel inside sensor disk");
            let r = fingertip_radius - f64::from(deformation[k]);
            TactilePoint::along(&dir, r, fingertip_radius, Some(k as u32))
        })
        .collect();
    TactileCloud::new(points, sensor, fingertip_radius)
}

/// Result of running threshold, augmentation, DBSCAN and selection.
#[derive(Clone, Debug)]
pub struct Segmentation {
    pub candidates: Vec<CandidatePoint>,
    pub labels: Vec<DbscanLabel>,
    pub clusters: Vec<Cluster>,
    /// Cloud index of every non-augmented candidate.
    cloud_index: Vec<usize>,
}

impl Segmentation {
    pub fn cluster_points(&self, rank: usize) -> Vec<TactilePoint> {
        self.clusters
            .get(rank)
            .map(|c| c.members.iter().map(|&i| self.candidates[i].point).collect())
            .unwrap_or_default()
    }

    pub fn primary(&self) -> Vec<TactilePoint> {
        self.cluster_points(0)
    }

    /// Copy of `cloud` with every point labeled: `Cluster(k)` for members of
    /// the k-th selected cluster (1-based), `Noise` for other deformed points.
    pub fn label_cloud(&self, cloud: &TactileCloud) -> TactileCloud {
        let mut out = cloud.clone();
        for p in &mut out.points {
            p.label = PointLabel::Undeformed;
        }
        for (ci, &src) in self.cloud_index.iter().enumerate() {
            if !self.candidates[ci].augmented {
                out.points[src].label = PointLabel::Noise;
            }
        }
        for (rank, c) in self.clusters.iter().enumerate() {
            for &m in &c.members {
                out.points[self.cloud_index[m]].label = PointLabel::Cluster(rank as u8 + 1);
            }
        }
        out
    }
}

/// Full segmentation of one frame. Fails with `NoContact` when nothing
/// survives.
pub fn segment(cloud: &TactileCloud, params: &DbscanParams, rng: &mut impl Rng) -> Result<Segmentation> {
    segment_with_threshold(cloud, params, params.deform_threshold, rng)
}

pub(crate) fn segment_with_threshold(
    cloud: &TactileCloud,
    params: &DbscanParams,
    threshold: f64,
    rng: &mut impl Rng,
) -> Result<Segmentation> {
    params.validate()?;
    let (def, undef) = partition_indices(cloud, threshold);
    if def.is_empty() {
        return Err(Error::NoContact);
    }
    let k = augment_count(undef.len(), params.augment_fraction);
    let mut cloud_index = def.clone();
    cloud_index.extend(sample_indices(rng, undef.len(), k).into_iter().map(|i| undef[i]));
    let candidates: Vec<CandidatePoint> = cloud_index
        .iter()
        .enumerate()
        .map(|(ci, &src)| CandidatePoint {
            point: cloud.points[src],
            augmented: ci >= def.len(),
        })
        .collect();
    let positions: Vec<Vector3<f64>> = candidates.iter().map(|c| c.point.position).collect();
    let labels = dbscan(&positions, params);
    let clusters = select_clusters(&labels, &candidates)?;
    Ok(Segmentation {
        candidates,
        labels,
        clusters,
        cloud_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const R: f64 = 15.5;

    fn hemisphere_cloud(n_side: usize) -> TactileCloud {
        let mut pts = Vec::new();
        for i in 0..n_side {
            for j in 0..n_side {
                let u = (j as f64 + 0.5) / n_side as f64 * 2.0 - 1.0;
                let v = (i as f64 + 0.5) / n_side as f64 * 2.0 - 1.0;
                if u * u + v * v <= 1.0 {
                    let d = Vector3::new(u, v, (1.0 - u * u - v * v).sqrt());
                    pts.push(TactilePoint::along(&d, R, R, Some((i * n_side + j) as u32)));
                }
            }
        }
        TactileCloud::new(pts, Side::Right, R)
    }

    /// Press a sphere of radius `rho` along the pole so that the deepest
    /// point is `depth` mm below the undeformed surface.
    fn press_sphere(cloud: &mut TactileCloud, rho: f64, depth: f64, dir: Vector3<f64>) {
        let c = dir.normalize() * (R - depth + rho);
        for p in &mut cloud.points {
            let d = p.position.normalize();
            let b = d.dot(&c);
            let disc = b * b - (c.norm_squared() - rho * rho);
            if disc >= 0.0 {
                let t = (b - disc.sqrt()).max(0.0);
                if t < R {
                    *p = TactilePoint::along(&d, t, R, p.pixel);
                }
            }
        }
    }

    #[test]
    fn undeformed_sensor_has_no_deformed_points() {
        let cloud = hemisphere_cloud(60);
        let (d, u) = threshold_deformed(&cloud, &DbscanParams::default());
        assert!(d.is_empty());
        assert_eq!(u.len(), cloud.len());
    }

    #[test]
    fn threshold_is_strict() {
        let mut cloud = hemisphere_cloud(10);
        cloud.points[0] = TactilePoint::along(&Vector3::z(), R - 3.0, R, None);
        let (d, _) = threshold_deformed(&cloud, &DbscanParams::default());
        assert!(d.is_empty());
        cloud.points[0] = TactilePoint::along(&Vector3::z(), R - 3.0 - 1e-9, R, None);
        let (d, _) = threshold_deformed(&cloud, &DbscanParams::default());
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn sphere_indentation_matches_cap() {
        // Closed form: a ray at angle a from the press axis is deformed by
        // more than 3 mm iff the near intersection with the indenting sphere
        // lies inside radius R - 3.
        let mut cloud = hemisphere_cloud(120);
        let rho = 6.0;
        let depth = 5.0;
        press_sphere(&mut cloud, rho, depth, Vector3::z());
        let (d, _) = threshold_deformed(&cloud, &DbscanParams::default());
        let dc = R - depth + rho;
        let expected: Vec<u32> = hemisphere_cloud(120)
            .points
            .iter()
            .filter(|p| {
                let cos_a = p.position.normalize().z;
                let sin2 = 1.0 - cos_a * cos_a;
                let disc = rho * rho - dc * dc * sin2;
                disc >= 0.0 && dc * cos_a - disc.sqrt() < R - 3.0
            })
            .map(|p| p.pixel.unwrap())
            .collect();
        let got: Vec<u32> = d.iter().map(|p| p.pixel.unwrap()).collect();
        assert_eq!(got, expected);
        assert!(!got.is_empty());
    }

    #[test]
    fn augmentation_counts_and_determinism() {
        let params = DbscanParams::default();
        let undef: Vec<TactilePoint> = hemisphere_cloud(12).points.into_iter().take(100).collect();
        assert_eq!(undef.len(), 100);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = augment_for_clustering(&[], &undef, &params, &mut rng);
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|c| c.augmented));
        let again = augment_for_clustering(&[], &undef, &params, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(out, again);

        let def = vec![TactilePoint::along(&Vector3::z(), 10.0, R, None)];
        let out = augment_for_clustering(&def, &[], &params, &mut rng);
        assert_eq!(out.len(), 1);
        assert!(!out[0].augmented);
    }

    fn blob(center: Vector3<f64>, n: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                center
                    + Vector3::new(
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                    )
            })
            .collect()
    }

    #[test]
    fn dense_blob_is_one_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = blob(Vector3::zeros(), 30, 0.4, &mut rng);
        let labels = dbscan(&pts, &DbscanParams::default());
        assert!(labels.iter().all(|l| *l == DbscanLabel::Cluster(0)));
    }

    #[test]
    fn separated_blobs_are_two_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = blob(Vector3::zeros(), 20, 0.4, &mut rng);
        pts.extend(blob(Vector3::new(5.0, 0.0, 0.0), 20, 0.4, &mut rng));
        let labels = dbscan(&pts, &DbscanParams::default());
        assert!(labels[..20].iter().all(|l| *l == DbscanLabel::Cluster(0)));
        assert!(labels[20..].iter().all(|l| *l == DbscanLabel::Cluster(1)));
    }

    fn cand(n: usize, augmented: bool) -> Vec<CandidatePoint> {
        (0..n)
            .map(|_| CandidatePoint {
                point: TactilePoint::along(&Vector3::z(), 10.0, R, None),
                augmented,
            })
            .collect()
    }

    #[test]
    fn selection_orders_and_truncates() {
        let sizes = [10usize, 120, 80, 30, 50];
        let mut labels = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            labels.extend(std::iter::repeat_n(DbscanLabel::Cluster(c), s));
        }
        let cands = cand(labels.len(), false);
        let sel = select_clusters(&labels, &cands).unwrap();
        let got: Vec<usize> = sel.iter().map(|c| c.members.len()).collect();
        assert_eq!(got, vec![120, 80, 50, 30]);
    }

    #[test]
    fn selection_tie_breaks_on_label_and_skips_augmented() {
        let labels = vec![
            DbscanLabel::Cluster(1),
            DbscanLabel::Cluster(1),
            DbscanLabel::Cluster(0),
            DbscanLabel::Cluster(0),
            DbscanLabel::Cluster(2),
            DbscanLabel::Noise,
        ];
        let mut cands = cand(6, false);
        cands[4].augmented = true;
        let sel = select_clusters(&labels, &cands).unwrap();
        assert_eq!(sel.len(), 2);
        assert_eq!(sel[0].source_label, 0);
        assert_eq!(sel[1].source_label, 1);

        let only_noise = vec![DbscanLabel::Noise; 3];
        assert!(matches!(
            select_clusters(&only_noise, &cand(3, false)),
            Err(Error::NoContact)
        ));
    }

    #[test]
    fn contact_estimate_uses_largest_radii() {
        let pts: Vec<TactilePoint> = (0..10)
            .map(|i| {
                let dir = Vector3::new(0.1 * i as f64, 0.0, 1.0).normalize();
                TactilePoint::along(&dir, 5.0 + i as f64, R, None)
            })
            .collect();
        let est = object_contact_estimate(&pts, 0.3).unwrap();
        assert_eq!(est.used_points, 3);
        let expect = (pts[7].position + pts[8].position + pts[9].position) / 3.0;
        assert!((est.position - expect).norm() < 1e-12);
        assert!((est.deformed_radius - 13.0).abs() < 1e-12);

        let same = vec![pts[0]; 6];
        let est = object_contact_estimate(&same, 0.3).unwrap();
        assert!((est.position - pts[0].position).norm() < 1e-12);

        assert!(matches!(
            object_contact_estimate(&pts[..3], 0.3),
            Err(Error::DegenerateCluster { points: 3, .. })
        ));
    }

    #[test]
    fn off_centre_contact_estimate_sits_on_rim() {
        let mut cloud = hemisphere_cloud(160);
        press_sphere(&mut cloud, 5.0, 6.0, Vector3::new(0.3, 0.0, 1.0));
        let params = DbscanParams::default();
        let (def, _) = threshold_deformed(&cloud, &params);
        let est = object_contact_estimate(&def, 0.3).unwrap();
        // Brute force: sort every point by radius.
        let mut sorted = def.clone();
        sorted.sort_by(|a, b| b.r.total_cmp(&a.r));
        let k = (0.3 * def.len() as f64).floor() as usize;
        let brute: Vector3<f64> = sorted[..k].iter().map(|p| p.position).sum::<Vector3<f64>>() / k as f64;
        assert!((brute - est.position).norm() < 1e-9);
        let centroid: Vector3<f64> = def.iter().map(|p| p.position).sum::<Vector3<f64>>() / def.len() as f64;
        // Rim points are farther from the fingertip origin than the centroid.
        assert!(est.position.norm() > centroid.norm());
        assert!(est.deformed_radius > def.iter().map(|p| p.r).sum::<f64>() / def.len() as f64);
    }

    #[test]
    fn truncation_stride() {
        let pts: Vec<TactilePoint> = (0..10000)
            .map(|i| TactilePoint::along(&Vector3::z(), R, R, Some(i)))
            .collect();
        let cloud = TactileCloud::new(pts, Side::Right, R);
        let t = truncate_for_control(&cloud, 5000);
        assert_eq!(t.len(), 5000);
        assert_eq!(t.capture_mode, CaptureMode::ControlTruncated);
        assert!(t.points.iter().enumerate().all(|(k, p)| p.pixel == Some(2 * k as u32)));
        let small = TactileCloud::new(cloud.points[..4000].to_vec(), Side::Right, R);
        assert_eq!(truncate_for_control(&small, 5000).points, small.points);
        assert!(t.validate().is_ok());
    }

    #[test]
    fn truncated_contact_estimate_close_to_full() {
        let params = DbscanParams::default();
        for (k, dir) in [Vector3::z(), Vector3::new(0.2, -0.1, 1.0), Vector3::new(-0.3, 0.25, 1.0)]
            .into_iter()
            .enumerate()
        {
            let mut cloud = hemisphere_cloud(400);
            press_sphere(&mut cloud, 4.0 + k as f64, 6.0, dir);
            let full_def = threshold_deformed(&cloud, &params).0;
            let full = object_contact_estimate(&full_def, 0.3).unwrap();
            let small = truncate_for_control(&cloud, 5000);
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            let seg = segment(&small, &params, &mut rng).unwrap();
            let est = object_contact_estimate(&seg.primary(), 0.3).unwrap();
            assert!((est.position - full.position).norm() < 0.5, "case {k}");
        }
    }

    #[test]
    fn segment_labels_cloud() {
        let mut cloud = hemisphere_cloud(100);
        press_sphere(&mut cloud, 3.0, 5.0, Vector3::new(0.35, 0.0, 1.0));
        press_sphere(&mut cloud, 3.0, 5.0, Vector3::new(-0.35, 0.0, 1.0));
        let small = truncate_for_control(&cloud, 5000);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seg = segment(&small, &DbscanParams::default(), &mut rng).unwrap();
        assert_eq!(seg.clusters.len(), 2);
        let labeled = seg.label_cloud(&small);
        labeled.validate().unwrap();
        let n1 = labeled.points.iter().filter(|p| p.label == PointLabel::Cluster(1)).count();
        let n2 = labeled.points.iter().filter(|p| p.label == PointLabel::Cluster(2)).count();
        assert_eq!(n1, seg.clusters[0].members.len());
        assert_eq!(n2, seg.clusters[1].members.len());
        assert!(n1 >= n2 && n2 > 0);
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_and_exhaustive(rs in proptest::collection::vec(0.0f64..15.5, 0..200)) {
            let pts: Vec<TactilePoint> = rs.iter().enumerate()
                .map(|(i, &r)| TactilePoint::along(&Vector3::z(), r, R, Some(i as u32)))
                .collect();
            let cloud = TactileCloud::new(pts, Side::Right, R);
            let (d, u) = threshold_deformed(&cloud, &DbscanParams::default());
            prop_assert_eq!(d.len() + u.len(), cloud.len());
            let mut ids: Vec<u32> = d.iter().chain(u.iter()).map(|p| p.pixel.unwrap()).collect();
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), cloud.len());
        }

        #[test]
        fn core_clusters_invariant_under_permutation(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(10..120);
            let pts: Vec<Vector3<f64>> = (0..n)
                .map(|_| Vector3::new(rng.random_range(0.0..8.0), rng.random_range(0.0..8.0), rng.random_range(0.0..2.0)))
                .collect();
            let params = DbscanParams { eps: 1.2, min_pts: 4, ..Default::default() };
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let shuffled: Vec<Vector3<f64>> = perm.iter().map(|&i| pts[i]).collect();
            let a = dbscan(&pts, &params);
            let b = dbscan(&shuffled, &params);
            // Core points and noise are order independent; compare core
            // co-membership and noise sets.
            let eps2 = params.eps * params.eps;
            let is_core = |p: &Vector3<f64>| pts.iter().filter(|q| (*q - p).norm_squared() <= eps2).count() >= params.min_pts;
            let mut inv = vec![0; n];
            for (k, &i) in perm.iter().enumerate() { inv[i] = k; }
            for i in 0..n {
                prop_assert_eq!(a[i] == DbscanLabel::Noise, b[inv[i]] == DbscanLabel::Noise);
                for j in 0..n {
                    if is_core(&pts[i]) && is_core(&pts[j]) {
                        prop_assert_eq!(a[i] == a[j], b[inv[i]] == b[inv[j]]);
                    }
                }
            }
        }

        #[test]
        fn at_most_four_clusters(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts = Vec::new();
            for b in 0..rng.random_range(1..8) {
                pts.extend(blob(Vector3::new(6.0 * b as f64, 0.0, 0.0), rng.random_range(8..30), 0.4, &mut rng));
            }
            let labels = dbscan(&pts, &DbscanParams::default());
            let cands: Vec<CandidatePoint> = pts.iter().map(|p| CandidatePoint {
                point: TactilePoint::from_position(*p, R), augmented: false }).collect();
            let sel = select_clusters(&labels, &cands).unwrap();
            prop_assert!(sel.len() <= MAX_CLUSTERS);
        }

        #[test]
        fn contact_estimate_inside_bounding_box(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(4..60);
            let pts: Vec<TactilePoint> = (0..n)
                .map(|_| {
                    let d = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 1.0).normalize();
                    TactilePoint::along(&d, rng.random_range(4.0..12.0), R, None)
                })
                .collect();
            let est = object_contact_estimate(&pts, 0.3).unwrap();
            // The estimate is a convex combination of cluster points.
            for axis in 0..3 {
                let lo = pts.iter().map(|p| p.position[axis]).fold(f64::INFINITY, f64::min);
                let hi = pts.iter().map(|p| p.position[axis]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(est.position[axis] >= lo - 1e-9 && est.position[axis] <= hi + 1e-9);
            }
        }
    }
}
