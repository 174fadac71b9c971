//! Full-resolution tactile frames.

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::perception::{
    disk_pixels, pixel_direction, PointLabel, Segmentation, TactileCloud, SENSOR_RESOLUTION,
};

pub const MAX_LABEL: u8 = 4;

/// Square tactile image. `depth` holds the gel deformation (mm) per pixel,
/// `rgb` three interleaved unit-interval channels, `labels` cluster ranks
/// (0 = background).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TactileFrame {
    pub size: usize,
    pub fingertip_radius: f64,
    pub rgb: Vec<f32>,
    pub depth: Vec<f32>,
    pub labels: Vec<u8>,
}

impl TactileFrame {
    pub fn blank(size: usize, fingertip_radius: f64) -> Self {
        Self {
            size,
            fingertip_radius,
            rgb: vec![0.0; 3 * size * size],
            depth: vec![0.0; size * size],
            labels: vec![0; size * size],
        }
    }

    /// Sensor-sized frame with RGB shaded from the deformation image.
    pub fn from_deformation(depth: Vec<f32>, fingertip_radius: f64) -> Self {
        let n = SENSOR_RESOLUTION;
        assert_eq!(depth.len(), n * n, "deformation image must be {n}x{n}");
        let rgb = shade(&depth, n, fingertip_radius);
        Self {
            size: n,
            fingertip_radius,
            rgb,
            depth,
            labels: vec![0; n * n],
        }
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.size * self.size;
        self.rgb.len() == 3 * n
            && self.depth.len() == n
            && self.labels.len() == n
            && self.labels.iter().all(|l| *l <= MAX_LABEL)
    }

    /// Pixels of each label, sizes descending (ties: lower label).
    pub fn label_sizes(&self) -> Vec<(u8, usize)> {
        let mut counts = [0usize; MAX_LABEL as usize + 1];
        for l in &self.labels {
            counts[*l as usize] += 1;
        }
        let mut out: Vec<(u8, usize)> = (1..=MAX_LABEL)
            .filter(|l| counts[*l as usize] > 0)
            .map(|l| (l, counts[l as usize]))
            .collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}

/// RGB proxy that depends only on deformation and its slope, so rotating
/// the contact rotates the image. R: deformation / 10 mm; G: slope / 2;
/// B: constant gel tint fading under contact. Zero outside the disk.
fn shade(depth: &[f32], n: usize, radius: f64) -> Vec<f32> {
    let px_mm = (2.0 * radius / n as f64) as f32;
    let mut inside = vec![false; n * n];
    for &k in disk_pixels() {
        inside[k as usize] = true;
    }
    let at = |i: isize, j: isize, fallback: f32| -> f32 {
        if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
            return fallback;
        }
        let k = i as usize * n + j as usize;
        if inside[k] {
            depth[k]
        } else {
            fallback
        }
    };
    let mut rgb = vec![0f32; 3 * n * n];
    for &k in disk_pixels() {
        let k = k as usize;
        let (i, j) = ((k / n) as isize, (k % n) as isize);
        let d = depth[k];
        let gx = (at(i, j + 1, d) - at(i, j - 1, d)) / (2.0 * px_mm);
        let gy = (at(i + 1, j, d) - at(i - 1, j, d)) / (2.0 * px_mm);
        let red = (d / 10.0).clamp(0.0, 1.0);
        rgb[3 * k] = red;
        rgb[3 * k + 1] = (0.5 * (gx * gx + gy * gy).sqrt()).clamp(0.0, 1.0);
        rgb[3 * k + 2] = 0.3 * (1.0 - red);
    }
    rgb
}

/// Give every deformed pixel the rank of the nearest clustered point of a
/// (control-resolution) segmentation within `eps`, so that the full frame
/// carries the same labels as the cloud the controller saw.
pub fn project_labels(frame: &mut TactileFrame, labeled: &TactileCloud, threshold: f64, eps: f64) {
    let n = frame.size;
    let radius = frame.fingertip_radius;
    let cell = eps;
    let key = |p: &Vector3<f64>| {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<(Vector3<f64>, u8)>> = HashMap::new();
    for p in &labeled.points {
        if let PointLabel::Cluster(c) = p.label {
            grid.entry(key(&p.position)).or_default().push((p.position, c));
        }
    }
    frame.labels.iter_mut().for_each(|l| *l = 0);
    if grid.is_empty() {
        return;
    }
    for &k in disk_pixels() {
        let k = k as usize;
        let d = f64::from(frame.depth[k]);
        if d <= threshold {
            continue;
        }
        let dir = pixel_direction(k / n, k % n).expect("disk pixel");
        let p = dir * (radius - d);
        let (kx, ky, kz) = key(&p);
        let mut best: Option<(f64, u8)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = grid.get(&(kx + dx, ky + dy, kz + dz)) else {
                        continue;
                    };
                    for (q, c) in bucket {
                        let d2 = (q - p).norm_squared();
                        if d2 > eps * eps {
                            continue;
                        }
                        // Nearest wins; equal distance goes to the lower rank.
                        if best.is_none_or(|(bd, bc)| d2 < bd || (d2 == bd && *c < bc)) {
                            best = Some((d2, *c));
                        }
                    }
                }
            }
        }
        frame.labels[k] = best.map_or(0, |b| b.1);
    }
}

/// Convenience wrapper using a segmentation of `cloud`.
pub fn label_frame(
    frame: &mut TactileFrame,
    cloud: &TactileCloud,
    seg: &Segmentation,
    threshold: f64,
    eps: f64,
) {
    let labeled = seg.label_cloud(cloud);
    project_labels(frame, &labeled, threshold, eps);
}

/// Rotate the image content by `angle` (rad, counter-clockwise in (col, row)
/// coordinates) about the image centre. Bilinear for RGB and depth, nearest
/// for labels, zero outside.
pub fn rotate_frame(frame: &TactileFrame, angle: f64) -> TactileFrame {
    let n = frame.size;
    let mut out = TactileFrame::blank(n, frame.fingertip_radius);
    let c = (n as f64 - 1.0) / 2.0;
    let (s, co) = angle.sin_cos();
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (j as f64 - c, i as f64 - c);
            // Inverse map: source = R(-angle) * dest.
            let sx = co * x + s * y + c;
            let sy = -s * x + co * y + c;
            let k = i * n + j;
            out.depth[k] = super::preprocess::bilinear(&frame.depth, n, 1, 0, sy, sx);
            for ch in 0..3 {
                out.rgb[3 * k + ch] = super::preprocess::bilinear(&frame.rgb, n, 3, ch, sy, sx);
            }
            out.labels[k] = super::preprocess::nearest(&frame.labels, n, sy, sx);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undeformed_frame_is_tinted_disk() {
        let n = SENSOR_RESOLUTION;
        let f = TactileFrame::from_deformation(vec![0.0; n * n], 15.5);
        assert!(f.is_consistent());
        let centre = (n / 2) * n + n / 2;
        assert_eq!(&f.rgb[3 * centre..3 * centre + 3], &[0.0, 0.0, 0.3]);
        assert_eq!(&f.rgb[0..3], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn label_sizes_sorted() {
        let mut f = TactileFrame::blank(4, 15.5);
        f.labels = vec![0, 1, 2, 2, 2, 3, 3, 3, 1, 0, 0, 0, 0, 0, 0, 4];
        assert_eq!(f.label_sizes(), vec![(2, 3), (3, 3), (1, 2), (4, 1)]);
    }
}
