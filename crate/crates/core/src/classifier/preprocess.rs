//! PCA pose normalisation and sample extraction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::frame::TactileFrame;
use crate::error::{Error, Result};

pub const SAMPLE_SIZE: usize = 300;
pub const SAMPLE_CHANNELS: usize = 5;
/// Eigenvalue ratio below which the principal axis is considered undefined.
pub const ISOTROPY_RATIO: f64 = 1.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaPose {
    /// Pixel coordinates (x = column, y = row).
    pub center: [f64; 2],
    /// Principal axis angle in [0, pi), measured from +x toward +y.
    pub angle: f64,
    pub isotropic: bool,
}

/// Weighted centroid and principal axis of `(x, y, weight)` pixels.
pub fn pca_pose(pixels: &[(f64, f64, f64)]) -> Result<PcaPose> {
    let mut weighted = pixels.iter().filter(|p| p.2 > 0.0);
    let distinct = weighted
        .next()
        .is_some_and(|first| weighted.any(|q| q.0 != first.0 || q.1 != first.1));
    if !distinct {
        return Err(Error::DegenerateCluster {
            points: pixels.len(),
            required: 2,
        });
    }
    let w: f64 = pixels.iter().map(|p| p.2).sum();
    let cx = pixels.iter().map(|p| p.2 * p.0).sum::<f64>() / w;
    let cy = pixels.iter().map(|p| p.2 * p.1).sum::<f64>() / w;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y, wt) in pixels {
        let (dx, dy) = (x - cx, y - cy);
        sxx += wt * dx * dx;
        sxy += wt * dx * dy;
        syy += wt * dy * dy;
    }
    let (sxx, sxy, syy) = (sxx / w, sxy / w, syy / w);
    let half_trace = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let (l1, l2) = (half_trace + disc, half_trace - disc);
    let isotropic = l1 < ISOTROPY_RATIO * l2;
    let angle = if isotropic {
        0.0
    } else {
        let a = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        a.rem_euclid(PI)
    };
    Ok(PcaPose {
        center: [cx, cy],
        angle: if angle >= PI { 0.0 } else { angle },
        isotropic,
    })
}

/// Bilinear sample of channel `ch` of an interleaved `n x n x channels`
/// image at fractional (row, col); zero outside.
pub fn bilinear(data: &[f32], n: usize, channels: usize, ch: usize, row: f64, col: f64) -> f32 {
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = (row - r0) as f32;
    let fc = (col - c0) as f32;
    let get = |r: f64, c: f64| -> f32 {
        if r < 0.0 || c < 0.0 || r >= n as f64 || c >= n as f64 {
            0.0
        } else {
            data[(r as usize * n + c as usize) * channels + ch]
        }
    };
    let top = get(r0, c0) * (1.0 - fc) + get(r0, c0 + 1.0) * fc;
    let bottom = get(r0 + 1.0, c0) * (1.0 - fc) + get(r0 + 1.0, c0 + 1.0) * fc;
    top * (1.0 - fr) + bottom * fr
}

pub fn nearest(data: &[u8], n: usize, row: f64, col: f64) -> u8 {
    let (r, c) = (row.round(), col.round());
    if r < 0.0 || c < 0.0 || r >= n as f64 || c >= n as f64 {
        0
    } else {
        data[r as usize * n + c as usize]
    }
}

/// Planar `channels x size x size` tensor: R, G, B, deformation / radius,
/// own-cluster mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleTensor {
    pub size: usize,
    pub data: Vec<f32>,
}

impl SampleTensor {
    /// Logical shape (height, width, channels).
    pub fn shape(&self) -> [usize; 3] {
        [self.size, self.size, self.data.len() / (self.size * self.size).max(1)]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Window of `out_size` pixels about `center`, rotated so that the axis at
/// `angle` lands on the output x axis. `mask_label` selects which label
/// becomes the mask channel; 0 keeps the raw label plane.
pub fn crop_rotate(frame: &TactileFrame, center: [f64; 2], angle: f64, out_size: usize, mask_label: u8) -> SampleTensor {
    let n = frame.size;
    let plane = out_size * out_size;
    let mut data = vec![0f32; SAMPLE_CHANNELS * plane];
    let (s, c) = angle.sin_cos();
    let half = (out_size as f64 - 1.0) / 2.0;
    let inv_r = (1.0 / frame.fingertip_radius) as f32;
    for i in 0..out_size {
        for j in 0..out_size {
            let (u, v) = (j as f64 - half, i as f64 - half);
            let x = center[0] + c * u - s * v;
            let y = center[1] + s * u + c * v;
            let k = i * out_size + j;
            for ch in 0..3 {
                data[ch * plane + k] = bilinear(&frame.rgb, n, 3, ch, y, x);
            }
            data[3 * plane + k] = bilinear(&frame.depth, n, 1, 0, y, x) * inv_r;
            let l = nearest(&frame.labels, n, y, x);
            data[4 * plane + k] = if mask_label == 0 {
                f32::from(l)
            } else {
                f32::from(u8::from(l == mask_label))
            };
        }
    }
    SampleTensor {
        size: out_size,
        data,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedSample {
    pub tensor: SampleTensor,
    pub label: u8,
    pub pose: PcaPose,
    pub pixels: usize,
}

/// One sample per labelled cluster, largest first.
pub fn extract_samples(frame: &TactileFrame) -> Vec<ExtractedSample> {
    let n = frame.size;
    frame
        .label_sizes()
        .into_iter()
        .filter_map(|(label, count)| {
            let pixels: Vec<(f64, f64, f64)> = frame
                .labels
                .iter()
                .enumerate()
                .filter(|(_, l)| **l == label)
                .map(|(k, _)| ((k % n) as f64, (k / n) as f64, f64::from(frame.depth[k]).max(1e-6)))
                .collect();
            let pose = pca_pose(&pixels).ok()?;
            Some(ExtractedSample {
                tensor: crop_rotate(frame, pose.center, pose.angle, SAMPLE_SIZE, label),
                label,
                pose,
                pixels: count,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ellipse(cx: f64, cy: f64, a: f64, b: f64, phi: f64) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        let (s, c) = phi.sin_cos();
        for y in 0..200 {
            for x in 0..200 {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                    out.push((x as f64, y as f64, 1.0));
                }
            }
        }
        out
    }

    #[test]
    fn axis_aligned_ellipse() {
        let p = pca_pose(&ellipse(100.0, 80.0, 40.0, 15.0, 0.0)).unwrap();
        assert!(p.angle.abs() < 1e-9 || (p.angle - PI).abs() < 1e-9);
        assert!((p.center[0] - 100.0).abs() < 1e-9 && (p.center[1] - 80.0).abs() < 1e-9);
        assert!(!p.isotropic);
    }

    #[test]
    fn rotated_ellipse() {
        let p = pca_pose(&ellipse(100.0, 100.0, 40.0, 15.0, 30f64.to_radians())).unwrap();
        assert!((p.angle.to_degrees() - 30.0).abs() < 0.5, "{}", p.angle.to_degrees());
    }

    #[test]
    fn disk_is_isotropic_and_degenerate_input_errors() {
        let p = pca_pose(&ellipse(100.0, 100.0, 30.0, 30.0, 0.0)).unwrap();
        assert!(p.isotropic && p.angle == 0.0);
        assert!(matches!(pca_pose(&[(1.0, 1.0, 1.0), (1.0, 1.0, 2.0)]), Err(Error::DegenerateCluster { .. })));
    }

    fn frame_with(f: impl Fn(usize, usize) -> (f32, u8)) -> TactileFrame {
        let n = 64;
        let mut fr = TactileFrame::blank(n, 15.5);
        for i in 0..n {
            for j in 0..n {
                let (d, l) = f(i, j);
                let k = i * n + j;
                fr.depth[k] = d;
                fr.labels[k] = l;
                fr.rgb[3 * k] = d / 10.0;
            }
        }
        fr
    }

    #[test]
    fn angle_zero_is_plain_crop() {
        let fr = frame_with(|i, j| ((i * 64 + j) as f32 * 0.001, (j % 3) as u8));
        let t = crop_rotate(&fr, [31.5, 31.5], 0.0, 20, 0);
        for i in 0..20 {
            for j in 0..20 {
                let src = (i + 22) * 64 + (j + 22);
                let k = i * 20 + j;
                assert!((t.channel(3)[k] - fr.depth[src] / 15.5).abs() < 1e-6);
                assert_eq!(t.channel(4)[k], f32::from(fr.labels[src]));
            }
        }
    }

    #[test]
    fn label_values_come_from_source() {
        let fr = frame_with(|i, j| (0.0, if (i / 5 + j / 7) % 2 == 0 { 2 } else { 4 }));
        let t = crop_rotate(&fr, [30.0, 33.0], 0.7, 40, 0);
        assert!(t.channel(4).iter().all(|v| [0.0, 2.0, 4.0].contains(v)));
    }

    #[test]
    fn extract_orders_by_size() {
        let fr = frame_with(|i, j| {
            if (10..20).contains(&i) && (5..30).contains(&j) {
                (5.0, 2)
            } else if (40..45).contains(&i) && (40..50).contains(&j) {
                (5.0, 1)
            } else {
                (0.0, 0)
            }
        });
        let s = extract_samples(&fr);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].label, 2);
        assert_eq!(s[1].label, 1);
        assert_eq!(s[0].tensor.shape(), [SAMPLE_SIZE, SAMPLE_SIZE, SAMPLE_CHANNELS]);
        assert!(extract_samples(&frame_with(|_, _| (0.0, 0))).is_empty());
    }

    /// 2x2 symmetric eigenproblem by the characteristic polynomial.
    fn oracle_angle(pixels: &[(f64, f64, f64)]) -> f64 {
        let w: f64 = pixels.iter().map(|p| p.2).sum();
        let mx = pixels.iter().map(|p| p.0 * p.2).sum::<f64>() / w;
        let my = pixels.iter().map(|p| p.1 * p.2).sum::<f64>() / w;
        let m = nalgebra::Matrix2::from_fn(|r, c| {
            pixels
                .iter()
                .map(|p| {
                    let d = [p.0 - mx, p.1 - my];
                    p.2 * d[r] * d[c]
                })
                .sum::<f64>()
                / w
        });
        let eig = m.symmetric_eigen();
        let k = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
        let v = eig.eigenvectors.column(k);
        v[1].atan2(v[0]).rem_euclid(PI)
    }

    proptest! {
        #[test]
        fn matches_eigen_oracle(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(3..60);
            let px: Vec<(f64, f64, f64)> = (0..n)
                .map(|_| (rng.random_range(0..300) as f64, rng.random_range(0..300) as f64, rng.random_range(0.1..5.0)))
                .collect();
            let p = pca_pose(&px).unwrap();
            prop_assume!(!p.isotropic);
            let o = oracle_angle(&px);
            let diff = (p.angle - o).abs();
            prop_assert!(diff.min(PI - diff) < 1e-6, "{} vs {}", p.angle, o);
        }

        #[test]
        fn rotation_equivariance(phi in 0.0f64..PI) {
            let base = ellipse(100.0, 100.0, 50.0, 12.0, 0.2);
            let rot = ellipse(100.0, 100.0, 50.0, 12.0, 0.2 + phi);
            let a = pca_pose(&base).unwrap().angle;
            let b = pca_pose(&rot).unwrap().angle;
            let d = (b - a - phi).rem_euclid(PI);
            prop_assert!(d.min(PI - d) < 0.02);
        }
    }
}
