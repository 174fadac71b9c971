//! Pooled feature map for the reference classifier.
//!
//! For each of the five channels: mean and variance over a 1x1, 2x2 and 4x4
//! grid of the sample (21 cells, 210 values). Then a 16-bin histogram of
//! normalised deformation inside the sample's own mask, as fractions of the
//! mask area.

use super::preprocess::{SampleTensor, SAMPLE_CHANNELS};

pub const PYRAMID_LEVELS: [usize; 3] = [1, 2, 4];
pub const HISTOGRAM_BINS: usize = 16;
/// Normalised deformation covered by the histogram; values above land in
/// the last bin.
pub const HISTOGRAM_RANGE: f32 = 1.0;
pub const FEATURE_DIM: usize = SAMPLE_CHANNELS * 2 * (1 + 4 + 16) + HISTOGRAM_BINS;

pub fn features(t: &SampleTensor) -> Vec<f64> {
    let n = t.size;
    let mut out = Vec::with_capacity(FEATURE_DIM);
    for c in 0..SAMPLE_CHANNELS {
        let ch = t.channel(c);
        for &g in &PYRAMID_LEVELS {
            for gi in 0..g {
                for gj in 0..g {
                    let (r0, r1) = (gi * n / g, (gi + 1) * n / g);
                    let (c0, c1) = (gj * n / g, (gj + 1) * n / g);
                    let (mut s, mut s2) = (0.0f64, 0.0f64);
                    for i in r0..r1 {
                        for v in &ch[i * n + c0..i * n + c1] {
                            let v = f64::from(*v);
                            s += v;
                            s2 += v * v;
                        }
                    }
                    let cnt = ((r1 - r0) * (c1 - c0)).max(1) as f64;
                    let mean = s / cnt;
                    out.push(mean);
                    out.push((s2 / cnt - mean * mean).max(0.0));
                }
            }
        }
    }
    let depth = t.channel(3);
    let mask = t.channel(4);
    let mut hist = [0f64; HISTOGRAM_BINS];
    let mut total = 0.0;
    for (d, m) in depth.iter().zip(mask) {
        if *m > 0.5 {
            let b = ((d / HISTOGRAM_RANGE) * HISTOGRAM_BINS as f32).floor();
            let b = (b.max(0.0) as usize).min(HISTOGRAM_BINS - 1);
            hist[b] += 1.0;
            total += 1.0;
        }
    }
    out.extend(hist.iter().map(|h| if total > 0.0 { h / total } else { 0.0 }));
    out
}
