//! Minimal raster plots: no fonts, just marks on a white canvas.

use std::io::Cursor;

use anyhow::Result;
use image::{ImageFormat, Rgb, RgbImage};
use tactsort::classifier::ConfusionMatrix;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GUIDE: Rgb<u8> = Rgb([160, 160, 160]);

fn encode(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, c);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Alignment angle against control step, one polyline per control phase,
/// with the convergence threshold as a grey guide.
pub fn theta_png(traces: &[Vec<f64>], threshold: f64) -> Result<Vec<u8>> {
    let (w, h, m) = (800i64, 480i64, 30i64);
    let mut img = RgbImage::from_pixel(w as u32, h as u32, WHITE);
    let steps = traces.iter().map(Vec::len).max().unwrap_or(1).max(2);
    let top = traces
        .iter()
        .flatten()
        .cloned()
        .fold(threshold * 2.0, f64::max);
    let px = |k: usize| m + (k as i64 * (w - 2 * m)) / (steps as i64 - 1);
    let py = |v: f64| h - m - ((v / top) * (h - 2 * m) as f64).round() as i64;
    line(&mut img, (m, h - m), (w - m, h - m), AXIS);
    line(&mut img, (m, m), (m, h - m), AXIS);
    line(&mut img, (m, py(threshold)), (w - m, py(threshold)), GUIDE);
    for (i, t) in traces.iter().enumerate() {
        // Spread hues so neighbouring traces differ.
        let hue = (i * 97 % 360) as f64;
        let c = Rgb([
            (127.0 + 100.0 * (hue.to_radians()).cos()) as u8,
            (127.0 + 100.0 * ((hue + 120.0).to_radians()).cos()) as u8,
            (127.0 + 100.0 * ((hue + 240.0).to_radians()).cos()) as u8,
        ]);
        for (k, pair) in t.windows(2).enumerate() {
            line(&mut img, (px(k), py(pair[0])), (px(k + 1), py(pair[1])), c);
        }
    }
    encode(&img)
}

/// Row-normalised confusion matrix over the active classes: darker cells
/// hold a larger share of the true class.
pub fn confusion_png(cm: &ConfusionMatrix) -> Result<Vec<u8>> {
    let classes = cm.active_classes();
    let cell = 24u32;
    let n = classes.len().max(1) as u32;
    let mut img = RgbImage::from_pixel(n * cell + 2, n * cell + 2, WHITE);
    for (r, &t) in classes.iter().enumerate() {
        let total = cm.row_sum(t).max(1) as f64;
        for (c, &p) in classes.iter().enumerate() {
            let share = cm.get(t, p) as f64 / total;
            let v = (255.0 * (1.0 - share)).round() as u8;
            let colour = if t == p { Rgb([v, v, 255]) } else { Rgb([255, v, v]) };
            for y in 0..cell - 1 {
                for x in 0..cell - 1 {
                    img.put_pixel(1 + c as u32 * cell + x, 1 + r as u32 * cell + y, colour);
                }
            }
        }
    }
    encode(&img)
}
