//! Primitive object geometry in the object's local frame.
//!
//! Every shape is symmetric about its local x axis and centred on the local
//! origin. Screws put the head on the negative x side.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SIZE: f64 = 5.0;
pub const MAX_SIZE: f64 = 25.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Sphere { r: f64 },
    /// Cylinder of length `len` with hemispherical caps of radius `r`.
    Capsule { r: f64, len: f64 },
    Screw {
        head_r: f64,
        head_h: f64,
        shaft_r: f64,
        shaft_len: f64,
    },
}

/// Axis-aligned cylinder about local x spanning `[x0, x1]`.
#[derive(Clone, Copy, Debug)]
struct Cylinder {
    x0: f64,
    x1: f64,
    r: f64,
}

impl Cylinder {
    fn ray(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let mut best = f64::INFINITY;
        // Lateral surface.
        let a = d.y * d.y + d.z * d.z;
        if a > 1e-15 {
            let b = o.y * d.y + o.z * d.z;
            let c = o.y * o.y + o.z * o.z - self.r * self.r;
            let disc = b * b - a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                for t in [(-b - sq) / a, (-b + sq) / a] {
                    let x = o.x + t * d.x;
                    if t >= 0.0 && x >= self.x0 && x <= self.x1 {
                        best = best.min(t);
                        break;
                    }
                }
            }
        }
        // End caps.
        if d.x.abs() > 1e-15 {
            for x in [self.x0, self.x1] {
                let t = (x - o.x) / d.x;
                if t >= 0.0 {
                    let y = o.y + t * d.y;
                    let z = o.z + t * d.z;
                    if y * y + z * z <= self.r * self.r {
                        best = best.min(t);
                    }
                }
            }
        }
        best.is_finite().then_some(best)
    }

    fn sdf(&self, p: &Vector3<f64>) -> f64 {
        let mid = 0.5 * (self.x0 + self.x1);
        let half = 0.5 * (self.x1 - self.x0);
        let dx = (p.x - mid).abs() - half;
        let dr = (p.y * p.y + p.z * p.z).sqrt() - self.r;
        let outside = (dx.max(0.0).powi(2) + dr.max(0.0).powi(2)).sqrt();
        outside + dx.max(dr).min(0.0)
    }

    fn half_thickness(&self, x: f64, y: f64) -> Option<f64> {
        (x >= self.x0 && x <= self.x1 && y.abs() <= self.r).then(|| (self.r * self.r - y * y).sqrt())
    }
}

fn ray_sphere(o: &Vector3<f64>, d: &Vector3<f64>, c: &Vector3<f64>, r: f64) -> Option<f64> {
    let oc = o - c;
    let a = d.norm_squared();
    let b = oc.dot(d);
    let disc = b * b - a * (oc.norm_squared() - r * r);
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    [(-b - sq) / a, (-b + sq) / a].into_iter().find(|t| *t >= 0.0)
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let ok = match *self {
            Shape::Sphere { r } => positive(r),
            Shape::Capsule { r, len } => positive(r) && positive(len),
            Shape::Screw {
                head_r,
                head_h,
                shaft_r,
                shaft_len,
            } => positive(head_r) && positive(head_h) && positive(shaft_r) && positive(shaft_len),
        };
        if !ok {
            return Err(Error::InvalidParameter(format!("{self:?}: dimensions must be positive")));
        }
        let size = self.size();
        if !(MIN_SIZE - 1e-9..=MAX_SIZE + 1e-9).contains(&size) {
            return Err(Error::InvalidParameter(format!(
                "{self:?}: size {size:.2} mm outside [{MIN_SIZE}, {MAX_SIZE}]"
            )));
        }
        Ok(())
    }

    /// Largest extent, mm.
    pub fn size(&self) -> f64 {
        match *self {
            Shape::Sphere { r } => 2.0 * r,
            Shape::Capsule { r, len } => len + 2.0 * r,
            Shape::Screw {
                head_r,
                head_h,
                shaft_len,
                ..
            } => (head_h + shaft_len).max(2.0 * head_r),
        }
    }

    /// Radius of a sphere about the origin enclosing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Sphere { r } => r,
            Shape::Capsule { r, len } => 0.5 * len + r,
            Shape::Screw {
                head_r,
                head_h,
                shaft_len,
                ..
            } => (0.25 * (head_h + shaft_len).powi(2) + head_r * head_r).sqrt(),
        }
    }

    /// Height of the local x axis above the support when lying on its side.
    pub fn rest_height(&self) -> f64 {
        match *self {
            Shape::Sphere { r } | Shape::Capsule { r, .. } => r,
            Shape::Screw { head_r, .. } => head_r,
        }
    }

    fn cylinders(&self) -> [Cylinder; 2] {
        match *self {
            Shape::Screw {
                head_r,
                head_h,
                shaft_r,
                shaft_len,
            } => {
                let x0 = -0.5 * (head_h + shaft_len);
                [
                    Cylinder {
                        x0,
                        x1: x0 + head_h,
                        r: head_r,
                    },
                    Cylinder {
                        x0: x0 + head_h,
                        x1: -x0,
                        r: shaft_r,
                    },
                ]
            }
            _ => unreachable!("only screws are built from cylinders"),
        }
    }

    /// Smallest `t >= 0` with `o + t d` on the surface, local frame. Zero when
    /// `o` is inside.
    pub fn ray_hit(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        if self.sdf(o) <= 0.0 {
            return Some(0.0);
        }
        match *self {
            Shape::Sphere { r } => ray_sphere(o, d, &Vector3::zeros(), r),
            Shape::Capsule { r, len } => {
                let h = 0.5 * len;
                let body = Cylinder { x0: -h, x1: h, r };
                // Cylinder caps are inside the hemispheres, so the lateral
                // hit and the two sphere hits cover the capsule surface.
                let mut best = body.ray(o, d).unwrap_or(f64::INFINITY);
                for c in [Vector3::new(-h, 0.0, 0.0), Vector3::new(h, 0.0, 0.0)] {
                    if let Some(t) = ray_sphere(o, d, &c, r) {
                        best = best.min(t);
                    }
                }
                best.is_finite().then_some(best)
            }
            Shape::Screw { .. } => self
                .cylinders()
                .iter()
                .filter_map(|c| c.ray(o, d))
                .min_by(f64::total_cmp),
        }
    }

    /// Signed distance, negative inside.
    pub fn sdf(&self, p: &Vector3<f64>) -> f64 {
        match *self {
            Shape::Sphere { r } => p.norm() - r,
            Shape::Capsule { r, len } => {
                let h = 0.5 * len;
                let x = p.x.clamp(-h, h);
                (p - Vector3::new(x, 0.0, 0.0)).norm() - r
            }
            Shape::Screw { .. } => {
                let [a, b] = self.cylinders();
                a.sdf(p).min(b.sdf(p))
            }
        }
    }

    /// Half thickness (along local z) of the shape above the local xy point
    /// when the x axis is horizontal; `None` outside the footprint.
    pub fn half_thickness(&self, x: f64, y: f64) -> Option<f64> {
        match *self {
            Shape::Sphere { r } => {
                let s = r * r - x * x - y * y;
                (s >= 0.0).then(|| s.sqrt())
            }
            Shape::Capsule { r, len } => {
                let h = 0.5 * len;
                let dx = (x.abs() - h).max(0.0);
                let s = r * r - dx * dx - y * y;
                (s >= 0.0).then(|| s.sqrt())
            }
            Shape::Screw { .. } => {
                let [a, b] = self.cylinders();
                match (a.half_thickness(x, y), b.half_thickness(x, y)) {
                    (Some(p), Some(q)) => Some(p.max(q)),
                    (p, q) => p.or(q),
                }
            }
        }
    }

    /// Half extents of the footprint in local (x, y).
    pub fn footprint_half_extents(&self) -> (f64, f64) {
        match *self {
            Shape::Sphere { r } => (r, r),
            Shape::Capsule { r, len } => (0.5 * len + r, r),
            Shape::Screw {
                head_r,
                head_h,
                shaft_len,
                ..
            } => (0.5 * (head_h + shaft_len), head_r),
        }
    }

    /// Sample points on the central axis with the local radius there. Used
    /// for overlap tests between swept shapes.
    pub fn axis_samples(&self, spacing: f64) -> Vec<(Vector3<f64>, f64)> {
        let line = |x0: f64, x1: f64, r: f64, out: &mut Vec<(Vector3<f64>, f64)>| {
            let n = ((x1 - x0) / spacing).ceil().max(1.0) as usize;
            for k in 0..=n {
                let x = x0 + (x1 - x0) * k as f64 / n as f64;
                out.push((Vector3::new(x, 0.0, 0.0), r));
            }
        };
        let mut out = Vec::new();
        match *self {
            Shape::Sphere { r } => out.push((Vector3::zeros(), r)),
            Shape::Capsule { r, len } => line(-0.5 * len, 0.5 * len, r, &mut out),
            Shape::Screw { .. } => {
                for c in self.cylinders() {
                    line(c.x0, c.x1, c.r, &mut out);
                }
            }
        }
        out
    }
}
