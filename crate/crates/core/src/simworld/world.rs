//! Bowl, object pile and overhead height map.

use nalgebra::{Rotation3, Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::hand::Attachment;
use super::shapes::Shape;
use crate::error::{Error, Result};
use crate::grasp_planner::HeightMap;
use crate::kinematics::Pose;

pub const PLACEMENT_ATTEMPTS: usize = 200;
/// How far above the rim a stacked object may reach.
pub const PILE_ALLOWANCE: f64 = 25.0;
const FOOTPRINT_SPACING: f64 = 0.5;
const SETTLE_STEP: f64 = 0.25;
/// Horizontal step of the downhill slide after dropping, mm.
const SLIDE_STEP: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bowl {
    /// Rim centre in world coordinates, mm. The desk is z = 0.
    pub rim_center: [f64; 3],
    pub radius: f64,
    pub depth: f64,
}

impl Default for Bowl {
    fn default() -> Self {
        Self {
            rim_center: [0.0, 0.0, 60.0],
            radius: 60.0,
            depth: 45.0,
        }
    }
}

impl Bowl {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.depth > 0.0 && self.depth < self.rim_center[2]) {
            return Err(Error::InvalidParameter(
                "bowl needs positive radius and 0 < depth < rim height".into(),
            ));
        }
        Ok(())
    }

    pub fn p_cen(&self) -> Vector3<f64> {
        Vector3::from(self.rim_center)
    }

    /// Paraboloid interior surface; the rim height outside the bowl.
    pub fn surface_z(&self, x: f64, y: f64) -> f64 {
        let [cx, cy, rim] = self.rim_center;
        let rho2 = ((x - cx).powi(2) + (y - cy).powi(2)) / (self.radius * self.radius);
        rim - self.depth * (1.0 - rho2.min(1.0))
    }

    pub fn floor_z(&self) -> f64 {
        self.rim_center[2] - self.depth
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimObject {
    pub id: u32,
    pub class_id: u8,
    pub shape: Shape,
    pub pose: Pose,
}

impl SimObject {
    /// Top surface elevation above world xy, if the footprint covers it.
    /// Valid for objects lying with their axis horizontal.
    pub fn top_at(&self, x: f64, y: f64) -> Option<f64> {
        let local = self
            .pose
            .inverse()
            .transform_point(&Vector3::new(x, y, self.pose.position.z));
        self.shape
            .half_thickness(local.x, local.y)
            .map(|h| self.pose.position.z + h)
    }

    pub fn sdf(&self, p: &Vector3<f64>) -> f64 {
        self.shape.sdf(&self.pose.inverse().transform_point(p))
    }

    pub fn ray_hit(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let inv = self.pose.inverse();
        self.shape
            .ray_hit(&inv.transform_point(o), &inv.transform_vector(d))
    }

    pub fn top_z(&self) -> f64 {
        self.pose.position.z + self.shape.rest_height()
    }

    fn overlaps(&self, other: &SimObject) -> bool {
        let reach = self.shape.bounding_radius() + other.shape.bounding_radius();
        if (self.pose.position - other.pose.position).norm() > reach {
            return false;
        }
        self.shape.axis_samples(0.5).iter().any(|(p, r)| {
            let w = self.pose.transform_point(p);
            other.sdf(&w) < r - 1e-6
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectCount {
    pub class: u8,
    pub count: usize,
    /// Overrides the catalogue geometry for this entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub bowl: Bowl,
    pub objects: Vec<SimObject>,
    pub attached: Option<Attachment>,
    pub seed: u64,
}

impl WorldState {
    pub fn empty(bowl: Bowl, seed: u64) -> Self {
        Self {
            bowl,
            objects: Vec::new(),
            attached: None,
            seed,
        }
    }

    /// Elevation of the pile or bowl directly below world xy.
    pub fn support_z(&self, x: f64, y: f64) -> f64 {
        self.objects
            .iter()
            .filter_map(|o| o.top_at(x, y))
            .fold(self.bowl.surface_z(x, y), f64::max)
    }

    pub fn remove(&mut self, ids: &[u32]) -> Vec<SimObject> {
        let (taken, kept) = self.objects.iter().partition(|o| ids.contains(&o.id));
        self.objects = kept;
        taken
    }

    /// Lowest centre height at which the footprint clears the bowl and the
    /// objects under it.
    fn rest_z(&self, fp: &[(f64, f64, f64)], rot: &Rotation3<f64>, reach: f64, xy: &Vector2<f64>) -> f64 {
        let near: Vec<&SimObject> = self
            .objects
            .iter()
            .filter(|o| (o.pose.position.xy() - xy).norm() <= reach + o.shape.bounding_radius())
            .collect();
        let mut zc = f64::NEG_INFINITY;
        for (lx, ly, h) in fp {
            let w = rot * Vector3::new(*lx, *ly, 0.0);
            let (x, y) = (xy.x + w.x, xy.y + w.y);
            let support = near
                .iter()
                .filter_map(|o| o.top_at(x, y))
                .fold(self.bowl.surface_z(x, y), f64::max);
            zc = zc.max(support + h);
        }
        zc
    }

    /// Place one object at random. The centre height is the lowest at which
    /// the footprint clears the bowl and every object below it.
    pub fn place(&mut self, id: u32, class_id: u8, shape: Shape, rng: &mut impl Rng) -> Result<()> {
        shape.validate()?;
        let (hx, hy) = shape.footprint_half_extents();
        let rest = shape.rest_height();
        let fp = footprint(&shape);
        let reach = hx.hypot(hy);
        let max_rho = self.bowl.radius - shape.bounding_radius();
        if max_rho <= 0.0 {
            return Err(Error::OverfilledBowl {
                index: id as usize,
                attempts: 0,
            });
        }
        let [cx, cy, rim] = self.bowl.rim_center;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let rho = max_rho * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let yaw = rng.random_range(0.0..std::f64::consts::TAU);
            let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
            let mut xy = Vector2::new(cx + rho * phi.cos(), cy + rho * phi.sin());
            let mut zc = self.rest_z(&fp, &rot, reach, &xy);
            // Slide towards the bowl centre while that lowers the object:
            // nothing stays perched on the bare slope.
            loop {
                let to_centre = Vector2::new(cx, cy) - xy;
                let d = to_centre.norm();
                if d < SLIDE_STEP {
                    break;
                }
                let next = xy + to_centre * (SLIDE_STEP / d);
                let z = self.rest_z(&fp, &rot, reach, &next);
                if z >= zc {
                    break;
                }
                (xy, zc) = (next, z);
            }
            let near: Vec<&SimObject> = self
                .objects
                .iter()
                .filter(|o| (o.pose.position.xy() - xy).norm() <= reach + o.shape.bounding_radius())
                .collect();
            let mut obj = SimObject {
                id,
                class_id,
                shape,
                pose: Pose::new(Vector3::new(xy.x, xy.y, zc), rot),
            };
            // The footprint misses contacts between sample points; lift the
            // object until it clears its neighbours.
            while obj.pose.position.z + rest <= rim + PILE_ALLOWANCE {
                if !near.iter().any(|o| obj.overlaps(o) || o.overlaps(&obj)) {
                    self.objects.push(obj);
                    return Ok(());
                }
                obj.pose.position.z += SETTLE_STEP;
            }
        }
        Err(Error::OverfilledBowl {
            index: id as usize,
            attempts: PLACEMENT_ATTEMPTS,
        })
    }
}

/// Footprint sample points `(x, y, half_thickness)` in the local frame.
fn footprint(shape: &Shape) -> Vec<(f64, f64, f64)> {
    let (hx, hy) = shape.footprint_half_extents();
    let nx = (hx / FOOTPRINT_SPACING).ceil() as i64;
    let ny = (hy / FOOTPRINT_SPACING).ceil() as i64;
    let mut out = Vec::new();
    for i in -nx..=nx {
        for j in -ny..=ny {
            let x = (i as f64 * FOOTPRINT_SPACING).clamp(-hx, hx);
            let y = (j as f64 * FOOTPRINT_SPACING).clamp(-hy, hy);
            if let Some(h) = shape.half_thickness(x, y) {
                out.push((x, y, h));
            }
        }
    }
    out
}

/// Seeded pile. Objects are placed in a shuffled order so that classes mix.
pub fn spawn_bowl(bowl: Bowl, counts: &[ObjectCount], seed: u64) -> Result<WorldState> {
    bowl.validate()?;
    let mut rng = crate::rng::stream(seed, "spawn");
    let mut order: Vec<(u8, Shape)> = Vec::new();
    for c in counts {
        let shape = match c.shape {
            Some(s) => s,
            None => super::catalog::shape(c.class).ok_or_else(|| {
                Error::InvalidParameter(format!("class {} has no catalogue shape", c.class))
            })?,
        };
        order.extend(std::iter::repeat_n((c.class, shape), c.count));
    }
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut world = WorldState::empty(bowl, seed);
    for (id, (class, shape)) in order.into_iter().enumerate() {
        world.place(id as u32, class, shape, &mut rng)?;
    }
    Ok(world)
}

pub const HEIGHTMAP_RESOLUTION: f64 = 0.5;

/// Overhead z-buffer over the bowl square: bowl surface, then the max of
/// every object's top surface.
pub fn render_heightmap(world: &WorldState) -> HeightMap {
    let bowl = &world.bowl;
    let res = HEIGHTMAP_RESOLUTION;
    let n = (2.0 * bowl.radius / res).round() as usize;
    let origin = [bowl.rim_center[0] - bowl.radius, bowl.rim_center[1] - bowl.radius];
    let centre = |i: usize, j: usize| {
        (
            origin[0] + (j as f64 + 0.5) * res,
            origin[1] + (i as f64 + 0.5) * res,
        )
    };
    let mut grid = vec![0.0; n * n];
    let mut covered = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            let (x, y) = centre(i, j);
            grid[i * n + j] = bowl.surface_z(x, y);
        }
    }
    for o in &world.objects {
        let br = o.shape.bounding_radius();
        let p = o.pose.position;
        let j0 = (((p.x - br - origin[0]) / res).floor().max(0.0)) as usize;
        let j1 = ((((p.x + br - origin[0]) / res).ceil()) as usize).min(n);
        let i0 = (((p.y - br - origin[1]) / res).floor().max(0.0)) as usize;
        let i1 = ((((p.y + br - origin[1]) / res).ceil()) as usize).min(n);
        for i in i0..i1 {
            for j in j0..j1 {
                let (x, y) = centre(i, j);
                if let Some(z) = o.top_at(x, y) {
                    let cell = &mut grid[i * n + j];
                    *cell = cell.max(z);
                    covered[i * n + j] = true;
                }
            }
        }
    }
    // The ROI centres on the pile apex, not the rim.
    let apex = (0..n * n)
        .filter(|&k| covered[k])
        .fold(None, |best: Option<usize>, k| match best {
            Some(b) if grid[b] >= grid[k] => Some(b),
            _ => Some(k),
        });
    let mut hm = HeightMap::new(n, n, origin, res, grid);
    hm.roi_center = match apex {
        Some(k) => {
            let (x, y) = centre(k / n, k % n);
            [x, y]
        }
        None => [bowl.rim_center[0], bowl.rim_center[1]],
    };
    hm
}
