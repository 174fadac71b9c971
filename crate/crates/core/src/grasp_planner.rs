//! Grasp point selection from an overhead height map.
//!
//! The grasp point is the mean of the `k` highest cells inside a square ROI
//! around the pile apex. The approach vector runs from the bowl rim centre
//! to that point and fixes the wrist angle.

use std::cmp::Ordering;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 800;
pub const DEFAULT_ROI_SIDE: f64 = 24.0;
/// Pre-grasp height above the desk, mm.
pub const PREGRASP_HEIGHT: f64 = 600.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightMap {
    pub rows: usize,
    pub cols: usize,
    /// World xy of the grid corner (row 0, col 0 outer corner), mm.
    pub origin: [f64; 2],
    /// mm per cell.
    pub resolution: f64,
    /// Row-major elevations, mm. Row index grows with y, column with x.
    pub grid: Vec<f64>,
    pub roi_center: [f64; 2],
    pub roi_side: f64,
}

impl HeightMap {
    /// ROI defaults to the global maximum cell.
    pub fn new(rows: usize, cols: usize, origin: [f64; 2], resolution: f64, grid: Vec<f64>) -> Self {
        assert_eq!(grid.len(), rows * cols, "grid size mismatch");
        let mut hm = Self {
            rows,
            cols,
            origin,
            resolution,
            grid,
            roi_center: origin,
            roi_side: DEFAULT_ROI_SIDE,
        };
        if rows * cols > 0 {
            let (i, j) = hm.argmax();
            let (x, y) = hm.cell_center(i, j);
            hm.roi_center = [x, y];
        }
        hm
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) {
            return Err(Error::InvalidParameter("resolution must be positive".into()));
        }
        if self.grid.len() != self.rows * self.cols {
            return Err(Error::InvalidParameter("grid size does not match dims".into()));
        }
        if self.grid.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidParameter("non-finite elevation".into()));
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.grid[i * self.cols + j]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin[0] + (j as f64 + 0.5) * self.resolution,
            self.origin[1] + (i as f64 + 0.5) * self.resolution,
        )
    }

    /// First cell (row-major) holding the maximum elevation.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, z) in self.grid.iter().enumerate() {
            if *z > self.grid[best] {
                best = k;
            }
        }
        (best / self.cols, best % self.cols)
    }

    /// Row-major indices of cells whose centres lie in the half-open square
    /// `[c - side/2, c + side/2)` on both axes.
    pub fn roi_cells(&self) -> Vec<usize> {
        let half = 0.5 * self.roi_side;
        let [cx, cy] = self.roi_center;
        let mut out = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let (x, y) = self.cell_center(i, j);
                if x >= cx - half && x < cx + half && y >= cy - half && y < cy + half {
                    out.push(i * self.cols + j);
                }
            }
        }
        out
    }

    fn cell_position(&self, k: usize) -> Vector3<f64> {
        let (x, y) = self.cell_center(k / self.cols, k % self.cols);
        Vector3::new(x, y, self.grid[k])
    }
}

/// Mean world position of the `k` highest ROI cells. Ties at the cut are
/// resolved in row-major order.
pub fn top_k_mean(hm: &HeightMap, k: usize) -> Result<Vector3<f64>> {
    let mut cells = hm.roi_cells();
    if cells.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let k = k.clamp(1, cells.len());
    let order = |a: &usize, b: &usize| -> Ordering { hm.grid[*b].total_cmp(&hm.grid[*a]).then(a.cmp(b)) };
    if k < cells.len() {
        cells.select_nth_unstable_by(k - 1, order);
    }
    // Sum in row-major order so the result does not depend on the selection.
    cells[..k].sort_unstable();
    let sum: Vector3<f64> = cells[..k].iter().map(|&c| hm.cell_position(c)).sum();
    Ok(sum / k as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspTarget {
    pub p_mean: Vector3<f64>,
    pub p_cen: Vector3<f64>,
    pub v: Vector3<f64>,
    /// Wrist (last arm joint) angle, rad.
    pub theta: f64,
}

pub fn grasp_pose(p_mean: Vector3<f64>, p_cen: Vector3<f64>) -> GraspTarget {
    let v = p_mean - p_cen;
    let theta = if v.x == 0.0 && v.y == 0.0 {
        0.0
    } else {
        v.x.atan2(v.y)
    };
    GraspTarget {
        p_mean,
        p_cen,
        v,
        theta,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperCommand {
    Open,
    Close,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Vector3<f64>,
    pub wrist_angle: f64,
    pub gripper: GripperCommand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspPlan {
    pub target: GraspTarget,
    pub waypoints: Vec<Waypoint>,
}

/// Pre-grasp above the rim centre, wrist turn at the rim, straight descent
/// along `v`, close.
pub fn plan_grasp(hm: &HeightMap, p_cen: Vector3<f64>, k: usize) -> Result<GraspPlan> {
    hm.validate()?;
    let target = grasp_pose(top_k_mean(hm, k)?, p_cen);
    let wp = |position, wrist_angle, gripper| Waypoint {
        position,
        wrist_angle,
        gripper,
    };
    let above = Vector3::new(p_cen.x, p_cen.y, PREGRASP_HEIGHT);
    let waypoints = vec![
        wp(above, 0.0, GripperCommand::Open),
        wp(p_cen, target.theta, GripperCommand::Open),
        wp(target.p_mean, target.theta, GripperCommand::Open),
        wp(target.p_mean, target.theta, GripperCommand::Close),
    ];
    Ok(GraspPlan { target, waypoints })
}
