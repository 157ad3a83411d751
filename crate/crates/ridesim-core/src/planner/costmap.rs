//! Inflated costmap over an occupancy grid.
//!
//! Costs follow an exponential decay of the exact Euclidean distance to the
//! nearest occupied cell: occupied cells are lethal (255), cells inside the
//! robot radius are inscribed (254), and beyond the inflation radius the
//! cost is zero. The float distance field is kept alongside the quantized
//! costs for clearance checks.

use nalgebra::Vector2;

use super::grid::{CellState, OccupancyGrid};

pub const LETHAL: u8 = 255;
pub const INSCRIBED: u8 = 254;

#[derive(Debug, Clone)]
pub struct Costmap {
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub origin: Vector2<f64>,
    /// Quantized traversal cost per cell.
    pub cost: Vec<u8>,
    /// Euclidean distance (m) from each cell center to the nearest occupied
    /// cell center; 0 for occupied cells.
    pub distance_m: Vec<f64>,
    pub inflation_radius: f64,
    pub decay_rate: f64,
    pub robot_radius: f64,
}

impl Costmap {
    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn cost_at(&self, x: usize, y: usize) -> u8 {
        self.cost[self.index(x, y)]
    }

    pub fn is_blocked(&self, x: usize, y: usize) -> bool {
        self.cost_at(x, y) >= INSCRIBED
    }

    pub fn world_to_cell(&self, p: Vector2<f64>) -> Option<(usize, usize)> {
        let cx = ((p.x - self.origin.x) / self.resolution).floor() as i64;
        let cy = ((p.y - self.origin.y) / self.resolution).floor() as i64;
        if cx < 0 || cy < 0 || cx >= self.width as i64 || cy >= self.height as i64 {
            None
        } else {
            Some((cx as usize, cy as usize))
        }
    }

    pub fn cell_center(&self, x: usize, y: usize) -> Vector2<f64> {
        Vector2::new(
            self.origin.x + (x as f64 + 0.5) * self.resolution,
            self.origin.y + (y as f64 + 0.5) * self.resolution,
        )
    }

    /// Bilinearly interpolated obstacle distance (m) at a world point.
    /// Queries clamp to the cell-center lattice.
    pub fn distance_at(&self, p: Vector2<f64>) -> f64 {
        let gx = (p.x - self.origin.x) / self.resolution - 0.5;
        let gy = (p.y - self.origin.y) / self.resolution - 0.5;
        let gx = gx.clamp(0.0, (self.width - 1) as f64);
        let gy = gy.clamp(0.0, (self.height - 1) as f64);
        let x0 = gx.floor() as usize;
        let y0 = gy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = gx - x0 as f64;
        let fy = gy - y0 as f64;
        let d00 = self.distance_m[self.index(x0, y0)];
        let d10 = self.distance_m[self.index(x1, y0)];
        let d01 = self.distance_m[self.index(x0, y1)];
        let d11 = self.distance_m[self.index(x1, y1)];
        (d00 * (1.0 - fx) + d10 * fx) * (1.0 - fy) + (d01 * (1.0 - fx) + d11 * fx) * fy
    }
}

/// Build the inflated costmap for a grid.
///
/// Unknown cells cost like free space (the distance field only grows from
/// occupied cells); planning into unexplored space is allowed and corrected
/// by replanning as the map fills in.
pub fn build_costmap(
    grid: &OccupancyGrid,
    inflation_radius: f64,
    decay_rate: f64,
    robot_radius: f64,
) -> Costmap {
    assert!(inflation_radius >= 0.0 && decay_rate >= 0.0 && robot_radius >= 0.0);
    let n = grid.width * grid.height;
    let occupied: Vec<bool> = grid.cells.iter().map(|&c| c == CellState::Occupied).collect();
    let dist2 = euclidean_distance_transform_sq(&occupied, grid.width, grid.height);
    let mut cost = vec![0u8; n];
    let mut distance_m = vec![0.0f64; n];
    for i in 0..n {
        let d = dist2[i].sqrt() * grid.resolution;
        distance_m[i] = d;
        cost[i] = if occupied[i] {
            LETHAL
        } else if d <= robot_radius {
            INSCRIBED
        } else if d <= inflation_radius {
            let c = 254.0 * (-decay_rate * (d - robot_radius)).exp();
            (c.round() as u8).min(INSCRIBED)
        } else {
            0
        };
    }
    Costmap {
        resolution: grid.resolution,
        width: grid.width,
        height: grid.height,
        origin: grid.origin,
        cost,
        distance_m,
        inflation_radius,
        decay_rate,
        robot_radius,
    }
}

/// Exact squared Euclidean distance transform (cell units) to the nearest
/// occupied cell, by the two-pass separable lower-envelope method.
pub fn euclidean_distance_transform_sq(occupied: &[bool], width: usize, height: usize) -> Vec<f64> {
    const INF: f64 = 1e18;
    let mut field: Vec<f64> = occupied.iter().map(|&o| if o { 0.0 } else { INF }).collect();

    let mut buf = vec![0.0f64; width.max(height)];
    // Columns.
    for x in 0..width {
        for y in 0..height {
            buf[y] = field[y * width + x];
        }
        let out = dt_1d(&buf[..height]);
        for y in 0..height {
            field[y * width + x] = out[y];
        }
    }
    // Rows.
    for y in 0..height {
        buf[..width].copy_from_slice(&field[y * width..(y + 1) * width]);
        let out = dt_1d(&buf[..width]);
        field[y * width..(y + 1) * width].copy_from_slice(&out);
    }
    field
}

/// 1-D squared distance transform (lower envelope of parabolas).
fn dt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0f64; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -1e18;
    z[1] = 1e18;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                break;
            }
        }
        if s <= z[k] {
            // Degenerate column of all-equal parabolas; replace.
            v[k] = q;
        } else {
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = 1e18;
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
    d
}
