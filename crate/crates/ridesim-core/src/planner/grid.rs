//! Planar occupancy grid: scan registration with free-space carving and an
//! ASCII file format.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::world::RangeScan;

/// State of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellState {
    Free,
    Occupied,
    Unknown,
}

impl CellState {
    fn to_digit(self) -> char {
        match self {
            CellState::Free => '0',
            CellState::Occupied => '1',
            CellState::Unknown => '2',
        }
    }

    fn from_digit(c: char) -> Option<Self> {
        match c {
            '0' => Some(CellState::Free),
            '1' => Some(CellState::Occupied),
            '2' => Some(CellState::Unknown),
            _ => None,
        }
    }
}

/// Row-major occupancy grid anchored at a world-frame origin (the corner of
/// cell (0,0)).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub origin: Vector2<f64>,
    pub cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn unknown(width: usize, height: usize, resolution: f64, origin: Vector2<f64>) -> Self {
        assert!(resolution > 0.0 && width > 0 && height > 0);
        Self {
            resolution,
            width,
            height,
            origin,
            cells: vec![CellState::Unknown; width * height],
        }
    }

    pub fn free(width: usize, height: usize, resolution: f64, origin: Vector2<f64>) -> Self {
        Self {
            cells: vec![CellState::Free; width * height],
            ..Self::unknown(width, height, resolution, origin)
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    pub fn get(&self, x: usize, y: usize) -> CellState {
        self.cells[self.index(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, state: CellState) {
        let i = self.index(x, y);
        self.cells[i] = state;
    }

    /// Cell containing a world point, unbounded (may be negative).
    pub fn world_to_cell_unbounded(&self, p: Vector2<f64>) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.resolution).floor() as i64,
            ((p.y - self.origin.y) / self.resolution).floor() as i64,
        )
    }

    /// Cell containing a world point, or None when outside the grid.
    pub fn world_to_cell(&self, p: Vector2<f64>) -> Option<(usize, usize)> {
        let (cx, cy) = self.world_to_cell_unbounded(p);
        if cx < 0 || cy < 0 || cx >= self.width as i64 || cy >= self.height as i64 {
            None
        } else {
            Some((cx as usize, cy as usize))
        }
    }

    /// World coordinates of a cell center.
    pub fn cell_center(&self, x: usize, y: usize) -> Vector2<f64> {
        Vector2::new(
            self.origin.x + (x as f64 + 0.5) * self.resolution,
            self.origin.y + (y as f64 + 0.5) * self.resolution,
        )
    }

    /// Cells crossed by the segment from `a` to `b`, in traversal order,
    /// clipped to the grid (Amanatides–Woo stepping).
    pub fn traverse(&self, a: Vector2<f64>, b: Vector2<f64>) -> Vec<(usize, usize)> {
        let mut cells = Vec::new();
        let d = b - a;
        let len = d.norm();
        if len == 0.0 {
            if let Some(c) = self.world_to_cell(a) {
                cells.push(c);
            }
            return cells;
        }
        let dir = d / len;
        let (mut cx, mut cy) = self.world_to_cell_unbounded(a);
        let (gx, gy) = self.world_to_cell_unbounded(b);
        let step_x: i64 = if dir.x > 0.0 { 1 } else { -1 };
        let step_y: i64 = if dir.y > 0.0 { 1 } else { -1 };
        // Distance along the ray to the first x/y cell boundary.
        let next_boundary = |c: i64, step: i64, origin: f64, start: f64, dcomp: f64| -> f64 {
            if dcomp == 0.0 {
                return f64::INFINITY;
            }
            let edge = origin + (c + if step > 0 { 1 } else { 0 }) as f64 * self.resolution;
            (edge - start) / dcomp
        };
        let mut t_max_x = next_boundary(cx, step_x, self.origin.x, a.x, dir.x);
        let mut t_max_y = next_boundary(cy, step_y, self.origin.y, a.y, dir.y);
        let t_delta_x = if dir.x == 0.0 {
            f64::INFINITY
        } else {
            self.resolution / dir.x.abs()
        };
        let t_delta_y = if dir.y == 0.0 {
            f64::INFINITY
        } else {
            self.resolution / dir.y.abs()
        };
        let max_cells = 2 * (self.width + self.height) + 4;
        for _ in 0..max_cells {
            if cx >= 0 && cy >= 0 && cx < self.width as i64 && cy < self.height as i64 {
                cells.push((cx as usize, cy as usize));
            }
            if cx == gx && cy == gy {
                break;
            }
            if t_max_x < t_max_y {
                if t_max_x > len {
                    break;
                }
                cx += step_x;
                t_max_x += t_delta_x;
            } else {
                if t_max_y > len {
                    break;
                }
                cy += step_y;
                t_max_y += t_delta_y;
            }
        }
        cells
    }

    /// Register a range scan: carve free space along every beam and mark the
    /// hit cell of each finite return occupied. The scan's beam geometry is
    /// re-anchored at `registered` (the estimated sensor pose); hits win
    /// over frees within one scan, so repeated identical scans are
    /// idempotent.
    pub fn update_from_scan(&mut self, scan: &RangeScan, registered: Pose) {
        let origin = registered.position();
        let mut frees: Vec<(usize, usize)> = Vec::new();
        let mut hits: Vec<(usize, usize)> = Vec::new();
        for i in 0..scan.angles.len() {
            let angle = registered.heading + (scan.angles[i] - scan.origin.heading);
            let dir = Vector2::new(angle.cos(), angle.sin());
            let end = origin + dir * scan.ranges[i];
            let mut cells = self.traverse(origin, end);
            if scan.is_hit(i) {
                if let Some(hit_cell) = self.world_to_cell(end) {
                    cells.retain(|&c| c != hit_cell);
                    hits.push(hit_cell);
                }
            }
            frees.extend(cells);
        }
        for (x, y) in frees {
            self.set(x, y, CellState::Free);
        }
        for (x, y) in hits {
            self.set(x, y, CellState::Occupied);
        }
    }

    /// Serialize to the ASCII format: a header line
    /// `width height resolution origin_x origin_y`, then `height` rows of
    /// `width` digits (0 free, 1 occupied, 2 unknown), top row first
    /// (highest y).
    pub fn to_ascii(&self) -> String {
        let mut out = format!(
            "{} {} {} {} {}\n",
            self.width, self.height, self.resolution, self.origin.x, self.origin.y
        );
        for row in (0..self.height).rev() {
            let mut line = String::with_capacity(2 * self.width);
            for col in 0..self.width {
                if col > 0 {
                    line.push(' ');
                }
                line.push(self.get(col, row).to_digit());
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Parse the ASCII format written by [`Self::to_ascii`]. Digits may be
    /// space-separated or contiguous.
    pub fn from_ascii(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or("empty grid file")?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(format!(
                "grid header must be 'width height resolution origin_x origin_y', got '{header}'"
            ));
        }
        let width: usize = parts[0]
            .parse()
            .map_err(|e| format!("bad grid width '{}': {e}", parts[0]))?;
        let height: usize = parts[1]
            .parse()
            .map_err(|e| format!("bad grid height '{}': {e}", parts[1]))?;
        let resolution: f64 = parts[2]
            .parse()
            .map_err(|e| format!("bad grid resolution '{}': {e}", parts[2]))?;
        let ox: f64 = parts[3]
            .parse()
            .map_err(|e| format!("bad grid origin_x '{}': {e}", parts[3]))?;
        let oy: f64 = parts[4]
            .parse()
            .map_err(|e| format!("bad grid origin_y '{}': {e}", parts[4]))?;
        if resolution <= 0.0 || width == 0 || height == 0 {
            return Err("grid dimensions and resolution must be positive".into());
        }
        let mut grid = Self::unknown(width, height, resolution, Vector2::new(ox, oy));
        for (k, line) in lines.enumerate() {
            if k >= height {
                return Err(format!("grid file has more than {height} rows"));
            }
            let y = height - 1 - k;
            let digits: Vec<CellState> = line
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(|c| {
                    CellState::from_digit(c)
                        .ok_or_else(|| format!("row {}: invalid cell digit '{c}'", k + 2))
                })
                .collect::<Result<_, _>>()?;
            if digits.len() != width {
                return Err(format!(
                    "row {}: expected {width} cells, got {}",
                    k + 2,
                    digits.len()
                ));
            }
            for (x, s) in digits.into_iter().enumerate() {
                grid.set(x, y, s);
            }
        }
        Ok(grid)
    }

    /// Merge occupied cells into axis-aligned rectangles (one per maximal
    /// horizontal run), for building a polygon world out of a map file.
    pub fn occupied_rects(&self) -> Vec<(Vector2<f64>, Vector2<f64>)> {
        let mut rects = Vec::new();
        for y in 0..self.height {
            let mut x = 0;
            while x < self.width {
                if self.get(x, y) == CellState::Occupied {
                    let start = x;
                    while x < self.width && self.get(x, y) == CellState::Occupied {
                        x += 1;
                    }
                    let x0 = self.origin.x + start as f64 * self.resolution;
                    let x1 = self.origin.x + x as f64 * self.resolution;
                    let y0 = self.origin.y + y as f64 * self.resolution;
                    let y1 = y0 + self.resolution;
                    rects.push((
                        Vector2::new((x0 + x1) / 2.0, (y0 + y1) / 2.0),
                        Vector2::new(x1 - x0, y1 - y0),
                    ));
                } else {
                    x += 1;
                }
            }
        }
        rects
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan_one_beam(range: f64, max_range: f64) -> RangeScan {
        RangeScan {
            origin: Pose::new(0.05, 0.05, 0.0),
            angles: vec![0.0],
            ranges: vec![range],
            max_range,
        }
    }

    #[test]
    fn max_range_scan_carves_free_without_occupying() {
        let mut g = OccupancyGrid::unknown(40, 10, 0.1, Vector2::new(0.0, 0.0));
        let scan = scan_one_beam(3.0, 3.0);
        g.update_from_scan(&scan, scan.origin);
        let occupied = g.cells.iter().filter(|&&c| c == CellState::Occupied).count();
        let free = g.cells.iter().filter(|&&c| c == CellState::Free).count();
        assert_eq!(occupied, 0);
        assert!(free >= 30, "beam should carve its whole row, freed {free}");
    }

    #[test]
    fn single_hit_marks_exactly_the_hit_cell() {
        let mut g = OccupancyGrid::unknown(40, 10, 0.1, Vector2::new(0.0, 0.0));
        let scan = scan_one_beam(1.5, 3.0);
        g.update_from_scan(&scan, scan.origin);
        // Hit point at x = 1.55 -> cell column 15.
        let occupied: Vec<(usize, usize)> = (0..g.width)
            .flat_map(|x| (0..g.height).map(move |y| (x, y)))
            .filter(|&(x, y)| g.get(x, y) == CellState::Occupied)
            .collect();
        assert_eq!(occupied, vec![(15, 0)]);
        for x in 0..15 {
            assert_eq!(g.get(x, 0), CellState::Free, "cell {x} along beam");
        }
        assert_eq!(g.get(20, 0), CellState::Unknown);
    }

    #[test]
    fn repeated_scan_is_idempotent() {
        let mut g = OccupancyGrid::unknown(30, 30, 0.05, Vector2::new(-0.75, -0.75));
        let scan = RangeScan {
            origin: Pose::new(0.0, 0.0, 0.4),
            angles: (0..36)
                .map(|i| 0.4 - std::f64::consts::PI + std::f64::consts::TAU * i as f64 / 36.0)
                .collect(),
            ranges: (0..36).map(|i| 0.3 + 0.02 * (i % 7) as f64).collect(),
            max_range: 2.0,
        };
        g.update_from_scan(&scan, scan.origin);
        let once = g.clone();
        g.update_from_scan(&scan, scan.origin);
        assert_eq!(once, g);
    }

    #[test]
    fn ascii_round_trip() {
        let mut g = OccupancyGrid::unknown(5, 3, 0.05, Vector2::new(-1.0, 2.0));
        g.set(0, 0, CellState::Free);
        g.set(4, 2, CellState::Occupied);
        g.set(2, 1, CellState::Free);
        let text = g.to_ascii();
        let parsed = OccupancyGrid::from_ascii(&text).unwrap();
        assert_eq!(g, parsed);
        // Header is the documented five fields.
        assert!(text.starts_with("5 3 0.05 -1 2\n"));
    }

    #[test]
    fn ascii_rejects_malformed_input() {
        assert!(OccupancyGrid::from_ascii("").is_err());
        assert!(OccupancyGrid::from_ascii("3 1 0.1 0 0\n0 7 0\n").is_err());
        assert!(OccupancyGrid::from_ascii("3 1 0.1 0 0\n0 0\n").is_err());
        assert!(OccupancyGrid::from_ascii("3 0 0.1 0 0\n").is_err());
    }

    #[test]
    fn occupied_runs_merge_into_rects() {
        let mut g = OccupancyGrid::free(6, 2, 0.5, Vector2::new(0.0, 0.0));
        g.set(1, 0, CellState::Occupied);
        g.set(2, 0, CellState::Occupied);
        g.set(3, 0, CellState::Occupied);
        g.set(5, 1, CellState::Occupied);
        let rects = g.occupied_rects();
        assert_eq!(rects.len(), 2);
        assert_eq!(rects[0].0, Vector2::new(1.25, 0.25));
        assert_eq!(rects[0].1, Vector2::new(1.5, 0.5));
    }
}
