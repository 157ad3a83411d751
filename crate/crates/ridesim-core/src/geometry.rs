//! Small planar geometry helpers shared by the world and the planner.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Planar pose: position plus heading (rad, CCW from +x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn heading_dir(&self) -> Vector2<f64> {
        Vector2::new(self.heading.cos(), self.heading.sin())
    }
}

/// Wrap an angle difference into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % std::f64::consts::TAU;
    if r <= -std::f64::consts::PI {
        r += std::f64::consts::TAU;
    } else if r > std::f64::consts::PI {
        r -= std::f64::consts::TAU;
    }
    r
}

/// Rotate a vector by `angle` (CCW).
pub fn rotate(v: Vector2<f64>, angle: f64) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Convex polygon in the world frame, vertices in CCW order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    pub vertices: Vec<Vector2<f64>>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Vector2<f64>>) -> Self {
        debug_assert!(vertices.len() >= 3);
        Self { vertices }
    }

    /// Axis-aligned box from center and full side lengths.
    pub fn rect(center: Vector2<f64>, size: Vector2<f64>) -> Self {
        let h = size / 2.0;
        Self::new(vec![
            Vector2::new(center.x - h.x, center.y - h.y),
            Vector2::new(center.x + h.x, center.y - h.y),
            Vector2::new(center.x + h.x, center.y + h.y),
            Vector2::new(center.x - h.x, center.y + h.y),
        ])
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vector2<f64>, Vector2<f64>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// True when `p` lies inside or on the boundary.
    pub fn contains(&self, p: Vector2<f64>) -> bool {
        self.edges().all(|(a, b)| {
            let e = b - a;
            let d = p - a;
            e.x * d.y - e.y * d.x >= -1e-12
        })
    }

    /// Distance from `p` to the polygon boundary; 0 inside.
    pub fn distance(&self, p: Vector2<f64>) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// First intersection of the ray `origin + t*dir` (t > 0) with the
    /// polygon boundary, as the ray parameter `t`.
    pub fn ray_intersection(&self, origin: Vector2<f64>, dir: Vector2<f64>) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (a, b) in self.edges() {
            if let Some(t) = ray_segment_intersection(origin, dir, a, b) {
                best = Some(best.map_or(t, |cur: f64| cur.min(t)));
            }
        }
        best
    }
}

pub fn point_segment_distance(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Ray/segment intersection; returns the ray parameter t ≥ 0 when the ray
/// `o + t*d` crosses segment `ab`.
pub fn ray_segment_intersection(
    o: Vector2<f64>,
    d: Vector2<f64>,
    a: Vector2<f64>,
    b: Vector2<f64>,
) -> Option<f64> {
    let e = b - a;
    let denom = d.x * e.y - d.y * e.x;
    if denom.abs() < 1e-15 {
        return None; // parallel
    }
    let ao = a - o;
    let t = (ao.x * e.y - ao.y * e.x) / denom;
    let s = (ao.x * d.y - ao.y * d.x) / denom;
    if t >= 1e-12 && (-1e-12..=1.0 + 1e-12).contains(&s) {
        Some(t)
    } else {
        None
    }
}
