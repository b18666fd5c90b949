//! Planar geometry for the coverage domain: a simple polygon with containment,
//! boundary projection and signed distance queries, plus domain generators.
//!
//! Edges are indexed so that edge `k` joins vertex `k - 1` (cyclically) to
//! vertex `k`. Edge 0 is therefore the closing edge from the last vertex back
//! to the first one. Projection ties are resolved in favour of the lowest edge
//! index under this numbering.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer than this to the boundary count as inside the domain.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

const MAX_POLYGON_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Vec2 { x, y }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, rhs: Vec2) -> Vec2 {
        rhs * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Closest point on the closed segment `[a, b]` to `p`.
pub fn closest_point_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

fn orientation(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(p: Vec2, a: Vec2, b: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test, colinear overlaps included.
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

/// Result of projecting a point onto the polygon boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryProjection {
    /// Closest boundary point.
    pub point: Vec2,
    /// `p - point`.
    pub offset: Vec2,
    pub distance: f64,
    /// Whether the query point lies in the closed domain.
    pub inside: bool,
    /// Index of the edge the projection landed on.
    pub edge: usize,
    /// Outward unit normal of that edge.
    pub edge_normal: Vec2,
}

impl BoundaryProjection {
    /// -1 inside the domain, +1 outside.
    pub fn indicator(&self) -> f64 {
        if self.inside {
            -1.0
        } else {
            1.0
        }
    }

    pub fn signed_distance(&self) -> f64 {
        self.indicator() * self.distance
    }

    /// Unit vector from the boundary towards the point.
    ///
    /// On the boundary itself the offset vanishes; the direction then falls
    /// back to `indicator * outward_normal`, which is the limit taken from the
    /// inside and keeps `indicator * direction` equal to the outward normal.
    pub fn direction(&self) -> Vec2 {
        if self.distance > 0.0 {
            self.offset / self.distance
        } else {
            self.edge_normal * self.indicator()
        }
    }
}

/// A simple polygon with counter-clockwise vertex order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct Polygon {
    vertices: Vec<Vec2>,
}

impl TryFrom<Vec<Vec2>> for Polygon {
    type Error = Error;
    fn try_from(v: Vec<Vec2>) -> Result<Self> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Vec2> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

fn shoelace(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    let mut twice = 0.0;
    for k in 0..n {
        twice += vertices[k].cross(vertices[(k + 1) % n]);
    }
    0.5 * twice
}

impl Polygon {
    /// Validates and builds a polygon. Clockwise input is reversed.
    pub fn new(mut vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!("need at least 3 vertices, got {}", vertices.len())));
        }
        if let Some(v) = vertices.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidPolygon(format!("non-finite vertex {v}")));
        }
        let area = shoelace(&vertices);
        if area.abs() <= 1e-14 {
            return Err(Error::InvalidPolygon("zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        if !is_simple(&vertices) {
            return Err(Error::InvalidPolygon("edges self-intersect".into()));
        }
        Ok(Self { vertices })
    }

    pub fn unit_square() -> Self {
        Self { vertices: vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)] }
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edge `k` as `(start, end)`, running from vertex `k-1` to vertex `k`.
    pub fn edge(&self, k: usize) -> (Vec2, Vec2) {
        let n = self.vertices.len();
        (self.vertices[(k + n - 1) % n], self.vertices[k])
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        (0..self.vertices.len()).map(move |k| self.edge(k))
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len();
        let mut c = Vec2::ZERO;
        let mut twice_area = 0.0;
        for k in 0..n {
            let a = self.vertices[k];
            let b = self.vertices[(k + 1) % n];
            let w = a.cross(b);
            twice_area += w;
            c += (a + b) * w;
        }
        c / (3.0 * twice_area)
    }

    fn crossing_number_inside(&self, p: Vec2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Closed-region membership; the boundary (within [`BOUNDARY_TOLERANCE`]) is inside.
    pub fn contains(&self, p: Vec2) -> bool {
        self.project_to_boundary(p).inside
    }

    pub fn project_to_boundary(&self, p: Vec2) -> BoundaryProjection {
        let mut best_edge = 0;
        let mut best_point = Vec2::ZERO;
        let mut best_d2 = f64::INFINITY;
        for (k, (a, b)) in self.edges().enumerate() {
            let q = closest_point_on_segment(p, a, b);
            let d2 = (p - q).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best_point = q;
                best_edge = k;
            }
        }
        let offset = p - best_point;
        let distance = offset.norm();
        let inside = distance <= BOUNDARY_TOLERANCE || self.crossing_number_inside(p);
        let (a, b) = self.edge(best_edge);
        let e = b - a;
        let edge_normal = Vec2::new(e.y, -e.x) / e.norm();
        BoundaryProjection { point: best_point, offset, distance, inside, edge: best_edge, edge_normal }
    }

    /// Negative inside, positive outside, zero on the boundary.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        self.project_to_boundary(p).signed_distance()
    }

    /// Side length of the square cell each of `n` agents covers.
    pub fn coverage_radius(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::invalid("coverage radius needs at least one agent"));
        }
        Ok((self.area() / n as f64).sqrt())
    }

    /// Whether the closed ball of `radius` around `center` fits in the domain.
    pub fn ball_in_domain(&self, center: Vec2, radius: f64) -> bool {
        let proj = self.project_to_boundary(center);
        proj.inside && proj.distance >= radius - BOUNDARY_TOLERANCE
    }

    /// Regular polygon centred at the origin with a flat bottom edge.
    pub fn regular(sides: usize, area: f64) -> Result<Self> {
        if sides < 3 {
            return Err(Error::invalid(format!("regular polygon needs >= 3 sides, got {sides}")));
        }
        if !(area > 0.0 && area.is_finite()) {
            return Err(Error::invalid(format!("area must be positive, got {area}")));
        }
        let k = sides as f64;
        let radius = (2.0 * area / (k * (2.0 * PI / k).sin())).sqrt();
        let start = -PI / 2.0 + PI / k;
        let vertices = (0..sides)
            .map(|j| {
                let theta = start + 2.0 * PI * j as f64 / k;
                Vec2::new(radius * theta.cos(), radius * theta.sin())
            })
            .collect();
        Polygon::new(vertices)
    }

    /// Star-shaped random polygon: angular steps and radii around a unit
    /// circle are jittered by up to `irregularity` (relative), then the shape
    /// is rescaled to `area`. With zero irregularity this is the regular polygon.
    pub fn random(seed: u64, sides: usize, irregularity: f64, area: f64) -> Result<Self> {
        if sides < 3 {
            return Err(Error::invalid(format!("random polygon needs >= 3 sides, got {sides}")));
        }
        if !(0.0..1.0).contains(&irregularity) {
            return Err(Error::invalid(format!("irregularity must be in [0, 1), got {irregularity}")));
        }
        if !(area > 0.0 && area.is_finite()) {
            return Err(Error::invalid(format!("area must be positive, got {area}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = sides as f64;
        let step = 2.0 * PI / k;
        let start = -PI / 2.0 + PI / k;
        for _ in 0..MAX_POLYGON_RETRIES {
            let steps: Vec<f64> = (0..sides).map(|_| step * (1.0 + irregularity * rng.gen_range(-1.0..=1.0))).collect();
            let total: f64 = steps.iter().sum();
            let radii: Vec<f64> = (0..sides).map(|_| 1.0 + irregularity * rng.gen_range(-1.0..=1.0)).collect();
            let mut theta = start;
            let mut vertices = Vec::with_capacity(sides);
            for j in 0..sides {
                vertices.push(Vec2::new(radii[j] * theta.cos(), radii[j] * theta.sin()));
                theta += steps[j] * (2.0 * PI / total);
            }
            let raw_area = shoelace(&vertices);
            if raw_area <= 0.0 || !is_simple(&vertices) {
                continue;
            }
            let scale = (area / raw_area).sqrt();
            for v in &mut vertices {
                *v = *v * scale;
            }
            if let Ok(poly) = Polygon::new(vertices) {
                return Ok(poly);
            }
        }
        Err(Error::PolygonGeneration { retries: MAX_POLYGON_RETRIES })
    }

    pub fn translated(&self, by: Vec2) -> Self {
        Self { vertices: self.vertices.iter().map(|&v| v + by).collect() }
    }
}

/// O(k²) pairwise check that no two non-adjacent edges touch and adjacent
/// edges do not fold back onto each other.
pub fn is_simple(vertices: &[Vec2]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let edge = |k: usize| (vertices[k], vertices[(k + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        if a == b {
            return false;
        }
        for j in (i + 1)..n {
            let (c, d) = edge(j);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // shared vertex is fine, colinear backtracking is not
                let (shared, u, w) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                let du = u - shared;
                let dw = w - shared;
                if du.cross(dw) == 0.0 && du.dot(dw) > 0.0 {
                    return false;
                }
                if n == 3 {
                    continue;
                }
            } else if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}
