//! 2D geometry primitives shared by the site map, mobility and tracer.

use core::ops::{Add, Mul, Sub};

use crate::math;

/// A point or vector in the horizontal plane, in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        math::hypot(self.x, self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// A 1 m × 1 m map pixel. Pixel `(i, j)` covers `[i-1, i] × [j-1, j]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pixel {
    pub x: i64,
    pub y: i64,
}

impl Pixel {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn center(self) -> Point {
        Point::new(self.x as f64 - 0.5, self.y as f64 - 0.5)
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// Closed containment (boundary counts as inside).
    pub fn contains_closed(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    /// Open containment (boundary does not count).
    pub fn contains_open(&self, p: Point) -> bool {
        p.x > self.x0 && p.x < self.x1 && p.y > self.y0 && p.y < self.y1
    }

    /// Does the open segment `(a, b)` pass through the open interior?
    ///
    /// Computes the parameter interval on which the segment lies strictly
    /// inside the rectangle. Touching an edge or a corner is not a crossing;
    /// overlaps shorter than `1e-9` of the segment are treated as touching so
    /// that rays reflected exactly on a facade are not blocked by round-off.
    pub fn crosses_interior(&self, a: Point, b: Point) -> bool {
        const EPS: f64 = 1e-9;
        let d = b - a;
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        for (p, dp, min, max) in [(a.x, d.x, self.x0, self.x1), (a.y, d.y, self.y0, self.y1)] {
            if dp == 0.0 {
                if p <= min || p >= max {
                    return false;
                }
            } else {
                let t0 = (min - p) / dp;
                let t1 = (max - p) / dp;
                let (t0, t1) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                lo = lo.max(t0);
                hi = hi.min(t1);
            }
        }
        hi - lo > EPS
    }
}

/// One facade of a building.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Wall {
    pub a: Point,
    pub b: Point,
    /// Unit normal pointing out of the building.
    pub normal: Point,
}

impl Wall {
    /// Builds a wall from its endpoints; the outward normal is the left-hand
    /// normal of `a → b` when `outward_left` is set, the right-hand otherwise.
    pub fn new(a: Point, b: Point, outward_left: bool) -> Option<Self> {
        let d = b - a;
        let len = d.norm();
        if len == 0.0 {
            return None;
        }
        let left = Point::new(-d.y / len, d.x / len);
        let normal = if outward_left { left } else { left * -1.0 };
        Some(Self { a, b, normal })
    }

    /// Signed distance of `p` from the wall line, positive on the outside.
    pub fn side(&self, p: Point) -> f64 {
        (p - self.a).dot(self.normal)
    }

    /// Intersection of the line through `p`, `q` with the wall line, as a
    /// parameter along the wall (`0` at `a`, `1` at `b`) and the point.
    pub fn intersect_line(&self, p: Point, q: Point) -> Option<(f64, Point)> {
        let d = q - p;
        let w = self.b - self.a;
        let denom = d.cross(w);
        if denom == 0.0 {
            return None;
        }
        // p + t d = a + s w
        let s = (self.a - p).cross(d) / denom;
        let mut pt = self.a + w * s;
        // Snap onto axis-aligned walls so the point sits exactly on the facade.
        if w.x == 0.0 {
            pt.x = self.a.x;
        }
        if w.y == 0.0 {
            pt.y = self.a.y;
        }
        Some((s, pt))
    }
}

/// Reflection of `p` across the infinite line containing `wall`.
pub fn mirror_across(wall: &Wall, p: Point) -> Point {
    let s = wall.side(p);
    p - wall.normal * (2.0 * s)
}
