//! Planar geometry helpers: points, polylines and oriented rectangles.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A point or vector in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Rotates by +90 degrees.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Point {
        let n = self.norm();
        Point::new(self.x / n, self.y / n)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

/// A piecewise-linear curve parameterized by arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point>,
    cumulative: Vec<f64>,
}

impl Polyline {
    /// Builds a polyline, dropping consecutive duplicate vertices.
    ///
    /// Panics if fewer than two distinct vertices remain.
    pub fn new(points: Vec<Point>) -> Self {
        let mut pts: Vec<Point> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().is_none_or(|q: &Point| (p - *q).norm() > 1e-9) {
                pts.push(p);
            }
        }
        assert!(pts.len() >= 2, "polyline needs at least two distinct points");
        let mut cumulative = Vec::with_capacity(pts.len());
        cumulative.push(0.0);
        for w in pts.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + (w[1] - w[0]).norm());
        }
        Self {
            points: pts,
            cumulative,
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Position and unit tangent at arc length `s`, clamped to the ends.
    pub fn pose_at(&self, s: f64) -> (Point, Point) {
        let s = s.clamp(0.0, self.length());
        let seg = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        };
        let a = self.points[seg];
        let b = self.points[seg + 1];
        let seg_len = self.cumulative[seg + 1] - self.cumulative[seg];
        let dir = (b - a) * (1.0 / seg_len);
        (a + dir * (s - self.cumulative[seg]), dir)
    }
}

/// A rectangle with arbitrary heading, used for vehicle footprints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Point,
    /// Unit vector along the rectangle's length.
    pub heading: Point,
    pub length: f64,
    pub width: f64,
}

/// Overlaps thinner than this are treated as touching.
pub const CONTACT_TOLERANCE: f64 = 1e-9;

impl OrientedRect {
    pub fn corners(&self) -> [Point; 4] {
        let h = self.heading * (self.length / 2.0);
        let n = self.heading.perp() * (self.width / 2.0);
        [
            self.center + h + n,
            self.center + h - n,
            self.center - h - n,
            self.center - h + n,
        ]
    }

    /// Interval covered by the rectangle when projected onto `axis`.
    pub fn project(&self, axis: Point) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in self.corners() {
            let p = c.dot(axis);
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }

    /// True when the two rectangles share a region of strictly positive area.
    ///
    /// Separating-axis test over the four edge normals. Rectangles that only
    /// touch along an edge or at a corner do not overlap.
    pub fn overlaps(&self, other: &OrientedRect) -> bool {
        let axes = [
            self.heading,
            self.heading.perp(),
            other.heading,
            other.heading.perp(),
        ];
        axes.iter().all(|&axis| {
            let (a0, a1) = self.project(axis);
            let (b0, b1) = other.project(axis);
            a1.min(b1) - a0.max(b0) > CONTACT_TOLERANCE
        })
    }
}
