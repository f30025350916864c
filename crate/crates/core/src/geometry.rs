//! Planar geometry used by the world model, the planner and the mission traces.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("side length must be positive and finite, got {0}")]
    BadSide(f64),
    #[error("at least one sample is required")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector at `angle` radians.
    pub fn from_angle(angle: f64) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
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

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(angle: f64) -> f64 {
    if !angle.is_finite() {
        return angle;
    }
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Axis-aligned rectangle, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min: Point::new(min.x.min(max.x), min.y.min(max.y)), max: Point::new(min.x.max(max.x), min.y.max(max.y)) }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Interior test with a small tolerance, so points on the boundary are outside.
    pub fn contains_strict(&self, p: Point) -> bool {
        const EPS: f64 = 1e-9;
        p.x > self.min.x + EPS && p.x < self.max.x - EPS && p.y > self.min.y + EPS && p.y < self.max.y - EPS
    }

    pub fn inflate(&self, margin: f64) -> Rect {
        Rect { min: Point::new(self.min.x - margin, self.min.y - margin), max: Point::new(self.max.x + margin, self.max.y + margin) }
    }

    pub fn corners(&self) -> [Point; 4] {
        [self.min, Point::new(self.max.x, self.min.y), self.max, Point::new(self.min.x, self.max.y)]
    }

    /// Does segment `a`-`b` touch the closed rectangle? (Liang-Barsky clip.)
    pub fn intersects_segment(&self, a: Point, b: Point) -> bool {
        let d = b - a;
        let mut t0: f64 = 0.0;
        let mut t1: f64 = 1.0;
        let checks = [(-d.x, a.x - self.min.x), (d.x, self.max.x - a.x), (-d.y, a.y - self.min.y), (d.y, self.max.y - a.y)];
        for (p, q) in checks {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }

    /// Does the segment pass through the open interior?
    pub fn crosses_interior(&self, a: Point, b: Point) -> bool {
        const EPS: f64 = 1e-9;
        let shrunk = self.inflate(-EPS);
        if shrunk.min.x >= shrunk.max.x || shrunk.min.y >= shrunk.max.y {
            return false;
        }
        shrunk.intersects_segment(a, b)
    }
}

/// `n_samples` points equally spaced on a circle, starting on the +x axis and
/// running counter-clockwise.
pub fn trace_circle(center: Point, radius: f64, n_samples: usize) -> Result<Vec<Point>, GeometryError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(GeometryError::BadRadius(radius));
    }
    if n_samples == 0 {
        return Err(GeometryError::NoSamples);
    }
    let step = 2.0 * PI / n_samples as f64;
    Ok((0..n_samples).map(|k| center + Point::from_angle(step * k as f64) * radius).collect())
}

/// Corner waypoints of a square walked counter-clockwise from `origin`, first
/// leg along the origin heading. The last corner is the origin itself.
pub fn trace_square(origin: Pose2D, side: f64) -> Result<Vec<Point>, GeometryError> {
    if !(side.is_finite() && side > 0.0) {
        return Err(GeometryError::BadSide(side));
    }
    let o = origin.position();
    let local = [Point::new(side, 0.0), Point::new(side, side), Point::new(0.0, side)];
    let mut corners: Vec<Point> = local.iter().map(|p| o + p.rotate(origin.heading)).collect();
    corners.push(o);
    Ok(corners)
}

pub fn path_length(start: Point, waypoints: &[Point]) -> f64 {
    let mut prev = start;
    let mut total = 0.0;
    for &p in waypoints {
        total += prev.distance(p);
        prev = p;
    }
    total
}

/// Position plus heading in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: normalize_angle(heading) }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn with_position(&self, p: Point) -> Self {
        Self::new(p.x, p.y, self.heading)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }

    /// Point `distance` metres ahead along the heading.
    pub fn ahead(&self, distance: f64) -> Point {
        self.position() + Point::from_angle(self.heading) * distance
    }
}
