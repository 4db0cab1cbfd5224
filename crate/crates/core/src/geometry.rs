//! Planar primitives: points, axis-aligned rectangles, similarity transforms,
//! and the rasterization helpers used by features and pose maps.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// A location in pixel coordinates; pixel `(col, row)` has its center at `(col, row)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    /// Nearest integer pixel `(col, row)`.
    pub fn round(self) -> (i64, i64) {
        (self.x.round() as i64, self.y.round() as i64)
    }
}

/// Unsigned angle between two vectors in `[0, π]`; zero if either vector is zero.
pub fn angle_between(a: Point, b: Point) -> f64 {
    a.cross(b).abs().atan2(a.dot(b))
}

/// Euclidean distance from `p` to the closed segment `a`–`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab.scale(t))
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

/// Axis-aligned rectangle `[x, x + w] × [y, y + h]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Tight box around a non-empty point set.
    pub fn bounding(points: impl IntoIterator<Item = Point>) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
        for p in it {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        Some(Rect::from_corners(x0, y0, x1, y1))
    }

    pub fn x1(&self) -> f64 {
        self.x + self.w
    }

    pub fn y1(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x <= self.x1() && p.y >= self.y && p.y <= self.y1()
    }

    pub fn intersect(&self, o: &Rect) -> Option<Rect> {
        let x0 = self.x.max(o.x);
        let y0 = self.y.max(o.y);
        let x1 = self.x1().min(o.x1());
        let y1 = self.y1().min(o.y1());
        (x1 >= x0 && y1 >= y0).then(|| Rect::from_corners(x0, y0, x1, y1))
    }

    pub fn expand(&self, dx: f64, dy: f64) -> Rect {
        Rect::new(self.x - dx, self.y - dy, self.w + 2.0 * dx, self.h + 2.0 * dy)
    }

    /// Area intersection-over-union. Two degenerate boxes count as fully
    /// overlapping only when they coincide.
    pub fn iou(&self, o: &Rect) -> f64 {
        let inter = self.intersect(o).map_or(0.0, |r| r.area());
        let union = self.area() + o.area() - inter;
        if union <= 0.0 {
            return if self == o { 1.0 } else { 0.0 };
        }
        inter / union
    }
}

/// Uniform scale plus translation: `scene = origin + region * step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub origin: Point,
    /// Scene pixels per region pixel.
    pub step: f64,
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity {
        origin: Point::new(0.0, 0.0),
        step: 1.0,
    };

    pub fn apply(&self, p: Point) -> Point {
        self.origin + p.scale(self.step)
    }

    pub fn invert(&self, p: Point) -> Point {
        (p - self.origin).scale(1.0 / self.step)
    }
}

/// Integer midpoint line walk from `a` to `b`, endpoints inclusive.
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push((x, y));
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// Rectangle with one axis along the segment `a`–`b` and the given full width.
#[derive(Debug, Clone, Copy)]
pub struct OrientedRect {
    pub a: Point,
    pub b: Point,
    pub width: f64,
}

impl OrientedRect {
    pub fn contains(&self, p: Point) -> bool {
        let axis = self.b - self.a;
        let len = axis.norm();
        let rel = p - self.a;
        if len == 0.0 {
            return rel.norm() <= self.width / 2.0;
        }
        let along = rel.dot(axis) / len;
        let across = rel.cross(axis).abs() / len;
        // Tolerance keeps axis-aligned pixel rows on the boundary inside.
        const EPS: f64 = 1e-9;
        along >= -EPS && along <= len + EPS && across <= self.width / 2.0 + EPS
    }

    /// Axis-aligned hull.
    pub fn bounds(&self) -> Rect {
        let axis = self.b - self.a;
        let len = axis.norm();
        let n = if len > 0.0 {
            Point::new(-axis.y / len, axis.x / len).scale(self.width / 2.0)
        } else {
            Point::new(self.width / 2.0, self.width / 2.0)
        };
        Rect::bounding([self.a + n, self.a - n, self.b + n, self.b - n]).expect("non-empty")
    }
}

/// Even-odd point-in-polygon test; points on an edge count as inside.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    for i in 0..n {
        if point_segment_distance(p, poly[i], poly[(i + 1) % n]) < 1e-9 {
            return true;
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi.y > p.y) != (pj.y > p.y) {
            let x = pj.x + (p.y - pj.y) * (pi.x - pj.x) / (pi.y - pj.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}
