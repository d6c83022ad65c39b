//! Pixel-centre scanline fill.
//!
//! A pixel is covered iff its centre satisfies the shape's `contains`
//! predicate. Row spans are computed approximately and then snapped against
//! the predicate, which is exact for convex shapes.

use crate::geometry::{Ellipse, Vec2};

pub trait Shape {
    /// `(min_x, min_y, max_x, max_y)` in pixel coordinates.
    fn bbox(&self) -> (f64, f64, f64, f64);
    fn contains(&self, p: Vec2) -> bool;
    /// Approximate `[x_lo, x_hi]` intersection with the horizontal line at `y`.
    fn row_span(&self, y: f64) -> Option<(f64, f64)>;
}

impl Shape for Ellipse {
    fn bbox(&self) -> (f64, f64, f64, f64) {
        let (hx, hy) = self.half_extents();
        (self.cx - hx, self.cy - hy, self.cx + hx, self.cy + hy)
    }

    fn contains(&self, p: Vec2) -> bool {
        Ellipse::contains(self, p.x, p.y)
    }

    fn row_span(&self, y: f64) -> Option<(f64, f64)> {
        let (s, c) = self.phi.sin_cos();
        let ia = 1.0 / (self.a * self.a);
        let ib = 1.0 / (self.b * self.b);
        let qa = c * c * ia + s * s * ib;
        let qb = 2.0 * c * s * (ia - ib);
        let qc = s * s * ia + c * c * ib;
        let dy = y - self.cy;
        let lin = qb * dy;
        let disc = lin * lin - 4.0 * qa * (qc * dy * dy - 1.0);
        let root = disc.max(0.0).sqrt();
        let x0 = self.cx + (-lin - root) / (2.0 * qa);
        let x1 = self.cx + (-lin + root) / (2.0 * qa);
        Some((x0, x1))
    }
}

/// Convex polygon in pixel coordinates, either winding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
    sign: f64,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Vec2>) -> Self {
        let n = vertices.len();
        let area2: f64 = (0..n).map(|i| vertices[i].cross(vertices[(i + 1) % n])).sum();
        Self {
            vertices,
            sign: if area2 < 0.0 { -1.0 } else { 1.0 },
        }
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }
}

impl Shape for ConvexPolygon {
    fn bbox(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), v| (a.min(v.x), b.min(v.y), c.max(v.x), d.max(v.y)),
        )
    }

    fn contains(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            self.sign * (b - a).cross(p - a) >= 0.0
        })
    }

    fn row_span(&self, y: f64) -> Option<(f64, f64)> {
        let n = self.vertices.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let (ymin, ymax) = (a.y.min(b.y), a.y.max(b.y));
            if y < ymin || y > ymax {
                continue;
            }
            if a.y == b.y {
                lo = lo.min(a.x.min(b.x));
                hi = hi.max(a.x.max(b.x));
            } else {
                let t = ((y - a.y) / (b.y - a.y)).clamp(0.0, 1.0);
                let x = a.x + t * (b.x - a.x);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }
}

/// Calls `f(x, y)` for every covered pixel inside a `width × height` grid,
/// row by row, left to right.
pub fn fill<S: Shape + ?Sized>(shape: &S, width: u32, height: u32, mut f: impl FnMut(u32, u32)) {
    if width == 0 || height == 0 {
        return;
    }
    let (_, y0, _, y1) = shape.bbox();
    if !(y0.is_finite() && y1.is_finite()) {
        return;
    }
    let max_x = i64::from(width) - 1;
    let row_lo = (y0.floor() as i64 - 1).max(0);
    let row_hi = (y1.ceil() as i64 + 1).min(i64::from(height) - 1);
    for row in row_lo..=row_hi {
        let y = row as f64;
        let Some((xl, xr)) = shape.row_span(y) else {
            continue;
        };
        if !(xl.is_finite() && xr.is_finite()) {
            continue;
        }
        let mut l = (xl.floor() as i64 - 1).max(0);
        let mut r = (xr.ceil() as i64 + 1).min(max_x);
        while l <= r && !shape.contains(Vec2::new(l as f64, y)) {
            l += 1;
        }
        while r >= l && !shape.contains(Vec2::new(r as f64, y)) {
            r -= 1;
        }
        for x in l..=r {
            f(x as u32, row as u32);
        }
    }
}
