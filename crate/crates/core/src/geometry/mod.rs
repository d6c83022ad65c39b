//! Shared geometric primitives.
//!
//! Pixel coordinates place the centre of pixel `(col, row)` at `(col, row)`,
//! with `+y` pointing down the image. Simulator coordinates use the same axis
//! directions; angles are measured from `+x` toward `+y`.

mod mask;
mod moments;
mod similarity;

pub use mask::BinaryMask;
pub use moments::{fit_ellipse_moments, principal_axis, RegionMoments};
pub use similarity::{fit_similarity, SimilarityFit};

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("too few foreground pixels: need {needed}, got {got}")]
    TooFewPixels { needed: usize, got: usize },
    #[error("degenerate region: smallest second-moment eigenvalue {eigenvalue:e}")]
    DegenerateRegion { eigenvalue: f64 },
    #[error("point lists differ in length ({src} vs {dst})")]
    LengthMismatch { src: usize, dst: usize },
    #[error("need at least {needed} correspondences, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("source points are rank deficient (all coincide)")]
    RankDeficient,
}

/// A point or displacement in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at `angle` radians.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    pub fn perp(self) -> Self {
        Self { x: -self.y, y: self.x }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `[-π, π)`. Angles already in range are returned untouched.
pub fn wrap_angle(angle: f64) -> f64 {
    if (-PI..PI).contains(&angle) {
        return angle;
    }
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Wraps an axis direction (defined modulo π) into `[0, π)`.
pub fn wrap_axis(angle: f64) -> f64 {
    if (0.0..PI).contains(&angle) {
        return angle;
    }
    let w = angle.rem_euclid(PI);
    if w >= PI {
        0.0
    } else {
        w
    }
}

/// Ellipse given by centroid, major-axis orientation and semi-axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    /// Major-axis orientation in `[0, π)`.
    pub phi: f64,
    /// Semi-major axis.
    pub a: f64,
    /// Semi-minor axis.
    pub b: f64,
}

impl Ellipse {
    /// Builds an ellipse, swapping axes if needed so that `a >= b` and
    /// normalising `phi` into `[0, π)`.
    pub fn new(cx: f64, cy: f64, phi: f64, a: f64, b: f64) -> Self {
        let (a, b, phi) = if b > a { (b, a, phi + FRAC_PI_2) } else { (a, b, phi) };
        Self {
            cx,
            cy,
            phi: wrap_axis(phi),
            a,
            b,
        }
    }

    pub fn circle(cx: f64, cy: f64, r: f64) -> Self {
        Self::new(cx, cy, 0.0, r, r)
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.cx, self.cy)
    }

    pub fn with_center(mut self, c: Vec2) -> Self {
        self.cx = c.x;
        self.cy = c.y;
        self
    }

    /// Value of the normalised quadratic form; `<= 1` means inside.
    pub fn quadratic(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.phi.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u * u) / (self.a * self.a) + (v * v) / (self.b * self.b)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.quadratic(x, y) <= 1.0
    }

    pub fn is_valid(&self) -> bool {
        self.cx.is_finite()
            && self.cy.is_finite()
            && self.a.is_finite()
            && self.a >= self.b
            && self.b > 0.0
            && (0.0..PI).contains(&self.phi)
    }

    /// Axis-aligned half extents of the ellipse.
    pub fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        let hx = ((self.a * c).powi(2) + (self.b * s).powi(2)).sqrt();
        let hy = ((self.a * s).powi(2) + (self.b * c).powi(2)).sqrt();
        (hx, hy)
    }
}

/// `p ↦ scale · R(rot) · p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub tx: f64,
    pub ty: f64,
    pub rot: f64,
    pub scale: f64,
}

impl SimilarityTransform {
    pub const IDENTITY: SimilarityTransform = SimilarityTransform {
        tx: 0.0,
        ty: 0.0,
        rot: 0.0,
        scale: 1.0,
    };

    pub fn apply(&self, p: Vec2) -> Vec2 {
        p.rotate(self.rot) * self.scale + Vec2::new(self.tx, self.ty)
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv_scale = 1.0 / self.scale;
        let t = Vec2::new(-self.tx, -self.ty).rotate(-self.rot) * inv_scale;
        SimilarityTransform {
            tx: t.x,
            ty: t.y,
            rot: -self.rot,
            scale: inv_scale,
        }
    }

    /// Displacement the transform induces at `p`.
    pub fn displacement_at(&self, p: Vec2) -> Vec2 {
        self.apply(p) - p
    }
}

/// Yaw/pitch of the eye globe, each limited to the front hemisphere.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GlobeRotation {
    pub yaw: f64,
    pub pitch: f64,
}

impl GlobeRotation {
    pub fn new(yaw: f64, pitch: f64) -> Self {
        Self { yaw, pitch }.clamped()
    }

    pub fn clamped(self) -> Self {
        Self {
            yaw: self.yaw.clamp(-FRAC_PI_2, FRAC_PI_2),
            pitch: self.pitch.clamp(-FRAC_PI_2, FRAC_PI_2),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.yaw.abs() <= FRAC_PI_2 && self.pitch.abs() <= FRAC_PI_2
    }

    /// Projected displacement of a point on a sphere of `radius` in front of
    /// the rotation centre. `+yaw` moves image-right, `+pitch` image-up.
    pub fn displacement(&self, radius: f64) -> Vec2 {
        Vec2::new(radius * self.yaw.sin(), -radius * self.pitch.sin())
    }
}

/// Maps a pupil-centroid residual to globe yaw/pitch on a spherical cap of
/// radius `globe_radius_px`.
pub fn residual_to_rotation(residual: Vec2, globe_radius_px: f64) -> GlobeRotation {
    assert!(globe_radius_px > 0.0, "globe radius must be positive");
    let yaw = (residual.x / globe_radius_px).clamp(-1.0, 1.0).asin();
    let pitch = (-residual.y / globe_radius_px).clamp(-1.0, 1.0).asin();
    GlobeRotation { yaw, pitch }
}

/// Affine map between image pixels and simulator units.
///
/// Pixels are centred on the image and divided by half of the larger image
/// dimension, landing in `[-1, 1]²`, then multiplied by `sim_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinateMap {
    pub image_width: u32,
    pub image_height: u32,
    pub sim_scale: f64,
}

impl Default for CoordinateMap {
    fn default() -> Self {
        Self::square(128, 1.0)
    }
}

impl CoordinateMap {
    pub fn new(image_width: u32, image_height: u32, sim_scale: f64) -> Self {
        assert!(image_width > 0 && image_height > 0, "image dimensions must be positive");
        assert!(sim_scale > 0.0 && sim_scale.is_finite(), "sim_scale must be positive");
        Self {
            image_width,
            image_height,
            sim_scale,
        }
    }

    pub fn square(resolution: u32, sim_scale: f64) -> Self {
        Self::new(resolution, resolution, sim_scale)
    }

    fn half_extent(&self) -> f64 {
        f64::from(self.image_width.max(self.image_height)) / 2.0
    }

    fn center(&self) -> Vec2 {
        Vec2::new(f64::from(self.image_width) / 2.0, f64::from(self.image_height) / 2.0)
    }

    /// Pixels per simulator unit.
    pub fn pixels_per_unit(&self) -> f64 {
        self.half_extent() / self.sim_scale
    }

    pub fn image_to_sim(&self, p: Vec2) -> Vec2 {
        let c = self.center();
        let k = self.sim_scale / self.half_extent();
        Vec2::new((p.x - c.x) * k, (p.y - c.y) * k)
    }

    pub fn sim_to_image(&self, p: Vec2) -> Vec2 {
        let c = self.center();
        let k = self.half_extent() / self.sim_scale;
        Vec2::new(p.x * k + c.x, p.y * k + c.y)
    }

    /// Maps a displacement (no centring).
    pub fn image_vec_to_sim(&self, v: Vec2) -> Vec2 {
        v * (self.sim_scale / self.half_extent())
    }

    pub fn sim_vec_to_image(&self, v: Vec2) -> Vec2 {
        v * (self.half_extent() / self.sim_scale)
    }

    pub fn image_len_to_sim(&self, len: f64) -> f64 {
        len * self.sim_scale / self.half_extent()
    }

    pub fn sim_len_to_image(&self, len: f64) -> f64 {
        len * self.half_extent() / self.sim_scale
    }

    pub fn ellipse_to_sim(&self, e: &Ellipse) -> Ellipse {
        let c = self.image_to_sim(e.center());
        Ellipse {
            cx: c.x,
            cy: c.y,
            phi: e.phi,
            a: self.image_len_to_sim(e.a),
            b: self.image_len_to_sim(e.b),
        }
    }

    pub fn ellipse_to_image(&self, e: &Ellipse) -> Ellipse {
        let c = self.sim_to_image(e.center());
        Ellipse {
            cx: c.x,
            cy: c.y,
            phi: e.phi,
            a: self.sim_len_to_image(e.a),
            b: self.sim_len_to_image(e.b),
        }
    }

    /// Simulator-space rectangle covered by the image.
    pub fn image_bounds(&self) -> Bounds {
        let lo = self.image_to_sim(Vec2::ZERO);
        let hi = self.image_to_sim(Vec2::new(f64::from(self.image_width), f64::from(self.image_height)));
        Bounds { min: lo, max: hi }
    }
}

/// Axis-aligned rectangle in simulator space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min.x < self.max.x && self.min.y < self.max.y
    }

    /// Distance from `origin` (assumed inside) to the boundary along `dir`.
    pub fn ray_exit(&self, origin: Vec2, dir: Vec2) -> f64 {
        let mut t = f64::INFINITY;
        if dir.x > 0.0 {
            t = t.min((self.max.x - origin.x) / dir.x);
        } else if dir.x < 0.0 {
            t = t.min((self.min.x - origin.x) / dir.x);
        }
        if dir.y > 0.0 {
            t = t.min((self.max.y - origin.y) / dir.y);
        } else if dir.y < 0.0 {
            t = t.min((self.min.y - origin.y) / dir.y);
        }
        t
    }
}
