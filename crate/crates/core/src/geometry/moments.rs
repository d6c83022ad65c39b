use super::{wrap_axis, BinaryMask, Ellipse, GeometryError, Vec2};

/// Smallest eigenvalue accepted before a region is declared collinear.
pub const DEGENERATE_EIGENVALUE: f64 = 1e-12;

/// Zeroth, first and central second moments of a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMoments {
    pub count: usize,
    pub mean: Vec2,
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
}

impl RegionMoments {
    /// Two-pass moments; `None` for an empty set.
    pub fn from_points<I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = Vec2>,
        I::IntoIter: Clone,
    {
        let iter = points.into_iter();
        let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
        for p in iter.clone() {
            n += 1;
            sx += p.x;
            sy += p.y;
        }
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let mean = Vec2::new(sx / nf, sy / nf);
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in iter {
            let dx = p.x - mean.x;
            let dy = p.y - mean.y;
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        Some(Self {
            count: n,
            mean,
            sxx: sxx / nf,
            sxy: sxy / nf,
            syy: syy / nf,
        })
    }

    pub fn from_mask(mask: &BinaryMask) -> Option<Self> {
        Self::from_points(mask.foreground_points())
    }

    /// Eigenvalues of the covariance, larger first.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mid = 0.5 * (self.sxx + self.syy);
        let half_diff = 0.5 * (self.sxx - self.syy);
        let r = half_diff.hypot(self.sxy);
        (mid + r, mid - r)
    }

    /// Orientation of the major principal axis in `[0, π)`.
    pub fn axis_angle(&self) -> f64 {
        wrap_axis(0.5 * (2.0 * self.sxy).atan2(self.sxx - self.syy))
    }
}

/// Principal axis angle (in `[0, π)`) of a point set.
pub fn principal_axis<I>(points: I) -> Option<f64>
where
    I: IntoIterator<Item = Vec2>,
    I::IntoIter: Clone,
{
    RegionMoments::from_points(points).map(|m| m.axis_angle())
}

/// Fits the ellipse whose second central moments equal those of the mask.
///
/// Semi-axes are `2·sqrt(eigenvalue)`, so a filled ellipse fits itself.
pub fn fit_ellipse_moments(mask: &BinaryMask) -> Result<Ellipse, GeometryError> {
    let got = mask.count();
    if got < 5 {
        return Err(GeometryError::TooFewPixels { needed: 5, got });
    }
    let m = RegionMoments::from_mask(mask).expect("non-empty mask");
    let (l1, l2) = m.eigenvalues();
    if l2 < DEGENERATE_EIGENVALUE {
        return Err(GeometryError::DegenerateRegion { eigenvalue: l2 });
    }
    Ok(Ellipse {
        cx: m.mean.x,
        cy: m.mean.y,
        phi: m.axis_angle(),
        a: 2.0 * l1.sqrt(),
        b: 2.0 * l2.sqrt(),
    })
}
