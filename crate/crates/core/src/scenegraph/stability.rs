//! Sensitivity of node attributes to one-pixel boundary changes.

use serde::{Deserialize, Serialize};

use super::{label_components, RegionSums, Spread};
use crate::geometry::Vec2;
use crate::renderer::LabelRaster;

/// One-pixel structuring element: the pixel and its 4-neighbours. Erosion
/// with it removes exactly the inner boundary of an 8-connected component.
const CROSS: [(i64, i64); 5] = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)];

/// Attribute change of one component under one-pixel erosion and dilation.
///
/// Shifts are Euclidean for the centroid and the larger per-axis change for
/// the spread. `eroded` is `None` when erosion removes the whole component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryShift {
    pub class_id: u8,
    pub pixel_count: u64,
    pub eroded: Option<(f64, f64)>,
    pub dilated: (f64, f64),
}

impl BoundaryShift {
    pub fn max_centroid_shift(&self) -> f64 {
        self.eroded.map_or(0.0, |e| e.0).max(self.dilated.0)
    }

    pub fn max_spread_shift(&self) -> f64 {
        self.eroded.map_or(0.0, |e| e.1).max(self.dilated.1)
    }
}

fn shift(base: &RegionSums, other: &RegionSums) -> (f64, f64) {
    let (s0, s1): (Spread, Spread) = (base.spread(), other.spread());
    let dc: Vec2 = other.centroid() - base.centroid();
    (dc.norm(), (s1.sx - s0.sx).abs().max((s1.sy - s0.sy).abs()))
}

/// Measures every component of at least `min_pixels` pixels in isolation:
/// the component is eroded and dilated with [`CROSS`], ignoring the
/// other classes, and clipped to the raster.
pub fn boundary_shift(raster: &LabelRaster, min_pixels: u64) -> Vec<BoundaryShift> {
    let comps = label_components(raster, None);
    let (w, h) = (raster.width as i64, raster.height as i64);
    let inside =
        |id: u32, x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && comps.index[(y * w + x) as usize] == id;

    let mut bbox = vec![(i64::MAX, i64::MAX, i64::MIN, i64::MIN); comps.classes.len()];
    for (p, &id) in comps.index.iter().enumerate() {
        if id != u32::MAX {
            let (x, y) = (p as i64 % w, p as i64 / w);
            let b = &mut bbox[id as usize];
            *b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
        }
    }

    let mut out = Vec::new();
    for (id, base) in comps.sums.iter().enumerate() {
        if base.n < min_pixels {
            continue;
        }
        let id32 = id as u32;
        let (x0, y0, x1, y1) = bbox[id];
        let (mut eroded, mut dilated) = (RegionSums::default(), RegionSums::default());
        for y in (y0 - 1).max(0)..=(y1 + 1).min(h - 1) {
            for x in (x0 - 1).max(0)..=(x1 + 1).min(w - 1) {
                let mut all = true;
                let mut any = false;
                for (dx, dy) in CROSS {
                    let hit = inside(id32, x + dx, y + dy);
                    all &= hit;
                    any |= hit;
                }
                if all {
                    eroded.add(x as u32, y as u32);
                }
                if any {
                    dilated.add(x as u32, y as u32);
                }
            }
        }
        out.push(BoundaryShift {
            class_id: comps.classes[id],
            pixel_count: base.n,
            eroded: (eroded.n > 0).then(|| shift(base, &eroded)),
            dilated: shift(base, &dilated),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_shrinks_and_grows_symmetrically() {
        let mut r = LabelRaster::new(20, 20);
        for y in 5..15 {
            for x in 5..15 {
                r.set(x, y, 2);
            }
        }
        let s = boundary_shift(&r, 100);
        assert_eq!(s.len(), 1);
        let (ec, es) = s[0].eroded.unwrap();
        let (dc, ds) = s[0].dilated;
        assert!(ec < 1e-12 && dc < 1e-12);
        // Erosion leaves the 8×8 core; sd of 0..n is sqrt((n²−1)/12).
        let sd = |n: f64| ((n * n - 1.0) / 12.0).sqrt();
        assert!((es - (sd(10.0) - sd(8.0))).abs() < 1e-12);
        // Dilation adds four 10-pixel strips at offsets ±5.5 from the centre.
        let var = (100.0 * sd(10.0).powi(2) + 20.0 * 5.5f64.powi(2) + 20.0 * sd(10.0).powi(2)) / 140.0;
        assert!((ds - (var.sqrt() - sd(10.0))).abs() < 1e-12);
    }

    #[test]
    fn thin_line_erodes_away_and_small_components_skip() {
        let mut r = LabelRaster::new(40, 10);
        for x in 0..30 {
            r.set(x, 2, 10);
        }
        r.set(35, 8, 3);
        let s = boundary_shift(&r, 5);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].eroded, None);
        assert!(s[0].dilated.0 < 0.6);
    }

    #[test]
    fn border_component_clips() {
        let mut r = LabelRaster::new(12, 12);
        for y in 0..12 {
            for x in 0..12 {
                r.set(x, y, 1);
            }
        }
        let s = boundary_shift(&r, 100);
        assert_eq!(s[0].dilated, (0.0, 0.0));
        assert!(s[0].eroded.unwrap().0 < 1e-12);
    }
}
