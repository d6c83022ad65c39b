//! Landmark cases for the similarity fit and a grid-search reference solver.

use std::f64::consts::PI;

use phacosim_core::geometry::{SimilarityTransform, Vec2};
use rand::Rng;

pub struct SimilarityCase {
    pub src: Vec<Vec2>,
    pub dst: Vec<Vec2>,
    pub truth: SimilarityTransform,
}

pub fn random_transform(rng: &mut impl Rng) -> SimilarityTransform {
    SimilarityTransform {
        tx: rng.random_range(-5.0..5.0),
        ty: rng.random_range(-5.0..5.0),
        rot: rng.random_range(-PI..PI),
        scale: rng.random_range(0.6..1.6),
    }
}

/// `k` landmarks in a 20×20 box around the origin mapped exactly by a random
/// similarity.
pub fn exact_case(rng: &mut impl Rng, k: usize) -> SimilarityCase {
    let src: Vec<Vec2> = (0..k)
        .map(|_| Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)))
        .collect();
    let truth = random_transform(rng);
    let dst = src.iter().map(|&p| truth.apply(p)).collect();
    SimilarityCase { src, dst, truth }
}

/// Exact case with small jitter on every landmark and one gross outlier.
pub fn noisy_case(rng: &mut impl Rng, k: usize) -> SimilarityCase {
    let mut c = exact_case(rng, k);
    for p in &mut c.dst {
        *p = *p + Vec2::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
    }
    let i = rng.random_range(0..k);
    c.dst[i] = c.dst[i] + Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    c
}

pub fn sse(src: &[Vec2], dst: &[Vec2], t: &SimilarityTransform) -> f64 {
    src.iter()
        .zip(dst)
        .map(|(&s, &d)| {
            let r = t.apply(s) - d;
            r.dot(r)
        })
        .sum()
}

/// Minimises the squared residual over (tx, ty, rot, scale) by repeatedly
/// evaluating an 11⁴ grid and shrinking it around the best node.
pub fn grid_search_similarity(src: &[Vec2], dst: &[Vec2]) -> SimilarityTransform {
    const SIDE: i32 = 5;
    let mut centre = [0.0, 0.0, 0.0, 1.1];
    let mut half = [20.0, 20.0, PI, 0.9];
    let at = |p: [f64; 4]| SimilarityTransform {
        tx: p[0],
        ty: p[1],
        rot: p[2],
        scale: p[3],
    };
    while half.iter().any(|&h| h > 1e-7) {
        let step = half.map(|h| h / f64::from(SIDE));
        let mut best = (f64::INFINITY, centre);
        for i in -SIDE..=SIDE {
            for j in -SIDE..=SIDE {
                for k in -SIDE..=SIDE {
                    for l in -SIDE..=SIDE {
                        let p = [
                            centre[0] + f64::from(i) * step[0],
                            centre[1] + f64::from(j) * step[1],
                            centre[2] + f64::from(k) * step[2],
                            centre[3] + f64::from(l) * step[3],
                        ];
                        let e = sse(src, dst, &at(p));
                        if e < best.0 {
                            best = (e, p);
                        }
                    }
                }
            }
        }
        centre = best.1;
        half = step.map(|s| 2.0 * s);
    }
    at(centre)
}

/// Largest parameter difference, with rotation compared on the circle.
pub fn param_distance(a: &SimilarityTransform, b: &SimilarityTransform) -> f64 {
    let drot = phacosim_core::geometry::wrap_angle(a.rot - b.rot).abs();
    (a.tx - b.tx)
        .abs()
        .max((a.ty - b.ty).abs())
        .max(drot)
        .max((a.scale - b.scale).abs())
}
