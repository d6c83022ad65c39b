//! Brute-force reference implementations shared by integration tests.

#![allow(dead_code)]

use phacosim_core::geometry::Vec2;
use phacosim_core::renderer::{FlowField, LabelRaster};
use rand::Rng;

/// Classes drawn by [`random_raster`]; includes one id outside the default
/// feature vocabulary.
pub const RANDOM_CLASSES: [u8; 7] = [1, 2, 3, 10, 11, 12, 7];

/// Random rectangles and discs painted over background, plus salt noise.
pub fn random_raster(rng: &mut impl Rng, w: u32, h: u32) -> LabelRaster {
    let mut r = LabelRaster::new(w, h);
    for _ in 0..rng.random_range(1..12) {
        let class = RANDOM_CLASSES[rng.random_range(0..RANDOM_CLASSES.len())];
        let (cx, cy) = (rng.random_range(0..w) as i64, rng.random_range(0..h) as i64);
        let (rx, ry) = (rng.random_range(1..w / 4) as i64, rng.random_range(1..h / 4) as i64);
        let disc = rng.random_bool(0.5);
        for y in (cy - ry).max(0)..=(cy + ry).min(h as i64 - 1) {
            for x in (cx - rx).max(0)..=(cx + rx).min(w as i64 - 1) {
                let (dx, dy) = ((x - cx) as f64 / rx as f64, (y - cy) as f64 / ry as f64);
                if !disc || dx * dx + dy * dy <= 1.0 {
                    r.set(x as u32, y as u32, class);
                }
            }
        }
    }
    for _ in 0..rng.random_range(0..(w * h / 16)) {
        let class = if rng.random_bool(0.3) {
            0
        } else {
            RANDOM_CLASSES[rng.random_range(0..RANDOM_CLASSES.len())]
        };
        r.set(rng.random_range(0..w), rng.random_range(0..h), class);
    }
    r
}

pub fn random_flow(rng: &mut impl Rng, w: u32, h: u32) -> FlowField {
    let mut f = FlowField::zeros(w, h);
    for (u, v) in f.u.iter_mut().zip(f.v.iter_mut()) {
        *u = rng.random_range(-3.0..3.0);
        *v = rng.random_range(-3.0..3.0);
    }
    f
}

#[derive(Debug, Clone)]
pub struct OracleNode {
    pub class_id: u8,
    pub centroid: Vec2,
    pub sx: f64,
    pub sy: f64,
    pub mean_flow: Vec2,
    pub pixel_count: u64,
    pub pixels: Vec<(u32, u32)>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Union-find 8-connected labeling with two-pass statistics, sorted by
/// class, centroid y, centroid x, pixel count, spread and first pixel.
pub fn oracle_nodes(raster: &LabelRaster, flow: &FlowField) -> Vec<OracleNode> {
    let (w, h) = (raster.width as usize, raster.height as usize);
    let mut parent: Vec<usize> = (0..w * h).collect();
    for y in 0..h {
        for x in 0..w {
            let c = raster.labels[y * w + x];
            if c == 0 {
                continue;
            }
            for (dx, dy) in [(-1i64, -1i64), (0, -1), (1, -1), (-1, 0)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 {
                    continue;
                }
                let q = ny as usize * w + nx as usize;
                if raster.labels[q] == c {
                    let (a, b) = (find(&mut parent, y * w + x), find(&mut parent, q));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<(u32, u32)>> = Default::default();
    for p in 0..w * h {
        if raster.labels[p] != 0 {
            let root = find(&mut parent, p);
            groups.entry(root).or_default().push(((p % w) as u32, (p / w) as u32));
        }
    }
    let mut nodes: Vec<OracleNode> = groups
        .into_values()
        .map(|pixels| {
            let n = pixels.len() as f64;
            let mx = pixels.iter().map(|p| f64::from(p.0)).sum::<f64>() / n;
            let my = pixels.iter().map(|p| f64::from(p.1)).sum::<f64>() / n;
            let vx = pixels.iter().map(|p| (f64::from(p.0) - mx).powi(2)).sum::<f64>() / n;
            let vy = pixels.iter().map(|p| (f64::from(p.1) - my).powi(2)).sum::<f64>() / n;
            let fu = pixels.iter().map(|p| flow.get(p.0, p.1).x).sum::<f64>() / n;
            let fv = pixels.iter().map(|p| flow.get(p.0, p.1).y).sum::<f64>() / n;
            OracleNode {
                class_id: raster.get(pixels[0].0, pixels[0].1),
                centroid: Vec2::new(mx, my),
                sx: vx.sqrt(),
                sy: vy.sqrt(),
                mean_flow: Vec2::new(fu, fv),
                pixel_count: pixels.len() as u64,
                pixels,
            }
        })
        .collect();
    nodes.sort_by(|a, b| {
        a.class_id
            .cmp(&b.class_id)
            .then(a.centroid.y.total_cmp(&b.centroid.y))
            .then(a.centroid.x.total_cmp(&b.centroid.x))
            .then(a.pixel_count.cmp(&b.pixel_count))
            .then(a.sx.total_cmp(&b.sx))
            .then(a.sy.total_cmp(&b.sy))
            .then((a.pixels[0].1, a.pixels[0].0).cmp(&(b.pixels[0].1, b.pixels[0].0)))
    });
    nodes
}

/// Largest absolute attribute difference between a graph and the oracle,
/// or an error message on a structural mismatch.
pub fn max_oracle_error(graph: &phacosim_core::scenegraph::SceneGraph, oracle: &[OracleNode]) -> Result<f64, String> {
    if graph.nodes.len() != oracle.len() {
        return Err(format!("{} nodes, oracle has {}", graph.nodes.len(), oracle.len()));
    }
    let mut worst = 0.0f64;
    for (n, o) in graph.nodes.iter().zip(oracle) {
        if n.class_id != o.class_id || n.pixel_count != o.pixel_count {
            return Err(format!(
                "node {} differs: {:?} vs class {} count {}",
                n.node_id, n, o.class_id, o.pixel_count
            ));
        }
        for d in [
            n.centroid.x - o.centroid.x,
            n.centroid.y - o.centroid.y,
            n.spread.sx - o.sx,
            n.spread.sy - o.sy,
            n.mean_flow.x - o.mean_flow.x,
            n.mean_flow.y - o.mean_flow.y,
        ] {
            worst = worst.max(d.abs());
        }
    }
    Ok(worst)
}

/// Contact by direct pixel scan: some pixel of `a` has an 8-neighbour in `b`.
pub fn oracle_contact(a: &OracleNode, b: &OracleNode) -> bool {
    let set: std::collections::HashSet<(u32, u32)> = b.pixels.iter().copied().collect();
    a.pixels.iter().any(|&(x, y)| {
        (-1i64..=1).any(|dy| {
            (-1i64..=1).any(|dx| {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                nx >= 0 && ny >= 0 && set.contains(&(nx as u32, ny as u32))
            })
        })
    })
}

pub mod fuzz;
pub mod similarity;
