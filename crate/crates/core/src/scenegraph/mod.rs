//! Scene graphs over label rasters.
//!
//! Every 8-connected component of a non-background class becomes a node
//! carrying its centroid, per-axis standard deviation, mean optical flow and
//! pixel count. Edges connect every ordered pair of distinct nodes.

mod features;
mod stability;
mod triplets;

pub use features::{graph_features, FeatureLayout, GraphFeatures, FEATURE_LAYOUT_VERSION};
pub use stability::{boundary_shift, BoundaryShift};
pub use triplets::{default_class_names, graph_triplets, relation, Relation};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::renderer::{FlowField, LabelRaster, BACKGROUND};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SceneGraphError {
    #[error("raster is {raster:?} but flow is {flow:?}")]
    DimensionMismatch { raster: (u32, u32), flow: (u32, u32) },
    #[error("graph has {nodes} nodes, capacity is {capacity}")]
    CapacityExceeded { nodes: usize, capacity: usize },
    #[error("class id {0} has no entry")]
    UnknownClassId(u8),
}

/// Per-axis population standard deviation in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Spread {
    pub sx: f64,
    pub sy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneNode {
    pub node_id: u32,
    pub class_id: u8,
    pub centroid: Vec2,
    pub spread: Spread,
    pub mean_flow: Vec2,
    pub pixel_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEdge {
    pub src: u32,
    pub dst: u32,
    /// `centroid(dst) − centroid(src)`.
    pub relative_offset: Vec2,
    pub contact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub frame_index: u64,
    pub width: u32,
    pub height: u32,
    pub nodes: Vec<SceneNode>,
    pub edges: Vec<SceneEdge>,
}

impl SceneGraph {
    pub fn node(&self, id: u32) -> Option<&SceneNode> {
        self.nodes.get(id as usize)
    }

    /// Re-sorts nodes into canonical order, renumbering ids and edges.
    pub fn canonicalize(&mut self) {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by(|&i, &j| node_order(&self.nodes[i], &self.nodes[j]));
        let mut remap = vec![0u32; self.nodes.len()];
        for (r, &i) in order.iter().enumerate() {
            remap[self.nodes[i].node_id as usize] = r as u32;
        }
        let old = std::mem::take(&mut self.nodes);
        self.nodes = order
            .iter()
            .enumerate()
            .map(|(r, &i)| SceneNode {
                node_id: r as u32,
                ..old[i].clone()
            })
            .collect();
        for e in &mut self.edges {
            e.src = remap[e.src as usize];
            e.dst = remap[e.dst as usize];
        }
        self.edges.sort_by_key(|e| (e.src, e.dst));
    }

    pub fn edge(&self, src: u32, dst: u32) -> Option<&SceneEdge> {
        // Edges are stored in (src, dst) order with self pairs skipped.
        let n = self.nodes.len() as u32;
        if src == dst || src >= n || dst >= n {
            return None;
        }
        let idx = src * (n - 1) + if dst > src { dst - 1 } else { dst };
        self.edges.get(idx as usize)
    }
}

/// Exact running sums over a pixel set.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct RegionSums {
    pub n: u64,
    pub sx: u64,
    pub sy: u64,
    pub sxx: u64,
    pub syy: u64,
    pub fu: f64,
    pub fv: f64,
    /// Smallest row-major pixel index, used as the final ordering tie-break.
    pub first: usize,
}

impl RegionSums {
    pub fn add(&mut self, x: u32, y: u32) {
        let (x, y) = (u64::from(x), u64::from(y));
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.n as f64;
        Vec2::new(self.sx as f64 / n, self.sy as f64 / n)
    }

    pub fn spread(&self) -> Spread {
        // n·Σx² − (Σx)² is an exact integer, so the only rounding is the final division.
        let var = |s: u64, ss: u64| {
            let n = i128::from(self.n);
            let num = n * i128::from(ss) - i128::from(s) * i128::from(s);
            (num as f64 / (n * n) as f64).max(0.0).sqrt()
        };
        Spread {
            sx: var(self.sx, self.sxx),
            sy: var(self.sy, self.syy),
        }
    }
}

/// Component index per pixel (`u32::MAX` for background) and per-component
/// class and sums, in discovery order.
pub(crate) struct Components {
    pub index: Vec<u32>,
    pub classes: Vec<u8>,
    pub sums: Vec<RegionSums>,
}

pub(crate) fn label_components(raster: &LabelRaster, flow: Option<&FlowField>) -> Components {
    let (w, h) = (raster.width as usize, raster.height as usize);
    let mut index = vec![u32::MAX; w * h];
    let mut classes = Vec::new();
    let mut sums = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        let class = raster.labels[start];
        if class == BACKGROUND || index[start] != u32::MAX {
            continue;
        }
        let id = classes.len() as u32;
        let mut acc = RegionSums {
            first: start,
            ..RegionSums::default()
        };
        index[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            acc.add(x as u32, y as u32);
            if let Some(f) = flow {
                acc.fu += f.u[p];
                acc.fv += f.v[p];
            }
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if index[q] == u32::MAX && raster.labels[q] == class {
                        index[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        classes.push(class);
        sums.push(acc);
    }
    Components { index, classes, sums }
}

/// Canonical node order: class id, centroid y, centroid x, then pixel count
/// and spread so that concentric components of one class still compare.
pub fn node_order(a: &SceneNode, b: &SceneNode) -> Ordering {
    a.class_id
        .cmp(&b.class_id)
        .then(a.centroid.y.total_cmp(&b.centroid.y))
        .then(a.centroid.x.total_cmp(&b.centroid.x))
        .then(a.pixel_count.cmp(&b.pixel_count))
        .then(a.spread.sx.total_cmp(&b.spread.sx))
        .then(a.spread.sy.total_cmp(&b.spread.sy))
}

/// Builds the scene graph of one frame.
///
/// Node ids are positions in the [`node_order`] sort; components that tie on
/// every key fall back to their first pixel in row-major order.
pub fn build_graph(frame_index: u64, raster: &LabelRaster, flow: &FlowField) -> Result<SceneGraph, SceneGraphError> {
    if (raster.width, raster.height) != (flow.width, flow.height) {
        return Err(SceneGraphError::DimensionMismatch {
            raster: (raster.width, raster.height),
            flow: (flow.width, flow.height),
        });
    }
    let comps = label_components(raster, Some(flow));
    let count = comps.classes.len();
    let discovered: Vec<SceneNode> = comps
        .classes
        .iter()
        .zip(&comps.sums)
        .map(|(&class_id, s)| {
            let n = s.n as f64;
            SceneNode {
                node_id: 0,
                class_id,
                centroid: s.centroid(),
                spread: s.spread(),
                mean_flow: Vec2::new(s.fu / n, s.fv / n),
                pixel_count: s.n,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&i, &j| {
        node_order(&discovered[i], &discovered[j]).then(comps.sums[i].first.cmp(&comps.sums[j].first))
    });
    let mut rank = vec![0u32; count];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r as u32;
    }
    let nodes: Vec<SceneNode> = order
        .iter()
        .enumerate()
        .map(|(r, &i)| SceneNode {
            node_id: r as u32,
            ..discovered[i].clone()
        })
        .collect();

    let contact = contact_matrix(
        raster.width as usize,
        raster.height as usize,
        &comps.index,
        &rank,
        count,
    );
    let mut edges = Vec::with_capacity(count * count.saturating_sub(1));
    for a in &nodes {
        for b in &nodes {
            if a.node_id == b.node_id {
                continue;
            }
            edges.push(SceneEdge {
                src: a.node_id,
                dst: b.node_id,
                relative_offset: b.centroid - a.centroid,
                contact: contact[a.node_id as usize * count + b.node_id as usize],
            });
        }
    }
    Ok(SceneGraph {
        frame_index,
        width: raster.width,
        height: raster.height,
        nodes,
        edges,
    })
}

/// Symmetric `count × count` flags of 8-adjacency between components, indexed by rank.
fn contact_matrix(w: usize, h: usize, index: &[u32], rank: &[u32], count: usize) -> Vec<bool> {
    let mut m = vec![false; count * count];
    let mut mark = |p: usize, q: usize| {
        let (a, b) = (index[p], index[q]);
        if a != u32::MAX && b != u32::MAX && a != b {
            let (ra, rb) = (rank[a as usize] as usize, rank[b as usize] as usize);
            m[ra * count + rb] = true;
            m[rb * count + ra] = true;
        }
    };
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                mark(p, p + 1);
            }
            if y + 1 < h {
                mark(p, p + w);
                if x + 1 < w {
                    mark(p, p + w + 1);
                }
                if x > 0 {
                    mark(p, p + w - 1);
                }
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(w: u32, h: u32, pixels: &[(u32, u32, u8)]) -> LabelRaster {
        let mut r = LabelRaster::new(w, h);
        for &(x, y, c) in pixels {
            r.set(x, y, c);
        }
        r
    }

    #[test]
    fn two_disjoint_blobs_give_two_nodes() {
        let r = raster(8, 8, &[(1, 1, 10), (1, 2, 10), (5, 5, 10), (6, 5, 10)]);
        let g = build_graph(0, &r, &FlowField::zeros(8, 8)).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert!(g.nodes.iter().all(|n| n.class_id == 10 && n.pixel_count == 2));
        assert_eq!(g.edges.len(), 2);
        assert!(g.edges.iter().all(|e| !e.contact));
    }

    #[test]
    fn two_pixel_component_attributes() {
        let r = raster(4, 4, &[(0, 0, 3), (0, 1, 3)]);
        let mut flow = FlowField::zeros(4, 4);
        flow.u.iter_mut().for_each(|u| *u = 1.0);
        let g = build_graph(5, &r, &flow).unwrap();
        let n = &g.nodes[0];
        assert_eq!(g.frame_index, 5);
        assert_eq!(n.centroid, Vec2::new(0.0, 0.5));
        assert_eq!(n.spread, Spread { sx: 0.0, sy: 0.5 });
        assert_eq!(n.mean_flow, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn diagonal_pixels_connect() {
        let r = raster(4, 4, &[(0, 0, 11), (1, 1, 11), (2, 2, 11)]);
        let g = build_graph(0, &r, &FlowField::zeros(4, 4)).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert_eq!(g.nodes[0].pixel_count, 3);
    }

    #[test]
    fn diagonal_contact_between_classes() {
        let r = raster(4, 4, &[(0, 0, 3), (1, 1, 12), (3, 3, 2)]);
        let g = build_graph(0, &r, &FlowField::zeros(4, 4)).unwrap();
        let ids: Vec<u8> = g.nodes.iter().map(|n| n.class_id).collect();
        assert_eq!(ids, vec![2, 3, 12]);
        assert!(g.edge(1, 2).unwrap().contact && g.edge(2, 1).unwrap().contact);
        assert!(!g.edge(0, 2).unwrap().contact);
        assert_eq!(g.edge(0, 1).unwrap().relative_offset, Vec2::new(-3.0, -3.0));
    }

    #[test]
    fn canonical_order_and_edge_lookup() {
        let r = raster(6, 6, &[(4, 0, 10), (0, 4, 10), (2, 0, 10), (5, 5, 1)]);
        let g = build_graph(0, &r, &FlowField::zeros(6, 6)).unwrap();
        let c: Vec<(u8, f64, f64)> = g
            .nodes
            .iter()
            .map(|n| (n.class_id, n.centroid.y, n.centroid.x))
            .collect();
        assert_eq!(c, vec![(1, 5.0, 5.0), (10, 0.0, 2.0), (10, 0.0, 4.0), (10, 4.0, 0.0)]);
        for e in &g.edges {
            assert_eq!(g.edge(e.src, e.dst), Some(e));
        }
        assert!(g.edge(1, 1).is_none());
    }

    #[test]
    fn concentric_components_order_by_size() {
        let mut r = LabelRaster::new(7, 7);
        for i in 1..6 {
            for j in [1, 5] {
                r.set(i, j, 10);
                r.set(j, i, 10);
            }
        }
        r.set(3, 3, 10);
        let g = build_graph(0, &r, &FlowField::zeros(7, 7)).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.nodes[0].centroid, g.nodes[1].centroid);
        assert_eq!(g.nodes[0].pixel_count, 1);
        assert_eq!(g.nodes[1].pixel_count, 16);
    }

    #[test]
    fn dimension_mismatch() {
        let r = LabelRaster::new(4, 4);
        assert_eq!(
            build_graph(0, &r, &FlowField::zeros(4, 5)),
            Err(SceneGraphError::DimensionMismatch {
                raster: (4, 4),
                flow: (4, 5)
            })
        );
    }

    #[test]
    fn empty_raster_has_no_nodes() {
        let g = build_graph(0, &LabelRaster::new(3, 3), &FlowField::zeros(3, 3)).unwrap();
        assert!(g.nodes.is_empty() && g.edges.is_empty());
    }
}
