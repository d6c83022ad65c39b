//! Fixed-length numeric encoding of a scene graph.

use serde::{Deserialize, Serialize};

use super::{SceneGraph, SceneGraphError};
use crate::kinex::ToolClass;
use crate::renderer::{IRIS, PUPIL, SCLERA};

pub const FEATURE_LAYOUT_VERSION: &str = "graph-features/1";

/// Per-node block values after the class one-hot: centroid x/y, spread x/y,
/// mean flow u/v, pixel-count fraction.
const GEOMETRY_VALUES: usize = 7;

/// Class vocabulary of the one-hot part of each node block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub classes: Vec<u8>,
}

impl Default for FeatureLayout {
    /// Anatomy classes followed by the built-in instruments.
    fn default() -> Self {
        let mut classes = vec![SCLERA, IRIS, PUPIL];
        classes.extend(ToolClass::BUILTIN.iter().map(|c| c.label()));
        Self { classes }
    }
}

impl FeatureLayout {
    pub fn block_len(&self) -> usize {
        self.classes.len() + GEOMETRY_VALUES
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFeatures {
    pub layout_version: String,
    pub frame_index: u64,
    pub max_nodes: usize,
    pub block_len: usize,
    pub class_vocab: Vec<u8>,
    pub node_count: usize,
    pub values: Vec<f32>,
}

/// Encodes up to `max_nodes` nodes in canonical order, zero-padded.
///
/// Within a block the class is one-hot over `layout.classes`. Centroids map
/// the pixel grid onto `[0, 1]²` as `(c + 0.5) / size`. Spread and flow are
/// divided by the raster size along their axis, and the pixel count by the
/// raster area.
pub fn graph_features(
    graph: &SceneGraph,
    max_nodes: usize,
    layout: &FeatureLayout,
) -> Result<GraphFeatures, SceneGraphError> {
    if graph.nodes.len() > max_nodes {
        return Err(SceneGraphError::CapacityExceeded {
            nodes: graph.nodes.len(),
            capacity: max_nodes,
        });
    }
    let block = layout.block_len();
    let (w, h) = (f64::from(graph.width), f64::from(graph.height));
    let mut values = vec![0.0f32; max_nodes * block];
    for (node, out) in graph.nodes.iter().zip(values.chunks_exact_mut(block)) {
        let slot = layout
            .classes
            .iter()
            .position(|&c| c == node.class_id)
            .ok_or(SceneGraphError::UnknownClassId(node.class_id))?;
        out[slot] = 1.0;
        let geometry = [
            (node.centroid.x + 0.5) / w,
            (node.centroid.y + 0.5) / h,
            node.spread.sx / w,
            node.spread.sy / h,
            node.mean_flow.x / w,
            node.mean_flow.y / h,
            node.pixel_count as f64 / (w * h),
        ];
        for (o, v) in out[layout.classes.len()..].iter_mut().zip(geometry) {
            *o = v as f32;
        }
    }
    Ok(GraphFeatures {
        layout_version: FEATURE_LAYOUT_VERSION.to_string(),
        frame_index: graph.frame_index,
        max_nodes,
        block_len: block,
        class_vocab: layout.classes.clone(),
        node_count: graph.nodes.len(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renderer::{FlowField, LabelRaster};
    use crate::scenegraph::build_graph;

    fn empty(w: u32, h: u32) -> SceneGraph {
        SceneGraph {
            frame_index: 0,
            width: w,
            height: h,
            nodes: vec![],
            edges: vec![],
        }
    }

    #[test]
    fn empty_graph_is_all_zero() {
        let f = graph_features(&empty(64, 64), 8, &FeatureLayout::default()).unwrap();
        assert_eq!(f.block_len, 15);
        assert_eq!(f.values.len(), 8 * 15);
        assert!(f.values.iter().all(|&v| v == 0.0));
        assert_eq!(f.layout_version, FEATURE_LAYOUT_VERSION);
    }

    #[test]
    fn centred_node() {
        let mut r = LabelRaster::new(5, 5);
        r.set(2, 2, 3);
        let g = build_graph(0, &r, &FlowField::zeros(5, 5)).unwrap();
        let f = graph_features(&g, 2, &FeatureLayout::default()).unwrap();
        let b = &f.values[..15];
        assert_eq!(&b[..8], &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!((b[8], b[9]), (0.5, 0.5));
        assert_eq!((b[12], b[13]), (0.0, 0.0));
        assert_eq!(b[14], 1.0 / 25.0);
        assert!(f.values[15..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn capacity_and_vocabulary_errors() {
        let mut r = LabelRaster::new(6, 6);
        r.set(0, 0, 1);
        r.set(4, 4, 1);
        let g = build_graph(0, &r, &FlowField::zeros(6, 6)).unwrap();
        assert_eq!(
            graph_features(&g, 1, &FeatureLayout::default()),
            Err(SceneGraphError::CapacityExceeded { nodes: 2, capacity: 1 })
        );
        r.set(2, 2, 7);
        let g = build_graph(0, &r, &FlowField::zeros(6, 6)).unwrap();
        assert_eq!(
            graph_features(&g, 4, &FeatureLayout::default()),
            Err(SceneGraphError::UnknownClassId(7))
        );
    }

    #[test]
    fn shuffled_nodes_encode_identically_after_canonicalize() {
        let mut r = LabelRaster::new(16, 16);
        for (x, y, c) in [(1, 1, 12), (9, 2, 12), (4, 12, 2), (14, 14, 3), (7, 7, 10)] {
            r.set(x, y, c);
            r.set(x + 1, y, c);
        }
        let g = build_graph(0, &r, &FlowField::zeros(16, 16)).unwrap();
        let expected = graph_features(&g, 8, &FeatureLayout::default()).unwrap();
        let mut shuffled = g.clone();
        shuffled.nodes.reverse();
        shuffled.nodes.swap(0, 2);
        shuffled.edges.reverse();
        shuffled.canonicalize();
        assert_eq!(shuffled, g);
        assert_eq!(
            graph_features(&shuffled, 8, &FeatureLayout::default()).unwrap(),
            expected
        );
    }
}
