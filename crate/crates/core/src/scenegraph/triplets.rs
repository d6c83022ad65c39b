//! Subject-relation-object text lines for scene graphs.

use std::collections::BTreeMap;
use std::fmt;

use super::{SceneEdge, SceneGraph, SceneGraphError};
use crate::kinex::ToolClass;
use crate::renderer::{IRIS, PUPIL, SCLERA};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Touches,
    LeftOf,
    RightOf,
    Above,
    Below,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Touches => "touches",
            Relation::LeftOf => "left-of",
            Relation::RightOf => "right-of",
            Relation::Above => "above",
            Relation::Below => "below",
        })
    }
}

/// Relation of an edge's source to its destination.
///
/// Contact wins. Otherwise the axis with the larger offset decides, with
/// horizontal preferred on ties; coincident centroids read as `left-of`.
pub fn relation(edge: &SceneEdge) -> Relation {
    if edge.contact {
        return Relation::Touches;
    }
    let d = edge.relative_offset;
    if d.x.abs() >= d.y.abs() {
        if d.x >= 0.0 {
            Relation::LeftOf
        } else {
            Relation::RightOf
        }
    } else if d.y > 0.0 {
        // y grows downward, so a destination further down means the source is above it.
        Relation::Above
    } else {
        Relation::Below
    }
}

/// Names for the anatomy classes and the built-in instruments.
pub fn default_class_names() -> BTreeMap<u8, String> {
    let mut names = BTreeMap::from([
        (SCLERA, "sclera".to_string()),
        (IRIS, "iris".to_string()),
        (PUPIL, "pupil".to_string()),
    ]);
    for c in ToolClass::BUILTIN {
        names.insert(c.label(), c.name());
    }
    names
}

/// One line per edge, in edge order.
pub fn graph_triplets(graph: &SceneGraph, label_names: &BTreeMap<u8, String>) -> Result<Vec<String>, SceneGraphError> {
    let name = |id: u32| {
        let class = graph.nodes[id as usize].class_id;
        label_names.get(&class).ok_or(SceneGraphError::UnknownClassId(class))
    };
    for n in &graph.nodes {
        name(n.node_id)?;
    }
    graph
        .edges
        .iter()
        .map(|e| Ok(format!("{} {} {}", name(e.src)?, relation(e), name(e.dst)?)))
        .collect()
}
