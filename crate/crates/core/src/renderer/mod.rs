//! Rasterises simulator states into label rasters, flat-shaded frames and
//! analytic optical flow.

pub mod fill;
mod flow;
pub mod template;

pub use flow::{analytic_flow, component_flow, incoming_flow, FlowError, FlowField};
pub use template::{Joint, PartPose, TemplateError, TemplatePart, ToolLibrary, ToolTemplate};

use serde::{Deserialize, Serialize};

use crate::geometry::{BinaryMask, CoordinateMap, Ellipse};
use crate::kinex::ToolState;
use crate::simulator::SimState;
use fill::{fill, Shape};

pub const BACKGROUND: u8 = 0;
pub const SCLERA: u8 = 1;
pub const IRIS: u8 = 2;
pub const PUPIL: u8 = 3;
pub const TOOL_BASE: u8 = 10;

pub const MIN_RESOLUTION: u32 = 16;

/// Row-major grid of class ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRaster {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u8>,
}

impl LabelRaster {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            labels: vec![BACKGROUND; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.labels[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, class: u8) {
        let idx = (y * self.width + x) as usize;
        self.labels[idx] = class;
    }

    pub fn mask(&self, pred: impl Fn(u8) -> bool) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| pred(self.get(x, y)))
    }

    pub fn class_mask(&self, class: u8) -> BinaryMask {
        self.mask(|c| c == class)
    }

    /// Distinct class ids in ascending order.
    pub fn classes(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &c in &self.labels {
            seen[c as usize] = true;
        }
        (0..=255u8).filter(|&c| seen[c as usize]).collect()
    }

    pub fn count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&c| c == class).count()
    }

    fn paint<S: Shape + ?Sized>(&mut self, shape: &S, class: u8) {
        let (w, h) = (self.width, self.height);
        fill(shape, w, h, |x, y| self.set(x, y, class));
    }
}

/// Intersection-over-union of one class between two rasters; `None` when the
/// class is absent from both.
pub fn class_iou(a: &LabelRaster, b: &LabelRaster, class: u8) -> Option<f64> {
    assert_eq!((a.width, a.height), (b.width, b.height), "raster dimensions differ");
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.labels.iter().zip(&b.labels) {
        let (ip, iq) = (p == class, q == class);
        inter += usize::from(ip && iq);
        union += usize::from(ip || iq);
    }
    (union > 0).then(|| inter as f64 / union as f64)
}

/// Flat-shaded RGB frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimFrame {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

/// Display colour of a class.
pub fn class_color(class: u8) -> [u8; 3] {
    match class {
        BACKGROUND => [196, 140, 120],
        SCLERA => [236, 232, 224],
        IRIS => [104, 82, 60],
        PUPIL => [18, 14, 16],
        c => {
            const TOOLS: [[u8; 3]; 6] = [
                [160, 200, 230],
                [200, 210, 120],
                [150, 160, 170],
                [110, 190, 170],
                [220, 180, 90],
                [190, 150, 210],
            ];
            TOOLS[(c.saturating_sub(TOOL_BASE) as usize) % TOOLS.len()]
        }
    }
}

impl SimFrame {
    pub fn from_labels(raster: &LabelRaster) -> Self {
        let rgb = raster.labels.iter().flat_map(|&c| class_color(c)).collect();
        Self {
            width: raster.width,
            height: raster.height,
            rgb,
        }
    }
}

/// Draws states at the resolution fixed by its coordinate map.
#[derive(Debug, Clone, PartialEq)]
pub struct Renderer {
    pub map: CoordinateMap,
    pub tools: ToolLibrary,
}

impl Renderer {
    pub fn new(map: CoordinateMap, tools: ToolLibrary) -> Self {
        assert!(
            map.image_width >= MIN_RESOLUTION && map.image_height >= MIN_RESOLUTION,
            "resolution below {MIN_RESOLUTION}"
        );
        Self { map, tools }
    }

    pub fn labels(&self, state: &SimState) -> LabelRaster {
        let map = &self.map;
        let mut raster = LabelRaster::new(map.image_width, map.image_height);
        let anatomy = &state.anatomy;
        let globe = map.sim_to_image(anatomy.globe_translation);
        let radius = map.sim_len_to_image(crate::kinex::NOMINAL_GLOBE_RADIUS * state.globe_scale);
        raster.paint(&Ellipse::circle(globe.x, globe.y, radius), SCLERA);
        raster.paint(&map.ellipse_to_image(&anatomy.world_iris()), IRIS);
        raster.paint(&map.ellipse_to_image(&anatomy.world_pupil()), PUPIL);
        let mut tools: Vec<&ToolState> = state.tools.iter().filter(|t| t.present).collect();
        tools.sort_by_key(|t| t.tool_class);
        for tool in tools {
            self.paint_tool(&mut raster, tool);
        }
        raster
    }

    fn paint_tool(&self, raster: &mut LabelRaster, tool: &ToolState) {
        let label = tool.tool_class.label();
        for poly in self.tools.get(tool.tool_class).pixel_polygons(tool, &self.map) {
            raster.paint(&poly, label);
        }
    }

    /// Mask of a single tool drawn alone.
    pub fn tool_mask(&self, tool: &ToolState) -> BinaryMask {
        let mut raster = LabelRaster::new(self.map.image_width, self.map.image_height);
        self.paint_tool(&mut raster, tool);
        raster.class_mask(tool.tool_class.label())
    }

    pub fn render(&self, state: &SimState) -> (LabelRaster, SimFrame) {
        let labels = self.labels(state);
        let frame = SimFrame::from_labels(&labels);
        (labels, frame)
    }
}
