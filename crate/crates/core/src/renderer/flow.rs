use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::fill::Shape;
use super::{LabelRaster, Renderer, IRIS, PUPIL, SCLERA};
use crate::geometry::{Ellipse, Vec2};
use crate::kinex::ToolClass;
use crate::simulator::SimState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("states are not consecutive: frame {from} -> {to}")]
    FrameGap { from: u64, to: u64 },
    #[error("raster is {got:?}, renderer expects {expected:?}")]
    DimensionMismatch { expected: (u32, u32), got: (u32, u32) },
}

/// Per-pixel displacement in pixels per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub width: u32,
    pub height: u32,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> Vec2 {
        let i = (y * self.width + x) as usize;
        Vec2::new(self.u[i], self.v[i])
    }

    pub fn negated(mut self) -> Self {
        self.u.iter_mut().for_each(|x| *x = -*x);
        self.v.iter_mut().for_each(|x| *x = -*x);
        self
    }
}

/// `p ↦ p + (A − I)(p − origin) + shift`, with `A = None` meaning identity.
#[derive(Debug, Clone, Copy)]
struct Motion {
    linear: Option<[f64; 4]>,
    origin: Vec2,
    shift: Vec2,
}

impl Motion {
    const STILL: Motion = Motion {
        linear: None,
        origin: Vec2::ZERO,
        shift: Vec2::ZERO,
    };

    fn displacement(&self, p: Vec2) -> Vec2 {
        match self.linear {
            None => self.shift,
            Some([a, b, c, d]) => {
                let q = p - self.origin;
                Vec2::new((a - 1.0) * q.x + b * q.y, c * q.x + (d - 1.0) * q.y) + self.shift
            }
        }
    }

    fn rigid(from_origin: Vec2, from_angle: f64, to_origin: Vec2, to_angle: f64) -> Motion {
        let d = to_angle - from_angle;
        Motion {
            linear: (d != 0.0).then(|| {
                let (s, c) = d.sin_cos();
                [c, -s, s, c]
            }),
            origin: from_origin,
            shift: to_origin - from_origin,
        }
    }

    /// Affine map carrying ellipse `e0` onto `e1`.
    fn ellipse(e0: &Ellipse, e1: &Ellipse) -> Motion {
        let shift = e1.center() - e0.center();
        if e0.a == e1.a && e0.b == e1.b && e0.phi == e1.phi {
            return Motion {
                linear: None,
                origin: e0.center(),
                shift,
            };
        }
        let (s0, c0) = e0.phi.sin_cos();
        let (s1, c1) = e1.phi.sin_cos();
        let (ka, kb) = (e1.a / e0.a, e1.b / e0.b);
        // R1 · diag(ka, kb) · R0ᵀ
        let m00 = c1 * ka * c0 + (-s1) * kb * (-s0);
        let m01 = c1 * ka * s0 + (-s1) * kb * c0;
        let m10 = s1 * ka * c0 + c1 * kb * (-s0);
        let m11 = s1 * ka * s0 + c1 * kb * c0;
        Motion {
            linear: Some([m00, m01, m10, m11]),
            origin: e0.center(),
            shift,
        }
    }
}

/// Flow of every pixel of `raster_from` under the kinematic motion between
/// two states, without checking frame indices.
pub fn component_flow(
    from: &SimState,
    to: &SimState,
    raster_from: &LabelRaster,
    renderer: &Renderer,
) -> Result<FlowField, FlowError> {
    let map = &renderer.map;
    let expected = (map.image_width, map.image_height);
    if (raster_from.width, raster_from.height) != expected {
        return Err(FlowError::DimensionMismatch {
            expected,
            got: (raster_from.width, raster_from.height),
        });
    }
    let mut motions = [Motion::STILL; 256];

    let g0 = map.sim_to_image(from.anatomy.globe_translation);
    let g1 = map.sim_to_image(to.anatomy.globe_translation);
    let ratio = to.globe_scale / from.globe_scale;
    motions[SCLERA as usize] = Motion {
        linear: (ratio != 1.0).then_some([ratio, 0.0, 0.0, ratio]),
        origin: g0,
        shift: g1 - g0,
    };
    motions[IRIS as usize] = Motion::ellipse(
        &map.ellipse_to_image(&from.anatomy.world_iris()),
        &map.ellipse_to_image(&to.anatomy.world_iris()),
    );
    motions[PUPIL as usize] = Motion::ellipse(
        &map.ellipse_to_image(&from.anatomy.world_pupil()),
        &map.ellipse_to_image(&to.anatomy.world_pupil()),
    );

    // Tools may move each articulated part differently.
    let mut tool_parts: Vec<(u8, Vec<(super::fill::ConvexPolygon, Motion)>)> = Vec::new();
    for t0 in from.tools.iter().filter(|t| t.present) {
        let Some(t1) = to.tool(t0.tool_class).filter(|t| t.present) else {
            continue;
        };
        let template = renderer.tools.get(t0.tool_class);
        let polys = template.pixel_polygons(t0, map);
        let p0 = template.part_poses(t0.tip, t0.orientation, &t0.articulation);
        let p1 = template.part_poses(t1.tip, t1.orientation, &t1.articulation);
        let parts = polys
            .into_iter()
            .zip(p0.iter().zip(&p1))
            .map(|(poly, (a, b))| {
                let motion = Motion::rigid(map.sim_to_image(a.origin), a.angle, map.sim_to_image(b.origin), b.angle);
                (poly, motion)
            })
            .collect();
        tool_parts.push((t0.tool_class.label(), parts));
    }

    let mut flow = FlowField::zeros(raster_from.width, raster_from.height);
    for y in 0..raster_from.height {
        for x in 0..raster_from.width {
            let class = raster_from.get(x, y);
            let p = Vec2::new(f64::from(x), f64::from(y));
            let d = if ToolClass::from_label(class).is_some() {
                match tool_parts.iter().find(|(label, _)| *label == class) {
                    Some((_, parts)) => parts
                        .iter()
                        .find(|(poly, _)| poly.contains(p))
                        .or(parts.first())
                        .map(|(_, m)| m.displacement(p))
                        .unwrap_or_default(),
                    None => Vec2::ZERO,
                }
            } else {
                motions[class as usize].displacement(p)
            };
            let i = (y * raster_from.width + x) as usize;
            flow.u[i] = d.x;
            flow.v[i] = d.y;
        }
    }
    Ok(flow)
}

/// Forward flow from `state_t` to the next frame, sampled on `raster_t`.
pub fn analytic_flow(
    state_t: &SimState,
    state_t1: &SimState,
    raster_t: &LabelRaster,
    renderer: &Renderer,
) -> Result<FlowField, FlowError> {
    if state_t1.frame_index != state_t.frame_index + 1 {
        return Err(FlowError::FrameGap {
            from: state_t.frame_index,
            to: state_t1.frame_index,
        });
    }
    component_flow(state_t, state_t1, raster_t, renderer)
}

/// Motion that brought each pixel of `raster_cur` into place, estimated as
/// the negated flow from `cur` back to `prev`. Zero without a previous state.
pub fn incoming_flow(
    prev: Option<&SimState>,
    cur: &SimState,
    raster_cur: &LabelRaster,
    renderer: &Renderer,
) -> Result<FlowField, FlowError> {
    match prev {
        Some(p) => Ok(component_flow(cur, p, raster_cur, renderer)?.negated()),
        None => {
            let expected = (renderer.map.image_width, renderer.map.image_height);
            if (raster_cur.width, raster_cur.height) != expected {
                return Err(FlowError::DimensionMismatch {
                    expected,
                    got: (raster_cur.width, raster_cur.height),
                });
            }
            Ok(FlowField::zeros(raster_cur.width, raster_cur.height))
        }
    }
}
