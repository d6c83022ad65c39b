//! Silhouette refinement of moment estimates.
//!
//! A pattern search over the shape parameters minimises the number of pixels
//! where the drawn shape and the observed mask disagree. Pixels hidden by an
//! occluder are ignored, so partly covered regions are fitted by what
//! remains visible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Articulation, ToolKind, ToolState, MAX_BEND, MAX_OPENING};
use crate::geometry::{wrap_angle, BinaryMask, CoordinateMap, Ellipse, Vec2};
use crate::renderer::fill::{fill, Shape};
use crate::renderer::{LabelRaster, ToolTemplate};

const DEGREE: f64 = std::f64::consts::PI / 180.0;
const MAX_EVALUATIONS: usize = 4000;

const OUTSIDE: u8 = 0;
const TARGET: u8 = 1;
const HIDDEN: u8 = 2;

/// Observed silhouette with per-pixel target / hidden / outside state.
pub struct Silhouette {
    width: u32,
    height: u32,
    cells: Vec<u8>,
    target_count: i64,
    stamp: Vec<u32>,
    generation: u32,
}

impl Silhouette {
    pub fn new(target: &BinaryMask, hidden: Option<&BinaryMask>) -> Self {
        let cells: Vec<u8> = target
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &t)| match (t, hidden.map(|h| h.as_slice()[i])) {
                (true, _) => TARGET,
                (false, Some(true)) => HIDDEN,
                _ => OUTSIDE,
            })
            .collect();
        Self::from_cells(target.width(), target.height(), cells)
    }

    /// Tool silhouette: pixels of `label`, with higher labels hidden.
    pub fn for_label(raster: &LabelRaster, label: u8) -> Self {
        let cells = raster
            .labels
            .iter()
            .map(|&c| match c.cmp(&label) {
                std::cmp::Ordering::Equal => TARGET,
                std::cmp::Ordering::Greater => HIDDEN,
                std::cmp::Ordering::Less => OUTSIDE,
            })
            .collect();
        Self::from_cells(raster.width, raster.height, cells)
    }

    fn from_cells(width: u32, height: u32, cells: Vec<u8>) -> Self {
        let target_count = cells.iter().filter(|&&c| c == TARGET).count() as i64;
        Self {
            width,
            height,
            stamp: vec![0; cells.len()],
            cells,
            target_count,
            generation: 0,
        }
    }

    /// Pixels that disagree between the union of `shapes` and the target.
    pub fn mismatch<S: Shape>(&mut self, shapes: &[S]) -> i64 {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        let (w, h) = (self.width, self.height);
        let (mut drawn, mut hit, mut hidden) = (0i64, 0i64, 0i64);
        for shape in shapes {
            fill(shape, w, h, |x, y| {
                let idx = (y * w + x) as usize;
                if self.stamp[idx] == self.generation {
                    return;
                }
                self.stamp[idx] = self.generation;
                match self.cells[idx] {
                    TARGET => hit += 1,
                    HIDDEN => hidden += 1,
                    _ => {}
                }
                drawn += 1;
            });
        }
        (self.target_count - hit) + (drawn - hit - hidden)
    }
}

/// Pattern search with a fixed-seed random poll.
///
/// Each round tries `±step` along every coordinate, then a few random
/// directions scaled by the steps, and moves to the best improvement. When
/// nothing improves, all steps are halved; once the first step drops below
/// `min_step` the steps are reset a few times to escape plateaus. Stops at
/// zero cost or when the evaluation budget runs out.
fn pattern_search<const N: usize>(
    mut best: [f64; N],
    initial_steps: [f64; N],
    dims: usize,
    min_step: f64,
    mut cost: impl FnMut(&[f64; N]) -> i64,
) -> [f64; N] {
    const RANDOM_POLLS: usize = 8;
    const RESTARTS: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut best_cost = cost(&best);
    let mut evaluations = 1;
    let mut steps = initial_steps;
    let mut restarts = 0;
    while best_cost > 0 && evaluations < MAX_EVALUATIONS {
        if steps[0] < min_step {
            if restarts == RESTARTS {
                break;
            }
            restarts += 1;
            steps = initial_steps;
        }
        let mut round_best = (best_cost, best);
        for d in 0..dims {
            for sign in [1.0, -1.0] {
                let mut cand = best;
                cand[d] += sign * steps[d];
                let c = cost(&cand);
                evaluations += 1;
                if c < round_best.0 {
                    round_best = (c, cand);
                }
            }
        }
        if round_best.0 >= best_cost {
            for _ in 0..RANDOM_POLLS {
                let mut cand = best;
                for d in 0..dims {
                    cand[d] += rng.random_range(-1.0..=1.0) * steps[d];
                }
                let c = cost(&cand);
                evaluations += 1;
                if c < round_best.0 {
                    round_best = (c, cand);
                }
            }
        }
        if round_best.0 < best_cost {
            (best_cost, best) = round_best;
        } else {
            steps.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    best
}

/// Refines a pixel-space ellipse against a silhouette.
pub fn refine_ellipse(initial: &Ellipse, silhouette: &mut Silhouette) -> Ellipse {
    let start = [initial.cx, initial.cy, initial.a, initial.b, initial.phi];
    let steps = [0.5, 0.5, 0.5, 0.5, 2.0 * DEGREE];
    let build = |v: &[f64; 5]| Ellipse::new(v[0], v[1], v[4], v[2].max(0.5), v[3].max(0.5));
    let best = pattern_search(start, steps, 5, 0.02, |v| silhouette.mismatch(&[build(v)]));
    build(&best)
}

/// Refines a present tool state against the observed raster.
pub fn refine_tool(
    initial: &ToolState,
    kind: ToolKind,
    observed: &LabelRaster,
    template: &ToolTemplate,
    map: &CoordinateMap,
) -> ToolState {
    if !initial.present {
        return *initial;
    }
    let mut silhouette = Silhouette::for_label(observed, initial.tool_class.label());
    let art_of = |v: &[f64; 4]| match kind {
        ToolKind::Forceps => Articulation {
            bend_angle: 0.0,
            opening_angle: v[3].clamp(0.0, MAX_OPENING),
        },
        ToolKind::Angled => Articulation {
            bend_angle: v[3].clamp(-MAX_BEND, MAX_BEND),
            opening_angle: 0.0,
        },
        ToolKind::Straight => Articulation::default(),
    };
    let tip_px = map.sim_to_image(initial.tip);
    let start = [
        tip_px.x,
        tip_px.y,
        initial.orientation,
        match kind {
            ToolKind::Forceps => initial.articulation.opening_angle,
            ToolKind::Angled => initial.articulation.bend_angle,
            ToolKind::Straight => 0.0,
        },
    ];
    let dims = if kind == ToolKind::Straight { 3 } else { 4 };
    let best = pattern_search(start, [1.0, 1.0, DEGREE, 2.0 * DEGREE], dims, 0.05, |v| {
        let tip = map.image_to_sim(Vec2::new(v[0], v[1]));
        silhouette.mismatch(&template.pixel_polygons_at(tip, v[2], &art_of(v), map))
    });
    ToolState {
        tip: map.image_to_sim(Vec2::new(best[0], best[1])),
        orientation: wrap_angle(best[2]),
        articulation: art_of(&best),
        ..*initial
    }
}
