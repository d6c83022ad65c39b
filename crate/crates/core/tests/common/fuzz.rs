//! Seeded random action streams for the transition function.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use phacosim_core::geometry::{CoordinateMap, Vec2};
use phacosim_core::kinex::{ToolClass, ToolState, MAX_BEND, MAX_OPENING};
use phacosim_core::simulator::{Action, ScenarioSpec, SimState, Simulator, ToolAction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, PartialEq, Eq)]
pub struct FuzzRun {
    /// Hash over every state's JSON and every rendered raster.
    pub digest: u64,
    pub accepted: usize,
    pub rejected: usize,
    /// Invariant violations and rejected steps that still changed the state.
    pub failures: Vec<String>,
}

fn random_tool(rng: &mut ChaCha8Rng, class: ToolClass) -> ToolState {
    ToolState::new(
        class,
        Vec2::new(rng.random_range(-1.3..1.3), rng.random_range(-1.3..1.3)),
        rng.random_range(-PI..PI),
    )
    .with_articulation(
        rng.random_range(-0.2..MAX_BEND + 0.2),
        rng.random_range(-0.2..MAX_OPENING + 0.2),
    )
}

pub fn random_action(rng: &mut ChaCha8Rng, state: &SimState) -> Action {
    let mut action = Action::default();
    let classes = [
        ToolClass::KERATOME,
        ToolClass::CAPSULORHEXIS_FORCEPS,
        ToolClass::PHACO_HANDPIECE,
        ToolClass(20),
    ];
    for _ in 0..rng.random_range(0..3) {
        let class = classes[rng.random_range(0..classes.len())];
        if action.tools.iter().any(|t| t.tool_class == class) {
            continue;
        }
        let entry = match rng.random_range(0..10) {
            0..=5 => ToolAction::delta(class)
                .tip(Vec2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
                .orientation(rng.random_range(-0.3..0.3))
                .bend(rng.random_range(-0.2..0.2))
                .opening(rng.random_range(-0.2..0.2)),
            6..=7 => ToolAction::spawn(random_tool(rng, class)),
            8 => ToolAction::despawn(class),
            _ => ToolAction::delta(class).tip(Vec2::new(f64::NAN, 0.0)),
        };
        action.tools.push(entry);
    }
    if rng.random_bool(0.5) {
        let g = state.anatomy.globe_translation;
        let rot = state.anatomy.globe_rotation;
        action.anatomy = Action::anatomy_delta(
            Vec2::new(
                rng.random_range(-0.03..0.03) - 0.05 * g.x,
                rng.random_range(-0.03..0.03) - 0.05 * g.y,
            ),
            rng.random_range(-0.1..0.1) - 0.02 * rot.yaw,
            rng.random_range(-0.1..0.1) - 0.02 * rot.pitch,
        )
        .anatomy;
    }
    action
}

/// Runs `steps` random actions from the nominal scene, rendering every
/// `render_every`-th state into the digest.
pub fn fuzz_stream(seed: u64, steps: usize, render_every: usize) -> FuzzRun {
    let map = CoordinateMap::square(64, 1.0);
    let sim = Simulator::with_map(map);
    let spec = ScenarioSpec::nominal(&map);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = spec.initial_state.clone();
    let mut hasher = DefaultHasher::new();
    let mut run = FuzzRun {
        digest: 0,
        accepted: 0,
        rejected: 0,
        failures: Vec::new(),
    };
    for step in 0..steps {
        let action = random_action(&mut rng, &state);
        let before = state.clone();
        match sim.advance(&state, &action) {
            Ok(next) => {
                if let Some(v) = next.violation(Some(&sim.bounds)) {
                    run.failures.push(format!("step {step}: {v}"));
                }
                if next.frame_index != state.frame_index + 1 {
                    run.failures
                        .push(format!("step {step}: frame index {}", next.frame_index));
                }
                state = next;
                run.accepted += 1;
            }
            Err(_) => {
                if state != before {
                    run.failures
                        .push(format!("step {step}: rejected step changed the state"));
                }
                run.rejected += 1;
            }
        }
        serde_json::to_string(&state)
            .expect("state serializes")
            .hash(&mut hasher);
        if render_every > 0 && step % render_every == 0 {
            sim.renderer.labels(&state).labels.hash(&mut hasher);
        }
    }
    run.digest = hasher.finish();
    run
}
