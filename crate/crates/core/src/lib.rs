//! Symbolic world-model engine for cataract-surgery scenes.
//!
//! The crate covers the simulator state and transition rules, kinematics
//! recovery from segmentation rasters, rasterisation with analytic flow,
//! scene graphs, file formats, and interactive sessions.

pub mod dataio;
pub mod geometry;
pub mod kinex;
pub mod renderer;
pub mod roundtrip;
pub mod scenegraph;
pub mod session;
pub mod simulator;
