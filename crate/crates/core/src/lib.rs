//! Screen-only visual navigation: frame-comparison primitives, transition-point
//! scoring, a pulse/FSM controller with a visual memory bank, a deterministic
//! first-person raycast simulator, and a milestone-based evaluation harness.
//!
//! The agent never reads world state directly: it consumes rendered grayscale
//! frames plus detector candidates and emits discrete camera pulses and a
//! forward toggle. Everything is deterministic given a seed, so full runs can
//! be replayed and diffed byte for byte.

pub mod controller;
pub mod harness;
pub mod memory;
pub mod perception;
pub mod sim;
pub mod vision;
