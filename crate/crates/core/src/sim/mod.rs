//! Deterministic first-person test world: geometry and avatar kinematics
//! driven by the discrete action space, a column raycaster producing
//! grayscale frames, ground-truth portal projection, and teleportation as
//! the milestone-save analog.

mod gen;
mod render;
mod world;

pub use gen::{generate_world, SCENARIOS};
pub use render::{render, visible_portals, DARK_PORTAL_FACTOR};
pub use world::{
    Decoy, MilestonePose, Portal, Prop, PropShape, Room, SimError, Texture, Wall, World,
};

use crate::controller::{Action, CamDir, ForwardDelta};
use serde::{Deserialize, Serialize};

/// Simulator tuning: per-tap camera steps, walk speed, collision radius,
/// projection parameters, and the tick budget per decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub yaw_per_tap: f64,
    pub pitch_per_tap: f64,
    /// Meters advanced per tick while forward is held.
    pub speed: f64,
    pub avatar_radius: f64,
    pub fov_deg: f64,
    pub render_width: u32,
    pub render_height: u32,
    pub ticks_per_decision: u32,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            yaw_per_tap: 5.0,
            pitch_per_tap: 3.0,
            speed: 0.12,
            avatar_radius: 0.3,
            fov_deg: 90.0,
            render_width: 320,
            render_height: 180,
            ticks_per_decision: 3,
        }
    }
}

/// Avatar position and camera. Yaw is in degrees [0,360) with 0 facing +x
/// and right turns increasing it; pitch is clamped to [-45,45].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvatarPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub forward_held: bool,
}

impl AvatarPose {
    pub fn new(x: f64, y: f64, yaw: f64, pitch: f64) -> Self {
        AvatarPose { x, y, yaw: yaw.rem_euclid(360.0), pitch: pitch.clamp(-45.0, 45.0), forward_held: false }
    }

    /// Unit forward vector; yaw turns clockwise on the map so that a RIGHT
    /// camera pulse moves world features toward the left of the screen.
    pub fn forward(&self) -> (f64, f64) {
        let r = self.yaw.to_radians();
        (r.cos(), -r.sin())
    }
}

/// One movement tick with slide-along-wall collision response: try the full
/// displacement, then each axis alone, else stay put. Axis projection is
/// exact sliding for this axis-aligned world.
fn step_move(world: &World, pose: &mut AvatarPose, params: &SimParams) {
    let (fx, fy) = pose.forward();
    let dx = fx * params.speed;
    let dy = fy * params.speed;
    let r = params.avatar_radius;
    let candidates = [(pose.x + dx, pose.y + dy), (pose.x + dx, pose.y), (pose.x, pose.y + dy)];
    for (nx, ny) in candidates {
        if !world.collides(nx, ny, r) {
            pose.x = nx;
            pose.y = ny;
            return;
        }
    }
}

/// Applies one decision's action: camera taps rotate instantly, the forward
/// delta updates the held flag, and then `ticks_per_decision` movement ticks
/// elapse (advancing only while forward is held).
pub fn apply_action(world: &World, pose: &AvatarPose, action: &Action, params: &SimParams) -> AvatarPose {
    let mut p = *pose;
    let taps = action.taps as f64;
    match action.cam {
        CamDir::Left => p.yaw = (p.yaw - taps * params.yaw_per_tap).rem_euclid(360.0),
        CamDir::Right => p.yaw = (p.yaw + taps * params.yaw_per_tap).rem_euclid(360.0),
        CamDir::Up => p.pitch = (p.pitch + taps * params.pitch_per_tap).clamp(-45.0, 45.0),
        CamDir::Down => p.pitch = (p.pitch - taps * params.pitch_per_tap).clamp(-45.0, 45.0),
        CamDir::None => {}
    }
    match action.forward {
        ForwardDelta::Press => p.forward_held = true,
        ForwardDelta::Release => p.forward_held = false,
        ForwardDelta::Hold => {}
    }
    for _ in 0..params.ticks_per_decision {
        if p.forward_held {
            step_move(world, &mut p, params);
        }
    }
    p
}

/// Repositions the avatar exactly (the milestone-save analog). Forward is
/// released. Fails if the target pose sits inside geometry.
pub fn teleport(world: &World, x: f64, y: f64, yaw: f64, pitch: f64, params: &SimParams) -> Result<AvatarPose, SimError> {
    if world.collides(x, y, params.avatar_radius) {
        return Err(SimError::InvalidPose(x, y));
    }
    Ok(AvatarPose::new(x, y, yaw, pitch))
}
