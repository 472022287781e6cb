// Temporary: portal-crossing visibility probe.
use nav_core::controller::{Action, CamDir, ForwardDelta};
use nav_core::sim::*;

fn main() {
    let world = generate_world("straight_corridor", 0).unwrap();
    let sim = SimParams::default();
    let mut pose = AvatarPose::new(6.5, 2.0, 0.0, 0.0);
    pose.forward_held = true;
    for step in 0..16 {
        let projections = visible_portals(&world, &pose, &sim);
        let desc: Vec<String> = projections
            .iter()
            .map(|p| format!("id{} occ={:.2} x[{:.0},{:.0}] free={:.2}", p.portal_id, p.occlusion, p.bbox.x1, p.bbox.x2, p.free_space))
            .collect();
        println!("step {step:2} pos=({:.2},{:.2}) yaw={:.1}: {}", pose.x, pose.y, pose.yaw, desc.join(" | "));
        pose = apply_action(&world, &pose, &Action::new(CamDir::None, 0, ForwardDelta::Hold), &sim);
    }
}
