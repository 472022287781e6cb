// Temporary development probe; not part of the deliverable test suite.
use nav_core::harness::*;
use nav_core::sim::*;
use nav_core::vision::*;

fn ncc_profile(world: &World, sim: &SimParams, group: &MilestoneGroup, axis: (f64, f64, f64, f64)) {
    // axis: (x0,y0) .. (x1,y1) walked while facing the pose yaw.
    let (x0, y0, x1, y1) = axis;
    println!("-- NCC profile vs milestone {} (pose {},{} yaw {})", group.id, group.save_pose.x, group.save_pose.y, group.save_pose.yaw);
    let steps = 30;
    for i in 0..=steps {
        let s = i as f64 / steps as f64;
        let x = x0 + s * (x1 - x0);
        let y = y0 + s * (y1 - y0);
        if world.collides(x, y, sim.avatar_radius) {
            continue;
        }
        let pose = AvatarPose::new(x, y, group.save_pose.yaw, 0.0);
        let frame = render(world, &pose, sim);
        let best = group
            .templates
            .iter()
            .map(|t| ncc_score(&frame, t))
            .fold(f64::NEG_INFINITY, f64::max);
        let mark = if best > 0.8 { " *HIT*" } else { "" };
        println!("  ({x:6.2},{y:5.2}) ncc={best:6.3}{mark}");
    }
}

fn run_one(scenario: &str, method: Method, seed: u64, budget: u64, verbose: bool) {
    let world = generate_world(scenario, 0).unwrap();
    let sim = SimParams::default();
    let groups = capture_all(&world, &SweepParams::default(), &sim).unwrap();
    let mut cfg = AgentConfig::new(method);
    cfg.check_period = 2;
    cfg.budget_ticks = budget;
    let mut trace = Vec::new();
    let report = run_route(&world, &sim, &cfg, &groups, seed, Some(&mut trace)).unwrap();
    println!(
        "{scenario} {:?} seed {seed}: success={} reached={:?}",
        method, report.route_success, report.milestones_reached
    );
    for seg in &report.segments {
        println!(
            "  seg ->m{}: {:?} frames={} fwd_ticks={} commits={} lure={} dwell: scan={} align={} adv={} ref={} rec={} esc={} loop={}",
            seg.to_milestone,
            seg.termination,
            seg.frames,
            seg.forward_time_ticks,
            seg.commits,
            seg.lure_commits,
            seg.fsm_dwell_ticks.scan,
            seg.fsm_dwell_ticks.align,
            seg.fsm_dwell_ticks.advance,
            seg.fsm_dwell_ticks.refine,
            seg.fsm_dwell_ticks.recover_local,
            seg.fsm_dwell_ticks.escape_stuck,
            seg.fsm_dwell_ticks.loop_breaker
        );
    }
    if verbose {
        for (i, line) in trace.iter().enumerate() {
            if i % 5 == 0 {
                println!("  {line}");
            }
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("corridor");
    match mode {
        "ncc" => {
            let world = generate_world("straight_corridor", 0).unwrap();
            let sim = SimParams::default();
            let groups = capture_all(&world, &SweepParams::default(), &sim).unwrap();
            ncc_profile(&world, &sim, &groups[0], (8.5, 2.0, 14.0, 2.0));
            ncc_profile(&world, &sim, &groups[1], (16.5, 2.0, 22.0, 2.0));
            ncc_profile(&world, &sim, &groups[2], (24.3, 2.0, 30.0, 2.0));
        }
        "corridor" => {
            for method in [Method::Naive, Method::Fsm, Method::Full] {
                run_one("straight_corridor", method, 0, 3000, false);
            }
        }
        "trace" => {
            run_one("straight_corridor", Method::Naive, 0, 3000, true);
        }
        "dark" => {
            let world = generate_world("dark_right_door", 0).unwrap();
            let sim = SimParams::default();
            let groups = capture_all(&world, &SweepParams::default(), &sim).unwrap();
            ncc_profile(&world, &sim, &groups[0], (14.3, 3.0, 20.0, 3.0));
            ncc_profile(&world, &sim, &groups[1], (22.3, 2.8, 28.0, 2.8));
        }
        other => {
            run_one(other, Method::Fsm, 0, 3000, true);
        }
    }
}
