// Temporary: full agent loop with pose dump.
use nav_core::controller::*;
use nav_core::perception::*;
use nav_core::sim::*;
use nav_core::vision::*;
use rand::SeedableRng;

fn main() {
    let world = generate_world("straight_corridor", 0).unwrap();
    let sim = SimParams::default();
    let mut pose = teleport(&world, world.spawn.0, world.spawn.1, world.spawn.2, world.spawn.3, &sim).unwrap();
    let mut controller = Controller::new(
        ControlParams::default(),
        FsmProfile::naive(),
        (sim.render_width, sim.render_height),
        sim.fov_deg,
        sim.yaw_per_tap,
    );
    let mut hist = SectorHistogram::new(8, 30);
    let noise = NoiseModel::zero(8);
    let weights = ScoreWeights::defaults(8);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut prev: Option<MstpSelection> = None;
    let penalties = vec![0.0; 8];
    for t in 0..240u64 {
        let frame = render(&world, &pose, &sim);
        let projections = visible_portals(&world, &pose, &sim);
        let candidates = simulated_detect(&projections, &frame, &noise, &mut rng);
        let sel = select_mstp(&candidates, prev.as_ref(), &hist, &weights, &|s: u8| penalties[(s - 1) as usize], None, t);
        hist.push(sel.as_ref().map(|s| s.candidate.sector));
        let hash = phash64(&frame);
        let out = controller.decide(&frame, sel.as_ref(), &hist, &penalties, 0, &mut rng);
        let _ = hash;
        if t >= 100 && t <= 200 {
            println!(
                "t={t:3} pos=({:6.2},{:5.2}) yaw={:6.1} {} {:?}x{} fwd={:?} sel={} nproj={}",
                pose.x, pose.y, pose.yaw,
                out.state.name(),
                out.action.cam, out.action.taps, out.action.forward,
                sel.as_ref().map(|s| format!("sec{} x[{:.0},{:.0}]", s.candidate.sector, s.candidate.bbox.x1, s.candidate.bbox.x2)).unwrap_or("NONE".into()),
                projections.len(),
            );
        }
        pose = apply_action(&world, &pose, &out.action, &sim);
        prev = sel;
    }
}
