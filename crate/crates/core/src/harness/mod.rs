//! Milestone-based evaluation: segment loops (perceive -> control ->
//! simulate, with periodic milestone checks), route orchestration with
//! timeout repositioning, and metric aggregation.

mod metrics;
mod milestone;

pub use metrics::{aggregate, emit_report, MetricsRow, MetricsTable};
pub use milestone::{
    capture_all, capture_milestone, check_milestone, load_library, save_library, MilestoneError,
    MilestoneGroup, SweepParams,
};

use crate::controller::{CamDir, ControlParams, Controller, ForwardDelta, FsmProfile, FsmState};
use crate::memory::{BankParams, MemoryBank};
use crate::perception::{
    select_mstp, simulated_detect, MstpSelection, NoiseModel, ScoreWeights, SectorHistogram,
};
use crate::sim::{apply_action, render, teleport, visible_portals, AvatarPose, SimParams, World};
use crate::vision::{embed, phash64};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TICKS_PER_SEC: f64 = 30.0;

/// The three agent configurations: direct steering with the restricted
/// state machine, the full FSM without memory, and the full system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "NAIVE")]
    Naive,
    #[serde(rename = "FSM")]
    Fsm,
    #[serde(rename = "FULL")]
    Full,
}

impl Method {
    pub fn profile(self) -> FsmProfile {
        match self {
            Method::Naive => FsmProfile::naive(),
            Method::Fsm | Method::Full => FsmProfile::full(),
        }
    }

    pub fn memory_enabled(self) -> bool {
        self == Method::Full
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "NAIVE",
            Method::Fsm => "FSM",
            Method::Full => "FULL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    #[serde(rename = "MILESTONE")]
    Milestone,
    #[serde(rename = "TIMEOUT")]
    Timeout,
    #[serde(rename = "MANUAL")]
    Manual,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CamHistogram {
    pub left: u64,
    pub right: u64,
    pub up: u64,
    pub down: u64,
}

/// Ticks spent in each FSM state over a segment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmDwell {
    pub scan: u64,
    pub align: u64,
    pub advance: u64,
    pub refine: u64,
    pub recover_local: u64,
    pub escape_stuck: u64,
    pub loop_breaker: u64,
}

impl FsmDwell {
    pub fn total(&self) -> u64 {
        self.scan + self.align + self.advance + self.refine + self.recover_local + self.escape_stuck
            + self.loop_breaker
    }

    fn from_frames(frames: &[u64; 7], ticks_per_decision: u32) -> Self {
        let t = ticks_per_decision as u64;
        FsmDwell {
            scan: frames[0] * t,
            align: frames[1] * t,
            advance: frames[2] * t,
            refine: frames[3] * t,
            recover_local: frames[4] * t,
            escape_stuck: frames[5] * t,
            loop_breaker: frames[6] * t,
        }
    }
}

/// Per-segment behavioral record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentLog {
    pub start_tick: u64,
    pub end_tick: u64,
    pub start_s: f64,
    pub end_s: f64,
    /// 0 denotes the route start; otherwise the milestone id just completed.
    pub from_milestone: u32,
    pub to_milestone: u32,
    pub termination: Termination,
    pub frames: u64,
    pub mstp_decisions: u64,
    pub forward_presses: u64,
    pub forward_time_ticks: u64,
    pub cam_histogram: CamHistogram,
    pub fsm_dwell_ticks: FsmDwell,
    /// Decisions that committed into the dead-end/lure portal, when the
    /// world designates one (ground-truth instrumentation for experiments).
    pub lure_commits: u64,
    /// All ALIGN -> ADVANCE commitments in this segment.
    pub commits: u64,
}

/// Per-run record: ordered segments plus route-level success flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub route: String,
    pub method: Method,
    pub seed: u64,
    pub ticks_per_sec: f64,
    pub segments: Vec<SegmentLog>,
    pub milestones_reached: Vec<bool>,
    pub route_success: bool,
    /// True once any memory entry was labeled BAD and later yielded a
    /// positive penalty for its own embedding and sector.
    pub memory_penalty_fired: bool,
}

/// Everything a run needs beyond the world itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub method: Method,
    pub control: ControlParams,
    pub bank: BankParams,
    pub weights: ScoreWeights,
    pub noise: NoiseModel,
    pub sectors: u8,
    pub hist_horizon: usize,
    pub budget_ticks: u64,
    pub check_period: u64,
    pub check_threshold: f64,
    pub carry_memory: bool,
    pub ticks_per_sec: f64,
    /// Optional external stop after this many decisions (MANUAL).
    pub manual_stop_after: Option<u64>,
}

impl AgentConfig {
    pub fn new(method: Method) -> Self {
        let sectors = 8;
        AgentConfig {
            method,
            control: ControlParams::default(),
            bank: BankParams::default(),
            weights: ScoreWeights::defaults(sectors),
            noise: NoiseModel::zero(sectors),
            sectors,
            hist_horizon: 30,
            budget_ticks: 3000,
            check_period: 10,
            check_threshold: 0.80,
            carry_memory: false,
            ticks_per_sec: DEFAULT_TICKS_PER_SEC,
            manual_stop_after: None,
        }
    }
}

/// Mutable per-run agent state threaded through the segments.
struct AgentState {
    controller: Controller,
    bank: MemoryBank,
    anchors: crate::controller::AnchorTracker,
    hist: SectorHistogram,
    prev_sel: Option<MstpSelection>,
    pending_evals: Vec<(u64, u64)>,
    rng: rand_chacha::ChaCha8Rng,
    now: u64,
    tick: u64,
    memory_penalty_fired: bool,
}

impl AgentState {
    fn new(cfg: &AgentConfig, sim: &SimParams, seed: u64) -> Self {
        use rand::SeedableRng;
        AgentState {
            controller: Controller::new(
                cfg.control.clone(),
                cfg.method.profile(),
                (sim.render_width, sim.render_height),
                sim.fov_deg,
                sim.yaw_per_tap,
            ),
            bank: MemoryBank::new(cfg.bank.clone()),
            anchors: crate::controller::AnchorTracker::default(),
            hist: SectorHistogram::new(cfg.sectors, cfg.hist_horizon),
            prev_sel: None,
            pending_evals: Vec::new(),
            rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(cfg.noise.seed)),
            now: 0,
            tick: 0,
            memory_penalty_fired: false,
        }
    }

    /// Per-segment reset: the controller and perception context always
    /// restart; the bank survives only when memory carry is on.
    fn reset_for_segment(&mut self, cfg: &AgentConfig) {
        self.controller.reset();
        self.anchors = crate::controller::AnchorTracker::default();
        self.hist = SectorHistogram::new(cfg.sectors, cfg.hist_horizon);
        self.prev_sel = None;
        if !cfg.carry_memory {
            self.bank = MemoryBank::new(cfg.bank.clone());
            self.pending_evals.clear();
        }
    }
}

pub struct SegmentOutcome {
    pub log: SegmentLog,
    pub pose: AvatarPose,
}

#[allow(clippy::too_many_arguments)]
fn run_segment(
    world: &World,
    sim: &SimParams,
    cfg: &AgentConfig,
    agent: &mut AgentState,
    mut pose: AvatarPose,
    target: &MilestoneGroup,
    from_milestone: u32,
    lure_portals: &[u32],
    mut trace: Option<&mut Vec<serde_json::Value>>,
) -> SegmentOutcome {
    let tpd = sim.ticks_per_decision as u64;
    let start_tick = agent.tick;
    let memory_on = cfg.method.memory_enabled();
    let mut log = SegmentLog {
        start_tick,
        end_tick: start_tick,
        start_s: start_tick as f64 / cfg.ticks_per_sec,
        end_s: start_tick as f64 / cfg.ticks_per_sec,
        from_milestone,
        to_milestone: target.id,
        termination: Termination::Timeout,
        frames: 0,
        mstp_decisions: 0,
        forward_presses: 0,
        forward_time_ticks: 0,
        cam_histogram: CamHistogram::default(),
        fsm_dwell_ticks: FsmDwell::default(),
        lure_commits: 0,
        commits: 0,
    };
    let mut ticks_used = 0u64;
    loop {
        if ticks_used + tpd > cfg.budget_ticks {
            log.termination = Termination::Timeout;
            break;
        }
        if let Some(cap) = cfg.manual_stop_after {
            if log.frames >= cap {
                log.termination = Termination::Manual;
                break;
            }
        }
        let now = agent.now;
        let mut frame = render(world, &pose, sim);
        frame.t = now;
        let projections = visible_portals(world, &pose, sim);
        let candidates = simulated_detect(&projections, &frame, &cfg.noise, &mut agent.rng);
        let z = embed(&frame);
        let hash = phash64(&frame);

        agent.bank.promote(now);
        let mut penalties = vec![0.0; cfg.sectors as usize];
        if memory_on {
            for (i, p) in penalties.iter_mut().enumerate() {
                *p = agent.bank.penalty(&z, (i + 1) as u8, now);
            }
        }
        let selection = select_mstp(
            &candidates,
            agent.prev_sel.as_ref(),
            &agent.hist,
            &cfg.weights,
            &|s: u8| penalties[(s - 1) as usize],
            None,
            now,
        );
        // Outcome labels are assigned against the selection made exactly at
        // the evaluation frame.
        let due: Vec<u64> = agent
            .pending_evals
            .iter()
            .filter(|(_, when)| *when == now)
            .map(|(id, _)| *id)
            .collect();
        agent.pending_evals.retain(|(_, when)| *when != now);
        for id in due {
            let _ = agent.bank.label_outcome(id, selection.as_ref());
            if memory_on && !agent.memory_penalty_fired {
                if let Some(entry) = agent.bank.entry(id) {
                    if entry.outcome == crate::memory::Outcome::Bad {
                        let (ez, es) = (entry.embedding.clone(), entry.sector.unwrap_or(1));
                        let mut probe = agent.bank.clone();
                        probe.promote(now + cfg.bank.t_quar);
                        if probe.penalty(&ez, es, now) > 0.0 {
                            agent.memory_penalty_fired = true;
                        }
                    }
                }
            }
        }
        agent.hist.push(selection.as_ref().map(|s| s.candidate.sector));
        if memory_on && now % cfg.bank.insert_period == 0 {
            if let Some(sel) = &selection {
                agent.bank.consider_insert(&z, hash, Some(sel.candidate.sector), now);
            }
        }
        let revisits = agent.anchors.observe(hash, now);
        let prev_state = agent.controller.state.fsm;
        let out = agent.controller.decide(
            &frame,
            selection.as_ref(),
            &agent.hist,
            &penalties,
            revisits,
            &mut agent.rng,
        );
        if out.state == FsmState::LoopBreaker && prev_state != FsmState::LoopBreaker {
            agent.anchors.acknowledge(hash);
        }
        if let Some((sector, bbox)) = out.committed {
            log.commits += 1;
            if let Some(sel) = &selection {
                let hit_lure = lure_portals.iter().any(|&lp| {
                    projections
                        .iter()
                        .find(|p| p.portal_id == lp)
                        .map(|p| crate::perception::iou(&p.bbox, &sel.candidate.bbox) > 0.3)
                        .unwrap_or(false)
                });
                if hit_lure {
                    log.lure_commits += 1;
                }
            }
            if memory_on {
                if let Some(id) = agent.bank.associate_decision(sector, bbox, now) {
                    agent.pending_evals.push((id, now + cfg.bank.t_eval));
                }
            }
        }

        if selection.is_some() {
            log.mstp_decisions += 1;
        }
        match out.action.cam {
            CamDir::Left => log.cam_histogram.left += out.action.taps as u64,
            CamDir::Right => log.cam_histogram.right += out.action.taps as u64,
            CamDir::Up => log.cam_histogram.up += out.action.taps as u64,
            CamDir::Down => log.cam_histogram.down += out.action.taps as u64,
            CamDir::None => {}
        }
        if out.action.forward == ForwardDelta::Press {
            log.forward_presses += 1;
        }
        if let Some(sink) = trace.as_deref_mut() {
            sink.push(serde_json::json!({
                "t": now,
                "tick": agent.tick,
                "state": out.state.name(),
                "error": out.error.map(|e| [e.ex, e.ey]),
                "cam": format!("{:?}", out.action.cam),
                "taps": out.action.taps,
                "forward": format!("{:?}", out.action.forward),
                "area_delta": out.signals.area_delta,
                "ssim": out.signals.ssim_recent,
                "flow": if out.signals.flow_mag.is_finite() { out.signals.flow_mag } else { -1.0 },
                "selection": selection.as_ref().map(|s| serde_json::json!({
                    "box": [s.candidate.bbox.x1, s.candidate.bbox.y1, s.candidate.bbox.x2, s.candidate.bbox.y2],
                    "sector": s.candidate.sector,
                    "score": s.final_score,
                })),
                "penalties": penalties,
            }));
        }

        pose = apply_action(world, &pose, &out.action, sim);
        if pose.forward_held {
            log.forward_time_ticks += tpd;
        }
        ticks_used += tpd;
        agent.tick += tpd;
        agent.now += 1;
        log.frames += 1;
        agent.prev_sel = selection;

        if log.frames % cfg.check_period == 0 {
            let check = render(world, &pose, sim);
            if check_milestone(&check, target, cfg.check_threshold) {
                log.termination = Termination::Milestone;
                break;
            }
        }
    }
    if log.termination == Termination::Timeout {
        // A timed-out segment consumes its budget exactly.
        agent.tick = start_tick + cfg.budget_ticks;
    }
    log.end_tick = agent.tick;
    log.end_s = agent.tick as f64 / cfg.ticks_per_sec;
    log.fsm_dwell_ticks =
        FsmDwell::from_frames(&agent.controller.state.state_dwell, sim.ticks_per_decision);
    SegmentOutcome { log, pose }
}

/// Runs the ordered milestone sequence once: each segment targets the next
/// group; a timeout marks the group failed and teleports the avatar to the
/// next group's save pose. Controller state resets at each segment start;
/// the memory bank persists across segments only with `carry_memory`.
pub fn run_route(
    world: &World,
    sim: &SimParams,
    cfg: &AgentConfig,
    groups: &[MilestoneGroup],
    seed: u64,
    mut trace: Option<&mut Vec<serde_json::Value>>,
) -> Result<RunReport, crate::sim::SimError> {
    let mut agent = AgentState::new(cfg, sim, seed);
    let mut pose = teleport(world, world.spawn.0, world.spawn.1, world.spawn.2, world.spawn.3, sim)?;
    let lure_portals: Vec<u32> = world
        .portals
        .iter()
        .filter(|p| !world.route.contains(&p.id))
        .map(|p| p.id)
        .collect();
    let mut segments = Vec::new();
    let mut reached = Vec::new();
    for (gi, group) in groups.iter().enumerate() {
        agent.reset_for_segment(cfg);
        let from = if gi == 0 { 0 } else { groups[gi - 1].id };
        let outcome = run_segment(
            world,
            sim,
            cfg,
            &mut agent,
            pose,
            group,
            from,
            &lure_portals,
            trace.as_deref_mut(),
        );
        pose = outcome.pose;
        let ok = outcome.log.termination == Termination::Milestone;
        reached.push(ok);
        segments.push(outcome.log);
        if !ok {
            if let Some(next) = groups.get(gi + 1) {
                let sp = next.save_pose;
                pose = teleport(world, sp.x, sp.y, sp.yaw, sp.pitch, sim)?;
            }
        }
    }
    let route_success = reached.iter().all(|&r| r);
    Ok(RunReport {
        route: world.name.clone(),
        method: cfg.method,
        seed,
        ticks_per_sec: cfg.ticks_per_sec,
        segments,
        milestones_reached: reached,
        route_success,
        memory_penalty_fired: agent.memory_penalty_fired,
    })
}
