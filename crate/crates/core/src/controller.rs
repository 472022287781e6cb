//! Turns (frame, selection) pairs into discrete actions: a pulse camera
//! controller with a Schmitt-trigger dead zone, an alignment-gated forward
//! toggle, a stagnation meter over recent frames, and the seven-state FSM
//! with scripted recovery maneuvers.

use crate::perception::{BBox, MstpSelection, SectorHistogram};
use crate::vision::{median_flow, ssim, Frame};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Camera pulse direction. `None` carries zero taps by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CamDir {
    None,
    Left,
    Right,
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForwardDelta {
    Press,
    Release,
    Hold,
}

/// One decision's worth of output: a camera pulse burst plus the forward
/// key transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub cam: CamDir,
    pub taps: u32,
    pub forward: ForwardDelta,
}

impl Action {
    pub fn new(cam: CamDir, taps: u32, forward: ForwardDelta) -> Self {
        debug_assert!((taps == 0) == (cam == CamDir::None));
        Action { cam, taps, forward }
    }

    pub fn idle(forward: ForwardDelta) -> Self {
        Action { cam: CamDir::None, taps: 0, forward }
    }
}

/// Normalized screen-fraction error between the selection center and the
/// screen center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorVec {
    pub ex: f64,
    pub ey: f64,
}

impl ErrorVec {
    pub fn norm(&self) -> f64 {
        (self.ex * self.ex + self.ey * self.ey).sqrt()
    }
}

/// `((u - W/2)/W, (v - H/2)/H)`.
pub fn error_vector(center: (f64, f64), screen: (u32, u32)) -> ErrorVec {
    let (w, h) = (screen.0 as f64, screen.1 as f64);
    ErrorVec { ex: (center.0 - w / 2.0) / w, ey: (center.1 - h / 2.0) / h }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FsmState {
    Scan,
    Align,
    Advance,
    Refine,
    RecoverLocal,
    EscapeStuck,
    LoopBreaker,
}

pub const FSM_STATES: [FsmState; 7] = [
    FsmState::Scan,
    FsmState::Align,
    FsmState::Advance,
    FsmState::Refine,
    FsmState::RecoverLocal,
    FsmState::EscapeStuck,
    FsmState::LoopBreaker,
];

impl FsmState {
    pub fn index(self) -> usize {
        FSM_STATES.iter().position(|&s| s == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            FsmState::Scan => "SCAN",
            FsmState::Align => "ALIGN",
            FsmState::Advance => "ADVANCE",
            FsmState::Refine => "REFINE",
            FsmState::RecoverLocal => "RECOVER_LOCAL",
            FsmState::EscapeStuck => "ESCAPE_STUCK",
            FsmState::LoopBreaker => "LOOP_BREAKER",
        }
    }
}

/// Forward motion is only ever allowed in these states; every recovery
/// state forces the forward flag low.
pub fn forward_capable(state: FsmState) -> bool {
    matches!(state, FsmState::Align | FsmState::Advance | FsmState::Refine)
}

/// Which parts of the FSM table are enabled. The naive profile restricts
/// the machine to SCAN/ALIGN/ADVANCE with no recovery; the full profile
/// enables REFINE and all recovery states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmProfile {
    pub refine: bool,
    pub recovery: bool,
}

impl FsmProfile {
    pub fn naive() -> Self {
        FsmProfile { refine: false, recovery: false }
    }

    pub fn full() -> Self {
        FsmProfile { refine: true, recovery: true }
    }
}

/// Thresholds and gains for the pulse controller, forward gate, progress
/// meter, and FSM. All config-exposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub eps_x_in: f64,
    pub eps_x_out: f64,
    pub eps_y_in: f64,
    pub eps_y_out: f64,
    /// Taps per unit of error norm.
    pub k_gain: f64,
    pub n_max: u32,
    /// Frames of continuous alignment required before forward engages.
    pub tau_on: u32,
    /// Progress lookback in frames.
    pub delta: usize,
    /// Frames of sustained no-progress before the stagnation flag raises.
    pub t_stag: u32,
    pub ssim_stag: f64,
    pub flow_stag: f64,
    /// Frames without a selection before falling back to SCAN.
    pub mstp_lost_limit: u32,
    /// Anchor revisits that trigger LOOP_BREAKER.
    pub loop_revisit_count: u32,
    /// Consecutive consistent selections required to leave SCAN.
    pub stability_frames: u32,
    /// Ring buffer capacity (must exceed `delta`).
    pub ring_capacity: usize,
    /// Idle frames at the start of the local-recovery maneuver.
    pub recover_idle_frames: u32,
    /// Yaw taps away from the last selection side that end the maneuver.
    pub recover_turn_taps: u32,
    pub escape_min_deg: f64,
    pub escape_max_deg: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams {
            eps_x_in: 0.03,
            eps_x_out: 0.08,
            eps_y_in: 0.05,
            eps_y_out: 0.12,
            k_gain: 15.0,
            n_max: 4,
            tau_on: 5,
            delta: 10,
            t_stag: 45,
            ssim_stag: 0.98,
            flow_stag: 0.3,
            mstp_lost_limit: 12,
            loop_revisit_count: 3,
            stability_frames: 3,
            ring_capacity: 16,
            recover_idle_frames: 6,
            recover_turn_taps: 2,
            escape_min_deg: 90.0,
            escape_max_deg: 180.0,
        }
    }
}

/// `clip(floor(k * ||e||), 0, n_max)`.
pub fn pulse_taps(error_norm: f64, k: f64, n_max: u32) -> u32 {
    let raw = (k * error_norm).floor();
    if raw <= 0.0 {
        0
    } else if raw >= n_max as f64 {
        n_max
    } else {
        raw as u32
    }
}

/// Pulse planner with hysteresis. While latched and inside the outer band
/// no pulses are emitted; the latch clears only once the outer threshold is
/// crossed and re-sets only when both axes come inside the inner band. When
/// pulsing, the axis with the larger error magnitude wins (horizontal on a
/// tie) and the direction follows the error sign.
pub fn pulse_plan(e: ErrorVec, p: &ControlParams, centered_latch: bool) -> (CamDir, u32, bool) {
    let inside_outer =
        (e.ex.abs() / p.eps_x_out).max(e.ey.abs() / p.eps_y_out) < 1.0;
    if centered_latch && inside_outer {
        return (CamDir::None, 0, true);
    }
    let taps = pulse_taps(e.norm(), p.k_gain, p.n_max);
    let inner_now = e.ex.abs() < p.eps_x_in && e.ey.abs() < p.eps_y_in;
    if taps == 0 {
        return (CamDir::None, 0, inner_now);
    }
    let dir = if e.ex.abs() >= e.ey.abs() {
        if e.ex < 0.0 {
            CamDir::Left
        } else {
            CamDir::Right
        }
    } else if e.ey < 0.0 {
        CamDir::Up
    } else {
        CamDir::Down
    };
    (dir, taps, inner_now)
}

/// The forward flag: open iff heading has stayed aligned for `tau_on`
/// frames and the FSM sits in a forward-capable state.
pub fn update_forward_gate(state: FsmState, aligned_since: u32, p: &ControlParams) -> bool {
    forward_capable(state) && aligned_since >= p.tau_on
}

/// Progress signals over the frame ring: relative selection-area change
/// across the lookback, SSIM against the frame `delta` ago, and the median
/// flow of the newest pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressSignals {
    pub area_delta: f64,
    pub ssim_recent: f64,
    pub flow_mag: f64,
}

impl ProgressSignals {
    /// Before the ring holds delta+1 frames there is no evidence of
    /// stagnation: growing area, zero similarity, unbounded flow.
    pub fn neutral() -> Self {
        ProgressSignals { area_delta: 1.0, ssim_recent: 0.0, flow_mag: f64::INFINITY }
    }

    /// Instantaneous no-progress test; the FSM requires it to hold for
    /// `t_stag` consecutive frames before escalating.
    pub fn stagnant_now(&self, p: &ControlParams) -> bool {
        self.ssim_recent > p.ssim_stag && self.flow_mag < p.flow_stag && self.area_delta <= 0.0
    }
}

pub fn progress_update(
    ring: &VecDeque<Frame>,
    areas: &VecDeque<f64>,
    p: &ControlParams,
) -> ProgressSignals {
    if ring.len() < p.delta + 1 {
        return ProgressSignals::neutral();
    }
    let newest = ring.len() - 1;
    let oldest = newest - p.delta;
    let area_now = areas[newest];
    let area_then = areas[oldest];
    let area_delta = (area_now - area_then) / area_then.max(1.0);
    let ssim_recent = ssim(&ring[newest], &ring[oldest]).unwrap_or(0.0);
    let flow_mag = median_flow(&ring[newest - 1], &ring[newest]).unwrap_or(0.0);
    ProgressSignals { area_delta, ssim_recent, flow_mag }
}

/// Everything the transition function looks at. Assembled per frame by the
/// controller so that `fsm_step` stays a pure function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsmInputs {
    pub mstp_present: bool,
    /// Consecutive frames with a selection consistent with its predecessor.
    pub stable_count: u32,
    /// Degrees swept since SCAN was entered.
    pub sweep_degrees: f64,
    /// Stagnation sustained for `t_stag` frames.
    pub stagnant: bool,
    /// Consecutive frames without a selection.
    pub lost_count: u32,
    /// Revisit count of the anchor matching the current frame hash.
    pub anchor_revisits: u32,
    /// |ex| when a selection is present.
    pub abs_ex: Option<f64>,
    pub centered_latch: bool,
    /// Whether the forward gate would open this frame.
    pub forward_gate: bool,
    /// Scripted maneuver of the current recovery state has finished.
    pub maneuver_done: bool,
}

/// The FSM transition table. Pure: identical inputs yield identical output.
///
/// SCAN leaves for ALIGN once a selection has been stable for
/// `stability_frames`, or escalates to ESCAPE_STUCK after a fruitless full
/// sweep. ALIGN opens into ADVANCE with the forward gate. ADVANCE drops to
/// REFINE inside the hysteresis band, falls back to SCAN when the selection
/// stays lost, and escalates to RECOVER_LOCAL on sustained stagnation (as do
/// ALIGN and REFINE, which would otherwise deadlock with no selection or a
/// sub-pulse error). Recovery states run their scripts and return to SCAN;
/// RECOVER_LOCAL escalates to ESCAPE_STUCK if stagnation survives the
/// maneuver. Any state yields to LOOP_BREAKER on the r-th anchor revisit.
pub fn fsm_step(
    state: FsmState,
    inputs: &FsmInputs,
    profile: FsmProfile,
    p: &ControlParams,
) -> FsmState {
    if profile.recovery
        && state != FsmState::LoopBreaker
        && inputs.anchor_revisits >= p.loop_revisit_count
    {
        return FsmState::LoopBreaker;
    }
    match state {
        FsmState::Scan => {
            if inputs.stable_count >= p.stability_frames {
                FsmState::Align
            } else if profile.recovery && inputs.sweep_degrees >= 360.0 {
                FsmState::EscapeStuck
            } else {
                FsmState::Scan
            }
        }
        FsmState::Align => {
            if profile.recovery && inputs.stagnant {
                FsmState::RecoverLocal
            } else if inputs.lost_count >= p.mstp_lost_limit {
                FsmState::Scan
            } else if inputs.forward_gate {
                FsmState::Advance
            } else {
                FsmState::Align
            }
        }
        FsmState::Advance => {
            if profile.recovery && inputs.stagnant {
                FsmState::RecoverLocal
            } else if inputs.lost_count >= p.mstp_lost_limit {
                FsmState::Scan
            } else if profile.refine
                && inputs
                    .abs_ex
                    .map(|ex| ex > p.eps_x_in && ex <= p.eps_x_out)
                    .unwrap_or(false)
            {
                FsmState::Refine
            } else {
                FsmState::Advance
            }
        }
        FsmState::Refine => {
            if profile.recovery && inputs.stagnant {
                FsmState::RecoverLocal
            } else if inputs.lost_count >= p.mstp_lost_limit {
                FsmState::Scan
            } else if inputs.centered_latch {
                FsmState::Advance
            } else {
                FsmState::Refine
            }
        }
        FsmState::RecoverLocal => {
            if inputs.maneuver_done {
                if inputs.stagnant {
                    FsmState::EscapeStuck
                } else {
                    FsmState::Scan
                }
            } else {
                FsmState::RecoverLocal
            }
        }
        FsmState::EscapeStuck => {
            if inputs.maneuver_done {
                FsmState::Scan
            } else {
                FsmState::EscapeStuck
            }
        }
        FsmState::LoopBreaker => {
            if inputs.maneuver_done {
                FsmState::Scan
            } else {
                FsmState::LoopBreaker
            }
        }
    }
}

/// Loop-anchor bookkeeping: frame hashes recorded on a fixed cadence, with
/// revisits counted when a much later frame hashes back to within a small
/// Hamming ball of a recorded anchor.
#[derive(Debug, Clone)]
pub struct AnchorTracker {
    record_period: u64,
    min_age: u64,
    refractory: u64,
    max_hamming: u32,
    anchors: Vec<Anchor>,
    frames_seen: u64,
}

#[derive(Debug, Clone)]
struct Anchor {
    hash: u64,
    t_recorded: u64,
    revisits: u32,
    last_revisit: u64,
}

impl Default for AnchorTracker {
    fn default() -> Self {
        AnchorTracker {
            record_period: 30,
            min_age: 90,
            refractory: 60,
            max_hamming: 6,
            anchors: Vec::new(),
            frames_seen: 0,
        }
    }
}

impl AnchorTracker {
    /// Feeds one frame hash; returns the revisit count of the matching
    /// anchor (0 when none matches).
    pub fn observe(&mut self, hash: u64, now: u64) -> u32 {
        self.frames_seen += 1;
        let mut matched: Option<&mut Anchor> = None;
        let mut best = u32::MAX;
        for a in &mut self.anchors {
            let d = crate::vision::hamming(hash, a.hash);
            if d <= self.max_hamming && d < best {
                best = d;
                matched = Some(a);
            }
        }
        if let Some(a) = matched {
            if now.saturating_sub(a.t_recorded) >= self.min_age
                && now.saturating_sub(a.last_revisit) >= self.refractory
            {
                a.revisits += 1;
                a.last_revisit = now;
            }
            return a.revisits;
        }
        if self.frames_seen % self.record_period == 1 {
            self.anchors.push(Anchor { hash, t_recorded: now, revisits: 0, last_revisit: now });
        }
        0
    }

    /// Clears the revisit count of anchors matching `hash`; called once a
    /// loop break has been committed so the same anchor must accumulate
    /// fresh revisits before triggering again.
    pub fn acknowledge(&mut self, hash: u64) {
        for a in &mut self.anchors {
            if crate::vision::hamming(hash, a.hash) <= self.max_hamming {
                a.revisits = 0;
            }
        }
    }
}

/// Mutable controller state: FSM position, gates, counters, the frame ring
/// and scripted-maneuver bookkeeping.
#[derive(Debug, Clone)]
pub struct ControllerState {
    pub fsm: FsmState,
    pub forward: bool,
    pub aligned_since: u32,
    pub centered_latch: bool,
    pub stagnation_clock: u32,
    pub mstp_lost_count: u32,
    pub scan_sweep_degrees: f64,
    pub stable_count: u32,
    pub state_dwell: [u64; 7],
    pub frames: u64,
    ring: VecDeque<Frame>,
    areas: VecDeque<f64>,
    recover_phase: u32,
    escape_remaining: u32,
    escape_dir: CamDir,
    break_remaining: u32,
    break_dir: CamDir,
    last_error: Option<ErrorVec>,
    last_yaw_delta_deg: f64,
    prev_bbox: Option<BBox>,
}

impl ControllerState {
    fn new() -> Self {
        ControllerState {
            fsm: FsmState::Scan,
            forward: false,
            aligned_since: 0,
            centered_latch: false,
            stagnation_clock: 0,
            mstp_lost_count: 0,
            scan_sweep_degrees: 0.0,
            stable_count: 0,
            state_dwell: [0; 7],
            frames: 0,
            ring: VecDeque::new(),
            areas: VecDeque::new(),
            recover_phase: 0,
            escape_remaining: 0,
            escape_dir: CamDir::Left,
            break_remaining: 0,
            break_dir: CamDir::Left,
            last_error: None,
            last_yaw_delta_deg: 0.0,
            prev_bbox: None,
        }
    }
}

/// Per-decision result handed back to the harness.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub action: Action,
    pub state: FsmState,
    pub error: Option<ErrorVec>,
    pub signals: ProgressSignals,
    pub forward: bool,
    /// Set on the frame the FSM commits ALIGN -> ADVANCE: the sector and box
    /// the agent is now steering into (consumed by memory association).
    pub committed: Option<(u8, BBox)>,
}

/// The sequential control loop: perceive -> progress -> FSM -> act.
/// One controller owns one avatar; independent loops can run concurrently.
pub struct Controller {
    pub params: ControlParams,
    pub profile: FsmProfile,
    pub state: ControllerState,
    screen: (u32, u32),
    deg_per_tap: f64,
    px_per_deg: f64,
    fov_deg: f64,
    stability_iou: f64,
}

impl Controller {
    pub fn new(
        params: ControlParams,
        profile: FsmProfile,
        screen: (u32, u32),
        fov_deg: f64,
        deg_per_tap: f64,
    ) -> Self {
        let px_per_deg = screen.0 as f64 / fov_deg;
        Controller {
            params,
            profile,
            state: ControllerState::new(),
            screen,
            deg_per_tap,
            px_per_deg,
            fov_deg,
            stability_iou: 0.5,
        }
    }

    pub fn reset(&mut self) {
        self.state = ControllerState::new();
    }

    /// Consistency of the current selection with the previous one, after
    /// compensating the screen shift induced by the yaw we commanded last
    /// frame. Without compensation the SCAN sweep itself would break the
    /// stability test for any but the widest boxes.
    fn selection_stable(&self, bbox: &BBox) -> bool {
        match &self.state.prev_bbox {
            None => false,
            Some(prev) => {
                let shift = -self.state.last_yaw_delta_deg * self.px_per_deg;
                let moved = BBox::new(prev.x1 + shift, prev.y1, prev.x2 + shift, prev.y2);
                crate::perception::iou(&moved, bbox) >= self.stability_iou
            }
        }
    }

    fn pick_break_target(&self, hist: &SectorHistogram, penalties: &[f64]) -> u8 {
        let k = hist.k();
        let unexplored: Vec<u8> = (1..=k).filter(|&s| hist.count(s) == 0).collect();
        let pool: Vec<u8> = if unexplored.is_empty() { (1..=k).collect() } else { unexplored };
        let mut best = pool[0];
        for &s in &pool[1..] {
            if penalties[(s - 1) as usize] < penalties[(best - 1) as usize] {
                best = s;
            }
        }
        best
    }

    pub fn decide<R: Rng>(
        &mut self,
        frame: &Frame,
        selection: Option<&MstpSelection>,
        hist: &SectorHistogram,
        sector_penalties: &[f64],
        anchor_revisits: u32,
        rng: &mut R,
    ) -> StepOutput {
        let p = self.params.clone();
        // Progress signals over the ring, then the sustained-stagnation clock.
        if self.state.ring.len() == p.ring_capacity {
            self.state.ring.pop_front();
            self.state.areas.pop_front();
        }
        self.state.ring.push_back(frame.clone());
        self.state
            .areas
            .push_back(selection.map(|s| s.candidate.bbox.area()).unwrap_or(0.0));
        let signals = progress_update(&self.state.ring, &self.state.areas, &p);
        if signals.stagnant_now(&p) {
            self.state.stagnation_clock += 1;
        } else {
            self.state.stagnation_clock = 0;
        }

        // Error, alignment dwell, loss and stability counters.
        let error = selection.map(|s| error_vector(s.candidate.bbox.center(), self.screen));
        let heading_aligned = error.map(|e| e.ex.abs() < p.eps_x_out).unwrap_or(false);
        if heading_aligned {
            self.state.aligned_since += 1;
        } else {
            self.state.aligned_since = 0;
        }
        match selection {
            Some(sel) => {
                self.state.mstp_lost_count = 0;
                self.state.stable_count = if self.selection_stable(&sel.candidate.bbox) {
                    self.state.stable_count + 1
                } else {
                    1
                };
                self.state.prev_bbox = Some(sel.candidate.bbox);
                self.state.last_error = error;
            }
            None => {
                self.state.mstp_lost_count += 1;
                self.state.stable_count = 0;
                self.state.prev_bbox = None;
            }
        }

        let maneuver_done = match self.state.fsm {
            FsmState::RecoverLocal => self.state.recover_phase > p.recover_idle_frames,
            FsmState::EscapeStuck => self.state.escape_remaining == 0,
            FsmState::LoopBreaker => self.state.break_remaining == 0,
            _ => false,
        };
        let inputs = FsmInputs {
            mstp_present: selection.is_some(),
            stable_count: self.state.stable_count,
            sweep_degrees: self.state.scan_sweep_degrees,
            stagnant: self.state.stagnation_clock >= p.t_stag,
            lost_count: self.state.mstp_lost_count,
            anchor_revisits,
            abs_ex: error.map(|e| e.ex.abs()),
            centered_latch: self.state.centered_latch,
            forward_gate: update_forward_gate(self.state.fsm, self.state.aligned_since, &p),
            maneuver_done,
        };
        let prev_fsm = self.state.fsm;
        let next = fsm_step(prev_fsm, &inputs, self.profile, &p);

        // Entry actions for freshly entered states.
        if next != prev_fsm {
            match next {
                FsmState::Scan => {
                    self.state.scan_sweep_degrees = 0.0;
                    self.state.stable_count = 0;
                }
                FsmState::RecoverLocal => {
                    self.state.recover_phase = 0;
                }
                FsmState::EscapeStuck => {
                    let span = p.escape_max_deg - p.escape_min_deg;
                    let degrees = p.escape_min_deg + span * rng.gen::<f64>();
                    self.state.escape_remaining = (degrees / self.deg_per_tap).round() as u32;
                    self.state.escape_dir =
                        if rng.gen::<f64>() < 0.5 { CamDir::Left } else { CamDir::Right };
                }
                FsmState::LoopBreaker => {
                    let target = self.pick_break_target(hist, sector_penalties);
                    let offset_deg =
                        ((target as f64 - 0.5) / hist.k() as f64 - 0.5) * self.fov_deg;
                    self.state.break_remaining =
                        (offset_deg.abs() / self.deg_per_tap).round() as u32;
                    self.state.break_dir =
                        if offset_deg < 0.0 { CamDir::Left } else { CamDir::Right };
                }
                _ => {}
            }
        }
        let committed = (prev_fsm == FsmState::Align && next == FsmState::Advance)
            .then(|| selection.map(|s| (s.candidate.sector, s.candidate.bbox)))
            .flatten();

        // Forward flag for the new state, then the camera pulse.
        let f_next = update_forward_gate(next, self.state.aligned_since, &p);
        let forward_delta = match (self.state.forward, f_next) {
            (false, true) => ForwardDelta::Press,
            (true, false) => ForwardDelta::Release,
            _ => ForwardDelta::Hold,
        };
        let (cam, taps) = match next {
            FsmState::Scan => (CamDir::Left, 1),
            FsmState::Align | FsmState::Advance | FsmState::Refine => match error {
                Some(e) => {
                    let (dir, taps, latch) = pulse_plan(e, &p, self.state.centered_latch);
                    self.state.centered_latch = latch;
                    (dir, taps)
                }
                None => (CamDir::None, 0),
            },
            FsmState::RecoverLocal => {
                let phase = self.state.recover_phase;
                self.state.recover_phase += 1;
                if phase < p.recover_idle_frames {
                    (CamDir::None, 0)
                } else {
                    let away = match self.state.last_error {
                        Some(e) if e.ex > 0.0 => CamDir::Left,
                        Some(_) => CamDir::Right,
                        None => CamDir::Left,
                    };
                    (away, p.recover_turn_taps)
                }
            }
            FsmState::EscapeStuck => {
                let burst = self.state.escape_remaining.min(p.n_max);
                self.state.escape_remaining -= burst;
                if burst == 0 {
                    (CamDir::None, 0)
                } else {
                    (self.state.escape_dir, burst)
                }
            }
            FsmState::LoopBreaker => {
                let burst = self.state.break_remaining.min(p.n_max);
                self.state.break_remaining -= burst;
                if burst == 0 {
                    (CamDir::None, 0)
                } else {
                    (self.state.break_dir, burst)
                }
            }
        };
        if next == FsmState::Scan {
            self.state.scan_sweep_degrees += taps as f64 * self.deg_per_tap;
        }
        self.state.last_yaw_delta_deg = match cam {
            CamDir::Left => -(taps as f64) * self.deg_per_tap,
            CamDir::Right => taps as f64 * self.deg_per_tap,
            _ => 0.0,
        };

        self.state.fsm = next;
        self.state.forward = f_next;
        self.state.state_dwell[next.index()] += 1;
        self.state.frames += 1;

        StepOutput {
            action: Action::new(cam, taps, forward_delta),
            state: next,
            error,
            signals,
            forward: f_next,
            committed,
        }
    }
}
