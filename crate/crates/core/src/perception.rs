//! Candidate transition points, sector discretization, score combination,
//! and the simulated detector that stands in for a trained backbone using
//! ground-truth portal projections plus a configurable noise/bias model.

use crate::vision::{embed, Embedding, Frame};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Axis-aligned screen-space box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }
}

/// Intersection-over-union of two boxes, in [0,1].
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Horizontal sector index in [1,K] for a box center. The field of view is
/// split into K equal bins; the right edge clamps into sector K.
pub fn sector_of(bbox: &BBox, k: u8, screen_width: u32) -> u8 {
    let (cx, _) = bbox.center();
    let raw = 1 + ((k as f64) * cx / screen_width as f64).floor() as i64;
    raw.clamp(1, k as i64) as u8
}

/// One candidate transition point: a screen box, detector confidence, a
/// crop embedding, its sector, and the walkable fraction sampled under the
/// box base (consumed by the free-space heuristic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct STPCandidate {
    pub bbox: BBox,
    pub det_score: f64,
    pub embedding: Embedding,
    pub sector: u8,
    pub free_space: f64,
}

/// The winning candidate at frame `t` with its combined score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MstpSelection {
    pub candidate: STPCandidate,
    pub final_score: f64,
    pub t: u64,
}

/// Combination weights for candidate scoring. The weights need not be
/// normalized; only the argmax matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Per-sector prior multiplying the sector-history fraction (length K).
    pub sector_prior: Vec<f64>,
    /// Weight of the walkable free-space fraction under the box base.
    pub free_space_weight: f64,
}

impl ScoreWeights {
    pub fn defaults(k: u8) -> Self {
        ScoreWeights {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.5,
            sector_prior: vec![0.25; k as usize],
            free_space_weight: 0.25,
        }
    }

    pub fn k(&self) -> u8 {
        self.sector_prior.len() as u8
    }
}

/// Sliding histogram of selected sectors over the last H frames. Frames
/// without a selection occupy a window slot but count toward no sector,
/// so the counts sum to at most H.
#[derive(Debug, Clone)]
pub struct SectorHistogram {
    window: std::collections::VecDeque<Option<u8>>,
    counts: Vec<u32>,
    horizon: usize,
}

impl SectorHistogram {
    pub fn new(k: u8, horizon: usize) -> Self {
        SectorHistogram {
            window: std::collections::VecDeque::with_capacity(horizon),
            counts: vec![0; k as usize],
            horizon,
        }
    }

    pub fn push(&mut self, sector: Option<u8>) {
        if self.window.len() == self.horizon {
            if let Some(Some(old)) = self.window.pop_front() {
                self.counts[(old - 1) as usize] -= 1;
            }
        }
        if let Some(s) = sector {
            self.counts[(s - 1) as usize] += 1;
        }
        self.window.push_back(sector);
    }

    pub fn count(&self, sector: u8) -> u32 {
        self.counts[(sector - 1) as usize]
    }

    /// Count of `sector` divided by the window length H (not the fill level).
    pub fn fraction(&self, sector: u8) -> f64 {
        self.count(sector) as f64 / self.horizon as f64
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn k(&self) -> u8 {
        self.counts.len() as u8
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Temporal consistency with the previous selection: IoU plus a Gaussian
/// kernel on sector distance, weighted 0.7/0.3 so an identical continuation
/// scores exactly 1.
pub fn temporal_score(candidate: &STPCandidate, prev: Option<&MstpSelection>) -> f64 {
    match prev {
        None => 0.0,
        Some(sel) => {
            let d_sector = candidate.sector as f64 - sel.candidate.sector as f64;
            0.7 * iou(&candidate.bbox, &sel.candidate.bbox) + 0.3 * (-(d_sector * d_sector) / 2.0).exp()
        }
    }
}

/// Additive geometric/free-space heuristic: the sector prior scaled by the
/// recent-history fraction of the candidate's sector, plus weighted free
/// space under the box base.
pub fn psi_score(candidate: &STPCandidate, hist: &SectorHistogram, free_space: f64, weights: &ScoreWeights) -> f64 {
    weights.sector_prior[(candidate.sector - 1) as usize] * hist.fraction(candidate.sector)
        + weights.free_space_weight * free_space
}

/// Embedding library for the optional retrieval score hook.
#[derive(Debug, Clone, Default)]
pub struct RetrievalLibrary {
    pub templates: Vec<Embedding>,
}

/// Optional retrieval-based score against an offline template library.
/// Ships disabled: pass `None` to [`select_mstp`] and the term contributes 0.
pub trait RetrievalScorer {
    fn score(&self, candidate: &Embedding, library: &RetrievalLibrary) -> f64;
}

/// Selects the highest-scoring candidate:
/// `s = alpha*det + beta*ret + gamma*temporal + psi - penalty(sector)`.
///
/// Ties break deterministically by higher detector score, then lower sector
/// index, then smaller x1. Returns `None` for an empty candidate list.
pub fn select_mstp(
    candidates: &[STPCandidate],
    prev: Option<&MstpSelection>,
    hist: &SectorHistogram,
    weights: &ScoreWeights,
    penalty: &dyn Fn(u8) -> f64,
    retrieval: Option<(&dyn RetrievalScorer, &RetrievalLibrary)>,
    t: u64,
) -> Option<MstpSelection> {
    let mut best: Option<(f64, &STPCandidate)> = None;
    for cand in candidates {
        let ret = match retrieval {
            Some((scorer, lib)) => scorer.score(&cand.embedding, lib),
            None => 0.0,
        };
        let score = weights.alpha * cand.det_score
            + weights.beta * ret
            + weights.gamma * temporal_score(cand, prev)
            + psi_score(cand, hist, cand.free_space, weights)
            - penalty(cand.sector);
        let better = match best {
            None => true,
            Some((bs, bc)) => {
                score > bs
                    || (score == bs
                        && (cand.det_score > bc.det_score
                            || (cand.det_score == bc.det_score
                                && (cand.sector < bc.sector
                                    || (cand.sector == bc.sector && cand.bbox.x1 < bc.bbox.x1)))))
            }
        };
        if better {
            best = Some((score, cand));
        }
    }
    best.map(|(score, cand)| MstpSelection { candidate: cand.clone(), final_score: score, t })
}

/// Detection-relevant portal tags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortalTags {
    pub dark: bool,
    pub narrow: bool,
    pub decoy_adjacent: bool,
}

/// Ground-truth portal projection delivered by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortalProjection {
    pub portal_id: u32,
    pub bbox: BBox,
    pub occlusion: f64,
    pub tags: PortalTags,
    pub free_space: f64,
}

/// Noise/bias model for the simulated detector. Deterministic given the
/// caller-owned RNG stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Per-portal probability of emitting no candidate.
    pub miss_prob: f64,
    /// Std-dev of Gaussian noise added to box corners, in pixels.
    pub jitter_px: f64,
    /// Multiplicative salience per sector (length K).
    pub sector_bias: Vec<f64>,
    /// Expected spurious candidates per frame (Poisson).
    pub decoy_rate: f64,
    /// Extra miss probability for portals tagged dark.
    pub dark_miss_boost: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn zero(k: u8) -> Self {
        NoiseModel {
            miss_prob: 0.0,
            jitter_px: 0.0,
            sector_bias: vec![1.0; k as usize],
            decoy_rate: 0.0,
            dark_miss_boost: 0.0,
            seed: 0,
        }
    }
}

fn uniform_f64<R: Rng>(rng: &mut R) -> f64 {
    rng.gen::<f64>()
}

/// Box-Muller standard normal draw.
fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1 = uniform_f64(rng).max(f64::MIN_POSITIVE);
    let u2 = uniform_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Knuth inversion Poisson sampler; fine for the small rates used here.
fn poisson<R: Rng>(rng: &mut R, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let limit = (-lambda).exp();
    let mut k = 0u32;
    let mut p = 1.0;
    loop {
        p *= uniform_f64(rng);
        if p <= limit {
            return k;
        }
        k += 1;
        if k > 10_000 {
            return k;
        }
    }
}

fn crop(frame: &Frame, bbox: &BBox) -> Frame {
    let x1 = bbox.x1.floor().clamp(0.0, (frame.width - 1) as f64) as u32;
    let y1 = bbox.y1.floor().clamp(0.0, (frame.height - 1) as f64) as u32;
    let x2 = bbox.x2.ceil().clamp((x1 + 1) as f64, frame.width as f64) as u32;
    let y2 = bbox.y2.ceil().clamp((y1 + 1) as f64, frame.height as f64) as u32;
    let mut pixels = Vec::with_capacity(((x2 - x1) * (y2 - y1)) as usize);
    for y in y1..y2 {
        for x in x1..x2 {
            pixels.push(frame.get(x, y));
        }
    }
    Frame { width: x2 - x1, height: y2 - y1, pixels, t: frame.t }
}

fn clamp_box(bbox: BBox, w: u32, h: u32) -> BBox {
    let mut x1 = bbox.x1.min(bbox.x2);
    let mut x2 = bbox.x1.max(bbox.x2);
    let mut y1 = bbox.y1.min(bbox.y2);
    let mut y2 = bbox.y1.max(bbox.y2);
    x1 = x1.clamp(0.0, (w as f64 - 2.0).max(0.0));
    y1 = y1.clamp(0.0, (h as f64 - 2.0).max(0.0));
    x2 = x2.clamp(x1 + 1.0, w as f64);
    y2 = y2.clamp(y1 + 1.0, h as f64);
    BBox::new(x1, y1, x2, y2)
}

/// Turns ground-truth portal projections into detector candidates.
///
/// Each visible portal emits a candidate with probability
/// `(1 - miss_prob - dark_miss_boost*[dark]) * (1 - occlusion)`; its score is
/// `sector_bias[sector] * (1 - occlusion)` clipped to [0,1] and its corners
/// are jittered with N(0, jitter_px^2). Poisson(decoy_rate) spurious boxes
/// with scores in [0.3,0.7] are appended. Fully stream-deterministic.
pub fn simulated_detect<R: Rng>(
    projections: &[PortalProjection],
    frame: &Frame,
    noise: &NoiseModel,
    rng: &mut R,
) -> Vec<STPCandidate> {
    let k = noise.sector_bias.len() as u8;
    let (w, h) = (frame.width, frame.height);
    let mut out = Vec::new();
    for proj in projections {
        let miss = noise.miss_prob + if proj.tags.dark { noise.dark_miss_boost } else { 0.0 };
        let p_emit = (1.0 - miss).clamp(0.0, 1.0) * (1.0 - proj.occlusion).clamp(0.0, 1.0);
        let roll = uniform_f64(rng);
        if roll >= p_emit {
            continue;
        }
        let jx1 = normal(rng) * noise.jitter_px;
        let jy1 = normal(rng) * noise.jitter_px;
        let jx2 = normal(rng) * noise.jitter_px;
        let jy2 = normal(rng) * noise.jitter_px;
        let bbox = clamp_box(
            BBox::new(proj.bbox.x1 + jx1, proj.bbox.y1 + jy1, proj.bbox.x2 + jx2, proj.bbox.y2 + jy2),
            w,
            h,
        );
        let sector = sector_of(&bbox, k, w);
        let det_score =
            (noise.sector_bias[(sector - 1) as usize] * (1.0 - proj.occlusion)).clamp(0.0, 1.0);
        let embedding = embed(&crop(frame, &bbox));
        out.push(STPCandidate { bbox, det_score, embedding, sector, free_space: proj.free_space });
    }
    let decoys = poisson(rng, noise.decoy_rate);
    for _ in 0..decoys {
        let bw = (0.05 + 0.15 * uniform_f64(rng)) * w as f64;
        let bh = (0.08 + 0.22 * uniform_f64(rng)) * h as f64;
        let cx = uniform_f64(rng) * w as f64;
        let cy = uniform_f64(rng) * h as f64;
        let det_score = 0.3 + 0.4 * uniform_f64(rng);
        let bbox = clamp_box(BBox::new(cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0), w, h);
        let sector = sector_of(&bbox, k, w);
        let embedding = embed(&crop(frame, &bbox));
        out.push(STPCandidate { bbox, det_score, embedding, sector, free_space: 0.0 });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cand(bbox: BBox, det: f64, sector: u8) -> STPCandidate {
        STPCandidate {
            bbox,
            det_score: det,
            embedding: Embedding { values: vec![1.0; 1] },
            sector,
            free_space: 0.0,
        }
    }

    #[test]
    fn sector_of_examples() {
        let k = 8;
        let w = 800;
        assert_eq!(sector_of(&BBox::new(0.0, 0.0, 0.0, 1.0), k, w), 1);
        assert_eq!(sector_of(&BBox::new(799.9, 0.0, 799.9, 1.0), k, w), 8);
        assert_eq!(sector_of(&BBox::new(400.0, 0.0, 400.0, 1.0), k, w), 5);
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        let disjoint = BBox::new(5.0, 5.0, 6.0, 6.0);
        assert_eq!(iou(&a, &disjoint), 0.0);
        let b = BBox::new(1.0, 0.0, 3.0, 2.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn temporal_score_examples() {
        let c = cand(BBox::new(10.0, 10.0, 20.0, 20.0), 0.9, 3);
        assert_eq!(temporal_score(&c, None), 0.0);

        let same = MstpSelection { candidate: c.clone(), final_score: 1.0, t: 0 };
        assert!((temporal_score(&c, Some(&same)) - 1.0).abs() < 1e-12);

        let far = cand(BBox::new(100.0, 100.0, 120.0, 120.0), 0.9, 6);
        let expected = 0.3 * (-4.5f64).exp();
        assert!((temporal_score(&far, Some(&same)) - expected).abs() < 1e-12);
    }

    #[test]
    fn psi_score_examples() {
        let k = 8;
        let mut weights = ScoreWeights::defaults(k);
        weights.sector_prior = vec![1.0; k as usize];
        weights.free_space_weight = 0.0;
        let hist_empty = SectorHistogram::new(k, 30);
        let c = cand(BBox::new(0.0, 0.0, 10.0, 10.0), 0.5, 2);
        assert_eq!(psi_score(&c, &hist_empty, 0.0, &weights), 0.0);

        let mut hist_full = SectorHistogram::new(k, 30);
        for _ in 0..30 {
            hist_full.push(Some(2));
        }
        assert!((psi_score(&c, &hist_full, 0.0, &weights) - 1.0).abs() < 1e-12);

        let mut w2 = ScoreWeights::defaults(k);
        w2.sector_prior = vec![0.5; k as usize];
        w2.free_space_weight = 0.2;
        let mut hist_partial = SectorHistogram::new(k, 30);
        for _ in 0..12 {
            hist_partial.push(Some(2));
        }
        for _ in 0..18 {
            hist_partial.push(None);
        }
        let got = psi_score(&c, &hist_partial, 0.5, &w2);
        assert!((got - 0.3).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn select_mstp_empty_and_single() {
        let hist = SectorHistogram::new(8, 30);
        let weights = ScoreWeights::defaults(8);
        let no_penalty = |_: u8| 0.0;
        assert!(select_mstp(&[], None, &hist, &weights, &no_penalty, None, 0).is_none());

        let only = cand(BBox::new(5.0, 5.0, 15.0, 15.0), 0.1, 1);
        let sel = select_mstp(&[only.clone()], None, &hist, &weights, &no_penalty, None, 7).unwrap();
        assert_eq!(sel.candidate, only);
        assert_eq!(sel.t, 7);
    }

    #[test]
    fn select_mstp_penalty_flips_winner() {
        let hist = SectorHistogram::new(8, 30);
        let mut weights = ScoreWeights::defaults(8);
        weights.gamma = 0.0;
        weights.free_space_weight = 0.0;
        weights.sector_prior = vec![0.0; 8];
        let a = cand(BBox::new(0.0, 0.0, 10.0, 10.0), 0.8, 1);
        let b = cand(BBox::new(700.0, 0.0, 710.0, 10.0), 0.8, 8);
        let no_penalty = |_: u8| 0.0;
        let sel = select_mstp(&[a.clone(), b.clone()], None, &hist, &weights, &no_penalty, None, 0).unwrap();
        assert_eq!(sel.candidate.sector, 1, "tie-break prefers lower sector");

        let penalize_first = |s: u8| if s == 1 { 0.5 } else { 0.0 };
        let sel = select_mstp(&[a, b], None, &hist, &weights, &penalize_first, None, 0).unwrap();
        assert_eq!(sel.candidate.sector, 8);
    }

    #[test]
    fn simulated_detect_zero_noise_single_portal() {
        let frame = Frame::filled(320, 180, 100, 0);
        let noise = NoiseModel::zero(8);
        let proj = PortalProjection {
            portal_id: 3,
            bbox: BBox::new(100.0, 40.0, 160.0, 140.0),
            occlusion: 0.0,
            tags: PortalTags::default(),
            free_space: 0.9,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cands = simulated_detect(&[proj.clone()], &frame, &noise, &mut rng);
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].bbox, proj.bbox);
        assert_eq!(cands[0].det_score, 1.0);
        assert_eq!(cands[0].free_space, 0.9);
    }

    #[test]
    fn simulated_detect_always_misses_at_prob_one() {
        let frame = Frame::filled(320, 180, 100, 0);
        let mut noise = NoiseModel::zero(8);
        noise.miss_prob = 1.0;
        let proj = PortalProjection {
            portal_id: 0,
            bbox: BBox::new(10.0, 10.0, 50.0, 90.0),
            occlusion: 0.0,
            tags: PortalTags::default(),
            free_space: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert!(simulated_detect(&[proj.clone()], &frame, &noise, &mut rng).is_empty());
        }
    }

    #[test]
    fn simulated_detect_deterministic_per_seed() {
        let frame = Frame::filled(320, 180, 128, 0);
        let mut noise = NoiseModel::zero(8);
        noise.miss_prob = 0.3;
        noise.jitter_px = 2.0;
        noise.decoy_rate = 1.0;
        let proj = PortalProjection {
            portal_id: 0,
            bbox: BBox::new(60.0, 30.0, 120.0, 150.0),
            occlusion: 0.2,
            tags: PortalTags { dark: true, ..Default::default() },
            free_space: 0.5,
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..50)
                .map(|_| simulated_detect(&[proj.clone()], &frame, &noise, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
