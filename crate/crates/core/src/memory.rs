//! Visual memory bank: novelty-gated insertion into a quarantine partition,
//! promotion into the active (queryable) set, association of entries with
//! sector decisions, IoU-based outcome labeling, and penalty computation
//! used to re-rank candidate sectors away from previously failed choices.
//!
//! Search is an exact scan: at the capacities used here (hundreds of
//! entries) brute force is fast, and exactness doubles as the test oracle.

use crate::perception::{iou, BBox, MstpSelection};
use crate::vision::{cosine, hamming, hash_from_hex, hash_hex, Embedding};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("entry {0} has no recorded decision to label")]
    NoDecision(u64),
    #[error("unknown entry id {0}")]
    UnknownEntry(u64),
    #[error("malformed bank dump: {0}")]
    BadDump(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Good,
    Bad,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Zone {
    Quarantine,
    Active,
}

/// One remembered view: embedding, hash, the sector chosen near it (set on
/// association), decision/insertion/activation times, and its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub id: u64,
    pub embedding: Embedding,
    pub hash: u64,
    /// Sector the selector preferred when the frame was stored (provisional).
    pub preferred_sector: Option<u8>,
    /// Sector committed at decision time; set only by association.
    pub sector: Option<u8>,
    pub t_dec: Option<u64>,
    pub t_insert: u64,
    pub t_act: u64,
    pub outcome: Outcome,
    pub decision_box: Option<BBox>,
    pub zone: Zone,
}

/// Bank thresholds and scales. All config-exposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankParams {
    /// Insertion cadence in frames (caller contract).
    pub insert_period: u64,
    /// Hamming novelty threshold: insert only if min distance exceeds this.
    pub delta_h: u32,
    /// Cosine novelty threshold: insert only if max similarity stays below.
    pub delta_z: f64,
    /// Frames an entry waits in quarantine before becoming queryable.
    pub t_quar: u64,
    /// Delay between a decision and its outcome label.
    pub t_eval: u64,
    /// IoU above which a re-found decision box counts as GOOD.
    pub tau_iou: f64,
    /// Penalty scale.
    pub lambda: f64,
    pub knn_k: usize,
    /// Gaussian kernel width on sector distance, in sectors.
    pub sector_kernel_width: f64,
    /// Exponential time-decay half-life, in frames.
    pub time_decay_halflife: f64,
    /// Association looks back this many frames for a quarantine entry.
    pub assoc_window: u64,
    pub capacity: usize,
}

impl Default for BankParams {
    fn default() -> Self {
        BankParams {
            insert_period: 15,
            delta_h: 10,
            delta_z: 0.92,
            t_quar: 60,
            t_eval: 45,
            tau_iou: 0.3,
            lambda: 0.5,
            knn_k: 8,
            sector_kernel_width: 1.0,
            time_decay_halflife: 1800.0,
            assoc_window: 30,
            capacity: 512,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MemoryBank {
    pub params: BankParams,
    entries: Vec<MemoryEntry>,
    next_id: u64,
}

impl MemoryBank {
    pub fn new(params: BankParams) -> Self {
        MemoryBank { params, entries: Vec::new(), next_id: 0 }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn entry(&self, id: u64) -> Option<&MemoryEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Offers a frame to the bank. Inserted into quarantine only if novel
    /// against every existing entry (quarantine and active alike): minimum
    /// Hamming distance strictly above `delta_h` AND maximum cosine strictly
    /// below `delta_z`. Returns whether an insertion happened.
    pub fn consider_insert(
        &mut self,
        embedding: &Embedding,
        hash: u64,
        preferred_sector: Option<u8>,
        now: u64,
    ) -> bool {
        for e in &self.entries {
            if hamming(hash, e.hash) <= self.params.delta_h {
                return false;
            }
            if cosine(embedding, &e.embedding).unwrap_or(0.0) >= self.params.delta_z {
                return false;
            }
        }
        if self.entries.len() >= self.params.capacity {
            self.evict_one();
        }
        let id = self.next_id;
        self.next_id += 1;
        self.entries.push(MemoryEntry {
            id,
            embedding: embedding.clone(),
            hash,
            preferred_sector,
            sector: None,
            t_dec: None,
            t_insert: now,
            t_act: now + self.params.t_quar,
            outcome: Outcome::Unknown,
            decision_box: None,
            zone: Zone::Quarantine,
        });
        true
    }

    /// Oldest unlabeled entry goes first; only when every entry is labeled
    /// does the oldest labeled one get evicted.
    fn evict_one(&mut self) {
        let victim = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.outcome == Outcome::Unknown)
            .min_by_key(|(_, e)| (e.t_insert, e.id))
            .map(|(i, _)| i)
            .or_else(|| {
                self.entries
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, e)| (e.t_insert, e.id))
                    .map(|(i, _)| i)
            });
        if let Some(i) = victim {
            self.entries.remove(i);
        }
    }

    /// Moves every quarantine entry whose activation time has arrived
    /// (`t_act <= now`, boundary inclusive) into the active set. Returns the
    /// number promoted. Order-stable.
    pub fn promote(&mut self, now: u64) -> usize {
        let mut promoted = 0;
        for e in &mut self.entries {
            if e.zone == Zone::Quarantine && e.t_act <= now {
                e.zone = Zone::Active;
                promoted += 1;
            }
        }
        promoted
    }

    /// Binds a committed sector decision to the latest quarantine entry
    /// inserted within the association window. An entry can only be
    /// associated once; the first association wins.
    pub fn associate_decision(
        &mut self,
        sector: u8,
        decision_box: BBox,
        now: u64,
    ) -> Option<u64> {
        let lo = now.saturating_sub(self.params.assoc_window);
        let pick = self
            .entries
            .iter_mut()
            .filter(|e| {
                e.zone == Zone::Quarantine
                    && e.t_dec.is_none()
                    && e.t_insert >= lo
                    && e.t_insert <= now
            })
            .max_by_key(|e| (e.t_insert, e.id))?;
        pick.sector = Some(sector);
        pick.t_dec = Some(now);
        pick.decision_box = Some(decision_box);
        Some(pick.id)
    }

    /// Labels an associated entry GOOD if a selection is present and the IoU
    /// of its box with the recorded decision box strictly exceeds `tau_iou`,
    /// else BAD. Calling this on an entry without a decision is a harness bug.
    pub fn label_outcome(
        &mut self,
        id: u64,
        selection_at_eval: Option<&MstpSelection>,
    ) -> Result<Outcome, MemoryError> {
        let tau = self.params.tau_iou;
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.id == id)
            .ok_or(MemoryError::UnknownEntry(id))?;
        let decision_box = entry.decision_box.ok_or(MemoryError::NoDecision(id))?;
        if entry.t_dec.is_none() {
            return Err(MemoryError::NoDecision(id));
        }
        let outcome = match selection_at_eval {
            Some(sel) if iou(&decision_box, &sel.candidate.bbox) > tau => Outcome::Good,
            _ => Outcome::Bad,
        };
        entry.outcome = outcome;
        Ok(outcome)
    }

    /// Exact top-k active entries by cosine similarity, descending; ties go
    /// to the older insertion, then the smaller id.
    pub fn knn(&self, query: &Embedding, k: usize) -> Vec<(&MemoryEntry, f64)> {
        let mut scored: Vec<(&MemoryEntry, f64)> = self
            .entries
            .iter()
            .filter(|e| e.zone == Zone::Active)
            .map(|e| (e, cosine(query, &e.embedding).unwrap_or(0.0)))
            .collect();
        scored.sort_by(|(ea, ca), (eb, cb)| {
            cb.partial_cmp(ca)
                .unwrap()
                .then(ea.t_insert.cmp(&eb.t_insert))
                .then(ea.id.cmp(&eb.id))
        });
        scored.truncate(k);
        scored
    }

    /// Penalty against steering into `sector` given the current view
    /// embedding: over the k nearest active neighbors with BAD outcomes,
    /// sum cosine * Gaussian-in-sector-distance * exponential time decay,
    /// scaled by lambda. Nonnegative and bounded by lambda * k.
    pub fn penalty(&self, query: &Embedding, sector: u8, now: u64) -> f64 {
        let p = &self.params;
        let mut total = 0.0;
        for (entry, cos) in self.knn(query, p.knn_k) {
            if entry.outcome != Outcome::Bad {
                continue;
            }
            let (Some(entry_sector), Some(t_dec)) = (entry.sector, entry.t_dec) else {
                continue;
            };
            let d_sector = sector as f64 - entry_sector as f64;
            let kernel =
                (-(d_sector * d_sector) / (2.0 * p.sector_kernel_width * p.sector_kernel_width)).exp();
            let age = now.saturating_sub(t_dec) as f64;
            let decay = (-(age / p.time_decay_halflife) * std::f64::consts::LN_2).exp();
            total += cos.max(0.0) * kernel * decay;
        }
        p.lambda * total
    }

    /// Serializes the bank (entries with hex hashes) for post-run inspection
    /// and test fixtures.
    pub fn dump_json(&self) -> serde_json::Value {
        serde_json::json!({
            "params": self.params,
            "next_id": self.next_id,
            "entries": self.entries.iter().map(|e| {
                serde_json::json!({
                    "id": e.id,
                    "embedding": e.embedding.values,
                    "hash": hash_hex(e.hash),
                    "preferred_sector": e.preferred_sector,
                    "sector": e.sector,
                    "t_dec": e.t_dec,
                    "t_insert": e.t_insert,
                    "t_act": e.t_act,
                    "outcome": e.outcome,
                    "decision_box": e.decision_box,
                    "zone": e.zone,
                })
            }).collect::<Vec<_>>(),
        })
    }

    pub fn load_json(value: &serde_json::Value) -> Result<Self, MemoryError> {
        let params: BankParams = serde_json::from_value(value["params"].clone())
            .map_err(|e| MemoryError::BadDump(e.to_string()))?;
        let next_id = value["next_id"].as_u64().ok_or_else(|| MemoryError::BadDump("next_id".into()))?;
        let raw = value["entries"].as_array().ok_or_else(|| MemoryError::BadDump("entries".into()))?;
        let mut entries = Vec::with_capacity(raw.len());
        for item in raw {
            let hash = item["hash"]
                .as_str()
                .and_then(hash_from_hex)
                .ok_or_else(|| MemoryError::BadDump("hash".into()))?;
            let embedding: Vec<f64> = serde_json::from_value(item["embedding"].clone())
                .map_err(|e| MemoryError::BadDump(e.to_string()))?;
            entries.push(MemoryEntry {
                id: item["id"].as_u64().ok_or_else(|| MemoryError::BadDump("id".into()))?,
                embedding: Embedding { values: embedding },
                hash,
                preferred_sector: serde_json::from_value(item["preferred_sector"].clone())
                    .map_err(|e| MemoryError::BadDump(e.to_string()))?,
                sector: serde_json::from_value(item["sector"].clone())
                    .map_err(|e| MemoryError::BadDump(e.to_string()))?,
                t_dec: serde_json::from_value(item["t_dec"].clone())
                    .map_err(|e| MemoryError::BadDump(e.to_string()))?,
                t_insert: item["t_insert"].as_u64().ok_or_else(|| MemoryError::BadDump("t_insert".into()))?,
                t_act: item["t_act"].as_u64().ok_or_else(|| MemoryError::BadDump("t_act".into()))?,
                outcome: serde_json::from_value(item["outcome"].clone())
                    .map_err(|e| MemoryError::BadDump(e.to_string()))?,
                decision_box: serde_json::from_value(item["decision_box"].clone())
                    .map_err(|e| MemoryError::BadDump(e.to_string()))?,
                zone: serde_json::from_value(item["zone"].clone())
                    .map_err(|e| MemoryError::BadDump(e.to_string()))?,
            });
        }
        Ok(MemoryBank { params, entries, next_id })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::STPCandidate;

    fn unit_embedding(axis: usize) -> Embedding {
        let mut values = vec![0.0; 8];
        values[axis] = 1.0;
        Embedding { values }
    }

    fn bank() -> MemoryBank {
        MemoryBank::new(BankParams::default())
    }

    fn selection_with_box(bbox: BBox, t: u64) -> MstpSelection {
        MstpSelection {
            candidate: STPCandidate {
                bbox,
                det_score: 1.0,
                embedding: unit_embedding(0),
                sector: 4,
                free_space: 1.0,
            },
            final_score: 1.0,
            t,
        }
    }

    #[test]
    fn empty_bank_always_inserts() {
        let mut b = bank();
        assert!(b.consider_insert(&unit_embedding(0), 0xffff, Some(3), 0));
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn duplicate_frame_rejected() {
        let mut b = bank();
        assert!(b.consider_insert(&unit_embedding(0), 0xffff, Some(3), 0));
        assert!(!b.consider_insert(&unit_embedding(1), 0xffff, Some(3), 15));
    }

    #[test]
    fn cosine_condition_rejects_despite_hash_distance() {
        let mut b = bank();
        assert!(b.consider_insert(&unit_embedding(0), 0, None, 0));
        // Hamming 12 > delta_h, but identical embedding (cosine 1 >= 0.92).
        assert!(!b.consider_insert(&unit_embedding(0), 0xfff, None, 15));
        // Same hash distance with an orthogonal embedding is accepted.
        assert!(b.consider_insert(&unit_embedding(1), 0xfff, None, 30));
    }

    #[test]
    fn promote_boundary_inclusive() {
        let mut b = bank();
        b.consider_insert(&unit_embedding(0), 0xffff_0000, None, 0);
        assert_eq!(b.promote(59), 0);
        assert_eq!(b.promote(60), 1);
        assert_eq!(b.entries()[0].zone, Zone::Active);
    }

    #[test]
    fn promote_splits_straddling_entries() {
        let mut b = bank();
        b.consider_insert(&unit_embedding(0), 0xffff_0000, None, 0);
        b.consider_insert(&unit_embedding(1), 0x0000_ffff, None, 30);
        assert_eq!(b.promote(60), 1);
        assert_eq!(b.entries()[0].zone, Zone::Active);
        assert_eq!(b.entries()[1].zone, Zone::Quarantine);
    }

    #[test]
    fn associate_picks_latest_in_window() {
        let mut b = bank();
        assert!(b.associate_decision(2, BBox::new(0.0, 0.0, 1.0, 1.0), 100).is_none());
        b.consider_insert(&unit_embedding(0), 0xffff_0000, None, 80);
        b.consider_insert(&unit_embedding(1), 0x0000_ffff, None, 95);
        let id = b.associate_decision(2, BBox::new(0.0, 0.0, 1.0, 1.0), 100).unwrap();
        let entry = b.entry(id).unwrap();
        assert_eq!(entry.t_insert, 95);
        assert_eq!(entry.sector, Some(2));
        assert_eq!(entry.t_dec, Some(100));
    }

    #[test]
    fn associate_respects_window_and_first_wins() {
        let mut b = bank();
        b.consider_insert(&unit_embedding(0), 0xffff_0000, None, 10);
        // Outside the 30-frame window.
        assert!(b.associate_decision(1, BBox::new(0.0, 0.0, 1.0, 1.0), 50).is_none());
        // Inside: first association succeeds, a second one finds nothing.
        let id = b.associate_decision(1, BBox::new(0.0, 0.0, 1.0, 1.0), 30).unwrap();
        assert!(b.associate_decision(5, BBox::new(2.0, 2.0, 3.0, 3.0), 31).is_none());
        assert_eq!(b.entry(id).unwrap().sector, Some(1));
    }

    #[test]
    fn label_outcome_rules() {
        let mut b = bank();
        b.consider_insert(&unit_embedding(0), 0xffff_0000, None, 0);
        let bx = BBox::new(10.0, 10.0, 20.0, 20.0);
        let id = b.associate_decision(3, bx, 10).unwrap();

        // Absent selection labels BAD.
        assert_eq!(b.label_outcome(id, None).unwrap(), Outcome::Bad);

        // Identical box labels GOOD (IoU 1 > 0.3).
        let mut b1 = bank();
        b1.consider_insert(&unit_embedding(0), 0xffff_0000, None, 0);
        let id1 = b1.associate_decision(3, bx, 10).unwrap();
        let sel = selection_with_box(bx, 55);
        assert_eq!(b1.label_outcome(id1, Some(&sel)).unwrap(), Outcome::Good);

        // IoU exactly at tau stays BAD by the strict rule. A 3-area box
        // nested in a 10-area box gives intersection 3, union 10, and
        // 3.0/10.0 rounds to the same f64 as the 0.3 threshold literal.
        let mut b2 = bank();
        b2.consider_insert(&unit_embedding(0), 0xffff_0000, None, 0);
        let small = BBox::new(0.0, 0.0, 3.0, 1.0);
        let big = BBox::new(0.0, 0.0, 5.0, 2.0);
        assert_eq!(iou(&small, &big), 0.3);
        let id2 = b2.associate_decision(3, small, 10).unwrap();
        let sel2 = selection_with_box(big, 55);
        assert_eq!(b2.label_outcome(id2, Some(&sel2)).unwrap(), Outcome::Bad);
    }

    #[test]
    fn label_without_decision_is_error() {
        let mut b = bank();
        b.consider_insert(&unit_embedding(0), 0xffff_0000, None, 0);
        let id = b.entries()[0].id;
        assert!(matches!(b.label_outcome(id, None), Err(MemoryError::NoDecision(_))));
    }

    #[test]
    fn knn_basics() {
        let mut b = bank();
        assert!(b.knn(&unit_embedding(0), 8).is_empty());
        b.consider_insert(&unit_embedding(0), 0xff00_0000_0000_0000, None, 0);
        b.consider_insert(&unit_embedding(1), 0x00ff_0000_0000_0000, None, 15);
        b.consider_insert(&unit_embedding(2), 0x0000_ff00_0000_0000, None, 30);
        b.promote(1000);
        let got = b.knn(&unit_embedding(1), 8);
        assert_eq!(got.len(), 3);
        assert_eq!(got[0].1, 1.0);
        assert_eq!(got[0].0.t_insert, 15);
    }

    #[test]
    fn knn_ignores_quarantine() {
        let mut b = bank();
        b.consider_insert(&unit_embedding(0), 0xffff_0000, None, 0);
        assert!(b.knn(&unit_embedding(0), 4).is_empty());
        b.promote(60);
        assert_eq!(b.knn(&unit_embedding(0), 4).len(), 1);
    }

    #[test]
    fn penalty_examples() {
        let mut b = bank();
        // No BAD entries => zero.
        b.consider_insert(&unit_embedding(0), 0xffff_0000, None, 0);
        b.promote(60);
        assert_eq!(b.penalty(&unit_embedding(0), 4, 60), 0.0);

        // One BAD entry, identical embedding, same sector, now == t_dec.
        let mut b = bank();
        b.consider_insert(&unit_embedding(0), 0xffff_0000, None, 0);
        let id = b.associate_decision(4, BBox::new(0.0, 0.0, 5.0, 5.0), 10).unwrap();
        b.label_outcome(id, None).unwrap();
        b.promote(60);
        let p = b.penalty(&unit_embedding(0), 4, 10);
        assert!((p - 0.5).abs() < 1e-12, "got {p}");

        // Same query one half-life later decays to 0.25.
        let later = 10 + b.params.time_decay_halflife as u64;
        let p = b.penalty(&unit_embedding(0), 4, later);
        assert!((p - 0.25).abs() < 1e-12, "got {p}");
    }

    #[test]
    fn capacity_evicts_unknown_oldest_first() {
        let mut params = BankParams::default();
        params.capacity = 3;
        params.delta_h = 0;
        params.delta_z = 2.0; // disable cosine gate for this fixture
        let mut b = MemoryBank::new(params);
        // Hashes far apart so novelty always passes.
        b.consider_insert(&unit_embedding(0), 0x0000_0000_ffff_ffff, None, 0);
        b.consider_insert(&unit_embedding(1), 0xffff_ffff_0000_0000, None, 15);
        b.consider_insert(&unit_embedding(2), 0x00ff_ff00_00ff_ff00, None, 30);
        // Label the oldest BAD so it is protected from eviction.
        let id0 = b.associate_decision(1, BBox::new(0.0, 0.0, 1.0, 1.0), 30).unwrap();
        // associate picks latest (t=30); label it, protecting it instead.
        b.label_outcome(id0, None).unwrap();
        b.consider_insert(&unit_embedding(3), 0xff00_00ff_ff00_00ff, None, 45);
        assert_eq!(b.len(), 3);
        // The UNK entry inserted at t=0 must be gone; labeled one survives.
        assert!(b.entries().iter().all(|e| e.t_insert != 0));
        assert!(b.entries().iter().any(|e| e.outcome == Outcome::Bad));
    }

    #[test]
    fn dump_load_roundtrip() {
        let mut b = bank();
        b.consider_insert(&unit_embedding(0), 0xdead_beef_0123_4567, Some(2), 0);
        let id = b.associate_decision(2, BBox::new(1.0, 2.0, 3.0, 4.0), 10).unwrap();
        b.label_outcome(id, None).unwrap();
        b.promote(60);
        let dump = b.dump_json();
        let loaded = MemoryBank::load_json(&dump).unwrap();
        assert_eq!(loaded.entries(), b.entries());
        assert_eq!(loaded.dump_json(), dump);
    }
}
