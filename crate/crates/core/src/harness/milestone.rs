//! Milestone capture (yaw sweep around a saved pose), template matching,
//! and the on-disk milestone library (PGM templates plus a JSON manifest).

use crate::sim::{render, AvatarPose, MilestonePose, SimParams, World};
use crate::vision::{ncc_score, read_pgm, write_pgm, Frame};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MilestoneError {
    #[error("milestone {0}: constant template (facing a blank surface?) rejected")]
    ConstantTemplate(u32),
    #[error("milestone library: {0}")]
    Library(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Capture sweep: `n_yaw` headings spaced `yaw_step` degrees around the
/// pose, crossed with each pitch offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub n_yaw: u32,
    pub yaw_step: f64,
    pub pitches: Vec<f64>,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams { n_yaw: 5, yaw_step: 5.0, pitches: vec![0.0] }
    }
}

/// A group of grayscale templates that collectively represent one logical
/// milestone, with the saved avatar pose used for repositioning.
#[derive(Debug, Clone, PartialEq)]
pub struct MilestoneGroup {
    pub id: u32,
    pub group_index: usize,
    pub templates: Vec<Frame>,
    pub save_pose: MilestonePose,
}

/// Renders the capture sweep. Any zero-variance template rejects the whole
/// group with a diagnostic.
pub fn capture_milestone(
    world: &World,
    pose: &MilestonePose,
    group_index: usize,
    sweep: &SweepParams,
    sim: &SimParams,
) -> Result<MilestoneGroup, MilestoneError> {
    let mut templates = Vec::new();
    for pitch_off in &sweep.pitches {
        for i in 0..sweep.n_yaw {
            let offset = (i as f64 - (sweep.n_yaw as f64 - 1.0) / 2.0) * sweep.yaw_step;
            let cam = AvatarPose::new(pose.x, pose.y, pose.yaw + offset, pose.pitch + pitch_off);
            let frame = render(world, &cam, sim);
            let (mut lo, mut hi) = (u8::MAX, u8::MIN);
            for &p in &frame.pixels {
                lo = lo.min(p);
                hi = hi.max(p);
            }
            if lo == hi {
                return Err(MilestoneError::ConstantTemplate(pose.id));
            }
            templates.push(frame);
        }
    }
    Ok(MilestoneGroup { id: pose.id, group_index, templates, save_pose: *pose })
}

/// Captures every milestone pose of the world, in route order.
pub fn capture_all(
    world: &World,
    sweep: &SweepParams,
    sim: &SimParams,
) -> Result<Vec<MilestoneGroup>, MilestoneError> {
    let mut poses = world.milestones.clone();
    poses.sort_by_key(|m| m.id);
    poses
        .iter()
        .enumerate()
        .map(|(idx, pose)| capture_milestone(world, pose, idx, sweep, sim))
        .collect()
}

/// True iff the best normalized cross-correlation against any template in
/// the group strictly exceeds the threshold.
pub fn check_milestone(frame: &Frame, group: &MilestoneGroup, threshold: f64) -> bool {
    group.templates.iter().any(|t| ncc_score(frame, t) > threshold)
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    id: u32,
    group_index: usize,
    save_pose: MilestonePose,
    templates: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    groups: Vec<ManifestEntry>,
}

/// Writes templates as PGM files plus a `manifest.json` into `dir`.
pub fn save_library(groups: &[MilestoneGroup], dir: &Path) -> Result<(), MilestoneError> {
    fs::create_dir_all(dir)?;
    let mut manifest = Manifest { groups: Vec::new() };
    for g in groups {
        let mut names = Vec::new();
        for (i, t) in g.templates.iter().enumerate() {
            let name = format!("g{:02}_t{:02}.pgm", g.id, i);
            let mut buf = Vec::new();
            write_pgm(t, &mut buf).map_err(|e| MilestoneError::Library(e.to_string()))?;
            fs::write(dir.join(&name), buf)?;
            names.push(name);
        }
        manifest.groups.push(ManifestEntry {
            id: g.id,
            group_index: g.group_index,
            save_pose: g.save_pose,
            templates: names,
        });
    }
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(|e| MilestoneError::Library(e.to_string()))?,
    )?;
    Ok(())
}

/// Loads a library written by [`save_library`], re-validating that no
/// template is constant.
pub fn load_library(dir: &Path) -> Result<Vec<MilestoneGroup>, MilestoneError> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)
        .map_err(|e| MilestoneError::Library(e.to_string()))?;
    let mut groups = Vec::new();
    for entry in manifest.groups {
        let mut templates = Vec::new();
        for name in &entry.templates {
            let bytes = fs::read(dir.join(name))?;
            let frame = read_pgm(&bytes[..], 0).map_err(|e| MilestoneError::Library(e.to_string()))?;
            let constant = frame.pixels.windows(2).all(|w| w[0] == w[1]);
            if constant {
                return Err(MilestoneError::ConstantTemplate(entry.id));
            }
            templates.push(frame);
        }
        groups.push(MilestoneGroup {
            id: entry.id,
            group_index: entry.group_index,
            templates,
            save_pose: entry.save_pose,
        });
    }
    groups.sort_by_key(|g| g.group_index);
    Ok(groups)
}
