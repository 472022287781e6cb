//! Column raycaster and ground-truth portal projection.
//!
//! One ray per screen column; the ray direction keeps a unit forward
//! component so the ray parameter equals perpendicular depth (no fisheye).
//! Walls and decoys are full-height and opaque, props are shorter solid
//! columns, and portals are non-blocking spans that darken everything seen
//! through them when tagged dark.

use super::world::{PropShape, World};
use super::{AvatarPose, SimParams};
use crate::perception::{BBox, PortalProjection};
use crate::vision::Frame;

pub const DARK_PORTAL_FACTOR: f64 = 0.35;
const NEAR_CLIP: f64 = 0.05;
const OCCLUSION_SAMPLES: usize = 32;

pub(crate) struct Camera {
    pub eye: (f64, f64),
    pub fwd: (f64, f64),
    pub right: (f64, f64),
    pub half_tan: f64,
    pub focal: f64,
    pub horizon: f64,
    pub w: u32,
    pub h: u32,
    pub eye_z: f64,
    pub wall_h: f64,
}

impl Camera {
    pub fn new(world: &World, pose: &AvatarPose, params: &SimParams) -> Self {
        let yaw = pose.yaw.to_radians();
        let fwd = (yaw.cos(), -yaw.sin());
        let right = (-yaw.sin(), -yaw.cos());
        let half_tan = (params.fov_deg / 2.0).to_radians().tan();
        let focal = params.render_width as f64 / 2.0 / half_tan;
        let horizon = params.render_height as f64 / 2.0 + focal * pose.pitch.to_radians().tan();
        Camera {
            eye: (pose.x, pose.y),
            fwd,
            right,
            half_tan,
            focal,
            horizon,
            w: params.render_width,
            h: params.render_height,
            eye_z: world.eye_height,
            wall_h: world.wall_height,
        }
    }

    fn ray_dir(&self, col: u32) -> (f64, f64) {
        let lateral = (2.0 * (col as f64 + 0.5) / self.w as f64 - 1.0) * self.half_tan;
        (self.fwd.0 + self.right.0 * lateral, self.fwd.1 + self.right.1 * lateral)
    }

    /// Camera-space (depth along forward, lateral along right).
    fn to_camera(&self, p: (f64, f64)) -> (f64, f64) {
        let rx = p.0 - self.eye.0;
        let ry = p.1 - self.eye.1;
        (rx * self.fwd.0 + ry * self.fwd.1, rx * self.right.0 + ry * self.right.1)
    }

    fn screen_x(&self, depth: f64, lateral: f64) -> f64 {
        self.w as f64 / 2.0 + self.focal * lateral / depth
    }

    fn screen_y(&self, depth: f64, z: f64) -> f64 {
        self.horizon + self.focal * (self.eye_z - z) / depth
    }
}

/// Ray/segment intersection: returns (ray parameter, position along the
/// segment in world units).
fn ray_segment(o: (f64, f64), d: (f64, f64), a: (f64, f64), b: (f64, f64)) -> Option<(f64, f64)> {
    let ex = b.0 - a.0;
    let ey = b.1 - a.1;
    let det = ex * d.1 - ey * d.0;
    if det.abs() < 1e-12 {
        return None;
    }
    let wx = a.0 - o.0;
    let wy = a.1 - o.1;
    let t = (ex * wy - ey * wx) / det;
    let u = (d.0 * wy - d.1 * wx) / det;
    if t > 1e-9 && (0.0..=1.0).contains(&u) {
        let len = (ex * ex + ey * ey).sqrt();
        Some((t, u * len))
    } else {
        None
    }
}

fn ray_circle(o: (f64, f64), d: (f64, f64), c: (f64, f64), r: f64) -> Option<f64> {
    let ox = o.0 - c.0;
    let oy = o.1 - c.1;
    let a = d.0 * d.0 + d.1 * d.1;
    let b = 2.0 * (ox * d.0 + oy * d.1);
    let cc = ox * ox + oy * oy - r * r;
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t1 = (-b - sq) / (2.0 * a);
    if t1 > 1e-9 {
        return Some(t1);
    }
    let t2 = (-b + sq) / (2.0 * a);
    if t2 > 1e-9 {
        return Some(t2);
    }
    None
}

struct ColumnHit {
    t: f64,
    shade: f64,
    height: f64,
}

fn falloff(t: f64) -> f64 {
    1.0 / (1.0 + 0.15 * t)
}

/// Renders the world into a grayscale frame. Deterministic: identical
/// (world, pose) yields identical bytes.
pub fn render(world: &World, pose: &AvatarPose, params: &SimParams) -> Frame {
    let cam = Camera::new(world, pose, params);
    let (w, h) = (cam.w as usize, cam.h as usize);
    let mut pixels = vec![0u8; w * h];
    for col in 0..cam.w {
        let dir = cam.ray_dir(col);

        // Nearest full-height surface: walls, then decoys painted on them.
        let mut wall: Option<(f64, f64)> = None; // (t, shade)
        for wseg in &world.walls {
            if let Some((t, u)) = ray_segment(cam.eye, dir, wseg.a, wseg.b) {
                if wall.map(|(bt, _)| t < bt).unwrap_or(true) {
                    wall = Some((t, wseg.texture.sample(u)));
                }
            }
        }
        for d in &world.decoys {
            if let Some((t, _)) = ray_segment(cam.eye, dir, d.a, d.b) {
                if wall.map(|(bt, _)| t < bt).unwrap_or(true) {
                    wall = Some((t, d.brightness as f64));
                }
            }
        }

        // Dark portal spans crossed in front of a surface filter its light.
        let light_at = |t_hit: f64| -> f64 {
            let mut light = 1.0;
            for p in &world.portals {
                if p.tags.dark {
                    if let Some((tp, _)) = ray_segment(cam.eye, dir, p.a, p.b) {
                        if tp < t_hit {
                            light *= DARK_PORTAL_FACTOR;
                        }
                    }
                }
            }
            light
        };

        let wall_t = wall.map(|(t, _)| t).unwrap_or(f64::INFINITY);
        let mut column: Vec<ColumnHit> = Vec::new();
        if let Some((t, shade)) = wall {
            column.push(ColumnHit { t, shade, height: cam.wall_h });
        }
        for prop in &world.props {
            let hit = match prop.shape {
                PropShape::Boxy { x0, y0, x1, y1 } => {
                    let corners =
                        [((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))];
                    corners
                        .iter()
                        .filter_map(|&(a, b)| ray_segment(cam.eye, dir, a, b).map(|(t, _)| t))
                        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
                }
                PropShape::Cylinder { cx, cy, radius } => ray_circle(cam.eye, dir, (cx, cy), radius),
            };
            if let Some(t) = hit {
                if t < wall_t {
                    column.push(ColumnHit { t, shade: prop.shade as f64, height: prop.height });
                }
            }
        }
        // Painter's order: far to near.
        column.sort_by(|a, b| b.t.partial_cmp(&a.t).unwrap());

        let horizon_row = cam.horizon.round().clamp(0.0, h as f64) as usize;
        // Background: ceiling above the horizon, floor below.
        for row in 0..horizon_row {
            pixels[row * w + col as usize] = world.ceiling_shade;
        }
        for row in horizon_row..h {
            pixels[row * w + col as usize] = world.floor_shade;
        }
        for hit in &column {
            let y_top = cam.screen_y(hit.t, hit.height).max(0.0) as usize;
            let y_bot = cam.screen_y(hit.t, 0.0).clamp(0.0, h as f64) as usize;
            let intensity =
                (hit.shade * light_at(hit.t) * falloff(hit.t)).round().clamp(0.0, 255.0) as u8;
            for row in y_top..y_bot {
                pixels[row * w + col as usize] = intensity;
            }
        }
    }
    Frame { width: cam.w, height: cam.h, pixels, t: 0 }
}

/// Eye-height sightline from the camera to `target` is blocked by a wall,
/// decoy, or a prop at least eye-high.
fn sightline_blocked(world: &World, cam: &Camera, target: (f64, f64)) -> bool {
    let dir = (target.0 - cam.eye.0, target.1 - cam.eye.1);
    let dist = (dir.0 * dir.0 + dir.1 * dir.1).sqrt();
    for wseg in &world.walls {
        if let Some((t, _)) = ray_segment(cam.eye, dir, wseg.a, wseg.b) {
            if t < 1.0 - 1e-9 {
                return true;
            }
        }
    }
    for d in &world.decoys {
        if let Some((t, _)) = ray_segment(cam.eye, dir, d.a, d.b) {
            if t < 1.0 - 1e-9 {
                return true;
            }
        }
    }
    for prop in &world.props {
        if prop.height < cam.eye_z {
            continue;
        }
        let hit = match prop.shape {
            PropShape::Boxy { x0, y0, x1, y1 } => {
                let corners =
                    [((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))];
                corners
                    .iter()
                    .filter_map(|&(a, b)| ray_segment(cam.eye, dir, a, b).map(|(t, _)| t))
                    .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |x| x.min(t))))
            }
            PropShape::Cylinder { cx, cy, radius } => ray_circle(cam.eye, dir, (cx, cy), radius),
        };
        if let Some(t) = hit {
            if t < 1.0 - 1e-9 {
                return true;
            }
        }
    }
    let _ = dist;
    false
}

/// Ground-truth projections of portals visible from the pose: perspective
/// bbox clipped to the screen, occlusion as the blocked fraction of span
/// sightlines, and the walkable floor fraction sampled in a strip under the
/// box base.
pub fn visible_portals(world: &World, pose: &AvatarPose, params: &SimParams) -> Vec<PortalProjection> {
    let cam = Camera::new(world, pose, params);
    let mut out = Vec::new();
    for portal in &world.portals {
        let (da, la) = cam.to_camera(portal.a);
        let (db, lb) = cam.to_camera(portal.b);
        if da <= NEAR_CLIP && db <= NEAR_CLIP {
            continue;
        }
        // Clip the span to the near plane.
        let (mut pa, mut pb) = ((da, la), (db, lb));
        if pa.0 <= NEAR_CLIP {
            let s = (NEAR_CLIP - pa.0) / (pb.0 - pa.0);
            pa = (NEAR_CLIP, pa.1 + s * (pb.1 - pa.1));
        } else if pb.0 <= NEAR_CLIP {
            let s = (NEAR_CLIP - pb.0) / (pa.0 - pb.0);
            pb = (NEAR_CLIP, pb.1 + s * (pa.1 - pb.1));
        }
        let xa = cam.screen_x(pa.0, pa.1);
        let xb = cam.screen_x(pb.0, pb.1);
        let (x1, x2) = (xa.min(xb), xa.max(xb));
        if x2 <= 0.0 || x1 >= cam.w as f64 {
            continue;
        }
        let y_top = cam.screen_y(pa.0, cam.wall_h).min(cam.screen_y(pb.0, cam.wall_h));
        let y_bot = cam.screen_y(pa.0, 0.0).max(cam.screen_y(pb.0, 0.0));
        let bbox = BBox::new(
            x1.clamp(0.0, cam.w as f64 - 1.0),
            y_top.clamp(0.0, cam.h as f64 - 1.0),
            x2.clamp(1.0, cam.w as f64),
            y_bot.clamp(1.0, cam.h as f64),
        );
        if bbox.width() < 1.0 || bbox.height() < 1.0 {
            continue;
        }

        let mut blocked = 0usize;
        for i in 0..OCCLUSION_SAMPLES {
            let s = (i as f64 + 0.5) / OCCLUSION_SAMPLES as f64;
            let point = (
                portal.a.0 + s * (portal.b.0 - portal.a.0),
                portal.a.1 + s * (portal.b.1 - portal.a.1),
            );
            if sightline_blocked(world, &cam, point) {
                blocked += 1;
            }
        }
        let occlusion = blocked as f64 / OCCLUSION_SAMPLES as f64;
        if occlusion >= 1.0 {
            continue;
        }

        // Walkable fraction of the floor strip just below the box base.
        let mut samples = 0usize;
        let mut walkable = 0usize;
        let row0 = bbox.y2.floor() as i64;
        for row in (row0..row0 + 8).step_by(2) {
            if row as f64 <= cam.horizon + 1.0 || row >= cam.h as i64 {
                continue;
            }
            let depth = cam.focal * cam.eye_z / (row as f64 - cam.horizon);
            let mut colf = bbox.x1;
            while colf < bbox.x2 {
                let dir = cam.ray_dir(colf as u32);
                let p = (cam.eye.0 + dir.0 * depth, cam.eye.1 + dir.1 * depth);
                samples += 1;
                if world.walkable_point(p.0, p.1) {
                    walkable += 1;
                }
                colf += 4.0;
            }
        }
        let free_space = if samples == 0 { 0.0 } else { walkable as f64 / samples as f64 };

        out.push(PortalProjection {
            portal_id: portal.id,
            bbox,
            occlusion,
            tags: portal.tags,
            free_space,
        });
    }
    out
}
