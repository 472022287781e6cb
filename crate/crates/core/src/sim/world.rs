//! World geometry: axis-aligned rooms joined by portal openings, opaque
//! wall segments with procedural 1D textures, solid props, and visual-only
//! decoy patches. Worlds serialize to a line-based plain-text format.

use crate::perception::PortalTags;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("teleport target ({0}, {1}) is inside geometry")]
    InvalidPose(f64, f64),
    #[error("world parse error at line {0}: {1}")]
    Parse(usize, String),
}

/// 1D intensity function along a wall surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Texture {
    Stripes { period: f64, phase: f64, lo: u8, hi: u8 },
    Checker { size: f64, lo: u8, hi: u8 },
    Flat { value: u8 },
}

impl Texture {
    pub fn sample(&self, u: f64) -> f64 {
        match *self {
            Texture::Stripes { period, phase, lo, hi } => {
                let cell = ((u + phase) / period).floor() as i64;
                if cell.rem_euclid(2) == 0 {
                    lo as f64
                } else {
                    hi as f64
                }
            }
            Texture::Checker { size, lo, hi } => {
                let cell = (u / size).floor() as i64;
                if cell.rem_euclid(2) == 0 {
                    hi as f64
                } else {
                    lo as f64
                }
            }
            Texture::Flat { value } => value as f64,
        }
    }
}

/// Walkable floor rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub id: u32,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Room {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Opaque full-height wall segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub texture: Texture,
}

/// Non-blocking opening in a wall line; tagged portals filter the light of
/// everything seen through them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portal {
    pub id: u32,
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub tags: PortalTags,
}

impl Portal {
    pub fn center(&self) -> (f64, f64) {
        ((self.a.0 + self.b.0) / 2.0, (self.a.1 + self.b.1) / 2.0)
    }

    pub fn width(&self) -> f64 {
        let dx = self.b.0 - self.a.0;
        let dy = self.b.1 - self.a.1;
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PropShape {
    Boxy { x0: f64, y0: f64, x1: f64, y1: f64 },
    Cylinder { cx: f64, cy: f64, radius: f64 },
}

/// Solid obstacle. Shorter than the walls but tall enough to block both
/// movement and eye-height sightlines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop {
    pub shape: PropShape,
    pub height: f64,
    pub shade: u8,
}

/// Bright visual patch lying on a wall; never traversable, never collides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoy {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub brightness: u8,
}

/// Designer-chosen viewpoint along the route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MilestonePose {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub pitch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub name: String,
    pub wall_height: f64,
    pub eye_height: f64,
    pub floor_shade: u8,
    pub ceiling_shade: u8,
    pub spawn: (f64, f64, f64, f64),
    pub rooms: Vec<Room>,
    pub walls: Vec<Wall>,
    pub portals: Vec<Portal>,
    pub props: Vec<Prop>,
    pub decoys: Vec<Decoy>,
    /// Ordered portal ids forming the designated route.
    pub route: Vec<u32>,
    pub milestones: Vec<MilestonePose>,
}

impl World {
    pub fn portal(&self, id: u32) -> Option<&Portal> {
        self.portals.iter().find(|p| p.id == id)
    }

    /// Point lies on some room's floor and outside every prop footprint.
    pub fn walkable_point(&self, x: f64, y: f64) -> bool {
        if !self.rooms.iter().any(|r| r.contains(x, y)) {
            return false;
        }
        !self.props.iter().any(|p| match p.shape {
            PropShape::Boxy { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
            PropShape::Cylinder { cx, cy, radius } => {
                let dx = x - cx;
                let dy = y - cy;
                dx * dx + dy * dy <= radius * radius
            }
        })
    }

    /// Circle of the given radius collides with a wall or prop, or leaves
    /// the walkable floor.
    pub fn collides(&self, x: f64, y: f64, radius: f64) -> bool {
        if !self.rooms.iter().any(|r| {
            x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1
        }) {
            return true;
        }
        for w in &self.walls {
            if dist_point_segment(x, y, w.a, w.b) < radius {
                return true;
            }
        }
        for p in &self.props {
            match p.shape {
                PropShape::Boxy { x0, y0, x1, y1 } => {
                    let nx = x.clamp(x0, x1);
                    let ny = y.clamp(y0, y1);
                    let dx = x - nx;
                    let dy = y - ny;
                    if dx * dx + dy * dy < radius * radius {
                        return true;
                    }
                }
                PropShape::Cylinder { cx, cy, radius: pr } => {
                    let dx = x - cx;
                    let dy = y - cy;
                    let reach = radius + pr;
                    if dx * dx + dy * dy < reach * reach {
                        return true;
                    }
                }
            }
        }
        false
    }
}

pub(crate) fn dist_point_segment(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let abx = b.0 - a.0;
    let aby = b.1 - a.1;
    let len2 = abx * abx + aby * aby;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.0) * abx + (py - a.1) * aby) / len2).clamp(0.0, 1.0)
    };
    let cx = a.0 + t * abx;
    let cy = a.1 + t * aby;
    let dx = px - cx;
    let dy = py - cy;
    (dx * dx + dy * dy).sqrt()
}

fn texture_to_text(t: &Texture) -> String {
    match t {
        Texture::Stripes { period, phase, lo, hi } => format!("stripes {period} {phase} {lo} {hi}"),
        Texture::Checker { size, lo, hi } => format!("checker {size} {lo} {hi}"),
        Texture::Flat { value } => format!("flat {value}"),
    }
}

impl World {
    /// Plain-text serialization (grammar documented in the repo README).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# nav world format v1\n");
        out.push_str(&format!("world {}\n", self.name));
        out.push_str(&format!("wall_height {}\n", self.wall_height));
        out.push_str(&format!("eye_height {}\n", self.eye_height));
        out.push_str(&format!("floor_shade {}\n", self.floor_shade));
        out.push_str(&format!("ceiling_shade {}\n", self.ceiling_shade));
        out.push_str(&format!(
            "spawn {} {} {} {}\n",
            self.spawn.0, self.spawn.1, self.spawn.2, self.spawn.3
        ));
        for r in &self.rooms {
            out.push_str(&format!("room {} {} {} {} {}\n", r.id, r.x0, r.y0, r.x1, r.y1));
        }
        for w in &self.walls {
            out.push_str(&format!(
                "wall {} {} {} {} {}\n",
                w.a.0,
                w.a.1,
                w.b.0,
                w.b.1,
                texture_to_text(&w.texture)
            ));
        }
        for p in &self.portals {
            let mut tags = String::new();
            if p.tags.dark {
                tags.push_str(" dark");
            }
            if p.tags.narrow {
                tags.push_str(" narrow");
            }
            if p.tags.decoy_adjacent {
                tags.push_str(" decoy_adjacent");
            }
            out.push_str(&format!(
                "portal {} {} {} {} {}{}\n",
                p.id, p.a.0, p.a.1, p.b.0, p.b.1, tags
            ));
        }
        for p in &self.props {
            match p.shape {
                PropShape::Boxy { x0, y0, x1, y1 } => out.push_str(&format!(
                    "prop box {x0} {y0} {x1} {y1} {} {}\n",
                    p.height, p.shade
                )),
                PropShape::Cylinder { cx, cy, radius } => out.push_str(&format!(
                    "prop cyl {cx} {cy} {radius} {} {}\n",
                    p.height, p.shade
                )),
            }
        }
        for d in &self.decoys {
            out.push_str(&format!(
                "decoy {} {} {} {} {}\n",
                d.a.0, d.a.1, d.b.0, d.b.1, d.brightness
            ));
        }
        if !self.route.is_empty() {
            out.push_str("route");
            for id in &self.route {
                out.push_str(&format!(" {id}"));
            }
            out.push('\n');
        }
        for m in &self.milestones {
            out.push_str(&format!(
                "milestone {} {} {} {} {}\n",
                m.id, m.x, m.y, m.yaw, m.pitch
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SimError> {
        let mut world = World {
            name: String::new(),
            wall_height: 2.4,
            eye_height: 1.2,
            floor_shade: 60,
            ceiling_shade: 35,
            spawn: (0.0, 0.0, 0.0, 0.0),
            rooms: Vec::new(),
            walls: Vec::new(),
            portals: Vec::new(),
            props: Vec::new(),
            decoys: Vec::new(),
            route: Vec::new(),
            milestones: Vec::new(),
        };
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let key = it.next().unwrap();
            let rest: Vec<&str> = it.collect();
            let err = |msg: &str| SimError::Parse(lineno, msg.to_string());
            let f = |s: &str| s.parse::<f64>().map_err(|_| SimError::Parse(lineno, format!("bad number '{s}'")));
            let u = |s: &str| s.parse::<u32>().map_err(|_| SimError::Parse(lineno, format!("bad integer '{s}'")));
            let byte = |s: &str| s.parse::<u8>().map_err(|_| SimError::Parse(lineno, format!("bad byte '{s}'")));
            match key {
                "world" => world.name = rest.join(" "),
                "wall_height" => world.wall_height = f(rest.first().ok_or_else(|| err("missing value"))?)?,
                "eye_height" => world.eye_height = f(rest.first().ok_or_else(|| err("missing value"))?)?,
                "floor_shade" => world.floor_shade = byte(rest.first().ok_or_else(|| err("missing value"))?)?,
                "ceiling_shade" => world.ceiling_shade = byte(rest.first().ok_or_else(|| err("missing value"))?)?,
                "spawn" => {
                    if rest.len() != 4 {
                        return Err(err("spawn needs x y yaw pitch"));
                    }
                    world.spawn = (f(rest[0])?, f(rest[1])?, f(rest[2])?, f(rest[3])?);
                }
                "room" => {
                    if rest.len() != 5 {
                        return Err(err("room needs id x0 y0 x1 y1"));
                    }
                    world.rooms.push(Room {
                        id: u(rest[0])?,
                        x0: f(rest[1])?,
                        y0: f(rest[2])?,
                        x1: f(rest[3])?,
                        y1: f(rest[4])?,
                    });
                }
                "wall" => {
                    if rest.len() < 5 {
                        return Err(err("wall needs ax ay bx by texture"));
                    }
                    let texture = match rest[4] {
                        "stripes" => {
                            if rest.len() != 9 {
                                return Err(err("stripes needs period phase lo hi"));
                            }
                            Texture::Stripes {
                                period: f(rest[5])?,
                                phase: f(rest[6])?,
                                lo: byte(rest[7])?,
                                hi: byte(rest[8])?,
                            }
                        }
                        "checker" => {
                            if rest.len() != 8 {
                                return Err(err("checker needs size lo hi"));
                            }
                            Texture::Checker { size: f(rest[5])?, lo: byte(rest[6])?, hi: byte(rest[7])? }
                        }
                        "flat" => {
                            if rest.len() != 6 {
                                return Err(err("flat needs value"));
                            }
                            Texture::Flat { value: byte(rest[5])? }
                        }
                        other => return Err(err(&format!("unknown texture '{other}'"))),
                    };
                    world.walls.push(Wall {
                        a: (f(rest[0])?, f(rest[1])?),
                        b: (f(rest[2])?, f(rest[3])?),
                        texture,
                    });
                }
                "portal" => {
                    if rest.len() < 5 {
                        return Err(err("portal needs id ax ay bx by [tags]"));
                    }
                    let mut tags = PortalTags::default();
                    for tag in &rest[5..] {
                        match *tag {
                            "dark" => tags.dark = true,
                            "narrow" => tags.narrow = true,
                            "decoy_adjacent" => tags.decoy_adjacent = true,
                            other => return Err(err(&format!("unknown tag '{other}'"))),
                        }
                    }
                    world.portals.push(Portal {
                        id: u(rest[0])?,
                        a: (f(rest[1])?, f(rest[2])?),
                        b: (f(rest[3])?, f(rest[4])?),
                        tags,
                    });
                }
                "prop" => match rest.first().copied() {
                    Some("box") => {
                        if rest.len() != 7 {
                            return Err(err("prop box needs x0 y0 x1 y1 height shade"));
                        }
                        world.props.push(Prop {
                            shape: PropShape::Boxy {
                                x0: f(rest[1])?,
                                y0: f(rest[2])?,
                                x1: f(rest[3])?,
                                y1: f(rest[4])?,
                            },
                            height: f(rest[5])?,
                            shade: byte(rest[6])?,
                        });
                    }
                    Some("cyl") => {
                        if rest.len() != 6 {
                            return Err(err("prop cyl needs cx cy r height shade"));
                        }
                        world.props.push(Prop {
                            shape: PropShape::Cylinder {
                                cx: f(rest[1])?,
                                cy: f(rest[2])?,
                                radius: f(rest[3])?,
                            },
                            height: f(rest[4])?,
                            shade: byte(rest[5])?,
                        });
                    }
                    _ => return Err(err("prop needs 'box' or 'cyl'")),
                },
                "decoy" => {
                    if rest.len() != 5 {
                        return Err(err("decoy needs ax ay bx by brightness"));
                    }
                    world.decoys.push(Decoy {
                        a: (f(rest[0])?, f(rest[1])?),
                        b: (f(rest[2])?, f(rest[3])?),
                        brightness: byte(rest[4])?,
                    });
                }
                "route" => {
                    world.route = rest.iter().map(|s| u(s)).collect::<Result<_, _>>()?;
                }
                "milestone" => {
                    if rest.len() != 5 {
                        return Err(err("milestone needs id x y yaw pitch"));
                    }
                    world.milestones.push(MilestonePose {
                        id: u(rest[0])?,
                        x: f(rest[1])?,
                        y: f(rest[2])?,
                        yaw: f(rest[3])?,
                        pitch: f(rest[4])?,
                    });
                }
                other => return Err(err(&format!("unknown directive '{other}'"))),
            }
        }
        Ok(world)
    }
}
