//! Deterministic world templates. Each scenario builds rooms, portals,
//! props and decoys, derives the wall segments (room boundaries minus
//! portal spans, deduplicated on shared edges), assigns seeded textures,
//! and designates a route plus milestone poses.

use super::world::{Decoy, MilestonePose, Portal, Prop, PropShape, Room, SimError, Texture, Wall, World};
use crate::perception::PortalTags;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

pub const SCENARIOS: [&str; 8] = [
    "straight_corridor",
    "l_turn",
    "t_junction_deadend",
    "symmetric_fork",
    "dark_right_door",
    "decoy_salience",
    "narrow_oblique_stairs",
    "occluded_gap",
];

#[derive(Clone, Copy)]
struct Palette {
    lo: u8,
    hi: u8,
    period: f64,
    checker: bool,
}

fn draw_palette(rng: &mut ChaCha8Rng, checker: bool) -> Palette {
    Palette {
        lo: 40 + (rng.gen::<f64>() * 40.0) as u8,
        hi: 150 + (rng.gen::<f64>() * 80.0) as u8,
        period: 1.6 + rng.gen::<f64>() * 1.4,
        checker,
    }
}

fn texture_from(pal: &Palette, phase: f64) -> Texture {
    if pal.checker {
        Texture::Checker { size: pal.period, lo: pal.lo, hi: pal.hi }
    } else {
        Texture::Stripes { period: pal.period, phase, lo: pal.lo, hi: pal.hi }
    }
}

struct Builder {
    rooms: Vec<(Room, Palette)>,
    portals: Vec<Portal>,
    props: Vec<Prop>,
    decoys: Vec<Decoy>,
    route: Vec<u32>,
    milestones: Vec<MilestonePose>,
    spawn: (f64, f64, f64, f64),
    rng: ChaCha8Rng,
}

impl Builder {
    fn new(seed: u64) -> Self {
        Builder {
            rooms: Vec::new(),
            portals: Vec::new(),
            props: Vec::new(),
            decoys: Vec::new(),
            route: Vec::new(),
            milestones: Vec::new(),
            spawn: (0.0, 0.0, 0.0, 0.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn room(&mut self, id: u32, x0: f64, y0: f64, x1: f64, y1: f64) -> Palette {
        let pal = draw_palette(&mut self.rng, id % 2 == 1);
        self.rooms.push((Room { id, x0, y0, x1, y1 }, pal));
        pal
    }

    fn room_with(&mut self, id: u32, x0: f64, y0: f64, x1: f64, y1: f64, pal: Palette) {
        self.rooms.push((Room { id, x0, y0, x1, y1 }, pal));
    }

    fn portal(&mut self, id: u32, a: (f64, f64), b: (f64, f64), tags: PortalTags) {
        self.portals.push(Portal { id, a, b, tags });
    }

    fn milestone(&mut self, id: u32, x: f64, y: f64, yaw: f64) {
        self.milestones.push(MilestonePose { id, x, y, yaw, pitch: 0.0 });
    }

    fn build(mut self, name: &str) -> World {
        let mut walls = Vec::new();
        let mut seen: BTreeSet<(i64, i64, i64, i64)> = BTreeSet::new();
        let quant = |v: f64| (v * 1e6).round() as i64;
        let rooms = self.rooms.clone();
        for (room, pal) in &rooms {
            let sides = [
                ((room.x0, room.y0), (room.x1, room.y0)),
                ((room.x0, room.y1), (room.x1, room.y1)),
                ((room.x0, room.y0), (room.x0, room.y1)),
                ((room.x1, room.y0), (room.x1, room.y1)),
            ];
            for (a, b) in sides {
                for (pa, pb) in cut_openings(a, b, &self.portals) {
                    let mut key = (quant(pa.0), quant(pa.1), quant(pb.0), quant(pb.1));
                    let rev = (key.2, key.3, key.0, key.1);
                    if rev < key {
                        key = rev;
                    }
                    if !seen.insert(key) {
                        continue;
                    }
                    let phase = self.rng.gen::<f64>() * 2.0;
                    walls.push(Wall { a: pa, b: pb, texture: texture_from(pal, phase) });
                }
            }
        }
        World {
            name: name.to_string(),
            wall_height: 2.4,
            eye_height: 1.2,
            floor_shade: 60,
            ceiling_shade: 35,
            spawn: self.spawn,
            rooms: rooms.into_iter().map(|(r, _)| r).collect(),
            walls,
            portals: self.portals,
            props: self.props,
            decoys: self.decoys,
            route: self.route,
            milestones: self.milestones,
        }
    }
}

/// Splits one room side into wall pieces around any portal spans lying on
/// the same line.
fn cut_openings(a: (f64, f64), b: (f64, f64), portals: &[Portal]) -> Vec<((f64, f64), (f64, f64))> {
    let vertical = (a.0 - b.0).abs() < 1e-9;
    let fixed = if vertical { a.0 } else { a.1 };
    let (lo, hi) = if vertical {
        (a.1.min(b.1), a.1.max(b.1))
    } else {
        (a.0.min(b.0), a.0.max(b.0))
    };
    let mut spans: Vec<(f64, f64)> = Vec::new();
    for p in portals {
        let p_vertical = (p.a.0 - p.b.0).abs() < 1e-9;
        if p_vertical != vertical {
            continue;
        }
        let p_fixed = if vertical { p.a.0 } else { p.a.1 };
        if (p_fixed - fixed).abs() > 1e-9 {
            continue;
        }
        let (plo, phi) = if vertical {
            (p.a.1.min(p.b.1), p.a.1.max(p.b.1))
        } else {
            (p.a.0.min(p.b.0), p.a.0.max(p.b.0))
        };
        if phi > lo + 1e-9 && plo < hi - 1e-9 {
            spans.push((plo.max(lo), phi.min(hi)));
        }
    }
    spans.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut pieces = Vec::new();
    let mut cursor = lo;
    for (plo, phi) in spans {
        if plo - cursor > 1e-6 {
            pieces.push((cursor, plo));
        }
        cursor = cursor.max(phi);
    }
    if hi - cursor > 1e-6 {
        pieces.push((cursor, hi));
    }
    pieces
        .into_iter()
        .map(|(s, e)| {
            if vertical {
                ((fixed, s), (fixed, e))
            } else {
                ((s, fixed), (e, fixed))
            }
        })
        .collect()
}

fn no_tags() -> PortalTags {
    PortalTags::default()
}

fn straight_corridor(seed: u64) -> World {
    let mut b = Builder::new(seed);
    for i in 0..4u32 {
        b.room(i, 8.0 * i as f64, 0.0, 8.0 * (i + 1) as f64, 4.0);
    }
    for i in 0..3u32 {
        b.portal(i, (8.0 * (i + 1) as f64, 1.2), (8.0 * (i + 1) as f64, 2.8), no_tags());
    }
    b.route = vec![0, 1, 2];
    b.spawn = (1.5, 2.0, 0.0, 0.0);
    b.milestone(1, 11.0, 2.0, 0.0);
    b.milestone(2, 19.0, 2.0, 0.0);
    b.milestone(3, 25.2, 2.0, 0.0);
    b.build("straight_corridor")
}

fn l_turn(seed: u64) -> World {
    let mut b = Builder::new(seed);
    b.room(0, 0.0, 0.0, 8.0, 4.0);
    b.room(1, 8.0, 0.0, 16.0, 4.0);
    b.room(2, 12.0, 4.0, 16.0, 12.0);
    b.portal(0, (8.0, 1.2), (8.0, 2.8), no_tags());
    b.portal(1, (13.2, 4.0), (14.8, 4.0), no_tags());
    b.route = vec![0, 1];
    b.spawn = (1.0, 2.0, 0.0, 0.0);
    b.milestone(1, 11.0, 2.0, 0.0);
    b.milestone(2, 14.0, 5.4, 270.0);
    b.build("l_turn")
}

/// Three identical junctions along the route, each with a visually salient
/// dead-end closet door on the screen-left (north) wall. Identical textures
/// across junctions let remembered failures generalize.
fn t_junction_deadend(seed: u64) -> World {
    let mut b = Builder::new(seed);
    let junction_pal = draw_palette(&mut b.rng, false);
    let closet_pal = draw_palette(&mut b.rng, true);
    b.room(0, 0.0, 1.0, 6.0, 3.0);
    for i in 0..3u32 {
        let x0 = 6.0 + 8.0 * i as f64;
        b.room_with(1 + i * 2, x0, 0.0, x0 + 8.0, 4.0, junction_pal);
        let lure_x = x0 + 3.4;
        b.room_with(2 + i * 2, lure_x - 0.6, 4.0, lure_x + 1.8, 6.4, closet_pal);
        b.portal(10 + i, (lure_x, 4.0), (lure_x + 1.2, 4.0), no_tags());
        b.portal(1 + i, (x0 + 8.0, 1.4), (x0 + 8.0, 2.6), no_tags());
    }
    b.room(7, 30.0, 0.0, 36.0, 4.0);
    b.portal(0, (6.0, 1.4), (6.0, 2.6), no_tags());
    b.route = vec![0, 1, 2, 3];
    b.spawn = (1.0, 2.0, 0.0, 0.0);
    b.milestone(1, 15.0, 2.0, 0.0);
    b.milestone(2, 23.0, 2.0, 0.0);
    b.milestone(3, 31.0, 2.0, 0.0);
    b.build("t_junction_deadend")
}

fn symmetric_fork(seed: u64) -> World {
    let mut b = Builder::new(seed);
    b.room(0, 0.0, 0.0, 8.0, 6.0);
    b.room(1, 8.0, 3.2, 16.0, 6.0);
    b.room(2, 8.0, 0.0, 16.0, 2.8);
    b.room(3, 16.0, 3.2, 24.0, 6.0);
    b.portal(1, (8.0, 3.6), (8.0, 4.8), no_tags());
    b.portal(2, (8.0, 1.2), (8.0, 2.4), no_tags());
    b.portal(3, (16.0, 3.8), (16.0, 5.0), no_tags());
    b.route = vec![1, 3];
    b.spawn = (1.0, 3.0, 0.0, 0.0);
    b.milestone(1, 11.0, 4.4, 0.0);
    b.milestone(2, 17.2, 4.4, 0.0);
    b.build("symmetric_fork")
}

/// Two mirrored junctions: the first turns through a bright screen-left
/// door, the second through a dark screen-right door while a bright dead-end
/// door sits on the screen-left side.
fn dark_right_door(seed: u64) -> World {
    let mut b = Builder::new(seed);
    b.room(0, 0.0, 0.0, 6.0, 4.0);
    b.room(1, 6.0, 0.0, 14.0, 4.0);
    b.room(2, 14.0, 2.0, 22.0, 5.0);
    b.room(3, 22.0, 1.5, 30.0, 5.0);
    // Closets behind the wrong doors.
    b.room(4, 14.0, 0.0, 17.2, 1.8);
    b.room(5, 22.0, 5.0, 25.2, 6.8);

    b.portal(0, (6.0, 1.2), (6.0, 2.8), no_tags());
    // Junction A: bright route door sits screen-left (north).
    b.portal(1, (14.0, 2.45), (14.0, 3.55), no_tags());
    b.portal(100, (14.0, 0.45), (14.0, 1.55), no_tags());
    // Junction B: the route continues through the dark screen-right door.
    b.portal(2, (22.0, 2.3), (22.0, 3.3), PortalTags { dark: true, ..Default::default() });
    b.portal(101, (22.0, 3.9), (22.0, 5.0), no_tags());

    b.route = vec![0, 1, 2];
    b.spawn = (1.2, 2.0, 0.0, 0.0);
    b.milestone(1, 16.2, 3.0, 0.0);
    b.milestone(2, 23.6, 2.8, 0.0);
    b.build("dark_right_door")
}

/// A visually striking bright patch dead ahead, with the actual route
/// leaving through a partially occluded side door.
fn decoy_salience(seed: u64) -> World {
    let mut b = Builder::new(seed);
    b.room(0, 0.0, 0.0, 10.0, 6.0);
    b.room(1, 6.0, 6.0, 10.0, 12.0);
    b.room(2, 10.0, 6.0, 16.0, 12.0);
    b.portal(0, (7.8, 6.0), (9.0, 6.0), PortalTags { decoy_adjacent: true, ..Default::default() });
    b.portal(1, (10.0, 8.4), (10.0, 9.6), no_tags());
    b.decoys.push(Decoy { a: (9.99, 2.2), b: (9.99, 3.8), brightness: 240 });
    b.props.push(Prop {
        shape: PropShape::Boxy { x0: 7.2, y0: 4.4, x1: 8.0, y1: 5.2 },
        height: 1.5,
        shade: 120,
    });
    b.route = vec![0, 1];
    b.spawn = (1.0, 3.0, 0.0, 0.0);
    b.milestone(1, 8.4, 7.6, 270.0);
    b.milestone(2, 10.9, 9.0, 0.0);
    b.build("decoy_salience")
}

/// A narrow opening reached at an oblique angle from the travel direction.
fn narrow_oblique_stairs(seed: u64) -> World {
    let mut b = Builder::new(seed);
    b.room(0, 0.0, 0.0, 10.0, 4.0);
    b.room(1, 7.6, 4.0, 9.6, 14.0);
    b.room(2, 6.0, 14.0, 12.0, 18.0);
    b.portal(0, (8.2, 4.0), (9.0, 4.0), PortalTags { narrow: true, ..Default::default() });
    b.portal(1, (8.2, 14.0), (9.0, 14.0), PortalTags { narrow: true, ..Default::default() });
    b.route = vec![0, 1];
    b.spawn = (1.0, 2.0, 0.0, 0.0);
    b.milestone(1, 8.6, 5.4, 270.0);
    b.milestone(2, 8.6, 14.9, 270.0);
    b.build("narrow_oblique_stairs")
}

/// The main-path gap is partially hidden behind a prop while a bright
/// dead-end shrine draws attention to the side.
fn occluded_gap(seed: u64) -> World {
    let mut b = Builder::new(seed);
    b.room(0, 0.0, 0.0, 8.0, 6.0);
    b.room(1, 8.0, 0.0, 14.0, 6.0);
    b.room(2, 14.0, 0.0, 20.0, 6.0);
    b.room(3, 2.0, 6.0, 4.8, 9.0);
    b.portal(0, (8.0, 2.2), (8.0, 3.8), no_tags());
    b.portal(1, (14.0, 2.2), (14.0, 3.8), no_tags());
    b.portal(50, (2.6, 6.0), (4.2, 6.0), PortalTags { decoy_adjacent: true, ..Default::default() });
    b.props.push(Prop {
        shape: PropShape::Boxy { x0: 5.8, y0: 2.0, x1: 6.6, y1: 3.0 },
        height: 1.5,
        shade: 130,
    });
    b.decoys.push(Decoy { a: (2.2, 8.99), b: (4.6, 8.99), brightness: 245 });
    b.route = vec![0, 1];
    b.spawn = (1.0, 3.0, 0.0, 0.0);
    b.milestone(1, 8.9, 3.0, 0.0);
    b.milestone(2, 14.9, 3.0, 0.0);
    b.build("occluded_gap")
}

/// Builds the named scenario world, identical for identical (scenario, seed).
pub fn generate_world(scenario: &str, seed: u64) -> Result<World, SimError> {
    match scenario {
        "straight_corridor" => Ok(straight_corridor(seed)),
        "l_turn" => Ok(l_turn(seed)),
        "t_junction_deadend" => Ok(t_junction_deadend(seed)),
        "symmetric_fork" => Ok(symmetric_fork(seed)),
        "dark_right_door" => Ok(dark_right_door(seed)),
        "decoy_salience" => Ok(decoy_salience(seed)),
        "narrow_oblique_stairs" => Ok(narrow_oblique_stairs(seed)),
        "occluded_gap" => Ok(occluded_gap(seed)),
        other => Err(SimError::UnknownScenario(other.to_string())),
    }
}
