//! Environment generation: binary space partitioning with lattice-aligned
//! doors, object placement, and nav-graph construction.
//!
//! Nav nodes sit on an 8-px lattice at pixel coordinates ≡ 4 (mod 8),
//! which coincides with the centers of the model's prediction cells.
//! Walls avoid lattice coordinates and doors are centered on them, so
//! adjacent rooms always connect through lattice lines.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::catalog::{Catalog, HALLWAY, ROOM_CATEGORIES};
use super::render::render_floor;
use super::{
    pixel_to_meters, Door, Environment, FloorPlan, NavNode, ObjectPlacement, Room, WorldError,
    WorldgenParams,
};
use crate::util::rng_for;

const LATTICE: usize = 8;
const LATTICE_OFF: usize = 4;

#[derive(Clone, Copy)]
struct Rect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Rect {
    fn w(&self) -> usize {
        self.x1 - self.x0
    }
    fn h(&self) -> usize {
        self.y1 - self.y0
    }
    fn area(&self) -> usize {
        self.w() * self.h()
    }
}

fn lattice_coords(lo: usize, hi: usize) -> Vec<usize> {
    // lattice points v ≡ 4 (mod 8) with lo ≤ v < hi
    let mut v = lo.div_ceil(LATTICE) * LATTICE + LATTICE_OFF;
    if v >= LATTICE + lo {
        v -= LATTICE;
    }
    let mut out = Vec::new();
    while v < hi {
        if v >= lo {
            out.push(v);
        }
        v += LATTICE;
    }
    out
}

/// Split rects until `target` leaves exist; returns leaves and doors.
fn bsp_split(
    bounds: Rect,
    target: usize,
    min_dim: usize,
    rng: &mut ChaCha12Rng,
) -> (Vec<Rect>, Vec<Door>) {
    let mut leaves = vec![bounds];
    let mut doors = Vec::new();
    while leaves.len() < target {
        // split the largest splittable leaf
        let mut pick: Option<usize> = None;
        for (i, r) in leaves.iter().enumerate() {
            let splittable = r.w() >= 2 * min_dim + 1 || r.h() >= 2 * min_dim + 1;
            if splittable && pick.is_none_or(|p: usize| r.area() > leaves[p].area()) {
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        let r = leaves[i];
        let vertical = if r.w() >= 2 * min_dim + 1 && r.h() >= 2 * min_dim + 1 {
            r.w() >= r.h()
        } else {
            r.w() >= 2 * min_dim + 1
        };
        if vertical {
            let mut xc = rng.gen_range(r.x0 + min_dim..=r.x1 - min_dim - 1);
            // keep walls off the node lattice
            if xc % LATTICE == LATTICE_OFF {
                xc = if xc + 1 <= r.x1 - min_dim - 1 { xc + 1 } else { xc - 1 };
            }
            let rows = lattice_coords(r.y0 + 1, r.y1 - 1);
            let d = *rows.choose(rng).expect("room tall enough for a door row");
            doors.push(Door { cells: vec![(d - 1, xc), (d, xc), (d + 1, xc)] });
            leaves[i] = Rect { x1: xc, ..r };
            leaves.push(Rect { x0: xc + 1, ..r });
        } else {
            let mut yc = rng.gen_range(r.y0 + min_dim..=r.y1 - min_dim - 1);
            if yc % LATTICE == LATTICE_OFF {
                yc = if yc + 1 <= r.y1 - min_dim - 1 { yc + 1 } else { yc - 1 };
            }
            let cols = lattice_coords(r.x0 + 1, r.x1 - 1);
            let d = *cols.choose(rng).expect("room wide enough for a door column");
            doors.push(Door { cells: vec![(yc, d - 1), (yc, d), (yc, d + 1)] });
            leaves[i] = Rect { y1: yc, ..r };
            leaves.push(Rect { x0: r.x0, y0: yc + 1, x1: r.x1, y1: r.y1 });
        }
    }
    (leaves, doors)
}

/// Fill the derived per-cell fields and the raster.
pub(super) fn rebuild_floor(floor: &mut FloorPlan) {
    let n = floor.width * floor.height;
    floor.free_mask = vec![false; n];
    floor.room_labels = vec![0; n];
    floor.cell_room = vec![-1; n];
    for (ri, room) in floor.rooms.iter().enumerate() {
        for row in room.y0..room.y1 {
            for col in room.x0..room.x1 {
                let i = row * floor.width + col;
                floor.free_mask[i] = true;
                floor.room_labels[i] = room.category + 1;
                floor.cell_room[i] = ri as i32;
            }
        }
    }
    for door in &floor.doors {
        for &(row, col) in &door.cells {
            floor.free_mask[row * floor.width + col] = true;
        }
    }
    floor.raster = render_floor(floor);
}

fn put_objects(
    floors: &mut [FloorPlan],
    palette_types: &[u8],
    palette_colors: &[u8],
    duplicate_bias: f64,
    rng: &mut ChaCha12Rng,
) {
    // object configurations per (floor, room), for duplicate copying
    let mut configs: Vec<(u8, Vec<(u8, u8)>)> = Vec::new(); // (category, multiset)
    for fi in 0..floors.len() {
        for ri in 0..floors[fi].rooms.len() {
            let room = floors[fi].rooms[ri];
            if room.category == HALLWAY {
                continue;
            }
            let multiset: Vec<(u8, u8)> = {
                let prior: Vec<&Vec<(u8, u8)>> = configs
                    .iter()
                    .filter(|(c, _)| *c == room.category)
                    .map(|(_, m)| m)
                    .collect();
                if !prior.is_empty() && rng.gen::<f64>() < duplicate_bias {
                    (*prior.choose(rng).unwrap()).clone()
                } else {
                    let count = rng.gen_range(1..=2);
                    let mut m: Vec<(u8, u8)> = (0..count)
                        .map(|_| {
                            (
                                *palette_types.choose(rng).unwrap(),
                                *palette_colors.choose(rng).unwrap(),
                            )
                        })
                        .collect();
                    m.sort_unstable();
                    m
                }
            };
            configs.push((room.category, multiset.clone()));
            place_multiset(&mut floors[fi], ri, &multiset, rng);
        }
    }
}

fn place_multiset(
    floor: &mut FloorPlan,
    room_idx: usize,
    multiset: &[(u8, u8)],
    rng: &mut ChaCha12Rng,
) {
    let room = floor.rooms[room_idx];
    for &(object_type, color) in multiset {
        let mut placed = false;
        for _ in 0..30 {
            let row = rng.gen_range(room.y0 + 3..room.y1 - 3);
            let col = rng.gen_range(room.x0 + 3..room.x1 - 3);
            let clash = floor.objects.iter().any(|o| {
                o.room == room_idx
                    && o.cell.0.abs_diff(row) < 6
                    && o.cell.1.abs_diff(col) < 6
            });
            if !clash {
                floor.objects.push(ObjectPlacement {
                    object_type,
                    color,
                    cell: (row, col),
                    room: room_idx,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            // room too crowded; the signature keeps whatever fit
            break;
        }
    }
}

/// Room signature: category plus object (type, color) multiset.
pub fn room_signature(floor: &FloorPlan, room_idx: usize) -> (u8, Vec<(u8, u8)>) {
    let mut objs: Vec<(u8, u8)> = floor
        .objects
        .iter()
        .filter(|o| o.room == room_idx)
        .map(|o| (o.object_type, o.color))
        .collect();
    objs.sort_unstable();
    (floor.rooms[room_idx].category, objs)
}

/// Environment-wide signature occurrence counts keyed by (floor, room).
pub fn signature_counts(env: &Environment) -> Vec<Vec<usize>> {
    let sigs: Vec<Vec<(u8, Vec<(u8, u8)>)>> = env
        .floors
        .iter()
        .map(|f| (0..f.rooms.len()).map(|r| room_signature(f, r)).collect())
        .collect();
    sigs.iter()
        .map(|floor_sigs| {
            floor_sigs
                .iter()
                .map(|s| sigs.iter().flatten().filter(|t| *t == s).count())
                .collect()
        })
        .collect()
}

fn ensure_discriminative(env: &mut Environment, palette_types: &[u8], rng: &mut ChaCha12Rng) {
    // every floor gets at least one room with an environment-unique
    // signature, so a misplaced Observer always has somewhere to walk
    let cat = Catalog::global();
    for fi in 0..env.floors.len() {
        for _ in 0..12 {
            let counts = signature_counts(env);
            let has_unique = env.floors[fi]
                .rooms
                .iter()
                .enumerate()
                .any(|(ri, r)| r.category != HALLWAY && counts[fi][ri] == 1);
            if has_unique {
                break;
            }
            // stamp one room with an object outside the environment palette
            let Some(ri) = env.floors[fi]
                .rooms
                .iter()
                .position(|r| r.category != HALLWAY)
            else {
                break; // hallway-only floor is trivially fine
            };
            let fresh: Vec<u8> = (0..cat.types.len() as u8)
                .filter(|t| !palette_types.contains(t))
                .collect();
            let t = *fresh.choose(rng).unwrap_or(&0);
            let c = rng.gen_range(0..cat.colors.len() as u8);
            place_multiset(&mut env.floors[fi], ri, &[(t, c)], rng);
        }
    }
}

fn build_nav(env: &mut Environment) {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (fi, floor) in env.floors.iter().enumerate() {
        let rows = lattice_coords(1, floor.height - 1);
        let cols = lattice_coords(1, floor.width - 1);
        // candidate lattice points inside rooms
        let mut grid = vec![vec![None::<usize>; cols.len()]; rows.len()];
        let mut pts = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                if floor.cell_room[floor.idx(r, c)] >= 0 {
                    grid[i][j] = Some(pts.len());
                    pts.push((i, j, r, c));
                }
            }
        }
        // lattice edges where the straight pixel line is free
        let mut adj = vec![Vec::new(); pts.len()];
        let line_free = |r0: usize, c0: usize, r1: usize, c1: usize| -> bool {
            if r0 == r1 {
                (c0.min(c1)..=c0.max(c1)).all(|c| floor.free_mask[floor.idx(r0, c)])
            } else {
                (r0.min(r1)..=r0.max(r1)).all(|r| floor.free_mask[floor.idx(r, c0)])
            }
        };
        for (p, &(i, j, r, c)) in pts.iter().enumerate() {
            if j + 1 < cols.len() {
                if let Some(q) = grid[i][j + 1] {
                    if line_free(r, c, r, cols[j + 1]) {
                        adj[p].push(q);
                        adj[q].push(p);
                    }
                }
            }
            if i + 1 < rows.len() {
                if let Some(q) = grid[i + 1][j] {
                    if line_free(r, c, rows[i + 1], c) {
                        adj[p].push(q);
                        adj[q].push(p);
                    }
                }
            }
        }
        // keep the largest connected component
        let mut comp = vec![usize::MAX; pts.len()];
        let mut ncomp = 0;
        for s in 0..pts.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = ncomp;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = ncomp;
                        stack.push(v);
                    }
                }
            }
            ncomp += 1;
        }
        let mut sizes = vec![0usize; ncomp];
        for &c in &comp {
            sizes[c] += 1;
        }
        let keep = sizes
            .iter()
            .enumerate()
            .max_by_key(|(i, s)| (**s, usize::MAX - i))
            .map(|(i, _)| i)
            .unwrap_or(0);

        let mut remap = vec![u32::MAX; pts.len()];
        for (p, &(_, _, r, c)) in pts.iter().enumerate() {
            if comp[p] != keep {
                continue;
            }
            let id = nodes.len() as u32;
            remap[p] = id;
            nodes.push(NavNode {
                node_id: id,
                floor_index: fi,
                position: pixel_to_meters(r, c, env.meters_per_pixel),
            });
        }
        for (p, nbrs) in adj.iter().enumerate() {
            for &q in nbrs {
                if p < q && remap[p] != u32::MAX && remap[q] != u32::MAX {
                    edges.push((remap[p], remap[q]));
                }
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    env.nav_nodes = nodes;
    env.nav_edges = edges;
}

/// Deterministic environment from (seed, params).
pub fn generate_environment(
    seed: u64,
    params: &WorldgenParams,
) -> Result<Environment, WorldError> {
    params.validate()?;
    let cat = Catalog::global();
    let mut rng = rng_for(seed, "worldgen");

    let width = params.width.div_ceil(8) * 8;
    let height = params.height.div_ceil(8) * 8;
    let n_floors = rng.gen_range(params.floors_min..=params.floors_max);

    // per-environment palettes
    let mut type_ids: Vec<u8> = (0..cat.types.len() as u8).collect();
    type_ids.shuffle(&mut rng);
    let palette_types: Vec<u8> = type_ids[..params.palette_types.min(type_ids.len())].to_vec();
    let mut color_ids: Vec<u8> = (0..cat.colors.len() as u8).collect();
    color_ids.shuffle(&mut rng);
    let palette_colors: Vec<u8> =
        color_ids[..params.palette_colors.min(color_ids.len())].to_vec();
    let mut cat_ids: Vec<u8> = (1..ROOM_CATEGORIES.len() as u8).collect();
    cat_ids.shuffle(&mut rng);
    let palette_cats: Vec<u8> = cat_ids[..2].to_vec();

    let mut floors = Vec::new();
    for floor_index in 0..n_floors {
        let bounds = Rect { x0: 1, y0: 1, x1: width - 1, y1: height - 1 };
        let target = rng.gen_range(params.rooms_min..=params.rooms_max);
        let (leaves, doors) = bsp_split(bounds, target, params.min_room_dim, &mut rng);
        if leaves.len() < params.rooms_min {
            return Err(WorldError::Generation(format!(
                "room count {} exceeds what a {width}x{height} raster can hold",
                params.rooms_min
            )));
        }
        let hallway_at = rng.gen_range(0..leaves.len());
        let rooms: Vec<Room> = leaves
            .iter()
            .enumerate()
            .map(|(i, r)| Room {
                category: if i == hallway_at || leaves.len() == 1 {
                    HALLWAY
                } else {
                    *palette_cats.choose(&mut rng).unwrap()
                },
                x0: r.x0,
                y0: r.y0,
                x1: r.x1,
                y1: r.y1,
            })
            .collect();

        // cosmetic entrance on the top outer wall of a border room
        let border_rooms: Vec<&Room> = rooms.iter().filter(|r| r.y0 == 1).collect();
        let er = border_rooms[rng.gen_range(0..border_rooms.len())];
        let cols = lattice_coords(er.x0 + 1, er.x1 - 1);
        let ec = *cols.choose(&mut rng).unwrap();
        let entrance = Door { cells: vec![(0, ec - 1), (0, ec), (0, ec + 1)] };

        let mut floor = FloorPlan {
            floor_index,
            width,
            height,
            rooms,
            doors,
            entrance,
            objects: Vec::new(),
            raster: Vec::new(),
            free_mask: Vec::new(),
            room_labels: Vec::new(),
            cell_room: Vec::new(),
        };
        rebuild_floor(&mut floor);
        floors.push(floor);
    }

    put_objects(&mut floors, &palette_types, &palette_colors, params.duplicate_bias, &mut rng);

    let mut env = Environment {
        env_id: format!("env-{seed:08x}"),
        meters_per_pixel: params.meters_per_pixel,
        floors,
        nav_nodes: Vec::new(),
        nav_edges: Vec::new(),
    };
    ensure_discriminative(&mut env, &palette_types, &mut rng);
    for floor in &mut env.floors {
        rebuild_floor(floor); // pick up objects in the raster
    }
    build_nav(&mut env);
    if env.nav_nodes.is_empty() {
        return Err(WorldError::Generation("environment has no nav nodes".into()));
    }
    Ok(env)
}
