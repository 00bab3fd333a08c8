//! Deterministic synthetic environments, episodes, and template dialogs.

pub mod catalog;
mod episode;
mod gen;
pub mod io;
mod render;
mod stats;

pub use episode::{
    build_splits, sample_start_locations, script_episode, validate_episode, PolicyParams,
    SplitPlan, SCHEMA_VERSION,
};
pub use gen::{generate_environment, room_signature, signature_counts};
pub use render::render_topdown;
pub use stats::{dataset_stats, DatasetStats};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("generation error: {0}")]
    Generation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("rejected input: {0}")]
    RejectedInput(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

/// Bounds and knobs for environment generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldgenParams {
    /// raster side lengths in pixels, 64–256, padded to multiples of 8
    pub width: usize,
    pub height: usize,
    pub floors_min: usize,
    pub floors_max: usize,
    pub rooms_min: usize,
    pub rooms_max: usize,
    /// smallest allowed room side in pixels; smaller rooms make precise
    /// localization easier once the right room is identified
    pub min_room_dim: usize,
    pub meters_per_pixel: f64,
    /// per-environment palette sizes drawn from the catalog
    pub palette_types: usize,
    pub palette_colors: usize,
    /// probability that a room copies the object configuration of an
    /// earlier same-category room, creating ambiguous signatures the
    /// Observer has to walk away from
    pub duplicate_bias: f64,
}

impl Default for WorldgenParams {
    fn default() -> Self {
        WorldgenParams {
            width: 128,
            height: 128,
            floors_min: 1,
            floors_max: 2,
            rooms_min: 5,
            rooms_max: 8,
            min_room_dim: 20,
            meters_per_pixel: 0.25,
            palette_types: 4,
            palette_colors: 3,
            duplicate_bias: 0.7,
        }
    }
}

impl WorldgenParams {
    pub fn validate(&self) -> Result<(), WorldError> {
        let in_range = |v: usize| (64..=256).contains(&v);
        if !in_range(self.width) || !in_range(self.height) {
            return Err(WorldError::Config(format!(
                "raster side must be 64–256 px, got {}x{}",
                self.width, self.height
            )));
        }
        if self.floors_min < 1 || self.floors_max > 3 || self.floors_min > self.floors_max {
            return Err(WorldError::Config("floors must lie in 1–3".into()));
        }
        if self.rooms_min < 1 || self.rooms_min > self.rooms_max {
            return Err(WorldError::Config("bad room count range".into()));
        }
        // a room must leave space for a lattice-aligned door (8 px pitch)
        // even after the wall is nudged off the lattice
        if self.min_room_dim < 12 {
            return Err(WorldError::Config(format!(
                "min_room_dim must be at least 12 px, got {}",
                self.min_room_dim
            )));
        }
        if self.meters_per_pixel <= 0.0 {
            return Err(WorldError::Config("meters_per_pixel must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Locator,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub category: u8,
    /// interior bounds in pixels, half-open
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Room {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        col >= self.x0 && col < self.x1 && row >= self.y0 && row < self.y1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Door {
    /// (row, col) pixels carved out of a wall
    pub cells: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectPlacement {
    pub object_type: u8,
    pub color: u8,
    /// (row, col) pixel at the glyph anchor
    pub cell: (usize, usize),
    pub room: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FloorPlan {
    pub floor_index: usize,
    pub width: usize,
    pub height: usize,
    pub rooms: Vec<Room>,
    pub doors: Vec<Door>,
    /// cosmetic door on the outer wall
    pub entrance: Door,
    pub objects: Vec<ObjectPlacement>,
    /// derived rasters, rebuilt deterministically from the fields above
    #[serde(skip)]
    pub raster: Vec<u8>,
    #[serde(skip)]
    pub free_mask: Vec<bool>,
    /// per-cell category id + 1, 0 = wall/none
    #[serde(skip)]
    pub room_labels: Vec<u8>,
    /// per-cell room index, -1 = wall/door
    #[serde(skip)]
    pub cell_room: Vec<i32>,
}

impl FloorPlan {
    pub fn idx(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn room_at(&self, row: usize, col: usize) -> Option<usize> {
        let r = self.cell_room[self.idx(row, col)];
        (r >= 0).then_some(r as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavNode {
    pub node_id: u32,
    pub floor_index: usize,
    /// (x, y) meters; x runs along columns, y along rows
    pub position: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Environment {
    pub env_id: String,
    pub meters_per_pixel: f64,
    pub floors: Vec<FloorPlan>,
    pub nav_nodes: Vec<NavNode>,
    pub nav_edges: Vec<(u32, u32)>,
}

impl Environment {
    pub fn node(&self, id: u32) -> &NavNode {
        &self.nav_nodes[id as usize]
    }

    pub fn node_pixel(&self, node: &NavNode) -> (usize, usize) {
        let row = (node.position.1 / self.meters_per_pixel).round() as usize;
        let col = (node.position.0 / self.meters_per_pixel).round() as usize;
        (row, col)
    }

    /// Room index containing a nav node.
    pub fn node_room(&self, node: &NavNode) -> Option<usize> {
        let (row, col) = self.node_pixel(node);
        self.floors[node.floor_index].room_at(row, col)
    }

    pub fn floor_nodes(&self, floor: usize) -> impl Iterator<Item = &NavNode> {
        self.nav_nodes.iter().filter(move |n| n.floor_index == floor)
    }

    pub fn neighbors(&self, id: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .nav_edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == id {
                    Some(b)
                } else if b == id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Recompute derived rasters after deserialization.
    pub fn rebuild(&mut self) {
        for floor in &mut self.floors {
            gen::rebuild_floor(floor);
        }
    }
}

/// Distance unit helpers: positions are pixel-anchored, so pixel →
/// meter conversion is exact multiplication.
pub fn pixel_to_meters(row: usize, col: usize, mpp: f64) -> (f64, f64) {
    (col as f64 * mpp, row as f64 * mpp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    ValSeen,
    ValUnseen,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::ValSeen => "val_seen",
            Split::ValUnseen => "val_unseen",
            Split::Test => "test",
        }
    }

    pub fn all() -> [Split; 4] {
        [Split::Train, Split::ValSeen, Split::ValUnseen, Split::Test]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Episode {
    pub schema_version: u32,
    pub episode_id: String,
    pub env_id: String,
    pub start_node: u32,
    /// nav node ids p_0..p_T
    pub trajectory: Vec<u32>,
    /// (floor, x meters, y meters)
    pub final_position: (usize, f64, f64),
    pub dialog: Vec<Message>,
    pub split: Split,
}

impl Episode {
    pub fn final_floor(&self) -> usize {
        self.final_position.0
    }

    pub fn rounds(&self) -> usize {
        self.dialog.iter().filter(|m| m.role == Role::Locator).count()
    }

    pub fn nav_steps(&self) -> usize {
        self.trajectory.len().saturating_sub(1)
    }
}
