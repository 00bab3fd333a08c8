//! Deterministic top-down raster rendering.
//!
//! The raster is a pure function of the floor structure, so only the
//! structure is serialized and the image is rebuilt on load.

use super::catalog::{category_rgb, Catalog};
use super::{Environment, FloorPlan, WorldError};

pub const WALL_RGB: [u8; 3] = [40, 40, 40];
pub const DOOR_RGB: [u8; 3] = [198, 166, 112];

/// RGB raster (height * width * 3, row-major) for one floor.
pub(super) fn render_floor(floor: &FloorPlan) -> Vec<u8> {
    let cat = Catalog::global();
    let mut px = vec![0u8; floor.width * floor.height * 3];
    let mut put = |row: usize, col: usize, rgb: [u8; 3]| {
        let i = (row * floor.width + col) * 3;
        px[i..i + 3].copy_from_slice(&rgb);
    };
    for row in 0..floor.height {
        for col in 0..floor.width {
            put(row, col, WALL_RGB);
        }
    }
    for room in &floor.rooms {
        let tint = category_rgb(room.category);
        for row in room.y0..room.y1 {
            for col in room.x0..room.x1 {
                put(row, col, tint);
            }
        }
    }
    for door in floor.doors.iter().chain(std::iter::once(&floor.entrance)) {
        for &(row, col) in &door.cells {
            put(row, col, DOOR_RGB);
        }
    }
    // 6x6 object glyph: a one-pixel ring carries the type marker, the
    // inner 4x4 block (containing the object's cell) carries the exact
    // catalog color so that sampling the raster at the object cell
    // recovers its color.
    for obj in &floor.objects {
        let (r, c) = obj.cell;
        let ring = cat.type_rgb(obj.object_type);
        let fill = cat.color_rgb(obj.color);
        for dr in -2i64..=3 {
            for dc in -2i64..=3 {
                let row = (r as i64 + dr) as usize;
                let col = (c as i64 + dc) as usize;
                let inner = (-1..=2).contains(&dr) && (-1..=2).contains(&dc);
                put(row, col, if inner { fill } else { ring });
            }
        }
    }
    px
}

/// Public renderer for a stored floor (raster must be built).
pub fn render_topdown(env: &Environment, floor_index: usize) -> Result<&[u8], WorldError> {
    env.floors
        .get(floor_index)
        .map(|f| f.raster.as_slice())
        .ok_or_else(|| WorldError::RejectedInput(format!("no floor {floor_index}")))
}

#[cfg(test)]
mod tests {
    use super::super::{generate_environment, WorldgenParams};
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn empty_single_room_floor_has_two_non_wall_colors() {
        let params = WorldgenParams {
            rooms_min: 1,
            rooms_max: 1,
            floors_min: 1,
            floors_max: 1,
            ..Default::default()
        };
        let env = generate_environment(11, &params).unwrap();
        let f = &env.floors[0];
        assert!(f.objects.is_empty());
        let colors: BTreeSet<[u8; 3]> = f
            .raster
            .chunks(3)
            .map(|c| [c[0], c[1], c[2]])
            .filter(|c| *c != WALL_RGB)
            .collect();
        assert_eq!(colors.len(), 2, "expected floor tint and door color only");
        assert!(colors.contains(&DOOR_RGB));
    }

    #[test]
    fn raster_at_object_cell_is_catalog_color() {
        let env = generate_environment(9, &WorldgenParams::default()).unwrap();
        let cat = Catalog::global();
        let mut seen = 0;
        for f in &env.floors {
            for o in &f.objects {
                let i = (o.cell.0 * f.width + o.cell.1) * 3;
                assert_eq!(&f.raster[i..i + 3], &cat.color_rgb(o.color));
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn bad_floor_index_rejected() {
        let env = generate_environment(9, &WorldgenParams::default()).unwrap();
        assert!(render_topdown(&env, env.floors.len()).is_err());
    }
}
