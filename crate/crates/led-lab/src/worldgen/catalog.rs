//! Object and room-category catalog, checked in as a text asset.

use std::sync::OnceLock;

const CATALOG_TEXT: &str = include_str!("../../assets/catalog.txt");

#[derive(Debug, Clone)]
pub struct Catalog {
    pub types: Vec<String>,
    pub colors: Vec<(String, [u8; 3])>,
}

impl Catalog {
    pub fn global() -> &'static Catalog {
        static CAT: OnceLock<Catalog> = OnceLock::new();
        CAT.get_or_init(|| Catalog::parse(CATALOG_TEXT))
    }

    fn parse(text: &str) -> Catalog {
        let mut types = Vec::new();
        let mut colors = Vec::new();
        let mut section = "";
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') {
                section = if line == "[types]" { "types" } else { "colors" };
                continue;
            }
            match section {
                "types" => types.push(line.to_string()),
                "colors" => {
                    let mut parts = line.split_whitespace();
                    let name = parts.next().expect("color name").to_string();
                    let rgb: Vec<u8> =
                        parts.map(|p| p.parse().expect("color component")).collect();
                    colors.push((name, [rgb[0], rgb[1], rgb[2]]));
                }
                _ => {}
            }
        }
        assert!(types.len() >= 20, "catalog needs at least 20 object types");
        assert!(colors.len() >= 8, "catalog needs at least 8 colors");
        Catalog { types, colors }
    }

    pub fn type_name(&self, id: u8) -> &str {
        &self.types[id as usize]
    }

    pub fn color_name(&self, id: u8) -> &str {
        &self.colors[id as usize].0
    }

    pub fn color_rgb(&self, id: u8) -> [u8; 3] {
        self.colors[id as usize].1
    }

    /// Deterministic marker color per type, spread around the hue wheel;
    /// drawn as the glyph ring so types stay visually distinct.
    pub fn type_rgb(&self, id: u8) -> [u8; 3] {
        let n = self.types.len() as f64;
        let h = (id as f64 / n) * 360.0;
        hsv_to_rgb(h, 0.85, 0.65)
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [((r + m) * 255.0) as u8, ((g + m) * 255.0) as u8, ((b + m) * 255.0) as u8]
}

/// Room categories with floor tint used by the renderer.
pub const ROOM_CATEGORIES: &[(&str, [u8; 3])] = &[
    ("hallway", [208, 208, 208]),
    ("kitchen", [235, 225, 180]),
    ("bedroom", [215, 200, 230]),
    ("bathroom", [190, 225, 235]),
    ("lounge", [225, 205, 190]),
    ("office", [200, 215, 200]),
    ("dining room", [235, 210, 160]),
    ("library", [205, 190, 170]),
    ("gym", [190, 210, 225]),
    ("storage", [200, 200, 185]),
];

pub const HALLWAY: u8 = 0;

pub fn category_name(id: u8) -> &'static str {
    ROOM_CATEGORIES[id as usize].0
}

pub fn category_rgb(id: u8) -> [u8; 3] {
    ROOM_CATEGORIES[id as usize].1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_parses_with_minimum_sizes() {
        let c = Catalog::global();
        assert!(c.types.len() >= 20);
        assert!(c.colors.len() >= 8);
        assert_eq!(c.color_name(0), "red");
        assert_eq!(c.color_rgb(0), [200, 40, 40]);
    }

    #[test]
    fn type_markers_are_distinct() {
        let c = Catalog::global();
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..c.types.len() {
            assert!(seen.insert(c.type_rgb(i as u8)), "duplicate marker for type {i}");
        }
    }
}
