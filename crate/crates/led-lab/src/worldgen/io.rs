//! On-disk dataset layout: environment JSON, per-floor PNG rasters
//! with JSON sidecars, episode JSONL, and a manifest with hashes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Environment, Episode, WorldError};
use crate::util::sha256_hex;

/// Top-level record written by dataset generation; hashing the
/// serialized environments makes reproducibility checkable at a glance.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub env_count: usize,
    pub episode_counts: BTreeMap<String, usize>,
    pub env_hashes: BTreeMap<String, String>,
}

/// Write `env.json`, `floor<k>.png`, and `floor<k>.json` into `dir`.
/// Returns the hash of the canonical environment JSON.
pub fn save_environment(dir: &Path, env: &Environment) -> Result<String, WorldError> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_vec_pretty(env)?;
    fs::write(dir.join("env.json"), &json)?;
    for floor in &env.floors {
        let img = image::RgbImage::from_raw(
            floor.width as u32,
            floor.height as u32,
            floor.raster.clone(),
        )
        .expect("raster length matches dimensions");
        img.save(dir.join(format!("floor{}.png", floor.floor_index)))?;
        let sidecar = serde_json::json!({
            "env_id": env.env_id,
            "floor_index": floor.floor_index,
            "meters_per_pixel": env.meters_per_pixel,
            "height": floor.height,
            "width": floor.width,
        });
        fs::write(
            dir.join(format!("floor{}.json", floor.floor_index)),
            serde_json::to_vec_pretty(&sidecar)?,
        )?;
    }
    Ok(sha256_hex(&json))
}

/// Load an environment directory written by [`save_environment`],
/// rebuilding the derived rasters.
pub fn load_environment(dir: &Path) -> Result<Environment, WorldError> {
    let json = fs::read(dir.join("env.json"))?;
    let mut env: Environment = serde_json::from_slice(&json)?;
    env.rebuild();
    Ok(env)
}

/// Append-free JSONL writer: one episode per line, input order.
pub fn save_episodes(path: &Path, episodes: &[Episode]) -> Result<(), WorldError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = fs::File::create(path)?;
    for ep in episodes {
        serde_json::to_writer(&mut out, ep)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_episodes(path: &Path) -> Result<Vec<Episode>, WorldError> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn save_manifest(path: &Path, manifest: &Manifest) -> Result<(), WorldError> {
    fs::write(path, serde_json::to_vec_pretty(manifest)?)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<Manifest, WorldError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
