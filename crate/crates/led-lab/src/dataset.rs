//! Dataset orchestration: environments, splits, scripted episodes, and
//! the on-disk layout used by every command.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use crate::config::ExperimentConfig;
use crate::util::rng_for;
use crate::worldgen::io::{
    load_environment, load_episodes, load_manifest, save_environment, save_episodes,
    save_manifest, Manifest,
};
use crate::worldgen::{
    build_splits, dataset_stats, generate_environment, sample_start_locations, script_episode,
    validate_episode, DatasetStats, Environment, Episode, Split, WorldError,
};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("world: {0}")]
    World(#[from] WorldError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("dataset error: {0}")]
    Invalid(String),
}

/// An in-memory dataset: environments keyed by id plus all episodes.
pub struct Dataset {
    pub envs: BTreeMap<String, Environment>,
    pub episodes: Vec<Episode>,
    pub manifest: Manifest,
    pub stats: DatasetStats,
}

impl Dataset {
    pub fn episodes_in(&self, split: Split) -> Vec<Episode> {
        self.episodes.iter().filter(|e| e.split == split).cloned().collect()
    }
}

fn generate_env_with_retries(
    master_seed: u64,
    index: usize,
    cfg: &ExperimentConfig,
) -> Result<Environment, DataError> {
    let mut last = None;
    for attempt in 0..32 {
        let env_seed: u64 = rng_for(master_seed, &format!("env-{index}-{attempt}")).gen();
        match generate_environment(env_seed, &cfg.worldgen) {
            Ok(env) => return Ok(env),
            Err(e) => last = Some(e),
        }
    }
    Err(DataError::Invalid(format!(
        "could not generate environment {index} in 32 attempts: {}",
        last.unwrap()
    )))
}

/// Generate the full dataset described by `cfg`, deterministically from
/// `cfg.seed`. Training environments contribute both train episodes and
/// a held-out val-seen share of their start locations; val-unseen and
/// test environments are never seen in training.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<Dataset, DataError> {
    let d = &cfg.dataset;
    let plan = build_splits(
        d.n_envs,
        d.n_val_unseen_envs,
        d.n_test_envs,
        &mut rng_for(cfg.seed, "splits"),
    )?;

    let mut envs = BTreeMap::new();
    let mut env_split = Vec::with_capacity(d.n_envs);
    let mut env_hashes = BTreeMap::new();
    for i in 0..d.n_envs {
        let env = generate_env_with_retries(cfg.seed, i, cfg)?;
        let split = if plan.val_unseen.contains(&i) {
            Split::ValUnseen
        } else if plan.test.contains(&i) {
            Split::Test
        } else {
            Split::Train
        };
        if envs.contains_key(&env.env_id) {
            return Err(DataError::Invalid(format!("duplicate env id {}", env.env_id)));
        }
        env_hashes
            .insert(env.env_id.clone(), crate::util::sha256_hex(&serde_json::to_vec(&env)?));
        env_split.push((env.env_id.clone(), split));
        envs.insert(env.env_id.clone(), env);
    }

    let mut episodes = Vec::new();
    for (env_id, split) in &env_split {
        let env = &envs[env_id];
        let mut rng = rng_for(cfg.seed, &format!("episodes-{env_id}"));
        let count = match split {
            Split::Train => d.episodes_per_train_env,
            _ => d.episodes_per_eval_env,
        };
        let starts =
            sample_start_locations(env, count, cfg.policy.min_start_separation_m, &mut rng);
        // the tail of each training environment's starts becomes the
        // val-seen split: same maps, new start locations
        let n_val_seen = if *split == Split::Train {
            ((starts.len() as f64) * d.val_seen_fraction).round() as usize
        } else {
            0
        };
        for (j, &start) in starts.iter().enumerate() {
            let ep_split = if *split == Split::Train && j >= starts.len() - n_val_seen {
                Split::ValSeen
            } else {
                *split
            };
            let ep = script_episode(
                env,
                &format!("{env_id}-{j:03}"),
                start,
                ep_split,
                &cfg.policy,
                &mut rng,
            )?;
            validate_episode(env, &ep)?;
            episodes.push(ep);
        }
    }

    // canonical order, independent of generation grouping
    episodes.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    let stats = dataset_stats(&episodes);
    let mut episode_counts = BTreeMap::new();
    for split in Split::all() {
        let n = episodes.iter().filter(|e| e.split == split).count();
        if n > 0 {
            episode_counts.insert(split.as_str().to_string(), n);
        }
    }
    let manifest = Manifest {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        env_count: envs.len(),
        episode_counts,
        env_hashes,
    };
    Ok(Dataset { envs, episodes, manifest, stats })
}

/// Layout: `<dir>/envs/<env_id>/…`, one JSONL per split, `manifest.json`
/// and `stats.json` at the top.
pub fn save_dataset(dir: &Path, ds: &Dataset) -> Result<(), DataError> {
    std::fs::create_dir_all(dir)?;
    for (env_id, env) in &ds.envs {
        save_environment(&dir.join("envs").join(env_id), env)?;
    }
    for split in Split::all() {
        let eps = ds.episodes_in(split);
        if !eps.is_empty() {
            save_episodes(&dir.join(format!("episodes-{}.jsonl", split.as_str())), &eps)?;
        }
    }
    save_manifest(&dir.join("manifest.json"), &ds.manifest)?;
    std::fs::write(dir.join("stats.json"), serde_json::to_vec_pretty(&ds.stats)?)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let manifest = load_manifest(&dir.join("manifest.json"))?;
    let mut envs = BTreeMap::new();
    for entry in std::fs::read_dir(dir.join("envs"))? {
        let entry = entry?;
        let env = load_environment(&entry.path())?;
        envs.insert(env.env_id.clone(), env);
    }
    if envs.len() != manifest.env_count {
        return Err(DataError::Invalid(format!(
            "manifest lists {} environments, found {}",
            manifest.env_count,
            envs.len()
        )));
    }
    let mut episodes = Vec::new();
    for split in Split::all() {
        let path = dir.join(format!("episodes-{}.jsonl", split.as_str()));
        if path.exists() {
            episodes.extend(load_episodes(&path)?);
        }
    }
    episodes.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    let stats = dataset_stats(&episodes);
    Ok(Dataset { envs, episodes, manifest, stats })
}
