//! Command-line entry point: dataset generation, training, evaluation,
//! and the ablation sweep, all driven by one TOML experiment config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use led_lab::config::{ConfigError, ExperimentConfig};
use led_lab::dataset::{generate_dataset, load_dataset, save_dataset, DataError, Dataset};
use led_lab::eval::{
    evaluate_model, format_table, metrics_from, run_ablations, run_baseline, write_cdf_csv,
    write_metrics_csv, write_results_jsonl, AblationCheckpoints, BaselineKind, Row,
};
use led_lab::model::{load_checkpoint, Ablation, Model, PredictionGrid};
use led_lab::text::{dialog_tokens, DialogVariant, Vocabulary};
use led_lab::train::{train, TrainError};
use led_lab::viz::{svg_cdf, svg_heatmap};
use led_lab::worldgen::Split;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "led-lab", about = "Localization-from-dialog laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// experiment config TOML; defaults apply for missing sections
    #[arg(long)]
    config: Option<PathBuf>,
    /// overrides the seed from the config file
    #[arg(long)]
    seed: Option<u64>,
    /// output directory
    #[arg(long)]
    out: PathBuf,
    /// write into a non-empty output directory
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate environments and scripted episodes
    GenData {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train a model on a generated dataset
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// dataset directory written by gen-data
        #[arg(long)]
        data: PathBuf,
        /// disable map augmentation (for the matching ablation row)
        #[arg(long)]
        no_augment: bool,
        /// disable the residual skip connections
        #[arg(long)]
        no_residual: bool,
    },
    /// Evaluate a checkpoint and the baselines on one split
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// train | val_seen | val_unseen | test
        #[arg(long, default_value = "val_unseen")]
        split: String,
        /// baselines to include (repeatable): random | center | random_node | heuristic
        #[arg(long = "baseline")]
        baselines: Vec<String>,
        /// also write SVG plots (LE CDF and a few heatmaps)
        #[arg(long)]
        render: bool,
    },
    /// Input-ablation and dialog-variant sweep for a checkpoint
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "val_unseen")]
        split: String,
        /// checkpoint trained without augmentation (row skipped if absent)
        #[arg(long)]
        no_augment_checkpoint: Option<PathBuf>,
        /// checkpoint trained without residual connections
        #[arg(long)]
        no_residual_checkpoint: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Diverged(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Diverged(_) => EXIT_DIVERGED,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged(msg) => CliError::Diverged(msg),
            TrainError::Config(msg) => CliError::Config(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    // reserved thread cap; all current code paths are single-threaded,
    // but the variable is validated so misconfigurations fail loudly
    if let Ok(v) = std::env::var("LED_LAB_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {}
            _ => {
                eprintln!("error: LED_LAB_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out_dir(common: &CommonArgs) -> Result<(), CliError> {
    let out = &common.out;
    if out.exists() {
        let non_empty = std::fs::read_dir(out)
            .map_err(|e| CliError::Data(e.to_string()))?
            .next()
            .is_some();
        if non_empty && !common.force {
            return Err(CliError::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
    } else {
        std::fs::create_dir_all(out).map_err(|e| CliError::Data(e.to_string()))?;
    }
    Ok(())
}

/// Every run directory records the seed and config hash that made it.
fn write_run_stamp(dir: &Path, cfg: &ExperimentConfig, kind: &str) -> Result<(), CliError> {
    let stamp = serde_json::json!({
        "command": kind,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
    });
    std::fs::write(
        dir.join("run.json"),
        serde_json::to_vec_pretty(&stamp).expect("stamp serializes"),
    )
    .map_err(|e| CliError::Data(e.to_string()))
}

fn parse_split(name: &str) -> Result<Split, CliError> {
    Split::all()
        .into_iter()
        .find(|s| s.as_str() == name)
        .ok_or_else(|| CliError::Config(format!("unknown split `{name}`")))
}

fn load_data(dir: &Path) -> Result<Dataset, CliError> {
    load_dataset(dir).map_err(|e| CliError::Data(format!("loading {}: {e}", dir.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { common } => {
            let cfg = load_config(&common)?;
            prepare_out_dir(&common)?;
            let ds = generate_dataset(&cfg)?;
            save_dataset(&common.out, &ds)?;
            write_run_stamp(&common.out, &cfg, "gen-data")?;
            println!(
                "generated {} environments, {} episodes ({})",
                ds.envs.len(),
                ds.episodes.len(),
                ds.manifest
                    .episode_counts
                    .iter()
                    .map(|(k, v)| format!("{k}: {v}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            println!(
                "navigation fraction {:.3}, avg {:.1} messages/episode, avg {:.1} words/message",
                ds.stats.frac_with_navigation,
                ds.stats.avg_messages_per_episode,
                ds.stats.avg_words_per_message
            );
            Ok(())
        }
        Command::Train { common, data, no_augment, no_residual } => {
            let mut cfg = load_config(&common)?;
            if no_augment {
                cfg.train.augment = false;
            }
            if no_residual {
                cfg.model.residual = false;
            }
            prepare_out_dir(&common)?;
            let ds = load_data(&data)?;
            let train_eps = ds.episodes_in(Split::Train);
            if train_eps.is_empty() {
                return Err(CliError::Data("dataset has no train episodes".into()));
            }
            let tokens: Vec<String> =
                train_eps.iter().flat_map(|e| dialog_tokens(&e.dialog)).collect();
            let vocab = Vocabulary::build(tokens.iter().map(String::as_str));
            let mut model = Model::new(cfg.model.clone(), vocab, cfg.seed)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let report = train(
                &mut model,
                &ds.envs,
                &ds.episodes,
                &cfg.train,
                cfg.seed,
                Some(&common.out),
            )?;
            write_run_stamp(&common.out, &cfg, "train")?;
            println!(
                "trained {} epochs; kept epoch {} (val Acc@3m {:.3}); final train loss {:.4}",
                report.epochs_run, report.best_epoch, report.best_acc_3m, report.final_train_loss
            );
            println!("checkpoint: {}", common.out.join("checkpoint.ckpt").display());
            Ok(())
        }
        Command::Evaluate { common, data, checkpoint, split, baselines, render } => {
            let cfg = load_config(&common)?;
            prepare_out_dir(&common)?;
            let ds = load_data(&data)?;
            let split = parse_split(&split)?;
            let episodes = ds.episodes_in(split);
            if episodes.is_empty() {
                return Err(CliError::Data(format!("no episodes in split {}", split.as_str())));
            }
            let (model, _) =
                load_checkpoint(&checkpoint).map_err(|e| CliError::Data(e.to_string()))?;
            let results =
                evaluate_model(&model, &ds.envs, &episodes, DialogVariant::Full, Ablation::Full)
                    .map_err(|e| CliError::Data(e.to_string()))?;
            let mut rows =
                vec![Row { name: "model".to_string(), metrics: metrics_from(&results) }];
            for name in &baselines {
                let kind = BaselineKind::parse(name)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                let bl = run_baseline(
                    kind,
                    &ds.envs,
                    &episodes,
                    &ds.episodes_in(Split::Train),
                    model.config.downsample,
                    cfg.seed,
                )
                .map_err(|e| CliError::Data(e.to_string()))?;
                rows.push(Row { name: kind.name().to_string(), metrics: metrics_from(&bl) });
            }
            write_results_jsonl(&common.out.join("results.jsonl"), &results)
                .map_err(|e| CliError::Data(e.to_string()))?;
            write_metrics_csv(&common.out.join("metrics.csv"), &rows)
                .map_err(|e| CliError::Data(e.to_string()))?;
            write_cdf_csv(&common.out.join("cdf.csv"), &results)
                .map_err(|e| CliError::Data(e.to_string()))?;
            if render {
                render_plots(&common.out, &ds, &episodes, &model, &results)?;
            }
            write_run_stamp(&common.out, &cfg, "evaluate")?;
            print!("{}", format_table(&rows));
            Ok(())
        }
        Command::Ablate {
            common,
            data,
            checkpoint,
            split,
            no_augment_checkpoint,
            no_residual_checkpoint,
        } => {
            let cfg = load_config(&common)?;
            prepare_out_dir(&common)?;
            let ds = load_data(&data)?;
            let split = parse_split(&split)?;
            let episodes = ds.episodes_in(split);
            if episodes.is_empty() {
                return Err(CliError::Data(format!("no episodes in split {}", split.as_str())));
            }
            let (model, _) =
                load_checkpoint(&checkpoint).map_err(|e| CliError::Data(e.to_string()))?;
            let extra = AblationCheckpoints {
                no_augment: no_augment_checkpoint,
                no_residual: no_residual_checkpoint,
            };
            let rows = run_ablations(&model, &ds.envs, &episodes, &extra, cfg.seed)
                .map_err(|e| CliError::Data(e.to_string()))?;
            write_metrics_csv(&common.out.join("ablations.csv"), &rows)
                .map_err(|e| CliError::Data(e.to_string()))?;
            write_run_stamp(&common.out, &cfg, "ablate")?;
            print!("{}", format_table(&rows));
            Ok(())
        }
    }
}

/// LE CDF plus heatmaps for the first few episodes of the split.
fn render_plots(
    out: &Path,
    ds: &Dataset,
    episodes: &[led_lab::worldgen::Episode],
    model: &Model,
    results: &[led_lab::eval::EpisodeResult],
) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Data(e.to_string());
    let mut les: Vec<Option<f64>> = results.iter().map(|r| r.le_m).collect();
    les.sort_by(|a, b| {
        a.unwrap_or(f64::INFINITY).partial_cmp(&b.unwrap_or(f64::INFINITY)).unwrap()
    });
    let n = les.len() as f64;
    let points: Vec<(f64, f64)> = les
        .iter()
        .enumerate()
        .filter_map(|(i, le)| le.map(|v| (v, (i + 1) as f64 / n)))
        .collect();
    std::fs::write(out.join("cdf.svg"), svg_cdf(&points, "localization error CDF"))
        .map_err(io_err)?;

    for ep in episodes.iter().take(4) {
        let env = &ds.envs[&ep.env_id];
        let floor = &env.floors[ep.final_floor()];
        let grid: PredictionGrid = predict_for(model, env, ep)?;
        let svg = svg_heatmap(
            &grid,
            &floor.raster,
            floor.height,
            floor.width,
            env.meters_per_pixel,
            (ep.final_position.1, ep.final_position.2),
        );
        std::fs::write(out.join(format!("heatmap-{}.svg", ep.episode_id)), svg)
            .map_err(io_err)?;
    }
    Ok(())
}

fn predict_for(
    model: &Model,
    env: &led_lab::worldgen::Environment,
    ep: &led_lab::worldgen::Episode,
) -> Result<PredictionGrid, CliError> {
    let floor = &env.floors[ep.final_floor()];
    let tokens = led_lab::text::encode_dialog(&ep.dialog, &model.vocab, DialogVariant::Full);
    model
        .predict(
            &floor.raster,
            floor.height,
            floor.width,
            &tokens.ids,
            env.meters_per_pixel,
            Ablation::Full,
        )
        .map_err(|e| CliError::Data(e.to_string()))
}
