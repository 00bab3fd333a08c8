//! Ablation harness: evaluates one trained model under input ablations
//! and dialog-history variants, plus optional alternative checkpoints.

use std::collections::BTreeMap;
use std::path::Path;

use crate::eval::{evaluate_model, metrics_from, EvalError, Row};
use crate::model::{load_checkpoint, Ablation, Model};
use crate::text::DialogVariant;
use crate::worldgen::{Environment, Episode};

/// Optional checkpoints trained under modified regimes. Rows for paths
/// that are `None` or missing are skipped; the run still succeeds.
#[derive(Debug, Default, Clone)]
pub struct AblationCheckpoints {
    pub no_augment: Option<std::path::PathBuf>,
    pub no_residual: Option<std::path::PathBuf>,
}

/// All ablation rows for one model on one episode set, in a fixed order.
pub fn run_ablations(
    model: &Model,
    envs: &BTreeMap<String, Environment>,
    episodes: &[Episode],
    extra: &AblationCheckpoints,
    seed: u64,
) -> Result<Vec<Row>, EvalError> {
    let mut rows = Vec::new();
    let mut push = |name: &str, results: Vec<crate::eval::EpisodeResult>| {
        rows.push(Row { name: name.to_string(), metrics: metrics_from(&results) });
    };

    for (name, ablation) in [
        ("full", Ablation::Full),
        ("no_dialog", Ablation::NoDialog),
        ("no_vision", Ablation::NoVision),
    ] {
        push(name, evaluate_model(model, envs, episodes, DialogVariant::Full, ablation)?);
    }
    for (name, variant) in [
        ("first_half", DialogVariant::FirstHalf),
        ("second_half", DialogVariant::SecondHalf),
        ("observer_only", DialogVariant::ObserverOnly),
        ("locator_only", DialogVariant::LocatorOnly),
        ("shuffled", DialogVariant::Shuffled(seed)),
    ] {
        push(name, evaluate_model(model, envs, episodes, variant, Ablation::Full)?);
    }

    for (name, path) in [
        ("no_augment", &extra.no_augment),
        ("no_residual", &extra.no_residual),
    ] {
        let Some(path) = path else { continue };
        match load_alternative(path) {
            Ok(alt) => push(
                name,
                evaluate_model(&alt, envs, episodes, DialogVariant::Full, Ablation::Full)?,
            ),
            Err(e) => eprintln!("skipping ablation row {name}: {e}"),
        }
    }
    Ok(rows)
}

fn load_alternative(path: &Path) -> Result<Model, EvalError> {
    if !path.exists() {
        return Err(EvalError::Config(format!("checkpoint {} not found", path.display())));
    }
    let (model, _) = load_checkpoint(path)?;
    Ok(model)
}
