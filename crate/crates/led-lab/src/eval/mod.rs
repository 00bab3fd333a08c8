//! Metrics, model evaluation, baselines, and the ablation harness.

mod ablate;
mod baselines;
mod report;

pub use ablate::{run_ablations, AblationCheckpoints};
pub use baselines::{run_baseline, BaselineKind};
pub use report::{format_table, write_cdf_csv, write_metrics_csv, write_results_jsonl, Row};

use std::collections::BTreeMap;

use crate::model::{Ablation, Model, ModelError};
use crate::text::{encode_dialog, DialogVariant, TextError};
use crate::worldgen::{Environment, Episode, Split, WorldError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("world: {0}")]
    World(#[from] WorldError),
    #[error("text: {0}")]
    Text(#[from] TextError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One prediction against ground truth.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub env_id: String,
    pub split: Split,
    pub true_floor: usize,
    /// (x, y) meters
    pub true_pos: (f64, f64),
    pub pred_floor: usize,
    pub pred_pos: (f64, f64),
    /// Euclidean error in meters; None when the floors differ
    pub le_m: Option<f64>,
}

/// Euclidean localization error; predictions on the wrong floor are
/// rejected rather than measured.
pub fn localization_error(
    pred_floor: usize,
    pred_pos: (f64, f64),
    true_floor: usize,
    true_pos: (f64, f64),
) -> Option<f64> {
    (pred_floor == true_floor).then(|| {
        ((pred_pos.0 - true_pos.0).powi(2) + (pred_pos.1 - true_pos.1).powi(2)).sqrt()
    })
}

/// Aggregate metrics with standard errors.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    pub n: usize,
    /// mean LE over same-floor predictions
    pub le_mean_m: f64,
    pub le_se_m: f64,
    pub acc_3m: f64,
    pub acc_3m_se: f64,
    pub acc_5m: f64,
    pub acc_5m_se: f64,
}

/// Accuracy at `k` meters; errors exactly at the boundary count as
/// successes, cross-floor predictions as failures.
pub fn accuracy_at(les: &[Option<f64>], k: f64) -> f64 {
    if les.is_empty() {
        return 0.0;
    }
    let hits = les.iter().filter(|le| le.is_some_and(|d| d <= k)).count();
    hits as f64 / les.len() as f64
}

pub fn metrics_from(results: &[EpisodeResult]) -> Metrics {
    let les: Vec<Option<f64>> = results.iter().map(|r| r.le_m).collect();
    let n = results.len();
    let finite: Vec<f64> = les.iter().flatten().copied().collect();
    let le_mean = if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let le_se = if finite.len() < 2 {
        0.0
    } else {
        let var = finite.iter().map(|x| (x - le_mean).powi(2)).sum::<f64>()
            / (finite.len() - 1) as f64;
        var.sqrt() / (finite.len() as f64).sqrt()
    };
    let acc_se = |p: f64| {
        if n == 0 {
            0.0
        } else {
            (p * (1.0 - p) / n as f64).sqrt()
        }
    };
    let (a3, a5) = (accuracy_at(&les, 3.0), accuracy_at(&les, 5.0));
    Metrics {
        n,
        le_mean_m: le_mean,
        le_se_m: le_se,
        acc_3m: a3,
        acc_3m_se: acc_se(a3),
        acc_5m: a5,
        acc_5m_se: acc_se(a5),
    }
}

/// Run the model on every episode, predicting over the ground-truth
/// floor's raster.
pub fn evaluate_model(
    model: &Model,
    envs: &BTreeMap<String, Environment>,
    episodes: &[Episode],
    variant: DialogVariant,
    ablation: Ablation,
) -> Result<Vec<EpisodeResult>, EvalError> {
    let mut out = Vec::with_capacity(episodes.len());
    for ep in episodes {
        let env = envs
            .get(&ep.env_id)
            .ok_or_else(|| EvalError::Config(format!("unknown environment {}", ep.env_id)))?;
        let floor = ep.final_floor();
        let f = &env.floors[floor];
        let tokens = encode_dialog(&ep.dialog, &model.vocab, variant);
        let grid = model.predict(
            &f.raster,
            f.height,
            f.width,
            &tokens.ids,
            env.meters_per_pixel,
            ablation,
        )?;
        let pred_pos = grid.predicted_position();
        let true_pos = (ep.final_position.1, ep.final_position.2);
        out.push(EpisodeResult {
            episode_id: ep.episode_id.clone(),
            env_id: ep.env_id.clone(),
            split: ep.split,
            true_floor: floor,
            true_pos,
            pred_floor: floor,
            pred_pos,
            le_m: localization_error(floor, pred_pos, floor, true_pos),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(le: Option<f64>) -> EpisodeResult {
        EpisodeResult {
            episode_id: "e".into(),
            env_id: "env".into(),
            split: Split::Train,
            true_floor: 0,
            true_pos: (0.0, 0.0),
            pred_floor: if le.is_some() { 0 } else { 1 },
            pred_pos: (le.unwrap_or(0.0), 0.0),
            le_m: le,
        }
    }

    #[test]
    fn boundary_counts_as_success() {
        let les = [Some(3.0), Some(3.0 + 1e-12), Some(0.0), None];
        assert!((accuracy_at(&les, 3.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn euclidean_and_cross_floor() {
        assert_eq!(localization_error(0, (3.0, 4.0), 0, (0.0, 0.0)), Some(5.0));
        assert_eq!(localization_error(1, (0.0, 0.0), 0, (0.0, 0.0)), None);
    }

    #[test]
    fn metrics_hand_checked() {
        let rs: Vec<EpisodeResult> =
            [Some(1.0), Some(3.0), Some(7.0), None].into_iter().map(result).collect();
        let m = metrics_from(&rs);
        assert_eq!(m.n, 4);
        // LE stats over the three same-floor predictions
        assert!((m.le_mean_m - 11.0 / 3.0).abs() < 1e-12);
        let var: f64 = [1.0f64, 3.0, 7.0]
            .iter()
            .map(|x| (x - 11.0 / 3.0_f64).powi(2))
            .sum::<f64>()
            / 2.0;
        assert!((m.le_se_m - var.sqrt() / 3.0_f64.sqrt()).abs() < 1e-12);
        // 2 of 4 within 3 m (boundary included), 3 of 4 within 5 m? no: 7 > 5
        assert!((m.acc_3m - 0.5).abs() < 1e-12);
        assert!((m.acc_5m - 0.5).abs() < 1e-12);
        assert!((m.acc_3m_se - (0.25f64 / 4.0).sqrt()).abs() < 1e-12);
    }
}
