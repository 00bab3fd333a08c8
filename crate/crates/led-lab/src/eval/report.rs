//! Result serialization: CSV, aligned text tables, JSONL, and LE CDFs.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::{EpisodeResult, EvalError, Metrics};

/// One labelled metrics row (a model variant or baseline).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Row {
    pub name: String,
    pub metrics: Metrics,
}

/// CSV with full-precision floats (the default formatter round-trips)
/// so downstream recomputation can match exactly.
pub fn write_metrics_csv(path: &Path, rows: &[Row]) -> Result<(), EvalError> {
    let mut out = String::from("name,n,le_mean_m,le_se_m,acc_3m,acc_3m_se,acc_5m,acc_5m_se\n");
    for r in rows {
        let m = &r.metrics;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.name, m.n, m.le_mean_m, m.le_se_m, m.acc_3m, m.acc_3m_se, m.acc_5m, m.acc_5m_se
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Human-readable aligned table.
pub fn format_table(rows: &[Row]) -> String {
    let name_w = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut out = format!(
        "{:<name_w$}  {:>5}  {:>12}  {:>12}  {:>12}\n",
        "name", "n", "LE (m)", "Acc@3m", "Acc@5m"
    );
    for r in rows {
        let m = &r.metrics;
        writeln!(
            out,
            "{:<name_w$}  {:>5}  {:>5.2} ±{:>4.2}  {:>5.1}% ±{:>3.1}  {:>5.1}% ±{:>3.1}",
            r.name,
            m.n,
            m.le_mean_m,
            m.le_se_m,
            100.0 * m.acc_3m,
            100.0 * m.acc_3m_se,
            100.0 * m.acc_5m,
            100.0 * m.acc_5m_se,
        )
        .unwrap();
    }
    out
}

/// One JSON object per prediction.
pub fn write_results_jsonl(path: &Path, results: &[EpisodeResult]) -> Result<(), EvalError> {
    let mut f = std::fs::File::create(path)?;
    for r in results {
        serde_json::to_writer(&mut f, r).map_err(|e| EvalError::Config(e.to_string()))?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

/// Empirical CDF of localization error: `le_m,fraction` pairs over all
/// episodes. Cross-floor predictions never enter, so the curve tops
/// out below 1 when they occur.
pub fn write_cdf_csv(path: &Path, results: &[EpisodeResult]) -> Result<(), EvalError> {
    let mut les: Vec<f64> = results.iter().filter_map(|r| r.le_m).collect();
    les.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = results.len().max(1);
    let mut out = String::from("le_m,fraction\n");
    for (i, le) in les.iter().enumerate() {
        writeln!(out, "{},{}", le, (i + 1) as f64 / n as f64).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}
