//! Corpus summary statistics.

use super::Episode;
use crate::text::tokenize;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DatasetStats {
    pub episodes: usize,
    pub avg_messages_per_episode: f64,
    pub avg_words_per_message: f64,
    /// histogram of navigation step counts, index = steps
    pub nav_step_histogram: Vec<usize>,
    /// fraction of episodes where the Observer moved at least once
    pub frac_with_navigation: f64,
}

pub fn dataset_stats(episodes: &[Episode]) -> DatasetStats {
    let n = episodes.len();
    let mut messages = 0usize;
    let mut words = 0usize;
    let mut moved = 0usize;
    let max_steps = episodes.iter().map(Episode::nav_steps).max().unwrap_or(0);
    let mut hist = vec![0usize; max_steps + 1];
    for ep in episodes {
        messages += ep.dialog.len();
        words += ep.dialog.iter().map(|m| tokenize(&m.text).len()).sum::<usize>();
        hist[ep.nav_steps()] += 1;
        if ep.nav_steps() > 0 {
            moved += 1;
        }
    }
    DatasetStats {
        episodes: n,
        avg_messages_per_episode: if n == 0 { 0.0 } else { messages as f64 / n as f64 },
        avg_words_per_message: if messages == 0 { 0.0 } else { words as f64 / messages as f64 },
        nav_step_histogram: hist,
        frac_with_navigation: if n == 0 { 0.0 } else { moved as f64 / n as f64 },
    }
}
