//! Desk-scale laboratory for localization from embodied dialog.
//!
//! Synthetic multi-floor environments with template Locator/Observer
//! dialogs, a language-conditioned encoder-decoder predictor over
//! top-down maps, and an evaluation harness with baselines and
//! ablations.

pub mod autodiff;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod model;
pub mod text;
pub mod train;
pub mod util;
pub mod viz;
pub mod worldgen;
