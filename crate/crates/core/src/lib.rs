//! Realized measures, conditional quantile models and their evaluation.

pub mod arfima_mixture;
pub mod caviar;
pub mod data_ingest;
pub mod error;
pub mod evaluation;
pub mod implied_vol;
pub mod model_builder;
pub mod numerics;
pub mod qr_core;
pub mod realized_measures;

pub use error::{Error, Result};
