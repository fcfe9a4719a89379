//! Track forecasting for Atlantic and Pacific tropical cyclones from HURDAT2
//! best-track data.
//!
//! The pipeline parses best-track files, turns each 6-hourly fix into a
//! feature vector and a natural-language prompt, embeds the prompt, fuses it
//! with the numeric features through a learned gate, encodes the history with
//! a small transformer and rolls out future positions autoregressively.
//! Everything runs on a tape-based autodiff engine in `f64`.

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod context;
pub mod embed;
pub mod eval;
pub mod features;
pub mod geojson;
pub mod hurdat2;
pub mod model;
pub mod prompt;
pub mod synth;
pub mod train;
