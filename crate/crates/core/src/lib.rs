//! Non-neural pipeline for region-focused chest CT report generation.
//!
//! The crate covers everything around the language model: volume and
//! pseudo-mask ingestion ([`volume`]), slice encoding ([`encoder`]), R² visual
//! token pooling ([`r2pool`]), mask-driven segmentation tokens ([`maskex`]),
//! deterministic patient attributes ([`attrx`]), prompt assembly ([`prompt`]),
//! six-region report structuring ([`reports`]) and NLG metrics ([`eval`]).

pub mod attrx;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod grid;
pub mod io_util;
pub mod maskex;
pub mod phantom;
pub mod prompt;
pub mod r2pool;
pub mod region;
pub mod reports;
pub mod tokens;
pub mod volume;

pub use error::{Error, Result};
pub use grid::Grid;
pub use region::Region;
pub use tokens::TokenMatrix;
