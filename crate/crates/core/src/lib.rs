//! Document-level RST discourse parsing.
//!
//! The crate bundles treebank ingestion ([`treebank`]), the top-down split
//! transition system ([`oracle`]), a pointer-network parser with a bi-affine
//! label classifier ([`model`]), training ([`training`]), RST-Parseval style
//! scoring ([`evaluation`]), EDU-level translation ([`translation`]) and a
//! topic-model corpus diagnostic ([`analysis`]).

pub mod analysis;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod oracle;
pub mod synthetic;
pub mod training;
pub mod translation;
pub mod treebank;

pub use error::{Error, Result};
