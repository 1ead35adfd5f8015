//! Neural-predictor architecture search: architecture graphs, a small
//! reverse-mode autodiff engine, a bidirectional GCN accuracy predictor,
//! benchmark oracles, search strategies and run statistics.

pub mod arch;
pub mod error;
pub mod gcn;
pub mod metrics;
pub mod oracle;
pub mod runner;
pub mod search;
pub mod seed;
pub mod tensor;

pub use arch::{ArchGraph, ArchKey, OpVocabulary, SpaceSpec};
pub use error::{Error, Result};
