//! File formats, experiment configuration and run orchestration for
//! `gala-core`. The `gala` binary is a thin wrapper over [`experiment`].

// `!(x > 0.0)` deliberately rejects NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod csv_io;
pub mod error;
pub mod experiment;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
