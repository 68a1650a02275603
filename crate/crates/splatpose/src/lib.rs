//! File formats, experiment runner and report generation on top of
//! `splatpose-core`.
//!
//! [`pipeline::run_pipeline`] executes the full loop for every seed, view
//! count and variant of a [`pipeline::RunConfig`]; [`report::report`] turns a
//! directory of runs into median ± IQR tables.

pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result, Stage};
