//! Training-free adaptive retrieval gating.
//!
//! A short greedy draft is decoded without retrieval, summarized into a
//! scalar uncertainty score, and retrieval runs only when that score is
//! strictly above a calibrated threshold. The crate covers the scores
//! ([`gate`]), threshold calibration and the cost model ([`calibration`]),
//! exact dense retrieval ([`retrieval`]), the per-query pipeline with
//! trace replay ([`pipeline`]), EM/F1 scoring and threshold sweeps
//! ([`eval`]), synthetic dominance and calibration experiments
//! ([`simlab`]), and the command implementations behind the `targ` binary
//! ([`commands`]).

pub mod calibration;
pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod gate;
pub mod io;
pub mod numeric;
pub mod pipeline;
pub mod report;
pub mod retrieval;
pub mod simlab;

pub use error::{Error, Result};
