//! Experiment driver around [`healnet_core`]: declarative trial grids,
//! the all-members baseline, analytic oracle reports, SVG figures, and
//! the acceptance suite that checks the headline numbers end to end.
//!
//! Everything here is orchestration and IO; the simulation itself lives
//! in the core crate and stays deterministic per `(config, seed)`. Grid
//! cells may run in parallel, but aggregation is a stable post-pass, so
//! outputs are byte-identical across re-runs regardless of thread
//! scheduling.

pub mod accept;
pub mod config;
pub mod figures;
pub mod report;
pub mod runner;
