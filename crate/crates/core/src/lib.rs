//! Request-type-aware cache analysis for virtualized block storage.
//!
//! The crate turns per-VM block traces into cache-sizing and write-policy
//! decisions for a shared SSD cache:
//!
//! * [`trace`] ingests MSR-style CSV traces, a compact binary format, and
//!   synthetic generators.
//! * [`classifier`] tags each access as CR/CW/RAR/RAW/WAR/WAW.
//! * [`rdist`] computes traditional (TRD) and useful (URD) reuse distances
//!   and the hit-ratio step function derived from them.
//! * [`cachesim`] is an exact LRU simulator with WB/WT/RO write policies.
//! * [`partitioner`] splits the SSD capacity across VMs.
//! * [`policy`] picks WB or RO per VM from the interval's write ratio.
//! * [`orchestrator`] runs the interval loop and produces reports.
//! * [`report`] writes the CSV outputs of a run.

pub mod cachesim;
pub mod classifier;
pub mod config;
pub mod error;
pub mod orchestrator;
pub mod partitioner;
pub mod policy;
pub mod rdist;
pub mod report;
pub mod trace;

pub use error::{Error, Result};
