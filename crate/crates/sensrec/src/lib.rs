//! File formats, reports, and the batch command line around
//! [`sensrec_core`].
//!
//! * [`annotations`]: annotation JSONL in and out.
//! * [`binfmt`]: the `SENS` embedding table and `SRCK` checkpoints.
//! * [`data`]: interaction logs, item texts, teacher targets, JSONL helpers.
//! * [`models`]: checkpoint sidecars and threaded evaluation.
//! * [`report`]: alignment, metric and audit tables.
//! * [`config`]: run configs and manifests.
//! * [`pipeline`]: stages shared by the subcommands.
//! * [`cli`]: argument parsing and exit codes.

pub mod annotations;
pub mod binfmt;
pub mod cli;
pub mod config;
pub mod data;
pub mod models;
pub mod pipeline;
pub mod report;
