//! Sensory-embedding sequential recommendation, algorithmic core.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (only `alloc` is required). File formats, reports and
//! the command line live in the companion `sensrec` crate.
//!
//! Module map:
//!
//! * [`schema`]: sensory record types, validation rules, text normalization.
//! * [`alignment`]: exact / facet / semantic / taxonomy agreement and audit
//!   aggregation.
//! * [`kernel`]: dense tensors, a reverse-mode tape, Adam, gradient checking.
//! * [`student`]: hashing tokenizer, student encoder, distillation objective,
//!   embedding-table export.
//! * [`rec`]: early fusion and the causal, masked and frequency-lite
//!   sequential backbones.
//! * [`eval`]: interaction logs, 5-core filtering, leave-one-out splits,
//!   full-ranking metrics, paired bootstrap, synthetic worlds, explanations.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod alignment;
pub mod error;
pub mod eval;
pub mod kernel;
pub(crate) mod math;
pub mod rec;
pub mod schema;
pub mod student;

pub use error::{Error, Result};
