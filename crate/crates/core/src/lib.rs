//! Ground-truth curation for realistic image super-resolution.
//!
//! The pipeline: degrade HR images and enhance them offline, cut aligned
//! patch groups from the original and four enhanced versions, collect
//! three human labels per enhanced patch, aggregate them by majority vote,
//! and export positive and negative training pairs plus a multi-GT test set.
//! [`losskernel`] holds the gated negative loss used in training and
//! [`evalmetrics`] the full-reference metrics used for evaluation.

pub mod aggregate;
pub mod annoservice;
pub mod degrade;
pub mod error;
pub mod evalmetrics;
pub mod imgcore;
pub mod losskernel;
pub mod manifest;
pub mod par;
pub mod patchsel;

pub use error::{Error, Result};
