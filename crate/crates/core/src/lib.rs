//! Auditing how well clustering recovers labeled quality profiles in embedding data.
//!
//! The pieces compose: load a [`dataset::Dataset`], fit [`kmeans`] or [`hdbscan`],
//! score the result with [`agreement`], inspect profile geometry with [`geometry`]
//! and [`stats`], or run everything at once through [`audit::run_audit`].

pub mod agreement;
pub mod audit;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod hdbscan;
pub mod kmeans;
pub mod report;
pub mod simindex;
pub mod stats;
pub mod synth;

pub use dataset::{load_dataset, Dataset, Format, ProfileOrdering};
pub use error::{Error, Result};
