//! Multiple imputation for weighted-score KPI panels, with uncertainty
//! intervals and a self-validation workflow (augment, ampute, re-impute).

pub mod baseline;
pub mod dataset;
pub mod error;
pub mod io;
pub mod mice;
pub mod missingness;
pub mod rng;
pub mod scoring;
pub mod stats;
pub mod trees;

pub use dataset::{
    remove_observed, split_indices, split_rows, ColumnKind, ColumnMeta, Dataset, HeldOut, MissingnessPattern,
};
pub use error::{Error, ErrorClass, Result};
