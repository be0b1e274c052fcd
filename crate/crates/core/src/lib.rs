//! Subspace segmentation by least squares regression.
//!
//! Data drawn from a union of linear subspaces is represented by itself
//! through a coefficient matrix `Z` ([`solvers`]), `Z` is turned into a
//! symmetric affinity and clustered with Normalized Cuts ([`spectral`]), and
//! the outcome is scored against ground truth ([`metrics`]). [`datagen`]
//! builds synthetic test beds, [`ingest`] reads and writes CSV datasets, and
//! [`pipeline`] strings the stages together.

pub mod datagen;
pub mod error;
pub mod ingest;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod solvers;
pub mod spectral;

pub use datagen::{BasisSet, DataMatrix, SubspaceMode, SubspaceSpec};
pub use error::{Error, ErrorClass, Result};
pub use matrix::{Matrix, SymEigen};
pub use solvers::{Coefficients, GroupingBoundReport, Variant};
pub use spectral::{Affinity, Labeling};
pub use ingest::{DatasetFormat, DatasetManifest};
pub use metrics::{Criterion, EbdCheckResult, MatrixCriterion, SegmentationReport};
pub use pipeline::{segment, SegmentOptions, Segmentation};
