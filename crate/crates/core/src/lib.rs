//! Differentially private synthetic-data ensembles.
//!
//! The crate covers the whole train-on-synthetic / test-on-real pipeline:
//!
//! * [`accounting`]: `(ε, δ)` composition, Poisson-subsampling amplification
//!   and a ledger that certifies what each pipeline spent.
//! * [`data`]: discrete tabular datasets, CSV ingestion and private
//!   discretization, subsampling and marginal queries.
//! * [`mechanisms`]: private synthesizers (noisy marginals and MWEM).
//! * [`models`]: classifiers that output a confidence for the positive class.
//! * [`ensemble`]: the four strategies for spending one budget on one or
//!   more synthetic datasets and aggregating the resulting models.
//! * [`eval`]: accuracy, expected calibration error and the benchmark
//!   runner.

pub mod accounting;
pub mod data;
pub mod ensemble;
pub mod eval;
pub mod mechanisms;
pub mod models;
pub mod random;
