//! Disentangling personalized treatment effects from time-of-day effects in
//! longitudinal observational data, and auditing train/test leakage
//! ("digital fingerprints") in longitudinal case/control classification.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: activity records, CSV ingestion, triplet construction, eligibility.
//! - [`preprocess`]: lowess de-trending and the rank-quantile normal transform.
//! - [`regress`]: OLS, Newey-West HAC and regression-with-ARIMA-errors backends,
//!   plus residual diagnostics.
//! - [`disentangle`]: the five conditional-independence tests and the mapping of
//!   their outcomes to Markov equivalence classes.
//! - [`uitest`]: Benjamini-Hochberg adjustment and the union-intersection tests.
//! - [`audit`]: split strategies, label shuffles, random forests and AUC metrics.
//! - [`simgen`]: synthetic triplet series and fingerprint cohorts.
//! - [`pipeline`]: the end-to-end per-participant analysis used by the CLI.

pub mod audit;
pub mod data;
pub mod disentangle;
pub mod format;
pub mod pipeline;
pub mod preprocess;
pub mod regress;
pub mod seed;
pub mod simgen;
pub mod stats;
pub mod uitest;
