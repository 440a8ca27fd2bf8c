//! Sender/receiver finite-mixture exponential random graph models.
//!
//! The crate is organised bottom-up:
//!
//! - [`network`] and [`covariates`]: immutable directed networks and nodal
//!   attribute tables with CSV IO.
//! - [`terms`]: model specifications, sufficient statistics and change
//!   statistics (a brute-force differencing oracle plus an incremental path).
//! - [`design`]: the dyad-level design matrix used by pseudolikelihood fits.
//! - [`estimation`]: logistic MPLE via Newton/IRLS, exact enumeration of the
//!   likelihood for tiny networks, and Monte-Carlo MLE refinement.
//! - [`mixture`]: classification EM over sender or receiver latent classes.
//! - [`sampler`]: Gibbs edge-toggle simulation of (mixture) ERGMs.
//! - [`evaluation`]: adjusted Rand index, bias tables and class contrasts.
//! - [`study`]: the simulation-study harness and its condition files.
//! - [`report`]: JSON fit reports.

pub mod covariates;
pub mod design;
pub mod error;
pub mod estimation;
pub mod evaluation;
mod linalg;
pub mod mixture;
pub mod network;
pub mod report;
pub mod sampler;
pub mod seed;
pub mod study;
pub mod terms;

pub use covariates::{ColumnType, CovariateSchema, CovariateTable};
pub use design::DesignMatrix;
pub use error::{Error, Result};
pub use network::{DirectedNetwork, Dyad, IdBase};
pub use terms::{Mode, ModelSpec, ParamLayout, TermKind, TermSpec};

/// Version tag written into every JSON document this crate emits.
pub const SCHEMA_VERSION: u32 = 1;
