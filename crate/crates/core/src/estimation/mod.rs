//! Parameter estimation.
//!
//! - [`fit_mple`]: maximum pseudolikelihood as a binary logistic regression
//!   of dyad states on change statistics, solved by Newton/IRLS.
//! - [`exact_loglik_small`]: the exact log-likelihood by enumerating every
//!   graph on at most five nodes (a test oracle).
//! - [`fit_mcmle`]: one-stage Geyer–Thompson Monte-Carlo MLE started from an
//!   MPLE, with class labels held fixed.

mod exact;
mod mcmle;
mod mple;

pub use exact::{enumerate_stats, exact_loglik_small, MAX_EXACT_NODES};
pub use mcmle::{fit_mcmle, McMleControls, McMleOutcome, McMleState};
pub(crate) use mple::softplus;
pub use mple::{fit_mple, fit_mple_from, logistic, logistic_loglik, MpleControls, PseudoFit};
