//! JSON fit reports.

use serde::Serialize;

use crate::estimation::McMleOutcome;
use crate::evaluation::class_contrast_z;
use crate::mixture::{MixtureFit, StartSummary};
use crate::terms::{Mode, ModelSpec};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Serialize)]
pub struct ParameterRow {
    pub name: String,
    pub term: String,
    /// `None` for parameters shared by all classes.
    pub class: Option<usize>,
    pub estimate: f64,
    pub std_error: Option<f64>,
    /// Pseudolikelihood estimate when a Monte-Carlo refit replaced it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mple_estimate: Option<f64>,
}

/// Wald contrast of one class-specific term between two classes.
#[derive(Debug, Clone, Serialize)]
pub struct Contrast {
    pub term: String,
    pub class_a: usize,
    pub class_b: usize,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub n_nodes: usize,
    pub n_classes: usize,
    pub mode: Mode,
    pub converged: bool,
    pub log_pl: f64,
    pub log_cpl: f64,
    pub n_free_params: usize,
    pub bic: f64,
    pub parameters: Vec<ParameterRow>,
    pub alpha: Vec<f64>,
    pub class_sizes: Vec<usize>,
    pub labels: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior: Option<Vec<Vec<f64>>>,
    pub class_contrasts: Vec<Contrast>,
    /// True when no class-specific term differs between any two classes at
    /// the 5% level.
    pub classes_indistinguishable: bool,
    pub trace: Vec<f64>,
    pub best_start: usize,
    pub best_start_seed: u64,
    pub n_starts_used: usize,
    pub starts: Vec<StartSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refit: Option<McMleOutcome>,
}

impl FitReport {
    pub fn new(spec: &ModelSpec, fit: &MixtureFit, include_posterior: bool) -> Self {
        let layout = &fit.layout;
        let est = fit.estimates();
        let refined = !std::ptr::eq(est, &fit.fit);
        let mut parameters = Vec::with_capacity(layout.n_params());
        for (k, term) in spec.terms.iter().enumerate() {
            let classes: Vec<Option<usize>> = if layout.is_heterogeneous(k) {
                (0..layout.n_classes()).map(Some).collect()
            } else {
                vec![None]
            };
            for c in classes {
                let col = layout.column(k, c.unwrap_or(0));
                parameters.push(ParameterRow {
                    name: layout.names()[col].clone(),
                    term: term.label(),
                    class: c,
                    estimate: est.theta[col],
                    std_error: Some(est.std_errors[col]).filter(|s| s.is_finite()),
                    mple_estimate: refined.then(|| fit.fit.theta[col]),
                });
            }
        }
        let mut class_contrasts = Vec::new();
        for (k, term) in spec.terms.iter().enumerate() {
            if !layout.is_heterogeneous(k) {
                continue;
            }
            for a in 0..layout.n_classes() {
                for b in a + 1..layout.n_classes() {
                    let (ca, cb) = (layout.column(k, a), layout.column(k, b));
                    if let Ok((z, p)) =
                        class_contrast_z(est.theta[ca], est.std_errors[ca], est.theta[cb], est.std_errors[cb])
                    {
                        class_contrasts.push(Contrast {
                            term: term.label(),
                            class_a: a,
                            class_b: b,
                            z,
                            p_value: p,
                        });
                    }
                }
            }
        }
        let classes_indistinguishable = layout.n_classes() > 1 && class_contrasts.iter().all(|c| c.p_value >= 0.05);
        FitReport {
            schema_version: SCHEMA_VERSION,
            model: spec.clone(),
            n_nodes: fit.assignment.n_nodes(),
            n_classes: fit.n_classes(),
            mode: fit.mode,
            converged: fit.converged && est.converged,
            log_pl: fit.fit.log_pl,
            log_cpl: fit.log_cpl,
            n_free_params: fit.n_free_params(),
            bic: fit.bic(),
            parameters,
            alpha: fit.assignment.alpha().to_vec(),
            class_sizes: fit.assignment.class_sizes(),
            labels: fit.assignment.labels().to_vec(),
            posterior: include_posterior.then(|| fit.posterior.clone()),
            class_contrasts,
            classes_indistinguishable,
            trace: fit.trace.clone(),
            best_start: fit.best_start,
            best_start_seed: fit.best_start_seed,
            n_starts_used: fit.n_starts_used,
            starts: fit.starts.clone(),
            diagnostic: fit.fit.diagnostic.clone(),
            refit: fit.refit.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}
