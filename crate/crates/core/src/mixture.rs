//! Classification-EM estimation of sender/receiver finite-mixture ERGMs.
//!
//! Each node carries a hard latent class. Given labels, the class-expanded
//! pseudolikelihood is an ordinary logistic regression (M-step). Given
//! parameters, each classifying node independently takes the class with the
//! highest posterior score over its own dyads (E-step). The classification
//! log pseudolikelihood `Σ_i log α_{z_i} + log PL(θ | z)` never decreases.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariates::CovariateTable;
use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::estimation::{
    fit_mcmle, fit_mple, fit_mple_from, softplus, McMleControls, McMleOutcome, MpleControls, PseudoFit,
};
use crate::network::DirectedNetwork;
use crate::seed::{derive_seed, rng_from_seed, tag};
use crate::terms::{CompiledModel, Mode, ModelSpec, ParamLayout};

/// Hard class labels and the class proportions they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignment {
    labels: Vec<usize>,
    alpha: Vec<f64>,
}

impl LabelAssignment {
    /// Every class in `0..n_classes` must be used.
    pub fn new(labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if n_classes == 0 || labels.is_empty() {
            return Err(Error::Invalid("labels need at least one node and one class".into()));
        }
        let mut sizes = vec![0usize; n_classes];
        for (i, &q) in labels.iter().enumerate() {
            if q >= n_classes {
                return Err(Error::Invalid(format!("node {i} has class {q}, only {n_classes} classes")));
            }
            sizes[q] += 1;
        }
        if let Some(q) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Invalid(format!("class {q} is empty")));
        }
        let n = labels.len() as f64;
        let alpha = sizes.iter().map(|&s| s as f64 / n).collect();
        Ok(LabelAssignment { labels, alpha })
    }

    /// Everyone in class 0.
    pub fn trivial(n_nodes: usize) -> Self {
        LabelAssignment {
            labels: vec![0; n_nodes],
            alpha: vec![1.0],
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn n_classes(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_classes()];
        for &q in &self.labels {
            sizes[q] += 1;
        }
        sizes
    }

    /// Relabels so that new class `c` is old class `order[c]`.
    pub fn relabeled(&self, order: &[usize]) -> Self {
        let mut inv = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        LabelAssignment {
            labels: self.labels.iter().map(|&q| inv[q]).collect(),
            alpha: order.iter().map(|&old| self.alpha[old]).collect(),
        }
    }
}

/// Class-expands a network design: homogeneous columns are copied, each
/// heterogeneous column is replicated once per class and kept only in the
/// block of the row's classifying node.
pub fn expand_design(design: &DesignMatrix, spec: &ModelSpec, labels: &LabelAssignment) -> Result<DesignMatrix> {
    let n = design
        .n_nodes()
        .ok_or_else(|| Error::Invalid("design has no dyad structure".into()))?;
    if labels.n_nodes() != n {
        return Err(Error::Invalid("label count differs from node count".into()));
    }
    if labels.n_classes() != spec.n_classes {
        return Err(Error::Invalid("label classes differ from model classes".into()));
    }
    if design.n_cols() != spec.n_terms() {
        return Err(Error::Invalid("design columns differ from model terms".into()));
    }
    let layout = spec.layout();
    let classifier = classifiers(n, spec.mode);
    Ok(expand(design, &layout, &classifier, labels.labels()))
}

/// Classifying node of each design row.
fn classifiers(n: usize, mode: Mode) -> Vec<u32> {
    crate::network::dyads(n)
        .map(|d| mode.classifier(d.sender, d.receiver) as u32)
        .collect()
}

fn expand(design: &DesignMatrix, layout: &ParamLayout, classifier: &[u32], labels: &[usize]) -> DesignMatrix {
    let p = layout.n_params();
    let d = design.n_cols();
    let mut x = vec![0.0; design.n_rows() * p];
    for (r, (row, out)) in design.rows().zip(x.chunks_exact_mut(p)).enumerate() {
        let q = labels[classifier[r] as usize];
        for k in 0..d {
            out[layout.column(k, q)] = row[k];
        }
    }
    DesignMatrix::from_parts(design.n_nodes(), layout.names().to_vec(), x, design.response().to_vec())
}

/// Result of one E-step. Labels may leave a class empty.
#[derive(Debug, Clone, PartialEq)]
pub struct EStep {
    pub labels: Vec<usize>,
    /// `N × Q` soft membership probabilities.
    pub posterior: Vec<Vec<f64>>,
    /// Hard-label class frequencies.
    pub alpha: Vec<f64>,
}

impl EStep {
    pub fn has_empty_class(&self) -> bool {
        self.alpha.iter().any(|&a| a == 0.0)
    }
}

/// Posterior class membership of every classifying node given `theta` (in
/// `spec.layout()` order) and prior proportions `alpha`.
pub fn e_step(
    net: &DirectedNetwork,
    cov: &CovariateTable,
    spec: &ModelSpec,
    theta: &[f64],
    alpha: &[f64],
) -> Result<EStep> {
    let layout = spec.layout();
    if theta.len() != layout.n_params() || alpha.len() != spec.n_classes {
        return Err(Error::Invalid("theta or alpha does not match the model layout".into()));
    }
    if alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::Invalid("class proportions must be positive".into()));
    }
    let design = CompiledModel::new(spec, cov)?.design(net, spec.term_labels())?;
    let classifier = classifiers(net.n_nodes(), spec.mode);
    Ok(e_step_design(&design, &layout, &classifier, theta, alpha))
}

fn e_step_design(
    design: &DesignMatrix,
    layout: &ParamLayout,
    classifier: &[u32],
    theta: &[f64],
    alpha: &[f64],
) -> EStep {
    let n = design.n_nodes().expect("network design");
    let q_count = layout.n_classes();
    let class_theta: Vec<Vec<f64>> = (0..q_count).map(|q| layout.class_theta(theta, q)).collect();
    let mut scores: Vec<Vec<f64>> = vec![alpha.iter().map(|a| a.ln()).collect(); n];
    for (r, (row, &y)) in design.rows().zip(design.response()).enumerate() {
        let s = &mut scores[classifier[r] as usize];
        for (q, th) in class_theta.iter().enumerate() {
            let eta: f64 = row.iter().zip(th).map(|(a, b)| a * b).sum();
            s[q] += y * eta - softplus(eta);
        }
    }
    let mut labels = Vec::with_capacity(n);
    let mut counts = vec![0usize; q_count];
    let posterior = scores
        .into_iter()
        .map(|s| {
            let mut best = 0;
            for q in 1..q_count {
                if s[q] > s[best] {
                    best = q;
                }
            }
            labels.push(best);
            counts[best] += 1;
            let m = s[best];
            let w: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|v| v / total).collect()
        })
        .collect();
    EStep {
        labels,
        posterior,
        alpha: counts.iter().map(|&c| c as f64 / n as f64).collect(),
    }
}

/// When to refine the selected solution by Monte-Carlo MLE with labels held
/// fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefitPolicy {
    /// Refit networks of at most [`RefitPolicy::AUTO_MAX_NODES`] nodes.
    #[default]
    Auto,
    Always,
    Never,
}

impl RefitPolicy {
    pub const AUTO_MAX_NODES: usize = 300;

    pub fn applies(self, n_nodes: usize) -> bool {
        match self {
            RefitPolicy::Auto => n_nodes <= Self::AUTO_MAX_NODES,
            RefitPolicy::Always => true,
            RefitPolicy::Never => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemControls {
    pub n_starts: usize,
    pub max_iter: usize,
    /// Converged once `|Δ log_cpl| < tol · (1 + |log_cpl|)`.
    pub tol: f64,
    pub seed: u64,
    /// Re-randomisations allowed after a class empties.
    pub max_retries: usize,
    pub refit: RefitPolicy,
    pub mple: MpleControls,
    pub mcmle: McMleControls,
}

impl Default for CemControls {
    fn default() -> Self {
        CemControls {
            n_starts: 20,
            max_iter: 200,
            tol: 1e-6,
            seed: 0,
            max_retries: 3,
            refit: RefitPolicy::Auto,
            mple: MpleControls::default(),
            mcmle: McMleControls::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartStatus {
    Converged,
    MaxIter,
    Failed,
}

/// What happened to one random start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub start: usize,
    pub seed: u64,
    pub status: StartStatus,
    pub log_cpl: Option<f64>,
    pub iterations: usize,
    pub retries: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    /// `log_cpl` after every M-step of the final attempt.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureFit {
    pub layout: ParamLayout,
    pub mode: Mode,
    pub assignment: LabelAssignment,
    /// M-step fit on the final labels; standard errors are conditional on them.
    pub fit: PseudoFit,
    /// `N × Q`; row `i` is the E-step posterior that produced `labels[i]`.
    pub posterior: Vec<Vec<f64>>,
    pub log_cpl: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub best_start: usize,
    pub best_start_seed: u64,
    /// Starts that converged.
    pub n_starts_used: usize,
    pub starts: Vec<StartSummary>,
    pub refit: Option<McMleOutcome>,
    pub n_dyads: usize,
}

impl MixtureFit {
    pub fn n_classes(&self) -> usize {
        self.layout.n_classes()
    }

    /// Free parameters: ERGM coefficients plus `Q − 1` proportions.
    pub fn n_free_params(&self) -> usize {
        self.layout.n_params() + self.n_classes() - 1
    }

    pub fn bic(&self) -> f64 {
        -2.0 * self.log_cpl + self.n_free_params() as f64 * (self.n_dyads as f64).ln()
    }

    /// Refined estimates when a Monte-Carlo refit succeeded, otherwise the
    /// pseudolikelihood estimates.
    pub fn estimates(&self) -> &PseudoFit {
        match &self.refit {
            Some(r) if !r.fell_back() => &r.fit,
            _ => &self.fit,
        }
    }

    /// Orders classes by descending size, ties by ascending class edges
    /// parameter, then by current index.
    pub fn canonicalize(&self) -> MixtureFit {
        let q = self.n_classes();
        let sizes = self.assignment.class_sizes();
        let edges: Vec<f64> = (0..q)
            .map(|c| self.layout.edges_column(c).map_or(0.0, |col| self.fit.theta[col]))
            .collect();
        let mut order: Vec<usize> = (0..q).collect();
        order.sort_by(|&a, &b| {
            sizes[b]
                .cmp(&sizes[a])
                .then(edges[a].total_cmp(&edges[b]))
                .then(a.cmp(&b))
        });
        self.relabeled(&order)
    }

    /// New class `c` is old class `order[c]`.
    pub fn relabeled(&self, order: &[usize]) -> MixtureFit {
        let src = self.layout.class_permutation(order);
        let permute = |v: &[f64]| src.iter().map(|&s| v[s]).collect::<Vec<_>>();
        let mut out = self.clone();
        out.assignment = self.assignment.relabeled(order);
        out.fit.theta = permute(&self.fit.theta);
        out.fit.std_errors = permute(&self.fit.std_errors);
        out.posterior = self
            .posterior
            .iter()
            .map(|row| order.iter().map(|&old| row[old]).collect())
            .collect();
        if let Some(r) = out.refit.as_mut() {
            r.permute(&src);
        }
        out
    }
}

/// `Σ_i log α_{z_i} + log PL(θ | z)` for arbitrary parameters and labels.
pub fn classification_loglik(
    net: &DirectedNetwork,
    cov: &CovariateTable,
    spec: &ModelSpec,
    theta: &[f64],
    labels: &LabelAssignment,
) -> Result<f64> {
    let base = CompiledModel::new(spec, cov)?.design(net, spec.term_labels())?;
    let expanded = expand_design(&base, spec, labels)?;
    if theta.len() != expanded.n_cols() {
        return Err(Error::Invalid("theta does not match the model layout".into()));
    }
    Ok(label_prior(labels.labels(), labels.alpha()) + crate::estimation::logistic_loglik(&expanded, None, theta))
}

fn label_prior(labels: &[usize], alpha: &[f64]) -> f64 {
    labels.iter().map(|&q| alpha[q].ln()).sum()
}

struct Context<'a> {
    base: &'a DesignMatrix,
    layout: ParamLayout,
    classifier: Vec<u32>,
    n_nodes: usize,
    controls: &'a CemControls,
}

struct StartResult {
    summary: StartSummary,
    best: Option<(LabelAssignment, PseudoFit, Vec<Vec<f64>>)>,
}

impl Context<'_> {
    fn run_start(&self, start: usize, seed: u64) -> StartResult {
        let mut summary = StartSummary {
            start,
            seed,
            status: StartStatus::Failed,
            log_cpl: None,
            iterations: 0,
            retries: 0,
            diagnostic: None,
            trace: Vec::new(),
        };
        for attempt in 0..=self.controls.max_retries {
            summary.retries = attempt;
            summary.trace.clear();
            let attempt_seed = if attempt == 0 {
                seed
            } else {
                derive_seed(seed, &[tag::RETRY, attempt as u64])
            };
            match self.attempt(attempt_seed, &mut summary) {
                Attempt::Done(best) => {
                    return StartResult {
                        summary,
                        best: Some(best),
                    }
                }
                Attempt::EmptyClass => {
                    summary.diagnostic = Some(format!("a class emptied on attempt {}", attempt + 1));
                }
                Attempt::Failed(msg) => {
                    summary.diagnostic = Some(msg);
                    return StartResult { summary, best: None };
                }
            }
        }
        summary.status = StartStatus::Failed;
        StartResult { summary, best: None }
    }

    fn attempt(&self, seed: u64, summary: &mut StartSummary) -> Attempt {
        let q = self.layout.n_classes();
        let mut rng = rng_from_seed(seed);
        let init: Vec<usize> = (0..self.n_nodes).map(|_| rng.random_range(0..q)).collect();
        let Ok(mut labels) = LabelAssignment::new(init, q) else {
            return Attempt::EmptyClass;
        };
        let mut posterior: Vec<Vec<f64>> = labels
            .labels()
            .iter()
            .map(|&z| (0..q).map(|c| if c == z { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut theta = vec![0.0; self.layout.n_params()];
        let mut prev: Option<f64> = None;
        for iter in 1..=self.controls.max_iter {
            summary.iterations = iter;
            let expanded = expand(self.base, &self.layout, &self.classifier, labels.labels());
            let fit = match m_step(&expanded, &theta, &self.controls.mple) {
                Ok(f) if f.converged => f,
                Ok(f) => {
                    return Attempt::Failed(format!(
                        "M-step {iter} did not converge: {}",
                        f.diagnostic.unwrap_or_else(|| "iteration limit".into())
                    ))
                }
                Err(e) => return Attempt::Failed(format!("M-step {iter}: {e}")),
            };
            theta.clone_from(&fit.theta);
            let log_cpl = label_prior(labels.labels(), labels.alpha()) + fit.log_pl;
            summary.trace.push(log_cpl);
            summary.log_cpl = Some(log_cpl);
            let stalled = prev.is_some_and(|p| (log_cpl - p).abs() < self.controls.tol * (1.0 + log_cpl.abs()));
            if stalled {
                summary.status = StartStatus::Converged;
                return Attempt::Done((labels, fit, posterior));
            }
            if iter == self.controls.max_iter {
                summary.status = StartStatus::MaxIter;
                return Attempt::Done((labels, fit, posterior));
            }
            prev = Some(log_cpl);
            let e = e_step_design(self.base, &self.layout, &self.classifier, &theta, labels.alpha());
            if e.has_empty_class() {
                return Attempt::EmptyClass;
            }
            posterior = e.posterior;
            if e.labels == labels.labels() {
                summary.status = StartStatus::Converged;
                return Attempt::Done((labels, fit, posterior));
            }
            labels = LabelAssignment::new(e.labels, q).expect("non-empty classes");
        }
        unreachable!("max_iter >= 1 returns inside the loop")
    }
}

/// Class-expanded M-step. A column that is zero on every row, such as a
/// heterogeneous covariate that is 0 for every member of a class, does not
/// enter the pseudolikelihood; it is held at 0 with an undefined standard
/// error and named in the diagnostic.
fn m_step(expanded: &DesignMatrix, init: &[f64], controls: &MpleControls) -> Result<PseudoFit> {
    let d = expanded.n_cols();
    let mut live = vec![false; d];
    for row in expanded.rows() {
        for (l, v) in live.iter_mut().zip(row) {
            *l |= *v != 0.0;
        }
    }
    if live.iter().all(|&l| l) {
        return fit_mple_from(expanded, None, init, controls);
    }
    let keep: Vec<usize> = (0..d).filter(|&c| live[c]).collect();
    let x = expanded
        .rows()
        .flat_map(|r| keep.iter().map(move |&c| r[c]))
        .collect();
    let names = keep.iter().map(|&c| expanded.names()[c].clone()).collect();
    let reduced = DesignMatrix::from_parts(expanded.n_nodes(), names, x, expanded.response().to_vec());
    let start: Vec<f64> = keep.iter().map(|&c| init[c]).collect();
    let fit = fit_mple_from(&reduced, None, &start, controls)?;
    let mut theta = vec![0.0; d];
    let mut std_errors = vec![f64::NAN; d];
    for (k, &c) in keep.iter().enumerate() {
        theta[c] = fit.theta[k];
        std_errors[c] = fit.std_errors[k];
    }
    let dropped: Vec<&str> = (0..d)
        .filter(|&c| !live[c])
        .map(|c| expanded.names()[c].as_str())
        .collect();
    let diagnostic = fit
        .diagnostic
        .or_else(|| Some(format!("not identified, held at 0: {}", dropped.join(", "))));
    Ok(PseudoFit {
        names: expanded.names().to_vec(),
        theta,
        std_errors,
        diagnostic,
        ..fit
    })
}

enum Attempt {
    Done((LabelAssignment, PseudoFit, Vec<Vec<f64>>)),
    EmptyClass,
    Failed(String),
}

/// Multi-start classification EM. Starts run in parallel; the result is the
/// converged start with the largest final `log_cpl` (earliest start on ties),
/// canonicalised, then optionally refined by Monte-Carlo MLE. With one class
/// this is a single pseudolikelihood fit.
pub fn fit_cem(net: &DirectedNetwork, cov: &CovariateTable, spec: &ModelSpec, controls: &CemControls) -> Result<MixtureFit> {
    spec.validate_against(cov)?;
    if controls.max_iter == 0 {
        return Err(Error::Invalid("max_iter must be >= 1".into()));
    }
    let model = CompiledModel::new(spec, cov)?;
    let base = model.design(net, spec.term_labels())?;
    let layout = spec.layout();
    let n = net.n_nodes();
    let mut fit = if spec.n_classes == 1 {
        single_class(&base, layout, spec.mode, controls)?
    } else {
        if !spec.has_heterogeneous() {
            return Err(Error::Spec("a mixture model needs at least one heterogeneous term".into()));
        }
        if controls.n_starts == 0 {
            return Err(Error::Invalid("n_starts must be >= 1".into()));
        }
        if n < spec.n_classes {
            return Err(Error::Invalid(format!("{n} nodes cannot fill {} classes", spec.n_classes)));
        }
        let ctx = Context {
            base: &base,
            layout,
            classifier: classifiers(n, spec.mode),
            n_nodes: n,
            controls,
        };
        let results: Vec<StartResult> = (0..controls.n_starts)
            .into_par_iter()
            .map(|s| ctx.run_start(s, derive_seed(controls.seed, &[tag::START, s as u64])))
            .collect();
        select(ctx.layout, spec.mode, results, base.n_rows())?
    };
    // Without dyad-dependent terms the pseudolikelihood is the likelihood.
    let dependent = spec.terms.iter().any(|t| t.kind.is_dyad_dependent());
    if dependent && controls.refit.applies(n) && fit.fit.converged {
        let mc = McMleControls {
            seed: derive_seed(controls.seed, &[tag::MCMLE]),
            ..controls.mcmle.clone()
        };
        fit.refit = Some(fit_mcmle(net, cov, spec, &fit.assignment, &fit.fit, &mc)?);
    }
    Ok(fit)
}

fn single_class(base: &DesignMatrix, layout: ParamLayout, mode: Mode, controls: &CemControls) -> Result<MixtureFit> {
    let n = base.n_nodes().expect("network design");
    let fit = fit_mple(base, None, &controls.mple)?;
    let converged = fit.converged;
    let summary = StartSummary {
        start: 0,
        seed: controls.seed,
        status: if converged { StartStatus::Converged } else { StartStatus::Failed },
        log_cpl: Some(fit.log_pl),
        iterations: 1,
        retries: 0,
        diagnostic: fit.diagnostic.clone(),
        trace: vec![fit.log_pl],
    };
    Ok(MixtureFit {
        layout,
        mode,
        assignment: LabelAssignment::trivial(n),
        log_cpl: fit.log_pl,
        trace: vec![fit.log_pl],
        fit,
        posterior: vec![vec![1.0]; n],
        converged,
        iterations: 1,
        best_start: 0,
        best_start_seed: controls.seed,
        n_starts_used: usize::from(converged),
        starts: vec![summary],
        refit: None,
        n_dyads: base.n_rows(),
    })
}

fn select(layout: ParamLayout, mode: Mode, results: Vec<StartResult>, n_dyads: usize) -> Result<MixtureFit> {
    let n_converged = results
        .iter()
        .filter(|r| r.summary.status == StartStatus::Converged)
        .count();
    let rank = |r: &StartResult| match r.summary.status {
        StartStatus::Converged => 2,
        StartStatus::MaxIter => 1,
        StartStatus::Failed => 0,
    };
    let best = results
        .iter()
        .filter(|r| r.best.is_some())
        .max_by(|a, b| {
            rank(a)
                .cmp(&rank(b))
                .then(a.summary.log_cpl.unwrap().total_cmp(&b.summary.log_cpl.unwrap()))
                .then(b.summary.start.cmp(&a.summary.start))
        })
        .map(|r| r.summary.start);
    let Some(best) = best else {
        return Err(Error::AllStartsFailed(
            results
                .iter()
                .map(|r| {
                    format!(
                        "start {}: {}",
                        r.summary.start,
                        r.summary.diagnostic.as_deref().unwrap_or("failed")
                    )
                })
                .collect(),
        ));
    };
    let mut starts = Vec::with_capacity(results.len());
    let mut chosen = None;
    for r in results {
        if r.summary.start == best {
            chosen = Some((r.summary.clone(), r.best.unwrap()));
        }
        starts.push(r.summary);
    }
    let (summary, (assignment, fit, posterior)) = chosen.expect("best start present");
    let fit = MixtureFit {
        layout,
        mode,
        assignment,
        fit,
        posterior,
        log_cpl: summary.log_cpl.unwrap(),
        trace: summary.trace.clone(),
        converged: summary.status == StartStatus::Converged,
        iterations: summary.iterations,
        best_start: summary.start,
        best_start_seed: summary.seed,
        n_starts_used: n_converged,
        starts,
        refit: None,
        n_dyads,
    };
    Ok(fit.canonicalize())
}
