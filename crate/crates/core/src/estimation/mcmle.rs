use serde::{Deserialize, Serialize};

use crate::covariates::CovariateTable;
use crate::error::{Error, Result};
use crate::estimation::{logistic_loglik, PseudoFit};
use crate::linalg::Cholesky;
use crate::mixture::{expand_design, LabelAssignment};
use crate::network::DirectedNetwork;
use crate::sampler::{GibbsSampler, Init, SamplerControls};
use crate::terms::{CompiledModel, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMleControls {
    pub m_samples: usize,
    /// Defaults to 20 sweeps of `N(N−1)` toggles.
    pub burn_in: Option<u64>,
    /// Defaults to one sweep.
    pub thin: Option<u64>,
    pub seed: u64,
    /// Below `min_ess_fraction · M` effective samples the refit is abandoned.
    pub min_ess_fraction: f64,
    pub max_iter: usize,
    /// Stop once the squared Newton decrement falls below this.
    pub tol: f64,
}

impl Default for McMleControls {
    fn default() -> Self {
        McMleControls {
            m_samples: 2000,
            burn_in: None,
            thin: None,
            seed: 0,
            min_ess_fraction: 0.05,
            max_iter: 50,
            tol: 1e-10,
        }
    }
}

/// Importance-sampling state at the final estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMleState {
    pub theta0: Vec<f64>,
    /// `M × d` statistics of the networks drawn at `theta0`.
    #[serde(skip)]
    pub sampled_stats: Vec<Vec<f64>>,
    /// Estimate of `log ψ(θ̂) − log ψ(θ0)`.
    pub log_ratio: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMleOutcome {
    /// Refined fit, or a copy of the starting fit when the refit was abandoned.
    pub fit: PseudoFit,
    pub state: Option<McMleState>,
    /// Why the starting fit was kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl McMleOutcome {
    pub fn fell_back(&self) -> bool {
        self.warning.is_some()
    }

    fn fallback(theta0: &PseudoFit, warning: String, state: Option<McMleState>) -> Self {
        log::warn!("Monte-Carlo MLE kept the pseudolikelihood estimate: {warning}");
        McMleOutcome {
            fit: theta0.clone(),
            state,
            warning: Some(warning),
        }
    }

    /// Reorders parameters so that `new[c] = old[src[c]]`.
    pub(crate) fn permute(&mut self, src: &[usize]) {
        let p = |v: &[f64]| src.iter().map(|&s| v[s]).collect::<Vec<_>>();
        self.fit.theta = p(&self.fit.theta);
        self.fit.std_errors = p(&self.fit.std_errors);
        if let Some(st) = self.state.as_mut() {
            st.theta0 = p(&st.theta0);
            st.sampled_stats = st.sampled_stats.iter().map(|s| p(s)).collect();
        }
    }
}

/// One-stage Geyer–Thompson Monte-Carlo MLE with labels held fixed.
///
/// Networks are drawn at `theta0` from a chain started at the observed
/// network, and the approximate log-likelihood ratio
/// `⟨θ−θ0, s_obs⟩ − log (1/M) Σ_m exp⟨θ−θ0, s_m⟩` is maximised by Newton's
/// method. Standard errors come from the inverse importance-weighted
/// covariance of the sampled statistics.
///
/// The refit is abandoned, keeping `theta0` and setting a warning, when the
/// effective sample size falls below the floor, the sampled statistics are
/// degenerate, or a heterogeneous term is dyad dependent (its class-expanded
/// statistic is undefined).
pub fn fit_mcmle(
    net: &DirectedNetwork,
    cov: &CovariateTable,
    spec: &ModelSpec,
    labels: &LabelAssignment,
    theta0: &PseudoFit,
    controls: &McMleControls,
) -> Result<McMleOutcome> {
    if !theta0.converged {
        return Err(Error::Invalid("Monte-Carlo MLE needs a converged starting fit".into()));
    }
    if controls.m_samples < 2 {
        return Err(Error::Invalid("m_samples must be >= 2".into()));
    }
    let layout = spec.layout();
    if theta0.theta.len() != layout.n_params() {
        return Err(Error::Invalid("starting fit does not match the model layout".into()));
    }
    let model = CompiledModel::new(spec, cov)?;
    let mode = spec.mode;
    let s_obs = match model.expanded_stats(net, &layout, labels.labels(), mode) {
        Ok(s) => s,
        Err(Error::Spec(msg)) => return Ok(McMleOutcome::fallback(theta0, msg, None)),
        Err(e) => return Err(e),
    };

    let n = net.n_nodes();
    let defaults = SamplerControls::defaults(n, controls.m_samples, controls.seed);
    let sampler_controls = SamplerControls {
        burn_in: controls.burn_in.unwrap_or(defaults.burn_in),
        thin: controls.thin.unwrap_or(defaults.thin),
        ..defaults
    };
    let sampler = GibbsSampler::new(spec, cov, &theta0.theta, Some(labels))?;
    let mut sampled = Vec::with_capacity(controls.m_samples);
    let run = sampler.run(Init::Network(net), &sampler_controls, |_, state| {
        sampled.push(model.expanded_stats(&state.to_network(), &layout, labels.labels(), mode)?);
        Ok(())
    });
    if let Err(Error::Degenerate(msg)) = run {
        return Ok(McMleOutcome::fallback(theta0, format!("sampler: {msg}"), None));
    }
    run?;

    let p = layout.n_params();
    let m = sampled.len();
    let diffs: Vec<Vec<f64>> = sampled
        .iter()
        .map(|s| s.iter().zip(&s_obs).map(|(a, b)| a - b).collect())
        .collect();
    let objective = |delta: &[f64]| -> f64 { -log_mean_exp(&scores(&diffs, delta)) };

    let mut delta = vec![0.0; p];
    let mut value = objective(&delta);
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut moments = weighted_moments(&diffs, &delta);
    while iterations < controls.max_iter {
        let chol = match Cholesky::new(&moments.cov, p) {
            Ok(c) => c,
            Err(col) => {
                let state = state_for(theta0, sampled, &delta, &diffs, &s_obs);
                return Ok(McMleOutcome::fallback(
                    theta0,
                    format!("sampled statistics have no variation in `{}`", layout.names()[col]),
                    Some(state),
                ));
            }
        };
        let step: Vec<f64> = chol.solve(&moments.mean).into_iter().map(|v| -v).collect();
        let decrement: f64 = -step.iter().zip(&moments.mean).map(|(a, b)| a * b).sum::<f64>();
        if decrement < controls.tol {
            break;
        }
        iterations += 1;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = delta.iter().zip(&step).map(|(d, s)| d + t * s).collect();
            let v = objective(&cand);
            if v.is_finite() && v >= value {
                delta = cand;
                value = v;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
        trace.push(value);
        moments = weighted_moments(&diffs, &delta);
    }

    let ess = moments.ess;
    let state = state_for(theta0, sampled, &delta, &diffs, &s_obs);
    if ess < controls.min_ess_fraction * m as f64 {
        return Ok(McMleOutcome::fallback(
            theta0,
            format!("effective sample size {ess:.1} below {:.1}", controls.min_ess_fraction * m as f64),
            Some(state),
        ));
    }
    let std_errors = match Cholesky::new(&moments.cov, p) {
        Ok(c) => c.inverse_diagonal().into_iter().map(f64::sqrt).collect(),
        Err(col) => {
            return Ok(McMleOutcome::fallback(
                theta0,
                format!("singular weighted covariance at `{}`", layout.names()[col]),
                Some(state),
            ))
        }
    };
    let theta: Vec<f64> = theta0.theta.iter().zip(&delta).map(|(a, d)| a + d).collect();
    let base = model.design(net, spec.term_labels())?;
    let log_pl = logistic_loglik(&expand_design(&base, spec, labels)?, None, &theta);
    Ok(McMleOutcome {
        fit: PseudoFit {
            names: layout.names().to_vec(),
            theta,
            std_errors,
            log_pl,
            converged: true,
            iterations,
            diagnostic: None,
            trace,
        },
        state: Some(state),
        warning: None,
    })
}

fn scores(diffs: &[Vec<f64>], delta: &[f64]) -> Vec<f64> {
    diffs
        .iter()
        .map(|d| d.iter().zip(delta).map(|(a, b)| a * b).sum())
        .collect()
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + (v.iter().map(|x| (x - max).exp()).sum::<f64>() / v.len() as f64).ln()
}

struct Moments {
    mean: Vec<f64>,
    cov: Vec<f64>,
    ess: f64,
}

/// Self-normalised importance-weighted mean and covariance of `diffs` under
/// weights `∝ exp⟨δ, d_m⟩`, with the Kish effective sample size.
fn weighted_moments(diffs: &[Vec<f64>], delta: &[f64]) -> Moments {
    let p = delta.len();
    let s = scores(diffs, delta);
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut mean = vec![0.0; p];
    for (d, wi) in diffs.iter().zip(&w) {
        for k in 0..p {
            mean[k] += wi / total * d[k];
        }
    }
    let mut cov = vec![0.0; p * p];
    for (d, wi) in diffs.iter().zip(&w) {
        let wi = wi / total;
        for a in 0..p {
            let da = d[a] - mean[a];
            for b in 0..=a {
                cov[a * p + b] += wi * da * (d[b] - mean[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            cov[b * p + a] = cov[a * p + b];
        }
    }
    let ess = total * total / w.iter().map(|x| x * x).sum::<f64>();
    Moments { mean, cov, ess }
}

fn state_for(theta0: &PseudoFit, sampled: Vec<Vec<f64>>, delta: &[f64], diffs: &[Vec<f64>], s_obs: &[f64]) -> McMleState {
    let shift: f64 = delta.iter().zip(s_obs).map(|(a, b)| a * b).sum();
    McMleState {
        theta0: theta0.theta.clone(),
        sampled_stats: sampled,
        log_ratio: log_mean_exp(&scores(diffs, delta)) + shift,
        ess: weighted_moments(diffs, delta).ess,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_moments_at_zero() {
        let diffs = vec![vec![1.0, 0.0], vec![-1.0, 2.0], vec![0.0, 1.0], vec![0.0, -3.0]];
        let m = weighted_moments(&diffs, &[0.0, 0.0]);
        assert_eq!(m.mean, vec![0.0, 0.0]);
        assert!((m.ess - 4.0).abs() < 1e-12);
        assert!((m.cov[0] - 0.5).abs() < 1e-12);
        assert!((m.cov[1] - m.cov[2]).abs() < 1e-15);
    }

    #[test]
    fn log_mean_exp_stable() {
        assert!((log_mean_exp(&[1000.0, 1000.0]) - 1000.0).abs() < 1e-12);
        assert!((log_mean_exp(&[0.0, 2f64.ln()]) - 1.5f64.ln()).abs() < 1e-12);
    }
}
