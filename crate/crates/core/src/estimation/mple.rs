use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpleControls {
    pub max_iter: usize,
    /// Converged once `‖∇ℓ‖ ≤ grad_tol · (1 + |ℓ|)`.
    pub grad_tol: f64,
    /// Any `|θ_k|` beyond this is treated as separation.
    pub drift_limit: f64,
    pub max_halvings: usize,
}

impl Default for MpleControls {
    fn default() -> Self {
        MpleControls {
            max_iter: 100,
            grad_tol: 1e-8,
            drift_limit: 30.0,
            max_halvings: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoFit {
    pub names: Vec<String>,
    pub theta: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Maximised log pseudolikelihood.
    pub log_pl: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    /// Log pseudolikelihood after each accepted Newton step, starting point first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

#[inline]
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^η)` without overflow.
#[inline]
pub(crate) fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_r y_r η_r − log(1 + e^{η_r})` with `η = offset + Xθ`.
pub fn logistic_loglik(design: &DesignMatrix, offsets: Option<&[f64]>, theta: &[f64]) -> f64 {
    let y = design.response();
    design
        .rows()
        .enumerate()
        .map(|(r, x)| {
            let eta = offsets.map_or(0.0, |o| o[r]) + dot(x, theta);
            y[r] * eta - softplus(eta)
        })
        .sum()
}

struct Evaluation {
    loglik: f64,
    grad: Vec<f64>,
    /// Full symmetric negative Hessian (observed information), row-major.
    info: Vec<f64>,
}

fn evaluate(design: &DesignMatrix, offsets: Option<&[f64]>, theta: &[f64]) -> Evaluation {
    let d = design.n_cols();
    let y = design.response();
    let mut loglik = 0.0;
    let mut grad = vec![0.0; d];
    let mut info = vec![0.0; d * d];
    for (r, x) in design.rows().enumerate() {
        let eta = offsets.map_or(0.0, |o| o[r]) + dot(x, theta);
        let p = logistic(eta);
        loglik += y[r] * eta - softplus(eta);
        let resid = y[r] - p;
        let w = p * (1.0 - p);
        for a in 0..d {
            let xa = x[a];
            if xa == 0.0 {
                continue;
            }
            grad[a] += resid * xa;
            let wa = w * xa;
            let row = &mut info[a * d..a * d + a + 1];
            for (slot, xb) in row.iter_mut().zip(&x[..=a]) {
                *slot += wa * xb;
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            info[b * d + a] = info[a * d + b];
        }
    }
    Evaluation { loglik, grad, info }
}

/// Fits the logistic pseudolikelihood from `θ = 0`.
pub fn fit_mple(design: &DesignMatrix, offsets: Option<&[f64]>, controls: &MpleControls) -> Result<PseudoFit> {
    fit_mple_from(design, offsets, &vec![0.0; design.n_cols()], controls)
}

/// Newton–Raphson with step halving from `init`. Standard errors come from
/// the inverse observed information at the final iterate. Separation (drift
/// past `drift_limit`) and a singular information matrix are reported as a
/// non-converged fit with a diagnostic naming the column, not as an error.
pub fn fit_mple_from(
    design: &DesignMatrix,
    offsets: Option<&[f64]>,
    init: &[f64],
    controls: &MpleControls,
) -> Result<PseudoFit> {
    let d = design.n_cols();
    if init.len() != d {
        return Err(Error::Invalid(format!("initial value has length {}, design has {d} columns", init.len())));
    }
    if design.n_rows() < d + 1 {
        return Err(Error::Invalid(format!(
            "need at least {} rows for {d} parameters, have {}",
            d + 1,
            design.n_rows()
        )));
    }
    if let Some(o) = offsets {
        if o.len() != design.n_rows() {
            return Err(Error::Invalid("offset length differs from row count".into()));
        }
    }
    let names = design.names().to_vec();
    let mut theta = init.to_vec();
    let mut ev = evaluate(design, offsets, &theta);
    let mut trace = vec![ev.loglik];
    let mut converged = false;
    let mut diagnostic = None;
    let mut iterations = 0;

    while iterations < controls.max_iter {
        let chol = match Cholesky::new(&ev.info, d) {
            Ok(c) => c,
            Err(col) => {
                diagnostic = Some(format!("singular information matrix at column `{}`", names[col]));
                break;
            }
        };
        let step = chol.solve(&ev.grad);
        let gnorm = ev.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        // Under separation the gradient vanishes while Newton steps stay
        // long, so both must be small.
        let short = step.iter().zip(&theta).all(|(s, t)| s.abs() <= 1e-4 * (1.0 + t.abs()));
        if gnorm <= controls.grad_tol * (1.0 + ev.loglik.abs()) && short {
            converged = true;
            // One more full Newton step costs little and takes the iterate
            // to working precision.
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + s).collect();
            let polished = evaluate(design, offsets, &cand);
            if polished.loglik >= ev.loglik {
                theta = cand;
                ev = polished;
                trace.push(ev.loglik);
            }
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=controls.max_halvings {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let ll = logistic_loglik(design, offsets, &cand);
            if ll.is_finite() && ll >= ev.loglik {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        let Some(cand) = accepted else {
            // No ascent left in floating point: accept if the gradient is
            // already negligible on a looser scale.
            converged = short && gnorm <= controls.grad_tol.sqrt() * (1.0 + ev.loglik.abs());
            if !converged {
                diagnostic = Some("line search failed to increase the pseudolikelihood".into());
            }
            break;
        };
        theta = cand;
        ev = evaluate(design, offsets, &theta);
        trace.push(ev.loglik);
        if let Some(k) = theta.iter().position(|v| v.abs() > controls.drift_limit || !v.is_finite()) {
            diagnostic = Some(format!(
                "separation: `{}` drifted to {:.3} (|θ| > {})",
                names[k], theta[k], controls.drift_limit
            ));
            break;
        }
    }
    if !converged && diagnostic.is_none() {
        diagnostic = Some(format!("no convergence after {} iterations", controls.max_iter));
    }

    let std_errors = match Cholesky::new(&ev.info, d) {
        Ok(chol) => chol.inverse_diagonal().into_iter().map(f64::sqrt).collect(),
        Err(col) => {
            if converged {
                converged = false;
                diagnostic = Some(format!("singular information matrix at column `{}`", names[col]));
            }
            vec![f64::NAN; d]
        }
    };
    debug_assert!(ev.loglik <= 0.0);
    Ok(PseudoFit {
        names,
        theta,
        std_errors,
        log_pl: ev.loglik,
        converged,
        iterations,
        diagnostic,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept_design(n: usize, ones: usize) -> DesignMatrix {
        let y: Vec<f64> = (0..n).map(|r| if r < ones { 1.0 } else { 0.0 }).collect();
        DesignMatrix::new(vec!["edges".into()], vec![1.0; n], y).unwrap()
    }

    #[test]
    fn intercept_only_is_logit() {
        let dm = intercept_design(600, 45);
        let fit = fit_mple(&dm, None, &MpleControls::default()).unwrap();
        assert!(fit.converged);
        let p: f64 = 45.0 / 600.0;
        assert!((fit.theta[0] - (p / (1.0 - p)).ln()).abs() < 1e-10);
        let se = 1.0 / (600.0 * p * (1.0 - p)).sqrt();
        assert!((fit.std_errors[0] - se).abs() < 1e-9);
        assert!(fit.log_pl <= 0.0);
    }

    #[test]
    fn trace_is_monotone() {
        let x = vec![1.0, 0.3, 1.0, -1.2, 1.0, 2.0, 1.0, 0.1, 1.0, -0.5, 1.0, 1.5];
        let y = vec![0.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let dm = DesignMatrix::new(vec!["a".into(), "b".into()], x, y).unwrap();
        let fit = fit_mple(&dm, None, &MpleControls::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn separation_is_flagged() {
        let x = vec![1.0, -1.0, 1.0, -2.0, 1.0, 1.0, 1.0, 2.0];
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let dm = DesignMatrix::new(vec!["edges".into(), "x".into()], x, y).unwrap();
        let fit = fit_mple(&dm, None, &MpleControls::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.diagnostic.unwrap().contains('x'));
    }

    #[test]
    fn collinear_column_named() {
        let x = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let y = vec![0.0, 1.0, 0.0, 1.0];
        let dm = DesignMatrix::new(vec!["edges".into(), "zero".into()], x, y).unwrap();
        let fit = fit_mple(&dm, None, &MpleControls::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.diagnostic.unwrap().contains("zero"));
    }

    #[test]
    fn offsets_shift_intercept() {
        let dm = intercept_design(400, 100);
        let off = vec![0.5; 400];
        let fit = fit_mple(&dm, Some(&off), &MpleControls::default()).unwrap();
        assert!((fit.theta[0] + 0.5 - (1.0f64 / 3.0).ln()).abs() < 1e-9);
    }

    #[test]
    fn too_few_rows() {
        let dm = DesignMatrix::new(vec!["a".into(), "b".into()], vec![1.0, 2.0], vec![1.0]).unwrap();
        assert!(fit_mple(&dm, None, &MpleControls::default()).is_err());
    }
}
