//! Gibbs edge-toggle simulation of homogeneous and mixture ERGMs.
//!
//! Each step picks a dyad `(i, j)` uniformly at random and redraws `a_ij`
//! from its full conditional `logistic(⟨θ_q, s_ij⟩)`, where `q` is the class
//! of the classifying node (the sender in sender mode, the receiver in
//! receiver mode) and `s_ij` is the change statistic given the rest of the
//! current network.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::covariates::CovariateTable;
use crate::error::{Error, Result};
use crate::estimation::logistic;
use crate::mixture::LabelAssignment;
use crate::network::DirectedNetwork;
use crate::seed::rng_from_seed;
use crate::terms::{CompiledModel, Mode, ModelSpec, NetworkState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerControls {
    /// Toggles discarded before the first retained draw.
    pub burn_in: u64,
    /// Toggles between retained draws.
    pub thin: u64,
    pub n_draws: usize,
    pub seed: u64,
}

impl SamplerControls {
    /// Burn-in of 20 sweeps and thinning of one sweep, where a sweep is
    /// `N(N−1)` toggles.
    pub fn defaults(n_nodes: usize, n_draws: usize, seed: u64) -> Self {
        let sweep = (n_nodes * n_nodes.saturating_sub(1)) as u64;
        SamplerControls {
            burn_in: 20 * sweep,
            thin: sweep.max(1),
            n_draws,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Invalid("thin must be >= 1".into()));
        }
        if self.n_draws == 0 {
            return Err(Error::Invalid("n_draws must be >= 1".into()));
        }
        Ok(())
    }
}

/// Starting network of a chain.
#[derive(Debug, Clone, Copy)]
pub enum Init<'a> {
    Empty,
    Network(&'a DirectedNetwork),
}

/// A compiled model with per-class parameter vectors and fixed labels.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    model: CompiledModel,
    class_theta: Vec<Vec<f64>>,
    labels: Vec<usize>,
    mode: Mode,
}

impl GibbsSampler {
    /// `theta` follows `spec.layout()`. `labels` may be omitted for
    /// single-class models.
    pub fn new(
        spec: &ModelSpec,
        cov: &CovariateTable,
        theta: &[f64],
        labels: Option<&LabelAssignment>,
    ) -> Result<Self> {
        let layout = spec.layout();
        if theta.len() != layout.n_params() {
            return Err(Error::Invalid(format!(
                "theta has {} entries, model expects {} ({})",
                theta.len(),
                layout.n_params(),
                layout.names().join(", ")
            )));
        }
        if let Some(v) = theta.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite parameter {v}")));
        }
        let model = CompiledModel::new(spec, cov)?;
        let n = cov.n_nodes();
        let labels = match labels {
            Some(l) => {
                if l.n_classes() != spec.n_classes {
                    return Err(Error::Invalid(format!(
                        "labels have {} classes, model has {}",
                        l.n_classes(),
                        spec.n_classes
                    )));
                }
                if l.labels().len() != n {
                    return Err(Error::Invalid("label count differs from node count".into()));
                }
                l.labels().to_vec()
            }
            None if spec.n_classes == 1 => vec![0; n],
            None => return Err(Error::Invalid("a mixture model needs class labels".into())),
        };
        let class_theta = (0..spec.n_classes).map(|q| layout.class_theta(theta, q)).collect();
        Ok(GibbsSampler {
            model,
            class_theta,
            labels,
            mode: spec.mode,
        })
    }

    pub fn model(&self) -> &CompiledModel {
        &self.model
    }

    pub fn initial_state(&self, init: Init<'_>) -> Result<NetworkState> {
        let net = match init {
            Init::Empty => DirectedNetwork::empty(self.model.n_nodes())?,
            Init::Network(net) => {
                self.model.check_nodes(net.n_nodes())?;
                net.clone()
            }
        };
        Ok(NetworkState::for_model(&net, &self.model))
    }

    /// One Gibbs update of a uniformly chosen dyad.
    #[inline]
    pub fn step<R: Rng>(&self, state: &mut NetworkState, rng: &mut R, buf: &mut [f64]) -> Result<()> {
        let n = state.n_nodes();
        let i = rng.random_range(0..n);
        let r = rng.random_range(0..n - 1);
        let j = if r >= i { r + 1 } else { r };
        self.model.change_stats(state, i, j, buf);
        let theta = &self.class_theta[self.labels[self.mode.classifier(i, j)]];
        let eta: f64 = buf.iter().zip(theta).map(|(s, t)| s * t).sum();
        if !eta.is_finite() {
            return Err(Error::Degenerate(format!(
                "non-finite linear predictor at dyad ({i}, {j}) with {} edges",
                state.n_edges()
            )));
        }
        let u: f64 = rng.random();
        state.set(i, j, u < logistic(eta));
        Ok(())
    }

    /// Runs one chain, calling `on_draw(k, state)` for each retained draw.
    pub fn run<F>(&self, init: Init<'_>, controls: &SamplerControls, mut on_draw: F) -> Result<()>
    where
        F: FnMut(usize, &NetworkState) -> Result<()>,
    {
        controls.validate()?;
        let mut state = self.initial_state(init)?;
        let mut rng = rng_from_seed(controls.seed);
        let mut buf = vec![0.0; self.model.n_terms()];
        for _ in 0..controls.burn_in {
            self.step(&mut state, &mut rng, &mut buf)?;
        }
        for k in 0..controls.n_draws {
            for _ in 0..controls.thin {
                self.step(&mut state, &mut rng, &mut buf)?;
            }
            on_draw(k, &state)?;
        }
        Ok(())
    }
}

/// Draws `controls.n_draws` networks. See [`GibbsSampler`].
pub fn simulate(
    spec: &ModelSpec,
    cov: &CovariateTable,
    theta: &[f64],
    labels: Option<&LabelAssignment>,
    controls: &SamplerControls,
    init: Init<'_>,
) -> Result<Vec<DirectedNetwork>> {
    let sampler = GibbsSampler::new(spec, cov, theta, labels)?;
    let mut draws = Vec::with_capacity(controls.n_draws);
    sampler.run(init, controls, |_, state| {
        draws.push(state.to_network());
        Ok(())
    })?;
    Ok(draws)
}

/// Class sizes by largest-remainder rounding of `n · proportions`.
pub fn class_counts(n_nodes: usize, proportions: &[f64]) -> Result<Vec<usize>> {
    if proportions.is_empty() || proportions.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Invalid("class proportions must be finite and non-negative".into()));
    }
    let total: f64 = proportions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("class proportions sum to {total}, not 1")));
    }
    let exact: Vec<f64> = proportions.iter().map(|p| p * n_nodes as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let short = n_nodes - counts.iter().sum::<usize>();
    for &q in order.iter().take(short) {
        counts[q] += 1;
    }
    Ok(counts)
}

/// Plants latent classes with exactly rounded sizes, shuffled over nodes.
pub fn plant_classes(n_nodes: usize, proportions: &[f64], seed: u64) -> Result<LabelAssignment> {
    let counts = class_counts(n_nodes, proportions)?;
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(q, &c)| std::iter::repeat_n(q, c))
        .collect();
    labels.shuffle(&mut rng_from_seed(seed));
    LabelAssignment::new(labels, proportions.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::TermSpec;

    #[test]
    fn planted_sizes() {
        assert_eq!(class_counts(151, &[0.75, 0.25]).unwrap(), vec![113, 38]);
        assert_eq!(class_counts(4, &[0.5, 0.5]).unwrap(), vec![2, 2]);
        let l = plant_classes(151, &[0.75, 0.25], 3).unwrap();
        assert_eq!(l.class_sizes(), vec![113, 38]);
        let one = plant_classes(10, &[1.0], 3).unwrap();
        assert!(one.labels().iter().all(|&q| q == 0));
        assert!(class_counts(10, &[0.5, 0.6]).is_err());
        assert_eq!(plant_classes(151, &[0.75, 0.25], 3).unwrap(), l);
    }

    #[test]
    fn controls_validation() {
        let mut c = SamplerControls::defaults(10, 5, 1);
        assert_eq!(c.burn_in, 1800);
        assert_eq!(c.thin, 90);
        c.n_draws = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_determinism() {
        let spec = ModelSpec::homogeneous(vec![TermSpec::edges(), TermSpec::mutual(), TermSpec::gwesp(0.2)]).unwrap();
        let cov = CovariateTable::empty(12);
        let ctl = SamplerControls {
            burn_in: 500,
            thin: 50,
            n_draws: 4,
            seed: 9,
        };
        let a = simulate(&spec, &cov, &[-1.0, 1.0, 0.3], None, &ctl, Init::Empty).unwrap();
        let b = simulate(&spec, &cov, &[-1.0, 1.0, 0.3], None, &ctl, Init::Empty).unwrap();
        assert_eq!(a, b);
        let c = simulate(&spec, &cov, &[-1.0, 1.0, 0.3], None, &SamplerControls { seed: 10, ..ctl }, Init::Empty)
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn huge_parameters_flag_degeneracy() {
        let spec = ModelSpec::homogeneous(vec![TermSpec::edges(), TermSpec::mutual()]).unwrap();
        let cov = CovariateTable::empty(5);
        let ctl = SamplerControls::defaults(5, 1, 1);
        let err = simulate(&spec, &cov, &[f64::MAX, f64::MAX], None, &ctl, Init::Empty).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn mixture_needs_labels() {
        let spec = ModelSpec::new(vec![TermSpec::edges().heterogeneous()], 2, Mode::Sender).unwrap();
        let cov = CovariateTable::empty(4);
        let ctl = SamplerControls::defaults(4, 1, 1);
        assert!(simulate(&spec, &cov, &[0.0, 0.0], None, &ctl, Init::Empty).is_err());
        assert!(simulate(&spec, &cov, &[0.0], None, &ctl, Init::Empty).is_err());
    }
}
