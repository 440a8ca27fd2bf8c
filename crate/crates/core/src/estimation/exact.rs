use crate::covariates::CovariateTable;
use crate::error::{Error, Result};
use crate::network::{dyads, DirectedNetwork};
use crate::terms::{CompiledModel, ModelSpec};

/// Largest network whose graph space (`2^{N(N−1)}`) is enumerated.
pub const MAX_EXACT_NODES: usize = 5;

/// Sufficient statistics of every graph on `n` nodes, indexed by the bit mask
/// over dyads in [`DirectedNetwork::dyads`] order.
pub fn enumerate_stats(n: usize, model: &CompiledModel) -> Result<Vec<Vec<f64>>> {
    if n > MAX_EXACT_NODES {
        return Err(Error::TooLarge {
            n_nodes: n,
            max: MAX_EXACT_NODES,
        });
    }
    let all: Vec<_> = dyads(n).collect();
    let count = 1usize << all.len();
    (0..count)
        .map(|mask| {
            let edges = all
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, d)| (d.sender, d.receiver));
            model.sufficient_stats(&DirectedNetwork::from_edges(n, edges)?)
        })
        .collect()
}

/// `⟨θ, s(a)⟩ − log ψ(θ)` with `ψ` summed over all graphs. Homogeneous
/// models only.
pub fn exact_loglik_small(
    net: &DirectedNetwork,
    cov: &CovariateTable,
    spec: &ModelSpec,
    theta: &[f64],
) -> Result<f64> {
    if net.n_nodes() > MAX_EXACT_NODES {
        return Err(Error::TooLarge {
            n_nodes: net.n_nodes(),
            max: MAX_EXACT_NODES,
        });
    }
    if spec.has_heterogeneous() {
        return Err(Error::Spec("exact likelihood supports homogeneous models only".into()));
    }
    if theta.len() != spec.n_terms() {
        return Err(Error::Invalid("theta length differs from term count".into()));
    }
    let model = CompiledModel::new(spec, cov)?;
    let observed = model.sufficient_stats(net)?;
    let space = enumerate_stats(net.n_nodes(), &model)?;
    let dot = |s: &[f64]| s.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
    let scores: Vec<f64> = space.iter().map(|s| dot(s)).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_psi = max + scores.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(dot(&observed) - log_psi)
}
