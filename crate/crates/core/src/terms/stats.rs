use crate::covariates::CovariateTable;
use crate::error::{Error, Result};
use crate::network::{DirectedNetwork, Dyad};
use crate::terms::{Mode, ModelSpec, ParamLayout, TermKind};

/// A term with its covariate column resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum CompiledTerm {
    Edges,
    Mutual,
    Gwesp {
        decay: f64,
        /// `e^τ`
        scale: f64,
        /// `1 - e^{-τ}`
        base: f64,
    },
    NodeMatch(Vec<u32>),
    SenderCov(Vec<f64>),
    ReceiverCov(Vec<f64>),
    AbsDiff(Vec<f64>),
}

impl CompiledTerm {
    pub fn kind(&self) -> TermKind {
        match self {
            CompiledTerm::Edges => TermKind::Edges,
            CompiledTerm::Mutual => TermKind::Mutual,
            CompiledTerm::Gwesp { .. } => TermKind::Gwesp,
            CompiledTerm::NodeMatch(_) => TermKind::NodeMatch,
            CompiledTerm::SenderCov(_) => TermKind::SenderCov,
            CompiledTerm::ReceiverCov(_) => TermKind::ReceiverCov,
            CompiledTerm::AbsDiff(_) => TermKind::AbsDiff,
        }
    }

    /// Per-edge contribution of a dyad-independent term; `None` for
    /// Mutual and Gwesp.
    #[inline]
    pub fn edge_value(&self, i: usize, j: usize) -> Option<f64> {
        match self {
            CompiledTerm::Edges => Some(1.0),
            CompiledTerm::NodeMatch(c) => Some(if c[i] == c[j] { 1.0 } else { 0.0 }),
            CompiledTerm::SenderCov(x) => Some(x[i]),
            CompiledTerm::ReceiverCov(x) => Some(x[j]),
            CompiledTerm::AbsDiff(x) => Some((x[i] - x[j]).abs()),
            CompiledTerm::Mutual | CompiledTerm::Gwesp { .. } => None,
        }
    }
}

/// GWESP weight of an edge with `shared` partners:
/// `e^τ · (1 − (1 − e^{−τ})^shared)`.
#[inline]
pub fn gwesp_weight(shared: u32, decay: f64) -> f64 {
    if shared == 0 {
        return 0.0;
    }
    // 1 − (1 − x)^p computed as −expm1(p · ln(1 − x)) to keep large decays exact.
    -decay.exp() * (f64::from(shared) * (-(-decay).exp()).ln_1p()).exp_m1()
}

/// Model terms bound to a covariate table, ready for evaluation.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    terms: Vec<CompiledTerm>,
    n_nodes: usize,
}

impl CompiledModel {
    pub fn new(spec: &ModelSpec, cov: &CovariateTable) -> Result<Self> {
        spec.validate()?;
        spec.validate_against(cov)?;
        let mut terms = Vec::with_capacity(spec.terms.len());
        for t in &spec.terms {
            let cov_name = t.covariate.as_deref().unwrap_or_default();
            terms.push(match t.kind {
                TermKind::Edges => CompiledTerm::Edges,
                TermKind::Mutual => CompiledTerm::Mutual,
                TermKind::Gwesp => {
                    let decay = t.decay.expect("validated");
                    CompiledTerm::Gwesp {
                        decay,
                        scale: decay.exp(),
                        base: 1.0 - (-decay).exp(),
                    }
                }
                TermKind::NodeMatch => CompiledTerm::NodeMatch(cov.categorical_codes(cov_name)?.to_vec()),
                TermKind::SenderCov => CompiledTerm::SenderCov(cov.continuous_values(cov_name)?.to_vec()),
                TermKind::ReceiverCov => CompiledTerm::ReceiverCov(cov.continuous_values(cov_name)?.to_vec()),
                TermKind::AbsDiff => CompiledTerm::AbsDiff(cov.continuous_values(cov_name)?.to_vec()),
            });
        }
        Ok(CompiledModel {
            terms,
            n_nodes: cov.n_nodes(),
        })
    }

    pub fn terms(&self) -> &[CompiledTerm] {
        &self.terms
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn has_gwesp(&self) -> bool {
        self.terms.iter().any(|t| matches!(t, CompiledTerm::Gwesp { .. }))
    }

    pub(crate) fn check_nodes(&self, n: usize) -> Result<()> {
        // A model without covariates compiled against an empty table still
        // carries the table's node count.
        if n != self.n_nodes {
            return Err(Error::Invalid(format!(
                "network has {n} nodes but covariates have {}",
                self.n_nodes
            )));
        }
        Ok(())
    }

    /// `s(a, X)` in model order, evaluated directly from the definitions.
    pub fn sufficient_stats(&self, net: &DirectedNetwork) -> Result<Vec<f64>> {
        self.check_nodes(net.n_nodes())?;
        Ok(self
            .terms
            .iter()
            .map(|t| match t {
                CompiledTerm::Edges => net.n_edges() as f64,
                CompiledTerm::Mutual => net
                    .edges()
                    .filter(|&(i, j)| i < j && net.has_edge(j, i))
                    .count() as f64,
                CompiledTerm::Gwesp { decay, .. } => net
                    .edges()
                    .map(|(i, j)| gwesp_weight(shared_partners(net, i, j), *decay))
                    .sum(),
                CompiledTerm::NodeMatch(c) => net.edges().filter(|&(i, j)| c[i] == c[j]).count() as f64,
                CompiledTerm::SenderCov(x) => (0..net.n_nodes())
                    .map(|i| net.out_degree(i) as f64 * x[i])
                    .sum(),
                CompiledTerm::ReceiverCov(x) => (0..net.n_nodes())
                    .map(|j| net.in_degree(j) as f64 * x[j])
                    .sum(),
                CompiledTerm::AbsDiff(x) => net.edges().map(|(i, j)| (x[i] - x[j]).abs()).sum(),
            })
            .collect())
    }

    /// Sufficient statistics in the class-expanded parameter layout.
    ///
    /// Homogeneous terms contribute their usual statistic. A heterogeneous
    /// term contributes, for each class `q`, the sum of its per-edge values
    /// over edges whose classifying node is in `q`; this is defined only for
    /// dyad-independent terms.
    pub fn expanded_stats(
        &self,
        net: &DirectedNetwork,
        layout: &ParamLayout,
        labels: &[usize],
        mode: Mode,
    ) -> Result<Vec<f64>> {
        let base = self.sufficient_stats(net)?;
        let mut out = vec![0.0; layout.n_params()];
        for (k, term) in self.terms.iter().enumerate() {
            if !layout.is_heterogeneous(k) {
                out[layout.column(k, 0)] = base[k];
                continue;
            }
            if term.kind().is_dyad_dependent() {
                return Err(Error::Spec(format!(
                    "class-expanded statistic undefined for heterogeneous {:?}",
                    term.kind()
                )));
            }
            for (i, j) in net.edges() {
                let q = labels[mode.classifier(i, j)];
                out[layout.column(k, q)] += term.edge_value(i, j).expect("dyad independent");
            }
        }
        Ok(out)
    }
}

/// Outgoing two-path shared partners of `(i, j)`: nodes `k` with `i → k → j`.
pub(crate) fn shared_partners(net: &DirectedNetwork, i: usize, j: usize) -> u32 {
    net.out_neighbors(i)
        .iter()
        .filter(|&&k| net.has_edge(k as usize, j))
        .count() as u32
}

pub fn sufficient_stats(net: &DirectedNetwork, cov: &CovariateTable, spec: &ModelSpec) -> Result<Vec<f64>> {
    CompiledModel::new(spec, cov)?.sufficient_stats(net)
}

/// Reference change statistic: `s(a⁺ᵢⱼ) − s(a⁻ᵢⱼ)` by evaluating the
/// sufficient statistics twice.
pub fn change_stat_oracle(
    net: &DirectedNetwork,
    cov: &CovariateTable,
    spec: &ModelSpec,
    dyad: Dyad,
) -> Result<Vec<f64>> {
    let model = CompiledModel::new(spec, cov)?;
    let on = model.sufficient_stats(&net.with_edge(dyad.sender, dyad.receiver, true))?;
    let off = model.sufficient_stats(&net.with_edge(dyad.sender, dyad.receiver, false))?;
    Ok(on.iter().zip(&off).map(|(a, b)| a - b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::TermSpec;

    #[test]
    fn empty_network_is_all_zero() {
        let net = DirectedNetwork::empty(4).unwrap();
        let cov = CovariateTable::empty(4)
            .continuous("x", vec![1.0, 2.0, 3.0, 4.0])
            .unwrap()
            .categorical("g", &["a", "b", "a", "b"])
            .unwrap();
        let spec = ModelSpec::homogeneous(vec![
            TermSpec::edges(),
            TermSpec::mutual(),
            TermSpec::gwesp(0.1),
            TermSpec::node_match("g"),
            TermSpec::sender("x"),
            TermSpec::receiver("x"),
            TermSpec::abs_diff("x"),
        ])
        .unwrap();
        assert_eq!(sufficient_stats(&net, &cov, &spec).unwrap(), vec![0.0; 7]);
    }

    #[test]
    fn one_reciprocated_dyad() {
        let net = DirectedNetwork::from_edges(2, [(0, 1), (1, 0)]).unwrap();
        let spec = ModelSpec::homogeneous(vec![TermSpec::edges(), TermSpec::mutual()]).unwrap();
        let s = sufficient_stats(&net, &CovariateTable::empty(2), &spec).unwrap();
        assert_eq!(s, vec![2.0, 1.0]);
    }

    #[test]
    fn gwesp_three_nodes() {
        // 0→1 has partner 2 via 0→2→1; the other two edges have none.
        let net = DirectedNetwork::from_edges(3, [(0, 1), (0, 2), (2, 1)]).unwrap();
        assert_eq!(shared_partners(&net, 0, 1), 1);
        assert_eq!(shared_partners(&net, 0, 2), 0);
        assert_eq!(shared_partners(&net, 2, 1), 0);
        let spec = ModelSpec::homogeneous(vec![TermSpec::gwesp(0.1)]).unwrap();
        let s = sufficient_stats(&net, &CovariateTable::empty(3), &spec).unwrap();
        let hand = 0.1f64.exp() * (1.0 - (1.0 - (-0.1f64).exp()));
        assert!((s[0] - hand).abs() < 1e-15);
        assert!((s[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gwesp_weight_limits() {
        assert_eq!(gwesp_weight(0, 0.0), 0.0);
        assert_eq!(gwesp_weight(1, 0.0), 1.0);
        assert_eq!(gwesp_weight(5, 0.0), 1.0);
        // Large decay approaches a linear count.
        assert!((gwesp_weight(3, 30.0) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn oracle_simple_terms() {
        let net = DirectedNetwork::from_edges(3, [(1, 0)]).unwrap();
        let spec = ModelSpec::homogeneous(vec![TermSpec::edges(), TermSpec::mutual()]).unwrap();
        let cov = CovariateTable::empty(3);
        assert_eq!(change_stat_oracle(&net, &cov, &spec, Dyad::new(0, 1)).unwrap(), vec![1.0, 1.0]);
        assert_eq!(change_stat_oracle(&net, &cov, &spec, Dyad::new(0, 2)).unwrap(), vec![1.0, 0.0]);
        // Existing edge: change is still measured 0 → 1.
        assert_eq!(change_stat_oracle(&net, &cov, &spec, Dyad::new(1, 0)).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn oracle_gwesp_matches_difference() {
        let net = DirectedNetwork::from_edges(3, [(0, 1), (0, 2), (2, 1)]).unwrap();
        let spec = ModelSpec::homogeneous(vec![TermSpec::gwesp(0.1)]).unwrap();
        let cov = CovariateTable::empty(3);
        let full = sufficient_stats(&net, &cov, &spec).unwrap()[0];
        let without = sufficient_stats(&net.with_edge(0, 1, false), &cov, &spec).unwrap()[0];
        let d = change_stat_oracle(&net, &cov, &spec, Dyad::new(0, 1)).unwrap()[0];
        assert_eq!(d, full - without);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expanded_stats_split_by_sender_class() {
        let net = DirectedNetwork::from_edges(3, [(0, 1), (1, 2), (2, 0), (0, 2)]).unwrap();
        let cov = CovariateTable::empty(3).continuous("x", vec![1.0, 2.0, 4.0]).unwrap();
        let spec = ModelSpec::new(
            vec![TermSpec::edges().heterogeneous(), TermSpec::sender("x")],
            2,
            Mode::Sender,
        )
        .unwrap();
        let m = CompiledModel::new(&spec, &cov).unwrap();
        let s = m.expanded_stats(&net, &spec.layout(), &[0, 1, 1], Mode::Sender).unwrap();
        // layout: sender.x, edges.class0, edges.class1
        assert_eq!(s, vec![1.0 * 2.0 + 2.0 + 4.0, 2.0, 2.0]);
        let r = m.expanded_stats(&net, &spec.layout(), &[0, 1, 1], Mode::Receiver).unwrap();
        assert_eq!(r, vec![8.0, 1.0, 3.0]);
    }
}
