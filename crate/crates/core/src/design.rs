//! Dyad-level design matrices for pseudolikelihood fits.

use crate::covariates::CovariateTable;
use crate::error::{Error, Result};
use crate::network::{dyads, DirectedNetwork, Dyad};
use crate::terms::{CompiledModel, ModelSpec, NetworkState};

/// Row-major regressors with a binary response. When built from a network,
/// row `r` is the `r`-th dyad of [`DirectedNetwork::dyads`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n_nodes: Option<usize>,
    n_cols: usize,
    names: Vec<String>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl DesignMatrix {
    /// A free-standing design (no dyad structure), e.g. for plain logistic
    /// regression.
    pub fn new(names: Vec<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n_cols = names.len();
        if n_cols == 0 || x.len() != n_cols * y.len() {
            return Err(Error::Invalid(format!(
                "design shape mismatch: {} values for {} rows x {} columns",
                x.len(),
                y.len(),
                n_cols
            )));
        }
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Invalid("response must be binary".into()));
        }
        Ok(DesignMatrix {
            n_nodes: None,
            n_cols,
            names,
            x,
            y,
        })
    }

    pub(crate) fn from_parts(n_nodes: Option<usize>, names: Vec<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        DesignMatrix {
            n_nodes,
            n_cols: names.len(),
            names,
            x,
            y,
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_nodes(&self) -> Option<usize> {
        self.n_nodes
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.x[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.n_cols)
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    /// The dyad behind row `r`, for network-derived designs.
    pub fn dyad(&self, r: usize) -> Option<Dyad> {
        let n = self.n_nodes?;
        let i = r / (n - 1);
        let rem = r % (n - 1);
        Some(Dyad::new(i, if rem >= i { rem + 1 } else { rem }))
    }
}

impl CompiledModel {
    /// Change-statistic rows for every dyad of `net`, response `a_ij`.
    pub fn design(&self, net: &DirectedNetwork, names: Vec<String>) -> Result<DesignMatrix> {
        self.check_nodes(net.n_nodes())?;
        let n = net.n_nodes();
        let d = self.n_terms();
        let state = NetworkState::for_model(net, self);
        let mut x = vec![0.0; n * (n - 1) * d];
        let mut y = Vec::with_capacity(n * (n - 1));
        for (r, dyad) in dyads(n).enumerate() {
            self.change_stats(&state, dyad.sender, dyad.receiver, &mut x[r * d..(r + 1) * d]);
            y.push(if net.has_edge(dyad.sender, dyad.receiver) { 1.0 } else { 0.0 });
        }
        Ok(DesignMatrix::from_parts(Some(n), names, x, y))
    }
}

pub fn design_matrix(net: &DirectedNetwork, cov: &CovariateTable, spec: &ModelSpec) -> Result<DesignMatrix> {
    CompiledModel::new(spec, cov)?.design(net, spec.term_labels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::TermSpec;

    #[test]
    fn two_node_empty_edges_only() {
        let net = DirectedNetwork::empty(2).unwrap();
        let spec = ModelSpec::homogeneous(vec![TermSpec::edges()]).unwrap();
        let dm = design_matrix(&net, &CovariateTable::empty(2), &spec).unwrap();
        assert_eq!(dm.n_rows(), 2);
        assert_eq!(dm.row(0), &[1.0]);
        assert_eq!(dm.row(1), &[1.0]);
        assert_eq!(dm.response(), &[0.0, 0.0]);
    }

    #[test]
    fn reciprocation_row() {
        let net = DirectedNetwork::from_edges(3, [(0, 1)]).unwrap();
        let spec = ModelSpec::homogeneous(vec![TermSpec::edges(), TermSpec::mutual()]).unwrap();
        let dm = design_matrix(&net, &CovariateTable::empty(3), &spec).unwrap();
        let r = Dyad::new(1, 0).index(3);
        assert_eq!(dm.row(r), &[1.0, 1.0]);
        assert_eq!(dm.response()[r], 0.0);
        assert_eq!(dm.response()[Dyad::new(0, 1).index(3)], 1.0);
        assert_eq!(dm.dyad(r), Some(Dyad::new(1, 0)));
    }

    #[test]
    fn row_count_151() {
        let net = DirectedNetwork::empty(151).unwrap();
        let spec = ModelSpec::homogeneous(vec![TermSpec::edges()]).unwrap();
        let dm = design_matrix(&net, &CovariateTable::empty(151), &spec).unwrap();
        assert_eq!(dm.n_rows(), 22650);
    }

    #[test]
    fn free_design_validation() {
        assert!(DesignMatrix::new(vec!["a".into()], vec![1.0, 2.0], vec![0.0]).is_err());
        assert!(DesignMatrix::new(vec!["a".into()], vec![1.0], vec![0.5]).is_err());
    }
}
