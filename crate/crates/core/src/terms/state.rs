use crate::covariates::CovariateTable;
use crate::error::Result;
use crate::network::{words_for, DirectedNetwork, Dyad};
use crate::terms::stats::{gwesp_weight, CompiledModel, CompiledTerm};
use crate::terms::ModelSpec;

/// Mutable network with the bookkeeping needed for O(degree) change
/// statistics: neighbour lists and, when the model has a GWESP term, the
/// outgoing two-path count `tp[i][l] = #{k : i → k → l}` for every pair.
#[derive(Debug, Clone)]
pub struct NetworkState {
    n: usize,
    words: usize,
    bits: Vec<u64>,
    out: Vec<Vec<u32>>,
    inn: Vec<Vec<u32>>,
    n_edges: usize,
    two_paths: Option<Vec<u32>>,
}

impl NetworkState {
    pub fn new(net: &DirectedNetwork, track_two_paths: bool) -> Self {
        let n = net.n_nodes();
        let out: Vec<Vec<u32>> = (0..n).map(|i| net.out_neighbors(i).to_vec()).collect();
        let inn: Vec<Vec<u32>> = (0..n).map(|j| net.in_neighbors(j).to_vec()).collect();
        let two_paths = track_two_paths.then(|| {
            let mut tp = vec![0u32; n * n];
            for i in 0..n {
                for &k in &out[i] {
                    for &l in &out[k as usize] {
                        if l as usize != i {
                            tp[i * n + l as usize] += 1;
                        }
                    }
                }
            }
            tp
        });
        NetworkState {
            n,
            words: words_for(n),
            bits: net.bits().to_vec(),
            out,
            inn,
            n_edges: net.n_edges(),
            two_paths,
        }
    }

    /// State suited to evaluating `model`.
    pub fn for_model(net: &DirectedNetwork, model: &CompiledModel) -> Self {
        Self::new(net, model.has_gwesp())
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    #[inline]
    pub fn out_neighbors(&self, i: usize) -> &[u32] {
        &self.out[i]
    }

    #[inline]
    pub fn in_neighbors(&self, j: usize) -> &[u32] {
        &self.inn[j]
    }

    /// Outgoing two-paths from `i` to `l`. Panics if two-paths are not tracked.
    #[inline]
    pub fn two_paths(&self, i: usize, l: usize) -> u32 {
        self.two_paths.as_ref().expect("two-path counts not tracked")[i * self.n + l]
    }

    /// Sets cell `(i, j)`; returns whether it changed.
    pub fn set(&mut self, i: usize, j: usize, present: bool) -> bool {
        if self.has_edge(i, j) == present {
            return false;
        }
        let n = self.n;
        if let Some(tp) = self.two_paths.as_mut() {
            // i → j → l and k → i → j
            if present {
                for &l in &self.out[j] {
                    if l as usize != i {
                        tp[i * n + l as usize] += 1;
                    }
                }
                for &k in &self.inn[i] {
                    if k as usize != j {
                        tp[k as usize * n + j] += 1;
                    }
                }
            } else {
                for &l in &self.out[j] {
                    if l as usize != i {
                        tp[i * n + l as usize] -= 1;
                    }
                }
                for &k in &self.inn[i] {
                    if k as usize != j {
                        tp[k as usize * n + j] -= 1;
                    }
                }
            }
        }
        let mask = 1u64 << (j % 64);
        if present {
            self.bits[i * self.words + j / 64] |= mask;
            insert_sorted(&mut self.out[i], j as u32);
            insert_sorted(&mut self.inn[j], i as u32);
            self.n_edges += 1;
        } else {
            self.bits[i * self.words + j / 64] &= !mask;
            remove_sorted(&mut self.out[i], j as u32);
            remove_sorted(&mut self.inn[j], i as u32);
            self.n_edges -= 1;
        }
        true
    }

    pub fn to_network(&self) -> DirectedNetwork {
        DirectedNetwork::from_bits(self.n, self.bits.clone())
    }
}

fn insert_sorted(v: &mut Vec<u32>, x: u32) {
    if let Err(pos) = v.binary_search(&x) {
        v.insert(pos, x);
    }
}

fn remove_sorted(v: &mut Vec<u32>, x: u32) {
    if let Ok(pos) = v.binary_search(&x) {
        v.remove(pos);
    }
}

impl CompiledModel {
    /// Change statistics for dyad `(i, j)` against `state`, written to `out`
    /// in model order. The rest of the network is held at its current state
    /// whether or not `(i, j)` is itself present.
    pub fn change_stats(&self, state: &NetworkState, i: usize, j: usize, out: &mut [f64]) {
        for (slot, term) in out.iter_mut().zip(self.terms()) {
            *slot = match term {
                CompiledTerm::Edges => 1.0,
                CompiledTerm::Mutual => {
                    if state.has_edge(j, i) {
                        1.0
                    } else {
                        0.0
                    }
                }
                CompiledTerm::Gwesp { decay, base, .. } => gwesp_change(state, i, j, *decay, *base),
                CompiledTerm::NodeMatch(c) => {
                    if c[i] == c[j] {
                        1.0
                    } else {
                        0.0
                    }
                }
                CompiledTerm::SenderCov(x) => x[i],
                CompiledTerm::ReceiverCov(x) => x[j],
                CompiledTerm::AbsDiff(x) => (x[i] - x[j]).abs(),
            };
        }
    }
}

/// Adding `i → j` gives the edge its own weight and lifts by one the partner
/// count of every edge `i → l` with `j → l` and every edge `k → j` with
/// `k → i`. Each lift from `p` to `p + 1` adds `(1 − e^{−τ})^p`.
fn gwesp_change(state: &NetworkState, i: usize, j: usize, decay: f64, base: f64) -> f64 {
    let present = u32::from(state.has_edge(i, j));
    let mut delta = gwesp_weight(state.two_paths(i, j), decay);
    for &l in state.out_neighbors(j) {
        let l = l as usize;
        if l != i && state.has_edge(i, l) {
            delta += base.powi((state.two_paths(i, l) - present) as i32);
        }
    }
    for &k in state.in_neighbors(i) {
        let k = k as usize;
        if k != j && state.has_edge(k, j) {
            delta += base.powi((state.two_paths(k, j) - present) as i32);
        }
    }
    delta
}

/// Incremental change statistic for one dyad.
pub fn change_stat_fast(
    net: &DirectedNetwork,
    cov: &CovariateTable,
    spec: &ModelSpec,
    dyad: Dyad,
) -> Result<Vec<f64>> {
    let model = CompiledModel::new(spec, cov)?;
    model.check_nodes(net.n_nodes())?;
    let state = NetworkState::for_model(net, &model);
    let mut out = vec![0.0; model.n_terms()];
    model.change_stats(&state, dyad.sender, dyad.receiver, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::{change_stat_oracle, TermSpec};

    #[test]
    fn covariate_terms() {
        let net = DirectedNetwork::from_edges(3, [(0, 1)]).unwrap();
        let cov = CovariateTable::empty(3).continuous("x", vec![0.5, 2.0, -1.0]).unwrap();
        let spec =
            ModelSpec::homogeneous(vec![TermSpec::sender("x"), TermSpec::receiver("x"), TermSpec::abs_diff("x")])
                .unwrap();
        let d = change_stat_fast(&net, &cov, &spec, Dyad::new(2, 1)).unwrap();
        assert_eq!(d, vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_paths_track_toggles() {
        let net = DirectedNetwork::from_edges(5, [(0, 1), (1, 2), (3, 2), (0, 3)]).unwrap();
        let mut st = NetworkState::new(&net, true);
        assert_eq!(st.two_paths(0, 2), 2);
        st.set(1, 2, false);
        assert_eq!(st.two_paths(0, 2), 1);
        st.set(4, 0, true);
        assert_eq!(st.two_paths(4, 1), 1);
        assert_eq!(st.two_paths(4, 3), 1);
        let fresh = NetworkState::new(&st.to_network(), true);
        assert_eq!(fresh.two_paths, st.two_paths);
        assert!(!st.set(4, 0, true));
    }

    #[test]
    fn gwesp_fast_matches_oracle_small() {
        let net = DirectedNetwork::from_edges(4, [(0, 1), (0, 2), (2, 1), (1, 3), (2, 3), (3, 0)]).unwrap();
        let spec = ModelSpec::homogeneous(vec![TermSpec::gwesp(0.7)]).unwrap();
        let cov = CovariateTable::empty(4);
        for d in net.dyads() {
            let a = change_stat_fast(&net, &cov, &spec, d).unwrap()[0];
            let b = change_stat_oracle(&net, &cov, &spec, d).unwrap()[0];
            assert!((a - b).abs() < 1e-12, "{d:?}: {a} vs {b}");
        }
    }
}
