mod common;

use common::*;
use rand::Rng;
use srfm_ergm::design::design_matrix;
use srfm_ergm::estimation::{fit_mcmle, fit_mple, McMleControls, MpleControls};
use srfm_ergm::mixture::LabelAssignment;
use srfm_ergm::sampler::{simulate, Init, SamplerControls};
use srfm_ergm::terms::sufficient_stats;
use srfm_ergm::{CovariateTable, DirectedNetwork, ModelSpec, TermSpec};

#[test]
fn mple_matches_enumerated_mle_when_dyad_independent() {
    let spec = ModelSpec::homogeneous(vec![TermSpec::edges(), TermSpec::sender("x"), TermSpec::abs_diff("x")]).unwrap();
    let mut rng = rng(4);
    let mut checked = 0;
    while checked < 5 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let adj = random_adjacency(4, 0.5, &mut rng);
        let space = graph_space(4, |a| stats_edges_sender_absdiff(a, &x));
        let Some(truth) = exact_mle(&space, &stats_edges_sender_absdiff(&adj, &x)) else {
            continue;
        };
        let net = DirectedNetwork::from_edges(4, edge_list(&adj)).unwrap();
        let cov = CovariateTable::empty(4).continuous("x", x).unwrap();
        let fit = fit_mple(&design_matrix(&net, &cov, &spec).unwrap(), None, &MpleControls::default()).unwrap();
        for (a, b) in fit.theta.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-6, "{:?} vs {truth:?}", fit.theta);
        }
        checked += 1;
    }
}

#[test]
fn mple_flags_separation() {
    let net = DirectedNetwork::from_edges(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
    let cov = CovariateTable::empty(4).continuous("x", vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let spec = ModelSpec::homogeneous(vec![TermSpec::edges(), TermSpec::sender("x")]).unwrap();
    let fit = fit_mple(&design_matrix(&net, &cov, &spec).unwrap(), None, &MpleControls::default()).unwrap();
    assert!(!fit.converged);
    assert!(fit.diagnostic.is_some());
}

#[test]
fn mcmle_approaches_enumerated_mle() {
    let n = 4;
    let spec = ModelSpec::homogeneous(vec![TermSpec::edges(), TermSpec::mutual()]).unwrap();
    let cov = CovariateTable::empty(n);
    let net = DirectedNetwork::from_edges(n, [(0, 1), (1, 0), (1, 2), (2, 3), (3, 2), (0, 3)]).unwrap();
    let space = graph_space(n, stats_edges_mutual);
    let observed = sufficient_stats(&net, &cov, &spec).unwrap();
    let truth = exact_mle(&space, &observed).unwrap();

    let start = fit_mple(&design_matrix(&net, &cov, &spec).unwrap(), None, &MpleControls::default()).unwrap();
    let controls = McMleControls {
        m_samples: 20_000,
        seed: 17,
        ..McMleControls::default()
    };
    let out = fit_mcmle(&net, &cov, &spec, &LabelAssignment::trivial(n), &start, &controls).unwrap();
    assert!(!out.fell_back(), "{:?}", out.warning);
    for (a, b) in out.fit.theta.iter().zip(&truth) {
        assert!((a - b).abs() < 0.05, "{:?} vs {truth:?}", out.fit.theta);
    }
    assert!(out.fit.std_errors.iter().all(|s| s.is_finite() && *s > 0.0));
}

#[test]
fn mcmle_falls_back_for_heterogeneous_dependence() {
    let n = 6;
    let spec = ModelSpec::new(
        vec![TermSpec::edges(), TermSpec::mutual().heterogeneous()],
        2,
        srfm_ergm::Mode::Sender,
    )
    .unwrap();
    let cov = CovariateTable::empty(n);
    let labels = LabelAssignment::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
    let net = simulate(&spec, &cov, &[-0.5, 1.0, 0.5], Some(&labels), &SamplerControls::defaults(n, 1, 3), Init::Empty)
        .unwrap()
        .remove(0);
    let base = design_matrix(&net, &cov, &spec).unwrap();
    let design = srfm_ergm::mixture::expand_design(&base, &spec, &labels).unwrap();
    let start = fit_mple(&design, None, &MpleControls::default()).unwrap();
    assert!(start.converged, "{:?}", start.diagnostic);
    let out = fit_mcmle(&net, &cov, &spec, &labels, &start, &McMleControls::default()).unwrap();
    assert!(out.fell_back());
    assert_eq!(out.fit.theta, start.theta);
}

#[test]
fn sampler_matches_bernoulli_density() {
    let n = 20;
    let spec = ModelSpec::homogeneous(vec![TermSpec::edges()]).unwrap();
    let cov = CovariateTable::empty(n);
    let draws = simulate(&spec, &cov, &[0.5], None, &SamplerControls::defaults(n, 300, 1), Init::Empty).unwrap();
    let mean = draws.iter().map(|d| d.density()).sum::<f64>() / draws.len() as f64;
    let p = 1.0 / (1.0 + (-0.5f64).exp());
    // Draws are a full sweep apart, so near independent.
    let se = (p * (1.0 - p) / (n * (n - 1) * draws.len()) as f64).sqrt();
    assert!((mean - p).abs() < 5.0 * se, "{mean} vs {p}");
}
