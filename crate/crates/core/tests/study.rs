use srfm_ergm::mixture::{fit_cem, CemControls, RefitPolicy};
use srfm_ergm::report::FitReport;
use srfm_ergm::Error;
use srfm_ergm::sampler::{simulate, Init, SamplerControls};
use srfm_ergm::study::{
    generate_covariates, run_condition, run_size_sweep, CovariateGeneratorSpec, StudyCondition, StudyOptions,
};

fn small(name: &str, n_nodes: usize) -> StudyCondition {
    StudyCondition {
        n_nodes,
        ..StudyCondition::builtin(name).unwrap()
    }
}

fn quick() -> StudyOptions {
    StudyOptions {
        n_replications: Some(2),
        n_starts: 3,
        ..StudyOptions::default()
    }
}

#[test]
fn every_builtin_condition_loads() {
    for name in StudyCondition::builtin_names() {
        let c = StudyCondition::builtin(name).unwrap();
        assert_eq!(c.generator.len(), 17, "{name}");
        assert_eq!(c.n_nodes, 151);
        let theta = c.generator_theta().unwrap();
        assert_eq!(theta.len(), c.generator_spec().unwrap().layout().n_params());
    }
    let err = StudyCondition::builtin("6").unwrap_err().to_string();
    assert!(err.contains("4+"), "{err}");
}

#[test]
fn covariates_and_labels_are_shared_across_replications() {
    let cond = small("3+", 40);
    let a = run_condition(&cond, &quick(), None).unwrap();
    let b = run_condition(&cond, &StudyOptions { n_replications: Some(1), ..quick() }, None).unwrap();
    assert_eq!(a.covariates, b.covariates);
    assert_eq!(a.planted, b.planted);
    assert_eq!(a.planted.class_sizes(), vec![30, 10]);
    // Replication 0 does not depend on how many replications run.
    assert_eq!(a.records[..2], b.records[..]);
}

#[test]
fn condition_outputs_are_written() {
    let dir = tempfile::TempDir::new().unwrap();
    let cond = small("2", 40);
    let r = run_condition(&cond, &quick(), Some(dir.path())).unwrap();
    for f in ["bias_2_homogeneous.csv", "bias_2_heterogeneous.csv", "fits_2_heterogeneous.csv", "ari_2.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let homog = r.bias_for("homogeneous").unwrap();
    assert_eq!(homog.rows.len(), 18);
    assert!(r.summary().contains("condition 2"));
}

#[test]
fn sweep_rows_cover_sizes_and_replications() {
    let cond = small("3", 40);
    let a = run_size_sweep(&cond, &[30, 40], 2, &quick(), None).unwrap();
    assert_eq!(a.rows.len(), 4);
    let b = run_size_sweep(&cond, &[30, 40], 2, &quick(), None).unwrap();
    assert_eq!(a, b);
    assert!(run_size_sweep(&cond, &[40, 30], 2, &quick(), None).is_err());
}

#[test]
fn homogeneous_data_collapses_or_gives_close_class_blocks() {
    let cond = StudyCondition::builtin("5").unwrap();
    let options = StudyOptions::default();
    let cov = generate_covariates(
        &CovariateGeneratorSpec {
            n_nodes: cond.n_nodes,
            ..options.covariates.clone()
        },
        3,
    )
    .unwrap();
    let spec = cond.generator_spec().unwrap();
    let theta = cond.generator_theta().unwrap();
    assert_eq!(spec.n_classes, 1);
    let net = simulate(&spec, &cov, &theta, None, &SamplerControls::defaults(cond.n_nodes, 1, 5), Init::Empty)
        .unwrap()
        .remove(0);
    let fit_spec = cond.fit_spec(cond.mixture_fit().unwrap()).unwrap();
    let controls = CemControls {
        seed: 6,
        refit: RefitPolicy::Never,
        ..CemControls::default()
    };
    match fit_cem(&net, &cov, &fit_spec, &controls) {
        // Without class structure one class usually collapses on every start.
        Err(Error::AllStartsFailed(diagnostics)) => assert_eq!(diagnostics.len(), 20),
        Ok(fit) => {
            let report = FitReport::new(&fit_spec, &fit, false);
            let edges: Vec<_> = report.parameters.iter().filter(|p| p.term == "edges").collect();
            let truth = cond.generator_theta().unwrap()[0];
            let (a, b) = (edges[0].estimate, edges[1].estimate);
            assert!(a.min(b) <= truth + 0.5 && truth - 0.5 <= a.max(b), "{a} {b}");
        }
        Err(e) => panic!("{e}"),
    }
}
