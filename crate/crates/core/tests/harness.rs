use simplexmix::bounds::TheoremId;
use simplexmix::harness::*;
use simplexmix::sampling::sample_mixture;
use simplexmix::solver::{fit_mle, Objective};
use simplexmix::{sine_dictionary, SeedSpec, SolverOptions};

fn small(scenario: Scenario) -> ExperimentConfig {
    ExperimentConfig {
        scenario,
        n_values: vec![200, 400],
        k: 8,
        sparsity: 2,
        replications: 2,
        quadrature_nodes: 1025,
        spectra_restarts: 4,
        ..Default::default()
    }
}

#[test]
fn one_size_one_replication_gives_one_row_per_bound() {
    let mut c = small(Scenario::WellSpecifiedSparse);
    c.n_values = vec![300];
    c.replications = 1;
    c.bounds = vec![
        BoundRequest::new(TheoremId::BoundDevTwo, 0.05),
        BoundRequest::new(TheoremId::BoundDeviation, 0.05),
        "upper".parse().unwrap(),
    ];
    let rows = run_experiment(&c, Some(1)).unwrap();
    assert_eq!(rows.len(), 3);
    let labels: Vec<_> = rows.iter().map(|r| r.bound_id.as_str()).collect();
    assert_eq!(labels, ["boundDevTwo@0.05", "boundDeviation@0.05", "upper"]);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(Scenario::WellSpecifiedSparse);
    c.replications = 3;
    c.output = Some(dir.path().join("a.csv"));
    run_experiment(&c, Some(1)).unwrap();
    c.output = Some(dir.path().join("b.csv"));
    run_experiment(&c, Some(3)).unwrap();
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn rows_come_in_size_then_replication_order() {
    let rows = run_experiment(&small(Scenario::WellSpecifiedSparse), Some(2)).unwrap();
    let keys: Vec<_> = rows.iter().map(|r| (r.n, r.replication)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn csv_roundtrip_is_lossless() {
    let rows = run_experiment(&small(Scenario::Misspecified), Some(1)).unwrap();
    let mut buf = Vec::new();
    write_rows_to(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), FIELDS.join(","));
    let back = read_rows_from(buf.as_slice()).unwrap();
    assert_eq!(back.len(), rows.len());
    for (a, b) in rows.iter().zip(&back) {
        assert_eq!(a.excess_kl.to_bits(), b.excess_kl.to_bits());
        assert_eq!(a.bound_rhs.to_bits(), b.bound_rhs.to_bits());
        assert_eq!(a.bound_satisfied, b.bound_satisfied);
        assert!(b.zeta_estimate.is_nan());
    }
}

#[test]
fn unwritable_output_fails_before_computing() {
    let mut c = small(Scenario::WellSpecifiedSparse);
    c.output = Some("/nonexistent-dir/x/y.csv".into());
    c.n_values = vec![1_000_000_000];
    let err = run_experiment(&c, Some(1)).unwrap_err();
    assert!(matches!(err, simplexmix::Error::Io(_)), "{err}");
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = small(Scenario::WellSpecifiedSparse);
    c.n_values = vec![400, 200];
    assert!(c.validate().is_err());
    let mut c = small(Scenario::WellSpecifiedSparse);
    c.replications = 0;
    assert!(c.validate().is_err());
    let c = small(Scenario::VanishingComponent);
    assert!(c.validate().is_err());
    assert!(ExperimentConfig::from_json(r#"{"unknown_field": 1}"#).is_err());
}

#[test]
fn config_json_roundtrip() {
    let mut c = small(Scenario::LowerBoundAudit);
    c.bounds = vec!["boundDevTwo@0.1".parse().unwrap()];
    let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn every_scenario_runs_and_keeps_row_invariants() {
    for scenario in [
        Scenario::WellSpecifiedSparse,
        Scenario::WellSpecifiedDense,
        Scenario::Misspecified,
        Scenario::VanishingComponent,
        Scenario::LowerBoundAudit,
    ] {
        let mut c = small(scenario);
        if scenario == Scenario::VanishingComponent {
            c.mu = 0.05;
        }
        c.compute_zeta = scenario == Scenario::Misspecified;
        let rows = run_experiment(&c, Some(1)).unwrap_or_else(|e| panic!("{scenario}: {e}"));
        assert_eq!(rows.len(), 2 * 2 * c.bound_list().len(), "{scenario}");
        for r in &rows {
            assert!(r.excess_kl >= -1e-9, "{scenario}: {r:?}");
            assert!(r.gap <= 1e-8, "{scenario}: {r:?}");
            assert!(r.bound_rhs >= 0.0);
            assert_eq!(r.scenario, scenario.to_string());
            if r.bound_satisfied && !r.bound_id.starts_with("boundDevSix") {
                assert!(r.excess_kl <= r.bound_rhs);
            }
            assert_eq!(r.zeta_estimate.is_nan(), !c.compute_zeta);
        }
    }
}

#[test]
fn baseline_is_dominated_by_the_simplex_fit() {
    let dict = sine_dictionary(6).unwrap();
    let w = [0.3, 0.0, 0.5, 0.0, 0.2, 0.0];
    for rep in 0..10 {
        let xs = sample_mixture(&dict, &w, 500, &SeedSpec::new(4, rep, "baseline")).unwrap();
        let z = dict.evaluation_matrix(&xs).unwrap();
        let base = baseline_model_selection(&z).unwrap();
        let fit = fit_mle(&z, &SolverOptions::default()).unwrap();
        assert!(fit.objective <= base.objective + fit.certificate_gap);
        let obj = Objective::empirical(&z, simplexmix::solver::Loss::NegLog).unwrap();
        for j in 0..6 {
            let mut e = vec![0.0; 6];
            e[j] = 1.0;
            assert!(base.objective <= obj.value(&e) + 1e-12);
        }
    }
}

#[test]
fn baseline_ties_go_to_the_lowest_index() {
    let z = simplexmix::EvaluationMatrix::from_rows(&[vec![1.0, 1.2, 1.2], vec![1.0, 0.9, 0.9]]).unwrap();
    let r = baseline_model_selection(&z).unwrap();
    // log(1.2 * 0.9) > 0, so columns 1 and 2 beat column 0 and tie with each other.
    assert_eq!(r.weights.as_slice(), &[0.0, 1.0, 0.0]);
}

#[test]
fn baseline_finds_the_true_component() {
    let dict = sine_dictionary(8).unwrap();
    let mut w = vec![0.0; 8];
    w[2] = 1.0;
    let hits = (0..50)
        .filter(|&rep| {
            let xs = sample_mixture(&dict, &w, 4000, &SeedSpec::new(11, rep, "model-selection")).unwrap();
            let z = dict.evaluation_matrix(&xs).unwrap();
            baseline_model_selection(&z).unwrap().weights.as_slice()[2] == 1.0
        })
        .count();
    assert!(hits >= 45, "{hits} of 50");
}

#[test]
fn sparse_median_excess_decreases_along_the_grid() {
    let c = ExperimentConfig {
        scenario: Scenario::WellSpecifiedSparse,
        n_values: vec![500, 1000, 2000, 4000, 8000],
        k: 16,
        sparsity: 2,
        replications: 50,
        bounds: vec!["upper".parse().unwrap()],
        ..Default::default()
    };
    let rows = run_experiment(&c, None).unwrap();
    let fit = rate_regression(&rows, Statistic::Median).unwrap();
    for w in fit.points.windows(2) {
        assert!(w[1].1 < w[0].1, "{:?}", fit.points);
    }
}
