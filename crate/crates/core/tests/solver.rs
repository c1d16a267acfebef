use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use simplexmix::sampling::sample_mixture;
use simplexmix::solver::{
    bar_ell, bar_ell_second, minimize, negative_log_likelihood, nll_gradient, Loss, Objective,
};
use simplexmix::{
    fit_mle, fit_mle_surrogate, sine_dictionary, EvaluationMatrix, Method, SeedSpec, SolverOptions, WeightVector,
};

fn random_weights(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Sparse random truth over a sine dictionary, sampled with the given seed.
fn instance(k: usize, n: usize, seed: u64) -> EvaluationMatrix {
    let dict = sine_dictionary(k).unwrap();
    let mut rng = SeedSpec::new(seed, 0, "instance-weights").rng();
    let mut w = random_weights(k, &mut rng);
    for (j, v) in w.iter_mut().enumerate() {
        if j % 3 != 0 {
            *v *= 0.1;
        }
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    let xs = sample_mixture(&dict, &w, n, &SeedSpec::new(seed, 0, "instance")).unwrap();
    dict.evaluation_matrix(&xs).unwrap()
}

#[test]
fn nll_direct_evaluation() {
    let z = EvaluationMatrix::from_rows(&[vec![1.5, 1.0]]).unwrap();
    let v = negative_log_likelihood(&z, &WeightVector::new(vec![1.0, 0.0]).unwrap()).unwrap();
    assert!((v + 1.5f64.ln()).abs() < 1e-15);
    assert!((v + 0.405465).abs() < 1e-6);
}

#[test]
fn gradient_matches_finite_differences() {
    let h = 1e-6;
    for seed in 0..5 {
        let z = instance(7, 200, seed);
        let mut rng = SeedSpec::new(seed, 0, "fd").rng();
        let w = random_weights(7, &mut rng);
        let g = nll_gradient(&z, &WeightVector::new(w.clone()).unwrap()).unwrap();
        let obj = Objective::empirical(&z, Loss::NegLog).unwrap();
        for j in 0..7 {
            let mut a = w.clone();
            let mut b = w.clone();
            a[j] += h;
            b[j] -= h;
            let fd = (obj.value(&a) - obj.value(&b)) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-6, "coordinate {j}: {fd} vs {}", g[j]);
        }
    }
}

#[test]
fn single_component_converges_at_once() {
    let z = instance(1, 50, 3);
    let r = fit_mle(&z, &SolverOptions::default()).unwrap();
    assert_eq!(r.weights.as_slice(), &[1.0]);
    assert_eq!(r.certificate_gap, 0.0);
    assert!(r.iterations <= 1);
}

#[test]
fn duplicated_component_objective() {
    let base = instance(3, 300, 9);
    let m = base.matrix();
    let z = EvaluationMatrix::from_matrix(DMatrix::from_fn(m.nrows(), 2, |i, _| m[(i, 0)])).unwrap();
    let r = fit_mle(&z, &SolverOptions::default()).unwrap();
    let l1 = negative_log_likelihood(&z, &WeightVector::vertex(2, 0)).unwrap();
    assert!((r.objective - l1).abs() <= 1e-8);
}

/// Frank-Wolfe and mirror descent on 50 random instances, and the strong-convexity
/// descent inequality at 100 random comparison points each.
#[test]
fn methods_agree_and_descent_inequality_holds() {
    let mut rng = SeedSpec::new(2024, 0, "solver-instances").rng();
    for inst in 0..50u64 {
        let k = rng.random_range(2..=64);
        let n = rng.random_range(50..=4000);
        let z = instance(k, n, 100 + inst);
        let fw = fit_mle(&z, &SolverOptions::default()).unwrap();
        let md = fit_mle(&z, &SolverOptions::default().with_method(Method::MirrorDescent)).unwrap();
        assert!(fw.certificate_gap <= 1e-8, "instance {inst}: gap {}", fw.certificate_gap);
        assert!((fw.objective - md.objective).abs() <= 1e-6, "instance {inst}");
        let obj = Objective::empirical(&z, Loss::NegLog).unwrap();
        let m_upper = 1.5f64;
        for _ in 0..100 {
            let p = random_weights(k, &mut rng);
            let d: Vec<f64> = fw.weights.as_slice().iter().zip(&p).map(|(a, b)| a - b).collect();
            let zd = z.apply(&d);
            let q: f64 = zd.iter().map(|v| v * v).sum();
            let rhs = obj.value(&p) - q / (2.0 * m_upper * m_upper * n as f64) + fw.certificate_gap;
            assert!(fw.objective <= rhs + 1e-12, "instance {inst}");
        }
    }
}

#[test]
fn frank_wolfe_trace_is_monotone() {
    let z = instance(20, 1000, 77);
    let r = fit_mle(&z, &SolverOptions::default().with_trace()).unwrap();
    let t = r.trace.unwrap();
    assert!(!t.is_empty());
    for w in t.windows(2) {
        assert!(w[1] <= w[0] + 1e-15);
    }
    let json = fit_mle(&z, &SolverOptions::default().with_trace()).unwrap().to_json().unwrap();
    assert!(json.contains("\"trace\""));
}

#[test]
fn surrogate_branches() {
    let mu = 0.3;
    let (v, d) = bar_ell(mu, mu).unwrap();
    assert_eq!(v, 0.0);
    assert!((d + 1.0 / mu).abs() < 1e-12);
    let (vl, dl) = bar_ell(mu - 1e-9, mu).unwrap();
    assert!(vl.abs() < 1e-8 && (dl + 1.0 / mu).abs() < 1e-7);
    assert!((bar_ell(2.0 * mu, mu).unwrap().0 + 2f64.ln()).abs() < 1e-15);
    let m_upper = 1.5;
    for i in 1..100 {
        let u = m_upper * i as f64 / 100.0;
        let s = bar_ell_second(u, mu).unwrap();
        assert!(s >= m_upper.powi(-2) - 1e-12 && s <= mu.powi(-2) + 1e-12, "u = {u}");
    }
}

#[test]
fn surrogate_above_the_floor_is_a_shifted_likelihood() {
    let z = instance(6, 800, 5);
    let mu = 0.4; // below m = 1/2
    let a = fit_mle(&z, &SolverOptions::default()).unwrap();
    let b = fit_mle_surrogate(&z, mu, &SolverOptions::default()).unwrap();
    assert!((b.objective - (a.objective + mu.ln())).abs() <= 1e-8);
    let dist: f64 = a.weights.as_slice().iter().zip(b.weights.as_slice()).map(|(x, y)| (x - y).abs()).sum();
    assert!(dist < 1e-3, "{dist}");
    assert_eq!(b.surrogate_coincides, Some(true));
}

#[test]
fn surrogate_above_the_ceiling_still_converges() {
    let z = instance(6, 800, 6);
    let r = fit_mle_surrogate(&z, 2.0, &SolverOptions::default()).unwrap();
    assert!(r.converged && r.certificate_gap <= 1e-8);
    assert_eq!(r.surrogate_coincides, Some(false));
}

#[test]
fn vanishing_component_with_threshold() {
    // Component 0 is zero on the first half of the sample.
    let n = 400;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) / n as f64;
            let a = if x < 0.5 { 0.0 } else { 2.0 };
            vec![a, 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin(), 1.0]
        })
        .collect();
    let z = EvaluationMatrix::from_rows(&rows).unwrap();
    assert!(fit_mle(&z, &SolverOptions::default()).is_err());
    let r = fit_mle_surrogate(&z, 0.05, &SolverOptions::default()).unwrap();
    assert!(r.certificate_gap <= 1e-8);
    let u = z.apply(r.weights.as_slice());
    let min_u = u.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(r.sample_feasible, min_u >= 0.05);
    assert_eq!(r.active_constraint, (min_u - 0.05).abs() <= 1e-9);
}

#[test]
fn constrained_fit_respects_the_floor() {
    let n = 300;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) / n as f64;
            vec![if x < 0.3 { 0.05 } else { 1.4 }, 1.0, 0.5 + x]
        })
        .collect();
    let z = EvaluationMatrix::from_rows(&rows).unwrap();
    let opts = SolverOptions::default().with_mu(0.6);
    let r = fit_mle(&z, &opts).unwrap();
    let u = z.apply(r.weights.as_slice());
    assert!(u.iter().all(|v| *v >= 0.6 - 1e-9));
    assert!(r.sample_feasible);
    assert!(r.certificate_gap <= 1e-8);
    // Mirror descent has no projection onto the floor and refuses binding constraints.
    assert!(fit_mle(&z, &opts.clone().with_method(Method::MirrorDescent)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fits_stay_on_the_simplex(k in 1usize..12, n in 5usize..300, seed in 0u64..1000) {
        let z = instance(k, n, seed);
        let r = fit_mle(&z, &SolverOptions::default()).unwrap();
        let w = r.weights.as_slice();
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(r.certificate_gap >= -1e-12);
        prop_assert!(!r.converged || r.certificate_gap <= 1e-8);
        let obj = Objective::empirical(&z, Loss::NegLog).unwrap();
        for j in 0..k {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            prop_assert!(r.objective <= obj.value(&e) + 1e-12);
        }
    }

    #[test]
    fn minimize_matches_fit(k in 2usize..8, seed in 0u64..1000) {
        let z = instance(k, 200, seed);
        let obj = Objective::empirical(&z, Loss::NegLog).unwrap();
        let a = minimize(&obj, &SolverOptions::default()).unwrap();
        let b = fit_mle(&z, &SolverOptions::default()).unwrap();
        prop_assert_eq!(a.weights, b.weights);
    }
}
