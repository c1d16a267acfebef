use nalgebra::DMatrix;
use proptest::prelude::*;
use simplexmix::spectra::{compatibility_constant, minor_eigen_extremes, restricted_eigenvalue, ConeSpec};
use simplexmix::{GramMatrix, SeedSpec};

fn seed() -> SeedSpec {
    SeedSpec::new(0, 0, "spectra-test")
}

fn gram(rows: usize, entries: &[f64]) -> GramMatrix {
    GramMatrix::from_matrix(DMatrix::from_row_slice(rows, rows, entries)).unwrap()
}

fn random_psd(k: usize, s: u64) -> GramMatrix {
    use rand::Rng;
    let mut rng = SeedSpec::new(s, 0, "psd").rng();
    let b = DMatrix::from_fn(k, k + 2, |_, _| rng.random::<f64>() - 0.5);
    let m = &b * b.transpose();
    GramMatrix::from_matrix((&m + m.transpose()) * 0.5).unwrap()
}

#[test]
fn scaled_identity_constants_equal_the_scale() {
    let a = GramMatrix::from_matrix(DMatrix::identity(8, 8) * 0.25).unwrap();
    for c in [0.0, 1.0, 3.0] {
        let kb = compatibility_constant(&a, &ConeSpec::kappa_bar(vec![1, 4], c), 8, &seed()).unwrap();
        assert!((kb.search_upper - 0.25).abs() < 1e-9, "c = {c}: {}", kb.search_upper);
        if c > 0.0 {
            let k = compatibility_constant(&a, &ConeSpec::kappa(vec![1, 4], c), 8, &seed()).unwrap();
            assert!((k.search_upper - 0.25).abs() < 1e-9, "c = {c}: {}", k.search_upper);
        }
        let re = restricted_eigenvalue(&a, 2, c, 4, &seed()).unwrap();
        assert!((re.search_upper - 0.25).abs() < 1e-9);
    }
}

#[test]
fn diagonal_two_by_two() {
    let a = gram(2, &[1.0, 0.0, 0.0, 4.0]);
    let one = compatibility_constant(&a, &ConeSpec::kappa_bar(vec![0], 1.0), 4, &seed()).unwrap();
    assert!((one.search_upper - 1.0).abs() < 1e-9);
    assert_eq!(one.certified_lower, 1.0);
    // Harmonic combination: 2 * (1 * 4) / (1 + 4).
    let both = compatibility_constant(&a, &ConeSpec::kappa_bar(vec![0, 1], 0.0), 4, &seed()).unwrap();
    assert!((both.search_upper - 1.6).abs() < 1e-9);
    let re = restricted_eigenvalue(&a, 1, 2.0, 4, &seed()).unwrap();
    assert!((re.search_upper - 1.0).abs() < 1e-9);
}

#[test]
fn kappa_bar_matches_a_grid_search() {
    for s in 0..5 {
        let a = random_psd(3, s);
        let m = a.matrix();
        let q = |v: [f64; 3]| -> f64 {
            (0..3).map(|i| (0..3).map(|j| v[i] * m[(i, j)] * v[j]).sum::<f64>()).sum()
        };
        // J = {0, 1}, c = 1, normalized so that |v_0| + |v_1| = 1.
        let steps = 400;
        let mut grid_min = f64::INFINITY;
        for sign in [1.0, -1.0] {
            for i in 0..=steps {
                let t = i as f64 / steps as f64;
                for l in 0..=steps {
                    let v2 = -1.0 + 2.0 * l as f64 / steps as f64;
                    grid_min = grid_min.min(2.0 * q([t, sign * (1.0 - t), v2]));
                }
            }
        }
        let est = compatibility_constant(&a, &ConeSpec::kappa_bar(vec![0, 1], 1.0), 8, &seed()).unwrap();
        assert!(est.search_upper <= grid_min + 1e-9, "{s}: {} vs {grid_min}", est.search_upper);
        assert!(est.search_upper >= grid_min - 1e-2, "{s}: {} vs {grid_min}", est.search_upper);
        assert!(est.certified_lower <= est.search_upper + 1e-12);
    }
}

#[test]
fn diagonal_minor_extremes() {
    let a = gram(3, &[1.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 9.0]);
    for k in 1..=3 {
        let e = minor_eigen_extremes(&a, k).unwrap();
        assert!((e.lambda_min - 1.0).abs() < 1e-12 && (e.lambda_max - 9.0).abs() < 1e-12);
        assert!(e.exhaustive);
    }
    assert_eq!(minor_eigen_extremes(&a, 2).unwrap().minors_examined, 3);
    assert!(minor_eigen_extremes(&a, 0).is_err());
    assert!(minor_eigen_extremes(&a, 4).is_err());
}

#[test]
fn cone_chain_on_random_matrices() {
    for s in 0..8 {
        let a = random_psd(6, 100 + s);
        let j = vec![0, 3];
        let kb3 = compatibility_constant(&a, &ConeSpec::kappa_bar(j.clone(), 3.0), 16, &seed()).unwrap();
        let kb1 = compatibility_constant(&a, &ConeSpec::kappa_bar(j.clone(), 1.0), 16, &seed()).unwrap();
        let k3 = compatibility_constant(&a, &ConeSpec::kappa(j.clone(), 3.0), 16, &seed()).unwrap();
        let tol = 1e-6 * (1.0 + k3.search_upper);
        assert!(kb3.search_upper <= k3.search_upper + tol, "{s}");
        assert!(k3.search_upper <= 2.25 * kb1.search_upper + tol, "{s}");
        assert!(kb3.search_upper <= kb1.search_upper + tol, "{s}");
    }
}

#[test]
fn invalid_cone_specs() {
    let a = random_psd(4, 1);
    assert!(compatibility_constant(&a, &ConeSpec::kappa(vec![0], 0.0), 4, &seed()).is_err());
    assert!(compatibility_constant(&a, &ConeSpec::kappa_bar(vec![], 1.0), 4, &seed()).is_err());
    assert!(compatibility_constant(&a, &ConeSpec::kappa_bar(vec![4], 1.0), 4, &seed()).is_err());
    assert!(compatibility_constant(&a, &ConeSpec::kappa_bar(vec![1, 1], 1.0), 4, &seed()).is_err());
    assert!(restricted_eigenvalue(&a, 5, 1.0, 4, &seed()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constants_are_homogeneous(s in 0u64..500, t in 0.1f64..10.0) {
        let a = random_psd(5, s);
        let spec = ConeSpec::kappa_bar(vec![0, 2], 1.0);
        let x = compatibility_constant(&a, &spec, 8, &seed()).unwrap().search_upper;
        let y = compatibility_constant(&a.scaled(t), &spec, 8, &seed()).unwrap().search_upper;
        prop_assert!((y - t * x).abs() <= 1e-6 * (1.0 + t * x));
    }

    #[test]
    fn restricted_eigenvalue_is_monotone(s in 0u64..500) {
        let a = random_psd(5, s);
        let r = |s_: usize, c: f64| restricted_eigenvalue(&a, s_, c, 4, &seed()).unwrap();
        let small = r(1, 1.0);
        let wider = r(1, 3.0);
        prop_assert!(wider.search_upper <= small.search_upper + 1e-6 * (1.0 + small.search_upper));
        prop_assert!(small.certified_lower <= small.search_upper + 1e-12);
        prop_assert!(small.certified_lower >= 0.0);
    }
}
