use nalgebra::DMatrix;
use proptest::prelude::*;
use simplexmix::sampling::sample;
use simplexmix::{
    empirical_gram, normalize_tabulated, sine_dictionary, Density, DensityKind, Dictionary, GramMatrix, Reference,
    SeedSpec, Simpson,
};

#[test]
fn sine_gram_is_an_eighth_of_the_identity() {
    let dict = sine_dictionary(8).unwrap();
    let g = dict.population_gram(4097, Reference::Lebesgue).unwrap();
    let want = DMatrix::<f64>::identity(8, 8) / 8.0;
    assert!((g.matrix() - want).amax() <= 1e-10);
}

#[test]
fn sine_bounds_and_ratio() {
    let dict = sine_dictionary(5).unwrap();
    assert_eq!(dict.lower(), 0.5);
    assert_eq!(dict.upper(), 1.5);
    assert_eq!(dict.ratio(), 3.0);
}

#[test]
fn tabulated_grid_is_rescaled() {
    let d = normalize_tabulated(&[1.0, 2.0, 1.0]).unwrap();
    match d.kind() {
        DensityKind::Tabulated { values } => {
            for (a, b) in values.iter().zip([2.0 / 3.0, 4.0 / 3.0, 2.0 / 3.0]) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        other => panic!("{other:?}"),
    }
    assert!(d.normalization_error(&Simpson::default()) < 1e-9);
    assert!(normalize_tabulated(&[1.0, 0.0, 1.0]).is_err());
    assert!(normalize_tabulated(&[1.0]).is_err());
}

#[test]
fn evaluation_row_at_a_quarter() {
    let dict = sine_dictionary(2).unwrap();
    let z = dict.evaluation_matrix(&[0.25]).unwrap();
    assert!((z.get(0, 0) - 1.5).abs() < 1e-15);
    assert!((z.get(0, 1) - 1.0).abs() < 1e-15);
    assert!(dict.evaluation_matrix(&[1.5]).is_err());
}

#[test]
fn empirical_gram_approaches_the_population_gram() {
    let dict = sine_dictionary(4).unwrap();
    let xs = sample(&Density::uniform(), 100_000, &SeedSpec::new(1, 0, "gram")).unwrap();
    let z = dict.evaluation_matrix(&xs).unwrap();
    let emp = empirical_gram(&z, &dict.centering_values(&xs)).unwrap();
    let pop = dict.population_gram(4097, Reference::Lebesgue).unwrap();
    assert!((emp.matrix() - pop.matrix()).amax() <= 0.02);
}

#[test]
fn density_reference_reweights_the_gram() {
    let dict = sine_dictionary(3).unwrap();
    let truth = dict.mixture_density(&[1.0, 0.0, 0.0]).unwrap();
    let g = dict.population_gram(4097, Reference::Density(&truth)).unwrap();
    // integral of sin^2(2 pi x)/4 * (1 + sin(2 pi x)/2) = 1/8 since the cubic term integrates to zero.
    assert!((g.get(0, 0) - 0.125).abs() < 1e-10);
    // sin^2(a) sin(2a) = 2 sin^3(a) cos(a) has zero mean over a period.
    assert!(g.get(0, 1).abs() < 1e-10);
    assert!((g.get(1, 1) - 0.125).abs() < 1e-10);
}

#[test]
fn dictionary_json_roundtrip() {
    let a = sine_dictionary(6).unwrap();
    assert_eq!(Dictionary::from_json(&a.to_json().unwrap()).unwrap(), a);
    let b = Dictionary::with_components(vec![
        normalize_tabulated(&[1.0, 2.0, 1.0]).unwrap(),
        Density::sine(3, 0.25).unwrap(),
    ])
    .unwrap();
    assert_eq!(Dictionary::from_json(&b.to_json().unwrap()).unwrap(), b);
    let bad = a.to_json().unwrap().replace("\"K\": 6", "\"K\": 5");
    assert!(Dictionary::from_json(&bad).is_err());
}

#[test]
fn gram_from_matrix_rejects_asymmetry() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
    assert!(GramMatrix::from_matrix(m).is_err());
}

proptest! {
    #[test]
    fn components_stay_within_bounds(k in 1usize..20, x in 0.0f64..=1.0) {
        let dict = sine_dictionary(k).unwrap();
        for c in dict.components() {
            let v = c.value(x);
            prop_assert!(v >= dict.lower() - 1e-15 && v <= dict.upper() + 1e-15);
        }
    }

    #[test]
    fn empirical_gram_is_symmetric_psd(k in 1usize..10, n in 1usize..200, seed in 0u64..1000) {
        let dict = sine_dictionary(k).unwrap();
        let xs = sample(&Density::uniform(), n, &SeedSpec::new(seed, 0, "psd")).unwrap();
        let z = dict.evaluation_matrix(&xs).unwrap();
        let g = empirical_gram(&z, &dict.centering_values(&xs)).unwrap();
        prop_assert!(g.asymmetry() <= 1e-12);
        prop_assert!(g.min_eigenvalue() >= -1e-12);
    }

    #[test]
    fn tabulated_grids_normalize(grid in prop::collection::vec(0.01f64..10.0, 2..40)) {
        let d = normalize_tabulated(&grid).unwrap();
        prop_assert!(d.normalization_error(&Simpson::new(4097).unwrap()) < 1e-4);
        let trap: f64 = match d.kind() {
            DensityKind::Tabulated { values } => {
                let h = 1.0 / (values.len() - 1) as f64;
                h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[values.len() - 1]))
            }
            _ => unreachable!(),
        };
        prop_assert!((trap - 1.0).abs() < 1e-12);
    }
}
