use simplexmix::bounds::MixtureGrid;
use simplexmix::lower_bounds::*;
use simplexmix::spectra::binomial;
use simplexmix::{sine_dictionary, SeedSpec};

fn seed() -> SeedSpec {
    SeedSpec::new(0, 0, "packing-test")
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[test]
fn four_singletons() {
    let p = vg_packing(4, 1, &seed()).unwrap();
    assert_eq!(p.len(), 4);
    assert!(p.exhaustive);
    assert_eq!(p.min_pairwise_l1, 2.0);
    assert!(verify_packing(&p));
}

#[test]
fn twelve_choose_three_is_separated() {
    let p = vg_packing(12, 3, &seed()).unwrap();
    assert!(p.len() >= 4);
    let mut min = usize::MAX;
    for (i, a) in p.members.iter().enumerate() {
        assert_eq!(a.iter().map(|&b| b as usize).sum::<usize>(), 3);
        for b in &p.members[i + 1..] {
            min = min.min(hamming(a, b));
        }
    }
    assert!(min as f64 >= 1.0);
    assert_eq!(min as f64, p.min_pairwise_l1);
    assert!((p.achieved_log_cardinality - (p.len() as f64).ln()).abs() < 1e-12);
}

#[test]
fn packing_rejects_bad_shapes() {
    assert!(vg_packing(3, 1, &seed()).is_err());
    assert!(vg_packing(8, 5, &seed()).is_err());
    assert!(vg_packing(8, 0, &seed()).is_err());
}

#[test]
fn sparse_family_separation() {
    let p = vg_packing(8, 2, &seed()).unwrap();
    let fam = sparse_hypotheses(&p, 0.5).unwrap();
    assert_eq!(fam.len(), p.len());
    for m in &fam.members {
        assert!((m.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.support(0.0).len() <= 4);
    }
    for a in 1..fam.len() {
        for b in a + 1..fam.len() {
            let h = hamming(&p.members[a], &p.members[b]) as f64;
            let d = l1(fam.members[a].as_slice(), fam.members[b].as_slice());
            assert!((d - 0.25 * h).abs() < 1e-12);
            if h == 2.0 {
                assert!((d - 0.5).abs() < 1e-12);
            }
        }
    }
    let flat = sparse_hypotheses(&p, 0.0).unwrap();
    assert!(flat.members.iter().all(|m| m == &flat.members[0]));
    assert!(sparse_hypotheses(&p, 1.5).is_err());
}

#[test]
fn shifted_family_layout() {
    let p = vg_packing(8, 4, &seed()).unwrap();
    let gamma = 0.2;
    let fam = shifted_hypotheses(&p, gamma).unwrap();
    for m in &fam.members {
        let w = m.as_slice();
        assert_eq!(w.len(), 9);
        assert_eq!(w[0], 1.0 - gamma);
        assert!((w[1..].iter().sum::<f64>() - gamma).abs() < 1e-12);
    }
    for a in 0..fam.len() {
        for b in a + 1..fam.len() {
            let h = hamming(&p.members[a], &p.members[b]) as f64;
            let d = l1(fam.members[a].as_slice(), fam.members[b].as_slice());
            assert!((d - gamma / 4.0 * h).abs() < 1e-12);
        }
    }
    let tiny = shifted_hypotheses(&p, 1e-12).unwrap();
    assert!((tiny.members[0].as_slice()[0] - 1.0).abs() < 1e-11);
    assert!(shifted_hypotheses(&p, 0.0).is_err());
}

#[test]
fn degenerate_families_fail() {
    let dict = sine_dictionary(8).unwrap();
    let p = vg_packing(8, 2, &seed()).unwrap();
    let flat = sparse_hypotheses(&p, 0.0).unwrap();
    let r = fano_check(&flat, &dict, 1000, 1025).unwrap();
    assert_eq!(r.min_pairwise_kl, 0.0);
    assert!(!r.condition_separation && !r.passed);
    let mut same = flat.clone();
    same.members.truncate(1);
    assert!(fano_check(&same, &dict, 1000, 1025).is_err());
}

#[test]
fn product_divergence_tensorizes() {
    let dict = sine_dictionary(8).unwrap();
    let p = vg_packing(8, 2, &seed()).unwrap();
    let fam = sparse_hypotheses(&p, 0.3).unwrap();
    let r = fano_check(&fam, &dict, 10_000, 1025).unwrap();
    assert!((r.product_kl - r.product_kl_chain).abs() <= 1e-12 * (1.0 + r.product_kl));
    assert!((r.s - r.min_pairwise_kl / 2.0).abs() < 1e-15);
}

#[test]
fn sandwich_brackets_family_divergences() {
    let dict = sine_dictionary(8).unwrap();
    let p = vg_packing(8, 2, &seed()).unwrap();
    let fam = sparse_hypotheses(&p, 0.4).unwrap();
    let grid = MixtureGrid::new(&dict, 4097).unwrap();
    for a in &fam.members {
        for b in &fam.members {
            assert!(grid.sandwich(a.as_slice(), b.as_slice()).holds());
        }
    }
}

#[test]
fn preset_passes_both_conditions() {
    let dict = sine_dictionary(8).unwrap();
    let preset = fano_preset(&dict, 2, 10_000, 4097, &SeedSpec::new(0, 0, "preset")).unwrap();
    assert_eq!(preset.d, 2);
    assert!(preset.report.passed, "{:?}", preset.report);
    assert!(preset.report.condition_separation && preset.report.condition_closeness);
    assert!(preset.packing.len() >= 4);
    assert!((preset.lambda_max - 0.125).abs() < 1e-9);
}

#[test]
fn minimax_arithmetic_and_limits() {
    let r = minimax_rate(10_000, 64, 0.1, 2).unwrap();
    // sqrt(1e-6 log 7.4) + min(2 log 33 / 1e4, sqrt(log 1.64 / 1e4))
    assert!((r.rate - 0.002114038236991614).abs() < 1e-15);
    assert!((r.upper - 0.002871110597009552).abs() < 1e-15);
    let near_zero = minimax_rate(10_000, 64, 1e-9, 2).unwrap();
    let second = (2.0 * 33f64.ln() / 1e4).min((1.64f64.ln() / 1e4).sqrt());
    assert!((near_zero.rate - second).abs() < 1e-8);
    let rates: Vec<f64> = (1..=64).map(|d| minimax_rate(10_000, 64, 0.1, d).unwrap().rate).collect();
    assert!(rates.windows(2).all(|w| w[1] >= w[0] - 1e-15));
    assert!(minimax_rate(100, 8, 1.0, 2).is_err());
    assert!(minimax_rate(100, 8, 0.5, 9).is_err());
}

#[test]
fn small_exhaustive_packings_verify() {
    for m in 4..=20 {
        for k in 1..=m / 2 {
            if binomial(m, k) > 2_000 {
                continue;
            }
            let p = vg_packing(m, k, &SeedSpec::new(1, 0, "small")).unwrap();
            assert!(p.exhaustive);
            assert!(verify_packing(&p), "M = {m}, k = {k}");
            assert!(p.min_pairwise_l1 >= p.threshold());
        }
    }
}
