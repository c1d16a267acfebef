//! Packing sets, hypothesis families and the Fano-type conditions behind the minimax lower bounds.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::MixtureGrid;
use crate::dictionary::{Dictionary, Reference};
use crate::error::{invalid, Error, Result};
use crate::sampling::SeedSpec;
use crate::solver::WeightVector;
use crate::spectra::{binomial, minor_eigen_extremes};

/// Enumerate every candidate when there are at most this many.
pub const EXHAUSTIVE_CANDIDATES: usize = 100_000;
/// Candidate budget otherwise.
pub const SAMPLED_CANDIDATES: usize = 1_000_000;
/// Sampled constructions stop once this many members are admitted.
pub const SAMPLED_MEMBER_CAP: usize = 1024;

/// Weight-`k` binary vectors of length `M` with pairwise `l1` distance at least `(k+1)/4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingSet {
    #[serde(rename = "M")]
    pub m: usize,
    pub k: usize,
    pub members: Vec<Vec<u8>>,
    pub min_pairwise_l1: f64,
    pub achieved_log_cardinality: f64,
    /// `log L / (k log(1 + eM/k))`.
    pub implied_c1: f64,
    pub exhaustive: bool,
    pub candidates_examined: usize,
}

impl PackingSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Smallest admissible distance, `(k+1)/4`.
    pub fn threshold(&self) -> f64 {
        (self.k + 1) as f64 / 4.0
    }

    fn masks(&self) -> Vec<u64> {
        self.members.iter().map(|v| to_mask(v)).collect()
    }
}

fn to_mask(v: &[u8]) -> u64 {
    v.iter().enumerate().filter(|(_, b)| **b != 0).fold(0u64, |m, (i, _)| m | (1u64 << i))
}

fn to_vector(mask: u64, m: usize) -> Vec<u8> {
    (0..m).map(|i| ((mask >> i) & 1) as u8).collect()
}

/// Calls `f` on every `s`-subset of the set bits of `mask`.
fn for_each_subset(mask: u64, s: usize, f: &mut impl FnMut(u64) -> bool) -> bool {
    let bits: Vec<u32> = (0..64).filter(|i| (mask >> i) & 1 == 1).collect();
    fn rec(bits: &[u32], s: usize, acc: u64, f: &mut impl FnMut(u64) -> bool) -> bool {
        if s == 0 {
            return f(acc);
        }
        if bits.len() < s {
            return true;
        }
        rec(&bits[1..], s - 1, acc | (1u64 << bits[0]), f) && rec(&bits[1..], s, acc, f)
    }
    rec(&bits, s, 0, f)
}

/// Even distance two weight-`k` vectors must reach.
fn required_distance(k: usize) -> u32 {
    2 * ((k as u32 + 8) / 8)
}

/// Exact minimum pairwise distance, or `None` when some pair is closer than `r`.
fn verified_min_distance(masks: &[u64], k: usize, r: u32) -> Option<u32> {
    if masks.len() < 2 {
        return Some(u32::MAX);
    }
    if masks.len() <= 3000 || k as u32 + 1 < r / 2 {
        let mut best = u32::MAX;
        for (i, a) in masks.iter().enumerate() {
            for b in &masks[i + 1..] {
                best = best.min((a ^ b).count_ones());
            }
        }
        return (best >= r).then_some(best);
    }
    // Two weight-k vectors are within distance 2t exactly when they share k - t ones.
    let collide = |t: u32| -> bool {
        let s = k - t as usize;
        let mut seen = HashSet::new();
        let mut hit = false;
        for &m in masks {
            let mut local = HashSet::new();
            for_each_subset(m, s, &mut |sub| {
                local.insert(sub);
                true
            });
            for sub in local {
                if !seen.insert(sub) {
                    hit = true;
                }
            }
            if hit {
                break;
            }
        }
        hit
    };
    if r >= 2 && collide(r / 2 - 1) {
        return None;
    }
    if collide(r / 2) {
        return Some(r);
    }
    let mut best = u32::MAX;
    for (i, a) in masks.iter().enumerate() {
        for b in &masks[i + 1..] {
            best = best.min((a ^ b).count_ones());
        }
    }
    Some(best)
}

fn all_weight_k(m: usize, k: usize) -> Vec<u64> {
    let mut out = Vec::new();
    if k == 0 {
        return vec![0];
    }
    let limit = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
    let mut v: u64 = (1u64 << k) - 1;
    loop {
        out.push(v);
        let t = v | (v - 1);
        let Some(next_t) = t.checked_add(1) else { break };
        let w = next_t | (((!t & next_t) - 1) >> (v.trailing_zeros() + 1));
        if w > limit || w < v {
            break;
        }
        v = w;
    }
    out
}

/// Greedy packing of weight-`k` vectors in `{0,1}^M`, `4 <= M <= 64`, `1 <= k <= M/2`.
///
/// Candidates are all weight-`k` vectors in seeded random order when there are at
/// most [`EXHAUSTIVE_CANDIDATES`] of them, and [`SAMPLED_CANDIDATES`] random draws otherwise.
pub fn vg_packing(m: usize, k: usize, seed: &SeedSpec) -> Result<PackingSet> {
    if !(4..=64).contains(&m) {
        return Err(invalid(format!("M must lie in 4..=64, got {m}")));
    }
    if k == 0 || 2 * k > m {
        return Err(invalid(format!("k must lie in 1..={}, got {k}", m / 2)));
    }
    let r = required_distance(k);
    let total = binomial(m, k);
    let mut rng = seed.child("packing").rng();
    let exhaustive = total <= EXHAUSTIVE_CANDIDATES;
    let mut admitted: Vec<u64> = Vec::new();
    let mut examined = 0;
    // Shared (k - r/2 + 1)-subsets detect pairs closer than r.
    let share = k + 1 - (r as usize) / 2;
    let use_hash = binomial(k, share) <= 64;
    let mut index: HashSet<u64> = HashSet::new();
    let mut consider = |cand: u64, admitted: &mut Vec<u64>| {
        let ok = if use_hash {
            for_each_subset(cand, share, &mut |s| !index.contains(&s))
        } else {
            admitted.iter().all(|a| (a ^ cand).count_ones() >= r)
        };
        if ok {
            if use_hash {
                for_each_subset(cand, share, &mut |s| {
                    index.insert(s);
                    true
                });
            }
            admitted.push(cand);
        }
    };
    if exhaustive {
        let mut cands = all_weight_k(m, k);
        cands.shuffle(&mut rng);
        for c in cands {
            examined += 1;
            consider(c, &mut admitted);
        }
    } else {
        let mut pos: Vec<u32> = (0..m as u32).collect();
        while examined < SAMPLED_CANDIDATES && admitted.len() < SAMPLED_MEMBER_CAP {
            examined += 1;
            let (chosen, _) = pos.partial_shuffle(&mut rng, k);
            let cand = chosen.iter().fold(0u64, |a, i| a | (1u64 << i));
            consider(cand, &mut admitted);
        }
    }
    let Some(min_d) = verified_min_distance(&admitted, k, r) else {
        return Err(Error::ConstructionFailure {
            reason: "post-construction distance check failed".into(),
            achieved: admitted.len(),
        });
    };
    if admitted.len() < 4 {
        return Err(Error::ConstructionFailure {
            reason: format!("only {} members found for M = {m}, k = {k}", admitted.len()),
            achieved: admitted.len(),
        });
    }
    let log_l = (admitted.len() as f64).ln();
    Ok(PackingSet {
        m,
        k,
        members: admitted.iter().map(|&a| to_vector(a, m)).collect(),
        min_pairwise_l1: min_d as f64,
        achieved_log_cardinality: log_l,
        implied_c1: log_l / (k as f64 * (1.0 + std::f64::consts::E * m as f64 / k as f64).ln()),
        exhaustive,
        candidates_examined: examined,
    })
}

/// Recomputes every pairwise distance and weight of a packing.
pub fn verify_packing(p: &PackingSet) -> bool {
    let masks = p.masks();
    let weights_ok = p.members.iter().all(|v| v.len() == p.m && v.iter().map(|b| *b as usize).sum::<usize>() == p.k);
    let mut min_d = u32::MAX;
    for (i, a) in masks.iter().enumerate() {
        for b in &masks[i + 1..] {
            min_d = min_d.min((a ^ b).count_ones());
        }
    }
    weights_ok && min_d as f64 >= p.threshold() && min_d as f64 == p.min_pairwise_l1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilyKind {
    /// `pi1 = w1/d`, `pil = (1 - eps) pi1 + eps wl/d`.
    Sparse { d: usize, epsilon: f64 },
    /// `pi = (1 - gamma, gamma w/d)`.
    Shifted { d: usize, gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFamily {
    pub kind: FamilyKind,
    pub members: Vec<WeightVector>,
}

impl HypothesisFamily {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Sparse family over `K = M` components built from a packing with `k = d`.
pub fn sparse_hypotheses(packing: &PackingSet, epsilon: f64) -> Result<HypothesisFamily> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let Some(first) = packing.members.first() else {
        return Err(invalid("empty packing"));
    };
    let d = packing.k as f64;
    let base: Vec<f64> = first.iter().map(|&b| b as f64 / d).collect();
    let members = packing
        .members
        .iter()
        .enumerate()
        .map(|(l, w)| {
            if l == 0 {
                return WeightVector::new(base.clone());
            }
            let v = base
                .iter()
                .zip(w)
                .map(|(p, &b)| (1.0 - epsilon) * p + epsilon * b as f64 / d)
                .collect();
            WeightVector::new(v)
        })
        .collect::<Result<_>>()?;
    Ok(HypothesisFamily {
        kind: FamilyKind::Sparse {
            d: packing.k,
            epsilon,
        },
        members,
    })
}

/// Shifted family over `K = M + 1` components; the first weight is `1 - gamma`.
pub fn shifted_hypotheses(packing: &PackingSet, gamma: f64) -> Result<HypothesisFamily> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let d = packing.k as f64;
    let members = packing
        .members
        .iter()
        .map(|w| {
            let mut v = Vec::with_capacity(w.len() + 1);
            v.push(1.0 - gamma);
            v.extend(w.iter().map(|&b| gamma * b as f64 / d));
            WeightVector::new(v)
        })
        .collect::<Result<_>>()?;
    Ok(HypothesisFamily {
        kind: FamilyKind::Shifted { d: packing.k, gamma },
        members,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoReport {
    pub family_size: usize,
    pub n: usize,
    /// Smallest `KL(f_j || f_k)` over ordered pairs `j != k`.
    pub min_pairwise_kl: f64,
    /// Largest admissible `s`, half the smallest pairwise divergence.
    pub s: f64,
    /// Largest `KL(f_l || f_1)`.
    pub max_kl_to_first: f64,
    /// `n` times the largest divergence to the first member.
    pub product_kl: f64,
    /// The same quantity summed over the `n` coordinates of the product measure.
    pub product_kl_chain: f64,
    /// `(log L) / 16`.
    pub log_l_over_16: f64,
    /// `product_kl / ((log L) / 16)`.
    pub product_ratio: f64,
    pub condition_separation: bool,
    pub condition_closeness: bool,
    pub passed: bool,
}

fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Checks both Fano conditions for `family` under `n` i.i.d. draws.
pub fn fano_check(family: &HypothesisFamily, dict: &Dictionary, n: usize, nodes: usize) -> Result<FanoReport> {
    let l = family.len();
    if l < 2 {
        return Err(invalid("need at least two hypotheses"));
    }
    if family.members.iter().any(|w| w.len() != dict.len()) {
        return Err(invalid("family and dictionary differ in size"));
    }
    let grid = MixtureGrid::new(dict, nodes)?;
    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|a| (0..l).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    let kls: Vec<((usize, usize), f64)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            (
                (a, b),
                grid.kl_between(family.members[a].as_slice(), family.members[b].as_slice()),
            )
        })
        .collect();
    let min_kl = kls.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    let max_first = kls
        .iter()
        .filter(|((_, b), _)| *b == 0)
        .map(|(_, v)| *v)
        .fold(0.0f64, f64::max);
    let product = n as f64 * max_first;
    let chain = compensated_sum(std::iter::repeat_n(max_first, n));
    let cap = (l as f64).ln() / 16.0;
    let sep = min_kl > 0.0;
    let close = product <= cap;
    Ok(FanoReport {
        family_size: l,
        n,
        min_pairwise_kl: min_kl,
        s: min_kl / 2.0,
        max_kl_to_first: max_first,
        product_kl: product,
        product_kl_chain: chain,
        log_l_over_16: cap,
        product_ratio: product / cap,
        condition_separation: sep,
        condition_closeness: close,
        passed: l >= 4 && sep && close,
    })
}

/// Parameters and outcome of the sparse lower-bound construction with its default tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoPreset {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "D")]
    pub sparsity: usize,
    pub n: usize,
    pub d: usize,
    pub implied_c1: f64,
    /// Largest eigenvalue over `2D x 2D` principal minors of the Lebesgue Gram matrix.
    pub lambda_max: f64,
    pub a1: f64,
    pub epsilon: f64,
    pub epsilon_clamped: bool,
    pub packing: PackingSet,
    pub family: HypothesisFamily,
    pub report: FanoReport,
}

/// `A1 = 4 v 16 V^2 lambda_max(2D) / (C1 m)`, `d` the largest integer `<= D` with
/// `d^2 log(1 + eK/d) <= A1 n`, and `eps^2 = d^2 log(1 + eK/d) / (n A1)`.
pub fn fano_preset(dict: &Dictionary, sparsity: usize, n: usize, nodes: usize, seed: &SeedSpec) -> Result<FanoPreset> {
    let k = dict.len();
    if sparsity == 0 || 2 * sparsity > k {
        return Err(invalid(format!("D must lie in 1..={}, got {sparsity}", k / 2)));
    }
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    if !(dict.lower() > 0.0) {
        return Err(invalid("components must be bounded away from zero"));
    }
    let gram = dict.population_gram(nodes, Reference::Lebesgue)?;
    let lambda_max = minor_eigen_extremes(&gram, 2 * sparsity)?.lambda_max;
    let v = dict.ratio();
    let log_term = |d: usize| (d * d) as f64 * (1.0 + std::f64::consts::E * k as f64 / d as f64).ln();
    let mut packing = vg_packing(k, sparsity, seed)?;
    let a1 = (16.0 * v * v * lambda_max / (packing.implied_c1 * dict.lower())).max(4.0);
    let d = (1..=sparsity).rev().find(|&d| log_term(d) <= a1 * n as f64).unwrap_or(1);
    if d != sparsity {
        packing = vg_packing(k, d, seed)?;
    }
    let raw = (log_term(d) / (n as f64 * a1)).sqrt();
    let epsilon = raw.min(1.0);
    let family = sparse_hypotheses(&packing, epsilon)?;
    let report = fano_check(&family, dict, n, nodes)?;
    Ok(FanoPreset {
        k,
        sparsity,
        n,
        d,
        implied_c1: packing.implied_c1,
        lambda_max,
        a1,
        epsilon,
        epsilon_clamped: raw > 1.0,
        packing,
        family,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimaxRate {
    pub rate: f64,
    /// `min(sqrt(gamma^2 log K / n) + D log K / n, sqrt(log K / n))`.
    pub upper: f64,
}

/// `r(n, K, gamma, D)` together with the matching upper-bound expression.
pub fn minimax_rate(n: usize, k: usize, gamma: f64, sparsity: usize) -> Result<MinimaxRate> {
    if n == 0 || k == 0 {
        return Err(invalid("n and K must be positive"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if sparsity == 0 || sparsity > k {
        return Err(invalid(format!("D must lie in 1..={k}, got {sparsity}")));
    }
    let (nf, kf, df) = (n as f64, k as f64, sparsity as f64);
    let first = (gamma * gamma / nf * (1.0 + kf / (gamma * nf.sqrt())).ln()).sqrt();
    let second = (df * (1.0 + kf / df).ln() / nf).min(((1.0 + kf / nf.sqrt()).ln() / nf).sqrt());
    let lk = kf.ln();
    let upper = ((gamma * gamma * lk / nf).sqrt() + df * lk / nf).min((lk / nf).sqrt());
    Ok(MinimaxRate {
        rate: first + second,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gosper_enumeration_counts() {
        assert_eq!(all_weight_k(6, 2).len(), 15);
        assert_eq!(all_weight_k(64, 1).len(), 64);
        assert_eq!(all_weight_k(64, 2).len(), 2016);
        let all = all_weight_k(10, 3);
        assert!(all.iter().all(|m| m.count_ones() == 3));
        assert_eq!(all.iter().collect::<HashSet<_>>().len(), 120);
    }

    #[test]
    fn required_distance_is_smallest_even_above_threshold() {
        for k in 1..40 {
            let r = required_distance(k) as f64;
            let t = (k + 1) as f64 / 4.0;
            assert_eq!(r % 2.0, 0.0, "k = {k}");
            assert!(r >= t && r - 2.0 < t, "k = {k}");
        }
    }

    #[test]
    fn four_unit_vectors() {
        let p = vg_packing(4, 1, &SeedSpec::new(0, 0, "t")).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.min_pairwise_l1, 2.0);
        assert!(verify_packing(&p));
    }

    #[test]
    fn sampled_construction_verifies() {
        let p = vg_packing(64, 20, &SeedSpec::new(3, 0, "t")).unwrap();
        assert!(!p.exhaustive);
        assert!(verify_packing(&p));
    }

    #[test]
    fn preset_passes() {
        let dict = crate::dictionary::sine_dictionary(8).unwrap();
        let p = fano_preset(&dict, 2, 10_000, 4097, &SeedSpec::new(0, 0, "t")).unwrap();
        assert!(p.report.passed);
    }

    #[test]
    fn rate_arithmetic() {
        let r = minimax_rate(10_000, 64, 0.1, 2).unwrap();
        let first = (0.01f64 / 1e4 * (1.0 + 64.0 / 10.0f64).ln()).sqrt();
        let second = (2.0 * 33f64.ln() / 1e4).min(((1.0 + 0.64f64).ln() / 1e4).sqrt());
        assert!((r.rate - first - second).abs() < 1e-15);
    }
}
