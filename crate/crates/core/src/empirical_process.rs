//! Suprema of the empirical process indexed by the ratio class `f_l / f_pi`.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::OracleProblem;
use crate::dictionary::{Dictionary, GramMatrix};
use crate::error::{invalid, Result};
use crate::sampling::SeedSpec;
use crate::spectra::project_simplex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    Grid,
    RestartSearch,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessEstimate {
    pub value: f64,
    pub method: EstimateMethod,
    pub inner_trials: usize,
    /// Set when the value comes from a search that can only undershoot.
    pub is_lower_estimate: bool,
    /// Monte-Carlo standard error of `value`, when averaged over sign draws.
    pub standard_error: Option<f64>,
    /// Weights at which the supremum was found.
    pub argmax: Option<Vec<f64>>,
}

/// `sum_r c_r (Z_rl / (Z pi)_r - 1)` for every `l`.
struct RatioClass {
    z: DMatrix<f64>,
    coef: Vec<f64>,
}

impl RatioClass {
    fn dim(&self) -> usize {
        self.z.ncols()
    }

    fn mixture(&self, pi: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.z.nrows()];
        for (j, &w) in pi.iter().enumerate() {
            if w != 0.0 {
                for (o, z) in u.iter_mut().zip(self.z.column(j).iter()) {
                    *o += w * z;
                }
            }
        }
        u
    }

    fn coordinate(&self, u: &[f64], l: usize) -> f64 {
        self.z
            .column(l)
            .iter()
            .zip(u)
            .zip(&self.coef)
            .map(|((z, u), c)| c * (z / u - 1.0))
            .sum()
    }

    fn all(&self, pi: &[f64]) -> Vec<f64> {
        let u = self.mixture(pi);
        (0..self.dim()).map(|l| self.coordinate(&u, l)).collect()
    }

    /// Largest `|coordinate|` with its index and sign.
    fn sup(&self, pi: &[f64]) -> (f64, usize, f64) {
        let mut best = (0.0, 0, 1.0);
        for (l, g) in self.all(pi).into_iter().enumerate() {
            if g.abs() > best.0 {
                best = (g.abs(), l, g.signum());
            }
        }
        best
    }

    fn gradient(&self, pi: &[f64], l: usize) -> (f64, Vec<f64>) {
        let u = self.mixture(pi);
        let value = self.coordinate(&u, l);
        let w: Vec<f64> = self
            .z
            .column(l)
            .iter()
            .zip(&u)
            .zip(&self.coef)
            .map(|((z, u), c)| c * z / (u * u))
            .collect();
        let grad = (0..self.dim())
            .map(|j| -self.z.column(j).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        (value, grad)
    }

    /// Projected gradient ascent of `sign * coordinate_l` from `start`.
    fn ascend(&self, start: Vec<f64>, l: usize, sign: f64) -> Vec<f64> {
        let mut pi = start;
        let (v, mut g) = self.gradient(&pi, l);
        let mut val = sign * v;
        let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if gmax == 0.0 {
            return pi;
        }
        let mut eta = 0.5 / gmax;
        for _ in 0..200 {
            let mut trial: Vec<f64> = pi.iter().zip(&g).map(|(p, d)| p + eta * sign * d).collect();
            project_simplex(&mut trial);
            let (tv, tg) = self.gradient(&trial, l);
            if sign * tv > val + 1e-15 * val.abs().max(1.0) {
                pi = trial;
                val = sign * tv;
                g = tg;
                eta *= 1.5;
            } else {
                eta *= 0.5;
                if eta * gmax < 1e-12 {
                    break;
                }
            }
        }
        pi
    }

    /// Restart search over the simplex: vertices, barycenter and random starts.
    fn search(&self, restarts: usize, rng: &mut impl Rng) -> (f64, Vec<f64>) {
        let k = self.dim();
        let mut starts: Vec<Vec<f64>> = (0..k)
            .map(|j| {
                let mut e = vec![0.0; k];
                e[j] = 1.0;
                e
            })
            .collect();
        starts.push(vec![1.0 / k as f64; k]);
        for _ in 0..restarts {
            let mut x: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let s: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= s);
            starts.push(x);
        }
        let mut best = (0.0, starts[0].clone());
        for s in starts {
            let (_, l, sign) = self.sup(&s);
            let pi = self.ascend(s, l, sign);
            let (v, _, _) = self.sup(&pi);
            if v > best.0 {
                best = (v, pi);
            }
        }
        best
    }
}

fn ratio_class_for_zeta(problem: &OracleProblem, samples: &[f64]) -> Result<RatioClass> {
    let dict = problem.dictionary();
    let grid = problem.grid();
    let z_samples = dict.evaluation_matrix(samples)?;
    let q = grid.rule().len();
    let n = samples.len();
    let k = dict.len();
    let mut z = DMatrix::zeros(q + n, k);
    z.rows_mut(0, q).copy_from(grid.values());
    z.rows_mut(q, n).copy_from(z_samples.matrix());
    let mut coef: Vec<f64> = grid
        .rule()
        .weights()
        .iter()
        .zip(problem.truth_values())
        .map(|(w, f)| w * f)
        .collect();
    coef.extend(std::iter::repeat_n(-1.0 / n as f64, n));
    Ok(RatioClass { z, coef })
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(invalid("need at least one sample"));
    }
    Ok(())
}

/// `zeta_n = sup_pi max_l |E*[f_l / f_pi] - (1/n) sum_i f_l(X_i) / f_pi(X_i)|`, searched over the full simplex.
pub fn zeta_sup(problem: &OracleProblem, samples: &[f64], restarts: usize, seed: &SeedSpec) -> Result<ProcessEstimate> {
    check_samples(samples)?;
    let class = ratio_class_for_zeta(problem, samples)?;
    let mut rng = seed.child("zeta").rng();
    let (value, argmax) = class.search(restarts, &mut rng);
    Ok(ProcessEstimate {
        value,
        method: EstimateMethod::RestartSearch,
        inner_trials: restarts + class.dim() + 1,
        is_lower_estimate: true,
        standard_error: None,
        argmax: Some(argmax),
    })
}

/// `zeta_n` by exhaustive evaluation on a grid of the simplex with the given step; `K <= 3` only.
pub fn zeta_grid(problem: &OracleProblem, samples: &[f64], step: f64) -> Result<ProcessEstimate> {
    check_samples(samples)?;
    let k = problem.dictionary().len();
    if k > 3 {
        return Err(invalid("grid evaluation is limited to K <= 3"));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(invalid(format!("step must lie in (0, 1], got {step}")));
    }
    let class = ratio_class_for_zeta(problem, samples)?;
    let m = (1.0 / step).round() as usize;
    let mut points = Vec::new();
    match k {
        1 => points.push(vec![1.0]),
        2 => points.extend((0..=m).map(|i| vec![i as f64 / m as f64, 1.0 - i as f64 / m as f64])),
        _ => {
            for i in 0..=m {
                for j in 0..=m - i {
                    let a = i as f64 / m as f64;
                    let b = j as f64 / m as f64;
                    points.push(vec![a, b, (1.0 - a - b).max(0.0)]);
                }
            }
        }
    }
    let trials = points.len();
    let (value, argmax) = points
        .into_iter()
        .map(|p| (class.sup(&p).0, p))
        .fold((0.0, vec![]), |a, b| if b.0 > a.0 { b } else { a });
    Ok(ProcessEstimate {
        value,
        method: EstimateMethod::Grid,
        inner_trials: trials,
        is_lower_estimate: true,
        standard_error: None,
        argmax: Some(argmax),
    })
}

/// Monte-Carlo estimate of `E_eps sup_{pi, l} |(1/n) sum_i eps_i (f_l(X_i) / f_pi(X_i) - 1)|`.
///
/// Each sign draw uses its own stream, so the result does not depend on scheduling.
pub fn rademacher_complexity(
    samples: &[f64],
    dict: &Dictionary,
    sign_trials: usize,
    restarts: usize,
    seed: &SeedSpec,
) -> Result<ProcessEstimate> {
    check_samples(samples)?;
    if sign_trials == 0 {
        return Err(invalid("need at least one sign draw"));
    }
    let z = dict.evaluation_matrix(samples)?.matrix().clone();
    let n = samples.len() as f64;
    let values: Vec<f64> = (0..sign_trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed.child(&format!("rademacher/{t}")).rng();
            let coef: Vec<f64> = (0..samples.len())
                .map(|_| if rng.random::<bool>() { 1.0 / n } else { -1.0 / n })
                .collect();
            let class = RatioClass { z: z.clone(), coef };
            class.search(restarts, &mut rng).0
        })
        .collect();
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    let se = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0) / t).sqrt()
    } else {
        f64::NAN
    };
    Ok(ProcessEstimate {
        value: mean,
        method: EstimateMethod::MonteCarlo,
        inner_trials: sign_trials,
        is_lower_estimate: true,
        standard_error: Some(se),
        argmax: None,
    })
}

/// `||Sigma - Sigma_hat||_inf`, entrywise.
pub fn gram_sup_deviation(empirical: &GramMatrix, population: &GramMatrix) -> Result<f64> {
    if empirical.dim() != population.dim() {
        return Err(invalid(format!(
            "Gram matrices differ in size: {} and {}",
            empirical.dim(),
            population.dim()
        )));
    }
    Ok((empirical.matrix() - population.matrix()).abs().max())
}

/// Hoeffding bound on the expected maximum of `N` centered averages of `n` variables in `[a, b]`.
pub fn hoeffding_max_bound(big_n: usize, n: usize, a: f64, b: f64, two_sided: bool) -> Result<f64> {
    if big_n == 0 || n == 0 || !(b > a) {
        return Err(invalid(format!("need N, n >= 1 and b > a, got N = {big_n}, n = {n}, [{a}, {b}]")));
    }
    let count = if two_sided { 2.0 * big_n as f64 } else { big_n as f64 };
    Ok((b - a) * (count.ln() / (2.0 * n as f64)).sqrt())
}

/// High-probability bound `8 V^3 sqrt(log(K/delta)/n)` on `zeta_n`.
pub fn zeta_bound(v: f64, k: usize, n: usize, delta: f64) -> f64 {
    8.0 * v.powi(3) * ((k as f64 / delta).ln() / n as f64).sqrt()
}

/// Bound `4 V^3 sqrt(2 log(2K^2)/n)` on `E zeta_n`.
pub fn zeta_mean_bound(v: f64, k: usize, n: usize) -> f64 {
    4.0 * v.powi(3) * (2.0 * (2.0 * (k * k) as f64).ln() / n as f64).sqrt()
}

/// Bound `V^2 / (2n)` on `Var zeta_n`.
pub fn zeta_variance_bound(v: f64, n: usize) -> f64 {
    v * v / (2.0 * n as f64)
}

/// Bound `4 V^3 sqrt(log K / n)` on the Rademacher complexity of the ratio class.
pub fn rademacher_bound(v: f64, k: usize, n: usize) -> f64 {
    4.0 * v.powi(3) * ((k as f64).ln() / n as f64).sqrt()
}

/// Bound `M^2 sqrt(log(K^2/delta)/(2n))` on the Gram deviation.
pub fn gram_deviation_bound(m_upper: f64, k: usize, n: usize, delta: f64) -> f64 {
    m_upper * m_upper * (((k * k) as f64 / delta).ln() / (2.0 * n as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::sine_dictionary;
    use crate::sampling::sample;

    #[test]
    fn single_component_is_zero() {
        let dict = sine_dictionary(1).unwrap();
        let truth = dict.component(0).clone();
        let p = OracleProblem::new(truth.clone(), dict.clone(), 257).unwrap();
        let seed = SeedSpec::new(1, 0, "t");
        let xs = sample(&truth, 50, &seed).unwrap();
        assert_eq!(zeta_sup(&p, &xs, 4, &seed).unwrap().value, 0.0);
        assert_eq!(rademacher_complexity(&xs, &dict, 3, 2, &seed).unwrap().value, 0.0);
    }

    #[test]
    fn hoeffding_arithmetic() {
        assert_eq!(hoeffding_max_bound(1, 10, 0.0, 1.0, false).unwrap(), 0.0);
        let b = hoeffding_max_bound(64, 1000, -3.0, 3.0, false).unwrap();
        assert!((b - 6.0 * (64f64.ln() / 2000.0).sqrt()).abs() < 1e-15);
        assert!(hoeffding_max_bound(4, 10, 1.0, 1.0, true).is_err());
    }

    #[test]
    fn gram_deviation_single_entry() {
        let a = GramMatrix::from_matrix(DMatrix::identity(3, 3)).unwrap();
        let mut m = DMatrix::identity(3, 3);
        m[(0, 2)] = 0.3;
        m[(2, 0)] = 0.3;
        let b = GramMatrix::from_matrix(m).unwrap();
        assert!((gram_sup_deviation(&a, &b).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(gram_sup_deviation(&a, &a).unwrap(), 0.0);
    }
}
