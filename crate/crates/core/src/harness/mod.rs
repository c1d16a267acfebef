//! Seeded simulation sweeps, rate regressions and the single-component baseline.

mod rows;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::{bound_rhs, oracle_weights, BoundInputs, OracleProblem, TheoremId};
use crate::dictionary::{empirical_gram, sine_dictionary, Density, Dictionary, EvaluationMatrix, GramMatrix};
use crate::empirical_process::zeta_sup;
use crate::error::{invalid, Error, Result};
use crate::lower_bounds::fano_preset;
use crate::sampling::{sample, sample_mixture, SeedSpec};
use crate::solver::{fit_mle, fit_mle_surrogate, Method, Objective, SolverOptions, SolverResult, WeightVector};
use crate::solver::Loss;
use crate::spectra::{compatibility_constant, restricted_eigenvalue, ConeSpec};

pub use rows::{read_rows, read_rows_from, write_rows, write_rows_to, ResultRow, FIELDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// `D` equal weights on the first `D` sine components.
    WellSpecifiedSparse,
    /// Equal weights on all `K` sine components.
    WellSpecifiedDense,
    /// A `(1 - gamma, gamma)` blend of the sparse truth and the sine of frequency `K + 1`.
    Misspecified,
    /// Unit-amplitude sines, which vanish somewhere, fitted with the surrogate at threshold `mu`.
    VanishingComponent,
    /// Truths drawn from the sparse Fano family.
    LowerBoundAudit,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::WellSpecifiedSparse => "well-specified-sparse",
            Scenario::WellSpecifiedDense => "well-specified-dense",
            Scenario::Misspecified => "misspecified",
            Scenario::VanishingComponent => "vanishing-component",
            Scenario::LowerBoundAudit => "lower-bound-audit",
        }
    }

    fn default_bounds(self) -> Vec<BoundRequest> {
        let ids: &[TheoremId] = match self {
            Scenario::WellSpecifiedDense => &[TheoremId::ConvOracle],
            Scenario::VanishingComponent => &[TheoremId::BoundDevFive, TheoremId::BoundDevSix],
            Scenario::LowerBoundAudit => &[TheoremId::Upper],
            _ => &[TheoremId::BoundDevTwo],
        };
        let mut out = Vec::new();
        for &id in ids {
            if id == TheoremId::Upper {
                out.push(BoundRequest { id, delta: None });
            } else {
                for delta in DEFAULT_DELTAS {
                    out.push(BoundRequest { id, delta: Some(delta) });
                }
            }
        }
        out
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| invalid(format!("unknown scenario '{s}'")))
    }
}

pub const DEFAULT_DELTAS: [f64; 2] = [0.05, 0.1];

/// A bound to evaluate in every replication, written `id` or `id@delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRequest {
    pub id: TheoremId,
    pub delta: Option<f64>,
}

impl BoundRequest {
    pub fn new(id: TheoremId, delta: f64) -> Self {
        Self { id, delta: Some(delta) }
    }

    pub fn label(&self) -> String {
        match self.delta {
            Some(d) => format!("{}@{d}", self.id),
            None => self.id.to_string(),
        }
    }
}

impl FromStr for BoundRequest {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('@') {
            Some((id, d)) => Ok(Self {
                id: id.parse()?,
                delta: Some(d.parse().map_err(|_| invalid(format!("bad delta in '{s}'")))?),
            }),
            None => Ok(Self {
                id: s.parse()?,
                delta: None,
            }),
        }
    }
}

impl Serialize for BoundRequest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for BoundRequest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n_values: Vec<usize>,
    pub k: usize,
    pub sparsity: usize,
    pub gamma: f64,
    pub mu: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub quadrature_nodes: usize,
    pub solver: SolverOptions,
    /// CSV destination; nothing is written when absent.
    pub output: Option<PathBuf>,
    /// Empty means the scenario default.
    pub bounds: Vec<BoundRequest>,
    pub compute_zeta: bool,
    pub zeta_restarts: usize,
    pub spectra_restarts: usize,
    /// Fill `wall_time_ms`; off by default so reruns are byte-identical.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::WellSpecifiedSparse,
            n_values: vec![250, 500, 1000],
            k: 16,
            sparsity: 2,
            gamma: 0.1,
            mu: 0.0,
            replications: 10,
            master_seed: 0,
            quadrature_nodes: crate::quadrature::DEFAULT_NODES,
            solver: SolverOptions::default(),
            output: None,
            bounds: Vec::new(),
            compute_zeta: false,
            zeta_restarts: 8,
            spectra_restarts: 16,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(invalid("replications must be at least 1"));
        }
        if self.n_values.is_empty() || self.n_values[0] == 0 {
            return Err(invalid("n_values must be nonempty and positive"));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("n_values must be strictly increasing"));
        }
        if self.k == 0 {
            return Err(invalid("k must be positive"));
        }
        if self.sparsity == 0 || self.sparsity > self.k {
            return Err(invalid(format!("sparsity must lie in 1..={}", self.k)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid("gamma must lie in (0, 1)"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(invalid("mu must be finite and nonnegative"));
        }
        match self.scenario {
            Scenario::VanishingComponent if self.mu <= 0.0 => {
                return Err(invalid("the vanishing-component scenario needs mu > 0"));
            }
            Scenario::LowerBoundAudit if !(4..=64).contains(&self.k) || 2 * self.sparsity > self.k => {
                return Err(invalid("the lower-bound audit needs 4 <= k <= 64 and 2 * sparsity <= k"));
            }
            _ => {}
        }
        for b in &self.bounds {
            if matches!(b.id, TheoremId::BoundDevFive | TheoremId::BoundDevSix) && self.mu <= 0.0 {
                return Err(invalid(format!("{} needs mu > 0", b.id)));
            }
        }
        self.solver.validate()
    }

    pub fn bound_list(&self) -> Vec<BoundRequest> {
        if self.bounds.is_empty() {
            self.scenario.default_bounds()
        } else {
            self.bounds.clone()
        }
    }
}

/// Dictionary and truth of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioSetup {
    pub dictionary: Dictionary,
    pub truth: Density,
    /// Set when the truth is a mixture of the dictionary.
    pub truth_weights: Option<Vec<f64>>,
}

fn sparse_weights(k: usize, d: usize) -> Vec<f64> {
    (0..k).map(|j| if j < d { 1.0 / d as f64 } else { 0.0 }).collect()
}

/// Builds the dictionary and truth for `config` at sample size `n`.
pub fn scenario_setup(config: &ExperimentConfig, n: usize, replication: usize) -> Result<ScenarioSetup> {
    let k = config.k;
    let d = config.sparsity;
    match config.scenario {
        Scenario::WellSpecifiedSparse | Scenario::WellSpecifiedDense => {
            let dictionary = sine_dictionary(k)?;
            let w = if config.scenario == Scenario::WellSpecifiedDense {
                vec![1.0 / k as f64; k]
            } else {
                sparse_weights(k, d)
            };
            Ok(ScenarioSetup {
                truth: dictionary.mixture_density(&w)?,
                dictionary,
                truth_weights: Some(w),
            })
        }
        Scenario::Misspecified => {
            let dictionary = sine_dictionary(k)?;
            let inner = dictionary.mixture_density(&sparse_weights(k, d))?;
            let outside = Density::sine(k as u32 + 1, 0.5)?;
            Ok(ScenarioSetup {
                truth: Density::mixture(vec![1.0 - config.gamma, config.gamma], vec![inner, outside])?,
                dictionary,
                truth_weights: None,
            })
        }
        Scenario::VanishingComponent => {
            let comps = (1..=k as u32).map(|j| Density::sine(j, 1.0)).collect::<Result<Vec<_>>>()?;
            let dictionary = Dictionary::with_components(comps)?;
            let inner = dictionary.mixture_density(&sparse_weights(k, d))?;
            Ok(ScenarioSetup {
                truth: Density::mixture(vec![0.5, 0.5], vec![inner, Density::uniform()])?,
                dictionary,
                truth_weights: None,
            })
        }
        Scenario::LowerBoundAudit => {
            let dictionary = sine_dictionary(k)?;
            let seed = SeedSpec::new(config.master_seed, 0, "lower-bound-audit");
            let preset = fano_preset(&dictionary, d, n, config.quadrature_nodes, &seed)?;
            let members = &preset.family.members;
            let w = members[replication % members.len()].as_slice().to_vec();
            Ok(ScenarioSetup {
                truth: dictionary.mixture_density(&w)?,
                dictionary,
                truth_weights: Some(w),
            })
        }
    }
}

/// A comparison point of the sparse bounds: the oracle truncated to its `s` largest weights.
struct Candidate {
    weights: Vec<f64>,
    support: Vec<usize>,
    bias: f64,
}

#[derive(Debug, Clone)]
struct PopulationSpectra {
    kappa3: f64,
    kappa_bar1: f64,
    restricted_eigenvalue: f64,
}

#[derive(Debug, Clone)]
struct SharedSpectra {
    lambda_min: f64,
    /// `(KL(f* || f_j), kappa-bar({j}, 1))` for every `j`.
    singletons: Vec<(f64, f64)>,
}

/// Everything about a truth that does not depend on the sample.
struct TruthContext {
    problem: OracleProblem,
    truth_weights: Option<Vec<f64>>,
    /// Minimizer of `KL(f* || f_pi)` over the simplex.
    oracle: Vec<f64>,
    oracle_kl: f64,
    /// Truncations with `s = 1, ..., |supp|`; the last one carries the full support.
    candidates: Vec<Candidate>,
    population: Vec<OnceLock<Result<PopulationSpectra>>>,
    shared: OnceLock<Result<SharedSpectra>>,
    gram: OnceLock<Result<GramMatrix>>,
}

fn truncate(weights: &[f64], s: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; weights.len()];
    for &j in &order[..s] {
        out[j] = weights[j];
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

fn lift<T: Clone>(r: &Result<T>, what: &str) -> Result<T> {
    r.as_ref().cloned().map_err(|e| invalid(format!("{what}: {e}")))
}

impl TruthContext {
    fn new(setup: ScenarioSetup, config: &ExperimentConfig) -> Result<Self> {
        let problem = OracleProblem::new(setup.truth, setup.dictionary, config.quadrature_nodes)?;
        let opts = SolverOptions::default().with_gap(1e-10);
        let solved = oracle_weights(&problem, &opts)?.weights.into_vec();
        let oracle = match &setup.truth_weights {
            Some(w) if problem.kl(w) <= problem.kl(&solved) => w.clone(),
            _ => solved,
        };
        let size = oracle.iter().filter(|&&v| v > 1e-6).count().max(1);
        let candidates: Vec<Candidate> = (1..=size)
            .map(|s| {
                let weights = truncate(&oracle, s);
                Candidate {
                    support: (0..weights.len()).filter(|&j| weights[j] > 0.0).collect(),
                    bias: problem.kl(&weights).max(0.0),
                    weights,
                }
            })
            .collect();
        Ok(Self {
            oracle_kl: problem.kl(&oracle).max(0.0),
            population: (0..candidates.len()).map(|_| OnceLock::new()).collect(),
            candidates,
            problem,
            truth_weights: setup.truth_weights,
            oracle,
            shared: OnceLock::new(),
            gram: OnceLock::new(),
        })
    }

    fn full(&self) -> usize {
        self.candidates.len() - 1
    }

    fn gram(&self) -> Result<GramMatrix> {
        lift(self.gram.get_or_init(|| self.problem.gram()), "population Gram matrix")
    }

    fn population(&self, c: usize, restarts: usize, seed: &SeedSpec) -> Result<PopulationSpectra> {
        let r = self.population[c].get_or_init(|| {
            let gram = self.gram()?;
            let j = self.candidates[c].support.clone();
            Ok(PopulationSpectra {
                kappa3: compatibility_constant(&gram, &ConeSpec::kappa(j.clone(), 3.0), restarts, seed)?.search_upper,
                kappa_bar1: compatibility_constant(&gram, &ConeSpec::kappa_bar(j.clone(), 1.0), restarts, seed)?
                    .search_upper,
                restricted_eigenvalue: restricted_eigenvalue(&gram, j.len(), 1.0, restarts, seed)?.search_upper,
            })
        });
        lift(r, "population spectra")
    }

    fn shared(&self, seed: &SeedSpec) -> Result<SharedSpectra> {
        let r = self.shared.get_or_init(|| {
            let gram = self.gram()?;
            let k = self.problem.dictionary().len();
            let singletons = (0..k)
                .map(|i| {
                    let kb = compatibility_constant(&gram, &ConeSpec::kappa_bar(vec![i], 1.0), 1, seed)?.search_upper;
                    let mut e = vec![0.0; k];
                    e[i] = 1.0;
                    Ok((self.problem.kl(&e), kb))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SharedSpectra {
                lambda_min: gram.min_eigenvalue().max(0.0),
                singletons,
            })
        });
        lift(r, "population spectra")
    }
}

/// Per-replication quantities shared by all bound rows.
struct Replication<'a> {
    ctx: &'a TruthContext,
    config: &'a ExperimentConfig,
    n: usize,
    seed: SeedSpec,
    gram: GramMatrix,
    fit: SolverResult,
    kl_hat: f64,
    /// `(kappa-bar(J, 1), kappa(J, 3))` of the empirical Gram matrix per candidate.
    empirical: Vec<[OnceLock<Result<f64>>; 2]>,
}

impl Replication<'_> {
    fn empirical_kappa(&self, c: usize, which: usize) -> Result<f64> {
        let r = self.empirical[c][which].get_or_init(|| {
            let j = self.ctx.candidates[c].support.clone();
            let spec = if which == 0 {
                ConeSpec::kappa_bar(j, 1.0)
            } else {
                ConeSpec::kappa(j, 3.0)
            };
            Ok(compatibility_constant(&self.gram, &spec, self.config.spectra_restarts, &self.seed.child("spectra"))?
                .search_upper)
        });
        lift(r, "empirical spectra")
    }

    /// `(lhs, rhs)` of one requested bound; sparse right-hand sides are minimized over the candidates.
    fn evaluate(&self, req: &BoundRequest) -> Result<(f64, f64)> {
        let ctx = self.ctx;
        let dict = ctx.problem.dictionary();
        let pi_hat = self.fit.weights.as_slice();
        let v = if matches!(req.id, TheoremId::BoundDevFive | TheoremId::BoundDevSix) {
            dict.upper() / self.config.mu
        } else {
            dict.ratio()
        };
        let base = BoundInputs {
            n: Some(self.n),
            k: Some(dict.len()),
            delta: req.delta,
            ratio: Some(v),
            upper: Some(dict.upper()),
            off_support_mass: Some(0.0),
            sparsity: Some(self.config.sparsity),
            gamma: Some(self.config.gamma),
            ..Default::default()
        };
        let restarts = self.config.spectra_restarts;
        let pop_seed = SeedSpec::new(self.config.master_seed, 0, "population");
        let over_candidates = |kappa: &dyn Fn(usize) -> Result<f64>| -> Result<f64> {
            let mut best = f64::INFINITY;
            for (c, cand) in ctx.candidates.iter().enumerate() {
                let inputs = BoundInputs {
                    support_size: Some(cand.support.len()),
                    bias: Some(cand.bias),
                    compatibility: Some(kappa(c)?),
                    ..base.clone()
                };
                best = best.min(bound_rhs(req.id, &inputs)?.rhs_value);
            }
            Ok(best)
        };
        let full = ctx.full();
        let star = &ctx.candidates[full];
        let at_star = |kappa: f64| BoundInputs {
            support_size: Some(star.support.len()),
            compatibility: Some(kappa),
            ..base.clone()
        };
        let diff: Vec<f64> = pi_hat.iter().zip(&star.weights).map(|(a, b)| a - b).collect();
        let l1: f64 = diff.iter().map(|d| d.abs()).sum();
        let l2sq: f64 = diff.iter().map(|d| d * d).sum();
        let kl = self.kl_hat;
        Ok(match req.id {
            TheoremId::BoundDeviation => (kl, over_candidates(&|c| self.empirical_kappa(c, 1))?),
            TheoremId::BoundDevTwo => (kl, over_candidates(&|c| self.empirical_kappa(c, 0))?),
            TheoremId::BoundDevThree | TheoremId::BoundExpOne => {
                (kl, over_candidates(&|c| Ok(ctx.population(c, restarts, &pop_seed)?.kappa3))?)
            }
            TheoremId::BoundDevFour | TheoremId::BoundExpTwo => {
                (kl, over_candidates(&|c| Ok(ctx.population(c, restarts, &pop_seed)?.kappa_bar1))?)
            }
            TheoremId::ConvOracle => {
                let inputs = BoundInputs {
                    bias: Some(ctx.oracle_kl),
                    ..base.clone()
                };
                (kl, bound_rhs(req.id, &inputs)?.rhs_value)
            }
            TheoremId::MsAggr => {
                let mut best = f64::INFINITY;
                for &(bias, kb) in &ctx.shared(&pop_seed)?.singletons {
                    let inputs = BoundInputs {
                        bias: Some(bias),
                        compatibility: Some(kb),
                        ..base.clone()
                    };
                    best = best.min(bound_rhs(req.id, &inputs)?.rhs_value);
                }
                (kl, best)
            }
            TheoremId::CAggr | TheoremId::DAggr => {
                // The smallest eigenvalue bounds both constants from below.
                let inputs = BoundInputs {
                    bias: Some(ctx.oracle_kl),
                    compatibility: Some(ctx.shared(&pop_seed)?.lambda_min),
                    ..base.clone()
                };
                (kl, bound_rhs(req.id, &inputs)?.rhs_value)
            }
            TheoremId::ElOne => {
                let kb = ctx.population(full, restarts, &pop_seed)?.kappa_bar1;
                (l1, bound_rhs(req.id, &at_star(kb))?.rhs_value)
            }
            TheoremId::EuclOne => {
                let re = ctx.population(full, restarts, &pop_seed)?.restricted_eigenvalue;
                (l2sq.sqrt(), bound_rhs(req.id, &at_star(re))?.rhs_value)
            }
            TheoremId::EuclTwo => {
                let re = ctx.population(full, restarts, &pop_seed)?.restricted_eigenvalue;
                (l2sq, bound_rhs(req.id, &at_star(re))?.rhs_value)
            }
            TheoremId::Upper => (kl - ctx.oracle_kl, bound_rhs(req.id, &base)?.rhs_value),
            TheoremId::BoundDevFive => {
                let residual = ctx.problem.vanishing_residual(pi_hat, self.config.mu);
                (kl, over_candidates(&|c| self.empirical_kappa(c, 0))? + residual)
            }
            TheoremId::BoundDevSix => (ctx.problem.l2_error(pi_hat), over_candidates(&|c| self.empirical_kappa(c, 0))?),
        })
    }
}

fn replication_rows(
    config: &ExperimentConfig,
    ctx: &TruthContext,
    n: usize,
    rep: usize,
    bounds: &[BoundRequest],
) -> Result<Vec<ResultRow>> {
    let start = Instant::now();
    let seed = SeedSpec::new(config.master_seed, rep as u64, format!("{}/n={n}", config.scenario));
    let dict = ctx.problem.dictionary();
    let data_seed = seed.child("data");
    let samples = match &ctx.truth_weights {
        Some(w) => sample_mixture(dict, w, n, &data_seed)?,
        None => sample(ctx.problem.truth(), n, &data_seed)?,
    };
    let z = dict.evaluation_matrix(&samples)?;
    let fit = if config.mu > 0.0 {
        fit_mle_surrogate(&z, config.mu, &config.solver)?
    } else {
        fit_mle(&z, &config.solver)?
    };
    let gram = empirical_gram(&z, &dict.centering_values(&samples))?;
    let kl_hat = ctx.problem.kl(fit.weights.as_slice());
    let zeta = if config.compute_zeta {
        zeta_sup(&ctx.problem, &samples, config.zeta_restarts, &seed)?.value
    } else {
        f64::NAN
    };
    let pi_hat = fit.weights.as_slice();
    let diff: Vec<f64> = pi_hat.iter().zip(&ctx.oracle).map(|(a, b)| a - b).collect();
    let l1_error = diff.iter().map(|d| d.abs()).sum();
    let l2_error = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    let rep_ctx = Replication {
        ctx,
        config,
        n,
        seed: seed.clone(),
        gram,
        kl_hat,
        empirical: (0..ctx.candidates.len()).map(|_| [OnceLock::new(), OnceLock::new()]).collect(),
        fit,
    };
    let mut rows = Vec::with_capacity(bounds.len());
    for req in bounds {
        let (lhs, rhs) = rep_ctx.evaluate(req)?;
        rows.push(ResultRow {
            scenario: config.scenario.to_string(),
            n,
            k: dict.len(),
            d: config.sparsity,
            replication: rep,
            seed: seed.fingerprint(),
            excess_kl: kl_hat - ctx.oracle_kl,
            nll: rep_ctx.fit.objective,
            gap: rep_ctx.fit.certificate_gap,
            l1_error,
            l2_error,
            zeta_estimate: zeta,
            bound_id: req.label(),
            bound_rhs: rhs,
            bound_satisfied: lhs <= rhs,
            wall_time_ms: 0.0,
        });
    }
    if config.record_timing {
        let ms = start.elapsed().as_secs_f64() * 1e3;
        rows.iter_mut().for_each(|r| r.wall_time_ms = ms);
    }
    Ok(rows)
}

/// Runs every `(n, replication)` pair, in parallel on up to `jobs` threads, and
/// returns rows in `(n, replication, bound)` order. Writes the CSV when an output
/// path is configured; the file is created before any computation.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let out = config.output.as_ref().map(std::fs::File::create).transpose()?;
    let bounds = config.bound_list();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| invalid(format!("thread pool: {e}")))?;
    let rows = pool.install(|| -> Result<Vec<ResultRow>> {
        use rayon::prelude::*;
        let audit = config.scenario == Scenario::LowerBoundAudit;
        let shared = if audit {
            None
        } else {
            Some(TruthContext::new(scenario_setup(config, config.n_values[0], 0)?, config)?)
        };
        let mut all = Vec::new();
        for &n in &config.n_values {
            let contexts: BTreeMap<usize, TruthContext> = if audit {
                let l = config.replications;
                (0..l)
                    .map(|rep| Ok((rep, TruthContext::new(scenario_setup(config, n, rep)?, config)?)))
                    .collect::<Result<_>>()?
            } else {
                BTreeMap::new()
            };
            let chunks: Vec<Vec<ResultRow>> = (0..config.replications)
                .into_par_iter()
                .map(|rep| {
                    let ctx = shared.as_ref().unwrap_or_else(|| &contexts[&rep]);
                    replication_rows(config, ctx, n, rep, &bounds)
                })
                .collect::<Result<_>>()?;
            all.extend(chunks.into_iter().flatten());
        }
        Ok(all)
    })?;
    if let Some(f) = out {
        write_rows_to(f, &rows)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    Median,
    Mean,
}

impl FromStr for Statistic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(Statistic::Median),
            "mean" => Ok(Statistic::Mean),
            _ => Err(invalid(format!("unknown statistic '{s}'"))),
        }
    }
}

/// Column a rate is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    ExcessKl,
    L1Error,
    L2Error,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "excess-kl" | "excess_kl" => Ok(Metric::ExcessKl),
            "l1-error" | "l1_error" => Ok(Metric::L1Error),
            "l2-error" | "l2_error" => Ok(Metric::L2Error),
            _ => Err(invalid(format!("unknown metric '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub standard_error: f64,
    pub intercept: f64,
    /// `(n, statistic)` pairs the line was fitted to.
    pub points: Vec<(usize, f64)>,
}

/// Least-squares slope of `log(statistic of excess KL)` against `log n`.
pub fn rate_regression(rows: &[ResultRow], statistic: Statistic) -> Result<RateFit> {
    rate_regression_on(rows, statistic, Metric::ExcessKl)
}

/// As [`rate_regression`], for any per-replication metric. Rows repeated across
/// bounds count once per `(n, replication)`.
pub fn rate_regression_on(rows: &[ResultRow], statistic: Statistic, metric: Metric) -> Result<RateFit> {
    let mut groups: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in rows {
        let v = match metric {
            Metric::ExcessKl => r.excess_kl,
            Metric::L1Error => r.l1_error,
            Metric::L2Error => r.l2_error,
        };
        groups.entry(r.n).or_default().insert(r.replication, v);
    }
    if groups.len() < 3 {
        return Err(invalid(format!("need at least 3 distinct n values, found {}", groups.len())));
    }
    let mut points = Vec::new();
    for (n, reps) in groups {
        let mut v: Vec<f64> = reps.into_values().collect();
        let s = match statistic {
            Statistic::Mean => v.iter().sum::<f64>() / v.len() as f64,
            Statistic::Median => {
                v.sort_by(f64::total_cmp);
                let m = v.len();
                if m % 2 == 1 {
                    v[m / 2]
                } else {
                    0.5 * (v[m / 2 - 1] + v[m / 2])
                }
            }
        };
        if !(s > 0.0) {
            return Err(Error::Domain(format!("statistic at n = {n} is {s}; its logarithm is undefined")));
        }
        points.push((n, s));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, s)| s.ln()).collect();
    let m = xs.len() as f64;
    let xb = xs.iter().sum::<f64>() / m;
    let yb = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xb).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xb) * (y - yb)).sum();
    let slope = sxy / sxx;
    let intercept = yb - slope * xb;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let standard_error = (ssr / (m - 2.0) / sxx).sqrt();
    Ok(RateFit {
        slope,
        standard_error,
        intercept,
        points,
    })
}

/// The vertex `e_j` with the smallest empirical risk, lowest index on ties.
pub fn baseline_model_selection(z: &EvaluationMatrix) -> Result<SolverResult> {
    let k = z.components();
    if k == 0 {
        return Err(invalid("empty dictionary"));
    }
    let n = z.samples() as f64;
    let risk = |j: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..z.samples() {
            let v = z.get(i, j);
            if v <= 0.0 {
                return f64::INFINITY;
            }
            s -= v.ln();
        }
        s / n
    };
    let (best, value) = (0..k)
        .map(|j| (j, risk(j)))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let weights = WeightVector::vertex(k, best);
    let gap = if value.is_finite() {
        let obj = Objective::empirical(z, Loss::NegLog)?;
        let g = obj.gradient_at(&obj.apply(weights.as_slice()));
        obj.simplex_gap(weights.as_slice(), &g)
    } else {
        f64::INFINITY
    };
    Ok(SolverResult {
        weights,
        objective: value,
        certificate_gap: gap,
        iterations: 0,
        converged: value.is_finite(),
        active_constraint: false,
        sample_feasible: value.is_finite(),
        population_feasible: None,
        surrogate_coincides: None,
        method: Method::FrankWolfe,
        trace: None,
    })
}
