//! Kullback-Leibler divergences, oracle weights and oracle-inequality right-hand sides.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Density, Dictionary, GramMatrix, Reference};
use crate::error::{invalid, Result};
use crate::quadrature::Simpson;
use crate::solver::{minimize, Loss, Objective, SolverOptions, SolverResult, WeightVector};

/// `KL(f || g)` by Simpson quadrature; `+inf` when `g` vanishes where `f` does not.
///
/// The integrand is written as `f log(f/g) - f + g`, which is pointwise
/// nonnegative and has the same integral when both arguments are densities.
pub fn kl_divergence(f: &Density, g: &Density, nodes: usize) -> Result<f64> {
    let rule = Simpson::new(nodes)?;
    let fv: Vec<f64> = rule.nodes().iter().map(|&x| f.value(x)).collect();
    let gv: Vec<f64> = rule.nodes().iter().map(|&x| g.value(x)).collect();
    Ok(kl_on_grid(&rule, &fv, &gv))
}

/// `KL(f || f_pi)` for mixture weights `pi` over `dict`.
pub fn kl_to_mixture(f: &Density, dict: &Dictionary, weights: &WeightVector, nodes: usize) -> Result<f64> {
    let grid = MixtureGrid::new(dict, nodes)?;
    let fv = grid.density_values(f);
    Ok(kl_on_grid(&grid.rule, &fv, &grid.mixture_values(weights.as_slice())))
}

pub(crate) fn kl_on_grid(rule: &Simpson, f: &[f64], g: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&w, &a), &b) in rule.weights().iter().zip(f).zip(g) {
        if a > 0.0 {
            if !(b > 0.0) {
                return f64::INFINITY;
            }
            acc += w * (a * (a / b).ln() - a + b);
        } else {
            acc += w * b;
        }
    }
    acc
}

/// Dictionary values on a Simpson grid, reused across many divergence evaluations.
#[derive(Debug, Clone)]
pub struct MixtureGrid {
    rule: Simpson,
    /// `nodes x K` matrix of `f_j(x_q)`.
    values: DMatrix<f64>,
    lower: f64,
    upper: f64,
}

impl MixtureGrid {
    pub fn new(dict: &Dictionary, nodes: usize) -> Result<Self> {
        let rule = Simpson::new(nodes)?;
        let values = DMatrix::from_fn(rule.len(), dict.len(), |q, j| dict.component(j).value(rule.nodes()[q]));
        Ok(Self {
            rule,
            values,
            lower: dict.lower(),
            upper: dict.upper(),
        })
    }

    pub fn rule(&self) -> &Simpson {
        &self.rule
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn density_values(&self, f: &Density) -> Vec<f64> {
        self.rule.nodes().iter().map(|&x| f.value(x)).collect()
    }

    pub fn mixture_values(&self, pi: &[f64]) -> Vec<f64> {
        let q = self.values.nrows();
        let mut out = vec![0.0; q];
        for (j, &w) in pi.iter().enumerate() {
            if w != 0.0 {
                for (o, z) in out.iter_mut().zip(self.values.column(j).iter()) {
                    *o += w * z;
                }
            }
        }
        out
    }

    /// `KL(f_pi || f_pi')`.
    pub fn kl_between(&self, pi: &[f64], pi_prime: &[f64]) -> f64 {
        kl_on_grid(&self.rule, &self.mixture_values(pi), &self.mixture_values(pi_prime))
    }

    /// `int (f_pi' - f_pi)^2 dx`.
    pub fn squared_l2(&self, pi: &[f64], pi_prime: &[f64]) -> f64 {
        let a = self.mixture_values(pi);
        let b = self.mixture_values(pi_prime);
        self.rule
            .weights()
            .iter()
            .zip(a.iter().zip(&b))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum()
    }

    /// Quadratic-form sandwich around `KL(f_pi || f_pi')`, Lebesgue Gram matrix.
    pub fn sandwich(&self, pi: &[f64], pi_prime: &[f64]) -> Sandwich {
        let quadratic = self.squared_l2(pi, pi_prime);
        let v = self.upper / self.lower;
        let kl = self.kl_between(pi, pi_prime);
        let lower = quadratic / (2.0 * v * v * self.upper);
        let upper = v * v * quadratic / (2.0 * self.lower);
        Sandwich {
            lower,
            kl,
            upper,
            quadratic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub lower: f64,
    pub kl: f64,
    pub upper: f64,
    /// `||Sigma^{1/2}(pi' - pi)||^2` with the Lebesgue Gram matrix.
    pub quadratic: f64,
}

impl Sandwich {
    pub fn holds(&self) -> bool {
        self.lower <= self.kl && self.kl <= self.upper
    }

    pub fn slack(&self) -> f64 {
        (self.kl - self.lower).min(self.upper - self.kl)
    }
}

/// `(lower, kl, upper)` for `KL(f_pi || f_pi')`, with `||Sigma^{1/2}(pi' - pi)||^2` taken from the Lebesgue Gram matrix.
pub fn kl_quadratic_sandwich(dict: &Dictionary, pi: &WeightVector, pi_prime: &WeightVector, nodes: usize) -> Result<Sandwich> {
    if !(dict.lower() > 0.0) {
        return Err(invalid("the sandwich needs components bounded away from zero"));
    }
    let grid = MixtureGrid::new(dict, nodes)?;
    let gram = dict.population_gram(nodes, Reference::Lebesgue)?;
    let diff: Vec<f64> = pi_prime.as_slice().iter().zip(pi.as_slice()).map(|(a, b)| a - b).collect();
    let mut s = grid.sandwich(pi.as_slice(), pi_prime.as_slice());
    s.quadratic = gram.quadratic_form(&diff).max(0.0);
    let v = dict.ratio();
    s.lower = s.quadratic / (2.0 * v * v * dict.upper());
    s.upper = v * v * s.quadratic / (2.0 * dict.lower());
    Ok(s)
}

/// Truth, dictionary and the quadrature rule used to integrate against the truth.
#[derive(Debug, Clone)]
pub struct OracleProblem {
    truth: Density,
    dictionary: Dictionary,
    grid: MixtureGrid,
    truth_values: Vec<f64>,
}

impl OracleProblem {
    /// The truth must be positive at every quadrature node.
    pub fn new(truth: Density, dictionary: Dictionary, nodes: usize) -> Result<Self> {
        let grid = MixtureGrid::new(&dictionary, nodes)?;
        let truth_values = grid.density_values(&truth);
        if let Some(v) = truth_values.iter().find(|v| !(**v > 0.0)) {
            return Err(invalid(format!("true density must stay positive, found {v}")));
        }
        Ok(Self {
            truth,
            dictionary,
            grid,
            truth_values,
        })
    }

    pub fn truth(&self) -> &Density {
        &self.truth
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn grid(&self) -> &MixtureGrid {
        &self.grid
    }

    pub fn truth_values(&self) -> &[f64] {
        &self.truth_values
    }

    /// Smallest value of the truth over the grid.
    pub fn truth_minimum(&self) -> f64 {
        self.truth_values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `KL(f* || f_pi)`.
    pub fn kl(&self, pi: &[f64]) -> f64 {
        kl_on_grid(&self.grid.rule, &self.truth_values, &self.grid.mixture_values(pi))
    }

    /// `E*[g(X)]` for values `g` on the grid.
    pub fn expectation(&self, g: &[f64]) -> f64 {
        self.grid
            .rule
            .weights()
            .iter()
            .zip(&self.truth_values)
            .zip(g)
            .map(|((w, f), g)| w * f * g)
            .sum()
    }

    /// `int (log mu - log f_pi)_+ f*`.
    pub fn vanishing_residual(&self, pi: &[f64], mu: f64) -> f64 {
        let g: Vec<f64> = self
            .grid
            .mixture_values(pi)
            .iter()
            .map(|&v| if v > 0.0 { (mu.ln() - v.ln()).max(0.0) } else { f64::INFINITY })
            .collect();
        self.expectation(&g)
    }

    /// `||f* - f_pi||^2` in `L^2(P*)`.
    pub fn l2_error(&self, pi: &[f64]) -> f64 {
        let g: Vec<f64> = self
            .grid
            .mixture_values(pi)
            .iter()
            .zip(&self.truth_values)
            .map(|(a, b)| (a - b) * (a - b))
            .collect();
        self.expectation(&g)
    }

    /// Whether `f_pi >= mu` wherever the truth is positive.
    pub fn population_feasible(&self, pi: &[f64], mu: f64) -> bool {
        self.grid
            .mixture_values(pi)
            .iter()
            .zip(&self.truth_values)
            .all(|(v, f)| *f <= 0.0 || *v >= mu)
    }

    /// Population Gram matrix under the truth.
    pub fn gram(&self) -> Result<GramMatrix> {
        self.dictionary.population_gram(self.grid.rule.len(), Reference::Density(&self.truth))
    }

    /// The population objective `-int f* log f_pi`, restricted to `support` when given.
    pub fn objective(&self, loss: Loss) -> Result<Objective<'_>> {
        let coef: Vec<f64> = self
            .grid
            .rule
            .weights()
            .iter()
            .zip(&self.truth_values)
            .map(|(w, f)| w * f)
            .collect();
        Objective::new(&self.grid.values, Cow::Owned(coef), loss)
    }
}

/// `pi* in argmin KL(f* || f_pi)` with a certificate on the population objective.
pub fn oracle_weights(problem: &OracleProblem, opts: &SolverOptions) -> Result<SolverResult> {
    let obj = problem.objective(Loss::NegLog)?;
    let mut res = minimize(&obj, opts)?;
    res.population_feasible = Some(true);
    Ok(res)
}

/// Oracle weights restricted to the components in `support`, embedded back into `K` coordinates.
pub fn oracle_weights_on(problem: &OracleProblem, support: &[usize], opts: &SolverOptions) -> Result<SolverResult> {
    let k = problem.dictionary.len();
    let sub = problem.grid.values.select_columns(support);
    let base = problem.objective(Loss::NegLog)?;
    let obj = Objective::new(&sub, Cow::Borrowed(base.coef()), Loss::NegLog)?;
    let mut res = minimize(&obj, opts)?;
    let mut full = vec![0.0; k];
    for (&j, &w) in support.iter().zip(res.weights.as_slice()) {
        full[j] = w;
    }
    res.weights = WeightVector::new(full)?;
    Ok(res)
}

/// Names of the inequalities whose right-hand sides can be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TheoremId {
    #[serde(rename = "boundDeviation")]
    BoundDeviation,
    #[serde(rename = "boundDevTwo")]
    BoundDevTwo,
    #[serde(rename = "boundDevThree")]
    BoundDevThree,
    #[serde(rename = "boundDevFour")]
    BoundDevFour,
    #[serde(rename = "boundExpOne")]
    BoundExpOne,
    #[serde(rename = "boundExpTwo")]
    BoundExpTwo,
    #[serde(rename = "convOracle")]
    ConvOracle,
    #[serde(rename = "MSaggr")]
    MsAggr,
    #[serde(rename = "Caggr")]
    CAggr,
    #[serde(rename = "Daggr")]
    DAggr,
    #[serde(rename = "elOne")]
    ElOne,
    #[serde(rename = "euclOne")]
    EuclOne,
    #[serde(rename = "euclTwo")]
    EuclTwo,
    #[serde(rename = "upper")]
    Upper,
    #[serde(rename = "boundDevFive")]
    BoundDevFive,
    #[serde(rename = "boundDevSix")]
    BoundDevSix,
}

impl TheoremId {
    pub const ALL: [TheoremId; 16] = [
        TheoremId::BoundDeviation,
        TheoremId::BoundDevTwo,
        TheoremId::BoundDevThree,
        TheoremId::BoundDevFour,
        TheoremId::BoundExpOne,
        TheoremId::BoundExpTwo,
        TheoremId::ConvOracle,
        TheoremId::MsAggr,
        TheoremId::CAggr,
        TheoremId::DAggr,
        TheoremId::ElOne,
        TheoremId::EuclOne,
        TheoremId::EuclTwo,
        TheoremId::Upper,
        TheoremId::BoundDevFive,
        TheoremId::BoundDevSix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TheoremId::BoundDeviation => "boundDeviation",
            TheoremId::BoundDevTwo => "boundDevTwo",
            TheoremId::BoundDevThree => "boundDevThree",
            TheoremId::BoundDevFour => "boundDevFour",
            TheoremId::BoundExpOne => "boundExpOne",
            TheoremId::BoundExpTwo => "boundExpTwo",
            TheoremId::ConvOracle => "convOracle",
            TheoremId::MsAggr => "MSaggr",
            TheoremId::CAggr => "Caggr",
            TheoremId::DAggr => "Daggr",
            TheoremId::ElOne => "elOne",
            TheoremId::EuclOne => "euclOne",
            TheoremId::EuclTwo => "euclTwo",
            TheoremId::Upper => "upper",
            TheoremId::BoundDevFive => "boundDevFive",
            TheoremId::BoundDevSix => "boundDevSix",
        }
    }

    /// Smallest dictionary size in the statement, if any.
    pub fn min_k(self) -> Option<usize> {
        match self {
            TheoremId::BoundDeviation | TheoremId::BoundDevTwo | TheoremId::ConvOracle => Some(4),
            TheoremId::ElOne | TheoremId::EuclOne | TheoremId::EuclTwo => Some(4),
            TheoremId::BoundDevFive | TheoremId::BoundDevSix => Some(2),
            _ => None,
        }
    }

    fn uses_delta(self) -> bool {
        !matches!(
            self,
            TheoremId::BoundExpOne
                | TheoremId::BoundExpTwo
                | TheoremId::MsAggr
                | TheoremId::CAggr
                | TheoremId::DAggr
                | TheoremId::Upper
        )
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TheoremId {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| invalid(format!("unknown bound id '{s}'")))
    }
}

/// Inputs to a right-hand side. Only the fields a given bound needs are read.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: Option<usize>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub delta: Option<f64>,
    /// `|J|`, or `|J*|` for the weight bounds.
    pub support_size: Option<usize>,
    /// Compatibility constant or restricted eigenvalue matching the bound.
    pub compatibility: Option<f64>,
    #[serde(rename = "V")]
    pub ratio: Option<f64>,
    #[serde(rename = "M")]
    pub upper: Option<f64>,
    /// `KL(f* || f_pi)` at the comparison weights.
    pub bias: Option<f64>,
    /// `||pi_{J^c}||_1`.
    pub off_support_mass: Option<f64>,
    #[serde(rename = "D")]
    pub sparsity: Option<usize>,
    pub gamma: Option<f64>,
    /// `int (log mu - log f_pihat)_+ f*`, reported next to the vanishing-component bound.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem_id: TheoremId,
    pub inputs: BoundInputs,
    /// Cap of the leading constant of the remainder.
    pub constant_cap: f64,
    pub constants: BTreeMap<String, f64>,
    pub rhs_value: f64,
    /// Part of the right-hand side beyond the bias term.
    pub remainder: f64,
    pub residual: Option<f64>,
    pub flags: Vec<String>,
}

/// Constant caps as functions of `M` and `V`.
pub fn constant_caps(m_upper: f64, v: f64) -> BTreeMap<String, f64> {
    let v3 = v.powi(3);
    let m2 = m_upper * m_upper;
    BTreeMap::from([
        ("c1".to_string(), 32.0 * v3),
        ("c2".to_string(), 288.0 * m2 * v.powi(6)),
        ("c3".to_string(), 128.0 * m2 * v.powi(6)),
        ("c4".to_string(), 32.0 * v3 + 4.0),
        ("c5".to_string(), 4.5 * m2 * (8.0 * v3 + 1.0).powi(2)),
        ("c6".to_string(), 2.0 * m2 * (8.0 * v3 + 1.0).powi(2)),
        ("c7".to_string(), 20.0 * v3 + 8.0),
        ("c8".to_string(), m2 * (22.0 * v3 + 3.0).powi(2)),
        ("c9".to_string(), m2 * (15.0 * v3 + 2.0).powi(2)),
        ("c10".to_string(), m2 * (64.0 * v3 + 8.0)),
        ("c11".to_string(), 4.0 * m2 * (8.0 * v3 + 1.0)),
        ("cbar".to_string(), 128.0 * m2 * v.powi(4)),
    ])
}

fn need<T: Copy>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| invalid(format!("missing input '{name}'")))
}

/// Evaluates the right-hand side of `id` with capped constants.
pub fn bound_rhs(id: TheoremId, inputs: &BoundInputs) -> Result<BoundReport> {
    let mut flags = Vec::new();
    let mut used = BTreeMap::new();
    let mut constant_cap = 1.0;
    let (bias, remainder, residual) = if id == TheoremId::Upper {
        let n = need(inputs.n, "n")? as f64;
        let k = need(inputs.k, "K")? as f64;
        let d = need(inputs.sparsity, "D")? as f64;
        let gamma = need(inputs.gamma, "gamma")?;
        let lk = k.ln();
        let r = ((gamma * gamma * lk / n).sqrt() + d * lk / n).min((lk / n).sqrt());
        (0.0, r, None)
    } else {
        let n = need(inputs.n, "n")?;
        let k = need(inputs.k, "K")?;
        if n == 0 || k == 0 {
            return Err(invalid("n and K must be positive"));
        }
        let m_upper = need(inputs.upper, "M")?;
        let v = need(inputs.ratio, "V")?;
        if !(v >= 1.0 && v.is_finite() && m_upper > 0.0) {
            return Err(invalid(format!("need finite V >= 1 and M > 0, got V = {v}, M = {m_upper}")));
        }
        let caps = constant_caps(m_upper, v);
        let nf = n as f64;
        let kf = k as f64;
        let log_k = kf.ln();
        let log_kd = if id.uses_delta() {
            let delta = need(inputs.delta, "delta")?;
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(invalid(format!("delta must be positive, got {delta}")));
            }
            if delta >= 0.5 {
                flags.push("delta-out-of-range".to_string());
            }
            (kf / delta).ln().max(0.0)
        } else {
            log_k
        };
        if let Some(min_k) = id.min_k() {
            if k < min_k {
                flags.push(format!("K-below-{min_k}"));
            }
        }
        let mut cap = |name: &str| -> f64 {
            let c = caps[name];
            used.insert(name.to_string(), c);
            c
        };
        let kappa = || -> Result<f64> {
            let c = need(inputs.compatibility, "compatibility")?;
            if !(c >= 0.0) {
                return Err(invalid(format!("compatibility must be nonnegative, got {c}")));
            }
            Ok(c)
        };
        let j = || need(inputs.support_size, "support_size").map(|s| s as f64);
        let sparse = |c: f64, jj: f64, kap: f64, log: f64| -> f64 {
            if jj == 0.0 {
                0.0
            } else {
                c * jj * log / (nf * kap)
            }
        };
        match id {
            TheoremId::BoundDeviation | TheoremId::BoundDevThree | TheoremId::BoundExpOne => {
                let (a, b) = match id {
                    TheoremId::BoundDeviation => ("c1", "c2"),
                    TheoremId::BoundDevThree => ("c4", "c5"),
                    _ => ("c7", "c8"),
                };
                let bias = need(inputs.bias, "bias")?;
                let off = need(inputs.off_support_mass, "off_support_mass")?;
                let jj = j()?;
                let ca = cap(a);
                let cb = cap(b);
                constant_cap = cb;
                let kap = if jj == 0.0 { 1.0 } else { kappa()? };
                (bias, ca * (log_kd / nf).sqrt() * off + sparse(cb, jj, kap, log_kd), None)
            }
            TheoremId::BoundDevTwo | TheoremId::BoundDevFour | TheoremId::BoundExpTwo => {
                let name = match id {
                    TheoremId::BoundDevTwo => "c3",
                    TheoremId::BoundDevFour => "c6",
                    _ => "c9",
                };
                let bias = need(inputs.bias, "bias")?;
                let jj = j()?;
                if jj == 0.0 {
                    return Err(invalid("support_size must be at least 1 for this bound"));
                }
                let c = cap(name);
                constant_cap = c;
                (bias, sparse(c, jj, kappa()?, log_kd), None)
            }
            TheoremId::ConvOracle => {
                let bias = need(inputs.bias, "bias")?;
                let c = cap("c1");
                constant_cap = c;
                (bias, c * (log_kd / nf).sqrt(), None)
            }
            TheoremId::MsAggr | TheoremId::CAggr | TheoremId::DAggr => {
                let bias = need(inputs.bias, "bias")?;
                let size = match id {
                    TheoremId::MsAggr => 1.0,
                    TheoremId::CAggr => kf,
                    _ => need(inputs.sparsity, "D")? as f64,
                };
                let c = cap("c9");
                constant_cap = c;
                (bias, sparse(c, size, kappa()?, log_k), None)
            }
            TheoremId::ElOne => {
                let c = cap("c10");
                constant_cap = c;
                (0.0, c * j()? / kappa()? * (log_kd / nf).sqrt(), None)
            }
            TheoremId::EuclOne => {
                let c = cap("c11");
                constant_cap = c;
                (0.0, c / kappa()? * (2.0 * j()? * log_kd / nf).sqrt(), None)
            }
            TheoremId::EuclTwo => {
                let c = cap("c11");
                constant_cap = c;
                (0.0, c / kappa()? * (2.0 * log_kd / nf).sqrt(), None)
            }
            TheoremId::BoundDevFive | TheoremId::BoundDevSix => {
                let bias = need(inputs.bias, "bias")?;
                let jj = j()?;
                if jj == 0.0 {
                    return Err(invalid("support_size must be at least 1 for this bound"));
                }
                let c = cap("cbar");
                constant_cap = c;
                let core = sparse(c, jj, kappa()?, log_kd);
                if id == TheoremId::BoundDevFive {
                    (bias, core, inputs.residual)
                } else {
                    let s = 2.0 * m_upper * m_upper;
                    (s * bias, s * core, None)
                }
            }
            TheoremId::Upper => unreachable!(),
        }
    };
    let rhs_value = bias + remainder;
    Ok(BoundReport {
        theorem_id: id,
        inputs: inputs.clone(),
        constant_cap,
        constants: used,
        rhs_value,
        remainder,
        residual,
        flags,
    })
}

/// `kappa-bar(J, 3) <= kappa(J, 3) <= (9/4) kappa-bar(J, 1)` on supplied estimates,
/// with relative tolerance `tol`.
pub fn cone_chain_holds(kappa_bar3: f64, kappa3: f64, kappa_bar1: f64, tol: f64) -> bool {
    let slack = tol * (1.0 + kappa3.abs());
    kappa_bar3 <= kappa3 + slack && kappa3 <= 2.25 * kappa_bar1 + slack
}

/// Spectral inputs of the weight-error bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpectra {
    /// `kappa-bar(J*, 1)` of the population Gram matrix.
    pub kappa_bar: f64,
    /// `kappa^RE(|J*|, 1)` of the population Gram matrix.
    pub restricted_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightErrorReport {
    pub support_size: usize,
    pub l1_error: f64,
    pub l2_error: f64,
    pub l2_squared_error: f64,
    pub el_one: BoundReport,
    pub eucl_one: BoundReport,
    pub eucl_two: BoundReport,
    /// `||.||_2 <= ||.||_1`.
    pub norm_order_holds: bool,
}

/// Weight errors of `pi_hat` against `pi_star`, each paired with its bound.
#[allow(clippy::too_many_arguments)]
pub fn weight_error_report(
    pi_hat: &WeightVector,
    pi_star: &WeightVector,
    spectra: WeightSpectra,
    n: usize,
    k: usize,
    delta: f64,
    m_upper: f64,
    v: f64,
) -> Result<WeightErrorReport> {
    if pi_hat.len() != pi_star.len() {
        return Err(invalid("weight vectors differ in length"));
    }
    let support_size = pi_star.support(1e-10).len();
    let diff: Vec<f64> = pi_hat.as_slice().iter().zip(pi_star.as_slice()).map(|(a, b)| a - b).collect();
    let l1: f64 = diff.iter().map(|d| d.abs()).sum();
    let l2sq: f64 = diff.iter().map(|d| d * d).sum();
    let base = BoundInputs {
        n: Some(n),
        k: Some(k),
        delta: Some(delta),
        support_size: Some(support_size),
        ratio: Some(v),
        upper: Some(m_upper),
        ..Default::default()
    };
    let with = |c: f64| BoundInputs {
        compatibility: Some(c),
        ..base.clone()
    };
    Ok(WeightErrorReport {
        support_size,
        l1_error: l1,
        l2_error: l2sq.sqrt(),
        l2_squared_error: l2sq,
        el_one: bound_rhs(TheoremId::ElOne, &with(spectra.kappa_bar))?,
        eucl_one: bound_rhs(TheoremId::EuclOne, &with(spectra.restricted_eigenvalue))?,
        eucl_two: bound_rhs(TheoremId::EuclTwo, &with(spectra.restricted_eigenvalue))?,
        norm_order_holds: l2sq.sqrt() <= l1 + 1e-15,
    })
}
