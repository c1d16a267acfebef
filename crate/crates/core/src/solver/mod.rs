//! Maximum likelihood weights over the simplex.
//!
//! Every solve minimizes `sum_r c_r * loss((Z pi)_r)` over the simplex, where
//! the rows are either samples (`c_r = 1/n`) or quadrature nodes
//! (`c_r = w_r f*(x_r)`). The loss is `-log u` or the quadratic extension
//! below a threshold `mu`.

mod frank_wolfe;
mod lp;
mod mirror;

use std::borrow::Cow;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dictionary::EvaluationMatrix;
use crate::error::{invalid, Error, Result};

pub use lp::{solve_standard_lp, LpOutcome};

/// A point of the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates nonnegativity and a unit sum within 1e-9. Inputs are never rescaled.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("weight vector must be non-empty"));
        }
        if let Some(w) = entries.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(invalid(format!("weight {w} is negative or not finite")));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(entries))
    }

    /// Clamps tiny negatives and rescales. Used for solver iterates.
    pub(crate) fn from_iterate(mut entries: Vec<f64>) -> Self {
        for w in entries.iter_mut() {
            if !(*w > 0.0) {
                *w = 0.0;
            }
        }
        let sum: f64 = entries.iter().sum();
        for w in entries.iter_mut() {
            *w /= sum;
        }
        Self(entries)
    }

    pub fn vertex(k: usize, j: usize) -> Self {
        let mut v = vec![0.0; k];
        v[j] = 1.0;
        Self(v)
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices with entries above `threshold`.
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.0[j] > threshold).collect()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// Per-row loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "kebab-case")]
pub enum Loss {
    /// `-log u`.
    NegLog,
    /// `-log(u/mu)` above `mu`, quadratic continuation below.
    Surrogate { mu: f64 },
}

impl Loss {
    #[inline]
    pub(crate) fn value(self, u: f64) -> f64 {
        match self {
            Loss::NegLog => {
                if u > 0.0 {
                    -u.ln()
                } else {
                    f64::INFINITY
                }
            }
            Loss::Surrogate { mu } => {
                if u >= mu {
                    -(u / mu).ln()
                } else {
                    let t = 1.0 - u / mu;
                    t + 0.5 * t * t
                }
            }
        }
    }

    #[inline]
    pub(crate) fn d1(self, u: f64) -> f64 {
        match self {
            Loss::NegLog => -1.0 / u,
            Loss::Surrogate { mu } => {
                if u >= mu {
                    -1.0 / u
                } else {
                    -(2.0 - u / mu) / mu
                }
            }
        }
    }

    #[inline]
    pub(crate) fn d2(self, u: f64) -> f64 {
        match self {
            Loss::NegLog => 1.0 / (u * u),
            Loss::Surrogate { mu } => {
                if u >= mu {
                    1.0 / (u * u)
                } else {
                    1.0 / (mu * mu)
                }
            }
        }
    }
}

/// Surrogate loss and its derivative at `u`.
///
/// `(1 - u/mu) + (1 - u/mu)^2 / 2` below `mu`, `-log(u/mu)` above. At `u = 0`
/// the value is `3/2`.
pub fn bar_ell(u: f64, mu: f64) -> Result<(f64, f64)> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(invalid(format!("mu must be positive, got {mu}")));
    }
    if !(u >= 0.0) || !u.is_finite() {
        return Err(invalid(format!("surrogate argument must be nonnegative, got {u}")));
    }
    let loss = Loss::Surrogate { mu };
    Ok((loss.value(u), loss.d1(u)))
}

/// Second derivative of the surrogate.
pub fn bar_ell_second(u: f64, mu: f64) -> Result<f64> {
    bar_ell(u, mu)?;
    Ok(Loss::Surrogate { mu }.d2(u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FrankWolfe,
    MirrorDescent,
}

/// Step rule for mirror descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MirrorStep {
    /// Backtracking on the Bregman upper model; the step doubles after each accepted step.
    Adaptive,
    /// `1 / (V^2 sqrt(t))` with the running average reported.
    Averaged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub method: Method,
    pub gap_tolerance: f64,
    pub max_iterations: usize,
    /// Threshold of the sample constraint `min_i Z_i pi >= mu`. Zero disables it.
    pub mu: f64,
    pub line_search_tolerance: f64,
    pub record_trace: bool,
    pub mirror_step: MirrorStep,
    /// Ratio `V` used by the averaged mirror step.
    pub ratio_hint: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_weights: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: Method::FrankWolfe,
            gap_tolerance: 1e-8,
            max_iterations: 50_000,
            mu: 0.0,
            line_search_tolerance: 1e-12,
            record_trace: false,
            mirror_step: MirrorStep::Adaptive,
            ratio_hint: None,
            initial_weights: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_tolerance > 0.0) {
            return Err(invalid(format!("gap_tolerance must be positive, got {}", self.gap_tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(invalid(format!("mu must be finite and nonnegative, got {}", self.mu)));
        }
        if !(self.line_search_tolerance > 0.0) {
            return Err(invalid("line_search_tolerance must be positive"));
        }
        Ok(())
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_gap(mut self, gap: f64) -> Self {
        self.gap_tolerance = gap;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub weights: WeightVector,
    /// Objective at `weights` (the surrogate objective for surrogate solves).
    pub objective: f64,
    pub certificate_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether `min_i Z_i pi` sits at the threshold.
    pub active_constraint: bool,
    pub sample_feasible: bool,
    /// Filled in by callers that know the true density.
    pub population_feasible: Option<bool>,
    /// Surrogate solves only: whether the surrogate and the log-likelihood agree at the solution.
    pub surrogate_coincides: Option<bool>,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

impl SolverResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Weighted sum of row losses, the object every solver works on.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    z: &'a DMatrix<f64>,
    coef: Cow<'a, [f64]>,
    loss: Loss,
}

impl<'a> Objective<'a> {
    pub fn new(z: &'a DMatrix<f64>, coef: Cow<'a, [f64]>, loss: Loss) -> Result<Self> {
        if coef.len() != z.nrows() {
            return Err(invalid(format!(
                "{} row coefficients for {} rows",
                coef.len(),
                z.nrows()
            )));
        }
        if z.ncols() == 0 || z.nrows() == 0 {
            return Err(invalid("objective needs at least one row and one column"));
        }
        Ok(Self { z, coef, loss })
    }

    /// Empirical objective `(1/n) sum_i loss(Z_i pi)`.
    pub fn empirical(z: &'a EvaluationMatrix, loss: Loss) -> Result<Self> {
        let n = z.samples();
        if n == 0 {
            return Err(invalid("no samples"));
        }
        Self::new(z.matrix(), Cow::Owned(vec![1.0 / n as f64; n]), loss)
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn rows(&self) -> usize {
        self.z.nrows()
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    #[inline]
    pub(crate) fn column(&self, j: usize) -> &[f64] {
        let n = self.rows();
        &self.z.as_slice()[j * n..(j + 1) * n]
    }

    pub(crate) fn coef(&self) -> &[f64] {
        &self.coef
    }

    /// `Z pi`.
    pub fn apply(&self, pi: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.rows()];
        for (j, &w) in pi.iter().enumerate() {
            if w != 0.0 {
                for (o, z) in u.iter_mut().zip(self.column(j)) {
                    *o += w * z;
                }
            }
        }
        u
    }

    /// Objective given `u = Z pi`.
    pub fn value_at(&self, u: &[f64]) -> f64 {
        u.iter().zip(self.coef.iter()).map(|(&x, &c)| c * self.loss.value(x)).sum()
    }

    pub fn value(&self, pi: &[f64]) -> f64 {
        self.value_at(&self.apply(pi))
    }

    /// Gradient given `u = Z pi`.
    pub fn gradient_at(&self, u: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = u.iter().zip(self.coef.iter()).map(|(&x, &c)| c * self.loss.d1(x)).collect();
        (0..self.dim())
            .map(|j| self.column(j).iter().zip(&r).map(|(z, r)| z * r).sum())
            .collect()
    }

    /// Frank-Wolfe gap over the whole simplex.
    pub fn simplex_gap(&self, pi: &[f64], g: &[f64]) -> f64 {
        let min = g.iter().copied().fold(f64::INFINITY, f64::min);
        pi.iter().zip(g).map(|(p, g)| p * g).sum::<f64>() - min
    }
}

/// `(1/n) sum_i -log(Z_i pi)`.
pub fn negative_log_likelihood(z: &EvaluationMatrix, weights: &WeightVector) -> Result<f64> {
    let u = checked_inner(z, weights)?;
    Ok(u.iter().map(|x| -x.ln()).sum::<f64>() / u.len() as f64)
}

/// `-(1/n) sum_i Z_ij / (Z_i pi)` for each `j`.
pub fn nll_gradient(z: &EvaluationMatrix, weights: &WeightVector) -> Result<Vec<f64>> {
    let u = checked_inner(z, weights)?;
    let obj = Objective::empirical(z, Loss::NegLog)?;
    Ok(obj.gradient_at(&u))
}

fn checked_inner(z: &EvaluationMatrix, weights: &WeightVector) -> Result<Vec<f64>> {
    if weights.len() != z.components() {
        return Err(invalid(format!(
            "{} weights for {} components",
            weights.len(),
            z.components()
        )));
    }
    if z.samples() == 0 {
        return Err(invalid("no samples"));
    }
    let u = z.apply(weights.as_slice());
    if let Some((i, x)) = u.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
        return Err(Error::Domain(format!("mixture value {x} at sample {i} is not positive")));
    }
    Ok(u)
}

/// Maximum likelihood weights, optionally under `min_i Z_i pi >= mu`.
pub fn fit_mle(z: &EvaluationMatrix, opts: &SolverOptions) -> Result<SolverResult> {
    opts.validate()?;
    if opts.mu == 0.0 {
        if let Some(v) = z.matrix().iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Domain(format!(
                "evaluation entry {v} is not positive; use a positive mu or the surrogate"
            )));
        }
    }
    let obj = Objective::empirical(z, Loss::NegLog)?;
    minimize(&obj, opts)
}

/// Minimizes the surrogate objective over the whole simplex.
pub fn fit_mle_surrogate(z: &EvaluationMatrix, mu: f64, opts: &SolverOptions) -> Result<SolverResult> {
    opts.validate()?;
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(invalid(format!("surrogate threshold must be positive, got {mu}")));
    }
    let obj = Objective::empirical(z, Loss::Surrogate { mu })?;
    let inner = SolverOptions {
        mu: 0.0,
        ..opts.clone()
    };
    let mut res = minimize(&obj, &inner)?;
    let u = obj.apply(res.weights.as_slice());
    let min_u = u.iter().copied().fold(f64::INFINITY, f64::min);
    res.sample_feasible = min_u >= mu;
    res.active_constraint = (min_u - mu).abs() <= 1e-9 * mu.max(1.0);
    res.surrogate_coincides = Some(min_u >= mu);
    Ok(res)
}

/// Runs the configured method on an arbitrary objective.
pub fn minimize(obj: &Objective<'_>, opts: &SolverOptions) -> Result<SolverResult> {
    opts.validate()?;
    let constraint = Constraint::resolve(obj, opts.mu)?;
    if let Some(init) = &opts.initial_weights {
        if init.len() != obj.dim() {
            return Err(invalid(format!(
                "initial weights have length {}, expected {}",
                init.len(),
                obj.dim()
            )));
        }
        WeightVector::new(init.clone())?;
    }
    let mut res = match opts.method {
        Method::FrankWolfe => frank_wolfe::run(obj, opts, &constraint)?,
        Method::MirrorDescent => {
            if constraint.is_binding() {
                return Err(invalid(
                    "mirror descent runs on the whole simplex; the mu constraint can bind here",
                ));
            }
            mirror::run(obj, opts)?
        }
    };
    let u = obj.apply(res.weights.as_slice());
    let min_u = u.iter().copied().fold(f64::INFINITY, f64::min);
    res.sample_feasible = min_u >= opts.mu - 1e-12;
    res.active_constraint = opts.mu > 0.0 && min_u <= opts.mu * (1.0 + 1e-9);
    Ok(res)
}

/// The sample constraint as seen by the solver.
#[derive(Debug, Clone)]
pub(crate) struct Constraint {
    /// Zero when the constraint cannot bind on the simplex.
    pub mu: f64,
}

impl Constraint {
    fn resolve(obj: &Objective<'_>, mu: f64) -> Result<Self> {
        if mu == 0.0 {
            return Ok(Self { mu: 0.0 });
        }
        let global_min = obj.z.iter().copied().fold(f64::INFINITY, f64::min);
        if global_min >= mu {
            return Ok(Self { mu: 0.0 });
        }
        Ok(Self { mu })
    }

    pub fn is_binding(&self) -> bool {
        self.mu > 0.0
    }
}

/// Best vertex `e_j` by objective value, lowest index on ties.
pub(crate) fn best_vertex(obj: &Objective<'_>) -> usize {
    let mut best = (0, f64::INFINITY);
    for j in 0..obj.dim() {
        let v = obj.value_at(obj.column(j));
        if v < best.1 {
            best = (j, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::sine_dictionary;

    fn ones(n: usize, k: usize) -> EvaluationMatrix {
        EvaluationMatrix::from_matrix(DMatrix::from_element(n, k, 1.0)).unwrap()
    }

    #[test]
    fn nll_of_ones_is_zero() {
        let z = ones(5, 3);
        assert_eq!(negative_log_likelihood(&z, &WeightVector::uniform(3)).unwrap(), 0.0);
        for g in nll_gradient(&z, &WeightVector::uniform(3)).unwrap() {
            assert!((g + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn nll_single_sine_row() {
        let d = sine_dictionary(2).unwrap();
        let z = d.evaluation_matrix(&[0.25]).unwrap();
        let v = negative_log_likelihood(&z, &WeightVector::vertex(2, 0)).unwrap();
        assert!((v + 1.5f64.ln()).abs() < 1e-15);
        assert!((v + 0.405465).abs() < 1e-6);
    }

    #[test]
    fn scaled_weights_are_rejected() {
        assert!(WeightVector::new(vec![0.6, 0.6]).is_err());
        assert!(WeightVector::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn zero_mixture_is_a_domain_error() {
        let z = EvaluationMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            negative_log_likelihood(&z, &WeightVector::vertex(2, 0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn k1_gradient_is_minus_one() {
        let d = sine_dictionary(1).unwrap();
        let z = d.evaluation_matrix(&[0.1, 0.2, 0.7]).unwrap();
        let g = nll_gradient(&z, &WeightVector::vertex(1, 0)).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn surrogate_branches_meet() {
        let mu = 0.3;
        let (v, d) = bar_ell(mu, mu).unwrap();
        assert_eq!(v, 0.0);
        assert!((d + 1.0 / mu).abs() < 1e-15);
        let below = bar_ell(mu * (1.0 - 1e-9), mu).unwrap().1;
        assert!((below + 1.0 / mu).abs() < 1e-6);
        assert!((bar_ell(2.0 * mu, mu).unwrap().0 + 2f64.ln()).abs() < 1e-15);
        assert_eq!(bar_ell(0.0, mu).unwrap().0, 1.5);
        assert!(bar_ell(-0.1, mu).is_err());
        assert!(bar_ell(0.1, 0.0).is_err());
    }

    #[test]
    fn options_validation() {
        assert!(SolverOptions::default().with_gap(0.0).validate().is_err());
        let o = SolverOptions {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(o.validate().is_err());
    }
}
