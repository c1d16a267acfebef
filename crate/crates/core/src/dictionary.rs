//! Density dictionaries on `[0, 1]`, their evaluation matrices and Gram matrices.
//!
//! A [`Dictionary`] is an ordered family of `K` bounded densities `f_1..f_K`
//! together with a centering function `f_0` (uniform by default). Every
//! component satisfies `m <= f_j(x) <= M`; the ratio `V = M / m` drives all
//! the constants downstream.
//!
//! Two Gram matrices are exposed. The empirical one averages outer products of
//! centered rows `Z_i - f_0(X_i)`; the population one integrates the same
//! product against a reference measure, either Lebesgue or a density on
//! `[0, 1]` (the data-generating law).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::Simpson;

/// Tolerance used when validating that a density integrates to one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Functional form of a [`Density`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityKind {
    /// `1 + amplitude * sin(2 pi k x)`; `amplitude = 1` touches zero.
    Sine { frequency: u32, amplitude: f64 },
    /// Piecewise-linear interpolation of `values` on a uniform grid over `[0, 1]`.
    Tabulated { values: Vec<f64> },
    /// Convex combination of other densities.
    Mixture {
        weights: Vec<f64>,
        components: Vec<Density>,
    },
}

/// A probability density on `[0, 1]` with certified bounds `lower <= f <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityKind", into = "DensityKind")]
pub struct Density {
    kind: DensityKind,
    lower: f64,
    upper: f64,
}

impl Density {
    /// `1 + amplitude * sin(2 pi k x)` for `k >= 1` and `0 < amplitude <= 1`.
    pub fn sine(frequency: u32, amplitude: f64) -> Result<Self> {
        if frequency == 0 {
            return Err(invalid("sine frequency must be at least 1"));
        }
        if !(amplitude > 0.0 && amplitude <= 1.0) {
            return Err(invalid(format!("sine amplitude must lie in (0, 1], got {amplitude}")));
        }
        Ok(Self {
            kind: DensityKind::Sine {
                frequency,
                amplitude,
            },
            lower: 1.0 - amplitude,
            upper: 1.0 + amplitude,
        })
    }

    /// The uniform density on `[0, 1]`.
    pub fn uniform() -> Self {
        Self {
            kind: DensityKind::Tabulated {
                values: vec![1.0, 1.0],
            },
            lower: 1.0,
            upper: 1.0,
        }
    }

    /// Mixture `sum_j w_j g_j`. Weights must lie on the simplex within 1e-9.
    pub fn mixture(weights: Vec<f64>, components: Vec<Density>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(invalid(format!(
                "mixture needs matching non-empty weights and components ({} vs {})",
                weights.len(),
                components.len()
            )));
        }
        check_simplex(&weights, 1e-9)?;
        let lower = weights.iter().zip(&components).map(|(w, c)| w * c.lower).sum();
        let upper = weights.iter().zip(&components).map(|(w, c)| w * c.upper).sum();
        Ok(Self {
            kind: DensityKind::Mixture {
                weights,
                components,
            },
            lower,
            upper,
        })
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    /// Certified lower bound `m`.
    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Certified upper bound `M`.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Pointwise value. Arguments outside `[0, 1]` are clamped to the interval.
    pub fn value(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match &self.kind {
            DensityKind::Sine {
                frequency,
                amplitude,
            } => 1.0 + amplitude * (2.0 * PI * f64::from(*frequency) * x).sin(),
            DensityKind::Tabulated { values } => interpolate(values, x),
            DensityKind::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.value(x))
                .sum(),
        }
    }

    /// `| integral of f - 1 |` under the given rule.
    pub fn normalization_error(&self, rule: &Simpson) -> f64 {
        (rule.integrate(|x| self.value(x)) - 1.0).abs()
    }
}

impl TryFrom<DensityKind> for Density {
    type Error = Error;

    fn try_from(kind: DensityKind) -> Result<Self> {
        match kind {
            DensityKind::Sine {
                frequency,
                amplitude,
            } => Density::sine(frequency, amplitude),
            DensityKind::Tabulated { values } => {
                validate_grid(&values)?;
                let integral = trapezoid(&values);
                if (integral - 1.0).abs() > NORMALIZATION_TOLERANCE {
                    return Err(invalid(format!(
                        "tabulated density integrates to {integral}, expected 1"
                    )));
                }
                Ok(tabulated_unchecked(values))
            }
            DensityKind::Mixture {
                weights,
                components,
            } => Density::mixture(weights, components),
        }
    }
}

impl From<Density> for DensityKind {
    fn from(d: Density) -> Self {
        d.kind
    }
}

/// Rescales a positive grid into a piecewise-linear density on `[0, 1]`.
///
/// The integral of the interpolant is the trapezoid sum of the grid, so the
/// returned density integrates to one exactly (up to rounding).
pub fn normalize_tabulated(grid: &[f64]) -> Result<Density> {
    validate_grid(grid)?;
    let integral = trapezoid(grid);
    let values = grid.iter().map(|v| v / integral).collect();
    Ok(tabulated_unchecked(values))
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(invalid(format!("tabulated grid needs at least 2 values, got {}", grid.len())));
    }
    if let Some(v) = grid.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(invalid(format!("tabulated grid values must be positive and finite, got {v}")));
    }
    Ok(())
}

fn tabulated_unchecked(values: Vec<f64>) -> Density {
    let lower = values.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Density {
        kind: DensityKind::Tabulated { values },
        lower,
        upper,
    }
}

fn trapezoid(values: &[f64]) -> f64 {
    let h = 1.0 / (values.len() - 1) as f64;
    let inner: f64 = values.iter().sum();
    h * (inner - 0.5 * (values[0] + values[values.len() - 1]))
}

fn interpolate(values: &[f64], x: f64) -> f64 {
    let cells = values.len() - 1;
    let pos = x * cells as f64;
    let i = (pos.floor() as usize).min(cells - 1);
    let t = pos - i as f64;
    (1.0 - t) * values[i] + t * values[i + 1]
}

pub(crate) fn check_simplex(weights: &[f64], tol: f64) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < -tol) {
        return Err(invalid(format!("weight {w} is not a nonnegative finite number")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(invalid(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Ordered family of `K` densities plus the centering function `f_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    components: Vec<Density>,
    centering: Density,
    lower: f64,
    upper: f64,
}

impl Dictionary {
    pub fn new(components: Vec<Density>, centering: Density) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("a dictionary needs at least one component"));
        }
        let lower = components.iter().map(Density::lower).fold(f64::INFINITY, f64::min);
        let upper = components.iter().map(Density::upper).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            components,
            centering,
            lower,
            upper,
        })
    }

    /// Dictionary with uniform centering.
    pub fn with_components(components: Vec<Density>) -> Result<Self> {
        Self::new(components, Density::uniform())
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Density] {
        &self.components
    }

    pub fn component(&self, j: usize) -> &Density {
        &self.components[j]
    }

    pub fn centering(&self) -> &Density {
        &self.centering
    }

    /// Common lower bound `m` over all components.
    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Common upper bound `M` over all components.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// `V = M / m`; infinite when some component vanishes.
    pub fn ratio(&self) -> f64 {
        if self.lower > 0.0 {
            self.upper / self.lower
        } else {
            f64::INFINITY
        }
    }

    /// Restriction to the components in `support`, keeping the centering.
    pub fn restrict(&self, support: &[usize]) -> Result<Self> {
        let comps = support
            .iter()
            .map(|&j| {
                self.components
                    .get(j)
                    .cloned()
                    .ok_or_else(|| invalid(format!("support index {j} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(comps, self.centering.clone())
    }

    /// `f_pi(x)` for raw weights (no simplex validation).
    pub fn mixture_value(&self, weights: &[f64], x: f64) -> f64 {
        self.components
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w != 0.0)
            .map(|(c, w)| w * c.value(x))
            .sum()
    }

    /// The mixture `f_pi` as a standalone [`Density`].
    pub fn mixture_density(&self, weights: &[f64]) -> Result<Density> {
        if weights.len() != self.len() {
            return Err(invalid(format!(
                "expected {} weights, got {}",
                self.len(),
                weights.len()
            )));
        }
        Density::mixture(weights.to_vec(), self.components.clone())
    }

    /// `n x K` matrix with entries `f_j(X_i)`.
    pub fn evaluation_matrix(&self, samples: &[f64]) -> Result<EvaluationMatrix> {
        if let Some(x) = samples.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(invalid(format!("sample {x} lies outside [0, 1]")));
        }
        let z = DMatrix::from_fn(samples.len(), self.len(), |i, j| {
            self.components[j].value(samples[i])
        });
        Ok(EvaluationMatrix { z })
    }

    /// `f_0(X_i)` for each sample.
    pub fn centering_values(&self, samples: &[f64]) -> Vec<f64> {
        samples.iter().map(|&x| self.centering.value(x)).collect()
    }

    /// Population Gram matrix `integral (f_k - f_0)(f_l - f_0) d(reference)`.
    pub fn population_gram(&self, quadrature_nodes: usize, reference: Reference<'_>) -> Result<GramMatrix> {
        if quadrature_nodes < 64 {
            return Err(invalid(format!(
                "population gram needs at least 64 quadrature nodes, got {quadrature_nodes}"
            )));
        }
        let rule = Simpson::new(quadrature_nodes)?;
        let k = self.len();
        let q = rule.len();
        let mut centered = DMatrix::zeros(q, k);
        let mut weights = Vec::with_capacity(q);
        for (r, (&x, &w)) in rule.nodes().iter().zip(rule.weights()).enumerate() {
            let f0 = self.centering.value(x);
            for j in 0..k {
                centered[(r, j)] = self.components[j].value(x) - f0;
            }
            let density = match reference {
                Reference::Lebesgue => 1.0,
                Reference::Density(d) => d.value(x),
            };
            weights.push(w * density);
        }
        let entries = weighted_cross_product(&centered, &weights);
        Ok(GramMatrix {
            entries,
            provenance: Provenance::Population {
                nodes: rule.len(),
                reference: reference.label(),
            },
        })
    }
}

/// Builds the sine dictionary `f_k(x) = 1 + sin(2 pi k x) / 2`, `k = 1..K`, with `f_0 = 1`.
pub fn sine_dictionary(k: usize) -> Result<Dictionary> {
    if k == 0 {
        return Err(invalid("sine dictionary needs K >= 1"));
    }
    let comps = (1..=k)
        .map(|f| Density::sine(f as u32, 0.5))
        .collect::<Result<Vec<_>>>()?;
    Dictionary::with_components(comps)
}

/// Measure against which the population Gram matrix integrates.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    Lebesgue,
    Density(&'a Density),
}

impl Reference<'_> {
    fn label(&self) -> String {
        match self {
            Reference::Lebesgue => "lebesgue".into(),
            Reference::Density(_) => "density".into(),
        }
    }
}

fn weighted_cross_product(centered: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let k = centered.ncols();
    let mut out = DMatrix::zeros(k, k);
    for a in 0..k {
        let ca = centered.column(a);
        for b in a..k {
            let cb = centered.column(b);
            let v: f64 = ca
                .iter()
                .zip(cb.iter())
                .zip(weights)
                .map(|((x, y), w)| w * x * y)
                .sum();
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    out
}

/// `n x K` matrix of component values at the sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationMatrix {
    z: DMatrix<f64>,
}

impl EvaluationMatrix {
    /// Wraps an arbitrary nonnegative matrix (e.g. one with vanishing entries).
    pub fn from_matrix(z: DMatrix<f64>) -> Result<Self> {
        if z.ncols() == 0 {
            return Err(invalid("evaluation matrix needs at least one column"));
        }
        if let Some(v) = z.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!("evaluation entries must be nonnegative and finite, got {v}")));
        }
        Ok(Self { z })
    }

    /// Builds from row-major data.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(invalid("ragged evaluation rows"));
        }
        Self::from_matrix(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
    }

    /// Sample count `n`.
    pub fn samples(&self) -> usize {
        self.z.nrows()
    }

    /// Dictionary size `K`.
    pub fn components(&self) -> usize {
        self.z.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.z[(i, j)]
    }

    /// `Z pi` as a vector of length `n`.
    pub fn apply(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.samples()];
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, z) in out.iter_mut().zip(self.z.column(j).iter()) {
                *o += w * z;
            }
        }
        out
    }

    /// Columns restricted to `support`.
    pub fn select_columns(&self, support: &[usize]) -> Self {
        Self {
            z: self.z.select_columns(support),
        }
    }
}

/// Where a Gram matrix came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provenance", rename_all = "kebab-case")]
pub enum Provenance {
    Empirical { samples: usize },
    Population { nodes: usize, reference: String },
    Supplied,
}

/// Symmetric positive semidefinite `K x K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    provenance: Provenance,
}

impl GramMatrix {
    /// Wraps a user-supplied matrix. Must be square and symmetric within 1e-12.
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(invalid(format!(
                "gram matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let g = Self {
            entries,
            provenance: Provenance::Supplied,
        };
        if g.asymmetry() > 1e-12 {
            return Err(invalid("gram matrix is not symmetric"));
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[(a, b)]
    }

    /// Largest `|A_ab - A_ba|`.
    pub fn asymmetry(&self) -> f64 {
        let k = self.dim();
        let mut worst: f64 = 0.0;
        for a in 0..k {
            for b in 0..a {
                worst = worst.max((self.entries[(a, b)] - self.entries[(b, a)]).abs());
            }
        }
        worst
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.entries.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("non-empty")
    }

    /// `v^T A v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        (v.transpose() * &self.entries * &v)[(0, 0)]
    }

    /// `t A` with the same provenance.
    pub fn scaled(&self, t: f64) -> Self {
        Self {
            entries: &self.entries * t,
            provenance: self.provenance.clone(),
        }
    }
}

/// `(1/n) sum_i (Z_i - f_0(X_i))(Z_i - f_0(X_i))^T`.
pub fn empirical_gram(z: &EvaluationMatrix, f0_values: &[f64]) -> Result<GramMatrix> {
    let n = z.samples();
    if f0_values.len() != n {
        return Err(invalid(format!(
            "centering values have length {}, expected {n}",
            f0_values.len()
        )));
    }
    if n == 0 {
        return Err(invalid("empirical gram needs at least one sample"));
    }
    let mut centered = z.matrix().clone();
    for j in 0..centered.ncols() {
        for (c, f0) in centered.column_mut(j).iter_mut().zip(f0_values) {
            *c -= f0;
        }
    }
    let weights = vec![1.0 / n as f64; n];
    Ok(GramMatrix {
        entries: weighted_cross_product(&centered, &weights),
        provenance: Provenance::Empirical { samples: n },
    })
}

/// Serialized form of a dictionary: `{kind, K, params, m, M}` plus optional centering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryDocument {
    pub kind: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub params: serde_json::Value,
    pub m: f64,
    #[serde(rename = "M")]
    pub upper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centering: Option<Density>,
}

impl Dictionary {
    /// Document form; sine-only dictionaries with a shared amplitude use the compact `sine` kind.
    pub fn to_document(&self) -> DictionaryDocument {
        let sine_params: Option<(Vec<u32>, f64)> = {
            let mut freqs = Vec::new();
            let mut amp = None;
            let mut ok = true;
            for c in &self.components {
                match c.kind() {
                    DensityKind::Sine {
                        frequency,
                        amplitude,
                    } if amp.is_none_or(|a| a == *amplitude) => {
                        freqs.push(*frequency);
                        amp = Some(*amplitude);
                    }
                    _ => ok = false,
                }
            }
            ok.then(|| (freqs, amp.unwrap_or(0.5)))
        };
        let all_tabulated = self
            .components
            .iter()
            .all(|c| matches!(c.kind(), DensityKind::Tabulated { .. }));
        let (kind, params) = if let Some((frequencies, amplitude)) = sine_params {
            ("sine", serde_json::json!({ "frequencies": frequencies, "amplitude": amplitude }))
        } else if all_tabulated {
            let grids: Vec<&Vec<f64>> = self
                .components
                .iter()
                .map(|c| match c.kind() {
                    DensityKind::Tabulated { values } => values,
                    _ => unreachable!(),
                })
                .collect();
            ("tabulated", serde_json::json!({ "grids": grids }))
        } else {
            ("mixed", serde_json::json!({ "components": self.components }))
        };
        let uniform = Density::uniform();
        DictionaryDocument {
            kind: kind.into(),
            k: self.len(),
            params,
            m: self.lower,
            upper: self.upper,
            centering: (self.centering != uniform).then(|| self.centering.clone()),
        }
    }

    pub fn from_document(doc: &DictionaryDocument) -> Result<Self> {
        let comps: Vec<Density> = match doc.kind.as_str() {
            "sine" => {
                #[derive(Deserialize)]
                struct P {
                    frequencies: Vec<u32>,
                    #[serde(default = "half")]
                    amplitude: f64,
                }
                fn half() -> f64 {
                    0.5
                }
                let p: P = serde_json::from_value(doc.params.clone())?;
                p.frequencies
                    .iter()
                    .map(|&f| Density::sine(f, p.amplitude))
                    .collect::<Result<_>>()?
            }
            "tabulated" => {
                #[derive(Deserialize)]
                struct P {
                    grids: Vec<Vec<f64>>,
                }
                let p: P = serde_json::from_value(doc.params.clone())?;
                p.grids
                    .into_iter()
                    .map(|values| Density::try_from(DensityKind::Tabulated { values }))
                    .collect::<Result<_>>()?
            }
            "mixed" => {
                #[derive(Deserialize)]
                struct P {
                    components: Vec<Density>,
                }
                let p: P = serde_json::from_value(doc.params.clone())?;
                p.components
            }
            other => return Err(invalid(format!("unknown dictionary kind '{other}'"))),
        };
        if comps.len() != doc.k {
            return Err(invalid(format!(
                "document declares K = {} but lists {} components",
                doc.k,
                comps.len()
            )));
        }
        let dict = Self::new(comps, doc.centering.clone().unwrap_or_else(Density::uniform))?;
        if (dict.lower - doc.m).abs() > 1e-12 || (dict.upper - doc.upper).abs() > 1e-12 {
            return Err(invalid(format!(
                "declared bounds [{}, {}] disagree with components [{}, {}]",
                doc.m, doc.upper, dict.lower, dict.upper
            )));
        }
        Ok(dict)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }
}
