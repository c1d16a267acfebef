//! Compatibility constants, restricted eigenvalues and principal-minor spectra.
//!
//! All three constants are infima of a quadratic form over a cone. Fixing the
//! signs `sigma` of `v_J` turns the normalization `||v_J||_1 = 1` into the face
//! `{sigma_j v_j >= 0, sum sigma_j v_j = 1}` of the l1 sphere, so `kappa-bar`
//! becomes a convex quadratic program per sign pattern. The value returned by a
//! search is an upper estimate; `lambda_min(A)` is a certified lower bound.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::GramMatrix;
use crate::error::{invalid, Result};
use crate::sampling::SeedSpec;

/// Largest number of sign patterns or supports enumerated exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Kappa,
    KappaBar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub support: Vec<usize>,
    pub c: f64,
    pub variant: Variant,
}

impl ConeSpec {
    pub fn kappa(support: Vec<usize>, c: f64) -> Self {
        Self {
            support,
            c,
            variant: Variant::Kappa,
        }
    }

    pub fn kappa_bar(support: Vec<usize>, c: f64) -> Self {
        Self {
            support,
            c,
            variant: Variant::KappaBar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    /// `max(lambda_min(A), 0)`.
    pub certified_lower: f64,
    /// Smallest ratio found.
    pub search_upper: f64,
    /// Number of local searches run.
    pub restarts: usize,
    pub argmin_direction: Vec<f64>,
    /// Whether the minimizer sits on the boundary of the cone.
    pub boundary_attained: bool,
    /// False when sign patterns or supports were sampled instead of enumerated.
    pub exhaustive: bool,
}

/// `kappa_A(J, c)` or `kappa-bar_A(J, c)`.
///
/// For `kappa-bar` at `c = 0` the off-support part is forced to zero and the
/// ratio is taken over vectors supported on `J`.
pub fn compatibility_constant(a: &GramMatrix, spec: &ConeSpec, restarts: usize, seed: &SeedSpec) -> Result<ConstantEstimate> {
    let k = a.dim();
    validate_support(&spec.support, k)?;
    if !(spec.c >= 0.0 && spec.c.is_finite()) {
        return Err(invalid(format!("cone parameter must be finite and nonnegative, got {}", spec.c)));
    }
    if spec.variant == Variant::Kappa && spec.c == 0.0 {
        return Err(invalid("kappa needs c > 0; its cone is empty at c = 0"));
    }
    let ev = a.eigenvalues();
    let cone = Cone::new(a, &spec.support, ev[ev.len() - 1]);
    let (patterns, exhaustive) = sign_patterns(spec.support.len(), restarts, seed);
    let certified_lower = ev[0].max(0.0);
    let j = spec.support.len() as f64;
    let est = match spec.variant {
        Variant::KappaBar => {
            let (q, v) = cone.min_quadratic(&patterns, spec.c);
            let off = cone.off_norm(&v);
            ConstantEstimate {
                certified_lower,
                search_upper: j * q,
                restarts: patterns.len(),
                boundary_attained: spec.c > 0.0 && off >= spec.c * (1.0 - 1e-6),
                argmin_direction: v,
                exhaustive,
            }
        }
        Variant::Kappa => {
            let c = spec.c;
            let ratio = |v: &[f64]| {
                let b = cone.off_norm(v);
                let gap = c - b;
                if gap <= 0.0 {
                    f64::INFINITY
                } else {
                    c * c * j * quad(a.matrix(), v) / (gap * gap)
                }
            };
            let mut evals: Vec<(f64, f64, Vec<f64>)> = Vec::new();
            let eval = |t: f64, evals: &mut Vec<(f64, f64, Vec<f64>)>| -> f64 {
                let (q, v) = cone.min_quadratic(&patterns, t);
                let h = c * c * j * q / ((c - t) * (c - t));
                let r = ratio(&v).min(h);
                evals.push((t, r, v));
                h
            };
            let mut grid: Vec<f64> = (0..16).map(|i| c * i as f64 / 16.0).collect();
            grid.push(c / 3.0);
            grid.sort_by(f64::total_cmp);
            let hs: Vec<f64> = grid.iter().map(|&t| eval(t, &mut evals)).collect();
            let best = (0..grid.len()).min_by(|&x, &y| hs[x].total_cmp(&hs[y])).unwrap_or(0);
            let mut lo = if best == 0 { 0.0 } else { grid[best - 1] };
            let mut hi = if best + 1 < grid.len() { grid[best + 1] } else { c * (1.0 - 1.0 / 64.0) };
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            let mut x1 = hi - phi * (hi - lo);
            let mut x2 = lo + phi * (hi - lo);
            let mut f1 = eval(x1, &mut evals);
            let mut f2 = eval(x2, &mut evals);
            for _ in 0..24 {
                if f1 <= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - phi * (hi - lo);
                    f1 = eval(x1, &mut evals);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + phi * (hi - lo);
                    f2 = eval(x2, &mut evals);
                }
            }
            let (_, r, v) = evals
                .into_iter()
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .expect("at least one evaluation");
            ConstantEstimate {
                certified_lower,
                search_upper: r,
                restarts: patterns.len(),
                boundary_attained: cone.off_norm(&v) >= c * (1.0 - 1e-6),
                argmin_direction: v,
                exhaustive,
            }
        }
    };
    Ok(est)
}

/// `kappa^RE(s, c)`: infimum of `v^T A v` over `|J| <= s`, `||v_Jc||_1 <= c ||v_J||_1`, `||v_J||_2 = 1`.
pub fn restricted_eigenvalue(a: &GramMatrix, s: usize, c: f64, restarts: usize, seed: &SeedSpec) -> Result<ConstantEstimate> {
    let k = a.dim();
    if s == 0 || s > k {
        return Err(invalid(format!("sparsity must lie in 1..={k}, got {s}")));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(invalid(format!("cone parameter must be finite and nonnegative, got {c}")));
    }
    let (supports, supports_exhaustive) = supports(k, s, seed);
    let ev = a.eigenvalues();
    let certified_lower = ev[0].max(0.0);
    let mut best = (f64::INFINITY, vec![0.0; k], false);
    let mut runs = 0;
    let mut exhaustive = supports_exhaustive;
    for (idx, support) in supports.iter().enumerate() {
        let cone = Cone::new(a, support, ev[ev.len() - 1]);
        let sub_seed = seed.child(&format!("re/{idx}"));
        let (patterns, ex) = sign_patterns(s, restarts, &sub_seed);
        exhaustive &= ex;
        let mut starts: Vec<Vec<f64>> = patterns.iter().map(|p| cone.barycenter(p)).collect();
        starts.push(cone.eigen_seed());
        for start in starts {
            runs += 1;
            let (r, v) = cone.min_re_ratio(start, c);
            if r < best.0 {
                let on_boundary = c > 0.0 && cone.off_norm(&v) >= c * cone.on_norm1(&v) * (1.0 - 1e-6);
                let on2 = cone.on.iter().map(|&j| v[j] * v[j]).sum::<f64>().sqrt();
                best = (r, v.iter().map(|x| x / on2).collect(), on_boundary);
            }
        }
    }
    Ok(ConstantEstimate {
        certified_lower,
        search_upper: best.0,
        restarts: runs,
        argmin_direction: best.1,
        boundary_attained: best.2,
        exhaustive,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorExtremes {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub minors_examined: usize,
    /// False when the minors were sampled.
    pub exhaustive: bool,
}

/// Extreme eigenvalues over all `k x k` principal minors.
pub fn minor_eigen_extremes(a: &GramMatrix, k: usize) -> Result<MinorExtremes> {
    let dim = a.dim();
    if k == 0 || k > dim {
        return Err(invalid(format!("minor size must lie in 1..={dim}, got {k}")));
    }
    let seed = SeedSpec::new(0, 0, "minor-eigen-extremes");
    let (subsets, exhaustive) = supports(dim, k, &seed);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &subsets {
        let sub = a.matrix().select_rows(s).select_columns(s);
        for ev in SymmetricEigen::new(sub).eigenvalues.iter() {
            lo = lo.min(*ev);
            hi = hi.max(*ev);
        }
    }
    Ok(MinorExtremes {
        lambda_min: lo,
        lambda_max: hi,
        minors_examined: subsets.len(),
        exhaustive,
    })
}

fn validate_support(support: &[usize], k: usize) -> Result<()> {
    if support.is_empty() {
        return Err(invalid("support must be non-empty"));
    }
    let mut seen = vec![false; k];
    for &j in support {
        if j >= k {
            return Err(invalid(format!("support index {j} out of range for K = {k}")));
        }
        if seen[j] {
            return Err(invalid(format!("support index {j} repeated")));
        }
        seen[j] = true;
    }
    Ok(())
}

/// Binomial coefficient, saturating.
pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// `k`-subsets of `0..n` in lexicographic order, or a seeded sample of them.
fn supports(n: usize, k: usize, seed: &SeedSpec) -> (Vec<Vec<usize>>, bool) {
    let total = binomial(n, k);
    if total <= EXHAUSTIVE_LIMIT {
        let mut out = Vec::with_capacity(total);
        let mut cur: Vec<usize> = (0..k).collect();
        loop {
            out.push(cur.clone());
            let mut i = k;
            while i > 0 && cur[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            cur[i - 1] += 1;
            for t in i..k {
                cur[t] = cur[t - 1] + 1;
            }
        }
        return (out, true);
    }
    let mut rng = seed.child("supports").rng();
    let mut out: Vec<Vec<usize>> = (0..EXHAUSTIVE_LIMIT / 10)
        .map(|_| {
            let mut s = sample(&mut rng, n, k).into_vec();
            s.sort_unstable();
            s
        })
        .collect();
    out.sort();
    out.dedup();
    (out, false)
}

/// Sign patterns on `|J|` coordinates with the first sign fixed to `+`.
fn sign_patterns(size: usize, restarts: usize, seed: &SeedSpec) -> (Vec<Vec<f64>>, bool) {
    let free = size.saturating_sub(1);
    let expand = |bits: u64| -> Vec<f64> {
        (0..size)
            .map(|i| if i > 0 && (bits >> (i - 1)) & 1 == 1 { -1.0 } else { 1.0 })
            .collect()
    };
    if free < 63 && (1usize << free) <= EXHAUSTIVE_LIMIT {
        return ((0..1u64 << free).map(expand).collect(), true);
    }
    let mut rng = seed.child("signs").rng();
    let mut out = vec![expand(0)];
    for _ in 1..restarts.max(1) {
        out.push((0..size).map(|i| if i > 0 && rng.random::<bool>() { -1.0 } else { 1.0 }).collect());
    }
    (out, false)
}

fn quad(a: &DMatrix<f64>, v: &[f64]) -> f64 {
    let v = DVector::from_column_slice(v);
    (v.transpose() * a * &v)[(0, 0)]
}

/// The cone geometry for one support `J`.
struct Cone<'a> {
    a: &'a DMatrix<f64>,
    on: Vec<usize>,
    off: Vec<usize>,
    lipschitz: f64,
}

impl<'a> Cone<'a> {
    fn new(a: &'a GramMatrix, support: &[usize], top_eigenvalue: f64) -> Self {
        let k = a.dim();
        let mut is_on = vec![false; k];
        support.iter().for_each(|&j| is_on[j] = true);
        let off = (0..k).filter(|&j| !is_on[j]).collect();
        Self {
            a: a.matrix(),
            on: support.to_vec(),
            off,
            lipschitz: 2.0 * top_eigenvalue.max(0.0),
        }
    }

    fn off_norm(&self, v: &[f64]) -> f64 {
        self.off.iter().map(|&j| v[j].abs()).sum()
    }

    fn on_norm1(&self, v: &[f64]) -> f64 {
        self.on.iter().map(|&j| v[j].abs()).sum()
    }

    fn barycenter(&self, signs: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.a.nrows()];
        let w = 1.0 / self.on.len() as f64;
        for (&j, s) in self.on.iter().zip(signs) {
            v[j] = s * w;
        }
        v
    }

    /// Bottom eigenvector of `A_JJ`, scaled to unit l1 norm on `J`.
    fn eigen_seed(&self) -> Vec<f64> {
        let sub = self.a.select_rows(&self.on).select_columns(&self.on);
        let eig = SymmetricEigen::new(sub);
        let i = (0..eig.eigenvalues.len())
            .min_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]))
            .unwrap_or(0);
        let col = eig.eigenvectors.column(i);
        let l1: f64 = col.iter().map(|x| x.abs()).sum();
        let mut v = vec![0.0; self.a.nrows()];
        for (t, &j) in self.on.iter().enumerate() {
            v[j] = col[t] / l1;
        }
        v
    }

    /// Projection onto the sign face on `J` times the l1 ball of radius `c` off `J`.
    fn project(&self, v: &mut [f64], signs: &[f64], c: f64) {
        let mut on: Vec<f64> = self.on.iter().zip(signs).map(|(&j, s)| s * v[j]).collect();
        project_simplex(&mut on);
        for ((&j, s), x) in self.on.iter().zip(signs).zip(on) {
            v[j] = s * x;
        }
        let mut off: Vec<f64> = self.off.iter().map(|&j| v[j]).collect();
        project_l1_ball(&mut off, c);
        for (&j, x) in self.off.iter().zip(off) {
            v[j] = x;
        }
    }

    /// Minimum of `v^T A v` over the union of the faces in `patterns`, accelerated projected gradient.
    fn min_quadratic(&self, patterns: &[Vec<f64>], c: f64) -> (f64, Vec<f64>) {
        let mut best = (f64::INFINITY, Vec::new());
        for signs in patterns {
            let (q, v) = self.qp(signs, c);
            if q < best.0 {
                best = (q, v);
            }
        }
        best
    }

    fn qp(&self, signs: &[f64], c: f64) -> (f64, Vec<f64>) {
        let k = self.a.nrows();
        let mut x = self.barycenter(signs);
        let mut best = (quad(self.a, &x), x.clone());
        if self.lipschitz == 0.0 {
            return best;
        }
        let step = 1.0 / self.lipschitz;
        let mut y = x.clone();
        let mut t = 1.0f64;
        for _ in 0..3000 {
            let grad = self.a * DVector::from_column_slice(&y);
            let mut next: Vec<f64> = (0..k).map(|i| y[i] - 2.0 * step * grad[i]).collect();
            self.project(&mut next, signs, c);
            let q = quad(self.a, &next);
            let moved = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if q > best.0 {
                // Restart the momentum when the objective goes up.
                y = best.1.clone();
                x = best.1.clone();
                t = 1.0;
                if moved < 1e-15 {
                    break;
                }
                continue;
            }
            best = (q, next.clone());
            y = (0..k).map(|i| next[i] + (t - 1.0) / tn * (next[i] - x[i])).collect();
            x = next;
            t = tn;
            if moved < 1e-14 {
                break;
            }
        }
        best
    }

    /// Local minimum of `v^T A v / ||v_J||_2^2` over the cone face of `start`'s sign pattern.
    fn min_re_ratio(&self, start: Vec<f64>, c: f64) -> (f64, Vec<f64>) {
        let signs: Vec<f64> = self.on.iter().map(|&j| if start[j] < 0.0 { -1.0 } else { 1.0 }).collect();
        let ratio = |v: &[f64]| -> f64 {
            let on: f64 = self.on.iter().map(|&j| v[j] * v[j]).sum();
            quad(self.a, v) / on
        };
        let mut v = start;
        self.project(&mut v, &signs, c);
        let mut r = ratio(&v);
        let mut step = 1.0 / (self.lipschitz.max(f64::MIN_POSITIVE) * self.on.len() as f64);
        for _ in 0..200 {
            let on: f64 = self.on.iter().map(|&j| v[j] * v[j]).sum();
            let av = self.a * DVector::from_column_slice(&v);
            let mut grad: Vec<f64> = av.iter().map(|x| 2.0 * x / on).collect();
            for &j in &self.on {
                grad[j] -= 2.0 * r * v[j] / on;
            }
            let mut accepted = false;
            for _ in 0..40 {
                let mut cand: Vec<f64> = v.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
                self.project(&mut cand, &signs, c);
                let rc = ratio(&cand);
                let decrease: f64 = grad.iter().zip(cand.iter().zip(&v)).map(|(g, (a, b))| g * (a - b)).sum();
                if rc <= r + 0.5 * decrease {
                    let moved = cand.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    v = cand;
                    r = rc;
                    accepted = moved > 1e-15;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (r, v)
    }
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(x: &mut [f64]) {
    let mut s: Vec<f64> = x.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, v) in s.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    x.iter_mut().for_each(|v| *v = (*v - theta).max(0.0));
}

/// Euclidean projection onto the l1 ball of radius `r`.
fn project_l1_ball(x: &mut [f64], r: f64) {
    if r <= 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    if l1 <= r {
        return;
    }
    let mut abs: Vec<f64> = x.iter().map(|v| v.abs() / r).collect();
    project_simplex(&mut abs);
    for (v, a) in x.iter_mut().zip(abs) {
        *v = v.signum() * a * r;
    }
}
