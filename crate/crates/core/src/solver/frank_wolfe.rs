//! Frank-Wolfe with away steps, exact line search and Newton steps on the active face.

use nalgebra::{DMatrix, DVector};

use super::lp::{solve_standard_lp, LpOutcome};
use super::{best_vertex, Constraint, Method, Objective, SolverOptions, SolverResult, WeightVector};
use crate::error::{Error, Result};

/// Rows added to the working set per cutting-plane round.
const CUTS_PER_ROUND: usize = 20;

enum Target {
    Vertex(usize),
    Point(Vec<f64>),
}

pub(super) fn run(obj: &Objective<'_>, opts: &SolverOptions, constraint: &Constraint) -> Result<SolverResult> {
    let mu = constraint.mu;
    let mut rows: Vec<usize> = Vec::new();
    let mut pi = start(obj, opts, constraint, &mut rows)?;
    let mut u = obj.apply(&pi);
    let mut f = obj.value_at(&u);
    let mut trace = opts.record_trace.then(Vec::new);
    let mut support = support_of(&pi);
    let mut stable = 0usize;
    let mut iterations = 0usize;
    let mut gap;

    loop {
        iterations += 1;
        let g = obj.gradient_at(&u);
        let target = if constraint.is_binding() {
            Target::Point(constrained_lmo(obj, &g, mu, &mut rows)?)
        } else {
            Target::Vertex(argmin(&g))
        };
        let g_pi = dot(&g, &pi);
        let g_s = match &target {
            Target::Vertex(j) => g[*j],
            Target::Point(s) => dot(&g, s),
        };
        gap = g_pi - g_s;
        if let Some(t) = trace.as_mut() {
            t.push(f);
        }
        if gap <= opts.gap_tolerance || iterations >= opts.max_iterations {
            break;
        }

        let mut stepped = false;
        if stable >= 2 && support.len() >= 2 {
            if let Some((d, w, gmax, block)) = newton_direction(obj, &pi, &u, &g, &support, mu) {
                let gamma = line_search(obj, &u, &w, gmax, opts.line_search_tolerance);
                if gamma > 0.0 {
                    let (new_pi, new_u) = advance(&pi, &u, &d, &w, gamma);
                    let mut new_pi = new_pi;
                    if gamma >= gmax {
                        if let Some(j) = block {
                            new_pi[j] = 0.0;
                        }
                    }
                    let new_f = obj.value_at(&new_u);
                    if new_f <= f {
                        pi = new_pi;
                        u = new_u;
                        f = new_f;
                        stepped = true;
                    }
                }
            }
        }

        if !stepped {
            let away = support
                .iter()
                .copied()
                .filter(|&j| pi[j] < 1.0)
                .fold(None::<usize>, |best, j| match best {
                    Some(b) if g[b] >= g[j] => Some(b),
                    _ => Some(j),
                });
            let away_slope = away.map(|a| g_pi - g[a]);
            let use_away = matches!(away_slope, Some(s) if s < -gap);
            let (d, w, mut gmax, drop) = if use_away {
                let a = away.expect("away vertex");
                let mut d: Vec<f64> = pi.clone();
                d[a] -= 1.0;
                let za = obj.column(a);
                let w: Vec<f64> = u.iter().zip(za).map(|(u, z)| u - z).collect();
                (d, w, pi[a] / (1.0 - pi[a]), Some(a))
            } else {
                match &target {
                    Target::Vertex(j) => {
                        let mut d: Vec<f64> = pi.iter().map(|p| -p).collect();
                        d[*j] += 1.0;
                        let zj = obj.column(*j);
                        let w: Vec<f64> = zj.iter().zip(&u).map(|(z, u)| z - u).collect();
                        (d, w, 1.0, None)
                    }
                    Target::Point(s) => {
                        let d: Vec<f64> = s.iter().zip(&pi).map(|(s, p)| s - p).collect();
                        let zs = obj.apply(s);
                        let w: Vec<f64> = zs.iter().zip(&u).map(|(z, u)| z - u).collect();
                        (d, w, 1.0, None)
                    }
                }
            };
            let mut blocked_by_rows = false;
            if use_away && mu > 0.0 {
                let r = row_ratio(&u, &w, mu);
                if r < gmax {
                    gmax = r;
                    blocked_by_rows = true;
                }
            }
            let gamma = line_search(obj, &u, &w, gmax, opts.line_search_tolerance);
            let (mut new_pi, new_u) = advance(&pi, &u, &d, &w, gamma);
            if gamma >= gmax && !blocked_by_rows {
                if let Some(a) = drop {
                    new_pi[a] = 0.0;
                }
                if !use_away {
                    if let Target::Vertex(j) = target {
                        new_pi.iter_mut().for_each(|p| *p = 0.0);
                        new_pi[j] = 1.0;
                    }
                }
            }
            let new_f = obj.value_at(&new_u);
            if gamma == 0.0 || new_f > f {
                break;
            }
            pi = new_pi;
            u = new_u;
            f = new_f;
        }

        let new_support = support_of(&pi);
        if new_support == support {
            stable += 1;
        } else {
            stable = 0;
            support = new_support;
        }
    }

    let weights = WeightVector::from_iterate(pi);
    let objective = obj.value(weights.as_slice());
    Ok(SolverResult {
        converged: gap <= opts.gap_tolerance,
        weights,
        objective,
        certificate_gap: gap,
        iterations,
        active_constraint: false,
        sample_feasible: true,
        population_feasible: None,
        surrogate_coincides: None,
        method: Method::FrankWolfe,
        trace,
    })
}

fn start(obj: &Objective<'_>, opts: &SolverOptions, constraint: &Constraint, rows: &mut Vec<usize>) -> Result<Vec<f64>> {
    let k = obj.dim();
    let mu = constraint.mu;
    if let Some(init) = &opts.initial_weights {
        let u = obj.apply(init);
        if u.iter().all(|x| *x >= mu) {
            return Ok(init.clone());
        }
    }
    if !constraint.is_binding() {
        let j = best_vertex(obj);
        let mut pi = vec![0.0; k];
        pi[j] = 1.0;
        if obj.value(&pi).is_infinite() {
            // Every vertex vanishes somewhere; the barycenter may not.
            let bary = vec![1.0 / k as f64; k];
            if obj.value(&bary).is_finite() {
                return Ok(bary);
            }
            return Err(Error::Domain("neither a vertex nor the barycenter has a finite objective".into()));
        }
        return Ok(pi);
    }
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..k {
        let m = obj.column(j).iter().copied().fold(f64::INFINITY, f64::min);
        if m > best.1 {
            best = (j, m);
        }
    }
    if best.1 >= mu {
        let mut pi = vec![0.0; k];
        pi[best.0] = 1.0;
        return Ok(pi);
    }
    let zero = vec![0.0; k];
    constrained_lmo(obj, &zero, mu, rows)
}

/// Minimizes `g^T s` over `{s in simplex : Z s >= mu}` by cutting planes on the rows.
fn constrained_lmo(obj: &Objective<'_>, g: &[f64], mu: f64, rows: &mut Vec<usize>) -> Result<Vec<f64>> {
    let k = obj.dim();
    loop {
        let m = rows.len();
        let mut a = DMatrix::zeros(m + 1, k + m);
        let mut b = vec![mu; m + 1];
        b[0] = 1.0;
        for j in 0..k {
            a[(0, j)] = 1.0;
        }
        for (i, &r) in rows.iter().enumerate() {
            for j in 0..k {
                a[(i + 1, j)] = obj.column(j)[r];
            }
            a[(i + 1, k + i)] = -1.0;
        }
        let mut c = vec![0.0; k + m];
        c[..k].copy_from_slice(g);
        let s = match solve_standard_lp(&a, &b, &c) {
            LpOutcome::Optimal { x, .. } => x[..k].to_vec(),
            LpOutcome::Infeasible => {
                return Err(Error::Infeasible(format!(
                    "no simplex point keeps every mixture value above mu = {mu}"
                )))
            }
            LpOutcome::Unbounded => unreachable!("the simplex is bounded"),
        };
        let zs = obj.apply(&s);
        let mut violated: Vec<(usize, f64)> = zs
            .iter()
            .enumerate()
            .filter(|(_, v)| **v < mu * (1.0 - 1e-10))
            .map(|(r, v)| (r, *v))
            .collect();
        if violated.is_empty() {
            return Ok(s);
        }
        violated.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        rows.extend(violated.iter().take(CUTS_PER_ROUND).map(|(r, _)| *r));
    }
}

type NewtonStep = (Vec<f64>, Vec<f64>, f64, Option<usize>);

/// Newton direction restricted to the face spanned by `support`.
fn newton_direction(
    obj: &Objective<'_>,
    pi: &[f64],
    u: &[f64],
    g: &[f64],
    support: &[usize],
    mu: f64,
) -> Option<NewtonStep> {
    let s = support.len();
    let loss = obj.loss();
    let h: Vec<f64> = u.iter().zip(obj.coef()).map(|(&x, &c)| c * loss.d2(x)).collect();
    let mut kkt = DMatrix::zeros(s + 1, s + 1);
    let mut trace = 0.0;
    for a in 0..s {
        let za = obj.column(support[a]);
        for b in a..s {
            let zb = obj.column(support[b]);
            let v: f64 = za.iter().zip(zb).zip(&h).map(|((x, y), h)| h * x * y).sum();
            kkt[(a, b)] = v;
            kkt[(b, a)] = v;
        }
        trace += kkt[(a, a)];
        kkt[(a, s)] = 1.0;
        kkt[(s, a)] = 1.0;
    }
    let ridge = 1e-12 * trace / s as f64;
    for a in 0..s {
        kkt[(a, a)] += ridge;
    }
    let mut rhs = DVector::zeros(s + 1);
    for a in 0..s {
        rhs[a] = -g[support[a]];
    }
    let sol = kkt.lu().solve(&rhs)?;
    let mut d = vec![0.0; pi.len()];
    for a in 0..s {
        d[support[a]] = sol[a];
    }
    if !(dot(g, &d) < 0.0) || d.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut gmax = 2.0;
    let mut block = None;
    for &j in support {
        if d[j] < 0.0 {
            let r = pi[j] / -d[j];
            if r < gmax {
                gmax = r;
                block = Some(j);
            }
        }
    }
    let mut w = vec![0.0; u.len()];
    for &j in support {
        if d[j] != 0.0 {
            for (o, z) in w.iter_mut().zip(obj.column(j)) {
                *o += d[j] * z;
            }
        }
    }
    if mu > 0.0 {
        let r = row_ratio(u, &w, mu);
        if r < gmax {
            gmax = r;
            block = None;
        }
    }
    (gmax > 0.0).then_some((d, w, gmax, block))
}

/// Largest step keeping every row at or above `mu`.
fn row_ratio(u: &[f64], w: &[f64], mu: f64) -> f64 {
    u.iter()
        .zip(w)
        .filter(|(_, w)| **w < 0.0)
        .map(|(u, w)| ((u - mu) / -w).max(0.0))
        .fold(f64::INFINITY, f64::min)
}

/// Exact minimization of `t -> sum_r c_r loss(u_r + t w_r)` over `[0, tmax]`.
///
/// Newton iterations safeguarded by a bisection bracket on the derivative.
pub(super) fn line_search(obj: &Objective<'_>, u: &[f64], w: &[f64], tmax: f64, tol: f64) -> f64 {
    let loss = obj.loss();
    let c = obj.coef();
    let derivs = |t: f64| -> (f64, f64, f64) {
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        let mut scale = 0.0;
        for ((&u, &w), &c) in u.iter().zip(w).zip(c) {
            if w != 0.0 {
                let x = u + t * w;
                let a = c * loss.d1(x) * w;
                d1 += a;
                scale += a.abs();
                d2 += c * loss.d2(x) * w * w;
            }
        }
        (d1, d2, scale)
    };
    let (d0, h0, _) = derivs(0.0);
    if !(d0 < 0.0) || tmax <= 0.0 {
        return 0.0;
    }
    let (dmax, _, _) = derivs(tmax);
    if dmax <= 0.0 {
        return tmax;
    }
    let mut lo = 0.0;
    let mut hi = tmax;
    let mut t = if h0 > 0.0 { -d0 / h0 } else { 0.5 * tmax };
    if !(t > lo && t < hi) {
        t = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let (d, h, scale) = derivs(t);
        if d <= 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if d.abs() <= 1e-15 * scale || hi - lo <= tol {
            return if d <= 0.0 { t } else { lo.max(t - tol).max(0.0) };
        }
        let nt = if h > 0.0 { t - d / h } else { f64::NAN };
        let next = if nt > lo && nt < hi { nt } else { 0.5 * (lo + hi) };
        if (next - t).abs() <= tol {
            let (dn, _, _) = derivs(next);
            return if dn <= 0.0 { next } else { lo.max(next - tol) };
        }
        t = next;
    }
    lo
}

fn advance(pi: &[f64], u: &[f64], d: &[f64], w: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let p = pi.iter().zip(d).map(|(p, d)| (p + t * d).max(0.0)).collect();
    let v = u.iter().zip(w).map(|(u, w)| u + t * w).collect();
    (p, v)
}

fn support_of(pi: &[f64]) -> Vec<usize> {
    (0..pi.len()).filter(|&j| pi[j] > 0.0).collect()
}

fn argmin(g: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..g.len() {
        if g[j] < g[best] {
            best = j;
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}
