//! Entropic mirror descent on the simplex.

use super::{MirrorStep, Method, Objective, SolverOptions, SolverResult, WeightVector};
use crate::error::Result;

pub(super) fn run(obj: &Objective<'_>, opts: &SolverOptions) -> Result<SolverResult> {
    match opts.mirror_step {
        MirrorStep::Adaptive => adaptive(obj, opts),
        MirrorStep::Averaged => averaged(obj, opts),
    }
}

fn initial_log_weights(obj: &Objective<'_>, opts: &SolverOptions) -> Vec<f64> {
    let k = obj.dim();
    match &opts.initial_weights {
        Some(w) => w.iter().map(|v| v.max(1e-300).ln()).collect(),
        None => vec![-(k as f64).ln(); k],
    }
}

/// Normalizes log weights in place and returns the weights.
fn softmax(logp: &mut [f64]) -> Vec<f64> {
    let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logp.iter().map(|l| (l - max).exp()).sum();
    let shift = max + sum.ln();
    logp.iter_mut().for_each(|l| *l -= shift);
    logp.iter().map(|l| l.exp()).collect()
}

fn adaptive(obj: &Objective<'_>, opts: &SolverOptions) -> Result<SolverResult> {
    let mut logp = initial_log_weights(obj, opts);
    let mut pi = softmax(&mut logp);
    let mut u = obj.apply(&pi);
    let mut f = obj.value_at(&u);
    let mut eta = 1.0;
    let mut trace = opts.record_trace.then(Vec::new);
    let mut iterations = 0;
    let mut gap;
    loop {
        iterations += 1;
        let g = obj.gradient_at(&u);
        gap = obj.simplex_gap(&pi, &g);
        if let Some(t) = trace.as_mut() {
            t.push(f);
        }
        if gap <= opts.gap_tolerance || iterations >= opts.max_iterations {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand_log: Vec<f64> = logp.iter().zip(&g).map(|(l, g)| l - eta * g).collect();
            let cand = softmax(&mut cand_log);
            let cand_u = obj.apply(&cand);
            let cand_f = obj.value_at(&cand_u);
            let linear: f64 = g.iter().zip(cand.iter().zip(&pi)).map(|(g, (c, p))| g * (c - p)).sum();
            let bregman: f64 = cand
                .iter()
                .zip(cand_log.iter().zip(&logp))
                .filter(|(c, _)| **c > 0.0)
                .map(|(c, (lc, lp))| c * (lc - lp))
                .sum();
            if cand_f.is_finite() && cand_f <= f + linear + bregman.max(0.0) / eta {
                if cand_f <= f {
                    logp = cand_log;
                    pi = cand;
                    u = cand_u;
                    f = cand_f;
                    accepted = true;
                }
                eta *= 2.0;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    finish(obj, pi, iterations, trace, opts)
}

fn averaged(obj: &Objective<'_>, opts: &SolverOptions) -> Result<SolverResult> {
    let ratio = opts.ratio_hint.unwrap_or_else(|| {
        let k = obj.dim();
        let mut hi: f64 = 0.0;
        let mut lo = f64::INFINITY;
        for j in 0..k {
            for &z in obj.column(j) {
                hi = hi.max(z);
                lo = lo.min(z);
            }
        }
        if lo > 0.0 {
            hi / lo
        } else {
            hi.max(1.0)
        }
    });
    let k = obj.dim();
    let mut logp = initial_log_weights(obj, opts);
    let mut pi = softmax(&mut logp);
    let mut avg = vec![0.0; k];
    let mut u = obj.apply(&pi);
    let mut trace = opts.record_trace.then(Vec::new);
    let mut best_gap = f64::INFINITY;
    let mut best = pi.clone();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let t = iterations as f64;
        for (a, p) in avg.iter_mut().zip(&pi) {
            *a += (p - *a) / t;
        }
        let ua = obj.apply(&avg);
        let ga = obj.gradient_at(&ua);
        let gap = obj.simplex_gap(&avg, &ga);
        if gap < best_gap {
            best_gap = gap;
            best = avg.clone();
        }
        if let Some(tr) = trace.as_mut() {
            tr.push(obj.value_at(&ua));
        }
        if best_gap <= opts.gap_tolerance || iterations >= opts.max_iterations {
            break;
        }
        let g = obj.gradient_at(&u);
        let eta = 1.0 / (ratio * ratio * t.sqrt());
        logp.iter_mut().zip(&g).for_each(|(l, g)| *l -= eta * g);
        pi = softmax(&mut logp);
        u = obj.apply(&pi);
    }
    finish(obj, best, iterations, trace, opts)
}

fn finish(
    obj: &Objective<'_>,
    pi: Vec<f64>,
    iterations: usize,
    trace: Option<Vec<f64>>,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    let weights = WeightVector::from_iterate(pi);
    let u = obj.apply(weights.as_slice());
    let certificate_gap = obj.simplex_gap(weights.as_slice(), &obj.gradient_at(&u));
    Ok(SolverResult {
        objective: obj.value_at(&u),
        converged: certificate_gap <= opts.gap_tolerance,
        certificate_gap,
        weights,
        iterations,
        active_constraint: false,
        sample_feasible: true,
        population_feasible: None,
        surrogate_coincides: None,
        method: Method::MirrorDescent,
        trace,
    })
}
