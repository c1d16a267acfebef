use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use simplexmix::harness::{
    rate_regression_on, read_rows, run_experiment, BoundRequest, ExperimentConfig, Metric, ResultRow, Scenario,
    Statistic,
};
use simplexmix::lower_bounds::{fano_check, fano_preset, shifted_hypotheses, sparse_hypotheses, vg_packing, FanoReport};
use simplexmix::spectra::{compatibility_constant, minor_eigen_extremes, restricted_eigenvalue, ConeSpec};
use simplexmix::{sine_dictionary, GramMatrix, Method, SeedSpec};

/// Directory for `run` output when neither the config nor `--output` names a file.
const OUTPUT_DIR_VAR: &str = "SIMPLEXMIX_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "simplexmix", version, about = "Sparse convex aggregation of densities: experiments and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded experiment sweep and write one CSV row per (n, replication, bound).
    Run(RunArgs),
    /// Fit a log-log rate to a result CSV.
    Regress(RegressArgs),
    /// Build a lower-bound hypothesis family and check both Fano conditions.
    AuditLowerBound(AuditArgs),
    /// Compatibility constants and minor spectra of a Gram matrix.
    Spectra(SpectraArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverMethod {
    FrankWolfe,
    MirrorDescent,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags below override its fields.
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    quadrature_nodes: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated `id@delta` labels, e.g. `boundDevTwo@0.05,upper`.
    #[arg(long, value_delimiter = ',')]
    bounds: Option<Vec<BoundRequest>>,
    #[arg(long)]
    compute_zeta: bool,
    #[arg(long)]
    zeta_restarts: Option<usize>,
    #[arg(long)]
    spectra_restarts: Option<usize>,
    #[arg(long)]
    record_timing: bool,
    #[arg(long, value_enum)]
    method: Option<SolverMethod>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct RegressArgs {
    csv: PathBuf,
    #[arg(long, default_value = "median")]
    statistic: Statistic,
    #[arg(long, default_value = "excess-kl")]
    metric: Metric,
    /// Only rows with this bound label; defaults to the first label in the file.
    #[arg(long)]
    bound: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Sparse,
    Shifted,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, value_enum, default_value = "sparse")]
    family: Family,
    /// Dictionary size.
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    sparsity: usize,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Mixing level of the sparse family; omitted means the default tuning.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Off-first mass of the shifted family.
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value_t = 4097)]
    quadrature_nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SpectraArgs {
    /// Square matrix: JSON array of rows, or one whitespace- or comma-separated row per line.
    matrix: PathBuf,
    /// Comma-separated support indices for the compatibility constants.
    #[arg(long, value_delimiter = ',')]
    support: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Sparsity level of the restricted eigenvalue.
    #[arg(long)]
    re_sparsity: Option<usize>,
    /// Size of the principal minors whose extreme eigenvalues are reported.
    #[arg(long)]
    minor_size: Option<usize>,
    #[arg(long, default_value_t = 16)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Regress(a) => regress(a),
        Command::AuditLowerBound(a) => audit(a),
        Command::Spectra(a) => spectra(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn build_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = a.$field.clone() { c.$field = v; })*
        };
    }
    set!(scenario, n_values, k, sparsity, gamma, mu, replications, master_seed, quadrature_nodes, bounds, zeta_restarts, spectra_restarts);
    if let Some(p) = &a.output {
        c.output = Some(p.clone());
    }
    c.compute_zeta |= a.compute_zeta;
    c.record_timing |= a.record_timing;
    if let Some(m) = a.method {
        c.solver.method = match m {
            SolverMethod::FrankWolfe => Method::FrankWolfe,
            SolverMethod::MirrorDescent => Method::MirrorDescent,
        };
    }
    if c.output.is_none() {
        let dir = std::env::var_os(OUTPUT_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        c.output = Some(dir.join(format!("{}-seed{}.csv", c.scenario, c.master_seed)));
    }
    c.validate()?;
    Ok(c)
}

fn run(a: RunArgs) -> Result<()> {
    let config = build_config(&a)?;
    let rows = run_experiment(&config, a.jobs)?;
    let path = config.output.as_deref().expect("output is always set");
    println!("wrote {} rows to {}", rows.len(), path.display());
    print_summary(&rows);
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn print_summary(rows: &[ResultRow]) {
    let mut per_bound: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut per_n: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in rows {
        let e = per_bound.entry(&r.bound_id).or_default();
        e.0 += usize::from(r.bound_satisfied);
        e.1 += 1;
        per_n.entry(r.n).or_default().insert(r.replication, r.excess_kl);
    }
    println!("{:>8}  {:>14}", "n", "median_excess");
    for (n, reps) in &per_n {
        println!("{n:>8}  {:>14.6e}", median(reps.values().copied().collect()));
    }
    for (label, (hit, total)) in per_bound {
        println!("{label}: satisfied in {hit}/{total}");
    }
}

fn regress(a: RegressArgs) -> Result<()> {
    let rows = read_rows(&a.csv).with_context(|| format!("reading {}", a.csv.display()))?;
    let Some(first) = rows.first() else {
        bail!("{} has no rows", a.csv.display());
    };
    let label = a.bound.clone().unwrap_or_else(|| first.bound_id.clone());
    let subset: Vec<ResultRow> = rows.into_iter().filter(|r| r.bound_id == label).collect();
    if subset.is_empty() {
        bail!("no rows with bound label '{label}'");
    }
    let fit = rate_regression_on(&subset, a.statistic, a.metric)?;
    println!("slope {:.6} +/- {:.6}", fit.slope, fit.standard_error);
    println!("intercept {:.6}", fit.intercept);
    for (n, v) in &fit.points {
        println!("{n} {v:.6e}");
    }
    Ok(())
}

fn report_csv(kind: &str, k: usize, d: usize, param: f64, r: &FanoReport) {
    println!("family,K,d,parameter,L,n,min_pairwise_kl,s,max_kl_to_first,product_kl,log_l_over_16,product_ratio,separation,closeness,passed");
    println!(
        "{kind},{k},{d},{param:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
        r.family_size,
        r.n,
        r.min_pairwise_kl,
        r.s,
        r.max_kl_to_first,
        r.product_kl,
        r.log_l_over_16,
        r.product_ratio,
        u8::from(r.condition_separation),
        u8::from(r.condition_closeness),
        u8::from(r.passed),
    );
}

fn audit(a: AuditArgs) -> Result<()> {
    let seed = SeedSpec::new(a.seed, 0, "audit");
    match (a.family, a.epsilon) {
        (Family::Sparse, None) => {
            let dict = sine_dictionary(a.k)?;
            let p = fano_preset(&dict, a.sparsity, a.n, a.quadrature_nodes, &seed)?;
            report_csv("sparse", a.k, p.d, p.epsilon, &p.report);
        }
        (Family::Sparse, Some(eps)) => {
            let dict = sine_dictionary(a.k)?;
            let packing = vg_packing(a.k, a.sparsity, &seed)?;
            let family = sparse_hypotheses(&packing, eps)?;
            let r = fano_check(&family, &dict, a.n, a.quadrature_nodes)?;
            report_csv("sparse", a.k, a.sparsity, eps, &r);
        }
        (Family::Shifted, _) => {
            if a.k < 5 {
                bail!("the shifted family needs K >= 5");
            }
            let dict = sine_dictionary(a.k)?;
            let packing = vg_packing(a.k - 1, a.sparsity, &seed)?;
            let family = shifted_hypotheses(&packing, a.gamma)?;
            let r = fano_check(&family, &dict, a.n, a.quadrature_nodes)?;
            report_csv("shifted", a.k, a.sparsity, a.gamma, &r);
        }
    }
    Ok(())
}

fn read_matrix(path: &Path) -> Result<GramMatrix> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows: Vec<Vec<f64>> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).context("parsing matrix JSON")?
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>().with_context(|| format!("bad number '{t}'")))
                    .collect()
            })
            .collect::<Result<_>>()?
    };
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        bail!("matrix must be square, got {k} rows of lengths {:?}", rows.iter().map(Vec::len).collect::<Vec<_>>());
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(GramMatrix::from_matrix(nalgebra::DMatrix::from_row_slice(k, k, &flat))?)
}

fn spectra(a: SpectraArgs) -> Result<()> {
    let g = read_matrix(&a.matrix)?;
    let seed = SeedSpec::new(a.seed, 0, "spectra");
    println!("lambda_min {:.12e}", g.min_eigenvalue());
    println!("lambda_max {:.12e}", g.max_eigenvalue());
    if let Some(size) = a.minor_size {
        let e = minor_eigen_extremes(&g, size)?;
        println!("minor{size}_lambda_min {:.12e}", e.lambda_min);
        println!("minor{size}_lambda_max {:.12e}", e.lambda_max);
    }
    if let Some(support) = &a.support {
        let kb = compatibility_constant(&g, &ConeSpec::kappa_bar(support.clone(), a.c), a.restarts, &seed)?;
        println!("kappa_bar {:.12e} certified_lower {:.12e}", kb.search_upper, kb.certified_lower);
        if a.c > 0.0 {
            let k = compatibility_constant(&g, &ConeSpec::kappa(support.clone(), a.c), a.restarts, &seed)?;
            println!("kappa {:.12e} certified_lower {:.12e}", k.search_upper, k.certified_lower);
        }
    }
    if let Some(s) = a.re_sparsity {
        let re = restricted_eigenvalue(&g, s, a.c, a.restarts, &seed)?;
        println!("restricted_eigenvalue {:.12e} certified_lower {:.12e}", re.search_upper, re.certified_lower);
    }
    Ok(())
}
