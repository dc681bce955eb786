//! Command-line front end: kernel certification, estimation on CSV data,
//! scaling studies, the sandwich and bias diagnostics, and an index
//! benchmark. Every run writes a `manifest.txt` echoing the fully resolved
//! configuration (sorted keys, no timestamps) so runs are auditable, and
//! identical configurations produce byte-identical result CSVs. The one
//! exception is the benchmark's timing columns, which are wall-clock
//! readings; its agreement column is the reproducible part.
//!
//! Exit codes: 0 success, 2 configuration or validation failure (single-line
//! diagnostic naming the offending key or bound), 3 runtime failure.

use crate::error::{Error, Result};
use crate::estimators::{
    density_at_with_k, g_at_with_k, regression_at_with_k, schedule_b, schedule_k,
    DegeneratePolicy, EstimatorConfig, Target,
};
use crate::kernels::{check_moments, check_radial_monotone, make_kernel_from_spec, MomentMethod};
use crate::neighbor_index::{build_index, knn_radius_bruteforce, SampleSet, DEFAULT_LEAF_SIZE};
use crate::rate_lab::{
    bias_oracle, default_grid_inset, make_eval_grid, quasi_random_points, run_rate_study,
    sandwich_diagnostic, BetaRule, RateStudyConfig, RateStudyResult, SandwichReport,
};
use crate::synthetic_models::{make_model, ModelOverrides, SyntheticModel, TruthKind};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

/// Artifact version echoed into every manifest.
pub const ARTIFACT_VERSION: &str = concat!("knnlab-", env!("CARGO_PKG_VERSION"));

#[derive(Parser, Debug)]
#[command(
    name = "knnlab",
    version,
    about = "k-nearest-neighbor kernel estimation and its simulation laboratory"
)]
struct Cli {
    /// Worker threads; falls back to KNN_LAB_THREADS, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify a kernel's moment conditions and radial monotonicity.
    KernelCheck(KernelCheckArgs),
    /// Evaluate an estimator on CSV data over a query lattice.
    Estimate(EstimateArgs),
    /// Run a seeded Monte Carlo scaling study.
    RateStudy(RateStudyArgs),
    /// Bracket the adaptive estimate between fixed-bandwidth estimates.
    Sandwich(SandwichArgs),
    /// Quadrature check of the smoothing bias at shrinking bandwidths.
    BiasCheck(BiasCheckArgs),
    /// Benchmark tree queries against brute force.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct KernelCheckArgs {
    /// Kernel spec, e.g. gaussian:p=1:r=1 or poly_gaussian:p=1:r=3.
    #[arg(long)]
    kernel: String,
    /// Moment integration method: tensor_quadrature or monte_carlo.
    #[arg(long, default_value = "tensor_quadrature")]
    method: String,
    /// Node or sample budget for the moment integrals.
    #[arg(long, default_value_t = 2_000_000)]
    budget: usize,
    /// Certification tolerance for vanishing moments.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Grid resolution of the monotonicity scan (points per axis and scales).
    #[arg(long, default_value_t = 64)]
    monotone_grid: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Input CSV with header x1,...,xp and optionally a final y column.
    #[arg(long)]
    data: PathBuf,
    /// Kernel spec, e.g. gaussian:p=2:r=1.
    #[arg(long)]
    kernel: String,
    /// Neighbor-count exponent, k = floor(n^c1).
    #[arg(long, default_value_t = 0.7)]
    c1: f64,
    /// Density-floor exponent, b = n^(-c2).
    #[arg(long, default_value_t = 0.05)]
    c2: f64,
    /// What to estimate: density, g, or regression.
    #[arg(long, default_value = "density")]
    target: String,
    /// Query lattice: points per axis for p <= 2, total low-discrepancy
    /// points for p >= 3.
    #[arg(long, default_value_t = 50)]
    grid: usize,
    /// Zero k-th neighbor distance handling: error or epsilon_radius.
    #[arg(long, default_value = "error")]
    policy: String,
    /// Tree leaf size.
    #[arg(long, default_value_t = DEFAULT_LEAF_SIZE)]
    leaf_size: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RateStudyArgs {
    /// key=value config file; missing keys fall back to the shipped default
    /// study (see configs/default_study.conf).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set trials=20 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; overrides the out_dir config key.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SandwichArgs {
    /// Model spec: M1, M2, or M3, with optional :p=, :sigma=, :box=.
    #[arg(long, default_value = "M2")]
    model: String,
    /// Kernel spec; must pass the radial monotonicity check.
    #[arg(long, default_value = "gaussian:p=1:r=1")]
    kernel: String,
    /// Sample size to draw.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0.7)]
    c1: f64,
    #[arg(long, default_value_t = 0.05)]
    c2: f64,
    /// Response envelope multiplier used when sampling.
    #[arg(long = "c-m", default_value_t = 1.0)]
    c_m: f64,
    #[arg(long, default_value_t = 20260816)]
    seed: u64,
    /// Evaluation points per axis (p <= 2) or total (p >= 3).
    #[arg(long, default_value_t = 200)]
    grid: usize,
    /// Bracket rule: canonical, coverage, or a fixed beta in (0, 1].
    #[arg(long, default_value = "coverage")]
    beta: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BiasCheckArgs {
    /// Model spec: M1, M2, or M3, with optional :p=, :sigma=, :box=.
    #[arg(long, default_value = "M1")]
    model: String,
    #[arg(long, default_value = "gaussian:p=1:r=1")]
    kernel: String,
    /// Truth the oracle integrates: density, g, g1, or g2.
    #[arg(long, default_value = "g")]
    target: String,
    /// Evaluation point, comma-separated coordinates.
    #[arg(long, default_value = "0.35")]
    x: String,
    /// Starting argument bandwidth.
    #[arg(long, default_value_t = 0.04)]
    d2: f64,
    /// Starting normalizer bandwidth; defaults to d2.
    #[arg(long)]
    d1: Option<f64>,
    /// Number of bandwidth halvings after the first level.
    #[arg(long, default_value_t = 3)]
    halvings: usize,
    /// Quadrature node budget.
    #[arg(long, default_value_t = 20_000)]
    budget: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Number of indexed points.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Dimension.
    #[arg(long, default_value_t = 3)]
    p: usize,
    /// Number of queries.
    #[arg(long, default_value_t = 1000)]
    queries: usize,
    /// Neighbors per query.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_LEAF_SIZE)]
    leaf_size: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match resolve_threads(cli.threads).and_then(|t| {
        init_threads(t);
        dispatch(cli.command)
    }) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::StudyAborted { .. }
        | Error::IntegrationBudgetExceeded { .. }
        | Error::DegenerateRadius { .. }
        | Error::Io { .. } => 3,
        _ => 2,
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("KNN_LAB_THREADS") {
        Ok(text) => text.trim().parse::<usize>().map(Some).map_err(|_| {
            Error::InvalidConfig(format!(
                "KNN_LAB_THREADS: cannot parse '{text}' as a thread count"
            ))
        }),
        Err(_) => Ok(None),
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        // Errors only if a global pool already exists, which is equivalent.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::KernelCheck(args) => run_kernel_check(args),
        Command::Estimate(args) => run_estimate(args),
        Command::RateStudy(args) => run_rate_study_cmd(args),
        Command::Sandwich(args) => run_sandwich(args),
        Command::BiasCheck(args) => run_bias_check(args),
        Command::Bench(args) => run_bench(args),
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_manifest(dir: &Path, entries: &BTreeMap<String, String>) -> Result<()> {
    let mut text = String::new();
    let mut all = entries.clone();
    all.insert("artifact_version".into(), ARTIFACT_VERSION.into());
    for (k, v) in &all {
        text.push_str(&format!("{k}={v}\n"));
    }
    write_text(&dir.join("manifest.txt"), &text)
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Parses `M2:p=2:sigma=0.4:box=2.5` into a model.
pub fn parse_model_spec(text: &str) -> Result<SyntheticModel> {
    let mut parts = text.split(':');
    let name = parts.next().unwrap_or_default();
    let mut overrides = ModelOverrides::default();
    for part in parts {
        let (key, value) = part.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!(
                "model segment '{part}' is not key=value (expected p=, sigma=, or box=)"
            ))
        })?;
        match key {
            "p" => {
                overrides.p = Some(value.parse().map_err(|_| {
                    Error::InvalidConfig(format!("model: cannot parse p value '{value}'"))
                })?);
            }
            "sigma" => {
                overrides.sigma = Some(value.parse().map_err(|_| {
                    Error::InvalidConfig(format!("model: cannot parse sigma value '{value}'"))
                })?);
            }
            "box" => {
                overrides.box_scale = Some(value.parse().map_err(|_| {
                    Error::InvalidConfig(format!("model: cannot parse box value '{value}'"))
                })?);
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "model: unknown override '{other}' (expected p, sigma, or box)"
                )));
            }
        }
    }
    make_model(name, &overrides)
}

/// Geometric ladder of sizes between n_min and n_max, deduplicated.
pub fn geometric_grid(n_min: usize, n_max: usize, points: usize) -> Vec<usize> {
    let a = (n_min as f64).ln();
    let b = (n_max as f64).ln();
    let mut out: Vec<usize> = Vec::with_capacity(points);
    for i in 0..points {
        let t = if points == 1 {
            a
        } else {
            a + (b - a) * i as f64 / (points - 1) as f64
        };
        let n = t.exp().round() as usize;
        if out.last().is_none_or(|&last| n > last) {
            out.push(n);
        }
    }
    out
}

const STUDY_KEYS: [&str; 13] = [
    "model", "target", "kernel", "c1", "c2", "C_M", "n_min", "n_max", "n_points", "trials",
    "seed", "grid", "out_dir",
];

/// The shipped default study: noise-free model, density target, first-order
/// Gaussian kernel, sizes 2^10..2^16, 50 trials.
pub fn default_study_keys() -> BTreeMap<String, String> {
    let defaults = [
        ("model", "M3"),
        ("target", "density"),
        ("kernel", "gaussian_product:p=1:r=1"),
        ("c1", "0.7"),
        ("c2", "0.05"),
        ("C_M", "1"),
        ("n_min", "1024"),
        ("n_max", "65536"),
        ("n_points", "7"),
        ("trials", "50"),
        ("seed", "20260816"),
        ("grid", "200"),
        ("out_dir", "rate_study_out"),
    ];
    defaults
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn apply_pair(map: &mut BTreeMap<String, String>, key: &str, value: &str) -> Result<()> {
    if !STUDY_KEYS.contains(&key) {
        return Err(Error::InvalidConfig(format!("unknown config key '{key}'")));
    }
    map.insert(key.to_string(), value.to_string());
    Ok(())
}

fn apply_config_file(map: &mut BTreeMap<String, String>, path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::InvalidConfig(format!(
            "config: file not found: {}",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!(
                "config line {} is not key=value: '{line}'",
                line_no + 1
            ))
        })?;
        apply_pair(map, key.trim(), value.trim())?;
    }
    Ok(())
}

fn apply_overrides(map: &mut BTreeMap<String, String>, sets: &[String]) -> Result<()> {
    for item in sets {
        let (key, value) = item.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("--set value '{item}' is not key=value"))
        })?;
        apply_pair(map, key.trim(), value.trim())?;
    }
    Ok(())
}

fn key_f64(map: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    let raw = &map[key];
    raw.parse().map_err(|_| {
        Error::InvalidConfig(format!("{key}: cannot parse '{raw}' as a number"))
    })
}

fn key_usize(map: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    let raw = &map[key];
    raw.parse().map_err(|_| {
        Error::InvalidConfig(format!("{key}: cannot parse '{raw}' as an integer"))
    })
}

fn key_u64(map: &BTreeMap<String, String>, key: &str) -> Result<u64> {
    let raw = &map[key];
    raw.parse().map_err(|_| {
        Error::InvalidConfig(format!("{key}: cannot parse '{raw}' as an integer"))
    })
}

/// Builds the study from resolved keys; enforces the shipped-study floors
/// (these are the user-facing invariants, stricter than the library's).
pub fn build_study(map: &BTreeMap<String, String>) -> Result<(RateStudyConfig, PathBuf)> {
    let model = parse_model_spec(&map["model"])?;
    let target = Target::parse(&map["target"])?;
    let kernel = make_kernel_from_spec(&map["kernel"])?;
    if kernel.dimension() != model.dimension() {
        return Err(Error::InvalidConfig(format!(
            "kernel: dimension {} does not match model dimension {}",
            kernel.dimension(),
            model.dimension()
        )));
    }
    let c1 = key_f64(map, "c1")?;
    let c2 = key_f64(map, "c2")?;
    let c_m = key_f64(map, "C_M")?;
    let estimator = EstimatorConfig::new(c1, c2, c_m, kernel, DegeneratePolicy::Error)?;
    let n_min = key_usize(map, "n_min")?;
    let n_max = key_usize(map, "n_max")?;
    let n_points = key_usize(map, "n_points")?;
    let trials = key_usize(map, "trials")?;
    let seed = key_u64(map, "seed")?;
    let grid = key_usize(map, "grid")?;
    if n_min < 2 {
        return Err(Error::InvalidConfig(format!(
            "n_min must be at least 2, got {n_min}"
        )));
    }
    if n_max <= n_min {
        return Err(Error::InvalidConfig(format!(
            "n_max must exceed n_min, got n_min={n_min}, n_max={n_max}"
        )));
    }
    if n_points < 4 {
        return Err(Error::InvalidConfig(format!(
            "n_points must be at least 4, got {n_points}"
        )));
    }
    if trials < 10 {
        return Err(Error::InvalidConfig(format!(
            "trials must be at least 10 for a study run, got {trials}"
        )));
    }
    if grid < 1 {
        return Err(Error::InvalidConfig("grid must be at least 1".into()));
    }
    let n_grid = geometric_grid(n_min, n_max, n_points);
    if n_grid.len() < 4 {
        return Err(Error::InvalidConfig(format!(
            "n_points: the geometric ladder collapsed to {} distinct sizes, need at least 4",
            n_grid.len()
        )));
    }
    let inset = default_grid_inset(&model, n_grid[0], c1)?;
    let eval_grid = make_eval_grid(&model, grid, inset)?;
    let config = RateStudyConfig {
        model,
        estimator,
        target,
        n_grid,
        trials,
        eval_grid,
        seed,
    };
    config.validate()?;
    Ok((config, PathBuf::from(&map["out_dir"])))
}

/// The shipped default study as a ready-to-run config.
pub fn shipped_default_study() -> Result<RateStudyConfig> {
    Ok(build_study(&default_study_keys())?.0)
}

/// per_n.csv with the pinned column set.
pub fn per_n_csv(result: &RateStudyResult) -> String {
    let mut out =
        String::from("n,k_n,b_n,M_n,mean_sup_error,median,q10,q90,clip_rate,theory_rate\n");
    for row in &result.per_n {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.n,
            row.k_n,
            row.b_n,
            row.m_n,
            row.mean_sup_error,
            row.median,
            row.q10,
            row.q90,
            row.clip_rate,
            row.theory_rate
        ));
    }
    out
}

/// summary.csv with the pinned column set.
pub fn summary_csv(result: &RateStudyResult) -> String {
    format!(
        "fitted_slope,fitted_intercept,theory_exponent_bias,theory_exponent_variance\n{},{},{},{}\n",
        result.fitted_slope,
        result.fitted_intercept,
        result.theory_exponent_bias,
        result.theory_exponent_variance
    )
}

fn sandwich_csv(report: &SandwichReport, p: usize) -> String {
    let mut out = String::new();
    for j in 1..=p {
        out.push_str(&format!("x{j},"));
    }
    out.push_str("D_minus,D_plus,R_n,contained,f1,f_hat,f2,ordered_given_containment\n");
    for point in &report.per_point {
        for v in &point.x {
            out.push_str(&format!("{v},"));
        }
        let ordered = match point.ordered_given_containment {
            Some(b) => fmt_bool(b),
            None => "",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            point.d_minus,
            point.d_plus,
            point.r_n,
            fmt_bool(point.contained),
            point.f1,
            point.f_hat,
            point.f2,
            ordered
        ));
    }
    out
}

fn run_kernel_check(args: KernelCheckArgs) -> Result<()> {
    let kernel = make_kernel_from_spec(&args.kernel)?;
    let method = MomentMethod::parse(&args.method)?;
    ensure_out_dir(&args.out)?;
    let report = check_moments(&kernel, args.tolerance, method, args.budget)?;
    let monotone = check_radial_monotone(&kernel, args.monotone_grid, args.monotone_grid);
    write_text(&args.out.join("moments.csv"), &report.to_csv())?;
    let mut lines = vec![
        format!("kernel,{}", kernel.spec_string()),
        format!("declared_order,{}", kernel.order()),
        format!("verified_order,{}", report.verified_order),
        format!("integral_of_k,{}", report.integral_of_k),
        format!("abs_moment_r_plus_1,{}", report.abs_moment_r_plus_1),
        format!("tolerance,{}", report.tolerance_used),
        format!("method,{}", method.name()),
        format!("monotone,{}", fmt_bool(monotone.holds)),
    ];
    if let Some(se) = report.std_error {
        lines.push(format!("std_error,{se}"));
    }
    if let Some(w) = &monotone.witness {
        lines.push(format!(
            "monotone_witness_x,{}",
            w.x.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";")
        ));
        lines.push(format!("monotone_witness_a,{}", w.a));
        lines.push(format!("monotone_witness_deficit,{}", w.deficit));
    }
    let mut report_csv = String::from("key,value\n");
    for line in &lines {
        report_csv.push_str(line);
        report_csv.push('\n');
    }
    write_text(&args.out.join("kernel_report.csv"), &report_csv)?;
    let mut manifest = BTreeMap::new();
    manifest.insert("subcommand".into(), "kernel-check".into());
    manifest.insert("kernel".into(), kernel.spec_string());
    manifest.insert("method".into(), method.name().into());
    manifest.insert("budget".into(), args.budget.to_string());
    manifest.insert("tolerance".into(), args.tolerance.to_string());
    manifest.insert("monotone_grid".into(), args.monotone_grid.to_string());
    write_manifest(&args.out, &manifest)?;
    println!(
        "kernel {}: verified order {} (declared {}), integral {}, monotone {}",
        kernel.spec_string(),
        report.verified_order,
        kernel.order(),
        report.integral_of_k,
        monotone.holds
    );
    Ok(())
}

/// Query lattice over the data bounding box.
fn query_lattice(data: &SampleSet, grid: usize) -> Result<Vec<Vec<f64>>> {
    let p = data.dimension();
    let (lo, hi) = data.bounding_box();
    if grid < 1 {
        return Err(Error::InvalidConfig("grid must be at least 1".into()));
    }
    if p <= 2 {
        let axis_points: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                if grid == 1 || hi[j] == lo[j] {
                    vec![0.5 * (lo[j] + hi[j])]
                } else {
                    (0..grid)
                        .map(|i| lo[j] + (hi[j] - lo[j]) * i as f64 / (grid - 1) as f64)
                        .collect()
                }
            })
            .collect();
        let mut out = Vec::new();
        if p == 1 {
            for &v in &axis_points[0] {
                out.push(vec![v]);
            }
        } else {
            for &a in &axis_points[0] {
                for &b in &axis_points[1] {
                    out.push(vec![a, b]);
                }
            }
        }
        Ok(out)
    } else {
        Ok(quasi_random_points(grid, p)?
            .into_iter()
            .map(|u| {
                (0..p)
                    .map(|j| lo[j] + (hi[j] - lo[j]) * u[j])
                    .collect()
            })
            .collect())
    }
}

fn run_estimate(args: EstimateArgs) -> Result<()> {
    if !args.data.exists() {
        return Err(Error::InvalidConfig(format!(
            "data: file not found: {}",
            args.data.display()
        )));
    }
    let data = SampleSet::load_csv(&args.data)?;
    let kernel = make_kernel_from_spec(&args.kernel)?;
    if kernel.dimension() != data.dimension() {
        return Err(Error::InvalidConfig(format!(
            "kernel: dimension {} does not match data dimension {}",
            kernel.dimension(),
            data.dimension()
        )));
    }
    let target = Target::parse(&args.target)?;
    if target != Target::Density && data.responses().is_none() {
        return Err(Error::MissingResponses);
    }
    let policy = DegeneratePolicy::parse(&args.policy)?;
    let estimator = EstimatorConfig::new(args.c1, args.c2, 1.0, kernel, policy)?;
    let n = data.len();
    let k = schedule_k(n, args.c1)?;
    let b_n = schedule_b(n, args.c2)?;
    let queries = query_lattice(&data, args.grid)?;
    let p = data.dimension();
    let index = build_index(Arc::new(data), args.leaf_size)?;
    ensure_out_dir(&args.out)?;
    let mut csv = String::new();
    for j in 1..=p {
        csv.push_str(&format!("x{j},"));
    }
    csv.push_str("value,radius_used,floored\n");
    for x in &queries {
        let est = match target {
            Target::Density => density_at_with_k(&index, &estimator, x, k)?,
            Target::G => g_at_with_k(&index, &estimator, x, k)?,
            Target::Regression => regression_at_with_k(&index, &estimator, x, k, b_n)?,
        };
        for v in x {
            csv.push_str(&format!("{v},"));
        }
        csv.push_str(&format!(
            "{},{},{}\n",
            est.value,
            est.radius_used,
            fmt_bool(est.floored)
        ));
    }
    write_text(&args.out.join("estimate.csv"), &csv)?;
    let mut manifest = BTreeMap::new();
    manifest.insert("subcommand".into(), "estimate".into());
    manifest.insert("data".into(), args.data.display().to_string());
    manifest.insert("kernel".into(), args.kernel.clone());
    manifest.insert("c1".into(), args.c1.to_string());
    manifest.insert("c2".into(), args.c2.to_string());
    manifest.insert("target".into(), target.name().into());
    manifest.insert("grid".into(), args.grid.to_string());
    manifest.insert("policy".into(), policy.name().into());
    manifest.insert("leaf_size".into(), args.leaf_size.to_string());
    manifest.insert("n".into(), n.to_string());
    manifest.insert("k".into(), k.to_string());
    manifest.insert("b_n".into(), b_n.to_string());
    write_manifest(&args.out, &manifest)?;
    println!(
        "estimated {} at {} query points (n={n}, k={k})",
        target.name(),
        queries.len()
    );
    Ok(())
}

fn run_rate_study_cmd(args: RateStudyArgs) -> Result<()> {
    let mut keys = default_study_keys();
    if let Some(path) = &args.config {
        apply_config_file(&mut keys, path)?;
    }
    apply_overrides(&mut keys, &args.set)?;
    if let Some(out) = &args.out {
        keys.insert("out_dir".into(), out.display().to_string());
    }
    let (config, out_dir) = build_study(&keys)?;
    let result = run_rate_study(&config)?;
    ensure_out_dir(&out_dir)?;
    write_text(&out_dir.join("per_n.csv"), &per_n_csv(&result))?;
    write_text(&out_dir.join("summary.csv"), &summary_csv(&result))?;
    let mut manifest: BTreeMap<String, String> = keys.clone();
    manifest.insert("subcommand".into(), "rate-study".into());
    manifest.insert(
        "resolved_n_grid".into(),
        config
            .n_grid
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(";"),
    );
    manifest.insert("eval_points".into(), config.eval_grid.len().to_string());
    manifest.insert(
        "degenerate_trials".into(),
        result.degenerate_trials.to_string(),
    );
    write_manifest(&out_dir, &manifest)?;
    println!(
        "rate study: fitted slope {} over {} sizes ({} total trials, {} degenerate retries)",
        result.fitted_slope,
        result.per_n.len(),
        result.total_trials,
        result.degenerate_trials
    );
    Ok(())
}

fn run_sandwich(args: SandwichArgs) -> Result<()> {
    let model = parse_model_spec(&args.model)?;
    let kernel = make_kernel_from_spec(&args.kernel)?;
    if kernel.dimension() != model.dimension() {
        return Err(Error::InvalidConfig(format!(
            "kernel: dimension {} does not match model dimension {}",
            kernel.dimension(),
            model.dimension()
        )));
    }
    let beta_rule = BetaRule::parse(&args.beta)?;
    let estimator =
        EstimatorConfig::new(args.c1, args.c2, args.c_m, kernel, DegeneratePolicy::Error)?;
    let trial = model.sample(args.n, args.seed, args.c_m)?;
    let inset = default_grid_inset(&model, args.n, args.c1)?;
    let eval_grid = make_eval_grid(&model, args.grid, inset)?;
    let report = sandwich_diagnostic(&model, &trial.sample, &estimator, &eval_grid, beta_rule)?;
    ensure_out_dir(&args.out)?;
    write_text(
        &args.out.join("sandwich.csv"),
        &sandwich_csv(&report, model.dimension()),
    )?;
    write_text(
        &args.out.join("sandwich_summary.csv"),
        &format!(
            "n,k,beta,containment_rate,conditional_order_rate\n{},{},{},{},{}\n",
            report.n, report.k, report.beta, report.containment_rate, report.conditional_order_rate
        ),
    )?;
    let mut manifest = BTreeMap::new();
    manifest.insert("subcommand".into(), "sandwich".into());
    manifest.insert("model".into(), args.model.clone());
    manifest.insert("kernel".into(), args.kernel.clone());
    manifest.insert("n".into(), args.n.to_string());
    manifest.insert("c1".into(), args.c1.to_string());
    manifest.insert("c2".into(), args.c2.to_string());
    manifest.insert("C_M".into(), args.c_m.to_string());
    manifest.insert("seed".into(), args.seed.to_string());
    manifest.insert("grid".into(), args.grid.to_string());
    manifest.insert("beta_rule".into(), beta_rule.describe());
    manifest.insert("beta".into(), report.beta.to_string());
    write_manifest(&args.out, &manifest)?;
    println!(
        "sandwich: containment {} and conditional ordering {} over {} points (beta {})",
        report.containment_rate,
        report.conditional_order_rate,
        report.per_point.len(),
        report.beta
    );
    Ok(())
}

fn parse_point(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| {
                Error::InvalidConfig(format!("x: cannot parse coordinate '{s}' as a number"))
            })
        })
        .collect()
}

fn run_bias_check(args: BiasCheckArgs) -> Result<()> {
    let model = parse_model_spec(&args.model)?;
    let kernel = make_kernel_from_spec(&args.kernel)?;
    let kind = TruthKind::parse(&args.target)?;
    let x = parse_point(&args.x)?;
    let d1 = args.d1.unwrap_or(args.d2);
    if args.halvings > 40 {
        return Err(Error::InvalidConfig(format!(
            "halvings must be at most 40, got {}",
            args.halvings
        )));
    }
    let mut reports = Vec::with_capacity(args.halvings + 1);
    for level in 0..=args.halvings {
        let scale = 0.5f64.powi(level as i32);
        reports.push((
            level,
            d1 * scale,
            args.d2 * scale,
            bias_oracle(
                &model,
                &kernel,
                kind,
                d1 * scale,
                args.d2 * scale,
                &x,
                args.budget,
            )?,
        ));
    }
    ensure_out_dir(&args.out)?;
    let mut csv = String::from(
        "level,d1,d2,gamma,expected_value,truth_at_x,bias_abs,boundary_flagged,shrink_factor\n",
    );
    for (i, (level, d1_l, d2_l, report)) in reports.iter().enumerate() {
        let shrink = if i + 1 < reports.len() {
            let next = &reports[i + 1].3;
            if next.bias_abs > 0.0 {
                format!("{}", report.bias_abs / next.bias_abs)
            } else {
                String::new()
            }
        } else {
            String::new()
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            level,
            d1_l,
            d2_l,
            report.gamma,
            report.expected_value,
            report.truth_at_x,
            report.bias_abs,
            fmt_bool(report.boundary_flagged),
            shrink
        ));
    }
    write_text(&args.out.join("bias.csv"), &csv)?;
    let mut manifest = BTreeMap::new();
    manifest.insert("subcommand".into(), "bias-check".into());
    manifest.insert("model".into(), args.model.clone());
    manifest.insert("kernel".into(), args.kernel.clone());
    manifest.insert("target".into(), kind.name().into());
    manifest.insert("x".into(), args.x.clone());
    manifest.insert("d1".into(), d1.to_string());
    manifest.insert("d2".into(), args.d2.to_string());
    manifest.insert("halvings".into(), args.halvings.to_string());
    manifest.insert("budget".into(), args.budget.to_string());
    write_manifest(&args.out, &manifest)?;
    let first = &reports[0].3;
    println!(
        "bias check: {} levels from D2={}, first bias {} (boundary flagged: {})",
        reports.len(),
        args.d2,
        first.bias_abs,
        first.boundary_flagged
    );
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    if args.p < 1 {
        return Err(Error::InvalidConfig("p must be at least 1".into()));
    }
    if args.n < 1 || args.queries < 1 {
        return Err(Error::InvalidConfig(
            "n and queries must be at least 1".into(),
        ));
    }
    if args.k < 1 || args.k > args.n {
        return Err(Error::InvalidConfig(format!(
            "k must lie in [1, n], got k={} with n={}",
            args.k, args.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut xs = Vec::with_capacity(args.n * args.p);
    for _ in 0..args.n * args.p {
        xs.push(rng.random::<f64>());
    }
    let data = Arc::new(SampleSet::from_flat(xs, args.p, None)?);
    let mut queries = Vec::with_capacity(args.queries);
    for _ in 0..args.queries {
        queries.push((0..args.p).map(|_| rng.random::<f64>()).collect::<Vec<f64>>());
    }
    let build_start = Instant::now();
    let index = build_index(Arc::clone(&data), args.leaf_size)?;
    let build_ms = build_start.elapsed().as_secs_f64() * 1e3;
    let tree_start = Instant::now();
    let mut tree_results = Vec::with_capacity(args.queries);
    for q in &queries {
        tree_results.push(index.knn_radius(q, args.k)?);
    }
    let tree_us = tree_start.elapsed().as_secs_f64() * 1e6 / args.queries as f64;
    let brute_start = Instant::now();
    let mut brute_results = Vec::with_capacity(args.queries);
    for q in &queries {
        brute_results.push(knn_radius_bruteforce(&data, q, args.k)?);
    }
    let brute_us = brute_start.elapsed().as_secs_f64() * 1e6 / args.queries as f64;
    let agreement = tree_results
        .iter()
        .zip(&brute_results)
        .filter(|(a, b)| {
            a.neighbor_ids == b.neighbor_ids
                && (a.radius - b.radius).abs()
                    <= 4.0 * f64::EPSILON * a.radius.abs().max(b.radius.abs())
        })
        .count();
    ensure_out_dir(&args.out)?;
    write_text(
        &args.out.join("bench.csv"),
        &format!(
            "n,p,queries,k,leaf_size,build_ms,tree_us_per_query,brute_us_per_query,agreement\n{},{},{},{},{},{},{},{},{}\n",
            args.n, args.p, args.queries, args.k, args.leaf_size,
            build_ms, tree_us, brute_us, agreement
        ),
    )?;
    let mut manifest = BTreeMap::new();
    manifest.insert("subcommand".into(), "bench".into());
    manifest.insert("n".into(), args.n.to_string());
    manifest.insert("p".into(), args.p.to_string());
    manifest.insert("queries".into(), args.queries.to_string());
    manifest.insert("k".into(), args.k.to_string());
    manifest.insert("seed".into(), args.seed.to_string());
    manifest.insert("leaf_size".into(), args.leaf_size.to_string());
    write_manifest(&args.out, &manifest)?;
    println!(
        "bench: agreement {}/{} (build {build_ms:.1} ms, tree {tree_us:.1} us/query, brute {brute_us:.1} us/query)",
        agreement, args.queries
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_spec_parsing() {
        let m = parse_model_spec("M2:p=2:sigma=0.4:box=2.5").unwrap();
        assert_eq!(m.name(), "M2");
        assert_eq!(m.dimension(), 2);
        assert_eq!(m.sigma(), 0.4);
        assert!(parse_model_spec("M1:q=3").is_err());
        assert!(parse_model_spec("M1:p=x").is_err());
        assert!(parse_model_spec("M7").is_err());
    }

    #[test]
    fn geometric_grid_hits_powers_of_two() {
        let grid = geometric_grid(1024, 65536, 7);
        assert_eq!(grid, vec![1024, 2048, 4096, 8192, 16384, 32768, 65536]);
        let collapsed = geometric_grid(10, 11, 7);
        assert!(collapsed.len() < 7);
        assert!(collapsed.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn study_key_resolution_and_floors() {
        let mut keys = default_study_keys();
        let (config, out_dir) = build_study(&keys).unwrap();
        assert_eq!(config.n_grid.len(), 7);
        assert_eq!(config.trials, 50);
        assert_eq!(config.eval_grid.len(), 200);
        assert_eq!(out_dir, PathBuf::from("rate_study_out"));

        keys.insert("c1".into(), "0.4".into());
        let err = build_study(&keys).unwrap_err();
        assert!(err.to_string().contains("c1 must lie in (0.5, 1)"), "{err}");

        let mut keys = default_study_keys();
        keys.insert("trials".into(), "3".into());
        assert!(build_study(&keys).is_err());

        let mut keys = default_study_keys();
        keys.insert("n_points".into(), "2".into());
        assert!(build_study(&keys).is_err());

        let mut keys = default_study_keys();
        assert!(apply_pair(&mut keys, "bogus", "1").is_err());
    }

    #[test]
    fn override_strings_parse() {
        let mut keys = default_study_keys();
        apply_overrides(&mut keys, &["trials=12".into(), "seed=7".into()]).unwrap();
        assert_eq!(keys["trials"], "12");
        assert_eq!(keys["seed"], "7");
        assert!(apply_overrides(&mut keys, &["nonsense".into()]).is_err());
    }

    #[test]
    fn point_parsing() {
        assert_eq!(parse_point("0.35").unwrap(), vec![0.35]);
        assert_eq!(parse_point("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_point("a,b").is_err());
    }

    #[test]
    fn exit_codes_by_error_class() {
        assert_eq!(exit_code_for(&Error::InvalidConfig("x".into())), 2);
        assert_eq!(exit_code_for(&Error::InvalidSchedule("x".into())), 2);
        assert_eq!(
            exit_code_for(&Error::StudyAborted {
                degenerate: 5,
                total: 10
            }),
            3
        );
        assert_eq!(exit_code_for(&Error::DegenerateRadius { radius: 0.0 }), 3);
    }
}
