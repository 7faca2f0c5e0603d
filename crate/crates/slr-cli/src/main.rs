//! `slr` — joint between-sample normalization and differential expression
//! detection for RNA-seq count data, plus a simulator and AUC benchmark.
//!
//! Exit codes: 0 success, 2 usage error, 3 data/validation error,
//! 4 fit finished without converging (outputs still written).

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slr_core::error::Error;
use slr_core::io_units::ExpressionUnit;
use slr_core::simulator::{CountDistribution, SimulationConfig};
use slr_core::solver::{Penalty, SolverConfig};
use slr_core::variance::VarianceConfig;

use commands::{parse_external, parse_grid, BenchmarkSpec, FitSpec, Outcome, SimulateSpec};
use manifest::Manifest;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "slr",
    version,
    about = "Penalized joint normalization and differential expression for RNA-seq"
)]
struct Cli {
    /// Worker threads for the solvers and benchmark (0 = all cores). Results
    /// do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the penalized model to a count table and write per-gene and
    /// per-sample estimates.
    Fit(FitArgs),
    /// Generate a synthetic count table with known truth labels.
    Simulate(SimulateArgs),
    /// Replicated simulate-fit-score grid, reporting mean AUC per detector.
    Benchmark(BenchmarkArgs),
    /// Re-execute a run recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Count TSV: header `gene_id<TAB>s1...`, one row per gene.
    #[arg(long)]
    counts: PathBuf,
    /// Covariate TSV: header `sample_id<TAB>name1...`, one row per sample.
    #[arg(long)]
    covariates: PathBuf,
    /// Optional gene length sidecar (`gene_id<TAB>length`), needed for
    /// fpkm/tpm units.
    #[arg(long)]
    lengths: Option<PathBuf>,
    /// Optional library-size override sidecar (`sample_id<TAB>libsize`).
    #[arg(long)]
    libsizes: Option<PathBuf>,
    /// Output prefix; writes <prefix>.genes.tsv, <prefix>.samples.tsv and
    /// <prefix>.manifest.txt.
    #[arg(long)]
    out_prefix: String,
    /// Expression unit before the log transform: raw|cpm|fpkm|tpm.
    #[arg(long, default_value = "raw")]
    unit: String,
    /// Added to counts before unit scaling and log.
    #[arg(long, default_value_t = 0.5)]
    pseudocount: f64,
    /// Penalty: simple|type1|type2.
    #[arg(long, default_value = "simple")]
    penalty: String,
    /// Covariate penalized under type1 (moved last internally).
    #[arg(long)]
    covariate_of_interest: Option<String>,
    /// Penalty weight as a fraction of alpha_max, in (0,1).
    #[arg(long, default_value_t = 0.01)]
    alpha_ratio: f64,
    /// Absolute penalty weight; overrides --alpha-ratio.
    #[arg(long)]
    alpha: Option<f64>,
    /// ADMM augmented-Lagrangian constant.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    primal_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    dual_tol: f64,
    /// DE call threshold on the standardized coefficient scale.
    #[arg(long, default_value_t = 1e-6)]
    de_threshold: f64,
    /// Variance-estimation relative tolerance.
    #[arg(long, default_value_t = 1e-6)]
    var_tol: f64,
    #[arg(long, default_value_t = 200)]
    var_max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    variance_floor: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Output prefix; writes counts/truth/covariates/lengths/libsizes TSVs
    /// and a manifest.
    #[arg(long)]
    out_prefix: String,
    #[arg(long, default_value_t = 1000)]
    genes: usize,
    #[arg(long, default_value_t = 15)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    covariates: usize,
    #[arg(long, default_value_t = 0.0)]
    de_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    up_fraction: f64,
    /// lognormal|negbin.
    #[arg(long, default_value = "lognormal")]
    distribution: String,
    /// Noise sd of log expression (default sqrt(0.1)).
    #[arg(long)]
    lognormal_sd: Option<f64>,
    #[arg(long, default_value_t = 0.2)]
    negbin_dispersion_scale: f64,
    /// Mean absolute log-fold change of DE genes.
    #[arg(long)]
    fold_mean: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parameter preset: table1 (fold 2, log-noise variance 0.1) or
    /// benchmark (fold 1, log-noise sd 0.1).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Report TSV path; the manifest lands next to it.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated DE:UP percent cells, e.g. "30:50,70:90".
    #[arg(long)]
    grid: Option<String>,
    /// Grid preset: table2 expands to DE {30,50,70} x Up {50,70,90}.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    /// lognormal|negbin.
    #[arg(long, default_value = "lognormal")]
    distribution: String,
    /// Comma-separated detector names to run.
    #[arg(long, default_value = "slr-admm,naive-ols")]
    detectors: String,
    /// External detector as name=command; repeatable. The command is invoked
    /// as `command <counts.tsv> <covariates.tsv> <scores.tsv>`.
    #[arg(long)]
    external: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    genes: usize,
    #[arg(long, default_value_t = 15)]
    samples: usize,
    /// Noise sd of log expression (benchmark preset default 0.1).
    #[arg(long, default_value_t = 0.1)]
    lognormal_sd: f64,
    #[arg(long, default_value_t = 0.2)]
    negbin_dispersion_scale: f64,
    /// Mean absolute log-fold change (benchmark preset default 1).
    #[arg(long, default_value_t = 1.0)]
    fold_mean: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RerunArgs {
    /// Manifest written by a previous fit/simulate/benchmark run.
    #[arg(long)]
    manifest: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    match dispatch(cli.command) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("fit did not converge within max_iter; outputs written and flagged");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn configure_threads(threads: usize) {
    if threads > 0 {
        // ignore failure: the pool may already be initialized in tests
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn dispatch(command: Command) -> Result<Outcome, Error> {
    match command {
        Command::Fit(args) => fit_spec(args)?.run(),
        Command::Simulate(args) => simulate_spec(args)?.run(),
        Command::Benchmark(args) => benchmark_spec(args)?.run(),
        Command::Rerun(args) => {
            let m = Manifest::read(&args.manifest)?;
            match m.require("command")? {
                "fit" => FitSpec::from_manifest(&m)?.run(),
                "simulate" => SimulateSpec::from_manifest(&m)?.run(),
                "benchmark" => BenchmarkSpec::from_manifest(&m)?.run(),
                other => Err(Error::InvalidInput(format!(
                    "manifest records unknown command '{other}'"
                ))),
            }
        }
    }
}

fn fit_spec(args: FitArgs) -> Result<FitSpec, Error> {
    let spec = FitSpec {
        counts: args.counts,
        covariates: args.covariates,
        lengths: args.lengths,
        libsizes: args.libsizes,
        out_prefix: args.out_prefix,
        unit: args.unit.parse::<ExpressionUnit>()?,
        pseudocount: args.pseudocount,
        penalty: args.penalty.parse::<Penalty>()?,
        covariate_of_interest: args.covariate_of_interest,
        solver: SolverConfig {
            rho: args.rho,
            alpha_ratio: args.alpha_ratio,
            alpha_override: args.alpha,
            max_iter: args.max_iter,
            primal_tol: args.primal_tol,
            dual_tol: args.dual_tol,
            de_threshold: args.de_threshold,
        },
        variance: VarianceConfig {
            tol: args.var_tol,
            max_iter: args.var_max_iter,
            variance_floor: args.variance_floor,
        },
    };
    spec.solver.validate()?;
    Ok(spec)
}

fn simulate_spec(args: SimulateArgs) -> Result<SimulateSpec, Error> {
    let mut sim = match args.preset.as_deref() {
        None => SimulationConfig::default(),
        Some("table1") => SimulationConfig::table1_preset(0),
        Some("benchmark") => SimulationConfig::benchmark_preset(0),
        Some(other) => {
            return Err(Error::InvalidConfig(format!(
                "unknown preset '{other}' (expected table1|benchmark)"
            )))
        }
    };
    sim.genes = args.genes;
    sim.samples = args.samples;
    sim.covariates = args.covariates;
    sim.de_fraction = args.de_fraction;
    sim.up_fraction = args.up_fraction;
    sim.distribution = args.distribution.parse::<CountDistribution>()?;
    if let Some(sd) = args.lognormal_sd {
        sim.lognormal_sd = sd;
    }
    sim.negbin_dispersion_scale = args.negbin_dispersion_scale;
    if let Some(fm) = args.fold_mean {
        sim.fold_mean = fm;
    }
    sim.seed = args.seed;
    sim.validate()?;
    Ok(SimulateSpec {
        out_prefix: args.out_prefix,
        sim,
    })
}

fn benchmark_spec(args: BenchmarkArgs) -> Result<BenchmarkSpec, Error> {
    let grid = match (args.grid.as_deref(), args.preset.as_deref()) {
        (Some(raw), None) => parse_grid(raw)?,
        (None, Some("table2")) => slr_core::evaluation::BenchmarkConfig::full_grid(),
        (None, Some(other)) => {
            return Err(Error::InvalidConfig(format!(
                "unknown benchmark preset '{other}' (expected table2)"
            )))
        }
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig(
                "--grid and --preset are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(Error::InvalidConfig(
                "benchmark needs --grid or --preset table2".into(),
            ))
        }
    };
    let external = args
        .external
        .iter()
        .map(|raw| parse_external(raw))
        .collect::<Result<Vec<_>, _>>()?;
    let mut sim = SimulationConfig::benchmark_preset(args.seed);
    sim.genes = args.genes;
    sim.samples = args.samples;
    sim.distribution = args.distribution.parse::<CountDistribution>()?;
    sim.lognormal_sd = args.lognormal_sd;
    sim.negbin_dispersion_scale = args.negbin_dispersion_scale;
    sim.fold_mean = args.fold_mean;
    sim.validate()?;
    Ok(BenchmarkSpec {
        out: args.out,
        grid,
        replicates: args.replicates,
        detectors: args.detectors.split(',').map(str::to_string).collect(),
        external,
        sim,
    })
}
