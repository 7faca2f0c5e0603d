//! Synthetic RNA-seq data with known ground truth.
//!
//! Two count schemes share the same gene/sample parameter draws:
//!
//! * log-normal: log expression is Gaussian around the gene's linear
//!   predictor and counts are a deterministic allocation of the library to
//!   genes (floor(share * N) + 1);
//! * negative binomial: counts are drawn from NB(mean, dispersion) with
//!   gene-specific dispersions scaled by a common factor, the mean allocated
//!   across genes by the exponentiated linear predictor.
//!
//! All randomness flows through a counter-based generator with one named
//! stream per quantity, so outputs are bitwise reproducible for a fixed seed
//! regardless of parallelism elsewhere.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson, Uniform};

use crate::error::{Error, Result};
use crate::io_units::CountMatrix;

const STREAM_GENE: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_LENGTH: u64 = 4;
const STREAM_COUNT: u64 = 5;

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Count-generating scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountDistribution {
    LogNormal,
    NegBin,
}

impl fmt::Display for CountDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountDistribution::LogNormal => f.write_str("lognormal"),
            CountDistribution::NegBin => f.write_str("negbin"),
        }
    }
}

impl FromStr for CountDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lognormal" => Ok(CountDistribution::LogNormal),
            "negbin" => Ok(CountDistribution::NegBin),
            other => Err(Error::InvalidConfig(format!(
                "unknown distribution '{other}' (expected lognormal|negbin)"
            ))),
        }
    }
}

/// Simulation parameters.
///
/// Gene-level draws: intercepts ~ Normal(-3, var 2); DE effects
/// ~ Normal(+/- fold_mean, var 1) conditioned on the assigned sign;
/// log lengths ~ Uniform(5, 10); library sizes ~ Uniform(3e7, 5e7);
/// covariates ~ Normal(0, 1).
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub genes: usize,
    pub samples: usize,
    /// Number of covariate columns (1 for the standard presets).
    pub covariates: usize,
    pub de_fraction: f64,
    /// Share of DE genes that are up-regulated.
    pub up_fraction: f64,
    pub distribution: CountDistribution,
    /// Standard deviation of log expression around the linear predictor.
    pub lognormal_sd: f64,
    /// Multiplier on the gene-specific negative-binomial dispersions.
    pub negbin_dispersion_scale: f64,
    /// Mean absolute log-fold change of DE genes.
    pub fold_mean: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            genes: 1000,
            samples: 15,
            covariates: 1,
            de_fraction: 0.0,
            up_fraction: 0.5,
            distribution: CountDistribution::LogNormal,
            lognormal_sd: 0.1_f64.sqrt(),
            negbin_dispersion_scale: 0.2,
            fold_mean: 2.0,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    /// The base scenario grid preset: m=1000, n=15, fold mean 2, log noise
    /// variance 0.1.
    pub fn table1_preset(seed: u64) -> Self {
        SimulationConfig {
            seed,
            ..SimulationConfig::default()
        }
    }

    /// The benchmark preset: fold mean 1 and log noise sd 0.1.
    pub fn benchmark_preset(seed: u64) -> Self {
        SimulationConfig {
            fold_mean: 1.0,
            lognormal_sd: 0.1,
            seed,
            ..SimulationConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.genes < 2 || self.samples < 2 {
            return Err(Error::InvalidConfig(
                "need at least 2 genes and 2 samples".into(),
            ));
        }
        if self.covariates == 0 {
            return Err(Error::InvalidConfig("need at least one covariate".into()));
        }
        for (name, v) in [
            ("de-fraction", self.de_fraction),
            ("up-fraction", self.up_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if !(self.lognormal_sd > 0.0) {
            return Err(Error::InvalidConfig("lognormal sd must be positive".into()));
        }
        if !(self.negbin_dispersion_scale >= 0.0) {
            return Err(Error::InvalidConfig(
                "negbin dispersion scale must be non-negative".into(),
            ));
        }
        if !(self.fold_mean > 0.0) {
            return Err(Error::InvalidConfig("fold mean must be positive".into()));
        }
        Ok(())
    }

    /// DE gene count: m * de_fraction rounded half away from zero.
    pub fn n_de(&self) -> usize {
        (self.genes as f64 * self.de_fraction).round() as usize
    }

    /// Up-regulated count among DE genes, rounded the same way.
    pub fn n_up(&self) -> usize {
        (self.n_de() as f64 * self.up_fraction).round() as usize
    }
}

/// Ground truth for benchmark scoring.
#[derive(Debug, Clone)]
pub struct SimulationTruth {
    pub de_labels: Vec<bool>,
    /// m×p true coefficients on the raw covariate scale.
    pub true_beta: Array2<f64>,
    pub true_beta0: Vec<f64>,
    /// n×p raw covariate values.
    pub x: Array2<f64>,
    pub gene_lengths: Vec<f64>,
    pub library_sizes: Vec<f64>,
}

struct GeneParams {
    beta0: Vec<f64>,
    beta: Array2<f64>,
    de_labels: Vec<bool>,
}

/// Gene-level parameters: intercepts and sign-coherent DE effects. The first
/// n_up genes are up-regulated, the next n_de - n_up down-regulated.
fn draw_gene_params(cfg: &SimulationConfig) -> GeneParams {
    let mut rng = stream_rng(cfg.seed, STREAM_GENE);
    let m = cfg.genes;
    let p = cfg.covariates;
    let n_de = cfg.n_de();
    let n_up = cfg.n_up();
    let intercept = Normal::new(-3.0, 2.0_f64.sqrt()).unwrap();
    let up = Normal::new(cfg.fold_mean, 1.0).unwrap();
    let down = Normal::new(-cfg.fold_mean, 1.0).unwrap();

    let mut beta0 = Vec::with_capacity(m);
    let mut beta = Array2::zeros((m, p));
    let mut de_labels = vec![false; m];
    for i in 0..m {
        beta0.push(intercept.sample(&mut rng));
        if i < n_de {
            de_labels[i] = true;
            let up_gene = i < n_up;
            for c in 0..p {
                // redraw until the sign matches the assignment
                let b = loop {
                    let b = if up_gene { up.sample(&mut rng) } else { down.sample(&mut rng) };
                    if (up_gene && b > 0.0) || (!up_gene && b < 0.0) {
                        break b;
                    }
                };
                beta[[i, c]] = b;
            }
        }
    }
    GeneParams {
        beta0,
        beta,
        de_labels,
    }
}

struct SampleParams {
    x: Array2<f64>,
    library_sizes: Vec<f64>,
}

fn draw_sample_params(cfg: &SimulationConfig) -> SampleParams {
    let mut rng = stream_rng(cfg.seed, STREAM_SAMPLE);
    let n = cfg.samples;
    let p = cfg.covariates;
    let xdist = Normal::new(0.0, 1.0).unwrap();
    let x = Array2::from_shape_fn((n, p), |_| xdist.sample(&mut rng));
    let ndist = Uniform::new(3e7, 5e7).unwrap();
    let library_sizes: Vec<f64> = (0..n).map(|_| ndist.sample(&mut rng)).collect();
    SampleParams { x, library_sizes }
}

fn draw_gene_lengths(cfg: &SimulationConfig) -> Vec<f64> {
    let mut rng = stream_rng(cfg.seed, STREAM_LENGTH);
    let ldist = Uniform::new(5.0_f64, 10.0).unwrap();
    (0..cfg.genes)
        .map(|_| {
            let log_len: f64 = ldist.sample(&mut rng);
            log_len.exp()
        })
        .collect()
}

fn gene_ids(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("g{:06}", i + 1)).collect()
}

fn sample_ids(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("s{:03}", j + 1)).collect()
}

/// Dispatches on the configured distribution.
pub fn simulate(cfg: &SimulationConfig) -> Result<(CountMatrix, SimulationTruth)> {
    match cfg.distribution {
        CountDistribution::LogNormal => simulate_lognormal(cfg),
        CountDistribution::NegBin => simulate_negbin(cfg),
    }
}

/// Log-normal scheme: per-entry log expression y_ij ~ Normal(beta0_i +
/// beta_i'x_j, lognormal_sd); the library is split across genes proportional
/// to l_i * exp(y_ij) and counts are floor(share * N_j) + 1, so every count
/// is at least one.
pub fn simulate_lognormal(cfg: &SimulationConfig) -> Result<(CountMatrix, SimulationTruth)> {
    cfg.validate()?;
    let (m, n, p) = (cfg.genes, cfg.samples, cfg.covariates);
    let genes = draw_gene_params(cfg);
    let samples = draw_sample_params(cfg);
    let lengths = draw_gene_lengths(cfg);

    let mut noise_rng = stream_rng(cfg.seed, STREAM_NOISE);
    let noise = Normal::new(0.0, cfg.lognormal_sd).unwrap();
    let mut log_expr = Array2::<f64>::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let mut mean = genes.beta0[i];
            for c in 0..p {
                mean += genes.beta[[i, c]] * samples.x[[j, c]];
            }
            log_expr[[i, j]] = mean + noise.sample(&mut noise_rng);
        }
    }

    let mut counts = Array2::zeros((m, n));
    for j in 0..n {
        let mut denom = 0.0;
        for i in 0..m {
            denom += lengths[i] * log_expr[[i, j]].exp();
        }
        for i in 0..m {
            let share = lengths[i] * log_expr[[i, j]].exp() / denom;
            counts[[i, j]] = (samples.library_sizes[j] * share).floor() as u64 + 1;
        }
    }

    let mut cm = CountMatrix::new(counts, gene_ids(m), sample_ids(n))?;
    cm.gene_lengths = Some(lengths.clone());
    cm.library_sizes = samples.library_sizes.clone();
    let truth = SimulationTruth {
        de_labels: genes.de_labels,
        true_beta: genes.beta,
        true_beta0: genes.beta0,
        x: samples.x,
        gene_lengths: lengths,
        library_sizes: samples.library_sizes,
    };
    Ok((cm, truth))
}

/// Draws one negative-binomial count with the given mean and dispersion via
/// the gamma-Poisson mixture; dispersion ~ 0 degenerates to Poisson.
fn sample_negbin(rng: &mut ChaCha12Rng, mean: f64, dispersion: f64) -> u64 {
    let lambda = if dispersion < 1e-12 {
        mean
    } else {
        let gamma = Gamma::new(1.0 / dispersion, dispersion * mean).unwrap();
        gamma.sample(rng)
    };
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).unwrap().sample(rng) as u64
}

/// Negative-binomial scheme: the mean matrix allocates each library across
/// genes proportional to exp(beta0_i + beta_i'x_j); per-gene dispersions are
/// log-normal (ln phi ~ Normal(-1.5, 0.5)) scaled by the configured factor.
pub fn simulate_negbin(cfg: &SimulationConfig) -> Result<(CountMatrix, SimulationTruth)> {
    cfg.validate()?;
    let (m, n, p) = (cfg.genes, cfg.samples, cfg.covariates);
    let genes = draw_gene_params(cfg);
    let samples = draw_sample_params(cfg);
    let lengths = draw_gene_lengths(cfg);

    let mut count_rng = stream_rng(cfg.seed, STREAM_COUNT);
    let phi_dist = Normal::new(-1.5, 0.5).unwrap();
    let dispersions: Vec<f64> = (0..m)
        .map(|_| {
            let log_phi: f64 = phi_dist.sample(&mut count_rng);
            log_phi.exp() * cfg.negbin_dispersion_scale
        })
        .collect();

    let mut eta = Array2::<f64>::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let mut v = genes.beta0[i];
            for c in 0..p {
                v += genes.beta[[i, c]] * samples.x[[j, c]];
            }
            eta[[i, j]] = v;
        }
    }

    let mut counts = Array2::zeros((m, n));
    for j in 0..n {
        let mut denom = 0.0;
        for i in 0..m {
            denom += eta[[i, j]].exp();
        }
        for i in 0..m {
            let mean = samples.library_sizes[j] * eta[[i, j]].exp() / denom;
            counts[[i, j]] = sample_negbin(&mut count_rng, mean, dispersions[i]);
        }
    }

    let mut cm = CountMatrix::new(counts, gene_ids(m), sample_ids(n))?;
    cm.gene_lengths = Some(lengths.clone());
    cm.library_sizes = samples.library_sizes.clone();
    let truth = SimulationTruth {
        de_labels: genes.de_labels,
        true_beta: genes.beta,
        true_beta0: genes.beta0,
        x: samples.x,
        gene_lengths: lengths,
        library_sizes: samples.library_sizes,
    };
    Ok((cm, truth))
}

/// Writes the truth TSV: `gene_id<TAB>is_de<TAB>true_beta` (one beta column
/// per covariate for p > 1).
pub fn write_truth_tsv(truth: &SimulationTruth, gene_ids: &[String], path: &Path) -> Result<()> {
    let p = truth.true_beta.ncols();
    let mut w = BufWriter::new(File::create(path)?);
    if p == 1 {
        writeln!(w, "gene_id\tis_de\ttrue_beta")?;
    } else {
        write!(w, "gene_id\tis_de")?;
        for c in 0..p {
            write!(w, "\ttrue_beta_x{}", c + 1)?;
        }
        writeln!(w)?;
    }
    for (i, g) in gene_ids.iter().enumerate() {
        write!(w, "{g}\t{}", if truth.de_labels[i] { 1 } else { 0 })?;
        for c in 0..p {
            write!(w, "\t{}", truth.true_beta[[i, c]])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Covariate names used for simulated designs: x1..xp.
pub fn covariate_names(p: usize) -> Vec<String> {
    (1..=p).map(|c| format!("x{c}")).collect()
}
