//! DE detection scoring and the replicated benchmark harness.
//!
//! Detectors are trait objects registered by name; built-ins are the ADMM
//! fit (`slr-admm`) and an unpenalized per-gene baseline (`naive-ols`).
//! External tools plug in through a subprocess contract: the adapter writes
//! counts and covariates as TSV, invokes
//! `<program> <counts.tsv> <covariates.tsv> <scores.tsv>` and reads back a
//! `gene_id<TAB>score` table.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io_units::{self, CountMatrix, ExpressionUnit};
use crate::preprocess::{standardize_design, write_covariates_tsv};
use crate::simulator::{covariate_names, simulate, SimulationConfig};
use crate::solver::{strategy_for, Penalty, SolverConfig};
use crate::variance::{estimate_shrunken, VarianceConfig};

/// Probability that a random positive outranks a random negative, ties
/// credited one half. Computed from average ranks, so it is exact under ties
/// and invariant under strictly increasing transforms of the scores.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput(
            "AUC needs at least one positive and one negative label".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0_f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg_rank;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// A named DE detector: counts and raw covariates in, one score per gene out
/// (higher means more likely differentially expressed).
pub trait Detector: Send + Sync {
    fn name(&self) -> &str;

    fn scores(&self, counts: &CountMatrix, covariates: ArrayView2<f64>) -> Result<Vec<f64>>;
}

/// The penalized joint-normalization fit; scores are the standardized
/// coefficient magnitudes.
pub struct SlrAdmmDetector {
    pub unit: ExpressionUnit,
    pub pseudocount: f64,
    pub penalty: Penalty,
    pub solver: SolverConfig,
    pub variance: VarianceConfig,
}

impl Default for SlrAdmmDetector {
    fn default() -> Self {
        SlrAdmmDetector {
            unit: ExpressionUnit::Raw,
            pseudocount: 0.5,
            penalty: Penalty::Simple,
            solver: SolverConfig::default(),
            variance: VarianceConfig::default(),
        }
    }
}

impl Detector for SlrAdmmDetector {
    fn name(&self) -> &str {
        "slr-admm"
    }

    fn scores(&self, counts: &CountMatrix, covariates: ArrayView2<f64>) -> Result<Vec<f64>> {
        let y = io_units::prepare_expression(counts, self.unit, self.pseudocount)?;
        let names = covariate_names(covariates.ncols());
        let design = standardize_design(covariates, names)?;
        let variances = estimate_shrunken(&y, &design, &self.variance)?;
        let fit = strategy_for(self.penalty).fit(&y, &design, &variances, &self.solver)?;
        Ok(fit.de_scores())
    }
}

/// Per-gene simple regression of column-mean-normalized log expression on
/// the covariate; the score is the absolute slope. No joint normalization,
/// no penalty: the baseline that isolates what the model adds.
pub struct NaiveOlsDetector {
    pub pseudocount: f64,
}

impl Default for NaiveOlsDetector {
    fn default() -> Self {
        NaiveOlsDetector { pseudocount: 0.5 }
    }
}

impl Detector for NaiveOlsDetector {
    fn name(&self) -> &str {
        "naive-ols"
    }

    fn scores(&self, counts: &CountMatrix, covariates: ArrayView2<f64>) -> Result<Vec<f64>> {
        if covariates.ncols() != 1 {
            return Err(Error::Detector {
                name: self.name().into(),
                message: "naive-ols supports a single covariate".into(),
            });
        }
        let y = io_units::prepare_expression(counts, ExpressionUnit::Raw, self.pseudocount)?;
        let (m, n) = y.values.dim();
        let x: Vec<f64> = (0..n).map(|j| covariates[[j, 0]]).collect();
        let design = crate::preprocess::standardize_single(&x, "x")?;

        // column-mean normalization
        let col_means: Vec<f64> = (0..n)
            .map(|j| y.values.column(j).iter().sum::<f64>() / m as f64)
            .collect();
        let mut scores = Vec::with_capacity(m);
        for i in 0..m {
            let mut slope = 0.0;
            for j in 0..n {
                slope += design.values[[j, 0]] * (y.values[[i, j]] - col_means[j]);
            }
            scores.push(slope.abs());
        }
        Ok(scores)
    }
}

/// Runs an external program with the subprocess contract described in the
/// module docs.
pub struct ExternalDetector {
    name: String,
    /// Program plus leading arguments, whitespace-separated.
    program: String,
}

impl ExternalDetector {
    pub fn new(name: impl Into<String>, program: impl Into<String>) -> Self {
        ExternalDetector {
            name: name.into(),
            program: program.into(),
        }
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Detector {
            name: self.name.clone(),
            message: message.into(),
        }
    }
}

impl Detector for ExternalDetector {
    fn name(&self) -> &str {
        &self.name
    }

    fn scores(&self, counts: &CountMatrix, covariates: ArrayView2<f64>) -> Result<Vec<f64>> {
        let dir = tempfile::tempdir()?;
        let counts_path = dir.path().join("counts.tsv");
        let cov_path = dir.path().join("covariates.tsv");
        let out_path = dir.path().join("scores.tsv");
        io_units::write_counts_tsv(counts, &counts_path)?;
        write_covariates_tsv(
            covariates,
            &counts.sample_ids,
            &covariate_names(covariates.ncols()),
            &cov_path,
        )?;

        let mut parts = self.program.split_whitespace();
        let bin = parts
            .next()
            .ok_or_else(|| self.fail("empty detector command"))?;
        let status = std::process::Command::new(bin)
            .args(parts)
            .arg(&counts_path)
            .arg(&cov_path)
            .arg(&out_path)
            .status()
            .map_err(|e| self.fail(format!("failed to launch '{bin}': {e}")))?;
        if !status.success() {
            return Err(self.fail(format!("exited with {status}")));
        }

        let file = File::open(&out_path).map_err(|e| self.fail(format!("no score file: {e}")))?;
        let mut lines = BufReader::new(file).lines();
        match lines.next() {
            Some(Ok(h)) if h == "gene_id\tscore" => {}
            _ => return Err(self.fail("score file must start with 'gene_id\\tscore'")),
        }
        let mut by_id: std::collections::HashMap<String, f64> = std::collections::HashMap::new();
        for line in lines {
            let line = line.map_err(|e| self.fail(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let gene = fields.next().unwrap_or_default().to_string();
            let score: f64 = fields
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| self.fail(format!("bad score line '{line}'")))?;
            by_id.insert(gene, score);
        }
        counts
            .gene_ids
            .iter()
            .map(|g| {
                by_id
                    .get(g)
                    .copied()
                    .ok_or_else(|| self.fail(format!("no score for gene '{g}'")))
            })
            .collect()
    }
}

/// Name-keyed detector registry; iteration order is the sorted name order.
pub struct DetectorRegistry {
    inner: BTreeMap<String, Arc<dyn Detector>>,
}

impl DetectorRegistry {
    pub fn new() -> Self {
        DetectorRegistry {
            inner: BTreeMap::new(),
        }
    }

    /// Registry preloaded with the built-in detectors.
    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        reg.register(Arc::new(SlrAdmmDetector::default())).unwrap();
        reg.register(Arc::new(NaiveOlsDetector::default())).unwrap();
        reg
    }

    pub fn register(&mut self, detector: Arc<dyn Detector>) -> Result<()> {
        let name = detector.name().to_string();
        if self.inner.contains_key(&name) {
            return Err(Error::InvalidConfig(format!(
                "detector '{name}' already registered"
            )));
        }
        self.inner.insert(name, detector);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Detector>> {
        self.inner.get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        self.inner.keys().cloned().collect()
    }
}

impl Default for DetectorRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

/// One aggregated benchmark cell for one detector.
#[derive(Debug, Clone)]
pub struct BenchmarkRow {
    pub de_pct: u32,
    pub up_pct: u32,
    pub method: String,
    /// NaN when no replicate succeeded.
    pub mean_auc: f64,
    /// Sample standard deviation over replicates divided by sqrt(replicates);
    /// 0 when only one replicate succeeded (see `stderr_degenerate`).
    pub stderr_auc: f64,
    pub stderr_degenerate: bool,
    /// Successful replicate count.
    pub replicates: usize,
    /// Failed replicate count; nonzero marks the cell incomplete.
    pub failures: usize,
}

/// Aggregated grid results plus a fingerprint of everything that determined
/// them.
#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub config_fingerprint: String,
    /// Human-readable failure records: (de_pct, up_pct, method, message).
    pub failures: Vec<(u32, u32, String, String)>,
}

/// Grid specification for [`run_benchmark`].
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    /// (de_pct, up_pct) cells.
    pub grid: Vec<(u32, u32)>,
    pub replicates: usize,
    /// Template simulation; de/up fractions and seed are overwritten per cell
    /// and replicate (replicate r uses seed base_seed + r).
    pub base: SimulationConfig,
}

impl BenchmarkConfig {
    /// The 9-cell DE {30,50,70} x Up {50,70,90} grid.
    pub fn full_grid() -> Vec<(u32, u32)> {
        let mut grid = Vec::new();
        for de in [30, 50, 70] {
            for up in [50, 70, 90] {
                grid.push((de, up));
            }
        }
        grid
    }

    fn fingerprint(&self, detector_names: &[String]) -> String {
        let canon = format!(
            "grid={:?};replicates={};m={};n={};p={};dist={};lognormal_sd={};negbin_scale={};fold={};seed={};detectors={:?}",
            self.grid,
            self.replicates,
            self.base.genes,
            self.base.samples,
            self.base.covariates,
            self.base.distribution,
            self.base.lognormal_sd,
            self.base.negbin_dispersion_scale,
            self.base.fold_mean,
            self.base.seed,
            detector_names,
        );
        format!("{:016x}", fnv1a64(canon.as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Simulate -> detect -> score over the grid, aggregating mean AUC and its
/// standard error over replicates. Detector failures are recorded per cell;
/// the remaining replicates still aggregate.
pub fn run_benchmark(
    cfg: &BenchmarkConfig,
    detectors: &[Arc<dyn Detector>],
) -> Result<BenchmarkReport> {
    if cfg.replicates == 0 {
        return Err(Error::InvalidConfig("need at least one replicate".into()));
    }
    if detectors.is_empty() {
        return Err(Error::InvalidConfig("need at least one detector".into()));
    }
    cfg.base.validate()?;
    for (de, up) in &cfg.grid {
        if *de > 100 || *up > 100 {
            return Err(Error::InvalidConfig(format!(
                "grid cell {de}:{up} out of range (percent)"
            )));
        }
    }

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &(de, up) in &cfg.grid {
        // per replicate, per detector: Ok(auc) or Err(message)
        let replicate_results: Vec<Vec<std::result::Result<f64, String>>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let sim_cfg = SimulationConfig {
                    de_fraction: de as f64 / 100.0,
                    up_fraction: up as f64 / 100.0,
                    seed: cfg.base.seed.wrapping_add(r as u64),
                    ..cfg.base.clone()
                };
                match simulate(&sim_cfg) {
                    Ok((counts, truth)) => detectors
                        .iter()
                        .map(|d| {
                            d.scores(&counts, truth.x.view())
                                .and_then(|s| auc(&s, &truth.de_labels))
                                .map_err(|e| e.to_string())
                        })
                        .collect(),
                    Err(e) => detectors
                        .iter()
                        .map(|_| Err(format!("simulation failed: {e}")))
                        .collect(),
                }
            })
            .collect();

        for (k, detector) in detectors.iter().enumerate() {
            let mut aucs = Vec::new();
            let mut failed = 0usize;
            for (r, rep) in replicate_results.iter().enumerate() {
                match &rep[k] {
                    Ok(a) => aucs.push(*a),
                    Err(msg) => {
                        failed += 1;
                        failures.push((
                            de,
                            up,
                            detector.name().to_string(),
                            format!("replicate {r}: {msg}"),
                        ));
                    }
                }
            }
            let kn = aucs.len();
            let mean = if kn > 0 {
                aucs.iter().sum::<f64>() / kn as f64
            } else {
                f64::NAN
            };
            let (stderr, degenerate) = if kn >= 2 {
                let var = aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (kn as f64 - 1.0);
                (var.sqrt() / (kn as f64).sqrt(), false)
            } else {
                (0.0, true)
            };
            rows.push(BenchmarkRow {
                de_pct: de,
                up_pct: up,
                method: detector.name().to_string(),
                mean_auc: mean,
                stderr_auc: stderr,
                stderr_degenerate: degenerate,
                replicates: kn,
                failures: failed,
            });
        }
    }
    rows.sort_by(|a, b| {
        (a.de_pct, a.up_pct, &a.method).cmp(&(b.de_pct, b.up_pct, &b.method))
    });

    let names: Vec<String> = detectors.iter().map(|d| d.name().to_string()).collect();
    Ok(BenchmarkReport {
        config_fingerprint: cfg.fingerprint(&names),
        rows,
        failures,
    })
}

/// Writes the report TSV:
/// `de_pct<TAB>up_pct<TAB>method<TAB>mean_auc<TAB>stderr<TAB>replicates`.
pub fn write_report_tsv(report: &BenchmarkReport, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "de_pct\tup_pct\tmethod\tmean_auc\tstderr\treplicates")?;
    for row in &report.rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            row.de_pct, row.up_pct, row.method, row.mean_auc, row.stderr_auc, row.replicates
        )?;
    }
    w.flush()?;
    Ok(())
}
