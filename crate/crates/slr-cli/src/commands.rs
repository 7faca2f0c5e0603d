//! Resolved command specifications: each can run, serialize itself to a
//! manifest, and be rebuilt from one.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use slr_core::error::{Error, Result};
use slr_core::evaluation::{
    run_benchmark, write_report_tsv, BenchmarkConfig, Detector, DetectorRegistry, ExternalDetector,
};
use slr_core::io_units::{
    self, ExpressionUnit, {load_counts, load_gene_lengths, load_library_sizes},
};
use slr_core::preprocess::{load_covariates, standardize_design, write_covariates_tsv};
use slr_core::simulator::{self, covariate_names, write_truth_tsv, SimulationConfig};
use slr_core::solver::{strategy_for, FitResult, Penalty, SolverConfig};
use slr_core::variance::{estimate_shrunken, VarianceConfig};

use crate::manifest::Manifest;

/// Exit status classification for `main`.
pub enum Outcome {
    Success,
    /// Fit finished but did not converge; outputs were still written.
    NotConverged,
}

fn manifest_path(prefix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}.manifest.txt"))
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FitSpec {
    pub counts: PathBuf,
    pub covariates: PathBuf,
    pub lengths: Option<PathBuf>,
    pub libsizes: Option<PathBuf>,
    pub out_prefix: String,
    pub unit: ExpressionUnit,
    pub pseudocount: f64,
    pub penalty: Penalty,
    pub covariate_of_interest: Option<String>,
    pub solver: SolverConfig,
    pub variance: VarianceConfig,
}

impl FitSpec {
    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new("fit");
        m.set("counts", self.counts.display());
        m.set("covariates", self.covariates.display());
        m.set_opt("lengths", self.lengths.as_ref().map(|p| p.display().to_string()));
        m.set_opt("libsizes", self.libsizes.as_ref().map(|p| p.display().to_string()));
        m.set("out_prefix", &self.out_prefix);
        m.set("unit", self.unit);
        m.set("pseudocount", self.pseudocount);
        m.set("penalty", self.penalty);
        m.set_opt("covariate_of_interest", self.covariate_of_interest.clone());
        m.set("rho", self.solver.rho);
        m.set("alpha_ratio", self.solver.alpha_ratio);
        m.set_opt("alpha_override", self.solver.alpha_override);
        m.set("max_iter", self.solver.max_iter);
        m.set("primal_tol", self.solver.primal_tol);
        m.set("dual_tol", self.solver.dual_tol);
        m.set("de_threshold", self.solver.de_threshold);
        m.set("var_tol", self.variance.tol);
        m.set("var_max_iter", self.variance.max_iter);
        m.set("variance_floor", self.variance.variance_floor);
        m
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        Ok(FitSpec {
            counts: PathBuf::from(m.require("counts")?),
            covariates: PathBuf::from(m.require("covariates")?),
            lengths: m.get("lengths").map(PathBuf::from),
            libsizes: m.get("libsizes").map(PathBuf::from),
            out_prefix: m.require("out_prefix")?.to_string(),
            unit: m.parse("unit")?,
            pseudocount: m.parse("pseudocount")?,
            penalty: m.parse("penalty")?,
            covariate_of_interest: m.get("covariate_of_interest").map(str::to_string),
            solver: SolverConfig {
                rho: m.parse("rho")?,
                alpha_ratio: m.parse("alpha_ratio")?,
                alpha_override: m.parse_opt("alpha_override")?,
                max_iter: m.parse("max_iter")?,
                primal_tol: m.parse("primal_tol")?,
                dual_tol: m.parse("dual_tol")?,
                de_threshold: m.parse("de_threshold")?,
            },
            variance: VarianceConfig {
                tol: m.parse("var_tol")?,
                max_iter: m.parse("var_max_iter")?,
                variance_floor: m.parse("variance_floor")?,
            },
        })
    }

    pub fn run(&self) -> Result<Outcome> {
        self.solver.validate()?;
        if self.penalty == Penalty::Type1 && self.covariate_of_interest.is_none() {
            return Err(Error::InvalidConfig(
                "--penalty type1 requires --covariate-of-interest".into(),
            ));
        }

        let mut counts = load_counts(&self.counts)?;
        if let Some(p) = &self.lengths {
            counts.set_gene_lengths(&load_gene_lengths(p)?)?;
        }
        if let Some(p) = &self.libsizes {
            counts.set_library_sizes(&load_library_sizes(p)?)?;
        }
        let (mut cov_values, mut cov_names) = load_covariates(&self.covariates, &counts.sample_ids)?;

        // Type I penalizes the last column; move the covariate of interest
        // there and remember how to undo it for reporting.
        let p = cov_values.ncols();
        let mut column_order: Vec<usize> = (0..p).collect();
        if let Some(name) = &self.covariate_of_interest {
            let pos = cov_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown covariate '{name}'")))?;
            column_order.remove(pos);
            column_order.push(pos);
            let reordered = ndarray::Array2::from_shape_fn((cov_values.nrows(), p), |(j, c)| {
                cov_values[[j, column_order[c]]]
            });
            cov_values = reordered;
            cov_names = column_order.iter().map(|&c| cov_names[c].clone()).collect();
        }
        if self.penalty == Penalty::Simple && p != 1 {
            return Err(Error::InvalidConfig(format!(
                "--penalty simple needs exactly one covariate, the table has {p}"
            )));
        }

        let y = io_units::prepare_expression(&counts, self.unit, self.pseudocount)?;
        let design = standardize_design(cov_values.view(), cov_names.clone())?;
        let variances = estimate_shrunken(&y, &design, &self.variance)?;
        if !variances.converged {
            eprintln!(
                "warning: variance estimation hit max_iter={} without converging",
                self.variance.max_iter
            );
        }
        let strategy = strategy_for(self.penalty);
        let fit = strategy.fit(&y, &design, &variances, &self.solver)?;
        eprintln!(
            "fit: alpha_max={} alpha={} iterations={} converged={} primal_residual={:e} dual_residual={:e}",
            fit.alpha_max,
            fit.alpha_used,
            fit.iterations,
            fit.converged,
            fit.primal_residual,
            fit.dual_residual,
        );

        self.write_outputs(&counts.gene_ids, &counts.sample_ids, &cov_names, &column_order, &fit)?;
        self.to_manifest().write(&manifest_path(&self.out_prefix))?;
        Ok(if fit.converged {
            Outcome::Success
        } else {
            Outcome::NotConverged
        })
    }

    fn write_outputs(
        &self,
        gene_ids: &[String],
        sample_ids: &[String],
        cov_names: &[String],
        column_order: &[usize],
        fit: &FitResult,
    ) -> Result<()> {
        let p = fit.n_covariates();
        // undo the covariate-of-interest reordering for reporting
        let mut original_pos = vec![0usize; p];
        for (fitted_col, &orig_col) in column_order.iter().enumerate() {
            original_pos[orig_col] = fitted_col;
        }

        let genes_path = format!("{}.genes.tsv", self.out_prefix);
        let mut w = BufWriter::new(File::create(&genes_path)?);
        write!(w, "gene_id\tbeta0")?;
        // header and beta columns in the original covariate order
        let mut ordered_names: Vec<(usize, &String)> = column_order
            .iter()
            .enumerate()
            .map(|(fitted, &orig)| (orig, &cov_names[fitted]))
            .collect();
        ordered_names.sort_by_key(|(orig, _)| *orig);
        for (_, name) in &ordered_names {
            write!(w, "\tbeta_{name}")?;
        }
        writeln!(w, "\tsigma2\tde_flag")?;
        for (i, g) in gene_ids.iter().enumerate() {
            write!(w, "{g}\t{}", fit.beta0[i])?;
            for (orig, _) in &ordered_names {
                write!(w, "\t{}", fit.beta[[i, original_pos[*orig]]])?;
            }
            writeln!(w, "\t{}\t{}", fit.sigma2[i], u8::from(fit.de_flags[i]))?;
        }
        w.flush()?;

        let samples_path = format!("{}.samples.tsv", self.out_prefix);
        let mut w = BufWriter::new(File::create(&samples_path)?);
        writeln!(w, "sample_id\td")?;
        for (j, s) in sample_ids.iter().enumerate() {
            writeln!(w, "{s}\t{}", fit.d[j])?;
        }
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SimulateSpec {
    pub out_prefix: String,
    pub sim: SimulationConfig,
}

impl SimulateSpec {
    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new("simulate");
        m.set("out_prefix", &self.out_prefix);
        m.set("genes", self.sim.genes);
        m.set("samples", self.sim.samples);
        m.set("covariates", self.sim.covariates);
        m.set("de_fraction", self.sim.de_fraction);
        m.set("up_fraction", self.sim.up_fraction);
        m.set("distribution", self.sim.distribution);
        m.set("lognormal_sd", self.sim.lognormal_sd);
        m.set("negbin_dispersion_scale", self.sim.negbin_dispersion_scale);
        m.set("fold_mean", self.sim.fold_mean);
        m.set("seed", self.sim.seed);
        m
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        Ok(SimulateSpec {
            out_prefix: m.require("out_prefix")?.to_string(),
            sim: SimulationConfig {
                genes: m.parse("genes")?,
                samples: m.parse("samples")?,
                covariates: m.parse("covariates")?,
                de_fraction: m.parse("de_fraction")?,
                up_fraction: m.parse("up_fraction")?,
                distribution: m.parse("distribution")?,
                lognormal_sd: m.parse("lognormal_sd")?,
                negbin_dispersion_scale: m.parse("negbin_dispersion_scale")?,
                fold_mean: m.parse("fold_mean")?,
                seed: m.parse("seed")?,
            },
        })
    }

    pub fn run(&self) -> Result<Outcome> {
        let (counts, truth) = simulator::simulate(&self.sim)?;
        let prefix = &self.out_prefix;
        io_units::write_counts_tsv(&counts, Path::new(&format!("{prefix}.counts.tsv")))?;
        write_truth_tsv(&truth, &counts.gene_ids, Path::new(&format!("{prefix}.truth.tsv")))?;
        write_covariates_tsv(
            truth.x.view(),
            &counts.sample_ids,
            &covariate_names(self.sim.covariates),
            Path::new(&format!("{prefix}.covariates.tsv")),
        )?;
        io_units::write_gene_lengths_tsv(
            &counts.gene_ids,
            &truth.gene_lengths,
            Path::new(&format!("{prefix}.lengths.tsv")),
        )?;
        io_units::write_library_sizes_tsv(
            &counts.sample_ids,
            &truth.library_sizes,
            Path::new(&format!("{prefix}.libsizes.tsv")),
        )?;
        self.to_manifest().write(&manifest_path(prefix))?;

        let n_de = truth.de_labels.iter().filter(|l| **l).count();
        let n_up = truth
            .true_beta
            .rows()
            .into_iter()
            .filter(|r| r.iter().any(|b| *b > 0.0))
            .count();
        println!(
            "simulated {} genes x {} samples: {} DE ({} up, {} down)",
            self.sim.genes,
            self.sim.samples,
            n_de,
            n_up,
            n_de - n_up
        );
        Ok(Outcome::Success)
    }
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub out: PathBuf,
    pub grid: Vec<(u32, u32)>,
    pub replicates: usize,
    pub detectors: Vec<String>,
    /// name=command pairs for external subprocess detectors.
    pub external: Vec<(String, String)>,
    pub sim: SimulationConfig,
}

impl BenchmarkSpec {
    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new("benchmark");
        m.set("out", self.out.display());
        m.set(
            "grid",
            self.grid
                .iter()
                .map(|(de, up)| format!("{de}:{up}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        m.set("replicates", self.replicates);
        m.set("detectors", self.detectors.join(","));
        if !self.external.is_empty() {
            m.set(
                "external",
                self.external
                    .iter()
                    .map(|(n, c)| format!("{n}={c}"))
                    .collect::<Vec<_>>()
                    .join(";"),
            );
        }
        m.set("genes", self.sim.genes);
        m.set("samples", self.sim.samples);
        m.set("covariates", self.sim.covariates);
        m.set("distribution", self.sim.distribution);
        m.set("lognormal_sd", self.sim.lognormal_sd);
        m.set("negbin_dispersion_scale", self.sim.negbin_dispersion_scale);
        m.set("fold_mean", self.sim.fold_mean);
        m.set("seed", self.sim.seed);
        m
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let grid = parse_grid(m.require("grid")?)?;
        let detectors = m
            .require("detectors")?
            .split(',')
            .map(str::to_string)
            .collect();
        let external = match m.get("external") {
            None => Vec::new(),
            Some(raw) => raw
                .split(';')
                .map(parse_external)
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(BenchmarkSpec {
            out: PathBuf::from(m.require("out")?),
            grid,
            replicates: m.parse("replicates")?,
            detectors,
            external,
            sim: SimulationConfig {
                genes: m.parse("genes")?,
                samples: m.parse("samples")?,
                covariates: m.parse("covariates")?,
                de_fraction: 0.0,
                up_fraction: 0.5,
                distribution: m.parse("distribution")?,
                lognormal_sd: m.parse("lognormal_sd")?,
                negbin_dispersion_scale: m.parse("negbin_dispersion_scale")?,
                fold_mean: m.parse("fold_mean")?,
                seed: m.parse("seed")?,
            },
        })
    }

    pub fn run(&self) -> Result<Outcome> {
        let mut registry = DetectorRegistry::with_builtins();
        for (name, cmd) in &self.external {
            registry.register(Arc::new(ExternalDetector::new(name.clone(), cmd.clone())))?;
        }
        let detectors: Vec<Arc<dyn Detector>> = self
            .detectors
            .iter()
            .map(|name| {
                registry.get(name).ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "unknown detector '{name}' (registered: {})",
                        registry.names().join(", ")
                    ))
                })
            })
            .collect::<Result<_>>()?;

        let cfg = BenchmarkConfig {
            grid: self.grid.clone(),
            replicates: self.replicates,
            base: self.sim.clone(),
        };
        let report = run_benchmark(&cfg, &detectors)?;
        write_report_tsv(&report, &self.out)?;
        let manifest_file = PathBuf::from(format!("{}.manifest.txt", self.out.display()));
        self.to_manifest().write(&manifest_file)?;

        println!("benchmark fingerprint {}", report.config_fingerprint);
        for row in &report.rows {
            println!(
                "de={}% up={}% {}: mean AUC {:.4} (stderr {:.4}, {} replicates{})",
                row.de_pct,
                row.up_pct,
                row.method,
                row.mean_auc,
                row.stderr_auc,
                row.replicates,
                if row.failures > 0 {
                    format!(", {} FAILED", row.failures)
                } else {
                    String::new()
                }
            );
        }
        for (de, up, method, msg) in &report.failures {
            eprintln!("failure at de={de}% up={up}% {method}: {msg}");
        }
        Ok(Outcome::Success)
    }
}

/// Parses "30:50,70:90" into [(30,50), (70,90)].
pub fn parse_grid(raw: &str) -> Result<Vec<(u32, u32)>> {
    raw.split(',')
        .map(|cell| {
            let (de, up) = cell.split_once(':').ok_or_else(|| {
                Error::InvalidConfig(format!("grid cell '{cell}' must look like DE:UP"))
            })?;
            let de: u32 = de
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad DE percent '{de}'")))?;
            let up: u32 = up
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad Up percent '{up}'")))?;
            Ok((de, up))
        })
        .collect()
}

/// Parses "name=command with args".
pub fn parse_external(raw: &str) -> Result<(String, String)> {
    let (name, cmd) = raw
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("external detector '{raw}' must be name=command")))?;
    if name.is_empty() || cmd.is_empty() {
        return Err(Error::InvalidConfig(
            "external detector name and command must be non-empty".into(),
        ));
    }
    Ok((name.to_string(), cmd.to_string()))
}
