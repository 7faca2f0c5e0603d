//! Design standardization and variance-weighted double centering.
//!
//! The covariate matrix is centered to zero column means and scaled to unit
//! column norms; the recorded center/scale let fits be reported back on the
//! original covariate scale. The expression matrix is double-centered with
//! precision weights so that the weighted column sums and the row sums of the
//! result vanish, which is what lets the intercepts and per-sample offsets be
//! eliminated from the fitting objective.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io_units::ExpressionMatrix;

/// Relative threshold below which a centered column counts as constant.
const CONSTANT_COLUMN_TOL: f64 = 1e-12;

/// Standardized n×p covariate design.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    /// n×p values with zero column means and unit column norms.
    pub values: Array2<f64>,
    pub covariate_names: Vec<String>,
    /// Original column means, for back-transformation.
    pub center: Vec<f64>,
    /// Original centered column norms, for back-transformation.
    pub scale: Vec<f64>,
}

impl DesignMatrix {
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.values.ncols()
    }
}

/// Centers every covariate column to zero mean and scales it to unit
/// Euclidean norm, recording center and scale.
///
/// Errors on fewer than two samples and on constant columns.
pub fn standardize_design(raw: ArrayView2<f64>, covariate_names: Vec<String>) -> Result<DesignMatrix> {
    let (n, p) = raw.dim();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 samples to standardize a design, got {n}"
        )));
    }
    if p == 0 {
        return Err(Error::InvalidInput("design has no covariates".into()));
    }
    if covariate_names.len() != p {
        return Err(Error::InvalidInput(
            "covariate name count does not match design width".into(),
        ));
    }
    if let Some(v) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite covariate value {v}")));
    }

    let mut values = raw.to_owned();
    let mut center = Vec::with_capacity(p);
    let mut scale = Vec::with_capacity(p);
    for c in 0..p {
        let mut col = values.column_mut(c);
        let mean = col.iter().sum::<f64>() / n as f64;
        col.mapv_inplace(|v| v - mean);
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let magnitude = raw.column(c).iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        if norm <= CONSTANT_COLUMN_TOL * magnitude * (n as f64).sqrt() {
            return Err(Error::DegenerateDesign(format!(
                "covariate '{}' is constant",
                covariate_names[c]
            )));
        }
        col.mapv_inplace(|v| v / norm);
        center.push(mean);
        scale.push(norm);
    }
    Ok(DesignMatrix {
        values,
        covariate_names,
        center,
        scale,
    })
}

/// Convenience wrapper for a single covariate.
pub fn standardize_single(raw: &[f64], name: &str) -> Result<DesignMatrix> {
    let col = Array2::from_shape_vec((raw.len(), 1), raw.to_vec())
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    standardize_design(col.view(), vec![name.to_string()])
}

/// Variance-weighted double-centered expression matrix.
///
/// With weights w_i = 1/sigma_i^2,
///   ytilde_ij = y_ij - rowmean_i - wcolmean_j + wgrandmean
/// which satisfies sum_i w_i ytilde_ij = 0 for every sample and
/// sum_j ytilde_ij = 0 for every gene.
#[derive(Debug, Clone)]
pub struct CenteredExpression {
    /// m×n centered values.
    pub values: Array2<f64>,
    /// Per-gene plain means over samples.
    pub row_means: Vec<f64>,
    /// Per-sample precision-weighted means over genes.
    pub weighted_col_means: Vec<f64>,
    /// Precision-weighted grand mean.
    pub weighted_grand_mean: f64,
    /// The precision weights (1/sigma_i^2) used.
    pub weights: Vec<f64>,
}

impl CenteredExpression {
    pub fn n_genes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    /// Sum of the precision weights.
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Double-centers the expression matrix with the given precision weights.
///
/// All reductions run in a fixed left-to-right order so results are bitwise
/// reproducible across runs and thread counts.
pub fn center_expression(y: &ExpressionMatrix, weights: &[f64]) -> Result<CenteredExpression> {
    let (m, n) = y.values.dim();
    if weights.len() != m {
        return Err(Error::InvalidInput(format!(
            "expected {m} weights, got {}",
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput(format!("non-positive weight {w}")));
    }

    let weight_sum: f64 = weights.iter().sum();
    let row_means: Vec<f64> = (0..m)
        .map(|i| y.values.row(i).iter().sum::<f64>() / n as f64)
        .collect();
    let weighted_col_means: Vec<f64> = (0..n)
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..m {
                acc += weights[i] * y.values[[i, j]];
            }
            acc / weight_sum
        })
        .collect();
    let weighted_grand_mean = {
        let mut acc = 0.0;
        for i in 0..m {
            acc += weights[i] * row_means[i];
        }
        acc / weight_sum
    };

    let mut values = y.values.clone();
    values
        .axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v - row_means[i] - weighted_col_means[j] + weighted_grand_mean;
            }
        });

    Ok(CenteredExpression {
        values,
        row_means,
        weighted_col_means,
        weighted_grand_mean,
        weights: weights.to_vec(),
    })
}

/// Loads a covariate TSV (`sample_id<TAB>name1<TAB>...<TAB>namep`) and aligns
/// rows to the given sample order. Every expected sample must appear exactly
/// once and no extra samples are allowed.
pub fn load_covariates(path: &Path, sample_ids: &[String]) -> Result<(Array2<f64>, Vec<String>)> {
    let file = File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))??;
    let mut fields = header.split('\t');
    match fields.next() {
        Some("sample_id") => {}
        _ => return Err(Error::parse(path, 1, "header must start with 'sample_id'")),
    }
    let names: Vec<String> = fields.map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::parse(path, 1, "no covariate columns in header"));
    }
    let p = names.len();

    let mut by_id: std::collections::HashMap<String, Vec<f64>> = std::collections::HashMap::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields
            .next()
            .ok_or_else(|| Error::parse(path, lineno, "missing sample id"))?
            .to_string();
        let row: Vec<f64> = fields
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(path, lineno, format!("non-numeric covariate '{t}'")))
            })
            .collect::<Result<_>>()?;
        if row.len() != p {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {p} covariate columns, found {}", row.len()),
            ));
        }
        if by_id.insert(id.clone(), row).is_some() {
            return Err(Error::parse(path, lineno, format!("duplicate sample id '{id}'")));
        }
    }

    if by_id.len() != sample_ids.len() {
        return Err(Error::InvalidInput(format!(
            "covariate table has {} samples, expression matrix has {}",
            by_id.len(),
            sample_ids.len()
        )));
    }
    let mut values = Array2::zeros((sample_ids.len(), p));
    for (j, id) in sample_ids.iter().enumerate() {
        let row = by_id
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("sample '{id}' missing from covariate table")))?;
        for (c, v) in row.iter().enumerate() {
            values[[j, c]] = *v;
        }
    }
    Ok((values, names))
}

/// Writes a covariate TSV in the layout accepted by [`load_covariates`].
pub fn write_covariates_tsv(
    values: ArrayView2<f64>,
    sample_ids: &[String],
    names: &[String],
    path: &Path,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "sample_id")?;
    for name in names {
        write!(w, "\t{name}")?;
    }
    writeln!(w)?;
    for (j, id) in sample_ids.iter().enumerate() {
        write!(w, "{id}")?;
        for c in 0..values.ncols() {
            write!(w, "\t{}", values[[j, c]])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
