//! Count ingestion, expression-unit conversion and log transforms.
//!
//! Counts are read from a TSV with header `gene_id<TAB>s1<TAB>...<TAB>sn` and
//! one row per gene. Optional sidecars supply gene lengths
//! (`gene_id<TAB>length`) and library-size overrides (`sample_id<TAB>libsize`).

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Raw read counts for m genes across n samples.
#[derive(Debug, Clone)]
pub struct CountMatrix {
    /// m×n non-negative read counts.
    pub counts: Array2<u64>,
    pub gene_ids: Vec<String>,
    pub sample_ids: Vec<String>,
    /// Gene lengths in bases; required for FPKM/TPM.
    pub gene_lengths: Option<Vec<f64>>,
    /// Per-sample library sizes. Defaults to column sums; may be overridden
    /// with arbitrary positive per-sample normalization factors.
    pub library_sizes: Vec<f64>,
}

impl CountMatrix {
    /// Builds a count matrix, defaulting library sizes to column sums.
    ///
    /// Requires m >= 2 genes and n >= 2 samples, and every column sum positive.
    pub fn new(counts: Array2<u64>, gene_ids: Vec<String>, sample_ids: Vec<String>) -> Result<Self> {
        let (m, n) = counts.dim();
        if m < 2 || n < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 genes and 2 samples, got {m}x{n}"
            )));
        }
        if gene_ids.len() != m || sample_ids.len() != n {
            return Err(Error::InvalidInput(
                "identifier count does not match matrix shape".into(),
            ));
        }
        let library_sizes: Vec<f64> = (0..n)
            .map(|j| counts.column(j).iter().map(|&c| c as f64).sum())
            .collect();
        if let Some(j) = library_sizes.iter().position(|&s| s <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample '{}' has zero library size",
                sample_ids[j]
            )));
        }
        Ok(CountMatrix {
            counts,
            gene_ids,
            sample_ids,
            gene_lengths: None,
            library_sizes,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.counts.ncols()
    }

    /// Attaches gene lengths given as (gene_id, length) pairs. Every gene of
    /// the matrix must be covered and lengths must be positive.
    pub fn set_gene_lengths(&mut self, pairs: &[(String, f64)]) -> Result<()> {
        let map: std::collections::HashMap<&str, f64> =
            pairs.iter().map(|(id, l)| (id.as_str(), *l)).collect();
        let mut lengths = Vec::with_capacity(self.n_genes());
        for id in &self.gene_ids {
            match map.get(id.as_str()) {
                Some(&l) if l > 0.0 && l.is_finite() => lengths.push(l),
                Some(&l) => {
                    return Err(Error::InvalidInput(format!(
                        "gene '{id}' has non-positive length {l}"
                    )))
                }
                None => {
                    return Err(Error::InvalidInput(format!(
                        "gene '{id}' missing from length table"
                    )))
                }
            }
        }
        self.gene_lengths = Some(lengths);
        Ok(())
    }

    /// Overrides library sizes with (sample_id, size) pairs covering every
    /// sample; sizes must be positive.
    pub fn set_library_sizes(&mut self, pairs: &[(String, f64)]) -> Result<()> {
        let map: std::collections::HashMap<&str, f64> =
            pairs.iter().map(|(id, s)| (id.as_str(), *s)).collect();
        let mut sizes = Vec::with_capacity(self.n_samples());
        for id in &self.sample_ids {
            match map.get(id.as_str()) {
                Some(&s) if s > 0.0 && s.is_finite() => sizes.push(s),
                Some(&s) => {
                    return Err(Error::InvalidInput(format!(
                        "sample '{id}' has non-positive library size {s}"
                    )))
                }
                None => {
                    return Err(Error::InvalidInput(format!(
                        "sample '{id}' missing from library-size table"
                    )))
                }
            }
        }
        self.library_sizes = sizes;
        Ok(())
    }
}

/// Log-scale expression values for m genes across n samples.
#[derive(Debug, Clone)]
pub struct ExpressionMatrix {
    /// m×n natural-log expression values, all finite.
    pub values: Array2<f64>,
    pub gene_ids: Vec<String>,
    pub sample_ids: Vec<String>,
}

impl ExpressionMatrix {
    pub fn n_genes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }
}

/// Expression unit applied before the log transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpressionUnit {
    Raw,
    Cpm,
    Fpkm,
    Tpm,
}

impl fmt::Display for ExpressionUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExpressionUnit::Raw => "raw",
            ExpressionUnit::Cpm => "cpm",
            ExpressionUnit::Fpkm => "fpkm",
            ExpressionUnit::Tpm => "tpm",
        };
        f.write_str(s)
    }
}

impl FromStr for ExpressionUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(ExpressionUnit::Raw),
            "cpm" => Ok(ExpressionUnit::Cpm),
            "fpkm" => Ok(ExpressionUnit::Fpkm),
            "tpm" => Ok(ExpressionUnit::Tpm),
            other => Err(Error::InvalidConfig(format!(
                "unknown expression unit '{other}' (expected raw|cpm|fpkm|tpm)"
            ))),
        }
    }
}

/// Converts counts to the requested expression unit, entrywise:
///
/// cpm  = 1e6 * c / N
/// fpkm = 1e9 * c / (l * N)
/// tpm  = 1e6 * (c / l) / sum_genes(c / l)
///
/// `Raw` returns the counts unchanged. FPKM/TPM require gene lengths.
pub fn to_unit(counts: &CountMatrix, unit: ExpressionUnit) -> Result<Array2<f64>> {
    let values = counts.counts.mapv(|c| c as f64);
    convert_unit(
        values,
        unit,
        counts.gene_lengths.as_deref(),
        &counts.library_sizes,
    )
}

/// Unit conversion on real-valued (possibly pseudocounted) count values.
fn convert_unit(
    values: Array2<f64>,
    unit: ExpressionUnit,
    gene_lengths: Option<&[f64]>,
    library_sizes: &[f64],
) -> Result<Array2<f64>> {
    let (m, n) = values.dim();
    let lengths = || -> Result<&[f64]> {
        gene_lengths.ok_or_else(|| {
            Error::InvalidInput(format!("{unit} conversion requires gene lengths"))
        })
    };
    let mut out = values;
    match unit {
        ExpressionUnit::Raw => {}
        ExpressionUnit::Cpm => {
            for j in 0..n {
                let scale = 1e6 / library_sizes[j];
                out.column_mut(j).mapv_inplace(|v| v * scale);
            }
        }
        ExpressionUnit::Fpkm => {
            let l = lengths()?;
            for i in 0..m {
                for j in 0..n {
                    out[[i, j]] = 1e9 * out[[i, j]] / (l[i] * library_sizes[j]);
                }
            }
        }
        ExpressionUnit::Tpm => {
            let l = lengths()?;
            for j in 0..n {
                let mut denom = 0.0;
                for i in 0..m {
                    denom += out[[i, j]] / l[i];
                }
                if denom <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "tpm denominator is zero in sample column {j}"
                    )));
                }
                for i in 0..m {
                    out[[i, j]] = 1e6 * (out[[i, j]] / l[i]) / denom;
                }
            }
        }
    }
    Ok(out)
}

/// Natural-log transform y = ln(value + pseudocount).
///
/// Values must be finite and non-negative and the pseudocount positive, which
/// keeps every output finite.
pub fn log_transform(
    values: &Array2<f64>,
    pseudocount: f64,
    gene_ids: Vec<String>,
    sample_ids: Vec<String>,
) -> Result<ExpressionMatrix> {
    if !(pseudocount > 0.0) || !pseudocount.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "pseudocount must be a positive real, got {pseudocount}"
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "non-finite or negative input value {v} in log transform"
        )));
    }
    let out = values.mapv(|v| (v + pseudocount).ln());
    Ok(ExpressionMatrix {
        values: out,
        gene_ids,
        sample_ids,
    })
}

/// Full ingestion path: counts -> pseudocount -> unit conversion -> ln.
///
/// The pseudocount is added to the raw counts *before* unit scaling, so the
/// resulting log matrices for RAW/CPM/FPKM/TPM differ only by per-gene and
/// per-sample additive constants, which the model absorbs into the intercepts
/// and normalization offsets.
pub fn prepare_expression(
    counts: &CountMatrix,
    unit: ExpressionUnit,
    pseudocount: f64,
) -> Result<ExpressionMatrix> {
    if !(pseudocount > 0.0) || !pseudocount.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "pseudocount must be a positive real, got {pseudocount}"
        )));
    }
    let pseudocounted = counts.counts.mapv(|c| c as f64 + pseudocount);
    let unit_values = convert_unit(
        pseudocounted,
        unit,
        counts.gene_lengths.as_deref(),
        &counts.library_sizes,
    )?;
    Ok(ExpressionMatrix {
        values: unit_values.mapv(f64::ln),
        gene_ids: counts.gene_ids.clone(),
        sample_ids: counts.sample_ids.clone(),
    })
}

fn open_with_context(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn parse_count(token: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = token.parse::<u64>() {
        return Ok(v);
    }
    match token.parse::<f64>() {
        Ok(v) if v < 0.0 => Err(format!("negative count '{token}'")),
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        Ok(v) => Err(format!("non-integer count '{v}'")),
        Err(_) => Err(format!("non-numeric count '{token}'")),
    }
}

/// Loads a count TSV (`gene_id<TAB>s1<TAB>...<TAB>sn`, one row per gene).
/// Library sizes default to column sums.
pub fn load_counts(path: &Path) -> Result<CountMatrix> {
    let file = open_with_context(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))??;
    let mut fields = header.split('\t');
    match fields.next() {
        Some("gene_id") => {}
        _ => return Err(Error::parse(path, 1, "header must start with 'gene_id'")),
    }
    let sample_ids: Vec<String> = fields.map(str::to_string).collect();
    if sample_ids.is_empty() {
        return Err(Error::parse(path, 1, "no sample columns in header"));
    }
    let n = sample_ids.len();

    let mut gene_ids = Vec::new();
    let mut seen = HashSet::new();
    let mut rows: Vec<u64> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let gene = fields
            .next()
            .ok_or_else(|| Error::parse(path, lineno, "missing gene id"))?
            .to_string();
        if !seen.insert(gene.clone()) {
            return Err(Error::parse(path, lineno, format!("duplicate gene id '{gene}'")));
        }
        let mut count_fields = 0;
        for token in fields {
            count_fields += 1;
            if count_fields > n {
                break;
            }
            let c = parse_count(token).map_err(|msg| Error::parse(path, lineno, msg))?;
            rows.push(c);
        }
        if count_fields != n {
            rows.truncate(gene_ids.len() * n);
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {n} count columns, found {count_fields}"),
            ));
        }
        gene_ids.push(gene);
    }
    let m = gene_ids.len();
    let counts = Array2::from_shape_vec((m, n), rows)
        .map_err(|e| Error::InvalidInput(format!("count table shape: {e}")))?;
    CountMatrix::new(counts, gene_ids, sample_ids)
}

/// Loads a two-column id/value sidecar TSV with the given expected header.
fn load_pairs(path: &Path, id_column: &str, value_column: &str) -> Result<Vec<(String, f64)>> {
    let file = open_with_context(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))??;
    let expected = format!("{id_column}\t{value_column}");
    if header != expected {
        return Err(Error::parse(path, 1, format!("expected header '{expected}'")));
    }
    let mut pairs = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields
            .next()
            .ok_or_else(|| Error::parse(path, lineno, "missing id"))?;
        let value: f64 = fields
            .next()
            .ok_or_else(|| Error::parse(path, lineno, format!("missing {value_column}")))?
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("non-numeric {value_column}")))?;
        if fields.next().is_some() {
            return Err(Error::parse(path, lineno, "too many columns"));
        }
        pairs.push((id.to_string(), value));
    }
    Ok(pairs)
}

/// Loads a `gene_id<TAB>length` sidecar.
pub fn load_gene_lengths(path: &Path) -> Result<Vec<(String, f64)>> {
    load_pairs(path, "gene_id", "length")
}

/// Loads a `sample_id<TAB>libsize` override sidecar.
pub fn load_library_sizes(path: &Path) -> Result<Vec<(String, f64)>> {
    load_pairs(path, "sample_id", "libsize")
}

/// Writes counts in the TSV layout accepted by [`load_counts`].
pub fn write_counts_tsv(counts: &CountMatrix, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "gene_id")?;
    for s in &counts.sample_ids {
        write!(w, "\t{s}")?;
    }
    writeln!(w)?;
    for (i, g) in counts.gene_ids.iter().enumerate() {
        write!(w, "{g}")?;
        for j in 0..counts.n_samples() {
            write!(w, "\t{}", counts.counts[[i, j]])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the `gene_id<TAB>length` sidecar.
pub fn write_gene_lengths_tsv(gene_ids: &[String], lengths: &[f64], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "gene_id\tlength")?;
    for (g, l) in gene_ids.iter().zip(lengths) {
        writeln!(w, "{g}\t{l}")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the `sample_id<TAB>libsize` sidecar.
pub fn write_library_sizes_tsv(sample_ids: &[String], sizes: &[f64], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "sample_id\tlibsize")?;
    for (s, v) in sample_ids.iter().zip(sizes) {
        writeln!(w, "{s}\t{v}")?;
    }
    w.flush()?;
    Ok(())
}
