//! File formats for posteriors and factor labels.
//!
//! - Posterior CSV: header `mu_0,sigma_0,...,mu_{L-1},sigma_{L-1}`, one row
//!   per sample.
//! - Posterior binary: `b"DMET"`, `u32` version (= 1), `u64` N, `u32` L,
//!   then `N*L` little-endian `f64` means and `N*L` `f64` stds (row-major).
//! - Factor CSV: header `y_0,...,y_{K-1}` with integer cells, optionally
//!   preceded by a comment line `#card=c0,c1,...`.
//! - Soft-label CSV: header `p_0,...,p_{C-1}`, one row-stochastic row per
//!   sample.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{quantize_continuous, FactorTable, PosteriorSet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DMET";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorFormat {
    Csv,
    Binary,
}

impl PosteriorFormat {
    /// `.csv` is CSV, anything else is treated as the binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => PosteriorFormat::Csv,
            _ => PosteriorFormat::Binary,
        }
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedFile { path: path.display().to_string(), reason: reason.into() }
}

pub fn load_posteriors(path: &Path, format: PosteriorFormat) -> Result<PosteriorSet> {
    match format {
        PosteriorFormat::Csv => read_posteriors_csv(path),
        PosteriorFormat::Binary => read_posteriors_binary(path),
    }
}

pub fn save_posteriors(path: &Path, ps: &PosteriorSet, format: PosteriorFormat) -> Result<()> {
    match format {
        PosteriorFormat::Csv => write_posteriors_csv(path, ps),
        PosteriorFormat::Binary => write_posteriors_binary(path, ps),
    }
}

pub fn read_posteriors_csv(path: &Path) -> Result<PosteriorSet> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.is_empty() || header.len() % 2 != 0 {
        return Err(malformed(path, format!("expected mu/sigma column pairs, got {} columns", header.len())));
    }
    let n_latents = header.len() / 2;
    for i in 0..n_latents {
        let (mu, sigma) = (&header[2 * i], &header[2 * i + 1]);
        if mu != format!("mu_{i}") || sigma != format!("sigma_{i}") {
            return Err(malformed(path, format!("column pair {i} is ({mu}, {sigma}), expected (mu_{i}, sigma_{i})")));
        }
    }
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != header.len() {
            return Err(malformed(path, format!("row {row} has {} cells", record.len())));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| malformed(path, format!("row {row}, column {c}: {cell:?} is not a number")))?;
            if c % 2 == 0 {
                means.push(v);
            } else {
                stds.push(v);
            }
        }
    }
    let n_samples = means.len() / n_latents;
    if n_samples == 0 {
        return Err(malformed(path, "no samples"));
    }
    PosteriorSet::new(n_samples, n_latents, means, stds)
}

pub fn write_posteriors_csv(path: &Path, ps: &PosteriorSet) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..ps.n_latents()).map(|i| format!("mu_{i},sigma_{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for n in 0..ps.n_samples() {
        let row: Vec<String> = (0..ps.n_latents()).map(|i| format!("{:?},{:?}", ps.mean(n, i), ps.std(n, i))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_posteriors_binary(path: &Path) -> Result<PosteriorSet> {
    let bytes = fs::read(path)?;
    decode_posteriors(&bytes).map_err(|e| match e {
        Error::MalformedFile { reason, .. } => malformed(path, reason),
        other => other,
    })
}

/// Decodes the binary posterior format from memory.
pub fn decode_posteriors(bytes: &[u8]) -> Result<PosteriorSet> {
    let bad = |reason: String| Error::MalformedFile { path: "<memory>".into(), reason };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad("bad magic (expected DMET)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let l = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as u64;
    let count = n
        .checked_mul(l)
        .and_then(|c| c.checked_mul(16))
        .ok_or_else(|| bad(format!("header N = {n}, L = {l} overflows")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() as u64 != count {
        return Err(bad(format!("header N = {n}, L = {l} needs {count} payload bytes, found {}", body.len())));
    }
    let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let half = values.len() / 2;
    PosteriorSet::new(n as usize, l as usize, values[..half].to_vec(), values[half..].to_vec())
}

pub fn encode_posteriors(ps: &PosteriorSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * ps.means().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ps.n_samples() as u64).to_le_bytes());
    out.extend_from_slice(&(ps.n_latents() as u32).to_le_bytes());
    for v in ps.means().iter().chain(ps.stds()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_posteriors_binary(path: &Path, ps: &PosteriorSet) -> Result<()> {
    fs::write(path, encode_posteriors(ps))?;
    Ok(())
}

/// Options for reading a factor CSV.
#[derive(Debug, Clone, Default)]
pub struct FactorLoadOptions {
    /// Columns holding real values; each is quantized on its own grid.
    pub continuous: Vec<usize>,
    /// Number of bins for continuous columns (20 when unset).
    pub factor_bins: Option<usize>,
}

pub const DEFAULT_FACTOR_BINS: usize = 20;

pub fn load_factors(path: &Path) -> Result<FactorTable> {
    load_factors_with(path, &FactorLoadOptions::default())
}

pub fn load_factors_with(path: &Path, opts: &FactorLoadOptions) -> Result<FactorTable> {
    let text = fs::read_to_string(path)?;
    let (declared, body) = match text.strip_prefix("#card=") {
        Some(rest) => {
            let (line, body) = rest.split_once('\n').unwrap_or((rest, ""));
            let cards = line
                .trim()
                .split(',')
                .map(|c| c.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| malformed(path, format!("bad cardinality line #card={line}")))?;
            (Some(cards), body)
        }
        None => (None, text.as_str()),
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let n_factors = header.len();
    if n_factors == 0 {
        return Err(malformed(path, "empty header"));
    }
    for (k, name) in header.iter().enumerate() {
        if name != format!("y_{k}") {
            return Err(malformed(path, format!("column {k} is {name:?}, expected y_{k}")));
        }
    }
    if let Some(&k) = opts.continuous.iter().find(|&&k| k >= n_factors) {
        return Err(Error::IndexOutOfRange { what: "continuous factor", index: k, limit: n_factors });
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_factors];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != n_factors {
            return Err(malformed(path, format!("row {row} has {} cells", record.len())));
        }
        for (k, cell) in record.iter().enumerate() {
            let v = if opts.continuous.contains(&k) {
                cell.parse::<f64>()
                    .map_err(|_| malformed(path, format!("row {row}, column {k}: {cell:?} is not a number")))?
            } else {
                cell.parse::<u64>()
                    .map_err(|_| malformed(path, format!("row {row}, column {k}: {cell:?} is not a label")))?
                    as f64
            };
            columns[k].push(v);
        }
    }
    let n_samples = columns[0].len();
    if n_samples == 0 {
        return Err(malformed(path, "no samples"));
    }
    let mut cards = declared.clone();
    if let Some(c) = &cards {
        if c.len() != n_factors {
            return Err(malformed(path, format!("{} cardinalities declared for {n_factors} factors", c.len())));
        }
    }
    let mut label_columns: Vec<Vec<usize>> = Vec::with_capacity(n_factors);
    for (k, col) in columns.iter().enumerate() {
        if opts.continuous.contains(&k) {
            let (labels, card) = quantize_continuous(col, opts.factor_bins.unwrap_or(DEFAULT_FACTOR_BINS))?;
            if let Some(c) = cards.as_mut() {
                c[k] = card;
            }
            label_columns.push(labels);
        } else {
            label_columns.push(col.iter().map(|&v| v as usize).collect());
        }
    }
    let labels = (0..n_samples).flat_map(|n| label_columns.iter().map(move |c| c[n])).collect();
    FactorTable::new(n_samples, n_factors, labels, cards)
}

pub fn write_factors_csv(path: &Path, table: &FactorTable) -> Result<()> {
    let mut f = fs::File::create(path)?;
    let cards: Vec<String> = table.cardinalities().iter().map(ToString::to_string).collect();
    writeln!(f, "#card={}", cards.join(","))?;
    let header: Vec<String> = (0..table.n_factors()).map(|k| format!("y_{k}")).collect();
    writeln!(f, "{}", header.join(","))?;
    for n in 0..table.n_samples() {
        let row: Vec<String> = (0..table.n_factors()).map(|k| table.label(n, k).to_string()).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads an `N x C` soft-label matrix. Returns `(C, row-major values)`.
pub fn load_soft_labels(path: &Path) -> Result<(usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let c = header.len();
    for (j, name) in header.iter().enumerate() {
        if name != format!("p_{j}") {
            return Err(malformed(path, format!("column {j} is {name:?}, expected p_{j}")));
        }
    }
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != c {
            return Err(malformed(path, format!("row {row} has {} cells", record.len())));
        }
        for cell in record.iter() {
            values.push(
                cell.parse::<f64>().map_err(|_| malformed(path, format!("row {row}: {cell:?} is not a number")))?,
            );
        }
    }
    Ok((c, values))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => malformed(path, format!("{other:?}")),
    }
}
