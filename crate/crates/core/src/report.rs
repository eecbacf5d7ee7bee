//! Metric report assembly and serialization.
//!
//! A [`MetricReport`] has a fixed set of keys. Metrics that cannot be
//! computed from the given inputs are present as `{"skipped": reason}`
//! rather than omitted.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{EvalConfig, FactorTable, PosteriorSet};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, at_every_k, correlation_matrices, factor_interpretability, informativeness_weighted, mean_defined,
    misjed_matrix_from_entropies, modularity, CorrelationMatrices, FactorInterpretability, MiMatrix, MiMode,
};
use crate::quantizer::{all_latent_tables, check_same_samples, LatentTables, PosteriorMode};
use crate::sampler::{separability, SeparabilityEstimates};

/// A computed value or the reason it is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Section<T> {
    Computed(T),
    Skipped { skipped: String },
}

impl<T> Section<T> {
    pub fn skipped(reason: impl Into<String>) -> Self {
        Section::Skipped { skipped: reason.into() }
    }

    pub fn computed(&self) -> Option<&T> {
        match self {
            Section::Computed(v) => Some(v),
            Section::Skipped { .. } => None,
        }
    }

    pub fn is_computed(&self) -> bool {
        matches!(self, Section::Computed(_))
    }
}

impl<T> From<Result<T>> for Section<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => Section::Computed(v),
            Err(e) => Section::skipped(e.to_string()),
        }
    }
}

pub const MISSING_FACTORS: &str = "missing factors";
pub const NOT_REQUESTED: &str = "not requested";
pub const NEEDS_TWO_LATENTS: &str = "needs at least two latents";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRaw {
    pub value: f64,
    pub raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerFactor {
    pub per_factor: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularityScores {
    /// `null` for latents without information about any factor.
    pub per_latent: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modularity {
    /// From the conditional-mean MI matrix.
    pub original: ModularityScores,
    /// From the full-posterior MI matrix.
    pub correct: ModularityScores,
}

/// Every metric of one evaluation. Field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: EvalConfig,
    pub n_samples: usize,
    pub n_latents: usize,
    pub n_factors: Option<usize>,
    /// Quantized `I(x, z_i)` per latent.
    pub informativeness: Section<Vec<f64>>,
    pub informativeness_normalized: Section<Vec<f64>>,
    /// Sampled `I(x, z_i)`; these are the WSEPIN/WINDIN weights.
    pub informativeness_sampled: Section<Vec<f64>>,
    /// Sampled `I(x, z)`.
    pub total_information: Section<ValueRaw>,
    pub misjed: Section<Vec<Vec<Option<f64>>>>,
    pub misjed_normalized: Section<Vec<Vec<Option<f64>>>>,
    pub sepin: Section<Vec<f64>>,
    pub sepin_raw: Section<Vec<f64>>,
    /// `sepin_at_k[k - 1]` for `k = 1..=L`.
    pub sepin_at_k: Section<Vec<f64>>,
    pub wsepin: Section<f64>,
    pub indin: Section<Vec<f64>>,
    pub indin_at_k: Section<Vec<f64>>,
    pub windin: Section<f64>,
    /// `mi_matrix[i][k] = I(z_i, y_k)` from full posteriors.
    pub mi_matrix: Section<Vec<Vec<f64>>>,
    pub mi_matrix_conditional_mean: Section<Vec<Vec<f64>>>,
    pub factor_entropy: Section<Vec<f64>>,
    pub rmig: Section<PerFactor>,
    pub rmig_normalized: Section<PerFactor>,
    pub jemmig: Section<PerFactor>,
    pub jemmig_normalized: Section<PerFactor>,
    pub interpretability: Section<Vec<FactorInterpretability>>,
    pub modularity: Section<Modularity>,
    pub correlation: Section<CorrelationMatrices>,
    pub notes: Vec<String>,
}

/// Selectable metric groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Informativeness,
    TotalInformation,
    Misjed,
    Sepin,
    Indin,
    MiMatrix,
    Rmig,
    Jemmig,
    Modularity,
    Correlation,
}

impl Metric {
    pub const ALL: [Metric; 10] = [
        Metric::Informativeness,
        Metric::TotalInformation,
        Metric::Misjed,
        Metric::Sepin,
        Metric::Indin,
        Metric::MiMatrix,
        Metric::Rmig,
        Metric::Jemmig,
        Metric::Modularity,
        Metric::Correlation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Informativeness => "informativeness",
            Metric::TotalInformation => "total_information",
            Metric::Misjed => "misjed",
            Metric::Sepin => "sepin",
            Metric::Indin => "indin",
            Metric::MiMatrix => "mi_matrix",
            Metric::Rmig => "rmig",
            Metric::Jemmig => "jemmig",
            Metric::Modularity => "modularity",
            Metric::Correlation => "correlation",
        }
    }

    pub fn needs_factors(self) -> bool {
        matches!(self, Metric::MiMatrix | Metric::Rmig | Metric::Jemmig | Metric::Modularity)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Metric::ALL.into_iter().find(|m| m.name() == s || m.name().replace('_', "-") == s).ok_or_else(|| {
            let known: Vec<_> = Metric::ALL.iter().map(|m| m.name()).collect();
            Error::InvalidConfig(format!("unknown metric {s:?} (expected one of {})", known.join(", ")))
        })
    }
}

/// Parses a comma-separated metric list; `wsepin`, `windin` and the `_at_k`
/// and `_normalized` names select their groups.
pub fn parse_metric_list(list: &str) -> Result<BTreeSet<Metric>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let s = s.trim();
            let base = match s {
                "wsepin" | "sepin_at_k" | "sepin-at-k" => "sepin",
                "windin" | "indin_at_k" | "indin-at-k" => "indin",
                "mi_matrix_conditional_mean" => "mi_matrix",
                other => other.strip_suffix("_normalized").unwrap_or(other),
            };
            base.parse()
        })
        .collect()
}

fn not_requested<T>() -> Section<T> {
    Section::skipped(NOT_REQUESTED)
}

fn needs_two<T>() -> Section<T> {
    Section::skipped(NEEDS_TWO_LATENTS)
}

fn matrix_rows(mi: &MiMatrix) -> Vec<Vec<f64>> {
    mi.rows()
}

fn modularity_scores(mi: &MiMatrix) -> Result<ModularityScores> {
    let per_latent = modularity(mi)?;
    let mean = mean_defined(&per_latent);
    Ok(ModularityScores { per_latent, mean })
}

fn per_factor(values: Vec<f64>) -> Result<PerFactor> {
    let mean = aggregate(&values)?;
    Ok(PerFactor { per_factor: values, mean })
}

/// Evaluates the selected metrics. Factor-based metrics are skipped when
/// `factors` is `None`.
pub fn evaluate(
    ps: &PosteriorSet,
    factors: Option<&FactorTable>,
    cfg: &EvalConfig,
    metrics: &BTreeSet<Metric>,
) -> Result<MetricReport> {
    cfg.validate()?;
    if let Some(ft) = factors {
        check_same_samples(ps, ft)?;
    }
    let l = ps.n_latents();
    let wants = |m: Metric| metrics.contains(&m);
    let factor_metrics = [Metric::MiMatrix, Metric::Rmig, Metric::Jemmig, Metric::Modularity];
    let use_factors = factors.filter(|_| factor_metrics.iter().any(|&m| wants(m)));

    let need_tables = wants(Metric::Informativeness) || wants(Metric::Misjed) || use_factors.is_some();
    let tables: Option<Vec<LatentTables>> =
        if need_tables { Some(all_latent_tables(ps, use_factors, cfg, PosteriorMode::Full)?) } else { None };
    let need_sampled =
        [Metric::Informativeness, Metric::TotalInformation, Metric::Sepin, Metric::Indin].iter().any(|&m| wants(m));
    let sampled: Option<SeparabilityEstimates> = if need_sampled { Some(separability(ps, cfg)?) } else { None };

    let mut notes = Vec::new();
    let log_b = cfg.grid.log_bins();

    let (informativeness, informativeness_normalized, informativeness_sampled) = match (&tables, &sampled) {
        (Some(t), Some(s)) if wants(Metric::Informativeness) => {
            let raw: Vec<f64> = t.iter().map(LatentTables::informativeness).collect();
            let norm = raw.iter().map(|v| v / log_b).collect();
            let samp = s.informativeness.iter().map(|e| e.value).collect();
            (Section::Computed(raw), Section::Computed(norm), Section::Computed(samp))
        }
        _ => (not_requested(), not_requested(), not_requested()),
    };

    let total_information = match &sampled {
        Some(s) if wants(Metric::TotalInformation) => {
            Section::Computed(ValueRaw { value: s.total_information.value, raw: s.total_information.raw })
        }
        _ => not_requested(),
    };

    let (misjed, misjed_normalized) = match &tables {
        Some(_) if wants(Metric::Misjed) && l < 2 => {
            (Section::skipped(NEEDS_TWO_LATENTS), Section::skipped(NEEDS_TWO_LATENTS))
        }
        Some(t) if wants(Metric::Misjed) => {
            let entropies: Vec<f64> = t.iter().map(LatentTables::entropy).collect();
            let m = misjed_matrix_from_entropies(ps, &entropies, &cfg.grid);
            (Section::Computed(m.raw), Section::Computed(m.normalized))
        }
        _ => (not_requested(), not_requested()),
    };

    let weights: Option<Vec<f64>> = sampled.as_ref().map(|s| s.informativeness.iter().map(|e| e.value).collect());
    let (sepin, sepin_raw, sepin_at_k, wsepin) = match &sampled {
        Some(_) if wants(Metric::Sepin) && l < 2 => (needs_two(), needs_two(), needs_two(), needs_two()),
        Some(s) if wants(Metric::Sepin) => {
            let value: Vec<f64> = s.sepin.iter().map(|e| e.value).collect();
            let raw = s.sepin.iter().map(|e| e.raw).collect();
            let at_k = at_every_k(&value);
            let w = informativeness_weighted(&value, weights.as_deref().expect("sampled")).into();
            (Section::Computed(value), Section::Computed(raw), Section::Computed(at_k), w)
        }
        _ => (not_requested(), not_requested(), not_requested(), not_requested()),
    };
    let (indin, indin_at_k, windin) = match &sampled {
        Some(_) if wants(Metric::Indin) && l < 2 => (needs_two(), needs_two(), needs_two()),
        Some(s) if wants(Metric::Indin) => {
            let value: Vec<f64> = s.indin.iter().map(|e| e.value).collect();
            let at_k = at_every_k(&value);
            let w = informativeness_weighted(&value, weights.as_deref().expect("sampled")).into();
            (Section::Computed(value), Section::Computed(at_k), w)
        }
        _ => (not_requested(), not_requested(), not_requested()),
    };
    if sampled.is_some() {
        notes.push(format!("sampled estimates use {} Monte Carlo draws with seed {}", cfg.n_mc_samples, cfg.rng_seed));
    }

    let factor_section = |m: Metric| -> Option<&'static str> {
        if !wants(m) {
            Some(NOT_REQUESTED)
        } else if factors.is_none() {
            Some(MISSING_FACTORS)
        } else {
            None
        }
    };

    let full_mi = tables
        .as_ref()
        .filter(|_| use_factors.is_some())
        .map(|t| MiMatrix::from_tables(t, MiMode::QuantizedFullPosterior));
    let cm_mi = match use_factors {
        Some(ft) if wants(Metric::MiMatrix) || wants(Metric::Modularity) => {
            let t = all_latent_tables(ps, Some(ft), cfg, PosteriorMode::ConditionalMean)?;
            Some(MiMatrix::from_tables(&t, MiMode::QuantizedConditionalMean))
        }
        _ => None,
    };

    let (mi_matrix, mi_matrix_conditional_mean, factor_entropy) = match factor_section(Metric::MiMatrix) {
        Some(reason) => (Section::skipped(reason), Section::skipped(reason), Section::skipped(reason)),
        None => {
            let t = tables.as_ref().expect("tables with factors");
            let h = (0..factors.map_or(0, FactorTable::n_factors))
                .map(|k| t[0].factor_joints[k].col_marginal().entropy())
                .collect();
            (
                Section::Computed(matrix_rows(full_mi.as_ref().expect("full matrix"))),
                Section::Computed(matrix_rows(cm_mi.as_ref().expect("conditional-mean matrix"))),
                Section::Computed(h),
            )
        }
    };

    let interp: Option<Result<Vec<FactorInterpretability>>> = match (&tables, use_factors) {
        (Some(t), Some(ft)) if wants(Metric::Rmig) || wants(Metric::Jemmig) => {
            Some((0..ft.n_factors()).map(|k| factor_interpretability(t, k, log_b)).collect())
        }
        _ => None,
    };
    let gap_section = |m: Metric, pick: &dyn Fn(&FactorInterpretability) -> f64| -> Section<PerFactor> {
        if let Some(reason) = factor_section(m) {
            return Section::skipped(reason);
        }
        match interp.as_ref().expect("interpretability computed") {
            Ok(v) => per_factor(v.iter().map(pick).collect()).into(),
            Err(e) => Section::skipped(e.to_string()),
        }
    };
    let rmig = gap_section(Metric::Rmig, &|f| f.rmig.raw);
    let rmig_normalized = gap_section(Metric::Rmig, &|f| f.rmig.normalized);
    let jemmig = gap_section(Metric::Jemmig, &|f| f.jemmig.raw);
    let jemmig_normalized = gap_section(Metric::Jemmig, &|f| f.jemmig.normalized);
    let interpretability = match (factor_section(Metric::Rmig), factor_section(Metric::Jemmig), &interp) {
        (_, _, Some(Ok(v))) => Section::Computed(v.clone()),
        (_, _, Some(Err(e))) => Section::skipped(e.to_string()),
        (Some(r), _, None) | (None, Some(r), None) => Section::skipped(r),
        (None, None, None) => unreachable!("requested interpretability is always computed"),
    };
    if interp.as_ref().is_some_and(|r| r.is_ok()) {
        notes.push("ties for the top two latents are broken by the lowest latent index".to_string());
    }

    let modularity = match factor_section(Metric::Modularity) {
        Some(reason) => Section::skipped(reason),
        None => {
            let original = modularity_scores(cm_mi.as_ref().expect("conditional-mean matrix"));
            let correct = modularity_scores(full_mi.as_ref().expect("full matrix"));
            match (original, correct) {
                (Ok(original), Ok(correct)) => Section::Computed(Modularity { original, correct }),
                (Err(e), _) | (_, Err(e)) => Section::skipped(e.to_string()),
            }
        }
    };

    let correlation = if !wants(Metric::Correlation) {
        not_requested()
    } else if l < 2 {
        Section::skipped(NEEDS_TWO_LATENTS)
    } else {
        let c = correlation_matrices(ps, cfg)?;
        if !c.zero_variance_sampled.is_empty() || !c.zero_variance_means.is_empty() {
            notes.push("constant latent columns have correlation 0 with every other latent".to_string());
        }
        Section::Computed(c)
    };

    Ok(MetricReport {
        config: *cfg,
        n_samples: ps.n_samples(),
        n_latents: l,
        n_factors: factors.map(FactorTable::n_factors),
        informativeness,
        informativeness_normalized,
        informativeness_sampled,
        total_information,
        misjed,
        misjed_normalized,
        sepin,
        sepin_raw,
        sepin_at_k,
        wsepin,
        indin,
        indin_at_k,
        windin,
        mi_matrix,
        mi_matrix_conditional_mean,
        factor_entropy,
        rmig,
        rmig_normalized,
        jemmig,
        jemmig_normalized,
        interpretability,
        modularity,
        correlation,
        notes,
    })
}

/// Every metric group.
pub fn all_metrics() -> BTreeSet<Metric> {
    Metric::ALL.into_iter().collect()
}

// ------------------------------------------------------------- output

/// Flattens a JSON value into `(dotted.path, leaf)` pairs in document
/// order. Array elements use their index as the path segment.
pub fn flatten_json(value: &Value) -> Vec<(String, Value)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
        let join = |seg: &str| if prefix.is_empty() { seg.to_string() } else { format!("{prefix}.{seg}") };
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    walk(&join(k), child, out);
                }
            }
            Value::Array(items) => {
                for (i, child) in items.iter().enumerate() {
                    walk(&join(&i.to_string()), child, out);
                }
            }
            leaf => out.push((prefix.to_string(), leaf.clone())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

fn leaf_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn report_json(report: &MetricReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// `key,value` rows of the flattened report. Numbers are printed exactly as
/// in the JSON document.
pub fn report_csv(report: &MetricReport) -> Result<String> {
    let value = serde_json::to_value(report).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"]).map_err(csv_io)?;
    for (k, v) in flatten_json(&value) {
        w.write_record([k, leaf_text(&v)]).map_err(csv_io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn num(v: Option<f64>) -> String {
    v.map(|x| Value::from(x).to_string()).unwrap_or_default()
}

/// Per-latent bar data: quantized, normalized and sampled informativeness.
pub fn informativeness_plot_csv(report: &MetricReport) -> String {
    let mut out = String::from("latent,informativeness,informativeness_normalized,informativeness_sampled\n");
    let col = |s: &Section<Vec<f64>>, i: usize| num(s.computed().map(|v| v[i]));
    for i in 0..report.n_latents {
        out.push_str(&format!(
            "{i},{},{},{}\n",
            col(&report.informativeness, i),
            col(&report.informativeness_normalized, i),
            col(&report.informativeness_sampled, i)
        ));
    }
    out
}

/// Pairwise heat-map grid in long form; the diagonal is empty.
pub fn misjed_plot_csv(report: &MetricReport) -> String {
    let mut out = String::from("i,j,misjed,misjed_normalized\n");
    if let (Some(raw), Some(norm)) = (report.misjed.computed(), report.misjed_normalized.computed()) {
        for i in 0..report.n_latents {
            for j in 0..report.n_latents {
                out.push_str(&format!("{i},{j},{},{}\n", num(raw[i][j]), num(norm[i][j])));
            }
        }
    }
    out
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const INFORMATIVENESS_CSV: &str = "plot_informativeness.csv";
pub const MISJED_CSV: &str = "plot_misjed.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

/// Wall-clock timings of one run, in milliseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_ms: f64,
    pub evaluate_ms: f64,
    pub write_ms: f64,
}

/// Everything needed to reproduce a report, plus run timings. Timings live
/// here so that the report files themselves are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub posteriors: PathBuf,
    pub factors: Option<PathBuf>,
    pub soft_labels: Vec<(usize, PathBuf)>,
    pub continuous_factors: Vec<usize>,
    pub factor_bins: usize,
    pub config: EvalConfig,
    pub metrics: Vec<Metric>,
    pub output_dir: PathBuf,
    pub outputs: Vec<String>,
    pub timings: Timings,
}

/// Writes the report, its CSV flattening and the plot data into `dir`.
/// Returns the file names written.
pub fn write_report(dir: &Path, report: &MetricReport) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let files = [
        (REPORT_JSON, report_json(report)?),
        (REPORT_CSV, report_csv(report)?),
        (INFORMATIVENESS_CSV, informativeness_plot_csv(report)),
        (MISJED_CSV, misjed_plot_csv(report)),
    ];
    for (name, body) in &files {
        fs::write(dir.join(name), body)?;
    }
    Ok(files.iter().map(|(n, _)| n.to_string()).collect())
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let mut s = serde_json::to_string_pretty(manifest).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    s.push('\n');
    fs::write(dir.join(MANIFEST_JSON), s)?;
    Ok(())
}
