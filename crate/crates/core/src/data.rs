//! Domain types: encoder posteriors, factor labels, the quantization grid and
//! evaluation settings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::accum::ExactSum;
use crate::error::{Error, Result};

/// Diagonal Gaussian posteriors `q(z_i | x^(n)) = N(mu, sigma)` for `N`
/// samples and `L` scalar latents, stored row-major (`n * L + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSet {
    n_samples: usize,
    n_latents: usize,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl PosteriorSet {
    pub fn new(n_samples: usize, n_latents: usize, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        if n_samples == 0 || n_latents == 0 {
            return Err(Error::DimensionMismatch(format!(
                "posterior set needs N >= 1 and L >= 1, got N = {n_samples}, L = {n_latents}"
            )));
        }
        let expected = n_samples * n_latents;
        if means.len() != expected || stds.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "expected {expected} means and stds, got {} and {}",
                means.len(),
                stds.len()
            )));
        }
        for (idx, (&mu, &sigma)) in means.iter().zip(&stds).enumerate() {
            let (row, column) = (idx / n_latents, idx % n_latents);
            if !mu.is_finite() {
                return Err(Error::InvalidValue { row, column, value: mu, reason: "mean is not finite" });
            }
            if !sigma.is_finite() || sigma <= 0.0 {
                return Err(Error::InvalidValue {
                    row,
                    column,
                    value: sigma,
                    reason: "standard deviation must be finite and > 0",
                });
            }
        }
        Ok(Self { n_samples, n_latents, means, stds })
    }

    /// Builds a set from per-sample rows of `(mu, sigma)` pairs.
    pub fn from_rows(rows: &[Vec<(f64, f64)>]) -> Result<Self> {
        let n_latents = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_latents) {
            return Err(Error::DimensionMismatch("ragged posterior rows".into()));
        }
        let means = rows.iter().flatten().map(|p| p.0).collect();
        let stds = rows.iter().flatten().map(|p| p.1).collect();
        Self::new(rows.len(), n_latents, means, stds)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_latents(&self) -> usize {
        self.n_latents
    }

    #[inline]
    pub fn mean(&self, n: usize, i: usize) -> f64 {
        self.means[n * self.n_latents + i]
    }

    #[inline]
    pub fn std(&self, n: usize, i: usize) -> f64 {
        self.stds[n * self.n_latents + i]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn check_latent(&self, i: usize) -> Result<()> {
        if i < self.n_latents {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { what: "latent", index: i, limit: self.n_latents })
        }
    }

    /// Reorders samples: row `n` of the result is row `order[n]` of `self`.
    pub fn permute_samples(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.n_samples)?;
        let l = self.n_latents;
        let mut means = Vec::with_capacity(self.means.len());
        let mut stds = Vec::with_capacity(self.stds.len());
        for &src in order {
            means.extend_from_slice(&self.means[src * l..(src + 1) * l]);
            stds.extend_from_slice(&self.stds[src * l..(src + 1) * l]);
        }
        Self::new(self.n_samples, l, means, stds)
    }

    /// Keeps (and reorders) latents: latent `j` of the result is `latents[j]`.
    pub fn select_latents(&self, latents: &[usize]) -> Result<Self> {
        for &i in latents {
            self.check_latent(i)?;
        }
        let mut means = Vec::with_capacity(self.n_samples * latents.len());
        let mut stds = Vec::with_capacity(self.n_samples * latents.len());
        for n in 0..self.n_samples {
            for &i in latents {
                means.push(self.mean(n, i));
                stds.push(self.std(n, i));
            }
        }
        Self::new(self.n_samples, latents.len(), means, stds)
    }

    /// Appends the latents of `other` (same samples) after those of `self`.
    pub fn concat_latents(&self, other: &PosteriorSet) -> Result<Self> {
        if other.n_samples != self.n_samples {
            return Err(Error::DimensionMismatch(format!(
                "cannot join posterior sets with {} and {} samples",
                self.n_samples, other.n_samples
            )));
        }
        let l = self.n_latents + other.n_latents;
        let mut means = Vec::with_capacity(self.n_samples * l);
        let mut stds = Vec::with_capacity(self.n_samples * l);
        for n in 0..self.n_samples {
            let (a, b) = (n * self.n_latents, n * other.n_latents);
            means.extend_from_slice(&self.means[a..a + self.n_latents]);
            means.extend_from_slice(&other.means[b..b + other.n_latents]);
            stds.extend_from_slice(&self.stds[a..a + self.n_latents]);
            stds.extend_from_slice(&other.stds[b..b + other.n_latents]);
        }
        Self::new(self.n_samples, l, means, stds)
    }
}

/// Per-sample distribution of one factor.
#[derive(Debug, Clone, Copy)]
pub enum FactorValue<'a> {
    Hard(usize),
    Soft(&'a [f64]),
}

/// Discrete ground-truth factors `y` (N x K), optionally with soft label
/// distributions `p(y_k | x^(n))` that override the hard labels of a factor.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    n_samples: usize,
    n_factors: usize,
    labels: Vec<usize>,
    cardinalities: Vec<usize>,
    soft_labels: Vec<Option<Vec<f64>>>,
}

const SOFT_ROW_TOL: f64 = 1e-9;

impl FactorTable {
    /// `cardinalities = None` infers `max label + 1` per factor.
    pub fn new(
        n_samples: usize,
        n_factors: usize,
        labels: Vec<usize>,
        cardinalities: Option<Vec<usize>>,
    ) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::DimensionMismatch("factor table has no samples".into()));
        }
        if labels.len() != n_samples * n_factors {
            return Err(Error::DimensionMismatch(format!(
                "expected {} labels, got {}",
                n_samples * n_factors,
                labels.len()
            )));
        }
        let inferred: Vec<usize> =
            (0..n_factors).map(|k| (0..n_samples).map(|n| labels[n * n_factors + k]).max().unwrap_or(0) + 1).collect();
        let cardinalities = match cardinalities {
            None => inferred,
            Some(declared) => {
                if declared.len() != n_factors {
                    return Err(Error::DimensionMismatch(format!(
                        "{} declared cardinalities for {n_factors} factors",
                        declared.len()
                    )));
                }
                for k in 0..n_factors {
                    if inferred[k] > declared[k] {
                        return Err(Error::LabelOutOfRange {
                            factor: k,
                            label: inferred[k] - 1,
                            cardinality: declared[k],
                        });
                    }
                }
                declared
            }
        };
        Ok(Self { n_samples, n_factors, labels, cardinalities, soft_labels: vec![None; n_factors] })
    }

    /// Builds a table from per-sample label rows.
    pub fn from_rows(rows: &[Vec<usize>], cardinalities: Option<Vec<usize>>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("ragged factor rows".into()));
        }
        Self::new(rows.len(), k, rows.concat(), cardinalities)
    }

    /// Attaches soft labels (`N x C` row-major, row-stochastic) to factor `k`.
    /// The factor's cardinality becomes `C`.
    pub fn with_soft_labels(mut self, k: usize, n_categories: usize, probs: Vec<f64>) -> Result<Self> {
        self.check_factor(k)?;
        if n_categories == 0 || probs.len() != self.n_samples * n_categories {
            return Err(Error::DimensionMismatch(format!(
                "soft labels for factor {k}: expected {} x {n_categories} values, got {}",
                self.n_samples,
                probs.len()
            )));
        }
        for (row, chunk) in probs.chunks(n_categories).enumerate() {
            for (column, &p) in chunk.iter().enumerate() {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::InvalidValue {
                        row,
                        column,
                        value: p,
                        reason: "soft label probability must be finite and >= 0",
                    });
                }
            }
            let total: f64 = chunk.iter().sum();
            if (total - 1.0).abs() > SOFT_ROW_TOL {
                return Err(Error::InvalidValue {
                    row,
                    column: 0,
                    value: total,
                    reason: "soft label row does not sum to 1",
                });
            }
        }
        self.cardinalities[k] = n_categories;
        self.soft_labels[k] = Some(probs);
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn cardinality(&self, k: usize) -> usize {
        self.cardinalities[k]
    }

    pub fn label(&self, n: usize, k: usize) -> usize {
        self.labels[n * self.n_factors + k]
    }

    pub fn has_soft_labels(&self, k: usize) -> bool {
        self.soft_labels[k].is_some()
    }

    pub fn value(&self, n: usize, k: usize) -> FactorValue<'_> {
        match &self.soft_labels[k] {
            Some(p) => {
                let c = self.cardinalities[k];
                FactorValue::Soft(&p[n * c..(n + 1) * c])
            }
            None => FactorValue::Hard(self.label(n, k)),
        }
    }

    pub fn check_factor(&self, k: usize) -> Result<()> {
        if k < self.n_factors {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { what: "factor", index: k, limit: self.n_factors })
        }
    }

    /// Empirical marginal `p(y_k)`: label frequencies, or the mean soft row.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        let c = self.cardinalities[k];
        let mut acc = vec![ExactSum::ZERO; c];
        for n in 0..self.n_samples {
            match self.value(n, k) {
                FactorValue::Hard(v) => acc[v].add(1.0),
                FactorValue::Soft(p) => {
                    for (a, &pv) in acc.iter_mut().zip(p) {
                        a.add(pv);
                    }
                }
            }
        }
        let n = self.n_samples as f64;
        acc.into_iter().map(|a| a.value() / n).collect()
    }

    pub fn permute_samples(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.n_samples)?;
        let k = self.n_factors;
        let labels = order.iter().flat_map(|&src| self.labels[src * k..(src + 1) * k].to_vec()).collect();
        let soft_labels = self
            .soft_labels
            .iter()
            .zip(&self.cardinalities)
            .map(|(soft, &c)| {
                soft.as_ref().map(|p| order.iter().flat_map(|&src| p[src * c..(src + 1) * c].to_vec()).collect())
            })
            .collect();
        Ok(Self { labels, soft_labels, ..self.clone() })
    }
}

/// Empirical entropy `H(y_k)` in nats.
pub fn empirical_factor_entropy(table: &FactorTable, k: usize) -> Result<f64> {
    table.check_factor(k)?;
    Ok(entropy_of(&table.marginal(k)))
}

/// Maps a continuous factor onto `bins` equal-width categories spanning the
/// observed range. Returns labels and the cardinality.
pub fn quantize_continuous(values: &[f64], bins: usize) -> Result<(Vec<usize>, usize)> {
    if bins < 1 {
        return Err(Error::InvalidConfig("continuous factors need at least one bin".into()));
    }
    if let Some((row, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidValue { row, column: 0, value: v, reason: "factor value is not finite" });
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Ok((vec![0; values.len()], 1));
    }
    let width = (hi - lo) / bins as f64;
    let labels = values.iter().map(|&v| (((v - lo) / width).floor() as usize).min(bins - 1)).collect();
    Ok((labels, bins))
}

/// `-sum p log p` with `0 log 0 = 0`; logs are floored at `1e-300`.
pub(crate) fn entropy_of(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.max(1e-300).ln()).sum::<f64>()
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::DimensionMismatch(format!("permutation of length {} for {n} samples", order.len())));
    }
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::DimensionMismatch("sample order is not a permutation".into()));
        }
    }
    Ok(())
}

/// Fixed value range `[lo, hi]` split into `n_bins` equal-width bins
/// `[a, b)`; the last bin also contains `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationGrid {
    lo: f64,
    hi: f64,
    n_bins: usize,
}

impl QuantizationGrid {
    pub fn new(lo: f64, hi: f64, n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::DegenerateGrid(format!("need at least 2 bins, got {n_bins}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::DegenerateGrid(format!("range [{lo}, {hi}] is empty or not finite")));
        }
        Ok(Self { lo, hi, n_bins })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins as f64
    }

    /// Left edge of bin `j`; `edge(n_bins) == hi`.
    pub fn edge(&self, j: usize) -> f64 {
        if j == self.n_bins {
            self.hi
        } else {
            self.lo + self.width() * j as f64
        }
    }

    pub fn center(&self, j: usize) -> f64 {
        self.lo + self.width() * (j as f64 + 0.5)
    }

    /// Bin containing `x`; values outside the range are clipped to the
    /// boundary bins.
    pub fn bin_index(&self, x: f64) -> usize {
        if !(x > self.lo) {
            return 0;
        }
        let j = ((x - self.lo) / self.width()).floor();
        if j >= self.n_bins as f64 {
            self.n_bins - 1
        } else {
            j as usize
        }
    }

    /// `log(#bins)`, the upper bound of any quantized marginal entropy.
    pub fn log_bins(&self) -> f64 {
        (self.n_bins as f64).ln()
    }
}

impl Default for QuantizationGrid {
    fn default() -> Self {
        Self { lo: -4.0, hi: 4.0, n_bins: 100 }
    }
}

/// How a Gaussian posterior is turned into bin masses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinMethod {
    /// Density at the bin center times the bin width, renormalized.
    Rectangle,
    /// Exact Gaussian integral over the bin using a full-precision erf.
    #[default]
    Erf,
    /// Gaussian integral using the four-coefficient polynomial erf.
    ErfApprox,
}

impl fmt::Display for BinMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinMethod::Rectangle => "rectangle",
            BinMethod::Erf => "erf",
            BinMethod::ErfApprox => "erf-approx",
        })
    }
}

impl FromStr for BinMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangle" => Ok(BinMethod::Rectangle),
            "erf" => Ok(BinMethod::Erf),
            "erf-approx" => Ok(BinMethod::ErfApprox),
            other => Err(Error::InvalidConfig(format!(
                "unknown bin method {other:?} (expected rectangle, erf or erf-approx)"
            ))),
        }
    }
}

/// Estimator settings shared by every metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub grid: QuantizationGrid,
    pub n_mc_samples: usize,
    pub rng_seed: u64,
    pub bin_method: BinMethod,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        QuantizationGrid::new(self.grid.lo, self.grid.hi, self.grid.n_bins)?;
        if self.n_mc_samples == 0 {
            return Err(Error::InvalidConfig("the number of Monte Carlo samples must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_grid(self, grid: QuantizationGrid) -> Self {
        Self { grid, ..self }
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }

    pub fn with_samples(self, n_mc_samples: usize) -> Self {
        Self { n_mc_samples, ..self }
    }

    pub fn with_bin_method(self, bin_method: BinMethod) -> Self {
        Self { bin_method, ..self }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { grid: QuantizationGrid::default(), n_mc_samples: 10_000, rng_seed: 0, bin_method: BinMethod::Erf }
    }
}
