//! Quantized probability tables for scalar Gaussian latents.
//!
//! Each posterior `q(z_i | x^(n))` is turned into a bin vector
//! `Q(s_i | x^(n))` over the shared [`QuantizationGrid`]; aggregate tables
//! weight every sample by `1/N`. All sums over samples use
//! [`ExactSum`](crate::accum::ExactSum), so the tables are bit-identical
//! under any reordering of the samples.

use rayon::prelude::*;

use crate::accum::ExactSum;
use crate::data::{entropy_of, BinMethod, EvalConfig, FactorTable, FactorValue, PosteriorSet, QuantizationGrid};
use crate::error::{Error, Result};
use crate::special::{erf_approx, erfc};

const NORMALIZATION_TOL: f64 = 1e-9;

/// A probability mass function over bins or factor categories.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::DimensionMismatch("empty pmf".into()));
        }
        if let Some((i, &p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidValue { row: 0, column: i, value: p, reason: "pmf entries must be >= 0" });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidValue { row: 0, column: 0, value: total, reason: "pmf does not sum to 1" });
        }
        Ok(Self { probs })
    }

    fn from_normalized(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        entropy_of(&self.probs)
    }
}

/// Entropy of a pmf in nats, with `0 log 0 = 0`.
pub fn pmf_entropy(p: &Pmf) -> f64 {
    p.entropy()
}

/// What a [`JointPmf`] axis indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Bins of the given latent.
    LatentBin(usize),
    /// Categories of the given factor.
    FactorCategory(usize),
}

/// A 2-D probability table, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    rows: usize,
    cols: usize,
    probs: Vec<f64>,
    row_axis: Axis,
    col_axis: Axis,
}

impl JointPmf {
    pub fn new(rows: usize, cols: usize, probs: Vec<f64>, row_axis: Axis, col_axis: Axis) -> Result<Self> {
        if rows * cols != probs.len() || probs.is_empty() {
            return Err(Error::DimensionMismatch(format!("{rows} x {cols} table with {} entries", probs.len())));
        }
        Pmf::new(probs.clone())?;
        Ok(Self { rows, cols, probs, row_axis, col_axis })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn axes(&self) -> (Axis, Axis) {
        (self.row_axis, self.col_axis)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.probs[r * self.cols + c]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row_marginal(&self) -> Pmf {
        Pmf::from_normalized(self.probs.chunks(self.cols).map(|r| r.iter().sum()).collect())
    }

    pub fn col_marginal(&self) -> Pmf {
        let mut out = vec![0.0; self.cols];
        for row in self.probs.chunks(self.cols) {
            for (o, &p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        Pmf::from_normalized(out)
    }

    pub fn entropy(&self) -> f64 {
        entropy_of(&self.probs)
    }

    /// `H(row) + H(col) - H(row, col)`, clamped at 0.
    pub fn mutual_information(&self) -> f64 {
        (self.row_marginal().entropy() + self.col_marginal().entropy() - self.entropy()).max(0.0)
    }
}

/// Fills `out` with the normalized bin masses of `N(mu, sigma)` on `grid`.
///
/// Mass falling outside the grid is redistributed proportionally by the
/// renormalization. If every bin underflows to zero (a very narrow posterior
/// far outside the range) the mass goes to the boundary bin nearest `mu`.
pub fn bin_masses(mu: f64, sigma: f64, grid: &QuantizationGrid, method: BinMethod, out: &mut [f64]) {
    let b = grid.n_bins();
    debug_assert_eq!(out.len(), b);
    match method {
        BinMethod::Rectangle => {
            // Softmax of the log density at the bin centers; the constant
            // width and normalizer cancel.
            let mut max = f64::NEG_INFINITY;
            for (j, o) in out.iter_mut().enumerate() {
                let d = (grid.center(j) - mu) / sigma;
                *o = -0.5 * d * d;
                max = max.max(*o);
            }
            for o in out.iter_mut() {
                *o = (*o - max).exp();
            }
        }
        BinMethod::Erf | BinMethod::ErfApprox => {
            let scale = 1.0 / (sigma * std::f64::consts::SQRT_2);
            let approx = method == BinMethod::ErfApprox;
            // Per edge: the erf argument and the matching tail term.
            let edge = |j: usize| {
                let t = (grid.edge(j) - mu) * scale;
                let tail = if approx { 1.0 - erf_approx(t.abs()) } else { erfc(t.abs()) };
                (t, tail)
            };
            let mut left = edge(0);
            for (j, o) in out.iter_mut().enumerate() {
                let right = edge(j + 1);
                let (ta, ea) = left;
                let (tb, eb) = right;
                *o = if ta >= 0.0 {
                    0.5 * (ea - eb)
                } else if tb <= 0.0 {
                    0.5 * (eb - ea)
                } else {
                    1.0 - 0.5 * (ea + eb)
                }
                .max(0.0);
                left = right;
            }
        }
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 && total.is_finite() {
        for o in out.iter_mut() {
            *o /= total;
        }
    } else {
        out.fill(0.0);
        out[grid.bin_index(mu)] = 1.0;
    }
}

/// `Q(s | x)`: bin masses of a single posterior.
pub fn bin_posterior(mu: f64, sigma: f64, grid: &QuantizationGrid, method: BinMethod) -> Result<Pmf> {
    let grid = QuantizationGrid::new(grid.lo(), grid.hi(), grid.n_bins())?;
    if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
        return Err(Error::InvalidValue {
            row: 0,
            column: 0,
            value: sigma,
            reason: "posterior must have finite mu and sigma > 0",
        });
    }
    let mut out = vec![0.0; grid.n_bins()];
    bin_masses(mu, sigma, &grid, method, &mut out);
    Ok(Pmf::from_normalized(out))
}

/// Whether each sample contributes its full posterior or a point mass at
/// its conditional mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorMode {
    Full,
    ConditionalMean,
}

/// Everything the quantized metrics need about one latent, gathered in a
/// single pass over the samples.
#[derive(Debug, Clone)]
pub struct LatentTables {
    pub latent: usize,
    /// `Q(s_i)`.
    pub marginal: Pmf,
    /// `H_q(z_i | x) = (1/N) sum_n H(Q(s_i | x^(n)))`.
    pub conditional_entropy: f64,
    /// `Q(s_i, y_k)` for every factor, in factor order.
    pub factor_joints: Vec<JointPmf>,
}

impl LatentTables {
    pub fn entropy(&self) -> f64 {
        self.marginal.entropy()
    }

    /// `I_q(x, z_i) = H_q(z_i) - H_q(z_i | x)`, clamped at 0.
    pub fn informativeness(&self) -> f64 {
        (self.entropy() - self.conditional_entropy).max(0.0)
    }
}

pub fn latent_tables(
    ps: &PosteriorSet,
    factors: Option<&FactorTable>,
    i: usize,
    cfg: &EvalConfig,
    mode: PosteriorMode,
) -> Result<LatentTables> {
    ps.check_latent(i)?;
    let grid = QuantizationGrid::new(cfg.grid.lo(), cfg.grid.hi(), cfg.grid.n_bins())?;
    if let Some(ft) = factors {
        check_same_samples(ps, ft)?;
    }
    let b = grid.n_bins();
    let n = ps.n_samples();
    let mut marginal = vec![ExactSum::ZERO; b];
    let mut cond = ExactSum::ZERO;
    let mut joints: Vec<Vec<ExactSum>> = factors
        .map(|ft| (0..ft.n_factors()).map(|k| vec![ExactSum::ZERO; b * ft.cardinality(k)]).collect())
        .unwrap_or_default();
    let mut scratch = vec![0.0; b];
    for row in 0..n {
        match mode {
            PosteriorMode::Full => bin_masses(ps.mean(row, i), ps.std(row, i), &grid, cfg.bin_method, &mut scratch),
            PosteriorMode::ConditionalMean => {
                scratch.fill(0.0);
                scratch[grid.bin_index(ps.mean(row, i))] = 1.0;
            }
        }
        cond.add(entropy_of(&scratch));
        for (s, &q) in scratch.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            marginal[s].add(q);
            if let Some(ft) = factors {
                for (k, table) in joints.iter_mut().enumerate() {
                    let c = ft.cardinality(k);
                    match ft.value(row, k) {
                        FactorValue::Hard(v) => table[s * c + v].add(q),
                        FactorValue::Soft(p) => {
                            for (v, &pv) in p.iter().enumerate() {
                                table[s * c + v].add(q * pv);
                            }
                        }
                    }
                }
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    let finish = |acc: Vec<ExactSum>| -> Vec<f64> { acc.into_iter().map(|a| a.value() * inv_n).collect() };
    let factor_joints = joints
        .into_iter()
        .enumerate()
        .map(|(k, acc)| JointPmf {
            rows: b,
            cols: acc.len() / b,
            probs: finish(acc),
            row_axis: Axis::LatentBin(i),
            col_axis: Axis::FactorCategory(k),
        })
        .collect();
    Ok(LatentTables {
        latent: i,
        marginal: Pmf::from_normalized(finish(marginal)),
        conditional_entropy: cond.value() * inv_n,
        factor_joints,
    })
}

/// Tables for every latent, computed in parallel and returned in latent order.
pub fn all_latent_tables(
    ps: &PosteriorSet,
    factors: Option<&FactorTable>,
    cfg: &EvalConfig,
    mode: PosteriorMode,
) -> Result<Vec<LatentTables>> {
    (0..ps.n_latents()).into_par_iter().map(|i| latent_tables(ps, factors, i, cfg, mode)).collect()
}

/// `Q(s_i) = (1/N) sum_n Q(s_i | x^(n))`.
pub fn marginal_latent_pmf(ps: &PosteriorSet, i: usize, cfg: &EvalConfig) -> Result<Pmf> {
    Ok(latent_tables(ps, None, i, cfg, PosteriorMode::Full)?.marginal)
}

/// Quantized informativeness `I(x, z_i)` and its value divided by `log B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Informativeness {
    pub raw: f64,
    pub normalized: f64,
}

pub fn informativeness_quantized(ps: &PosteriorSet, i: usize, cfg: &EvalConfig) -> Result<Informativeness> {
    let raw = latent_tables(ps, None, i, cfg, PosteriorMode::Full)?.informativeness();
    Ok(Informativeness { raw, normalized: raw / cfg.grid.log_bins() })
}

/// `Q(s_i, y_k) = (1/N) sum_n Q(s_i | x^(n)) p(y_k | x^(n))`.
pub fn joint_latent_factor_pmf(
    ps: &PosteriorSet,
    ft: &FactorTable,
    i: usize,
    k: usize,
    cfg: &EvalConfig,
) -> Result<JointPmf> {
    ft.check_factor(k)?;
    let mut tables = latent_tables(ps, Some(ft), i, cfg, PosteriorMode::Full)?;
    Ok(tables.factor_joints.swap_remove(k))
}

/// `Q(s_i, s_j) = (1/N) sum_n Q(s_i | x^(n)) Q(s_j | x^(n))` under a
/// factorized encoder.
pub fn joint_latent_pair_pmf(ps: &PosteriorSet, i: usize, j: usize, cfg: &EvalConfig) -> Result<JointPmf> {
    check_pair(ps, i, j)?;
    let grid = QuantizationGrid::new(cfg.grid.lo(), cfg.grid.hi(), cfg.grid.n_bins())?;
    let b = grid.n_bins();
    let mut acc = vec![ExactSum::ZERO; b * b];
    let (mut qi, mut qj) = (vec![0.0; b], vec![0.0; b]);
    for n in 0..ps.n_samples() {
        bin_masses(ps.mean(n, i), ps.std(n, i), &grid, cfg.bin_method, &mut qi);
        bin_masses(ps.mean(n, j), ps.std(n, j), &grid, cfg.bin_method, &mut qj);
        for (r, &a) in qi.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (c, &bq) in qj.iter().enumerate() {
                if bq != 0.0 {
                    acc[r * b + c].add(a * bq);
                }
            }
        }
    }
    let inv_n = 1.0 / ps.n_samples() as f64;
    Ok(JointPmf {
        rows: b,
        cols: b,
        probs: acc.into_iter().map(|a| a.value() * inv_n).collect(),
        row_axis: Axis::LatentBin(i),
        col_axis: Axis::LatentBin(j),
    })
}

/// Joint table of the conditional means `(z̄_i, z̄_j)`: every sample puts
/// mass `1/N` on the 2-D bin containing its means (clipped to the grid).
pub fn conditional_mean_joint_pmf(ps: &PosteriorSet, i: usize, j: usize, cfg: &EvalConfig) -> Result<JointPmf> {
    check_pair(ps, i, j)?;
    let grid = QuantizationGrid::new(cfg.grid.lo(), cfg.grid.hi(), cfg.grid.n_bins())?;
    let b = grid.n_bins();
    let mut counts = vec![0u64; b * b];
    for n in 0..ps.n_samples() {
        counts[grid.bin_index(ps.mean(n, i)) * b + grid.bin_index(ps.mean(n, j))] += 1;
    }
    let inv_n = 1.0 / ps.n_samples() as f64;
    Ok(JointPmf {
        rows: b,
        cols: b,
        probs: counts.into_iter().map(|c| c as f64 * inv_n).collect(),
        row_axis: Axis::LatentBin(i),
        col_axis: Axis::LatentBin(j),
    })
}

/// Bin index of every sample's conditional mean for latent `i`.
pub fn conditional_mean_bins(ps: &PosteriorSet, i: usize, grid: &QuantizationGrid) -> Vec<usize> {
    (0..ps.n_samples()).map(|n| grid.bin_index(ps.mean(n, i))).collect()
}

/// `H(z̄_i, z̄_j)` from per-sample bin indices without materializing the
/// `B x B` table.
pub fn conditional_mean_pair_entropy(bins_i: &[usize], bins_j: &[usize], n_bins: usize) -> f64 {
    debug_assert_eq!(bins_i.len(), bins_j.len());
    let mut codes: Vec<usize> = bins_i.iter().zip(bins_j).map(|(&a, &b)| a * n_bins + b).collect();
    codes.sort_unstable();
    let n = codes.len() as f64;
    let mut h = 0.0;
    for run in codes.chunk_by(|a, b| a == b) {
        let p = run.len() as f64 / n;
        h -= p * p.ln();
    }
    h
}

fn check_pair(ps: &PosteriorSet, i: usize, j: usize) -> Result<()> {
    ps.check_latent(i)?;
    ps.check_latent(j)?;
    if i == j {
        return Err(Error::SameLatent(i));
    }
    Ok(())
}

pub(crate) fn check_same_samples(ps: &PosteriorSet, ft: &FactorTable) -> Result<()> {
    if ps.n_samples() != ft.n_samples() {
        return Err(Error::DimensionMismatch(format!(
            "{} posterior samples but {} factor rows",
            ps.n_samples(),
            ft.n_samples()
        )));
    }
    Ok(())
}
