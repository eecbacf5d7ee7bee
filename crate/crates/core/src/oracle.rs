//! Small discrete worlds with exactly computable metrics.
//!
//! A world is a set of factor tuples (the full grid or IID draws from it)
//! and, for each latent, a rule mapping a tuple to a Gaussian posterior.
//! [`exact_metrics`] evaluates every quantized quantity by direct summation
//! over the rows, and the separability terms by enumerating the joint
//! distribution of all latent bins. It computes its own bin masses and
//! information quantities and does not call into the quantizer or metrics
//! modules.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::Value;

use crate::data::{EvalConfig, FactorTable, PosteriorSet, QuantizationGrid};
use crate::error::{Error, Result};
use crate::metrics::{FactorInterpretability, Scored, MI_TIE_EPS, ZERO_ENTROPY_EPS};
use crate::report::{
    evaluate, flatten_json, Metric, MetricReport, Modularity, ModularityScores, PerFactor, Section, ValueRaw,
};

/// Largest factor grid a world may span.
pub const GRID_STATE_CAP: u128 = 1_000_000;

/// Largest number of joint bin configurations visited per entropy.
pub const LEAF_CAP: u64 = 50_000_000;

/// Bin configurations with less total mass than this are dropped.
const PRUNE_MASS: f64 = 1e-20;

/// How one latent's posterior depends on the factor tuple.
#[derive(Debug, Clone, PartialEq)]
pub enum Emission {
    /// `N(0, 1)` for every tuple.
    Noise,
    /// `N(sum_k w_k u(v_k), sigma)` with the factor lattice
    /// `u(v) = -1 + 2 v / (C - 1)`. With `snap` the mean is moved to the
    /// center of its bin on the default `[-4, 4]`, 100-bin grid.
    Code { weights: Vec<f64>, sigma: f64, snap: bool },
}

impl Emission {
    /// A snapped code reading only factor `k` with gain `gain`.
    pub fn single(k: usize, n_factors: usize, gain: f64, sigma: f64) -> Self {
        let mut weights = vec![0.0; n_factors];
        weights[k] = gain;
        Emission::Code { weights, sigma, snap: true }
    }

    pub fn params(&self, tuple: &[usize], cards: &[usize]) -> (f64, f64) {
        match self {
            Emission::Noise => (0.0, 1.0),
            Emission::Code { weights, sigma, snap } => {
                let t: f64 = weights.iter().zip(tuple.iter().zip(cards)).map(|(w, (&v, &c))| w * lattice(v, c)).sum();
                (if *snap { snap_to_default_grid(t) } else { t }, *sigma)
            }
        }
    }
}

/// `-1 + 2 v / (C - 1)`; 0 for a single-valued factor.
pub fn lattice(v: usize, cardinality: usize) -> f64 {
    if cardinality <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * v as f64 / (cardinality - 1) as f64
    }
}

/// Center of the bin containing `t` on the default grid.
pub fn snap_to_default_grid(t: f64) -> f64 {
    let g = QuantizationGrid::default();
    g.center(g.bin_index(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    /// Every factor tuple once.
    FullGrid,
    /// Tuples drawn uniformly with replacement using the world seed.
    Iid(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteWorld {
    pub cardinalities: Vec<usize>,
    pub latents: Vec<Emission>,
    pub dataset: Dataset,
    pub seed: u64,
}

impl DiscreteWorld {
    pub fn n_grid_states(&self) -> u128 {
        self.cardinalities.iter().map(|&c| c as u128).product()
    }

    pub fn with_dataset(self, dataset: Dataset) -> Self {
        Self { dataset, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    /// Appends `extra` pure-noise latents.
    pub fn with_noise_latents(mut self, extra: usize) -> Self {
        self.latents.extend(std::iter::repeat_n(Emission::Noise, extra));
        self
    }

    fn check(&self) -> Result<()> {
        if self.cardinalities.is_empty() || self.cardinalities.contains(&0) {
            return Err(Error::InvalidConfig("world needs at least one factor with cardinality >= 1".into()));
        }
        if self.latents.is_empty() {
            return Err(Error::InvalidConfig("world needs at least one latent".into()));
        }
        for e in &self.latents {
            if let Emission::Code { weights, sigma, .. } = e {
                if weights.len() != self.cardinalities.len() || !(*sigma > 0.0) {
                    return Err(Error::InvalidConfig("emission needs one weight per factor and sigma > 0".into()));
                }
            }
        }
        let states = self.n_grid_states();
        if states > GRID_STATE_CAP {
            return Err(Error::TooLarge { states, cap: GRID_STATE_CAP });
        }
        Ok(())
    }

    /// The factor tuple of every data row.
    pub fn rows(&self) -> Result<Vec<Vec<usize>>> {
        self.check()?;
        match self.dataset {
            Dataset::FullGrid => {
                let mut rows = vec![Vec::new()];
                for &c in &self.cardinalities {
                    rows = rows.into_iter().flat_map(|r| (0..c).map(move |v| [r.clone(), vec![v]].concat())).collect();
                }
                Ok(rows)
            }
            Dataset::Iid(n) => {
                if n == 0 {
                    return Err(Error::InvalidConfig("IID dataset needs at least one row".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok((0..n).map(|_| self.cardinalities.iter().map(|&c| rng.random_range(0..c)).collect()).collect())
            }
        }
    }

    pub fn posteriors(&self) -> Result<PosteriorSet> {
        let rows: Vec<Vec<(f64, f64)>> = self
            .rows()?
            .iter()
            .map(|t| self.latents.iter().map(|e| e.params(t, &self.cardinalities)).collect())
            .collect();
        PosteriorSet::from_rows(&rows)
    }

    pub fn factors(&self) -> Result<FactorTable> {
        FactorTable::from_rows(&self.rows()?, Some(self.cardinalities.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Perfect,
    RedundantPair,
    NoiseOnly,
    Entangled,
    Mixed,
}

impl Preset {
    pub const ALL: [Preset; 5] =
        [Preset::Perfect, Preset::RedundantPair, Preset::NoiseOnly, Preset::Entangled, Preset::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Perfect => "perfect",
            Preset::RedundantPair => "redundant-pair",
            Preset::NoiseOnly => "noise-only",
            Preset::Entangled => "entangled",
            Preset::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown preset {s:?} (expected perfect, redundant-pair, noise-only, entangled or mixed)"
            ))
        })
    }
}

const CODE_GAIN: f64 = 2.4;

/// The preset worlds, all on the full factor grid.
pub fn preset_world(preset: Preset, seed: u64) -> DiscreteWorld {
    let world = |cardinalities: Vec<usize>, latents: Vec<Emission>| DiscreteWorld {
        cardinalities,
        latents,
        dataset: Dataset::FullGrid,
        seed,
    };
    match preset {
        Preset::Perfect => {
            let latents = (0..3).map(|k| Emission::single(k, 3, CODE_GAIN, 0.01)).collect();
            world(vec![2, 3, 4], latents).with_noise_latents(2)
        }
        Preset::RedundantPair => world(
            vec![3, 4],
            vec![
                Emission::single(0, 2, CODE_GAIN, 0.01),
                Emission::single(0, 2, CODE_GAIN, 0.01),
                Emission::single(1, 2, CODE_GAIN, 0.01),
                Emission::Noise,
            ],
        ),
        Preset::NoiseOnly => world(vec![2, 3], vec![Emission::Noise; 3]),
        Preset::Entangled => world(
            vec![3, 3],
            vec![
                Emission::Code { weights: vec![1.6, 1.2], sigma: 0.02, snap: false },
                Emission::Code { weights: vec![-1.2, 1.6], sigma: 0.02, snap: false },
            ],
        ),
        Preset::Mixed => mixed_world(&[3, 4], 2, 0.05).with_seed(seed),
    }
}

/// One snapped informative latent per factor followed by `n_noise` noise
/// latents.
pub fn mixed_world(cardinalities: &[usize], n_noise: usize, sigma: f64) -> DiscreteWorld {
    let k = cardinalities.len();
    DiscreteWorld {
        cardinalities: cardinalities.to_vec(),
        latents: (0..k).map(|f| Emission::single(f, k, CODE_GAIN, sigma)).collect(),
        dataset: Dataset::FullGrid,
        seed: 0,
    }
    .with_noise_latents(n_noise)
}

/// Wide posteriors on a `[-1.5, 1.5]` lattice: every posterior spans many
/// bins, as the gap-law and bin-stability checks require.
pub fn smooth_world() -> DiscreteWorld {
    DiscreteWorld {
        cardinalities: vec![4, 3],
        latents: vec![
            Emission::Code { weights: vec![1.5, 0.0], sigma: 0.5, snap: false },
            Emission::Code { weights: vec![0.0, 1.5], sigma: 0.5, snap: false },
            Emission::Noise,
        ],
        dataset: Dataset::FullGrid,
        seed: 0,
    }
}

pub fn build_world(preset: Preset, seed: u64) -> Result<(DiscreteWorld, PosteriorSet, FactorTable)> {
    let world = preset_world(preset, seed);
    let ps = world.posteriors()?;
    let ft = world.factors()?;
    Ok((world, ps, ft))
}

/// 200 samples with `sigma = 1` posteriors whose means share a common
/// component: `mu_i = 0.3 c_n + 0.1 e_{n,i}` for three latents, with a
/// 10-valued factor independent of the latents.
pub fn jittered_world(seed: u64) -> Result<(PosteriorSet, FactorTable)> {
    const N: usize = 200;
    const L: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(N * L);
    for _ in 0..N {
        let c: f64 = rng.sample(StandardNormal);
        for _ in 0..L {
            let e: f64 = rng.sample(StandardNormal);
            means.push(0.3 * c + 0.1 * e);
        }
    }
    let ps = PosteriorSet::new(N, L, means, vec![1.0; N * L])?;
    let ft = FactorTable::new(N, 1, (0..N).map(|n| n % 10).collect(), Some(vec![10]))?;
    Ok((ps, ft))
}

// ---------------------------------------------------------- exact tables

/// Exact quantized tables of a world.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTables {
    pub grid: QuantizationGrid,
    pub n_rows: usize,
    /// `Q(s_i)`.
    pub marginals: Vec<Vec<f64>>,
    /// `(1/N) sum_n H(Q(s_i | x^(n)))`.
    pub conditional_entropy: Vec<f64>,
    /// `Q(s_i, y_k)`, `B x C_k` row-major, indexed `[i][k]`.
    pub factor_joints: Vec<Vec<Vec<f64>>>,
    /// As `factor_joints` with each posterior replaced by its mean.
    pub factor_joints_conditional_mean: Vec<Vec<Vec<f64>>>,
    /// `p(y_k)`.
    pub factor_marginals: Vec<Vec<f64>>,
    /// `I(s_i, s_j)` under full posteriors; zero diagonal.
    pub pair_information: Vec<Vec<f64>>,
    /// `I(x, s_i)`.
    pub informativeness: Vec<f64>,
    /// `I(x, s)` over all latents.
    pub total_information: f64,
    /// `I(x, s_{!=i})`.
    pub information_without: Vec<f64>,
}

/// Exact tables and the report they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactMetrics {
    pub tables: ExactTables,
    pub report: MetricReport,
}

fn plogp_sum(probs: impl Iterator<Item = f64>) -> f64 {
    -probs.filter(|&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Normalized masses of `N(mu, sigma)` on the bins of `grid`, via `erfc`.
fn exact_bins(mu: f64, sigma: f64, grid: &QuantizationGrid) -> Vec<f64> {
    let upper = |x: f64| 0.5 * libm::erfc((x - mu) / (sigma * std::f64::consts::SQRT_2));
    let lower = |x: f64| 0.5 * libm::erfc((mu - x) / (sigma * std::f64::consts::SQRT_2));
    let mut out: Vec<f64> = (0..grid.n_bins())
        .map(|j| {
            let (a, b) = (grid.edge(j), grid.edge(j + 1));
            if a >= mu {
                upper(a) - upper(b)
            } else if b <= mu {
                lower(b) - lower(a)
            } else {
                1.0 - lower(a) - upper(b)
            }
            .max(0.0)
        })
        .collect();
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|p| *p /= total);
    } else {
        out[grid.bin_index(mu)] = 1.0;
    }
    out
}

fn kl_information(joint: &[f64], rows: usize, cols: usize) -> f64 {
    let pr: Vec<f64> = (0..rows).map(|r| joint[r * cols..(r + 1) * cols].iter().sum()).collect();
    let pc: Vec<f64> = (0..cols).map(|c| (0..rows).map(|r| joint[r * cols + c]).sum()).collect();
    let mut mi = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let p = joint[r * cols + c];
            if p > 0.0 {
                mi += p * (p / (pr[r] * pc[c])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Enumerates joint bin configurations of a latent subset.
struct Enumerator<'a> {
    /// Per latent, per row: sparse `(bin, mass)` lists.
    cond: &'a [Vec<Vec<(usize, f64)>>],
    n_rows: usize,
    leaves: AtomicU64,
}

impl Enumerator<'_> {
    /// `H(s_S)` of the mixture `(1/N) sum_n prod_{i in S} Q(s_i | x^(n))`.
    fn entropy(&self, latents: &[usize]) -> Result<f64> {
        if latents.is_empty() {
            return Ok(0.0);
        }
        let start: Vec<(usize, f64)> = (0..self.n_rows).map(|r| (r, 1.0)).collect();
        let first = latents[0];
        let bins = self.bins_of(first);
        let parts: Vec<Result<f64>> = bins
            .par_iter()
            .map(|&s| match self.extend(&start, first, s) {
                Some(w) => self.descend(&latents[1..], &w),
                None => Ok(0.0),
            })
            .collect();
        parts.into_iter().sum()
    }

    fn bins_of(&self, i: usize) -> Vec<usize> {
        let mut bins: Vec<usize> = self.cond[i].iter().flat_map(|row| row.iter().map(|&(s, _)| s)).collect();
        bins.sort_unstable();
        bins.dedup();
        bins
    }

    fn extend(&self, weights: &[(usize, f64)], i: usize, s: usize) -> Option<Vec<(usize, f64)>> {
        let next: Vec<(usize, f64)> = weights
            .iter()
            .filter_map(|&(r, w)| {
                let q = self.cond[i][r].iter().find(|&&(b, _)| b == s).map_or(0.0, |&(_, q)| q);
                (q > 0.0).then_some((r, w * q))
            })
            .collect();
        let mass: f64 = next.iter().map(|&(_, w)| w).sum::<f64>() / self.n_rows as f64;
        (mass >= PRUNE_MASS).then_some(next)
    }

    fn descend(&self, rest: &[usize], weights: &[(usize, f64)]) -> Result<f64> {
        let Some((&i, rest)) = rest.split_first() else {
            let leaves = self.leaves.fetch_add(1, Ordering::Relaxed) + 1;
            if leaves > LEAF_CAP {
                return Err(Error::TooLarge { states: leaves as u128, cap: LEAF_CAP as u128 });
            }
            let p = weights.iter().map(|&(_, w)| w).sum::<f64>() / self.n_rows as f64;
            return Ok(-p * p.ln());
        };
        let mut h = 0.0;
        for s in self.bins_of(i) {
            if let Some(w) = self.extend(weights, i, s) {
                h += self.descend(rest, &w)?;
            }
        }
        Ok(h)
    }
}

/// Every quantized metric of `world` on `grid` by direct summation.
pub fn exact_metrics(world: &DiscreteWorld, grid: &QuantizationGrid) -> Result<ExactMetrics> {
    let grid = QuantizationGrid::new(grid.lo(), grid.hi(), grid.n_bins())?;
    let rows = world.rows()?;
    let cards = &world.cardinalities;
    let (n, l, k_count, b) = (rows.len(), world.latents.len(), cards.len(), grid.n_bins());
    let inv_n = 1.0 / n as f64;
    let params: Vec<Vec<(f64, f64)>> =
        world.latents.iter().map(|e| rows.iter().map(|t| e.params(t, cards)).collect()).collect();

    // Per latent and row: dense bin masses and the bin of the mean.
    let dense: Vec<Vec<Vec<f64>>> =
        params.par_iter().map(|ps| ps.iter().map(|&(m, s)| exact_bins(m, s, &grid)).collect()).collect();
    let mean_bins: Vec<Vec<usize>> =
        params.iter().map(|ps| ps.iter().map(|&(m, _)| grid.bin_index(m)).collect()).collect();

    let marginals: Vec<Vec<f64>> = dense
        .iter()
        .map(|per_row| (0..b).map(|s| per_row.iter().map(|q| q[s]).sum::<f64>() * inv_n).collect())
        .collect();
    let conditional_entropy: Vec<f64> =
        dense.iter().map(|per_row| per_row.iter().map(|q| plogp_sum(q.iter().copied())).sum::<f64>() * inv_n).collect();
    let informativeness: Vec<f64> =
        (0..l).map(|i| (plogp_sum(marginals[i].iter().copied()) - conditional_entropy[i]).max(0.0)).collect();

    let factor_marginals: Vec<Vec<f64>> = (0..k_count)
        .map(|k| {
            let mut p = vec![0.0; cards[k]];
            rows.iter().for_each(|t| p[t[k]] += inv_n);
            p
        })
        .collect();
    let factor_joint = |i: usize, k: usize, mean_mode: bool| {
        let c = cards[k];
        let mut joint = vec![0.0; b * c];
        for (r, t) in rows.iter().enumerate() {
            if mean_mode {
                joint[mean_bins[i][r] * c + t[k]] += inv_n;
            } else {
                for (s, &q) in dense[i][r].iter().enumerate() {
                    joint[s * c + t[k]] += q * inv_n;
                }
            }
        }
        joint
    };
    let factor_joints: Vec<Vec<Vec<f64>>> =
        (0..l).map(|i| (0..k_count).map(|k| factor_joint(i, k, false)).collect()).collect();
    let factor_joints_conditional_mean: Vec<Vec<Vec<f64>>> =
        (0..l).map(|i| (0..k_count).map(|k| factor_joint(i, k, true)).collect()).collect();

    let sparse: Vec<Vec<Vec<(usize, f64)>>> = dense
        .iter()
        .map(|per_row| {
            per_row
                .iter()
                .map(|q| q.iter().enumerate().filter(|&(_, &p)| p > 0.0).map(|(s, &p)| (s, p)).collect())
                .collect()
        })
        .collect();

    let mut pair_information = vec![vec![0.0; l]; l];
    for i in 0..l {
        for j in i + 1..l {
            let mut joint = vec![0.0; b * b];
            for (row_i, row_j) in sparse[i].iter().zip(&sparse[j]) {
                for &(si, qi) in row_i {
                    for &(sj, qj) in row_j {
                        joint[si * b + sj] += qi * qj * inv_n;
                    }
                }
            }
            let mi = kl_information(&joint, b, b);
            pair_information[i][j] = mi;
            pair_information[j][i] = mi;
        }
    }

    // Latents with one posterior for every row add the same entropy to
    // H(s_S) and H(s_S | x), so they drop out of every I(x, s_S).
    let varying: Vec<usize> = (0..l).filter(|&i| params[i].iter().any(|&p| p != params[i][0])).collect();
    let enumerator = Enumerator { cond: &sparse, n_rows: n, leaves: AtomicU64::new(0) };
    let info_of = |subset: &[usize]| -> Result<f64> {
        let h = enumerator.entropy(subset)?;
        let hc: f64 = subset.iter().map(|&i| conditional_entropy[i]).sum();
        Ok((h - hc).max(0.0))
    };
    let total_information = info_of(&varying)?;
    let information_without: Vec<f64> = (0..l)
        .map(|i| info_of(&varying.iter().copied().filter(|&j| j != i).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;

    let tables = ExactTables {
        grid,
        n_rows: n,
        marginals,
        conditional_entropy,
        factor_joints,
        factor_joints_conditional_mean,
        factor_marginals,
        pair_information,
        informativeness,
        total_information,
        information_without,
    };
    let report = exact_report(&tables, &mean_bins, l)?;
    Ok(ExactMetrics { tables, report })
}

fn mean_top_k(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    (1..=sorted.len()).map(|k| sorted[..k].iter().sum::<f64>() / k as f64).collect()
}

fn rho_weighted(values: &[f64], weights: &[f64]) -> Section<f64> {
    let total: f64 = weights.iter().sum();
    if total <= 1e-6 {
        return Section::skipped(Error::AllLatentsUninformative(total).to_string());
    }
    Section::Computed(values.iter().zip(weights).map(|(v, w)| v * w / total).sum())
}

fn modularity_of(mi: &[Vec<f64>]) -> ModularityScores {
    let k = mi[0].len();
    let per_latent: Vec<Option<f64>> = mi
        .iter()
        .map(|row| {
            let top = row.iter().copied().fold(0.0, f64::max);
            if top <= 1e-12 {
                return None;
            }
            let k_star = row.iter().position(|&v| v == top).expect("max is an element");
            let dev: f64 = row.iter().enumerate().filter(|&(c, _)| c != k_star).map(|(_, v)| v * v).sum();
            Some(1.0 - dev / (top * top * (k - 1) as f64))
        })
        .collect();
    let defined: Vec<f64> = per_latent.iter().flatten().copied().collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    ModularityScores { per_latent, mean }
}

fn exact_report(t: &ExactTables, mean_bins: &[Vec<usize>], l: usize) -> Result<MetricReport> {
    let k_count = t.factor_marginals.len();
    let log_b = t.grid.log_bins();
    let h_marg: Vec<f64> = t.marginals.iter().map(|m| plogp_sum(m.iter().copied())).collect();

    // MISJED from the exact joint of conditional-mean bins.
    let mut misjed = vec![vec![None; l]; l];
    let mut misjed_norm = vec![vec![None; l]; l];
    for i in 0..l {
        for j in i + 1..l {
            let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            for (&bi, &bj) in mean_bins[i].iter().zip(&mean_bins[j]) {
                *counts.entry((bi, bj)).or_default() += 1;
            }
            let h = plogp_sum(counts.values().map(|&c| c as f64 / t.n_rows as f64));
            let raw = (h_marg[i] + h_marg[j] - h).max(0.0);
            misjed[i][j] = Some(raw);
            misjed[j][i] = Some(raw);
            misjed_norm[i][j] = Some(raw / (2.0 * log_b));
            misjed_norm[j][i] = Some(raw / (2.0 * log_b));
        }
    }

    let sepin_raw: Vec<f64> = t.information_without.iter().map(|w| t.total_information - w).collect();
    let sepin: Vec<f64> = sepin_raw.iter().map(|v| v.max(0.0)).collect();
    // INDIN = I(x, s_i) - [H(s_i) + H(s_{!=i}) - H(s)]; with factorized
    // posteriors the conditional entropies cancel inside the bracket.
    let indin: Vec<f64> = (0..l)
        .map(|i| {
            let shared = t.informativeness[i] + t.information_without[i] - t.total_information;
            t.informativeness[i] - shared
        })
        .collect();

    let mi_of = |joints: &Vec<Vec<Vec<f64>>>| -> Vec<Vec<f64>> {
        (0..l)
            .map(|i| {
                (0..k_count)
                    .map(|k| kl_information(&joints[i][k], t.grid.n_bins(), t.factor_marginals[k].len()))
                    .collect()
            })
            .collect()
    };
    let mi = mi_of(&t.factor_joints);
    let mi_cm = mi_of(&t.factor_joints_conditional_mean);
    let h_y: Vec<f64> = t.factor_marginals.iter().map(|p| plogp_sum(p.iter().copied())).collect();

    let interp: Option<Vec<FactorInterpretability>> = (l >= 2).then(|| {
        (0..k_count)
            .map(|k| {
                let col: Vec<f64> = mi.iter().map(|row| row[k]).collect();
                // Lowest index among entries within MI_TIE_EPS of the best.
                let pick = |skip: usize| {
                    let max = (0..l).filter(|&i| i != skip).map(|i| col[i]).fold(f64::NEG_INFINITY, f64::max);
                    (0..l).find(|&i| i != skip && col[i] >= max - MI_TIE_EPS).expect("l >= 2")
                };
                let i_star = pick(usize::MAX);
                let j_circ = pick(i_star);
                let (top, second) = (col[i_star], col[j_circ]);
                let joint = &t.factor_joints[i_star][k];
                let h_zy = plogp_sum(joint.iter().copied());
                let h_z = h_marg[i_star];
                let mut flags = Vec::new();
                let rmig_norm = if h_y[k] > ZERO_ENTROPY_EPS {
                    (top - second) / h_y[k]
                } else {
                    flags.push("zero factor entropy: normalized rmig set to 0".to_string());
                    0.0
                };
                FactorInterpretability {
                    factor: k,
                    i_star,
                    j_circ,
                    mi_i_star: top,
                    mi_j_circ: second,
                    factor_entropy: h_y[k],
                    latent_entropy: h_z,
                    joint_entropy: h_zy,
                    joint_gap: h_zy - top,
                    latent_gap: h_z - top,
                    factor_gap: h_y[k] - top,
                    rmig: Scored { raw: top - second, normalized: rmig_norm },
                    jemmig: Scored {
                        raw: (h_zy - top + second).max(0.0),
                        normalized: ((h_z + h_y[k] - 2.0 * top + second) / (log_b + h_y[k])).clamp(0.0, 1.0),
                    },
                    flags,
                }
            })
            .collect()
    });
    let gap = |pick: fn(&FactorInterpretability) -> f64| -> Section<PerFactor> {
        match &interp {
            Some(v) => {
                let per_factor: Vec<f64> = v.iter().map(pick).collect();
                let mean = per_factor.iter().sum::<f64>() / per_factor.len() as f64;
                Section::Computed(PerFactor { per_factor, mean })
            }
            None => Section::skipped(Error::SingleLatent.to_string()),
        }
    };
    let two = |v: Section<Vec<f64>>| if l >= 2 { v } else { Section::skipped("needs at least two latents") };

    Ok(MetricReport {
        config: EvalConfig::default().with_grid(t.grid),
        n_samples: t.n_rows,
        n_latents: l,
        n_factors: Some(k_count),
        informativeness: Section::Computed(t.informativeness.clone()),
        informativeness_normalized: Section::Computed(t.informativeness.iter().map(|v| v / log_b).collect()),
        informativeness_sampled: Section::Computed(t.informativeness.clone()),
        total_information: Section::Computed(ValueRaw { value: t.total_information, raw: t.total_information }),
        misjed: if l >= 2 { Section::Computed(misjed) } else { Section::skipped("needs at least two latents") },
        misjed_normalized: if l >= 2 {
            Section::Computed(misjed_norm)
        } else {
            Section::skipped("needs at least two latents")
        },
        sepin: two(Section::Computed(sepin.clone())),
        sepin_raw: two(Section::Computed(sepin_raw)),
        sepin_at_k: two(Section::Computed(mean_top_k(&sepin))),
        wsepin: if l >= 2 {
            rho_weighted(&sepin, &t.informativeness)
        } else {
            Section::skipped("needs at least two latents")
        },
        indin: two(Section::Computed(indin.clone())),
        indin_at_k: two(Section::Computed(mean_top_k(&indin))),
        windin: if l >= 2 {
            rho_weighted(&indin, &t.informativeness)
        } else {
            Section::skipped("needs at least two latents")
        },
        mi_matrix: Section::Computed(mi.clone()),
        mi_matrix_conditional_mean: Section::Computed(mi_cm.clone()),
        factor_entropy: Section::Computed(h_y),
        rmig: gap(|f| f.rmig.raw),
        rmig_normalized: gap(|f| f.rmig.normalized),
        jemmig: gap(|f| f.jemmig.raw),
        jemmig_normalized: gap(|f| f.jemmig.normalized),
        interpretability: match interp {
            Some(v) => Section::Computed(v),
            None => Section::skipped(Error::SingleLatent.to_string()),
        },
        modularity: if k_count >= 2 {
            Section::Computed(Modularity { original: modularity_of(&mi_cm), correct: modularity_of(&mi) })
        } else {
            Section::skipped(Error::SingleFactor.to_string())
        },
        correlation: Section::skipped("not computed by the oracle"),
        notes: vec![format!("exact enumeration over {} rows", t.n_rows)],
    })
}

// ------------------------------------------------------------ comparison

pub const QUANTIZED_TOLERANCE: f64 = 0.02;
pub const SAMPLED_TOLERANCE: f64 = 0.05;

/// Report sections produced by the Monte Carlo path.
pub const SAMPLED_SECTIONS: [&str; 9] = [
    "informativeness_sampled",
    "total_information",
    "sepin",
    "sepin_raw",
    "sepin_at_k",
    "wsepin",
    "indin",
    "indin_at_k",
    "windin",
];

const IGNORED_SECTIONS: [&str; 6] = ["config", "n_samples", "n_latents", "n_factors", "notes", "correlation"];
const IGNORED_LEAVES: [&str; 3] = ["i_star", "j_circ", "factor"];

/// Largest deviation within one report section.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub section: String,
    pub tolerance: f64,
    pub max_abs: f64,
    /// Key path of the largest deviation.
    pub worst_key: String,
    pub compared: usize,
    /// Keys numeric in one report but not the other.
    pub mismatched: Vec<String>,
}

impl Deviation {
    pub fn passed(&self) -> bool {
        self.mismatched.is_empty() && self.max_abs <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub deviations: Vec<Deviation>,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.deviations.iter().all(Deviation::passed)
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().map(|d| d.max_abs).fold(0.0, f64::max)
    }
}

fn numeric_leaves(report: &MetricReport) -> BTreeMap<String, Option<f64>> {
    let value = serde_json::to_value(report).expect("reports serialize");
    flatten_json(&value)
        .into_iter()
        .filter(|(k, _)| {
            let mut segs = k.split('.');
            let top = segs.next().unwrap_or_default();
            !IGNORED_SECTIONS.contains(&top) && !k.split('.').any(|s| IGNORED_LEAVES.contains(&s) || s == "flags")
        })
        .filter_map(|(k, v)| match v {
            Value::Number(x) => Some((k, x.as_f64())),
            Value::Null => Some((k, None)),
            _ => None,
        })
        .collect()
}

/// Compares library reports against the oracle report. Sampled sections
/// use the mean over `library` runs; the rest use the first run.
pub fn compare_reports(oracle: &MetricReport, library: &[MetricReport]) -> OracleCheck {
    assert!(!library.is_empty(), "need at least one library report");
    let exact = numeric_leaves(oracle);
    let runs: Vec<_> = library.iter().map(numeric_leaves).collect();
    let section_of = |k: &str| k.split('.').next().unwrap_or_default().to_string();
    let mut by_section: BTreeMap<String, Deviation> = BTreeMap::new();
    let keys: std::collections::BTreeSet<&String> = exact.keys().chain(runs[0].keys()).collect();
    for key in keys {
        let section = section_of(key);
        let sampled = SAMPLED_SECTIONS.contains(&section.as_str());
        let dev = by_section.entry(section.clone()).or_insert_with(|| Deviation {
            section: section.clone(),
            tolerance: if sampled { SAMPLED_TOLERANCE } else { QUANTIZED_TOLERANCE },
            max_abs: 0.0,
            worst_key: String::new(),
            compared: 0,
            mismatched: Vec::new(),
        });
        let lib = if sampled {
            let vals: Option<Vec<f64>> = runs.iter().map(|r| r.get(key).copied().flatten()).collect();
            vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
        } else {
            runs[0].get(key).copied().flatten()
        };
        match (exact.get(key).copied().flatten(), lib) {
            (Some(a), Some(b)) => {
                dev.compared += 1;
                let d = (a - b).abs();
                if d > dev.max_abs || dev.compared == 1 {
                    dev.max_abs = d;
                    dev.worst_key = key.clone();
                }
            }
            (None, None) => {}
            _ => dev.mismatched.push(key.clone()),
        }
    }
    OracleCheck { deviations: by_section.into_values().collect() }
}

/// Runs the library once per seed on the world's data and compares with
/// the exact report on `oracle_grid`.
pub fn oracle_check(
    world: &DiscreteWorld,
    library_cfg: &EvalConfig,
    oracle_grid: &QuantizationGrid,
    seeds: &[u64],
) -> Result<OracleCheck> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("oracle check needs at least one seed".into()));
    }
    let exact = exact_metrics(world, oracle_grid)?;
    let ps = world.posteriors()?;
    let ft = world.factors()?;
    let metrics = Metric::ALL.into_iter().filter(|&m| m != Metric::Correlation).collect();
    let runs: Vec<MetricReport> =
        seeds.iter().map(|&s| evaluate(&ps, Some(&ft), &library_cfg.with_seed(s), &metrics)).collect::<Result<_>>()?;
    Ok(compare_reports(&exact.report, &runs))
}
