//! Monte Carlo estimates of differential entropies and mutual informations
//! over latent subsets.
//!
//! All estimates share one draw matrix: for each `m` a source sample
//! `n_m ~ U{0..N}` and a full latent vector `z^(m) ~ q(z | x^(n_m))`.
//! Subsets are projections of that matrix, so every difference of two
//! estimates (SEPIN, INDIN) uses common random numbers.
//!
//! Mutual information is estimated with the paired form
//! `I(x, z_S) ~ (1/M) sum_m [log q(z_S^(m) | x^(n_m)) - log q(z_S^(m))]`,
//! and entropy with `H(z_S) ~ -(1/M) sum_m log q(z_S^(m))`, where the
//! mixture density `q(z_S) = (1/N) sum_n q(z_S | x^(n))` is evaluated by a
//! max-shifted log-sum-exp.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accum::ExactSum;
use crate::data::{EvalConfig, PosteriorSet};
use crate::error::{Error, Result};

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Sorted, unique, non-empty set of latent indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatentSubset {
    indices: Vec<usize>,
}

impl LatentSubset {
    pub fn new(mut indices: Vec<usize>, n_latents: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::InvalidConfig("latent subset is empty".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n_latents) {
            return Err(Error::IndexOutOfRange { what: "latent", index: bad, limit: n_latents });
        }
        Ok(Self { indices })
    }

    pub fn all(n_latents: usize) -> Result<Self> {
        Self::new((0..n_latents).collect(), n_latents)
    }

    pub fn single(i: usize, n_latents: usize) -> Result<Self> {
        Self::new(vec![i], n_latents)
    }

    /// Every latent except `i`.
    pub fn without(i: usize, n_latents: usize) -> Result<Self> {
        if i >= n_latents {
            return Err(Error::IndexOutOfRange { what: "latent", index: i, limit: n_latents });
        }
        if n_latents == 1 {
            return Err(Error::SingleLatent);
        }
        Self::new((0..n_latents).filter(|&j| j != i).collect(), n_latents)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// A Monte Carlo estimate. `raw` is the unclamped estimator output; `value`
/// equals `raw` except for quantities that are non-negative by definition,
/// where it is clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub raw: f64,
    pub m_used: usize,
    pub seed: u64,
}

impl McEstimate {
    fn signed(raw: f64, m_used: usize, seed: u64) -> Self {
        Self { value: raw, raw, m_used, seed }
    }

    fn non_negative(raw: f64, m_used: usize, seed: u64) -> Self {
        Self { value: raw.max(0.0), raw, m_used, seed }
    }
}

/// `M` draws of the full latent vector together with their source samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDraws {
    n_latents: usize,
    sources: Vec<usize>,
    values: Vec<f64>,
    seed: u64,
}

impl LatentDraws {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn n_latents(&self) -> usize {
        self.n_latents
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m * self.n_latents..(m + 1) * self.n_latents]
    }

    pub fn value(&self, m: usize, i: usize) -> f64 {
        self.values[m * self.n_latents + i]
    }

    /// Rewrites every source index through `map`, e.g. to follow a
    /// permutation of the samples: the draw attributed to old sample `n` is
    /// attributed to `map[n]`.
    pub fn remap_sources(&self, map: &[usize]) -> Self {
        Self { sources: self.sources.iter().map(|&n| map[n]).collect(), ..self.clone() }
    }
}

/// Draws `m` source indices uniformly with replacement and one latent
/// vector per source from its factorized Gaussian posterior.
pub fn draw_latents(ps: &PosteriorSet, m: usize, seed: u64) -> Result<LatentDraws> {
    if m == 0 {
        return Err(Error::InvalidConfig("number of Monte Carlo samples must be >= 1".into()));
    }
    let l = ps.n_latents();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sources = Vec::with_capacity(m);
    let mut values = Vec::with_capacity(m * l);
    for _ in 0..m {
        let n = rng.random_range(0..ps.n_samples());
        sources.push(n);
        for i in 0..l {
            let eps: f64 = rng.sample(StandardNormal);
            values.push(ps.mean(n, i) + ps.std(n, i) * eps);
        }
    }
    Ok(LatentDraws { n_latents: l, sources, values, seed })
}

/// Samples restricted to `subset`, as an `M x |subset|` row-major matrix,
/// plus the source index of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub width: usize,
    pub values: Vec<f64>,
    pub sources: Vec<usize>,
}

pub fn sample_latents(ps: &PosteriorSet, subset: &LatentSubset, m: usize, seed: u64) -> Result<LatentSample> {
    LatentSubset::new(subset.indices.clone(), ps.n_latents())?;
    let draws = draw_latents(ps, m, seed)?;
    let values =
        (0..m).flat_map(|r| subset.indices.iter().map(move |&i| (r, i))).map(|(r, i)| draws.value(r, i)).collect();
    Ok(LatentSample { width: subset.len(), values, sources: draws.sources })
}

/// Closed-form `H(z_S | x) = (1/N) sum_n sum_{i in S} 1/2 log(2 pi e sigma_i^(n)^2)`.
pub fn conditional_entropy_given_x(ps: &PosteriorSet, subset: &LatentSubset) -> Result<f64> {
    LatentSubset::new(subset.indices.clone(), ps.n_latents())?;
    let sum: ExactSum = (0..ps.n_samples())
        .flat_map(|n| subset.indices.iter().map(move |&i| (n, i)))
        .map(|(n, i)| HALF_LOG_2PI + 0.5 + ps.std(n, i).ln())
        .collect();
    Ok(sum.value() / ps.n_samples() as f64)
}

/// Log-density of every posterior at one draw: `out[n * L + i] = log q(z_i | x^(n))`.
fn log_densities(ps: &PosteriorSet, log_std: &[f64], z: &[f64], out: &mut [f64]) {
    let l = ps.n_latents();
    for (n, row) in out.chunks_mut(l).enumerate() {
        for (i, o) in row.iter_mut().enumerate() {
            let d = (z[i] - ps.mean(n, i)) / ps.std(n, i);
            *o = -0.5 * d * d - log_std[n * l + i] - HALF_LOG_2PI;
        }
    }
}

/// `log sum_n exp(v_n)` with an order-independent inner sum.
fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: ExactSum = values.map(|v| (v - max).exp()).collect();
    max + sum.value().ln()
}

struct SubsetTerms {
    /// `log q(z_S | x^(n_m))`.
    conditional: f64,
    /// `log q(z_S)`.
    marginal: f64,
}

fn subset_terms(
    ps: &PosteriorSet,
    log_std: &[f64],
    draws: &LatentDraws,
    subset: &[usize],
    scratch: &mut [f64],
    m: usize,
) -> SubsetTerms {
    let l = ps.n_latents();
    log_densities(ps, log_std, draws.row(m), scratch);
    let row_sum = |n: usize| subset.iter().map(|&i| scratch[n * l + i]).sum::<f64>();
    let n = ps.n_samples();
    let marginal = log_sum_exp((0..n).map(row_sum)) - (n as f64).ln();
    SubsetTerms { conditional: row_sum(draws.sources()[m]), marginal }
}

fn check_draws(ps: &PosteriorSet, draws: &LatentDraws) -> Result<()> {
    if draws.n_latents() != ps.n_latents() {
        return Err(Error::DimensionMismatch(format!(
            "draws have {} latents, posteriors {}",
            draws.n_latents(),
            ps.n_latents()
        )));
    }
    if let Some(&n) = draws.sources().iter().find(|&&n| n >= ps.n_samples()) {
        return Err(Error::IndexOutOfRange { what: "source sample", index: n, limit: ps.n_samples() });
    }
    Ok(())
}

fn log_stds(ps: &PosteriorSet) -> Vec<f64> {
    ps.stds().iter().map(|s| s.ln()).collect()
}

/// Entropy and paired mutual information of one subset from given draws.
pub fn subset_estimates_with_draws(
    ps: &PosteriorSet,
    subset: &LatentSubset,
    draws: &LatentDraws,
) -> Result<(McEstimate, McEstimate)> {
    LatentSubset::new(subset.indices.clone(), ps.n_latents())?;
    check_draws(ps, draws)?;
    let log_std = log_stds(ps);
    let l = ps.n_latents();
    let terms: Vec<SubsetTerms> = (0..draws.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; ps.n_samples() * l],
            |scratch, m| subset_terms(ps, &log_std, draws, &subset.indices, scratch, m),
        )
        .collect();
    let m = draws.len();
    let h: ExactSum = terms.iter().map(|t| -t.marginal).collect();
    let i: ExactSum = terms.iter().map(|t| t.conditional - t.marginal).collect();
    Ok((
        McEstimate::signed(h.value() / m as f64, m, draws.seed()),
        McEstimate::non_negative(i.value() / m as f64, m, draws.seed()),
    ))
}

/// `H_s(z_S)`, the sampled differential entropy of the aggregate posterior.
/// May be negative when posteriors are narrow.
pub fn entropy_sampled(ps: &PosteriorSet, subset: &LatentSubset, cfg: &EvalConfig) -> Result<McEstimate> {
    cfg.validate()?;
    let draws = draw_latents(ps, cfg.n_mc_samples, cfg.rng_seed)?;
    Ok(subset_estimates_with_draws(ps, subset, &draws)?.0)
}

/// `I(x, z_S)`, clamped at zero with the unclamped value in `raw`.
pub fn mi_x_subset(ps: &PosteriorSet, subset: &LatentSubset, cfg: &EvalConfig) -> Result<McEstimate> {
    cfg.validate()?;
    let draws = draw_latents(ps, cfg.n_mc_samples, cfg.rng_seed)?;
    Ok(subset_estimates_with_draws(ps, subset, &draws)?.1)
}

/// Every sampled quantity the separability and independence metrics need,
/// from one pass over a shared draw matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityEstimates {
    pub m_used: usize,
    pub seed: u64,
    /// `I(x, z)` over all latents.
    pub total_information: McEstimate,
    /// `H_s(z)` over all latents.
    pub joint_entropy: f64,
    /// `I(x, z_i)` per latent.
    pub informativeness: Vec<McEstimate>,
    /// `H_s(z_i)` per latent.
    pub entropy: Vec<f64>,
    /// `H_s(z_{!=i})` per latent; 0 for a single latent.
    pub entropy_rest: Vec<f64>,
    /// `I(x, z_i | z_{!=i}) = I(x, z) - I(x, z_{!=i})`, clamped at zero.
    pub sepin: Vec<McEstimate>,
    /// `I(x, z_i) - I(z_i, z_{!=i})`, signed.
    pub indin: Vec<McEstimate>,
}

/// Per-draw log terms. `cond_*` are `log q(. | x^(n_m))`, the rest are
/// `log q(.)` of the mixture.
struct DrawTerms {
    cond_full: f64,
    marg_full: f64,
    cond_rest: Vec<f64>,
    marg_rest: Vec<f64>,
    cond_single: Vec<f64>,
    marg_single: Vec<f64>,
}

struct Scratch {
    dens: Vec<f64>,
    rest: Vec<f64>,
    prefix: Vec<f64>,
}

fn draw_terms(ps: &PosteriorSet, log_std: &[f64], draws: &LatentDraws, s: &mut Scratch, m: usize) -> DrawTerms {
    let (n_samples, l) = (ps.n_samples(), ps.n_latents());
    log_densities(ps, log_std, draws.row(m), &mut s.dens);
    // rest[n * L + i] = sum_{j != i} dens[n, j], by prefix and suffix sums so
    // that no large term is added and then subtracted.
    let mut full = Vec::with_capacity(n_samples);
    for n in 0..n_samples {
        let row = &s.dens[n * l..(n + 1) * l];
        let mut acc = 0.0;
        for (p, &d) in s.prefix.iter_mut().zip(row) {
            *p = acc;
            acc += d;
        }
        full.push(acc);
        let mut suffix = 0.0;
        for i in (0..l).rev() {
            s.rest[n * l + i] = s.prefix[i] + suffix;
            suffix += row[i];
        }
    }
    let log_n = (n_samples as f64).ln();
    let src = draws.sources()[m];
    let marg_full = log_sum_exp(full.iter().copied()) - log_n;
    let mut marg_rest = Vec::with_capacity(l);
    let mut marg_single = Vec::with_capacity(l);
    for i in 0..l {
        marg_rest.push(if l == 1 { 0.0 } else { log_sum_exp((0..n_samples).map(|n| s.rest[n * l + i])) - log_n });
        marg_single.push(log_sum_exp((0..n_samples).map(|n| s.dens[n * l + i])) - log_n);
    }
    DrawTerms {
        cond_full: full[src],
        marg_full,
        cond_rest: s.rest[src * l..(src + 1) * l].to_vec(),
        marg_rest,
        cond_single: s.dens[src * l..(src + 1) * l].to_vec(),
        marg_single,
    }
}

/// Runs the batched pass on explicit draws. With a single latent the
/// complement is empty, so SEPIN and INDIN reduce to `I(x, z_0)`.
pub fn separability_with_draws(ps: &PosteriorSet, draws: &LatentDraws) -> Result<SeparabilityEstimates> {
    check_draws(ps, draws)?;
    if draws.is_empty() {
        return Err(Error::InvalidConfig("number of Monte Carlo samples must be >= 1".into()));
    }
    let (n_samples, l) = (ps.n_samples(), ps.n_latents());
    let log_std = log_stds(ps);
    let terms: Vec<DrawTerms> = (0..draws.len())
        .into_par_iter()
        .map_init(
            || Scratch { dens: vec![0.0; n_samples * l], rest: vec![0.0; n_samples * l], prefix: vec![0.0; l] },
            |s, m| draw_terms(ps, &log_std, draws, s, m),
        )
        .collect();

    let m = draws.len();
    let seed = draws.seed();
    let mean = |f: &dyn Fn(&DrawTerms) -> f64| terms.iter().map(f).collect::<ExactSum>().value() / m as f64;

    let joint_entropy = mean(&|t| -t.marg_full);
    let i_full = mean(&|t| t.cond_full - t.marg_full);
    let mut out = SeparabilityEstimates {
        m_used: m,
        seed,
        total_information: McEstimate::non_negative(i_full, m, seed),
        joint_entropy,
        informativeness: Vec::with_capacity(l),
        entropy: Vec::with_capacity(l),
        entropy_rest: Vec::with_capacity(l),
        sepin: Vec::with_capacity(l),
        indin: Vec::with_capacity(l),
    };
    for i in 0..l {
        let h_i = mean(&|t| -t.marg_single[i]);
        let h_rest = mean(&|t| -t.marg_rest[i]);
        let i_single = mean(&|t| t.cond_single[i] - t.marg_single[i]);
        let i_rest = mean(&|t| t.cond_rest[i] - t.marg_rest[i]);
        let shared = h_i + h_rest - joint_entropy;
        out.informativeness.push(McEstimate::non_negative(i_single, m, seed));
        out.entropy.push(h_i);
        out.entropy_rest.push(h_rest);
        out.sepin.push(McEstimate::non_negative(i_full - i_rest, m, seed));
        out.indin.push(McEstimate::signed(i_single - shared, m, seed));
    }
    Ok(out)
}

pub fn separability(ps: &PosteriorSet, cfg: &EvalConfig) -> Result<SeparabilityEstimates> {
    cfg.validate()?;
    let draws = draw_latents(ps, cfg.n_mc_samples, cfg.rng_seed)?;
    separability_with_draws(ps, &draws)
}

/// `I(x, z_i | z_{!=i})` for one latent.
pub fn sepin_component(ps: &PosteriorSet, i: usize, cfg: &EvalConfig) -> Result<McEstimate> {
    ps.check_latent(i)?;
    if ps.n_latents() == 1 {
        return Err(Error::SingleLatent);
    }
    Ok(separability(ps, cfg)?.sepin[i])
}

/// `I(x, z_i) - I(z_i, z_{!=i})` for one latent; signed.
pub fn indin_component(ps: &PosteriorSet, i: usize, cfg: &EvalConfig) -> Result<McEstimate> {
    ps.check_latent(i)?;
    if ps.n_latents() == 1 {
        return Err(Error::SingleLatent);
    }
    Ok(separability(ps, cfg)?.indin[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAUSS_H: f64 = 1.418_938_533_204_672_7; // 1/2 log(2 pi e)

    fn cfg(m: usize, seed: u64) -> EvalConfig {
        EvalConfig::default().with_samples(m).with_seed(seed)
    }

    fn shared(n: usize, l: usize, sigma: f64) -> PosteriorSet {
        PosteriorSet::new(n, l, vec![0.0; n * l], vec![sigma; n * l]).unwrap()
    }

    /// Two clusters at +-1 with small sigma, one latent.
    fn two_clusters(sigma: f64) -> PosteriorSet {
        PosteriorSet::from_rows(&[vec![(-1.0, sigma)], vec![(1.0, sigma)]]).unwrap()
    }

    #[test]
    fn subset_validation() {
        assert_eq!(LatentSubset::new(vec![2, 0, 2], 3).unwrap().indices(), &[0, 2]);
        assert!(LatentSubset::new(vec![], 3).is_err());
        assert!(matches!(LatentSubset::new(vec![3], 3), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(LatentSubset::without(0, 1), Err(Error::SingleLatent)));
        assert_eq!(LatentSubset::without(1, 3).unwrap().indices(), &[0, 2]);
    }

    #[test]
    fn degenerate_sigma_draws_equal_means() {
        let ps =
            PosteriorSet::from_rows(&[vec![(0.3, 1e-12), (-2.0, 1e-12)], vec![(1.5, 1e-12), (0.0, 1e-12)]]).unwrap();
        let s = sample_latents(&ps, &LatentSubset::all(2).unwrap(), 100, 3).unwrap();
        for (r, &n) in s.sources.iter().enumerate() {
            for i in 0..2 {
                assert!((s.values[r * 2 + i] - ps.mean(n, i)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn draws_are_reproducible_and_subsets_project() {
        let ps = shared(5, 3, 1.0);
        let a = draw_latents(&ps, 50, 9).unwrap();
        assert_eq!(a, draw_latents(&ps, 50, 9).unwrap());
        assert_ne!(a, draw_latents(&ps, 50, 10).unwrap());
        let s = sample_latents(&ps, &LatentSubset::new(vec![2], 3).unwrap(), 50, 9).unwrap();
        for r in 0..50 {
            assert_eq!(s.values[r], a.value(r, 2));
        }
        assert!(draw_latents(&ps, 0, 0).is_err());
    }

    #[test]
    fn standard_normal_sample_mean() {
        let s = sample_latents(&shared(4, 1, 1.0), &LatentSubset::all(1).unwrap(), 10_000, 0).unwrap();
        let mean = s.values.iter().sum::<f64>() / 10_000.0;
        assert!(mean.abs() < 0.05, "{mean}");
    }

    #[test]
    fn conditional_entropy_closed_form() {
        let one = LatentSubset::all(1).unwrap();
        assert!((conditional_entropy_given_x(&shared(3, 1, 1.0), &one).unwrap() - GAUSS_H).abs() < 1e-12);
        let h = conditional_entropy_given_x(&shared(3, 1, 0.1), &one).unwrap();
        assert!((h - (GAUSS_H + 0.1f64.ln())).abs() < 1e-12);
        assert!((h + 0.8837).abs() < 1e-4);
        let both = LatentSubset::all(2).unwrap();
        assert!((conditional_entropy_given_x(&shared(3, 2, 1.0), &both).unwrap() - 2.0 * GAUSS_H).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_shared_gaussian() {
        let h = entropy_sampled(&shared(7, 1, 1.0), &LatentSubset::all(1).unwrap(), &cfg(10_000, 0)).unwrap();
        assert!((h.value - GAUSS_H).abs() < 0.02, "{}", h.value);
        assert_eq!(h.m_used, 10_000);
        let h2 = entropy_sampled(&shared(7, 2, 1.0), &LatentSubset::all(2).unwrap(), &cfg(10_000, 0)).unwrap();
        assert!((h2.value - 2.0 * GAUSS_H).abs() < 0.04, "{}", h2.value);
        let narrow = entropy_sampled(&shared(7, 1, 0.01), &LatentSubset::all(1).unwrap(), &cfg(10_000, 0)).unwrap();
        assert!(narrow.value < 0.0);
        assert!((narrow.value - (GAUSS_H + 0.01f64.ln())).abs() < 0.02);
    }

    #[test]
    fn mi_examples() {
        let one = LatentSubset::all(1).unwrap();
        let same = mi_x_subset(&shared(9, 1, 0.7), &one, &cfg(2000, 1)).unwrap();
        assert!(same.value.abs() < 0.02);

        // Oracle: the two components at +-1 with sigma 0.05 overlap by less
        // than 1e-80, so I(x, z) = H(mixture) - H(component) = log 2.
        let mi = mi_x_subset(&two_clusters(0.05), &one, &cfg(10_000, 2)).unwrap();
        assert!((mi.value - 2f64.ln()).abs() < 0.02, "{}", mi.value);
    }

    #[test]
    fn paired_and_closed_form_conditional_entropy_agree() {
        let ps = PosteriorSet::from_rows(&[
            vec![(-0.5, 0.4), (0.2, 0.9)],
            vec![(0.5, 0.6), (-0.1, 0.5)],
            vec![(1.2, 0.3), (0.7, 1.1)],
        ])
        .unwrap();
        let all = LatentSubset::all(2).unwrap();
        let c = cfg(20_000, 4);
        let h = entropy_sampled(&ps, &all, &c).unwrap().value;
        let i = mi_x_subset(&ps, &all, &c).unwrap().raw;
        let hc = conditional_entropy_given_x(&ps, &all).unwrap();
        assert!((h - hc - i).abs() < 0.03, "{h} - {hc} vs {i}");
    }

    #[test]
    fn sepin_and_indin_examples() {
        // Latent 0 codes two clusters, latent 1 is pure noise, latent 2 copies latent 0.
        let rows: Vec<Vec<(f64, f64)>> = [-1.0, 1.0].iter().map(|&m| vec![(m, 0.05), (0.0, 1.0), (m, 0.05)]).collect();
        let dup = PosteriorSet::from_rows(&rows).unwrap();
        let est = separability(&dup, &cfg(10_000, 5)).unwrap();
        assert!(est.sepin[1].value.abs() < 0.02);
        assert!(est.indin[1].value.abs() < 0.02);
        assert!(est.sepin[0].value < 0.02 && est.sepin[2].value < 0.02);
        assert!(est.indin[0].value < 0.02);

        // Independent informative latents on a 2x2 grid.
        let mut rows = Vec::new();
        for a in [-1.0, 1.0] {
            for b in [-1.0, 1.0] {
                rows.push(vec![(a, 0.05), (b, 0.05)]);
            }
        }
        let indep = PosteriorSet::from_rows(&rows).unwrap();
        let est = separability(&indep, &cfg(10_000, 6)).unwrap();
        for i in 0..2 {
            assert!((est.sepin[i].value - 2f64.ln()).abs() < 0.03);
            assert!((est.indin[i].value - est.informativeness[i].value).abs() < 0.03);
        }
        assert!((est.total_information.value - 4f64.ln()).abs() < 0.03);
        assert!(matches!(sepin_component(&two_clusters(0.1), 0, &cfg(10, 0)), Err(Error::SingleLatent)));
    }

    #[test]
    fn batched_pass_matches_subset_estimates() {
        let ps = PosteriorSet::from_rows(&[
            vec![(-0.5, 0.4), (0.2, 0.9), (0.0, 1.0)],
            vec![(0.5, 0.6), (-0.1, 0.5), (0.3, 0.2)],
        ])
        .unwrap();
        let draws = draw_latents(&ps, 500, 11).unwrap();
        let est = separability_with_draws(&ps, &draws).unwrap();
        let (h_all, i_all) = subset_estimates_with_draws(&ps, &LatentSubset::all(3).unwrap(), &draws).unwrap();
        assert!((est.joint_entropy - h_all.value).abs() < 1e-9);
        assert!((est.total_information.raw - i_all.raw).abs() < 1e-9);
        for i in 0..3 {
            let (h, mi) = subset_estimates_with_draws(&ps, &LatentSubset::single(i, 3).unwrap(), &draws).unwrap();
            assert!((est.entropy[i] - h.value).abs() < 1e-9);
            assert!((est.informativeness[i].raw - mi.raw).abs() < 1e-9);
            let (h_rest, mi_rest) =
                subset_estimates_with_draws(&ps, &LatentSubset::without(i, 3).unwrap(), &draws).unwrap();
            assert!((est.entropy_rest[i] - h_rest.value).abs() < 1e-9);
            assert!((est.sepin[i].raw - (i_all.raw - mi_rest.raw)).abs() < 1e-9);
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let ps = PosteriorSet::from_rows(&[
            vec![(-0.5, 0.4), (0.2, 0.9)],
            vec![(0.5, 0.6), (-0.1, 0.5)],
            vec![(0.1, 0.3), (0.4, 0.7)],
        ])
        .unwrap();
        let c = cfg(3000, 13);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| separability(&ps, &c).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn sample_permutation_with_remapped_draws_is_bit_identical() {
        let ps = PosteriorSet::from_rows(&[
            vec![(-0.5, 0.4), (0.2, 0.9)],
            vec![(0.5, 0.6), (-0.1, 0.5)],
            vec![(0.1, 0.3), (0.4, 0.7)],
            vec![(1.1, 0.2), (-0.4, 0.3)],
        ])
        .unwrap();
        let order = [2, 0, 3, 1];
        let shuffled = ps.permute_samples(&order).unwrap();
        // New position of every old sample.
        let mut inverse = vec![0; 4];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let draws = draw_latents(&ps, 800, 21).unwrap();
        let a = separability_with_draws(&ps, &draws).unwrap();
        let b = separability_with_draws(&shuffled, &draws.remap_sources(&inverse)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_sample_mean_matches_large_sample() {
        // Gaussian mixture world: 20 overlapping components that tile
        // [-2, 2], so log q(z) varies little and the check has power.
        let rows: Vec<Vec<(f64, f64)>> = (0..20).map(|k| vec![(-1.9 + 0.2 * k as f64, 0.12)]).collect();
        let ps = PosteriorSet::from_rows(&rows).unwrap();
        let one = LatentSubset::all(1).unwrap();
        let reference = entropy_sampled(&ps, &one, &cfg(50_000, 1000)).unwrap().value;
        let mean = (0..10).map(|s| entropy_sampled(&ps, &one, &cfg(2000, s)).unwrap().value).sum::<f64>() / 10.0;
        assert!((mean - reference).abs() < 0.01, "{mean} vs {reference}");
    }
}
