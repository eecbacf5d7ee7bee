//! Disentanglement metrics assembled from quantized tables and sampled
//! estimates.
//!
//! Informativeness, MISJED, the MI matrix, RMIG, JEMMIG and modularity use
//! the quantizer; SEPIN, INDIN and their aggregates use the sampler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accum::ExactSum;
use crate::data::{empirical_factor_entropy, EvalConfig, FactorTable, PosteriorSet, QuantizationGrid};
use crate::error::{Error, Result};
use crate::quantizer::{
    all_latent_tables, check_same_samples, conditional_mean_bins, conditional_mean_pair_entropy, latent_tables,
    LatentTables, PosteriorMode,
};
use crate::sampler::separability;

/// Weight sums at or below this are treated as "no latent is informative".
pub const INFORMATIVE_EPS: f64 = 1e-6;

/// Modularity rows whose largest entry is at or below this are undefined.
pub const ZERO_ROW_EPS: f64 = 1e-12;

/// A raw score in nats and its normalized counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub raw: f64,
    pub normalized: f64,
}

// ---------------------------------------------------------------- MISJED

/// `H_q(z_i) + H_q(z_j) - H(z̄_i, z̄_j)` clamped at 0, normalized by `2 log B`.
pub fn misjed_from_entropies(h_i: f64, h_j: f64, h_means: f64, log_bins: f64) -> Scored {
    let raw = (h_i + h_j - h_means).max(0.0);
    Scored { raw, normalized: raw / (2.0 * log_bins) }
}

pub fn misjed(ps: &PosteriorSet, i: usize, j: usize, cfg: &EvalConfig) -> Result<Scored> {
    ps.check_latent(i)?;
    ps.check_latent(j)?;
    if i == j {
        return Err(Error::SameLatent(i));
    }
    let ti = latent_tables(ps, None, i, cfg, PosteriorMode::Full)?;
    let tj = latent_tables(ps, None, j, cfg, PosteriorMode::Full)?;
    let bi = conditional_mean_bins(ps, i, &cfg.grid);
    let bj = conditional_mean_bins(ps, j, &cfg.grid);
    let h_means = conditional_mean_pair_entropy(&bi, &bj, cfg.grid.n_bins());
    Ok(misjed_from_entropies(ti.entropy(), tj.entropy(), h_means, cfg.grid.log_bins()))
}

/// Symmetric `L x L` MISJED tables; the diagonal is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisjedMatrix {
    pub raw: Vec<Vec<Option<f64>>>,
    pub normalized: Vec<Vec<Option<f64>>>,
}

/// MISJED for every pair, given the per-latent full-posterior marginal
/// entropies `H_q(z_i)`.
pub fn misjed_matrix_from_entropies(ps: &PosteriorSet, entropies: &[f64], grid: &QuantizationGrid) -> MisjedMatrix {
    let l = ps.n_latents();
    let bins: Vec<Vec<usize>> = (0..l).map(|i| conditional_mean_bins(ps, i, grid)).collect();
    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|i| (i + 1..l).map(move |j| (i, j))).collect();
    let scores: Vec<Scored> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let h = conditional_mean_pair_entropy(&bins[i], &bins[j], grid.n_bins());
            misjed_from_entropies(entropies[i], entropies[j], h, grid.log_bins())
        })
        .collect();
    let mut raw = vec![vec![None; l]; l];
    let mut normalized = vec![vec![None; l]; l];
    for (&(i, j), s) in pairs.iter().zip(&scores) {
        raw[i][j] = Some(s.raw);
        raw[j][i] = Some(s.raw);
        normalized[i][j] = Some(s.normalized);
        normalized[j][i] = Some(s.normalized);
    }
    MisjedMatrix { raw, normalized }
}

pub fn misjed_matrix(ps: &PosteriorSet, cfg: &EvalConfig) -> Result<MisjedMatrix> {
    let tables = all_latent_tables(ps, None, cfg, PosteriorMode::Full)?;
    let entropies: Vec<f64> = tables.iter().map(LatentTables::entropy).collect();
    Ok(misjed_matrix_from_entropies(ps, &entropies, &cfg.grid))
}

// ------------------------------------------------------- @k and weighted

/// Mean of the `k` largest components; ties go to the lower index.
pub fn top_k_mean(components: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > components.len() {
        return Err(Error::KOutOfRange { k, max: components.len() });
    }
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by(|&a, &b| components[b].total_cmp(&components[a]).then(a.cmp(&b)));
    Ok(order[..k].iter().map(|&i| components[i]).sum::<f64>() / k as f64)
}

pub fn sepin_at_k(components: &[f64], k: usize) -> Result<f64> {
    top_k_mean(components, k)
}

pub fn indin_at_k(components: &[f64], k: usize) -> Result<f64> {
    top_k_mean(components, k)
}

/// `[top_k_mean(c, 1), ..., top_k_mean(c, L)]`.
pub fn at_every_k(components: &[f64]) -> Vec<f64> {
    (1..=components.len()).map(|k| top_k_mean(components, k).expect("k in range")).collect()
}

/// `sum_i rho_i c_i` with `rho_i = I(x, z_i) / sum_j I(x, z_j)`.
pub fn informativeness_weighted(components: &[f64], informativeness: &[f64]) -> Result<f64> {
    if components.len() != informativeness.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} components but {} weights",
            components.len(),
            informativeness.len()
        )));
    }
    let total: f64 = informativeness.iter().sum();
    if total <= INFORMATIVE_EPS {
        return Err(Error::AllLatentsUninformative(total));
    }
    Ok(components.iter().zip(informativeness).map(|(c, w)| c * w / total).sum())
}

pub fn wsepin(ps: &PosteriorSet, cfg: &EvalConfig) -> Result<f64> {
    let est = separability(ps, cfg)?;
    let sepin: Vec<f64> = est.sepin.iter().map(|e| e.value).collect();
    let info: Vec<f64> = est.informativeness.iter().map(|e| e.value).collect();
    informativeness_weighted(&sepin, &info)
}

pub fn windin(ps: &PosteriorSet, cfg: &EvalConfig) -> Result<f64> {
    let est = separability(ps, cfg)?;
    let indin: Vec<f64> = est.indin.iter().map(|e| e.value).collect();
    let info: Vec<f64> = est.informativeness.iter().map(|e| e.value).collect();
    informativeness_weighted(&indin, &info)
}

// ------------------------------------------------------------ MI matrix

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiMode {
    /// Full posteriors are binned.
    QuantizedFullPosterior,
    /// Each posterior is replaced by a point mass at its mean.
    QuantizedConditionalMean,
}

impl From<MiMode> for PosteriorMode {
    fn from(m: MiMode) -> Self {
        match m {
            MiMode::QuantizedFullPosterior => PosteriorMode::Full,
            MiMode::QuantizedConditionalMean => PosteriorMode::ConditionalMean,
        }
    }
}

/// `I(z_i, y_k)` for every latent and factor, row-major `L x K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiMatrix {
    pub n_latents: usize,
    pub n_factors: usize,
    pub values: Vec<f64>,
    pub mode: MiMode,
}

impl MiMatrix {
    pub fn new(n_latents: usize, n_factors: usize, values: Vec<f64>, mode: MiMode) -> Result<Self> {
        if values.len() != n_latents * n_factors {
            return Err(Error::DimensionMismatch(format!(
                "{n_latents} x {n_factors} matrix with {} entries",
                values.len()
            )));
        }
        Ok(Self { n_latents, n_factors, values, mode })
    }

    pub fn from_tables(tables: &[LatentTables], mode: MiMode) -> Self {
        let n_factors = tables.first().map_or(0, |t| t.factor_joints.len());
        let values = tables.iter().flat_map(|t| t.factor_joints.iter().map(|j| j.mutual_information())).collect();
        Self { n_latents: tables.len(), n_factors, values, mode }
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.n_factors + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_factors..(i + 1) * self.n_factors]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_latents).map(|i| self.get(i, k)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_latents).map(|i| self.row(i).to_vec()).collect()
    }
}

pub fn mi_matrix(ps: &PosteriorSet, ft: &FactorTable, cfg: &EvalConfig, mode: MiMode) -> Result<MiMatrix> {
    check_same_samples(ps, ft)?;
    let tables = all_latent_tables(ps, Some(ft), cfg, mode.into())?;
    Ok(MiMatrix::from_tables(&tables, mode))
}

// ---------------------------------------------------- RMIG and JEMMIG

/// Entries within this many nats of the maximum count as tied. Rounding in
/// `H(z) + H(y) - H(z, y)` leaves independent pairs at about `1e-16`, which
/// must not decide which latent is selected.
pub const MI_TIE_EPS: f64 = 1e-12;

/// Factor entropies below this are treated as zero when normalizing RMIG.
pub const ZERO_ENTROPY_EPS: f64 = 1e-12;

/// Index of the largest and second-largest entries. Ties, up to
/// [`MI_TIE_EPS`], go to the lower index.
pub fn top_two(column: &[f64]) -> Result<(usize, usize)> {
    if column.len() < 2 {
        return Err(Error::SingleLatent);
    }
    let best = |skip: Option<usize>| {
        let candidates = || column.iter().enumerate().filter(|&(i, _)| Some(i) != skip);
        let max = candidates().map(|(_, &v)| v).fold(f64::NEG_INFINITY, f64::max);
        candidates().find(|&(_, &v)| v >= max - MI_TIE_EPS).map(|(i, _)| i).expect("at least two entries")
    };
    let i_star = best(None);
    Ok((i_star, best(Some(i_star))))
}

/// Per-factor interpretability quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorInterpretability {
    pub factor: usize,
    /// Latent with the highest `I(z_i, y_k)`.
    pub i_star: usize,
    /// Latent with the second highest `I(z_i, y_k)`.
    pub j_circ: usize,
    pub mi_i_star: f64,
    pub mi_j_circ: f64,
    /// `H(y_k)`.
    pub factor_entropy: f64,
    /// `H_q(z_{i*})`.
    pub latent_entropy: f64,
    /// `H(z_{i*}, y_k)`.
    pub joint_entropy: f64,
    /// `H(z_{i*}, y_k) - I(z_{i*}, y_k)`: distance from `I = H(z, y)`.
    pub joint_gap: f64,
    /// `H_q(z_{i*}) - I(z_{i*}, y_k)`.
    pub latent_gap: f64,
    /// `H(y_k) - I(z_{i*}, y_k)`.
    pub factor_gap: f64,
    pub rmig: Scored,
    pub jemmig: Scored,
    pub flags: Vec<String>,
}

/// Builds RMIG, JEMMIG and the gap quantities of factor `k` from tables
/// that carry factor joints.
pub fn factor_interpretability(tables: &[LatentTables], k: usize, log_bins: f64) -> Result<FactorInterpretability> {
    let column: Vec<f64> = tables
        .iter()
        .map(|t| t.factor_joints.get(k).map(|j| j.mutual_information()))
        .collect::<Option<_>>()
        .ok_or(Error::IndexOutOfRange { what: "factor", index: k, limit: tables[0].factor_joints.len() })?;
    let (i_star, j_circ) = top_two(&column)?;
    let joint = &tables[i_star].factor_joints[k];
    let h_y = joint.col_marginal().entropy();
    let h_z = joint.row_marginal().entropy();
    let h_zy = joint.entropy();
    let (top, second) = (column[i_star], column[j_circ]);
    let mut flags = Vec::new();
    let rmig_raw = top - second;
    let rmig_norm = if h_y > ZERO_ENTROPY_EPS {
        rmig_raw / h_y
    } else {
        flags.push("zero factor entropy: normalized rmig set to 0".to_string());
        0.0
    };
    let jem_raw = (h_zy - top + second).max(0.0);
    let jem_norm = ((h_z + h_y - 2.0 * top + second) / (log_bins + h_y)).clamp(0.0, 1.0);
    Ok(FactorInterpretability {
        factor: k,
        i_star,
        j_circ,
        mi_i_star: top,
        mi_j_circ: second,
        factor_entropy: h_y,
        latent_entropy: h_z,
        joint_entropy: h_zy,
        joint_gap: h_zy - top,
        latent_gap: h_z - top,
        factor_gap: h_y - top,
        rmig: Scored { raw: rmig_raw, normalized: rmig_norm },
        jemmig: Scored { raw: jem_raw, normalized: jem_norm },
        flags,
    })
}

fn factor_tables(ps: &PosteriorSet, ft: &FactorTable, k: usize, cfg: &EvalConfig) -> Result<Vec<LatentTables>> {
    check_same_samples(ps, ft)?;
    ft.check_factor(k)?;
    if ps.n_latents() < 2 {
        return Err(Error::SingleLatent);
    }
    all_latent_tables(ps, Some(ft), cfg, PosteriorMode::Full)
}

/// `RMIG(y_k) = I(z_{i*}, y_k) - I(z_{j°}, y_k)`, normalized by `H(y_k)`.
pub fn rmig(ps: &PosteriorSet, ft: &FactorTable, k: usize, cfg: &EvalConfig) -> Result<Scored> {
    let tables = factor_tables(ps, ft, k, cfg)?;
    Ok(factor_interpretability(&tables, k, cfg.grid.log_bins())?.rmig)
}

/// `JEMMIG(y_k) = H(z_{i*}, y_k) - I(z_{i*}, y_k) + I(z_{j°}, y_k)`,
/// normalized by `log B + H(y_k)`.
pub fn jemmig(ps: &PosteriorSet, ft: &FactorTable, k: usize, cfg: &EvalConfig) -> Result<Scored> {
    let tables = factor_tables(ps, ft, k, cfg)?;
    Ok(factor_interpretability(&tables, k, cfg.grid.log_bins())?.jemmig)
}

/// Unweighted mean over factors.
pub fn aggregate(per_factor: &[f64]) -> Result<f64> {
    if per_factor.is_empty() {
        return Err(Error::EmptyFactors);
    }
    Ok(per_factor.iter().sum::<f64>() / per_factor.len() as f64)
}

/// Empirical `H(y_k)` for every factor.
pub fn factor_entropies(ft: &FactorTable) -> Vec<f64> {
    (0..ft.n_factors()).map(|k| empirical_factor_entropy(ft, k).expect("factor in range")).collect()
}

// ------------------------------------------------------------ modularity

/// `M_i = 1 - sum_{k != k*} I(z_i, y_k)^2 / (I(z_i, y_{k*})^2 (K - 1))`.
/// Rows without information are `None`.
pub fn modularity(mi: &MiMatrix) -> Result<Vec<Option<f64>>> {
    match mi.n_factors {
        0 => return Err(Error::EmptyFactors),
        1 => return Err(Error::SingleFactor),
        _ => {}
    }
    Ok((0..mi.n_latents)
        .map(|i| {
            let row = mi.row(i);
            let (k_star, &top) =
                row.iter().enumerate().fold((0, &row[0]), |best, (k, v)| if *v > *best.1 { (k, v) } else { best });
            if top <= ZERO_ROW_EPS {
                return None;
            }
            let dev: f64 = row.iter().enumerate().filter(|&(k, _)| k != k_star).map(|(_, v)| v * v).sum();
            Some(1.0 - dev / (top * top * (mi.n_factors - 1) as f64))
        })
        .collect())
}

/// Mean of the defined entries, `None` when there are none.
pub fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

// ----------------------------------------------------------- correlation

/// Pearson correlation matrices of one posterior draw per sample and of the
/// conditional means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrices {
    pub sampled: Vec<Vec<f64>>,
    pub conditional_means: Vec<Vec<f64>>,
    /// Latents whose sampled column has zero variance.
    pub zero_variance_sampled: Vec<usize>,
    /// Latents whose conditional means are constant.
    pub zero_variance_means: Vec<usize>,
}

/// Pearson correlation of the columns of an `N x L` row-major matrix.
/// Constant columns correlate as 0 with everything but themselves.
pub fn pearson_matrix(values: &[f64], n: usize, l: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let column = |i: usize| (0..n).map(move |r| values[r * l + i]);
    let means: Vec<f64> = (0..l).map(|i| column(i).collect::<ExactSum>().value() / n as f64).collect();
    let centered: Vec<Vec<f64>> = (0..l).map(|i| column(i).map(|v| v - means[i]).collect()).collect();
    let norms: Vec<f64> =
        centered.iter().map(|c| c.iter().map(|v| v * v).collect::<ExactSum>().value().sqrt()).collect();
    let zero: Vec<usize> = (0..l).filter(|&i| norms[i] == 0.0).collect();
    let mut out = vec![vec![0.0; l]; l];
    for i in 0..l {
        out[i][i] = 1.0;
        for j in i + 1..l {
            let r = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: ExactSum = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).collect();
                (dot.value() / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            out[i][j] = r;
            out[j][i] = r;
        }
    }
    (out, zero)
}

pub fn correlation_matrices(ps: &PosteriorSet, cfg: &EvalConfig) -> Result<CorrelationMatrices> {
    let (n, l) = (ps.n_samples(), ps.n_latents());
    if l < 2 {
        return Err(Error::SingleLatent);
    }
    // A separate stream keeps these draws independent of the Monte Carlo ones.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(1);
    let draws: Vec<f64> = (0..n * l)
        .map(|idx| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            ps.means()[idx] + ps.stds()[idx] * eps
        })
        .collect();
    let (sampled, zero_variance_sampled) = pearson_matrix(&draws, n, l);
    let (conditional_means, zero_variance_means) = pearson_matrix(ps.means(), n, l);
    Ok(CorrelationMatrices { sampled, conditional_means, zero_variance_sampled, zero_variance_means })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::{bin_posterior, Pmf};

    fn cfg(b: usize) -> EvalConfig {
        EvalConfig::default().with_grid(QuantizationGrid::new(-4.0, 4.0, b).unwrap())
    }

    #[test]
    fn misjed_of_two_noise_latents() {
        let ps = PosteriorSet::new(6, 2, vec![0.0; 12], vec![1.0; 12]).unwrap();
        let c = cfg(100);
        // Oracle: entropy of the binned N(0,1), computed directly.
        let h = Pmf::new(bin_posterior(0.0, 1.0, &c.grid, c.bin_method).unwrap().probs().to_vec()).unwrap().entropy();
        let s = misjed(&ps, 0, 1, &c).unwrap();
        assert!((s.raw - 2.0 * h).abs() < 1e-9);
        assert!((s.normalized - 2.0 * h / (2.0 * 100f64.ln())).abs() < 1e-9);
        assert!(matches!(misjed(&ps, 1, 1, &c), Err(Error::SameLatent(1))));
    }

    #[test]
    fn misjed_of_independent_sharp_pair_is_small() {
        let c = cfg(100);
        // Means on bin centers so that H(z) = H(z̄).
        let snap = |x: f64| c.grid.center(c.grid.bin_index(x));
        let mut rows = Vec::new();
        for a in [-1.5, 0.5] {
            for b in [-0.5, 1.5] {
                rows.push(vec![(snap(a), 1e-3), (snap(b), 1e-3)]);
            }
        }
        let ps = PosteriorSet::from_rows(&rows).unwrap();
        assert!(misjed(&ps, 0, 1, &c).unwrap().raw < 1e-6);
        let m = misjed_matrix(&ps, &c).unwrap();
        assert_eq!(m.raw[0][0], None);
        assert_eq!(m.raw[0][1], m.raw[1][0]);
    }

    #[test]
    fn top_k_examples() {
        let c = [3.0, 1.0, 0.0, 0.0];
        assert_eq!(top_k_mean(&c, 2).unwrap(), 2.0);
        assert_eq!(top_k_mean(&c, 1).unwrap(), 3.0);
        assert_eq!(top_k_mean(&c, 4).unwrap(), 1.0);
        assert!(matches!(top_k_mean(&c, 0), Err(Error::KOutOfRange { k: 0, max: 4 })));
        assert!(matches!(top_k_mean(&c, 5), Err(Error::KOutOfRange { .. })));
        assert_eq!(at_every_k(&c), vec![3.0, 2.0, 4.0 / 3.0, 1.0]);
        assert_eq!(indin_at_k(&[-1.0, 2.0], 1).unwrap(), 2.0);
    }

    #[test]
    fn weighting_examples() {
        assert!((informativeness_weighted(&[0.4, 0.2], &[1.0, 1.0]).unwrap() - 0.3).abs() < 1e-15);
        assert!((informativeness_weighted(&[0.4, 0.0], &[2.0, 0.0]).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(informativeness_weighted(&[0.4], &[0.0]), Err(Error::AllLatentsUninformative(_))));
        let noise = PosteriorSet::new(5, 2, vec![0.0; 10], vec![1.0; 10]).unwrap();
        let c = EvalConfig::default().with_samples(500);
        assert!(matches!(wsepin(&noise, &c), Err(Error::AllLatentsUninformative(_))));
        assert!(matches!(windin(&noise, &c), Err(Error::AllLatentsUninformative(_))));
    }

    #[test]
    fn windin_against_wsepin() {
        use crate::oracle::{exact_metrics, preset_world, Preset};
        let c = EvalConfig::default().with_samples(5000);
        // Factorized codes: I(z_i, z_{-i}) = 0, so the two aggregates agree.
        let perfect = preset_world(Preset::Perfect, 0);
        let exact = exact_metrics(&perfect, &c.grid).unwrap().report;
        let (ws, wi) = (*exact.wsepin.computed().unwrap(), *exact.windin.computed().unwrap());
        assert!((ws - wi).abs() < 1e-9, "{ws} vs {wi}");
        let ps = perfect.posteriors().unwrap();
        assert!((wsepin(&ps, &c).unwrap() - windin(&ps, &c).unwrap()).abs() < 0.02);
        // A duplicated latent shares its information with its twin. SEPIN
        // and INDIN coincide before clamping, so WINDIN can only fall below.
        let dup = preset_world(Preset::RedundantPair, 0).posteriors().unwrap();
        let (ws, wi) = (wsepin(&dup, &c).unwrap(), windin(&dup, &c).unwrap());
        assert!(wi <= ws + 1e-12, "{wi} > {ws}");
        let sep = crate::sampler::separability(&dup, &c).unwrap();
        assert!(sep.sepin[0].value < 0.05 && sep.sepin[1].value < 0.05);
    }

    fn code_world() -> (PosteriorSet, FactorTable) {
        // z0 codes y0 exactly, z1 is noise, z2 is a jittered noise mean.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for n in 0..12 {
            let y = n % 3;
            let jitter = if n % 2 == 0 { 0.3 } else { -0.3 };
            rows.push(vec![(-2.0 + 2.0 * y as f64 + 0.04, 1e-3), (0.0, 1.0), (jitter, 1.0)]);
            labels.push(vec![y, n % 2]);
        }
        (PosteriorSet::from_rows(&rows).unwrap(), FactorTable::from_rows(&labels, None).unwrap())
    }

    #[test]
    fn mi_matrix_examples() {
        let (ps, ft) = code_world();
        let c = cfg(100);
        let full = mi_matrix(&ps, &ft, &c, MiMode::QuantizedFullPosterior).unwrap();
        assert!((full.get(0, 0) - 3f64.ln()).abs() < 1e-9);
        assert!(full.get(0, 1) < 1e-9);
        assert!(full.row(1).iter().all(|&v| v < 1e-9));
        let cm = mi_matrix(&ps, &ft, &c, MiMode::QuantizedConditionalMean).unwrap();
        assert!((cm.get(2, 1) - 2f64.ln()).abs() < 1e-9);
        assert!(cm.get(2, 1) > full.get(2, 1) + 0.1);
    }

    #[test]
    fn rmig_and_jemmig_examples() {
        let (ps, ft) = code_world();
        let c = cfg(100);
        let r = rmig(&ps, &ft, 0, &c).unwrap();
        assert!((r.normalized - 1.0).abs() < 1e-9);
        let j = jemmig(&ps, &ft, 0, &c).unwrap();
        assert!(j.raw.abs() < 1e-9);
        assert!(j.normalized.abs() < 1e-9);

        let tables = all_latent_tables(&ps, Some(&ft), &c, PosteriorMode::Full).unwrap();
        let f = factor_interpretability(&tables, 0, c.grid.log_bins()).unwrap();
        assert_eq!(f.i_star, 0);
        assert!((f.joint_entropy - 3f64.ln()).abs() < 1e-9);

        // Duplicated code: the gap vanishes.
        let dup = ps.concat_latents(&ps.select_latents(&[0]).unwrap()).unwrap();
        assert!(rmig(&dup, &ft, 0, &c).unwrap().raw.abs() < 1e-12);

        let noise = PosteriorSet::new(12, 2, vec![0.0; 24], vec![1.0; 24]).unwrap();
        let j = jemmig(&noise, &ft, 0, &c).unwrap();
        let h_noise = bin_posterior(0.0, 1.0, &c.grid, c.bin_method).unwrap().entropy();
        assert!((j.raw - (h_noise + 3f64.ln())).abs() < 1e-9);
        assert!(rmig(&noise, &ft, 0, &c).unwrap().raw.abs() < 1e-12);
    }

    #[test]
    fn zero_entropy_factor_is_flagged() {
        let ps = PosteriorSet::new(4, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8], vec![0.5; 8]).unwrap();
        let ft = FactorTable::new(4, 1, vec![0; 4], None).unwrap();
        let tables = all_latent_tables(&ps, Some(&ft), &cfg(20), PosteriorMode::Full).unwrap();
        let f = factor_interpretability(&tables, 0, 20f64.ln()).unwrap();
        assert_eq!(f.rmig.normalized, 0.0);
        assert_eq!(f.flags.len(), 1);
    }

    #[test]
    fn top_two_ties_go_to_lower_index() {
        assert_eq!(top_two(&[0.5, 0.5, 0.1]).unwrap(), (0, 1));
        assert_eq!(top_two(&[0.1, 0.7, 0.7, 0.7]).unwrap(), (1, 2));
        assert!(matches!(top_two(&[1.0]), Err(Error::SingleLatent)));
    }

    #[test]
    fn aggregate_examples() {
        assert!((aggregate(&[0.2, 0.4]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(aggregate(&[0.7]).unwrap(), 0.7);
        assert!(matches!(aggregate(&[]), Err(Error::EmptyFactors)));
    }

    #[test]
    fn modularity_examples() {
        let one_hot = MiMatrix::new(1, 3, vec![0.0, 0.8, 0.0], MiMode::QuantizedFullPosterior).unwrap();
        assert_eq!(modularity(&one_hot).unwrap(), vec![Some(1.0)]);
        let flat = MiMatrix::new(2, 3, vec![0.5, 0.5, 0.5, 0.0, 0.0, 0.0], MiMode::QuantizedFullPosterior).unwrap();
        let m = modularity(&flat).unwrap();
        assert!(m[0].unwrap().abs() < 1e-15);
        assert_eq!(m[1], None);
        assert_eq!(mean_defined(&m), Some(m[0].unwrap()));
        let single = MiMatrix::new(2, 1, vec![0.3, 0.1], MiMode::QuantizedFullPosterior).unwrap();
        assert!(matches!(modularity(&single), Err(Error::SingleFactor)));
    }

    #[test]
    fn correlation_examples() {
        let rows: Vec<Vec<(f64, f64)>> =
            (0..20).map(|n| vec![(n as f64 * 0.1, 1e-9), (n as f64 * 0.1, 1e-9)]).collect();
        let ps = PosteriorSet::from_rows(&rows).unwrap();
        let c = correlation_matrices(&ps, &EvalConfig::default()).unwrap();
        assert!((c.sampled[0][1] - 1.0).abs() < 1e-6);
        assert!((c.conditional_means[0][1] - 1.0).abs() < 1e-12);

        let n = 2000;
        let noise = PosteriorSet::new(n, 3, vec![0.0; 3 * n], vec![1.0; 3 * n]).unwrap();
        let c = correlation_matrices(&noise, &EvalConfig::default()).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        for i in 0..3 {
            assert_eq!(c.sampled[i][i], 1.0);
            for j in 0..3 {
                if i != j {
                    assert!(c.sampled[i][j].abs() < bound);
                }
            }
        }
        assert_eq!(c.zero_variance_means, vec![0, 1, 2]);
        assert_eq!(c.conditional_means[0][1], 0.0);
    }

    #[test]
    fn noisy_posteriors_hide_mean_correlation() {
        let n = 500;
        let rows: Vec<Vec<(f64, f64)>> = (0..n)
            .map(|k| {
                let t = (k as f64 / n as f64 - 0.5) * 0.4;
                vec![(t, 1.0), (t + 0.01 * ((k % 7) as f64 - 3.0), 1.0)]
            })
            .collect();
        let ps = PosteriorSet::from_rows(&rows).unwrap();
        let c = correlation_matrices(&ps, &EvalConfig::default()).unwrap();
        assert!(c.sampled[0][1].abs() < c.conditional_means[0][1].abs());
    }
}
