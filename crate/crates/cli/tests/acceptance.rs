//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; the process fails if any
//! criterion does.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dismetrics::metrics::{mi_matrix, wsepin, MiMode};
use dismetrics::oracle::{
    jittered_world, mixed_world, oracle_check, preset_world, smooth_world, DiscreteWorld, Preset,
};
use dismetrics::quantizer::{informativeness_quantized, marginal_latent_pmf};
use dismetrics::report::{evaluate, parse_metric_list, Metric, MetricReport};
use dismetrics::sampler::{entropy_sampled, mi_x_subset, separability};
use dismetrics::special::erf_approx;
use dismetrics::{EvalConfig, LatentSubset, PosteriorSet, QuantizationGrid};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn cfg(bins: usize, samples: usize, seed: u64) -> EvalConfig {
    EvalConfig::default()
        .with_grid(QuantizationGrid::new(-4.0, 4.0, bins).unwrap())
        .with_samples(samples)
        .with_seed(seed)
}

fn run_world(world: &DiscreteWorld, cfg: &EvalConfig, metrics: &BTreeSet<Metric>) -> MetricReport {
    let ps = world.posteriors().unwrap();
    let ft = world.factors().unwrap();
    evaluate(&ps, Some(&ft), cfg, metrics).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..5).collect();
    let mut lines = Vec::new();
    let mut ok = true;
    for preset in Preset::ALL {
        let world = preset_world(preset, 0);
        let c = cfg(100, 10_000, 0);
        let res = oracle_check(&world, &c, &c.grid, &seeds).map_err(|e| format!("{preset}: {e}"))?;
        ok &= res.passed();
        for d in res.deviations.iter().filter(|d| !d.passed()) {
            lines.push(format!("{preset}/{} {:.3e} > {}", d.section, d.max_abs, d.tolerance));
        }
        lines.push(format!("{preset} max {:.2e}", res.max_deviation()));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    check(ok, format!("{} ({secs:.1} s)", lines.join(", ")))
}

fn criterion_2() -> Outcome {
    let m = parse_metric_list("rmig,jemmig,informativeness").unwrap();
    let perfect = run_world(&preset_world(Preset::Perfect, 0), &cfg(100, 10_000, 0), &m);
    let rmig = perfect.rmig_normalized.computed().ok_or("rmig skipped")?.per_factor.clone();
    let jemmig = perfect.jemmig.computed().ok_or("jemmig skipped")?.per_factor.clone();
    let noise = run_world(&preset_world(Preset::NoiseOnly, 0), &cfg(100, 10_000, 0), &m);
    let info = noise.informativeness.computed().ok_or("informativeness skipped")?.clone();
    let ok = rmig.iter().all(|r| (r - 1.0).abs() <= 0.02)
        && jemmig.iter().all(|j| j.abs() <= 0.02)
        && info.iter().all(|i| i.abs() <= 0.01);
    check(ok, format!("rmig_normalized {rmig:.4?}, jemmig {jemmig:.4?}, noise informativeness {info:.4?}"))
}

fn criterion_3() -> Outcome {
    let world = preset_world(Preset::Mixed, 0);
    let report = run_world(&world, &cfg(100, 10_000, 0), &parse_metric_list("misjed").unwrap());
    let mj = report.misjed.computed().ok_or("misjed skipped")?;
    let n_factor = world.cardinalities.len();
    let l = mj.len();
    let pairs = |a: std::ops::Range<usize>, b: std::ops::Range<usize>| -> Vec<f64> {
        let mut v = Vec::new();
        for i in a.clone() {
            for j in b.clone() {
                if i != j {
                    v.push(mj[i][j].unwrap());
                }
            }
        }
        v
    };
    let ff = pairs(0..n_factor, 0..n_factor);
    let fnz = pairs(0..n_factor, n_factor..l);
    let nn = pairs(n_factor..l, n_factor..l);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let (m1, m2) = (min(&fnz) - max(&ff), min(&nn) - max(&fnz));
    let ok = min(&ff) >= 0.0 && m1 > 0.1 && m2 > 0.1;
    check(
        ok,
        format!(
            "factor-factor <= {:.3}, factor-noise in [{:.3}, {:.3}], noise-noise >= {:.3}; margins {m1:.3}, {m2:.3}",
            max(&ff),
            min(&fnz),
            max(&fnz),
            min(&nn)
        ),
    )
}

/// Largest `(entropy gap, information gap)` over latents at `bins`.
fn gap_law(ps: &PosteriorSet, bins: usize) -> (f64, f64) {
    let c = cfg(bins, 10_000, 0);
    let log_width = c.grid.width().ln();
    let (mut dh, mut di) = (0.0f64, 0.0f64);
    for i in 0..ps.n_latents() {
        let subset = LatentSubset::single(i, ps.n_latents()).unwrap();
        let hq = marginal_latent_pmf(ps, i, &c).unwrap().entropy();
        let hs = entropy_sampled(ps, &subset, &c).unwrap().value;
        let iq = informativeness_quantized(ps, i, &c).unwrap().raw;
        let is = mi_x_subset(ps, &subset, &c).unwrap().value;
        dh = dh.max((hq - (hs - log_width)).abs());
        di = di.max((iq - is).abs());
    }
    (dh, di)
}

fn criterion_4() -> Outcome {
    let ps = smooth_world().posteriors().unwrap();
    let (dh, di) = gap_law(&ps, 100);
    let di_by_b: Vec<f64> = [50, 200, 500].iter().map(|&b| gap_law(&ps, b).1).collect();
    let shrinking = di_by_b.windows(2).all(|w| w[1] <= w[0] + 0.01);
    check(
        dh < 0.02 && di < 0.05 && shrinking,
        format!("B=100: |dH| {dh:.4}, |dI| {di:.4}; |dI| at B=50/200/500 {di_by_b:.4?}"),
    )
}

fn criterion_5() -> Outcome {
    let m = parse_metric_list("jemmig").unwrap();
    let mut worlds: Vec<(String, DiscreteWorld)> =
        Preset::ALL.iter().map(|&p| (p.to_string(), preset_world(p, 0))).collect();
    worlds.push(("smooth".into(), smooth_world()));
    let mut ok = true;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, w) in &worlds {
        for b in [10, 100, 1000] {
            let r = run_world(w, &cfg(b, 1000, 0), &m);
            for &v in &r.jemmig_normalized.computed().ok_or("jemmig skipped")?.per_factor {
                ok &= (0.0..=1.0).contains(&v);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    let smooth = smooth_world();
    let (b1, b2) = (100usize, 1000usize);
    let j1 = run_world(&smooth, &cfg(b1, 1000, 0), &m).jemmig.computed().unwrap().per_factor.clone();
    let j2 = run_world(&smooth, &cfg(b2, 1000, 0), &m).jemmig.computed().unwrap().per_factor.clone();
    let slopes: Vec<f64> = j1.iter().zip(&j2).map(|(a, b)| (b - a) / ((b2 as f64).ln() - (b1 as f64).ln())).collect();
    ok &= slopes.iter().all(|s| (s - 1.0).abs() <= 0.1);
    check(ok, format!("normalized range [{lo:.4}, {hi:.4}]; raw slope per log B on smooth world {slopes:.4?}"))
}

fn criterion_6() -> Outcome {
    let m = parse_metric_list("rmig").unwrap();
    let w = smooth_world();
    let r200 = run_world(&w, &cfg(200, 1000, 0), &m).rmig.computed().unwrap().per_factor.clone();
    let r500 = run_world(&w, &cfg(500, 1000, 0), &m).rmig.computed().unwrap().per_factor.clone();
    let diff: Vec<f64> = r200.iter().zip(&r500).map(|(a, b)| (a - b).abs()).collect();
    check(diff.iter().all(|d| *d < 0.01), format!("RMIG B=200 {r200:.4?}, B=500 {r500:.4?}"))
}

fn criterion_7() -> Outcome {
    let c = cfg(100, 10_000, 0);
    let base = mixed_world(&[4, 4, 4], 2, 0.05);
    let noisy = base.clone().with_noise_latents(5);
    let summary = |w: &DiscreteWorld| -> (f64, f64) {
        let ps = w.posteriors().unwrap();
        let sep = separability(&ps, &c).unwrap();
        let mean = sep.sepin.iter().map(|s| s.value).sum::<f64>() / sep.sepin.len() as f64;
        (wsepin(&ps, &c).unwrap(), mean)
    };
    let (w5, m5) = summary(&base);
    let (w10, m10) = summary(&noisy);
    let ok = (w5 - w10).abs() < 0.05 && (m5 - m10).abs() > 0.2;
    check(ok, format!("WSEPIN {w5:.4} -> {w10:.4}, mean SEPIN {m5:.4} -> {m10:.4}"))
}

/// Maclaurin series of erf; converges to full precision for `|x| <= 4`.
fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= -x * x / n as f64;
        let add = term / (2 * n + 1) as f64;
        sum += add;
        if add.abs() < 1e-18 {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

fn criterion_8() -> Outcome {
    let (worst_x, worst) = (0..=4000)
        .map(|k| {
            let x = k as f64 * 1e-3;
            (x, (erf_approx(x) - erf_series(x)).abs())
        })
        .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    check(worst <= 5e-4, format!("max error {worst:.3e} at x = {worst_x:.3}"))
}

fn criterion_9() -> Outcome {
    let truth = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    let ps = PosteriorSet::new(64, 1, vec![0.0; 64], vec![1.0; 64]).unwrap();
    let all = LatentSubset::all(1).unwrap();
    let runs: Vec<f64> = (0..10).map(|s| entropy_sampled(&ps, &all, &cfg(100, 10_000, s)).unwrap().value).collect();
    let mean = runs.iter().sum::<f64>() / runs.len() as f64;
    let worst = runs.iter().map(|h| (h - 1.4189).abs()).fold(0.0, f64::max);
    check(
        worst <= 0.02 && (mean - truth).abs() <= 0.005,
        format!("worst single-seed |H - 1.4189| {worst:.4}, 10-seed mean {mean:.5} vs {truth:.5}"),
    )
}

fn criterion_10() -> Outcome {
    let (ps, ft) = jittered_world(0).unwrap();
    let c = cfg(100, 10_000, 0);
    let full = mi_matrix(&ps, &ft, &c, MiMode::QuantizedFullPosterior).unwrap();
    let cm = mi_matrix(&ps, &ft, &c, MiMode::QuantizedConditionalMean).unwrap();
    let over = (0..ps.n_latents())
        .flat_map(|i| (0..ft.n_factors()).map(move |k| (i, k)))
        .map(|(i, k)| cm.get(i, k) - full.get(i, k))
        .fold(f64::NEG_INFINITY, f64::max);
    let report = evaluate(&ps, Some(&ft), &c, &parse_metric_list("correlation").unwrap()).unwrap();
    let corr = report.correlation.computed().ok_or("correlation skipped")?;
    let l = ps.n_latents();
    let mut ok_corr = true;
    let (mut max_s, mut min_m) = (0.0f64, f64::INFINITY);
    for i in 0..l {
        for j in 0..l {
            if i != j {
                let (s, m) = (corr.sampled[i][j].abs(), corr.conditional_means[i][j].abs());
                ok_corr &= s < m;
                max_s = max_s.max(s);
                min_m = min_m.min(m);
            }
        }
    }
    check(
        over > 0.1 && ok_corr,
        format!("largest conditional-mean overestimate {over:.4}; off-diagonal |corr| sampled <= {max_s:.3}, means >= {min_m:.3}"),
    )
}

fn dismetrics(args: &[&str], threads: &str) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dismetrics"))
        .args(args)
        .env("DISMETRICS_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn criterion_11() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    dismetrics(&["synth", "--preset", "mixed", "--out", &s(&root.join("world"))], "1")?;
    let posteriors = s(&root.join("world/posteriors.bin"));
    let factors = s(&root.join("world/factors.csv"));
    let mut dirs = Vec::new();
    for threads in ["1", "4", "1"] {
        let out = root.join(format!("run{}", dirs.len()));
        dismetrics(
            &[
                "evaluate",
                "--posteriors",
                &posteriors,
                "--factors",
                &factors,
                "--samples",
                "5000",
                "--seed",
                "7",
                "--out",
                &s(&out),
            ],
            threads,
        )?;
        dirs.push(out);
    }
    let files = ["report.json", "report.csv", "plot_informativeness.csv", "plot_misjed.csv"];
    let mut differing = Vec::new();
    for f in files {
        let first = std::fs::read(dirs[0].join(f)).map_err(|e| e.to_string())?;
        for d in &dirs[1..] {
            if std::fs::read(d.join(f)).map_err(|e| e.to_string())? != first {
                differing.push(f);
            }
        }
    }
    check(
        differing.is_empty(),
        format!(
            "3 runs (1, 4, 1 threads): {}",
            if differing.is_empty() {
                "all outputs byte-identical".to_string()
            } else {
                format!("differ: {differing:?}")
            }
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("oracle equivalence", criterion_1),
        ("perfect and noise-only scores", criterion_2),
        ("MISJED ordering", criterion_3),
        ("quantization gap law", criterion_4),
        ("JEMMIG range and bin slope", criterion_5),
        ("RMIG bin stability", criterion_6),
        ("WSEPIN noise robustness", criterion_7),
        ("erf approximation error", criterion_8),
        ("sampled entropy unbiasedness", criterion_9),
        ("conditional-mean distortion", criterion_10),
        ("determinism across threads", criterion_11),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1} s]", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1} s]", n + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1} s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
