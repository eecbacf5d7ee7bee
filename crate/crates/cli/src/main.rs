//! `dismetrics`: evaluate disentanglement metrics on Gaussian posteriors.
//!
//! Exit codes: 0 success, 1 oracle tolerance breach, 2 input error,
//! 3 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dismetrics::io::{
    load_factors_with, load_posteriors, load_soft_labels, save_posteriors, write_factors_csv, FactorLoadOptions,
    PosteriorFormat, DEFAULT_FACTOR_BINS,
};
use dismetrics::oracle::{oracle_check, preset_world, Dataset, Preset};
use dismetrics::report::{
    all_metrics, evaluate, parse_metric_list, write_manifest, write_report, RunManifest, Timings,
};
use dismetrics::{BinMethod, Error, EvalConfig, QuantizationGrid};

#[derive(Debug, Parser)]
#[command(name = "dismetrics", version, about = "Information-theoretic disentanglement metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate metrics on a posterior file and optional factor labels.
    Evaluate(EvaluateArgs),
    /// Write a synthetic world's posteriors and factors.
    Synth(SynthArgs),
    /// Compare library metrics with exact enumeration on a synthetic world.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Number of quantization bins.
    #[arg(long, default_value_t = 100)]
    bins: usize,
    /// Quantization range.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    range: Option<Vec<f64>>,
    /// Monte Carlo samples for the sampled estimators.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Posterior file (.csv, anything else is read as binary).
    #[arg(long)]
    posteriors: PathBuf,
    /// Factor label CSV.
    #[arg(long)]
    factors: Option<PathBuf>,
    /// Soft labels for a factor, as K=PATH; may be repeated.
    #[arg(long = "soft-labels", value_name = "K=PATH")]
    soft_labels: Vec<String>,
    /// Factor columns holding continuous values.
    #[arg(long = "continuous-factors", value_delimiter = ',')]
    continuous_factors: Vec<usize>,
    /// Bins for continuous factors.
    #[arg(long = "factor-bins", default_value_t = DEFAULT_FACTOR_BINS)]
    factor_bins: usize,
    #[command(flatten)]
    grid: GridArgs,
    /// rectangle, erf or erf-approx.
    #[arg(long = "bin-method", default_value = "erf")]
    bin_method: String,
    /// Comma-separated metric groups (default: all available).
    #[arg(long)]
    metrics: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// perfect, redundant-pair, noise-only, entangled or mixed.
    #[arg(long)]
    preset: String,
    /// Seed for IID row draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw N rows IID instead of the full factor grid.
    #[arg(long, value_name = "N")]
    iid: Option<usize>,
    /// Posterior file format: bin or csv.
    #[arg(long, default_value = "bin")]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    preset: String,
    #[command(flatten)]
    grid: GridArgs,
    /// Number of seeds the sampled metrics are averaged over.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Quantization range used by the library only.
    #[arg(long = "library-range", num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    library_range: Option<Vec<f64>>,
    /// Override the preset's factor cardinalities.
    #[arg(long, value_delimiter = ',')]
    cards: Option<Vec<usize>>,
}

fn grid_from(bins: usize, range: Option<&[f64]>) -> Result<QuantizationGrid, Error> {
    let (lo, hi) = match range {
        Some([lo, hi]) => (*lo, *hi),
        _ => (-4.0, 4.0),
    };
    QuantizationGrid::new(lo, hi, bins)
}

fn config_from(g: &GridArgs, bin_method: BinMethod) -> Result<EvalConfig, Error> {
    let cfg = EvalConfig {
        grid: grid_from(g.bins, g.range.as_deref())?,
        n_mc_samples: g.samples,
        rng_seed: g.seed,
        bin_method,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("DISMETRICS_THREADS") else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::InvalidConfig(format!("DISMETRICS_THREADS must be a positive integer, got {raw:?}"))
        })?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn parse_soft_label(arg: &str) -> Result<(usize, PathBuf), Error> {
    let (k, path) = arg
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("--soft-labels expects K=PATH, got {arg:?}")))?;
    let k =
        k.trim().parse().map_err(|_| Error::InvalidConfig(format!("bad factor index in --soft-labels {arg:?}")))?;
    Ok((k, PathBuf::from(path)))
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<ExitCode, Error> {
    let bin_method: BinMethod = args.bin_method.parse()?;
    let cfg = config_from(&args.grid, bin_method)?;
    let metrics = match &args.metrics {
        Some(list) => parse_metric_list(list)?,
        None => all_metrics(),
    };
    let soft: Vec<(usize, PathBuf)> = args.soft_labels.iter().map(|s| parse_soft_label(s)).collect::<Result<_, _>>()?;
    if args.factors.is_none() && (!soft.is_empty() || !args.continuous_factors.is_empty()) {
        return Err(Error::InvalidConfig("--soft-labels and --continuous-factors need --factors".into()));
    }

    let start = Instant::now();
    let ps = load_posteriors(&args.posteriors, PosteriorFormat::from_path(&args.posteriors))?;
    let factors = match &args.factors {
        Some(path) => {
            let opts =
                FactorLoadOptions { continuous: args.continuous_factors.clone(), factor_bins: Some(args.factor_bins) };
            let mut ft = load_factors_with(path, &opts)?;
            for (k, p) in &soft {
                ft.check_factor(*k)?;
                let (c, probs) = load_soft_labels(p)?;
                ft = ft.with_soft_labels(*k, c, probs)?;
            }
            Some(ft)
        }
        None => None,
    };
    let load_ms = ms(start);

    let start = Instant::now();
    let report = evaluate(&ps, factors.as_ref(), &cfg, &metrics)?;
    let evaluate_ms = ms(start);

    let start = Instant::now();
    let outputs = write_report(&args.out, &report)?;
    let write_ms = ms(start);
    let manifest = RunManifest {
        tool: "dismetrics".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        posteriors: args.posteriors.clone(),
        factors: args.factors.clone(),
        soft_labels: soft,
        continuous_factors: args.continuous_factors.clone(),
        factor_bins: args.factor_bins,
        config: cfg,
        metrics: metrics.into_iter().collect(),
        output_dir: args.out.clone(),
        outputs: outputs.clone(),
        timings: Timings { load_ms, evaluate_ms, write_ms },
    };
    write_manifest(&args.out, &manifest)?;
    for name in outputs {
        println!("{}", args.out.join(name).display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(args: &SynthArgs) -> Result<ExitCode, Error> {
    let preset: Preset = args.preset.parse()?;
    let format = match args.format.as_str() {
        "bin" => PosteriorFormat::Binary,
        "csv" => PosteriorFormat::Csv,
        other => return Err(Error::InvalidConfig(format!("unknown posterior format {other:?} (expected bin or csv)"))),
    };
    let mut world = preset_world(preset, args.seed);
    if let Some(n) = args.iid {
        world = world.with_dataset(Dataset::Iid(n));
    }
    let ps = world.posteriors()?;
    let ft = world.factors()?;
    std::fs::create_dir_all(&args.out)?;
    let posteriors = args.out.join(match format {
        PosteriorFormat::Binary => "posteriors.bin",
        PosteriorFormat::Csv => "posteriors.csv",
    });
    save_posteriors(&posteriors, &ps, format)?;
    let factors = args.out.join("factors.csv");
    write_factors_csv(&factors, &ft)?;
    println!("{}", posteriors.display());
    println!("{}", factors.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle_check(args: &OracleArgs) -> Result<ExitCode, Error> {
    let preset: Preset = args.preset.parse()?;
    let cfg = config_from(&args.grid, BinMethod::Erf)?;
    let oracle_grid = cfg.grid;
    let library_cfg = match &args.library_range {
        Some(r) => cfg.with_grid(grid_from(args.grid.bins, Some(r))?),
        None => cfg,
    };
    let mut world = preset_world(preset, args.grid.seed);
    if let Some(cards) = &args.cards {
        if cards.len() != world.cardinalities.len() {
            return Err(Error::InvalidConfig(format!(
                "preset {preset} has {} factors, --cards gives {}",
                world.cardinalities.len(),
                cards.len()
            )));
        }
        world.cardinalities = cards.clone();
    }
    if args.seeds == 0 {
        return Err(Error::InvalidConfig("--seeds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..args.seeds).map(|s| args.grid.seed + s).collect();
    let check = oracle_check(&world, &library_cfg, &oracle_grid, &seeds)?;

    println!("{:<28} {:>12} {:>10}  {:<6} worst key", "section", "max |dev|", "tolerance", "status");
    for d in &check.deviations {
        let status = if d.passed() { "ok" } else { "FAIL" };
        println!("{:<28} {:>12.3e} {:>10} {:<6} {}", d.section, d.max_abs, d.tolerance, status, d.worst_key);
        for key in &d.mismatched {
            println!("{:<28} present in only one report: {key}", "");
        }
    }
    println!("max deviation {:.3e}", check.max_deviation());
    Ok(if check.passed() {
        println!("oracle check passed");
        ExitCode::SUCCESS
    } else {
        println!("oracle check FAILED");
        ExitCode::from(1)
    })
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    configure_threads()?;
    match &cli.command {
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::OracleCheck(a) => cmd_oracle_check(a),
    }
}

fn exit_code(e: &Error) -> ExitCode {
    ExitCode::from(if e.is_config_error() { 3 } else { 2 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("dismetrics: {e}");
            exit_code(&e)
        }
    }
}
