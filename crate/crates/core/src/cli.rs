//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad flags or configuration, 3 data or file
//! errors, 4 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{read_labels_csv, read_points_csv, write_labels_csv, write_points_csv};
use crate::error::{Error, Result};
use crate::eval::{
    eval_split, gen_gmm, gen_split_pair, run_benchmark, write_trace_csv, BenchSuite, Difficulty, GmmSpec,
    TraceRecorder,
};
use crate::init::SplitInitializer;
use crate::niw::NiwParams;
use crate::sampler::{fit_with, SamplerConfig};
use crate::st::load_weights;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "subsplit", version, about = "DPGMM split/merge sampler with pluggable split initializers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a DPGMM to a CSV of points.
    Fit(FitArgs),
    /// Generate a synthetic Gaussian mixture.
    Gen(GenArgs),
    /// Compare split initializers on generated two-component pairs.
    EvalSplit(EvalSplitArgs),
    /// Run a benchmark suite described by a TOML file.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Random,
    Kmeans,
    Splitnet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DifficultyArg {
    Easy,
    Medium,
    Hard,
}

impl From<DifficultyArg> for Difficulty {
    fn from(d: DifficultyArg) -> Self {
        match d {
            DifficultyArg::Easy => Difficulty::Easy,
            DifficultyArg::Medium => Difficulty::Medium,
            DifficultyArg::Hard => Difficulty::Hard,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Headerless CSV, one point per row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Prior κ (default 1).
    #[arg(long)]
    pub prior_kappa: Option<f64>,
    /// Prior degrees of freedom (default D+3).
    #[arg(long)]
    pub prior_nu: Option<f64>,
    /// Multiplies the data-derived prior scale matrix.
    #[arg(long, default_value_t = 1.0)]
    pub prior_psi_scale: f64,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 2)]
    pub split_period: usize,
    /// Disable merge proposals.
    #[arg(long)]
    pub no_merge: bool,
    #[arg(long, value_enum, default_value_t = StrategyArg::Random)]
    pub split_init: StrategyArg,
    #[arg(long)]
    pub splitnet_weights: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub initial_k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub out_labels: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Ground-truth labels; adds NMI, ARI and K error to the trace.
    #[arg(long)]
    pub gt_labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10.0)]
    pub alpha_dir: f64,
    #[arg(long, value_enum, default_value_t = DifficultyArg::Easy)]
    pub difficulty: DifficultyArg,
    /// Overrides the κ of the difficulty preset.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Emit one two-component pair that passes the split filter (uses --n as
    /// the maximum size and ignores --k).
    #[arg(long)]
    pub splittable_pair: bool,
    /// Concentration used by the split filter.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long)]
    pub out_data: PathBuf,
    #[arg(long)]
    pub out_labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalSplitArgs {
    #[arg(long, value_enum, default_value_t = DifficultyArg::Easy)]
    pub difficulty: DifficultyArg,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 50)]
    pub pairs: usize,
    #[arg(long, default_value_t = 200)]
    pub n_max: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [StrategyArg::Random, StrategyArg::Kmeans])]
    pub strategies: Vec<StrategyArg>,
    #[arg(long)]
    pub splitnet_weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// TOML suite file.
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overrides the suite's worker count.
    #[arg(long)]
    pub workers: Option<usize>,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParams(_) | Error::InvalidConfig(_) | Error::UnsplittablePrior { .. } => EXIT_USAGE,
        Error::NumericalFailure(_) | Error::EmptySubcluster | Error::DegenerateCluster => EXIT_NUMERICAL,
        Error::InvalidData(_)
        | Error::DimensionMismatch { .. }
        | Error::BadMagic
        | Error::ShapeMismatch(_)
        | Error::CorruptTensor(_)
        | Error::InvalidWeights(_)
        | Error::Io(_)
        | Error::Csv(_) => EXIT_DATA,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Gen(a) => cmd_gen(&a),
        Command::EvalSplit(a) => cmd_eval_split(&a),
        Command::Bench(a) => cmd_bench(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn strategy(arg: StrategyArg, weights: Option<&Path>) -> Result<SplitInitializer> {
    Ok(match arg {
        StrategyArg::Random => SplitInitializer::Random,
        StrategyArg::Kmeans => SplitInitializer::kmeans(),
        StrategyArg::Splitnet => {
            let path = weights.ok_or_else(|| {
                Error::InvalidConfig("--split-init splitnet requires --splitnet-weights".into())
            })?;
            SplitInitializer::SplitNet(Arc::new(load_weights(path)?))
        }
    })
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    // cheap flag checks before touching any file
    if a.split_init == StrategyArg::Splitnet && a.splitnet_weights.is_none() {
        return Err(Error::InvalidConfig("--split-init splitnet requires --splitnet-weights".into()));
    }
    if !(a.alpha > 0.0 && a.alpha.is_finite()) {
        return Err(Error::InvalidParams(format!("--alpha must be positive, got {}", a.alpha)));
    }
    if a.prior_psi_scale.is_nan() || a.prior_psi_scale <= 0.0 {
        return Err(Error::InvalidParams("--prior-psi-scale must be positive".into()));
    }
    let config = SamplerConfig {
        iters: a.iters,
        split_period: a.split_period,
        merge_enabled: !a.no_merge,
        initial_k: a.initial_k,
        rng_seed: a.seed,
        threads: a.threads,
        strategy: SplitInitializer::Random,
    };
    config.validate()?;

    let data = read_points_csv(&a.data)?;
    let truth = a.gt_labels.as_deref().map(read_labels_csv).transpose()?;
    if let Some(t) = &truth {
        if t.len() != data.n() {
            return Err(Error::InvalidData(format!(
                "{} ground-truth labels for {} points",
                t.len(),
                data.n()
            )));
        }
    }
    let prior = NiwParams::weak_from_data(&data, a.prior_kappa, a.prior_nu, a.prior_psi_scale).map_err(
        |e| match e {
            Error::InvalidParams(m) => Error::InvalidParams(format!("prior: {m}")),
            other => other,
        },
    )?;
    let config = SamplerConfig { strategy: strategy(a.split_init, a.splitnet_weights.as_deref())?, ..config };

    let mut rec = TraceRecorder::new(truth.as_deref());
    let (state, _) = fit_with(&data, a.alpha, prior, config, |row, s| {
        log::debug!("iter {} K={} LP={:.3}", row.iter, row.k, row.log_posterior);
        rec.record(row, s)
    })?;

    if let Some(p) = &a.out_labels {
        write_labels_csv(p, &state.labels)?;
    }
    if let Some(p) = &a.trace {
        write_trace_csv(p, &rec.rows)?;
    }
    match rec.rows.last() {
        Some(last) => println!(
            "K={} log_posterior={:.6}{}",
            last.k_inferred,
            last.log_posterior,
            last.nmi.map(|v| format!(" nmi={v:.4}")).unwrap_or_default()
        ),
        None => println!("K={}", state.k()),
    }
    Ok(())
}

pub fn cmd_gen(a: &GenArgs) -> Result<()> {
    let difficulty = Difficulty::from(a.difficulty);
    let kappa = a.kappa.unwrap_or(difficulty.kappa());
    if kappa.is_nan() || kappa <= 0.0 {
        return Err(Error::InvalidParams("--kappa must be positive".into()));
    }
    let niw = crate::eval::niw_preset(a.d.max(1), kappa);
    let out = if a.splittable_pair {
        if a.d == 0 {
            return Err(Error::InvalidParams("--d must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        gen_split_pair(&niw, a.alpha_dir, a.n, &niw, a.alpha, &mut rng)?
    } else {
        gen_gmm(&GmmSpec { k: a.k, d: a.d, n: a.n, alpha_dir: a.alpha_dir, niw, seed: a.seed })?
    };
    write_points_csv(&a.out_data, &out.points)?;
    if let Some(p) = &a.out_labels {
        write_labels_csv(p, &out.labels)?;
    }
    Ok(())
}

pub fn cmd_eval_split(a: &EvalSplitArgs) -> Result<()> {
    if a.d == 0 || a.pairs == 0 {
        return Err(Error::InvalidParams("--d and --pairs must be at least 1".into()));
    }
    let strategies = a
        .strategies
        .iter()
        .map(|&s| strategy(s, a.splitnet_weights.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let rows = eval_split(a.difficulty.into(), a.d, a.pairs, a.n_max, a.alpha, &strategies, a.seed)?;

    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["pair", "strategy", "n", "accuracy", "log_h"])?;
    for r in &rows {
        w.write_record([
            r.pair.to_string(),
            r.strategy.clone(),
            r.n.to_string(),
            r.accuracy.to_string(),
            r.log_h.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let mut suite = BenchSuite::load(&a.suite).map_err(|e| match e {
        // an unreadable suite file is a usage problem, not a data one
        Error::Io(io) => Error::InvalidConfig(format!("{}: {io}", a.suite.display())),
        other => other,
    })?;
    if let Some(w) = a.workers {
        if w == 0 {
            return Err(Error::InvalidConfig("--workers must be at least 1".into()));
        }
        suite.workers = w;
    }
    let report = run_benchmark(&suite, &a.out_dir)?;
    for row in report.aggregate() {
        println!(
            "{} {}: runs={} failures={} median_nmi={} median_k={}",
            row.dataset,
            row.strategy,
            row.runs,
            row.failures,
            row.median_nmi.map_or("-".into(), |v| format!("{v:.4}")),
            row.median_k.map_or("-".into(), |v| format!("{v}")),
        );
    }
    Ok(())
}
