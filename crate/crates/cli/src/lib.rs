//! `dpsc` command-line front end: synthetic data, sampler runs, scoring
//! and cluster-count curves.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpsc_core::baselines::{self, KMeansConfig};
use dpsc_core::data::{self, Dataset, Format, Split, SynthConfig};
use dpsc_core::dp::{self, GammaPrior};
use dpsc_core::gaussian::ConditionalPriorConfig;
use dpsc_core::metrics::{self, MetricReport};
use dpsc_core::sampler::{self, SampleRecord, SamplerConfig, Variant};
use dpsc_core::{Error as CoreError, Partition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Environment variable capping the number of chains run in parallel.
pub const THREADS_ENV: &str = "DPSC_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{}", core_message(.0))]
    Core(#[from] CoreError),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Runtime(String),
}

fn core_message(e: &CoreError) -> String {
    match e {
        CoreError::Domain(m) | CoreError::Config(m) => m.clone(),
        CoreError::Parse { line, message } => format!("line {line}: {message}"),
        CoreError::Io(io) => io.to_string(),
    }
}

impl CliError {
    /// Machine-readable error code printed after `ERROR:`.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Core(CoreError::Config(_)) => "config",
            CliError::Core(CoreError::Parse { .. }) => "parse",
            CliError::Core(CoreError::Domain(_)) => "domain",
            CliError::Core(CoreError::Io(_)) | CliError::Io(_) => "io",
            CliError::Runtime(_) => "runtime",
        }
    }

    /// 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(CoreError::Io(_)) | CliError::Io(_) | CliError::Runtime(_) => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "dpsc", version, about = "Supervised clustering with Dirichlet process mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic Gaussian dataset with disjoint train/test classes.
    Synth(SynthArgs),
    /// Run sampler chains and write the predicted test partition.
    Run(RunArgs),
    /// Score hypothesis partitions against a gold partition.
    Score(ScoreArgs),
    /// Compare DP expected cluster counts with resampled labeled pools.
    Dpfit(DpfitArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    Csv,
    Json,
}

impl From<DataFormat> for Format {
    fn from(f: DataFormat) -> Self {
        match f {
            DataFormat::Csv => Format::Csv,
            DataFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Coarse,
    Fine,
    Kmeans,
    Cdp,
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::Coarse => "coarse",
            Baseline::Fine => "fine",
            Baseline::Kmeans => "kmeans",
            Baseline::Cdp => "cdp",
        })
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub train_classes: usize,
    #[arg(long, default_value_t = 5)]
    pub test_classes: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 30)]
    pub min_size: usize,
    #[arg(long, default_value_t = 300)]
    pub max_size: usize,
    #[arg(long, default_value_t = 5.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to the output file's extension, else CSV.
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
    #[arg(long, default_value = "m1", value_parser = parse_variant)]
    pub variant: Variant,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    /// Defaults to half of `--iters`.
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub share_train_test: bool,
    #[arg(long)]
    pub resample_alpha: bool,
    /// Auxiliary candidates per indicator update (Model 3).
    #[arg(long, default_value_t = 8)]
    pub aux: usize,
    /// Proposals per parameter update (Model 3).
    #[arg(long, default_value_t = 32)]
    pub candidates: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_p: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_t: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_prior_shape: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_prior_scale: f64,
    /// Rate of the Model 3 conditional type prior.
    #[arg(long, default_value_t = 1.0)]
    pub conditional_rate: f64,
    /// Use features as given instead of standardizing with training statistics.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub baseline: Vec<Baseline>,
    #[arg(long, default_value_t = 10)]
    pub kmeans_restarts: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub hyp: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: ReportFormat,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DpfitArgs {
    /// Labeled partition files, one per training pool.
    #[arg(long, required = true, num_args = 1..)]
    pub pool: Vec<PathBuf>,
    /// Sample sizes, comma separated.
    #[arg(long, required = true, value_delimiter = ',')]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 1.0)]
    pub prior_shape: f64,
    #[arg(long, default_value_t = 1.0)]
    pub prior_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: CoreError| e.to_string())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Errors are printed to standard error.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            return report(&CliError::Usage(e.to_string().trim_end().replace('\n', " ")));
        }
    };
    let stdout = io::stdout();
    match execute(&cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> i32 {
    eprintln!("ERROR:{}:{}", e.code(), e);
    e.exit_code()
}

pub fn execute(command: &Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Run(a) => cmd_run(a, out),
        Command::Score(a) => cmd_score(a, out),
        Command::Dpfit(a) => cmd_dpfit(a, out),
    }
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = SynthConfig {
        n_train_classes: args.train_classes,
        n_test_classes: args.test_classes,
        dim: args.dim,
        min_class_size: args.min_size,
        max_class_size: args.max_size,
        separation: args.separation,
        seed: args.seed,
    };
    let ds = data::synth_gaussian(&cfg)?;
    ds.save(&args.out, args.format.map(Into::into))?;
    writeln!(out, "class\tsplit\tsize")?;
    for split in [Split::Train, Split::Test] {
        let gold = ds.gold_partition(split)?;
        let mut rows: Vec<(String, usize)> = Vec::new();
        for block in gold.clusters() {
            let first = &gold.items()[block[0]];
            let label = ds
                .items()
                .iter()
                .find(|i| &i.id == first)
                .and_then(|i| i.label.clone())
                .unwrap_or_default();
            rows.push((label, block.len()));
        }
        rows.sort();
        for (label, size) in rows {
            writeln!(out, "{label}\t{split}\t{size}")?;
        }
    }
    writeln!(out, "total\t-\t{}", ds.len())?;
    Ok(())
}

/// Thread count from `DPSC_THREADS`, if set.
fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Validation(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

fn run_config(args: &RunArgs) -> SamplerConfig {
    SamplerConfig {
        variant: args.variant,
        iterations: args.iters,
        burn_in: args.burn_in.unwrap_or(args.iters / 2),
        aux_samples: args.aux,
        candidate_count: args.candidates,
        share_train_test: args.share_train_test,
        resample_alphas: args.resample_alpha,
        alpha_p: args.alpha_p,
        alpha_t: args.alpha_t,
        alpha_prior_p: GammaPrior {
            shape: args.alpha_prior_shape,
            scale: args.alpha_prior_scale,
        },
        alpha_prior_t: GammaPrior {
            shape: args.alpha_prior_shape,
            scale: args.alpha_prior_scale,
        },
        n_chains: args.chains,
        seed: args.seed,
        conditional_prior: Some(ConditionalPriorConfig {
            rate: args.conditional_rate,
        }),
        ..Default::default()
    }
}

/// All problems with a run request, gathered before any work starts.
fn run_problems(args: &RunArgs, config: &SamplerConfig, ds: &Dataset) -> Vec<String> {
    let mut problems = config.problems();
    let n_train = ds.split(Split::Train).count();
    let test: Vec<_> = ds.split(Split::Test).collect();
    if test.is_empty() {
        problems.push("dataset has no test items to cluster".into());
    }
    if args.resample_alpha && n_train == 0 {
        problems.push("--resample-alpha needs labeled training items".into());
    }
    if !args.no_standardize && n_train < 2 {
        problems.push(format!(
            "standardization needs at least 2 training items, got {n_train} (pass --no-standardize)"
        ));
    }
    if args.baseline.contains(&Baseline::Kmeans) {
        if test.iter().any(|i| i.label.is_none()) {
            problems.push("the kmeans baseline takes k from gold test labels, but some test items are unlabeled".into());
        }
        if args.kmeans_restarts == 0 {
            problems.push("--kmeans-restarts must be at least 1".into());
        }
    }
    problems
}

fn run_chains(ds: &Dataset, config: &SamplerConfig, threads: Option<usize>) -> CliResult<Vec<Vec<SampleRecord>>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker threads: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        (0..config.n_chains)
            .into_par_iter()
            .map(|c| sampler::run_chain(ds, config, c))
            .collect()
    });
    Ok(results.into_iter().collect::<Result<Vec<_>, _>>()?)
}

#[derive(Serialize)]
struct ChainLogRow {
    chain: usize,
    iteration: usize,
    joint_log_score: f64,
    n_publications: usize,
    n_types: usize,
    n_test_clusters: usize,
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> CliResult<()> {
    let threads = thread_cap()?;
    let raw = Dataset::load(&args.dataset, args.format.map(Into::into)).map_err(|e| in_file(&args.dataset, e))?;
    let config = run_config(args);
    let problems = run_problems(args, &config, &raw);
    if !problems.is_empty() {
        return Err(CliError::Validation(problems.join("; ")));
    }
    let ds = if args.no_standardize {
        raw
    } else {
        data::standardize(&raw)?.0
    };
    fs::create_dir_all(&args.out_dir)?;

    let chains = run_chains(&ds, &config, threads)?;
    let records: Vec<SampleRecord> = chains.into_iter().flatten().collect();
    let prediction = sampler::extract_prediction(&records)?;
    prediction.save(args.out_dir.join("prediction.tsv"))?;

    let mut log = csv::Writer::from_path(args.out_dir.join("chain_log.csv")).map_err(csv_err)?;
    for r in &records {
        log.serialize(ChainLogRow {
            chain: r.chain,
            iteration: r.iteration,
            joint_log_score: r.joint_log_score,
            n_publications: r.n_publications,
            n_types: r.n_types,
            n_test_clusters: r.test_partition.n_clusters(),
        })
        .map_err(csv_err)?;
    }
    log.flush()?;

    let test_ids: Vec<String> = ds.split(Split::Test).map(|i| i.id.clone()).collect();
    let gold = ds.gold_partition(Split::Test).ok();
    if let Some(g) = &gold {
        g.save(args.out_dir.join("gold_test.tsv"))?;
    }

    let mut outputs: Vec<(String, Partition)> = vec![("prediction".into(), prediction)];
    for b in &args.baseline {
        let part = match b {
            Baseline::Coarse => baselines::coarse(&test_ids)?,
            Baseline::Fine => baselines::fine(&test_ids)?,
            Baseline::Kmeans => {
                let g = gold.as_ref().expect("validated: test items labeled");
                let points: Vec<Vec<f64>> = ds.split(Split::Test).map(|i| i.features.clone()).collect();
                let cfg = KMeansConfig {
                    restarts: args.kmeans_restarts,
                    ..KMeansConfig::new(g.n_clusters(), args.seed)
                };
                baselines::kmeans(&test_ids, &points, &cfg)?.partition
            }
            Baseline::Cdp => {
                let cfg = SamplerConfig {
                    iterations: config.iterations,
                    burn_in: config.burn_in,
                    n_chains: config.n_chains,
                    seed: config.seed,
                    ..baselines::cdp_preset()
                };
                let recs: Vec<SampleRecord> = run_chains(&ds, &cfg, threads)?.into_iter().flatten().collect();
                sampler::extract_prediction(&recs)?
            }
        };
        part.save(args.out_dir.join(format!("baseline_{b}.tsv")))?;
        outputs.push((format!("baseline_{b}"), part));
    }

    writeln!(
        out,
        "{} chains x {} iterations ({} retained per chain); {} test items in {} predicted clusters",
        config.n_chains,
        config.iterations,
        config.iterations - config.burn_in,
        test_ids.len(),
        outputs[0].1.n_clusters()
    )?;
    if let Some(g) = &gold {
        let rows = outputs
            .iter()
            .map(|(name, p)| Ok(ScoreRow::new(name.clone(), metrics::full_report(g, p)?)))
            .collect::<CliResult<Vec<_>>>()?;
        let mut w = csv::Writer::from_path(args.out_dir.join("metrics.csv")).map_err(csv_err)?;
        for r in &rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush()?;
        for r in &rows {
            writeln!(out, "{}\tF={:.3}\tVI={:.3}", r.hypothesis, r.f, r.vi)?;
        }
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Runtime(format!("csv: {e}"))
}

/// One scored hypothesis; column order follows the usual metric table.
#[derive(Debug, Serialize)]
pub struct ScoreRow {
    pub hypothesis: String,
    pub ri: f64,
    pub p: f64,
    pub r: f64,
    pub f: f64,
    pub ced_gh: usize,
    pub nes: f64,
    pub vi: f64,
    pub nvi: f64,
    pub ced_hg: usize,
}

impl ScoreRow {
    pub fn new(hypothesis: String, m: MetricReport) -> Self {
        ScoreRow {
            hypothesis,
            ri: m.rand_index,
            p: m.precision,
            r: m.recall,
            f: m.f_score,
            ced_gh: m.ced_gh,
            nes: m.nes,
            vi: m.vi,
            nvi: m.nvi,
            ced_hg: m.ced_hg,
        }
    }
}

fn open_out(path: &Option<PathBuf>, out: &mut dyn Write, body: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, body)?,
        None => out.write_all(body)?,
    }
    Ok(())
}

/// Prefixes file-level errors with the offending path.
fn in_file(path: &Path, e: CoreError) -> CliError {
    match e {
        CoreError::Parse { line, message } => CoreError::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        }
        .into(),
        CoreError::Io(io) => CliError::Io(io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        CoreError::Domain(m) => CoreError::Domain(format!("{}: {m}", path.display())).into(),
        other => other.into(),
    }
}

fn load_partition(path: &Path) -> CliResult<Partition> {
    Partition::load(path).map_err(|e| in_file(path, e))
}

pub fn cmd_score(args: &ScoreArgs, out: &mut dyn Write) -> CliResult<()> {
    let gold = load_partition(&args.gold)?;
    let mut rows = Vec::with_capacity(args.hyp.len());
    for h in &args.hyp {
        let hyp = load_partition(h)?;
        let report = metrics::full_report(&gold, &hyp).map_err(|e| in_file(h, e))?;
        rows.push(ScoreRow::new(h.display().to_string(), report));
    }
    let body = match args.format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r).map_err(csv_err)?;
            }
            w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?
        }
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(&rows).map_err(|e| CliError::Runtime(e.to_string()))?;
            v.push(b'\n');
            v
        }
    };
    open_out(&args.out, out, &body)
}

#[derive(Debug, Serialize)]
struct CurveRow {
    n: usize,
    dp_mean: f64,
    dp_lo: f64,
    dp_hi: f64,
    emp_mean: f64,
    emp_lo: f64,
    emp_hi: f64,
    alpha: f64,
}

pub fn cmd_dpfit(args: &DpfitArgs, out: &mut dyn Write) -> CliResult<()> {
    let prior = GammaPrior::new(args.prior_shape, args.prior_scale)?;
    let pools = args
        .pool
        .iter()
        .map(|p| load_partition(p))
        .collect::<CliResult<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let curve = dp::appropriateness_curve(&pools, &args.ns, args.resamples, &prior, &mut rng)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &curve.points {
        w.serialize(CurveRow {
            n: p.n,
            dp_mean: p.dp_mean,
            dp_lo: p.dp_mean - 2.0 * p.dp_std,
            dp_hi: p.dp_mean + 2.0 * p.dp_std,
            emp_mean: p.empirical_mean,
            emp_lo: p.empirical_mean - 2.0 * p.empirical_std,
            emp_hi: p.empirical_mean + 2.0 * p.empirical_std,
            alpha: curve.alpha,
        })
        .map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    open_out(&args.out, out, &body)
}
