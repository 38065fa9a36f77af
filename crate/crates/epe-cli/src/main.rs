//! Command-line front door: scoring, random search, correlation analysis,
//! timing runs, and space enumeration.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when scoring
//! itself fails (non-finite values or a search with no usable candidate).
//! Diagnostics go to stderr; data goes to stdout or the requested files.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use epe_core::arch::{enumerate_all, CellSpec};
use epe_core::data::{
    load_cifar10_batch, load_tensor_batch, synthetic_batch, LabeledBatch, CONTAINER_MAGIC,
};
use epe_core::scorer::epe_score;
use epe_core::search::{
    load_benchmark, rank_correlation, repeat_runs, scatter_export, score_random_sample,
    timing_benchmark, write_summary_csv, write_timing, BatchProvider, EpeScorer, RankStats,
    ScatterRow,
};
use epe_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "epe",
    version,
    about = "Training-free scoring and random search over a cell-based architecture space"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one architecture on a single batch
    Score(ScoreArgs),
    /// Repeated random search evaluated against a benchmark table
    Search(SearchArgs),
    /// Score a random sample and correlate scores with trained accuracies
    Correlate(CorrelateArgs),
    /// Measure scoring wall time across image sizes
    BenchTime(BenchTimeArgs),
    /// Write every architecture string in the space
    Enumerate(EnumerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Full width, 5 cells per stage
    Bench,
    /// Reduced width, 1 cell per stage
    Tiny,
}

impl Profile {
    fn scorer(self) -> EpeScorer {
        match self {
            Profile::Bench => EpeScorer::bench(),
            Profile::Tiny => EpeScorer::tiny(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct ScoreArgs {
    /// Architecture string, e.g. "|nor_conv_3x3~0|+|skip_connect~0|none~1|+|avg_pool_3x3~0|skip_connect~1|nor_conv_1x1~2|"
    #[arg(long)]
    arch: String,
    #[arg(long, env = "EPE_SEED", default_value_t = 0)]
    seed: u64,
    /// Images per batch; container files are loaded whole instead
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    /// CIFAR-10 binary or EPEB container; synthetic 32x32 batch when omitted
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Profile::Bench)]
    profile: Profile,
    /// csv drops the per-class evaluations
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct SearchArgs {
    /// Candidates per run
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Independent runs to aggregate (at least 2)
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, env = "EPE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long)]
    data: Option<PathBuf>,
    /// CSV table of trained accuracies (arch,dataset,val_acc,test_acc)
    #[arg(long)]
    bench_table: PathBuf,
    #[arg(long, value_enum, default_value_t = Profile::Bench)]
    profile: Profile,
    /// Worker threads for candidate scoring
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Directory for summary.{json|csv} and runs.json
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct CorrelateArgs {
    /// Sample size
    #[arg(long)]
    n: usize,
    #[arg(long, env = "EPE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    bench_table: PathBuf,
    /// Table dataset joined onto the sample
    #[arg(long, default_value = "cifar10")]
    dataset: String,
    #[arg(long, value_enum, default_value_t = Profile::Bench)]
    profile: Profile,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Scatter CSV destination (arch,score,val_acc,test_acc)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct BenchTimeArgs {
    /// Comma-separated image extents, each a multiple of 4
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Cell to time; defaults to the all-3x3-convolution cell
    #[arg(long)]
    arch: Option<String>,
    #[arg(long, env = "EPE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Profile::Bench)]
    profile: Profile,
    /// Timing CSV destination; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnumerateArgs {
    /// Destination file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

enum DataSource {
    Synthetic { batch: usize },
    Cifar { path: PathBuf, batch: usize },
    Container { batch: LabeledBatch },
}

impl DataSource {
    fn open(data: Option<&Path>, batch_size: usize) -> Result<Self> {
        let Some(path) = data else {
            return Ok(DataSource::Synthetic { batch: batch_size });
        };
        let mut head = [0u8; 4];
        let mut file = fs::File::open(path)?;
        let got = file.read(&mut head)?;
        if got == head.len() && &head == CONTAINER_MAGIC {
            Ok(DataSource::Container { batch: load_tensor_batch(path)? })
        } else {
            Ok(DataSource::Cifar { path: path.to_path_buf(), batch: batch_size })
        }
    }
}

impl BatchProvider for DataSource {
    fn batch(&self, seed: u64) -> Result<LabeledBatch> {
        match self {
            DataSource::Synthetic { batch } => {
                synthetic_batch(*batch, (*batch).min(10).max(2), 32, seed)
            }
            DataSource::Cifar { path, batch } => load_cifar10_batch(path, *batch, seed),
            DataSource::Container { batch } => Ok(batch.clone()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let ok = matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = err.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::NonFiniteScore { .. } | Error::SearchFailed(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Score(args) => cmd_score(args),
        Command::Search(args) => cmd_search(args),
        Command::Correlate(args) => cmd_correlate(args),
        Command::BenchTime(args) => cmd_bench_time(args),
        Command::Enumerate(args) => cmd_enumerate(args),
    }
}

/// Writes to stdout, treating a closed pipe as a normal early exit.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::from(e)),
        _ => Ok(()),
    }
}

fn emit_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output types are serializable");
    text.push('\n');
    emit(&text)
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let spec = CellSpec::decode(&args.arch)?;
    let provider = DataSource::open(args.data.as_deref(), args.batch_size)?;
    let batch = provider.batch(args.seed)?;
    let net = args.profile.scorer().network_for(&spec, &batch, args.seed)?;
    let report = epe_score(&net, batch.images(), batch.labels())?;
    match args.format {
        Format::Json => emit_json(&report),
        Format::Csv => {
            let mut csv = String::from("arch,score,branch,num_classes,seconds\n");
            csv.push_str(&format!(
                "\"{}\",{},{},{},{}\n",
                report.arch, report.score, report.branch, report.num_classes, report.seconds
            ));
            emit(&csv)
        }
    }
}

fn cmd_search(args: SearchArgs) -> Result<()> {
    let table = load_benchmark(&args.bench_table)?;
    let provider = DataSource::open(args.data.as_deref(), args.batch_size)?;
    let scorer = args.profile.scorer();
    let summary = repeat_runs(args.runs, args.seed, args.n, &scorer, &provider, &table, args.jobs)?;

    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        let runs_json = serde_json::to_string_pretty(&summary.runs).expect("runs are serializable");
        fs::write(dir.join("runs.json"), runs_json)?;
        match args.format {
            Format::Json => {
                let text = serde_json::to_string_pretty(&summary).expect("summary is serializable");
                fs::write(dir.join("summary.json"), text)?;
            }
            Format::Csv => write_summary_csv(&summary, &dir.join("summary.csv"))?,
        }
    }

    match args.format {
        Format::Json => emit_json(&summary),
        Format::Csv => {
            let mut out = String::from(
                "dataset,val_acc_mean,val_acc_std,test_acc_mean,test_acc_std,optimal_mean,optimal_std,seconds_mean,seconds_std\n",
            );
            for r in summary.rows() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    r.dataset,
                    r.val_acc_mean,
                    r.val_acc_std,
                    r.test_acc_mean,
                    r.test_acc_std,
                    r.optimal_mean,
                    r.optimal_std,
                    r.seconds_mean,
                    r.seconds_std
                ));
            }
            emit(&out)
        }
    }
}

#[derive(serde::Serialize)]
struct CorrelationReport {
    dataset: String,
    requested: usize,
    scored: usize,
    missing: usize,
    val: RankStats,
    test: RankStats,
}

fn cmd_correlate(args: CorrelateArgs) -> Result<()> {
    if args.n == 0 {
        return Err(Error::Contract("sample size must be at least 1".into()));
    }
    let table = load_benchmark(&args.bench_table)?;
    if !table.datasets().contains(&args.dataset) {
        return Err(Error::Config(format!(
            "table has no dataset {:?}; available: {:?}",
            args.dataset,
            table.datasets()
        )));
    }
    let provider = DataSource::open(args.data.as_deref(), args.batch_size)?;
    let scorer = args.profile.scorer();

    let (specs, scores) = score_random_sample(args.n, args.seed, &scorer, &provider, args.jobs)?;
    if scores.iter().all(Option::is_none) {
        return Err(Error::SearchFailed(format!("all {} candidates failed scoring", args.n)));
    }
    let mut rows = Vec::new();
    let mut missing = 0usize;
    for (spec, score) in specs.iter().zip(&scores) {
        let arch = spec.encode();
        let Some(score) = *score else {
            eprintln!("warning: {arch} failed scoring, skipped");
            continue;
        };
        match table.lookup(&arch, &args.dataset) {
            Ok(record) => rows.push(ScatterRow {
                arch,
                score,
                val_acc: record.val_acc,
                test_acc: record.test_acc,
            }),
            Err(_) => {
                eprintln!("warning: {arch} is not in the benchmark table, skipped");
                missing += 1;
            }
        }
    }
    if missing > 0 {
        eprintln!("warning: skipped {missing} of {} candidates", args.n);
    }

    if let Some(out) = &args.out {
        scatter_export(&rows, out)?;
    }

    let val_pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.score, r.val_acc)).collect();
    let test_pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.score, r.test_acc)).collect();
    let report = CorrelationReport {
        dataset: args.dataset,
        requested: args.n,
        scored: rows.len(),
        missing,
        val: rank_correlation(&val_pairs)?,
        test: rank_correlation(&test_pairs)?,
    };
    match args.format {
        Format::Json => emit_json(&report),
        Format::Csv => {
            let mut out = String::from("axis,tau,rho,samples\n");
            out.push_str(&format!("val,{},{},{}\n", report.val.tau, report.val.rho, report.val.samples));
            out.push_str(&format!("test,{},{},{}\n", report.test.tau, report.test.rho, report.test.samples));
            emit(&out)
        }
    }
}

fn cmd_bench_time(args: BenchTimeArgs) -> Result<()> {
    let spec = match &args.arch {
        Some(text) => CellSpec::decode(text)?,
        None => CellSpec::new([3, 3, 3, 3, 3, 3]).expect("all-conv cell is valid"),
    };
    let rows = timing_benchmark(&args.sizes, args.batch_size, &spec, &args.profile.scorer(), args.seed)?;
    match &args.out {
        Some(path) => write_timing(&rows, path),
        None => {
            let mut out = String::from("extent,seconds\n");
            for row in &rows {
                out.push_str(&format!("{},{}\n", row.extent, row.seconds));
            }
            emit(&out)
        }
    }
}

fn cmd_enumerate(args: EnumerateArgs) -> Result<()> {
    let mut text = String::new();
    for spec in enumerate_all() {
        text.push_str(&spec.encode());
        text.push('\n');
    }
    match &args.out {
        Some(path) => {
            fs::write(path, text)?;
            Ok(())
        }
        None => emit(&text),
    }
}
