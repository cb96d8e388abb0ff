//! The `rtconv` command line.
//!
//! Every subcommand first prints its fully resolved configuration as JSON on
//! standard error, then does its work. Exit codes: 0 on success, 1 for usage
//! errors and invalid configurations, 2 for runtime, I/O and format errors.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{bench_matvec, write_bench_csv, BenchConfig};
use crate::model::{
    count_params, make_synthetic, sparsity_sweep, train, write_sweep_csv, ModelConfig, Network, Split, TrainConfig,
};
use crate::weightgen::{generate, read_tern1, write_tern1, write_text, Generator, MatrixStats, WeightSpec};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rtconv", version, about = "Constant random ternary 1x1-convolutions: generate, count, train, benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a ternary matrix and write it to a file.
    Gen(GenArgs),
    /// Print the header and statistics of a TERN1 file.
    Inspect(InspectArgs),
    /// Build a model and print its parameter report as JSON.
    Count(CountArgs),
    /// Train a model on the synthetic task.
    Train(TrainArgs),
    /// Train one model per sparsity threshold.
    Sweep(SweepArgs),
    /// Time the matrix kernels.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum GenKind {
    Stream,
    Hash,
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Tern1,
    Text,
}

#[derive(Debug, Args, Serialize)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    layer_tag: u64,
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Sparsity threshold in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    t: f64,
    #[arg(long, value_enum, default_value_t = GenKind::Stream)]
    generator: GenKind,
    /// Nonzeros per group, structured generator only.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Group size, structured generator only.
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Tern1)]
    format: Format,
}

#[derive(Debug, Args, Serialize)]
struct InspectArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CountArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Defaults apply when omitted.
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long)]
    metrics_out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated thresholds, e.g. `0,0.5,0.9`.
    #[arg(long, value_delimiter = ',', required = true)]
    t_list: Vec<f64>,
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Models trained concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args, Serialize)]
struct BenchArgs {
    /// Comma-separated `ROWSxCOLS` shapes.
    #[arg(long, value_delimiter = ',', default_value = "256x256,512x512", value_parser = parse_shape)]
    shapes: Vec<(usize, usize)>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.9")]
    t_list: Vec<f64>,
    #[arg(long, default_value_t = 21)]
    reps: usize,
    #[arg(long)]
    out: PathBuf,
    /// Threads for the parallel 1x1-convolution rows; 1 skips them.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn parse_shape(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected ROWSxCOLS, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    let shape = (parse(r)?, parse(c)?);
    if shape.0 == 0 || shape.1 == 0 {
        return Err(format!("shape `{s}` has a zero dimension"));
    }
    Ok(shape)
}

/// Runs the process-level entry point with the real arguments.
pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// 1 for configuration problems, 2 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => gen(a),
        Command::Inspect(a) => inspect(a),
        Command::Count(a) => count(a),
        Command::Train(a) => run_train(a),
        Command::Sweep(a) => sweep(a),
        Command::Bench(a) => bench(a),
    }
}

fn print_resolved<T: Serialize>(value: &T) -> Result<()> {
    eprintln!("resolved config: {}", serde_json::to_string(value)?);
    Ok(())
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{what} {}: {e}", path.display())))
}

fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    let tc = match path {
        Some(p) => load_json(p, "train config")?,
        None => TrainConfig::default(),
    };
    tc.validate()?;
    Ok(tc)
}

fn load_model_config(path: &Path) -> Result<ModelConfig> {
    let cfg: ModelConfig = load_json(path, "model config")?;
    cfg.validate()?;
    Ok(cfg)
}

fn check_compatible(cfg: &ModelConfig, tc: &TrainConfig) -> Result<()> {
    if tc.num_classes > cfg.num_classes {
        return Err(Error::Config(format!(
            "the task has {} classes but the model only {}",
            tc.num_classes, cfg.num_classes
        )));
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn print_stats(stats: &MatrixStats) {
    println!("entries: {}", stats.entries);
    println!("zeros: {}", stats.zeros);
    println!("plus: {}", stats.plus);
    println!("minus: {}", stats.minus);
    println!("sparsity: {:.6}", stats.sparsity);
    println!("plus_fraction: {:.6}", stats.plus_fraction);
}

fn gen(a: GenArgs) -> Result<()> {
    let generator = match a.generator {
        GenKind::Stream => Generator::SequentialStream,
        GenKind::Hash => Generator::CoordinateHash,
        GenKind::Structured => Generator::StructuredNofM { n: a.n, m: a.m },
    };
    let spec = WeightSpec::new(a.seed, a.layer_tag, a.rows, a.cols, a.t, generator)?;
    print_resolved(&serde_json::json!({ "command": "gen", "args": &a, "spec": &spec }))?;
    let matrix = generate(&spec)?;
    let mut out = create(&a.out)?;
    match a.format {
        Format::Tern1 => write_tern1(&mut out, &spec, &matrix)?,
        Format::Text => write_text(&mut out, &matrix)?,
    }
    out.flush()?;
    print_stats(&MatrixStats::of(&matrix));
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    print_resolved(&serde_json::json!({ "command": "inspect", "args": &a }))?;
    let bytes = fs::read(&a.input)?;
    let (spec, matrix) = read_tern1(&bytes)?;
    let (n, m) = spec.generator.n_of_m();
    println!("seed: {}", spec.seed);
    println!("layer_tag: {}", spec.layer_tag);
    println!("rows: {}", spec.rows);
    println!("cols: {}", spec.cols);
    println!("generator: {}", serde_json::to_string(&spec.generator)?);
    println!("n: {n}");
    println!("m: {m}");
    println!("t: {}", spec.threshold);
    print_stats(&MatrixStats::of(&matrix));
    Ok(())
}

fn count(a: CountArgs) -> Result<()> {
    let cfg = load_model_config(&a.config)?;
    print_resolved(&serde_json::json!({ "command": "count", "args": &a, "config": &cfg }))?;
    let report = count_params(&Network::build(&cfg)?);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let cfg = load_model_config(&a.config)?;
    let tc = load_train_config(a.train_config.as_deref())?;
    check_compatible(&cfg, &tc)?;
    print_resolved(&serde_json::json!({ "command": "train", "args": &a, "config": &cfg, "train_config": &tc }))?;
    let data = make_synthetic(&tc, cfg.in_channels)?;
    let mut net = Network::build(&cfg)?;
    let history = train(&mut net, &data, &tc)?;
    let mut out = create(&a.metrics_out)?;
    history.write_csv(&mut out)?;
    out.flush()?;
    for split in [Split::Train, Split::Val] {
        if let Some(r) = history.last(split) {
            println!("final {split}: loss {:.6} accuracy {:.6}", r.loss, r.accuracy);
        }
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = load_model_config(&a.config)?;
    let tc = load_train_config(a.train_config.as_deref())?;
    check_compatible(&cfg, &tc)?;
    if a.jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    print_resolved(&serde_json::json!({ "command": "sweep", "args": &a, "config": &cfg, "train_config": &tc }))?;
    let rows = sparsity_sweep(&cfg, &a.t_list, &tc, a.jobs)?;
    let mut out = create(&a.out)?;
    write_sweep_csv(&rows, &mut out)?;
    out.flush()?;
    for r in &rows {
        println!("t {}: {} trainable, accuracy {:.6}", r.t, r.params_trainable, r.accuracy);
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        shapes: a.shapes.clone(),
        t_list: a.t_list.clone(),
        reps: a.reps,
        seed: a.seed,
        threads: a.threads,
        ..BenchConfig::default()
    };
    print_resolved(&serde_json::json!({ "command": "bench", "args": &a, "panel": cfg.panel }))?;
    let rows = bench_matvec(&cfg)?;
    let mut out = create(&a.out)?;
    write_bench_csv(&rows, &mut out)?;
    out.flush()?;
    write_bench_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
