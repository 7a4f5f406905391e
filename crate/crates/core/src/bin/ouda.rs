use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ouda::cli::{
    compare_means, expand_config_args, generate_drift_stream, load_csv_stream, run_experiment, sweep, write_csv,
    Dataset, DatasetSpec, DriftKind, DriftParams,
};
use ouda::grassmann::geodesic_distance;
use ouda::pipeline::{ClassifierKind, PipelineConfig, Variant};
use ouda::{Error, Result};

/// Online unsupervised domain adaptation on the Grassmann manifold.
#[derive(Parser)]
#[command(name = "ouda", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one variant over a stream and write a JSON report.
    Run(RunArgs),
    /// A(B) over a grid of subspace dimensions and batch sizes.
    Sweep(SweepArgs),
    /// Time and score incremental averaging, Karcher and ICMS means.
    CompareMeans(CompareArgs),
    /// Write a synthetic drifting stream as CSV.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV stream: feature columns then an integer label per row.
    #[arg(long, required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// The CSV file starts with a header line.
    #[arg(long, action = clap::ArgAction::Set, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    header: bool,
    /// Leading fraction of the CSV rows used as labeled source.
    #[arg(long, default_value_t = 0.1)]
    source_fraction: f64,
    /// Use a synthetic stream of this kind instead of a file.
    #[arg(long, conflicts_with = "data")]
    synthetic: Option<DriftKind>,
    #[command(flatten)]
    generator: GeneratorArgs,
}

#[derive(Args)]
struct GeneratorArgs {
    /// Number of classes (a bound on CSV labels when reading a file).
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 30)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    batches: usize,
    #[arg(long, default_value_t = 200)]
    source_size: usize,
    #[arg(long, default_value_t = 0.01)]
    drift_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 5)]
    signal_rank: usize,
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    #[arg(long, default_value_t = 12.0)]
    offset: f64,
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    #[arg(long, default_value_t = 0.05)]
    ambient_noise: f64,
    /// Generator seed; defaults to --seed.
    #[arg(long)]
    data_seed: Option<u64>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Target mini-batch size N_T.
    #[arg(long, default_value_t = 2)]
    batch_size: usize,
    /// Subspace dimension k; defaults to min(d/2, 100, batch size - 1).
    #[arg(long)]
    subspace_dim: Option<usize>,
    #[arg(long, default_value = "icms")]
    variant: Variant,
    /// ncm | linear
    #[arg(long, default_value = "ncm")]
    classifier: ClassifierKind,
    /// Update the classifier with its own predictions (`--adaptive false` to freeze it).
    #[arg(long, action = clap::ArgAction::Set, num_args = 0..=1, default_missing_value = "true", default_value = "true")]
    adaptive: bool,
    #[arg(long, default_value_t = 0.1)]
    update_rate: f64,
    /// Skip pseudo-labels below this confidence in adaptive updates.
    #[arg(long)]
    confidence: Option<f64>,
    /// Weight of the prediction when compensating an observed subspace.
    #[arg(long, default_value_t = 0.5)]
    blend: f64,
    /// Per-batch iteration cap of the Karcher mean.
    #[arg(long, default_value_t = 100)]
    karcher_max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// JSON report path (stdout when absent).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-batch CSV for plotting.
    #[arg(long)]
    batch_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    k_values: Vec<usize>,
    /// Batch sizes; defaults to --batch-size.
    #[arg(long, value_delimiter = ',')]
    batch_sizes: Vec<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "rotation")]
    kind: DriftKind,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long, default_value_t = 20)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output path.
    #[arg(long)]
    output: PathBuf,
    /// Optional JSON with the generator parameters and the true drift per batch.
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn drift_params(g: &GeneratorArgs, kind: DriftKind, batch_size: usize, seed: u64) -> DriftParams {
    DriftParams {
        seed: g.data_seed.unwrap_or(seed),
        dim: g.dim,
        n_classes: g.classes.unwrap_or(2),
        n_batches: g.batches,
        batch_size,
        source_size: g.source_size,
        kind,
        drift_rate: g.drift_rate,
        noise: g.noise,
        signal_rank: g.signal_rank,
        class_separation: g.separation,
        offset: g.offset,
        spread: g.spread,
        ambient_noise: g.ambient_noise,
    }
}

fn load(data: &DataArgs, batch_size: usize, seed: u64) -> Result<(Dataset, serde_json::Value)> {
    match (&data.data, data.synthetic) {
        (_, Some(kind)) => {
            let params = drift_params(&data.generator, kind, batch_size, seed);
            let (dataset, _) = generate_drift_stream(&params)?;
            Ok((dataset, serde_json::json!({ "synthetic": params })))
        }
        (Some(path), None) => {
            let spec = DatasetSpec {
                path: path.clone(),
                has_header: data.header,
                feature_dim: None,
                n_classes: data.generator.classes,
                source_fraction: data.source_fraction,
            };
            let dataset = load_csv_stream(&spec)?;
            Ok((dataset, serde_json::json!({ "csv": spec })))
        }
        (None, None) => Err(Error::InvalidConfig("either --data or --synthetic is required".into())),
    }
}

fn pipeline_config(p: &PipelineArgs, d: usize) -> PipelineConfig {
    let k = p
        .subspace_dim
        .unwrap_or_else(|| (d / 2).min(100).min(p.batch_size.saturating_sub(1)).max(1));
    let mut cfg = PipelineConfig::new(k, p.batch_size).with_variant(p.variant);
    cfg.classifier_kind = p.classifier;
    cfg.adaptive_classifier = p.adaptive;
    cfg.update_rate = p.update_rate;
    cfg.confidence_threshold = p.confidence;
    cfg.blend = p.blend;
    cfg.karcher_max_iter = p.karcher_max_iter;
    cfg.seed = p.seed;
    cfg
}

fn emit<T: Serialize>(value: &T, output: Option<&PathBuf>) -> Result<()> {
    match output {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, value)?;
            writeln!(lock)?;
        }
    }
    Ok(())
}

fn fmt_acc(acc: Option<f64>) -> String {
    acc.map_or("n/a".to_string(), |a| format!("{:.2}%", 100.0 * a))
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let (dataset, description) = load(&args.data, args.pipeline.batch_size, args.pipeline.seed)?;
    let cfg = pipeline_config(&args.pipeline, dataset.feature_dim());
    let report = run_experiment(&dataset, &description, &cfg, args.pipeline.variant)?;
    emit(&report, args.output.as_ref())?;
    if let Some(path) = &args.batch_csv {
        report.write_batch_csv(path)?;
    }
    let s = &report.summary;
    eprintln!(
        "{}: A(B) = {}, {} batches ({} skipped), {:.3} s total, {:.2} ms/batch mean, {:.2} ms p95",
        report.variant,
        fmt_acc(s.average_accuracy),
        s.processed,
        s.skipped,
        s.total_seconds,
        s.mean_batch_ms,
        s.p95_batch_ms
    );
    Ok(match &report.aborted {
        Some(a) => {
            eprintln!("aborted at batch {}: {}", a.batch, a.message);
            ExitCode::from(a.exit_code as u8)
        }
        None => ExitCode::SUCCESS,
    })
}

fn run_sweep(args: SweepArgs) -> Result<ExitCode> {
    let batch_sizes = if args.batch_sizes.is_empty() {
        vec![args.pipeline.batch_size]
    } else {
        args.batch_sizes.clone()
    };
    // Synthetic streams are generated once, at the first batch size, and
    // re-chunked for the others.
    let (dataset, description) = load(&args.data, batch_sizes[0], args.pipeline.seed)?;
    let cfg = pipeline_config(&args.pipeline, dataset.feature_dim());
    let report = sweep(&dataset, &description, &cfg, args.pipeline.variant, &args.k_values, &batch_sizes)?;
    emit(&report, args.output.as_ref())?;
    for cell in &report.cells {
        match &cell.error {
            Some(e) => eprintln!("k={:<4} N_T={:<5} failed: {e}", cell.subspace_dim, cell.batch_size),
            None => eprintln!(
                "k={:<4} N_T={:<5} A(B) = {}",
                cell.subspace_dim,
                cell.batch_size,
                fmt_acc(cell.average_accuracy)
            ),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_compare(args: CompareArgs) -> Result<ExitCode> {
    let (dataset, description) = load(&args.data, args.pipeline.batch_size, args.pipeline.seed)?;
    let cfg = pipeline_config(&args.pipeline, dataset.feature_dim());
    let table = compare_means(&dataset, &description, &cfg)?;
    emit(&table, args.output.as_ref())?;
    eprintln!("{:<24}{:>10}{:>14}{:>14}", "method", "A(B)", "total s", "mean s");
    for row in &table.rows {
        eprintln!(
            "{:<24}{:>10}{:>14.3}{:>14.3}",
            row.method.name(),
            fmt_acc(row.average_accuracy),
            row.total_seconds,
            row.mean_update_seconds
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn run_generate(args: GenerateArgs) -> Result<ExitCode> {
    let params = drift_params(&args.generator, args.kind, args.batch_size, args.seed);
    let (dataset, truth) = generate_drift_stream(&params)?;
    write_csv(&args.output, &dataset)?;
    if let Some(path) = &args.truth {
        let drift = truth
            .subspaces
            .iter()
            .map(|s| geodesic_distance(&truth.source, s))
            .collect::<Result<Vec<f64>>>()?;
        let source_fraction = dataset.source_x.nrows() as f64 / dataset.rows() as f64;
        emit(
            &serde_json::json!({
                "params": params,
                "source_fraction": source_fraction,
                "true_source_distance": drift,
            }),
            Some(path),
        )?;
    }
    eprintln!(
        "wrote {} rows ({} source, {} batches of {})",
        dataset.rows(),
        dataset.source_x.nrows(),
        params.n_batches,
        params.batch_size
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match expand_config_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
        Command::CompareMeans(a) => run_compare(a),
        Command::Generate(a) => run_generate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
