use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gksg::experiment::{run_experiment, ExperimentSpec};
use gksg::forest::{build_forest, load_forest, save_forest, Forest, ForestParams, DEFAULT_TREES};
use gksg::io::{
    infer_partition, parse_column_spec, read_matrix_file, select_blocks, write_dataset,
    write_matrix_csv, EstimateRecord,
};
use gksg::mi::{gksg_estimate_with_forest, ksg_estimate, Method, DEFAULT_K};
use gksg::synthetic::{generate, Family, GeneratorSpec, DEFAULT_ALPHA, DEFAULT_RADIUS, DEFAULT_RHO};
use gksg::{Error, Result};

/// Environment variable capping the number of worker threads.
const THREADS_ENV: &str = "GKSG_THREADS";

#[derive(Parser)]
#[command(name = "gksg", version, about = "KSG and forest-geodesic G-KSG mutual information estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark dataset.
    Gen(GenArgs),
    /// Estimate I(X;Y) on a dataset file.
    Estimate(EstimateArgs),
    /// Run a benchmark sweep described by a TOML file.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyName {
    UniformLinear,
    Gaussian,
    Helix,
    Sphere,
}

#[derive(Args)]
struct GenArgs {
    family: FamilyName,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    radius: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    noise_dims: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; the metadata sidecar goes next to it. Stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Column names, indices or ranges (`x0,x1`, `0-1`). Default: `x*` columns.
    #[arg(long)]
    x_cols: Option<String>,
    /// Default: `y*` columns.
    #[arg(long)]
    y_cols: Option<String>,
    #[arg(long, default_value = "gksg")]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Forest seed (G-KSG only).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TREES)]
    trees: usize,
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long)]
    projections: Option<usize>,
    #[arg(long)]
    min_split: Option<usize>,
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    min_cluster: Option<usize>,
    /// Load the forest from this file if present, otherwise train and save it.
    #[arg(long)]
    forest_cache: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output file. Stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Domain(_) => 1,
        Error::Parse(_) => 2,
        Error::DegenerateData(_) => 3,
        Error::Io { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = configure_threads().and_then(|_| run(cli.command)) {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(&e));
    }
    ExitCode::SUCCESS
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let family = match a.family {
        FamilyName::UniformLinear => Family::UniformLinear { alpha: a.alpha },
        FamilyName::Gaussian => Family::Gaussian { rho: a.rho },
        FamilyName::Helix => Family::Helix { alpha: a.alpha },
        FamilyName::Sphere => Family::Sphere { radius: a.radius, alpha: a.alpha },
    };
    let spec = GeneratorSpec { family, n: a.n, noise_dims: a.noise_dims, seed: a.seed };
    let ds = generate(&spec)?;
    match a.out {
        Some(path) => write_dataset(&path, &spec, &ds),
        None => {
            let stdout = io::stdout();
            write_matrix_csv(stdout.lock(), &ds.column_names(), &ds.data)
        }
    }
}

fn cmd_estimate(a: EstimateArgs) -> Result<()> {
    let (names, raw) = read_matrix_file(&a.input)?;
    let (x_cols, y_cols) = match (&a.x_cols, &a.y_cols) {
        (Some(x), Some(y)) => (parse_column_spec(x, &names)?, parse_column_spec(y, &names)?),
        (None, None) => infer_partition(&names)?,
        _ => return Err(Error::InvalidArgument("pass both --x-cols and --y-cols, or neither".into())),
    };
    let (data, part) = select_blocks(&raw, &x_cols, &y_cols)?;
    let params = ForestParams {
        trees: a.trees,
        projections: a.projections,
        sparsity: a.sparsity,
        min_split: a.min_split,
        subsample: a.subsample,
        min_cluster: a.min_cluster,
    };

    let start = Instant::now();
    let (est, seed) = match a.method {
        Method::Ksg => (ksg_estimate(&data, &part, a.k)?, None),
        Method::Gksg => {
            let forest = cached_forest(a.forest_cache.as_deref(), &data, &params, a.seed)?;
            (gksg_estimate_with_forest(&forest, &data, &part, a.k)?, Some(forest.seed()))
        }
    };
    let elapsed = start.elapsed().as_secs_f64();

    let record = EstimateRecord::new(&est, x_cols.len(), y_cols.len(), seed, elapsed);
    let text = serde_json::to_string_pretty(&record).map_err(|e| Error::Parse(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn cached_forest(
    cache: Option<&Path>,
    data: &gksg::DataMatrix,
    params: &ForestParams,
    seed: u64,
) -> Result<Forest> {
    match cache {
        Some(path) if path.exists() => {
            let forest = load_forest(path)?;
            if forest.n_features() != data.n_cols() || forest.n_train() != data.n_rows() {
                return Err(Error::InvalidArgument(format!(
                    "cached forest {} was trained on {}x{} data, input is {}x{}",
                    path.display(),
                    forest.n_train(),
                    forest.n_features(),
                    data.n_rows(),
                    data.n_cols()
                )));
            }
            Ok(forest)
        }
        Some(path) => {
            let forest = build_forest(data, params, seed)?;
            save_forest(&forest, path)?;
            Ok(forest)
        }
        None => build_forest(data, params, seed),
    }
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| Error::Io { path: a.config.clone(), source: e })?;
    let spec = ExperimentSpec::from_toml(&text)?;
    let result = run_experiment(&spec)?;
    let emit = |w: &mut dyn Write| match a.format {
        Format::Csv => result.write_csv(w),
        Format::Json => result.write_json(w),
    };
    match &a.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            let mut w = BufWriter::new(file);
            emit(&mut w)?;
            w.flush().map_err(|e| Error::Io { path: path.clone(), source: e })
        }
        None => emit(&mut io::stdout().lock()),
    }
}
