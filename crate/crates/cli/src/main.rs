//! `hklin`: HK and W2 distances, geodesics and linearized embeddings of
//! images and point clouds.

mod commands;
mod support;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use support::Failure;

#[derive(Parser, Debug)]
#[command(
    name = "hklin",
    version,
    about = "Hellinger-Kantorovich transport, geodesics and linearized embeddings"
)]
struct Cli {
    /// Worker threads for the per-sample solves (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print solver progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct SolveOpts {
    #[arg(long, value_enum, default_value_t = MetricArg::Hk)]
    pub metric: MetricArg,
    /// Length scale. For w2 it is only the length unit the blur refers to
    /// (default: the larger side of the domain).
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Final blur, overriding the config file.
    #[arg(long)]
    pub epsilon_final: Option<f64>,
    /// Solver settings as `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct GridOpts {
    /// Raster grid as ROWSxCOLS pixels (default: the input grid, else 64x64).
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricArg {
    Hk,
    W2,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Knn,
    Lda,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Loo,
    Split,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Distance between two measure files.
    Distance {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        solve: SolveOpts,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the two-ellipse dataset and its manifest.
    GenEllipses {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        /// Parameter levels per axis, equally spaced in [-1, 1].
        #[arg(long, default_value_t = 8)]
        levels: usize,
    },
    /// Embeds every sample of a manifest at a reference measure.
    Embed {
        manifest: PathBuf,
        #[command(flatten)]
        solve: SolveOpts,
        #[command(flatten)]
        grid: GridOpts,
        /// linear_mean, uniform, or a measure file.
        #[arg(long, default_value = "linear_mean")]
        reference: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// PCA of an embedding, with exponential-map sweeps along the modes.
    Pca {
        embedding: PathBuf,
        #[command(flatten)]
        grid: GridOpts,
        /// Number of modes to sweep.
        #[arg(long, default_value_t = 2)]
        modes: usize,
        /// Sweep positions in standard deviations.
        #[arg(long, value_delimiter = ',', default_values_t = vec![-1.0, -0.5, 0.0, 0.5, 1.0], allow_negative_numbers = true)]
        sweep: Vec<f64>,
        /// Also write PGM renders.
        #[arg(long)]
        pgm: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// kNN or LDA classification of a labelled embedding.
    Classify {
        embedding: PathBuf,
        #[arg(long, value_enum, default_value_t = Algo::Knn)]
        algo: Algo,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Protocol::Loo)]
        protocol: Protocol,
        #[arg(long, default_value_t = 0.25)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rasterized frames along the geodesic between two measures.
    Geodesic {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        solve: SolveOpts,
        #[command(flatten)]
        grid: GridOpts,
        #[arg(long, default_value_t = 5)]
        frames: usize,
        #[arg(long)]
        pgm: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classification quality of HK embeddings across length scales.
    KappaSweep {
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        kappas: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Algo::Knn)]
        algo: Algo,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value = "linear_mean")]
        reference: String,
        #[command(flatten)]
        grid: GridOpts,
        #[arg(long)]
        epsilon_final: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<bool, Failure> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot start worker pool: {e}")))?;
    }
    match cli.command {
        Command::Distance { a, b, solve, out } => {
            commands::distance(&a, &b, &solve, out.as_deref())
        }
        Command::GenEllipses {
            out,
            resolution,
            levels,
        } => commands::gen_ellipses(&out, resolution, levels),
        Command::Embed {
            manifest,
            solve,
            grid,
            reference,
            out,
        } => commands::embed(&manifest, &solve, &grid, &reference, &out),
        Command::Pca {
            embedding,
            grid,
            modes,
            sweep,
            pgm,
            out,
        } => commands::pca(&embedding, &grid, modes, &sweep, pgm, &out),
        Command::Classify {
            embedding,
            algo,
            k,
            protocol,
            test_fraction,
            seed,
            out,
        } => commands::classify(
            &embedding,
            algo,
            k,
            protocol,
            test_fraction,
            seed,
            out.as_deref(),
        ),
        Command::Geodesic {
            a,
            b,
            solve,
            grid,
            frames,
            pgm,
            out,
        } => commands::geodesic(&a, &b, &solve, &grid, frames, pgm, &out),
        Command::KappaSweep {
            manifest,
            kappas,
            algo,
            k,
            reference,
            grid,
            epsilon_final,
            config,
            out,
        } => {
            let solve = SolveOpts {
                metric: MetricArg::Hk,
                kappa: None,
                epsilon_final,
                config,
                seed: 0,
            };
            commands::kappa_sweep(&manifest, &kappas, algo, k, &reference, &grid, &solve, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: some transport solves stopped at the iteration budget; results may be inaccurate");
            ExitCode::from(2)
        }
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
