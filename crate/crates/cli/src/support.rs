//! Loading, option resolution and output helpers shared by the commands.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use hklin::analysis::Metric;
use hklin::measure::io::{parse_grid_csv, parse_measure, MeasureFormat};
use hklin::measure::BoundingBox;
use hklin::{DiscreteMeasure, Error, GridSpec, SolverConfig};

use crate::{GridOpts, MetricArg, SolveOpts};

/// A failed run: process exit code and message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: 1,
            msg: msg.into(),
        }
    }

    /// Library error with the file it concerns, if any.
    pub fn at(path: &Path, e: Error) -> Self {
        let code = exit_code(&e);
        match e {
            Error::Io { .. } => Self {
                code,
                msg: e.to_string(),
            },
            _ => Self {
                code,
                msg: format!("{}: {e}", path.display()),
            },
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            msg: e.to_string(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Parse { .. } => 3,
        _ => 1,
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 3,
        msg: format!("i/o error on {}: {e}", path.display()),
    }
}

pub fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

pub fn write(path: &Path, content: &[u8]) -> CliResult<()> {
    fs::write(path, content).map_err(|e| io_failure(path, e))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| io_failure(path, e))
}

/// A measure file and, for grid files, its grid.
pub struct Loaded {
    pub measure: DiscreteMeasure,
    pub grid: Option<GridSpec>,
}

pub fn load(path: &Path) -> CliResult<Loaded> {
    let text = read(path)?;
    match MeasureFormat::detect(&text) {
        MeasureFormat::CsvGrid => {
            let img = parse_grid_csv(&text).map_err(|e| Failure::at(path, e))?;
            let measure = img.to_measure();
            if measure.is_empty() {
                return Err(Failure::at(path, Error::EmptyMeasure));
            }
            Ok(Loaded {
                measure,
                grid: Some(img.grid),
            })
        }
        MeasureFormat::CsvPoints => {
            let measure =
                parse_measure(&text, MeasureFormat::CsvPoints).map_err(|e| Failure::at(path, e))?;
            Ok(Loaded {
                measure,
                grid: None,
            })
        }
    }
}

pub fn metric(m: MetricArg) -> Metric {
    match m {
        MetricArg::Hk => Metric::Hk,
        MetricArg::W2 => Metric::W2,
    }
}

pub fn solver_config(opts: &SolveOpts) -> CliResult<SolverConfig> {
    let mut cfg = match &opts.config {
        Some(path) => SolverConfig::parse(&read(path)?).map_err(|e| Failure::at(path, e))?,
        None => SolverConfig::default(),
    };
    if let Some(eps) = opts.epsilon_final {
        cfg.epsilon_final = eps;
    }
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(cfg)
}

/// Length unit the solver works in. HK uses `kappa` (default 1); W2
/// defaults to the larger side of the domain so the blur is relative to it.
pub fn length_unit(metric: Metric, kappa: Option<f64>, domain: &BoundingBox) -> CliResult<f64> {
    if let Some(k) = kappa {
        if !(k.is_finite() && k > 0.0) {
            return Err(Failure::usage(format!("--kappa must be positive, got {k}")));
        }
        return Ok(k);
    }
    Ok(match metric {
        Metric::Hk => 1.0,
        Metric::W2 => {
            let side = domain
                .min
                .iter()
                .zip(&domain.max)
                .map(|(a, b)| b - a)
                .fold(0.0, f64::max);
            if side > 0.0 {
                side
            } else {
                1.0
            }
        }
    })
}

pub fn joint_box(measures: &[&DiscreteMeasure]) -> BoundingBox {
    let dim = measures[0].dim();
    let coords: Vec<f64> = measures
        .iter()
        .flat_map(|m| {
            let d = m.domain();
            d.min
                .iter()
                .chain(d.max.iter())
                .copied()
                .collect::<Vec<_>>()
        })
        .collect();
    BoundingBox::of_coords(dim, &coords)
}

/// Parses `ROWSxCOLS` into a pixel grid.
pub fn parse_grid_arg(s: &str) -> CliResult<GridSpec> {
    let bad = || Failure::usage(format!("--grid expects ROWSxCOLS, got '{s}'"));
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let rows: usize = r.trim().parse().map_err(|_| bad())?;
    let cols: usize = c.trim().parse().map_err(|_| bad())?;
    GridSpec::pixels(rows, cols).map_err(|e| Failure::usage(e.to_string()))
}

/// Explicit `--grid`, else the first input grid, else 64x64 pixels.
pub fn resolve_grid(opts: &GridOpts, inputs: &[Option<&GridSpec>]) -> CliResult<GridSpec> {
    if let Some(s) = &opts.grid {
        return parse_grid_arg(s);
    }
    match inputs.iter().flatten().next() {
        Some(g) => Ok(**g),
        None => Ok(GridSpec::pixels(64, 64)?),
    }
}

/// First metadata comment of every output: command and effective settings.
pub fn meta(cmd: &str, fields: &[(&str, String)]) -> Vec<String> {
    let mut line = format!("hklin {cmd} version={}", env!("CARGO_PKG_VERSION"));
    for (k, v) in fields {
        line.push_str(&format!(" {k}={v}"));
    }
    vec![line]
}

pub fn kv(k: &'static str, v: impl Display) -> (&'static str, String) {
    (k, v.to_string())
}

pub fn config_fields(cfg: &SolverConfig) -> Vec<(&'static str, String)> {
    vec![
        kv(
            "epsilon_start",
            cfg.epsilon_start
                .map(|e| e.to_string())
                .unwrap_or_else(|| "auto".into()),
        ),
        kv("epsilon_final", cfg.epsilon_final),
        kv("epsilon_decay", cfg.epsilon_decay),
        kv("max_iters_per_eps", cfg.max_iters_per_eps),
        kv("tol_marginal", cfg.tol_marginal),
        kv("log_domain", cfg.log_domain),
    ]
}

pub fn comment_block(comments: &[String]) -> String {
    comments.iter().map(|c| format!("# {c}\n")).collect()
}

/// Binary PGM with the maximum value mapped to white.
pub fn pgm(rows: usize, cols: usize, values: &[f64]) -> Vec<u8> {
    let max = values.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if max > 0.0 {
            (v.max(0.0) / max * 255.0).round() as u8
        } else {
            0
        }
    }));
    out
}

/// `path` relative to the directory of `base`, unless absolute.
pub fn relative_to(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new("")).join(p)
    }
}
