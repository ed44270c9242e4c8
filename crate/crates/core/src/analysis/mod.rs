//! Linearized embeddings of datasets of measures and the statistics run
//! on them.

mod classify;
pub mod io;
mod pca;

pub use classify::{knn_classify, lda, roc_auc, KnnMetrics, KnnProtocol, LdaResult};
pub use pca::{exp_along_mode, pca, PcaResult};

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{rasterize_dense, rescale_domain, DiscreteMeasure, GridImage, GridSpec};
use crate::solver::{solve_hk, solve_w2, SolverConfig};
use crate::tangent::{barycentric_project, flatten_hk, flatten_w2, hk_log, w2_log};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Hk,
    W2,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hk" => Ok(Self::Hk),
            "w2" => Ok(Self::W2),
            _ => Err(Error::InvalidArgument(format!(
                "unknown metric '{s}' (expected hk or w2)"
            ))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Hk => "hk",
            Self::W2 => "w2",
        })
    }
}

impl Metric {
    /// Flattened entries per reference point in a plane.
    pub fn channels(self, dim: usize) -> usize {
        match self {
            Self::Hk => dim + 1,
            Self::W2 => dim,
        }
    }
}

/// One flattened tangent vector per sample, in the units of the input
/// domain: for HK the rows are `kappa` times the unit-scale vectors, so
/// Euclidean row distances are linearized `HK_kappa` distances.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: DMatrix<f64>,
    pub labels: Option<Vec<i64>>,
    pub reference: DiscreteMeasure,
    pub metric: Metric,
    pub kappa: f64,
}

impl EmbeddingMatrix {
    pub fn n_samples(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.rows.row(i).iter().copied().collect()
    }

    pub fn with_labels(mut self, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != self.n_samples() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} rows",
                labels.len(),
                self.n_samples()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub(crate) fn require_labels(&self) -> Result<&[i64]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("embedding has no labels".into()))
    }
}

/// Pointwise average of the samples after rasterizing them onto `grid`.
pub fn linear_mean(samples: &[DiscreteMeasure], grid: &GridSpec) -> Result<DiscreteMeasure> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "linear mean of an empty list".into(),
        ));
    }
    let mut acc = vec![0.0; grid.len()];
    for s in samples {
        for (a, v) in acc.iter_mut().zip(&rasterize_dense(s, grid)?.values) {
            *a += v;
        }
    }
    let n = samples.len() as f64;
    Ok(GridImage::new(*grid, acc.into_iter().map(|a| a / n).collect())?.to_measure())
}

/// Result of [`embed_dataset`]: the embedding and the samples whose
/// solve stopped at the iteration budget.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub matrix: EmbeddingMatrix,
    pub unconverged: Vec<usize>,
}

/// Relative created mass above which a sample cannot be embedded.
const SINGULAR_TOLERANCE: f64 = 1e-6;

/// Solves one transport problem per sample against the reference `mu0` at
/// length scale `kappa` and flattens the resulting tangent vectors.
///
/// For W2, `kappa` is only the length unit the solver works in (it sets
/// what the blur means) and does not change the result beyond solver
/// accuracy. Samples are solved in parallel on the current rayon pool.
pub fn embed_dataset(
    mu0: &DiscreteMeasure,
    samples: &[DiscreteMeasure],
    metric: Metric,
    kappa: f64,
    cfg: &SolverConfig,
) -> Result<Embedding> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to embed".into()));
    }
    if mu0.is_empty() || mu0.masses().iter().any(|&m| m <= 0.0) {
        return Err(Error::InvalidArgument(
            "reference must have positive mass on every support point".into(),
        ));
    }
    cfg.validate()?;
    let ref_k = rescale_domain(mu0, kappa)?;
    let rows: Vec<(Vec<f64>, bool)> = samples
        .par_iter()
        .enumerate()
        .map(|(index, sample)| -> Result<(Vec<f64>, bool)> {
            let s = rescale_domain(sample, kappa)?;
            let (row, converged) = match metric {
                Metric::Hk => {
                    let plan = solve_hk(&ref_k, &s, cfg)?;
                    let decomp = barycentric_project(&plan, &ref_k, &s)?;
                    let tf = hk_log(&ref_k, &s, &decomp)?;
                    let created = tf.mu1_perp.total_mass();
                    if created > SINGULAR_TOLERANCE * s.total_mass() {
                        return Err(Error::SingularPart {
                            sample: index,
                            mass: created,
                        });
                    }
                    (flatten_hk(&ref_k, &tf)?, plan.converged)
                }
                Metric::W2 => {
                    let plan = solve_w2(&ref_k, &s, cfg)?;
                    (
                        flatten_w2(&ref_k, &w2_log(&ref_k, &s, &plan)?)?,
                        plan.converged,
                    )
                }
            };
            Ok((row.into_iter().map(|x| x * kappa).collect(), converged))
        })
        .collect::<Result<_>>()?;
    let dim = rows[0].0.len();
    let unconverged = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.1)
        .map(|(i, _)| i)
        .collect();
    let matrix = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i].0[j]);
    Ok(Embedding {
        matrix: EmbeddingMatrix {
            rows: matrix,
            labels: None,
            reference: mu0.clone(),
            metric,
            kappa,
        },
        unconverged,
    })
}
