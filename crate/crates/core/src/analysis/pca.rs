use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{EmbeddingMatrix, Metric};
use crate::error::{Error, Result};
use crate::measure::{rasterize, rescale_domain, DiscreteMeasure, GridSpec};
use crate::tangent::{hk_exp, unflatten_hk, unflatten_w2, w2_exp};

/// Principal components of the centered embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// One unit-norm mode per row, by decreasing variance.
    pub modes: DMatrix<f64>,
    /// Sample variance along each mode (normalized by `n - 1`).
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaResult {
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Coordinates of `row - mean` along every mode.
    pub fn project(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "row has {} entries, expected {}",
                row.len(),
                self.mean.len()
            )));
        }
        let centered =
            DVector::from_iterator(row.len(), row.iter().zip(&self.mean).map(|(x, m)| x - m));
        Ok((&self.modes * centered).iter().copied().collect())
    }

    /// `mean + sum_k c_k mode_k`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (k, c) in coeffs.iter().enumerate().take(self.n_modes()) {
            for (o, m) in out.iter_mut().zip(self.modes.row(k).iter()) {
                *o += c * m;
            }
        }
        out
    }

    /// Sum of the leading `k` variance ratios.
    pub fn top_ratio(&self, k: usize) -> f64 {
        self.explained_variance_ratio.iter().take(k).sum()
    }
}

/// Eigendecomposition of the sample covariance of the rows, computed via
/// the `n x n` Gram matrix of the centered rows. Modes with negligible
/// variance are dropped. Each mode's largest-magnitude entry is positive.
pub fn pca(emb: &EmbeddingMatrix) -> Result<PcaResult> {
    let n = emb.n_samples();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    let mean: Vec<f64> = emb.rows.column_iter().map(|c| c.mean()).collect();
    let mut centered = emb.rows.clone();
    for mut row in centered.row_iter_mut() {
        for (x, m) in row.iter_mut().zip(&mean) {
            *x -= m;
        }
    }
    let gram = &centered * centered.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&k| eig.eigenvalues[k] > 1e-12 * top && top > 0.0)
        .collect();

    let dim = emb.dim();
    let mut modes = DMatrix::zeros(keep.len(), dim);
    let mut eigenvalues = Vec::with_capacity(keep.len());
    for (r, &k) in keep.iter().enumerate() {
        let mu = eig.eigenvalues[k];
        let mut mode = centered.transpose() * eig.eigenvectors.column(k) / mu.sqrt();
        mode /= mode.norm();
        let lead = mode.iter().copied().fold(
            0.0f64,
            |best, x| if x.abs() > best.abs() { x } else { best },
        );
        if lead < 0.0 {
            mode = -mode;
        }
        modes.row_mut(r).copy_from(&mode.transpose());
        eigenvalues.push(mu / (n - 1) as f64);
    }
    let total: f64 = eigenvalues.iter().sum();
    let explained_variance_ratio = eigenvalues
        .iter()
        .map(|l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    Ok(PcaResult {
        modes,
        eigenvalues,
        mean,
        explained_variance_ratio,
    })
}

/// Exponential map of an embedding row at the reference measure, in the
/// units of the input domain. Growth rates below `-2` are clamped with a
/// warning.
pub fn exp_embedding_row(
    mu0: &DiscreteMeasure,
    row: &[f64],
    metric: Metric,
    kappa: f64,
) -> Result<DiscreteMeasure> {
    let ref_k = rescale_domain(mu0, kappa)?;
    let unit: Vec<f64> = row.iter().map(|x| x / kappa).collect();
    let out = match metric {
        Metric::Hk => {
            let mut tf = unflatten_hk(&ref_k, &unit)?;
            let clamped = tf.alpha0.iter().filter(|&&a| a < -2.0).count();
            if clamped > 0 {
                log::warn!("{clamped} growth rates below -2 clamped to the boundary of the exponential map");
                tf.alpha0.iter_mut().for_each(|a| *a = a.max(-2.0));
            }
            hk_exp(&ref_k, &tf)?
        }
        Metric::W2 => w2_exp(&ref_k, &unflatten_w2(&ref_k, &unit)?)?,
    };
    rescale_domain(&out, 1.0 / kappa)
}

/// Image of `mean + s sqrt(lambda_k) mode_k` under the exponential map,
/// rasterized on `grid` (so `s` counts standard deviations along mode
/// `k`, zero-based). Points are clamped into the grid box first.
pub fn exp_along_mode(
    emb: &EmbeddingMatrix,
    pca: &PcaResult,
    mode_index: usize,
    s: f64,
    grid: &GridSpec,
) -> Result<DiscreteMeasure> {
    if mode_index >= pca.n_modes() {
        return Err(Error::InvalidArgument(format!(
            "mode {mode_index} requested, only {} available",
            pca.n_modes()
        )));
    }
    let sd = pca.eigenvalues[mode_index].sqrt();
    let row: Vec<f64> = pca
        .mean
        .iter()
        .zip(pca.modes.row(mode_index).iter())
        .map(|(m, v)| m + s * sd * v)
        .collect();
    let mu = exp_embedding_row(&emb.reference, &row, emb.metric, emb.kappa)?;
    let bbox = grid.bounding_box();
    let coords = mu
        .coords()
        .chunks_exact(mu.dim())
        .flat_map(|p| {
            p.iter()
                .enumerate()
                .map(|(k, x)| x.clamp(bbox.min[k], bbox.max[k]))
                .collect::<Vec<_>>()
        })
        .collect();
    rasterize(
        &DiscreteMeasure::new(mu.dim(), coords, mu.masses().to_vec())?,
        grid,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(rows: &[&[f64]]) -> EmbeddingMatrix {
        let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
        EmbeddingMatrix {
            rows: m,
            labels: None,
            reference: DiscreteMeasure::empty(2),
            metric: Metric::Hk,
            kappa: 1.0,
        }
    }

    #[test]
    fn line_has_one_mode() {
        let p = pca(&emb(&[
            &[0.0, 0.0, 1.0],
            &[1.0, 2.0, 1.0],
            &[2.0, 4.0, 1.0],
            &[-1.0, -2.0, 1.0],
        ]))
        .unwrap();
        assert_eq!(p.n_modes(), 1);
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        let m = p.modes.row(0);
        assert!(
            (m[0] - 1.0 / 5f64.sqrt()).abs() < 1e-12 && (m[1] - 2.0 / 5f64.sqrt()).abs() < 1e-12
        );
        assert!((p.eigenvalues[0] - 5.0 * 5.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn isotropic_cloud_has_equal_eigenvalues() {
        let p = pca(&emb(&[
            &[1.0, 0.0],
            &[-1.0, 0.0],
            &[0.0, 1.0],
            &[0.0, -1.0],
        ]))
        .unwrap();
        assert_eq!(p.n_modes(), 2);
        assert!((p.eigenvalues[0] - p.eigenvalues[1]).abs() < 1e-12);
    }

    #[test]
    fn too_few_rows() {
        assert!(pca(&emb(&[&[1.0, 2.0]])).is_err());
    }

    #[test]
    fn modes_orthonormal_and_reconstruct() {
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|i| {
                (0..5)
                    .map(|j| ((i * 7 + j * 3) % 11) as f64 * 0.3 - (i as f64).sin())
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let e = emb(&refs);
        let p = pca(&e).unwrap();
        let gram = &p.modes * p.modes.transpose();
        assert!((gram - DMatrix::identity(p.n_modes(), p.n_modes())).amax() < 1e-9);
        assert!((p.explained_variance_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        for r in &rows {
            let back = p.reconstruct(&p.project(r).unwrap());
            assert!(back.iter().zip(r).all(|(a, b)| (a - b).abs() < 1e-6));
        }
    }
}
