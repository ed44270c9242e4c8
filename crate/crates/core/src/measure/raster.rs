use super::{DiscreteMeasure, GridImage, GridSpec};
use crate::error::{Error, Result};

/// Splits each point's mass over the (at most four) surrounding grid nodes
/// with bilinear weights. Points up to one cell outside the grid are clamped
/// onto its boundary; anything further out is rejected.
pub fn rasterize_dense(mu: &DiscreteMeasure, grid: &GridSpec) -> Result<GridImage> {
    if mu.dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "rasterization needs planar points, got dimension {}",
            mu.dim()
        )));
    }
    let mut values = vec![0.0; grid.len()];
    for (index, (p, &m)) in mu.points().zip(mu.masses()).enumerate() {
        if m == 0.0 {
            continue;
        }
        let (fc, fr) = grid.fractional(p);
        let (c0, wc) = axis_weights(fc, grid.cols).ok_or(Error::OutsideGrid { index })?;
        let (r0, wr) = axis_weights(fr, grid.rows).ok_or(Error::OutsideGrid { index })?;
        let c1 = (c0 + 1).min(grid.cols - 1);
        let r1 = (r0 + 1).min(grid.rows - 1);
        values[r0 * grid.cols + c0] += m * (1.0 - wr) * (1.0 - wc);
        values[r0 * grid.cols + c1] += m * (1.0 - wr) * wc;
        values[r1 * grid.cols + c0] += m * wr * (1.0 - wc);
        values[r1 * grid.cols + c1] += m * wr * wc;
    }
    GridImage::new(*grid, values)
}

/// Bilinear rasterization returning the nodes that received mass.
pub fn rasterize(mu: &DiscreteMeasure, grid: &GridSpec) -> Result<DiscreteMeasure> {
    Ok(rasterize_dense(mu, grid)?.to_measure())
}

/// Lower node index and weight of the upper node along one axis.
fn axis_weights(f: f64, n: usize) -> Option<(usize, f64)> {
    let last = (n - 1) as f64;
    if !(f >= -1.0 && f <= last + 1.0) {
        return None;
    }
    let f = f.clamp(0.0, last);
    if n == 1 {
        return Some((0, 0.0));
    }
    let i = (f.floor() as usize).min(n - 2);
    Some((i, f - i as f64))
}
