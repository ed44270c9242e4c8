//! Discrete non-negative measures: weighted point clouds and pixel grids.

mod ellipses;
pub mod io;
mod raster;

pub use ellipses::{ellipse_masses, ellipses_image, gen_ellipses, EllipseLayout};
pub use raster::{rasterize, rasterize_dense};

use crate::error::{Error, Result};

/// Axis-aligned box containing the support of a measure.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BoundingBox {
    pub fn of_coords(dim: usize, coords: &[f64]) -> Self {
        if coords.is_empty() {
            return Self {
                min: vec![0.0; dim],
                max: vec![0.0; dim],
            };
        }
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for p in coords.chunks_exact(dim) {
            for k in 0..dim {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        Self { min, max }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(&x, (&lo, &hi))| lo <= x && x <= hi)
    }

    pub fn diameter(&self) -> f64 {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }
}

/// A finite non-negative measure `sum_i m_i delta_{x_i}` on a box in R^d.
///
/// Points are stored flat (`coords[i*dim..(i+1)*dim]`). Zero masses are
/// allowed in the type; loaders drop them.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    masses: Vec<f64>,
    domain: BoundingBox,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, coords: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "dimension must be at least 1".into(),
            ));
        }
        if coords.len() != dim * masses.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for {} points of dimension {dim}",
                coords.len(),
                masses.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite coordinate in point {}",
                i / dim
            )));
        }
        for (index, &mass) in masses.iter().enumerate() {
            if mass.is_nan() || mass < 0.0 {
                return Err(Error::NegativeMass { index, mass });
            }
            if !mass.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "infinite mass at index {index}"
                )));
            }
        }
        let domain = BoundingBox::of_coords(dim, &coords);
        Ok(Self {
            dim,
            coords,
            masses,
            domain,
        })
    }

    /// Builds a planar measure from `(x, y)` pairs.
    pub fn from_points_2d(points: &[[f64; 2]], masses: &[f64]) -> Result<Self> {
        let coords = points.iter().flat_map(|p| p.iter().copied()).collect();
        Self::new(2, coords, masses.to_vec())
    }

    pub fn dirac(point: &[f64], mass: f64) -> Result<Self> {
        Self::new(point.len(), point.to_vec(), vec![mass])
    }

    /// The zero measure in dimension `dim`.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
            masses: Vec::new(),
            domain: BoundingBox::of_coords(dim, &[]),
        }
    }

    /// Replaces the domain box; every point must lie inside it.
    pub fn with_domain(mut self, domain: BoundingBox) -> Result<Self> {
        if domain.min.len() != self.dim || domain.max.len() != self.dim {
            return Err(Error::DimensionMismatch("domain box dimension".into()));
        }
        if let Some(i) = (0..self.len()).find(|&i| !domain.contains(self.point(i))) {
            return Err(Error::InvalidArgument(format!(
                "point {i} lies outside the domain box"
            )));
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn domain(&self) -> &BoundingBox {
        &self.domain
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Copy with zero-mass points removed.
    pub fn drop_zeros(&self) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.masses[i] > 0.0).collect();
        let coords = keep
            .iter()
            .flat_map(|&i| self.point(i).iter().copied())
            .collect();
        let masses = keep.iter().map(|&i| self.masses[i]).collect();
        Self {
            dim: self.dim,
            coords,
            masses,
            domain: self.domain.clone(),
        }
    }

    /// Same support, masses replaced. Lengths must agree.
    pub fn with_masses(&self, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} masses for {} points",
                masses.len(),
                self.len()
            )));
        }
        let mut out = Self::new(self.dim, self.coords.clone(), masses)?;
        out.domain = self.domain.clone();
        Ok(out)
    }

    /// Multiplies every mass by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        self.with_masses(self.masses.iter().map(|m| m * factor).collect())
    }

    /// True when both measures list the same points in the same order.
    pub fn same_support(&self, other: &Self) -> bool {
        self.dim == other.dim && self.coords == other.coords
    }

    /// Concatenation of the two point lists (no merging of coincident points).
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "dimensions {} and {}",
                self.dim, other.dim
            )));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        let mut masses = self.masses.clone();
        masses.extend_from_slice(&other.masses);
        Self::new(self.dim, coords, masses)
    }
}

/// Rescales masses to total mass one. Locations are untouched.
pub fn normalize(mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    let total = mu.total_mass();
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    mu.with_masses(mu.masses.iter().map(|m| m / total).collect())
}

/// Divides every coordinate (and the domain box) by `kappa`.
///
/// Computing the unit-scale distance on the rescaled measures and multiplying
/// by `kappa` yields the distance with transport length scale `kappa`.
pub fn rescale_domain(mu: &DiscreteMeasure, kappa: f64) -> Result<DiscreteMeasure> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "length scale must be positive, got {kappa}"
        )));
    }
    let coords = mu.coords.iter().map(|c| c / kappa).collect();
    let domain = BoundingBox {
        min: mu.domain.min.iter().map(|c| c / kappa).collect(),
        max: mu.domain.max.iter().map(|c| c / kappa).collect(),
    };
    Ok(DiscreteMeasure {
        dim: mu.dim,
        coords,
        masses: mu.masses.clone(),
        domain,
    })
}

/// Regular planar grid. Node `(r, c)` sits at `origin + (c * dx, r * dy)`:
/// columns run along x, rows along y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, origin: [f64; 2], spacing: [f64; 2]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid shape {rows}x{cols} must be at least 1x1"
            )));
        }
        if !(spacing[0] > 0.0 && spacing[1] > 0.0) || !spacing.iter().all(|s| s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid spacing {spacing:?} must be positive"
            )));
        }
        if !origin.iter().all(|o| o.is_finite()) {
            return Err(Error::InvalidArgument("grid origin must be finite".into()));
        }
        Ok(Self {
            rows,
            cols,
            origin,
            spacing,
        })
    }

    /// Unit-spaced pixel grid with node `(r, c)` at `(c, r)`.
    pub fn pixels(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, [0.0, 0.0], [1.0, 1.0])
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, r: usize, c: usize) -> [f64; 2] {
        [
            self.origin[0] + c as f64 * self.spacing[0],
            self.origin[1] + r as f64 * self.spacing[1],
        ]
    }

    /// Grid coordinates in units of cells, `(column, row)`.
    pub fn fractional(&self, p: &[f64]) -> (f64, f64) {
        (
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
        )
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let far = self.node(self.rows - 1, self.cols - 1);
        BoundingBox {
            min: self.origin.to_vec(),
            max: far.to_vec(),
        }
    }

    /// The grid with every length divided by `kappa`.
    pub fn rescaled(&self, kappa: f64) -> Result<Self> {
        Self::new(
            self.rows,
            self.cols,
            [self.origin[0] / kappa, self.origin[1] / kappa],
            [self.spacing[0] / kappa, self.spacing[1] / kappa],
        )
    }

    /// Uniform measure of total mass one on all nodes.
    pub fn uniform_measure(&self) -> DiscreteMeasure {
        GridImage {
            grid: *self,
            values: vec![1.0 / self.len() as f64; self.len()],
        }
        .to_measure()
    }
}

/// Dense row-major image of node masses on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl GridImage {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.rows,
                grid.cols
            )));
        }
        if let Some(index) = values.iter().position(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::NegativeMass {
                index,
                mass: values[index],
            });
        }
        Ok(Self { grid, values })
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Point cloud on the nodes with positive mass.
    pub fn to_measure(&self) -> DiscreteMeasure {
        let mut coords = Vec::new();
        let mut masses = Vec::new();
        for r in 0..self.grid.rows {
            for c in 0..self.grid.cols {
                let m = self.values[r * self.grid.cols + c];
                if m > 0.0 {
                    coords.extend_from_slice(&self.grid.node(r, c));
                    masses.push(m);
                }
            }
        }
        let domain = self.grid.bounding_box();
        DiscreteMeasure {
            dim: 2,
            domain,
            coords,
            masses,
        }
    }
}
