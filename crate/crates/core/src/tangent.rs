//! Logarithmic and exponential maps at a reference measure, the tangent
//! inner product and linearized distances, for HK and for W2.
//!
//! Plans are turned into maps by barycentric projection: each source
//! point is sent to the mean of its targets under the plan.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use crate::cost::{hellinger_affinity, hellinger_sq_union};
use crate::error::{Error, Result};
use crate::measure::io::{csv_error, parse_f64};
use crate::measure::DiscreteMeasure;
use crate::solver::Coupling;

/// Split of both measures relative to a soft-marginal plan `pi`:
/// `mu0 = u0 sigma + mu0_perp` with `sigma = P0 pi`, and
/// `mu1 = u1 P1 pi + mu1_perp`.
#[derive(Debug, Clone, PartialEq)]
pub struct LebesgueDecomposition {
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
    /// Row marginal of the plan on the source support.
    pub sigma: DiscreteMeasure,
    /// Barycentric target of each source point (flat, `dim` per point);
    /// the point itself where `sigma` vanishes.
    pub transport_map: Vec<f64>,
    /// Source density w.r.t. `sigma`; zero where `sigma` vanishes.
    pub u0: Vec<f64>,
    /// Plan average of the target density for each source point.
    pub u1_of_t: Vec<f64>,
    /// Target density w.r.t. the plan's column marginal, per target point.
    pub u1: Vec<f64>,
    pub mu0_perp: DiscreteMeasure,
    pub mu1_perp: DiscreteMeasure,
}

impl LebesgueDecomposition {
    pub fn target_of(&self, i: usize) -> &[f64] {
        let d = self.source.dim();
        &self.transport_map[i * d..(i + 1) * d]
    }

    /// Whether source point `i` takes part in transport.
    pub fn is_transported(&self, i: usize) -> bool {
        self.sigma.mass(i) > 0.0
    }
}

/// Smallest source mass accepted on a transported point.
const MIN_TRANSPORTED_MASS: f64 = 1e-12;

/// Barycentric projection of a plan.
///
/// A source point is singular (in `mu0_perp`) when its plan row is empty,
/// and a target point is singular when its plan column is empty. Entropic
/// plans keep positive mass on every pair within transport range, so only
/// points with no partner closer than `pi/2` end up singular.
pub fn barycentric_project(
    coupling: &Coupling,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
) -> Result<LebesgueDecomposition> {
    if mu0.dim() != mu1.dim() {
        return Err(Error::DimensionMismatch(format!(
            "dimensions {} and {}",
            mu0.dim(),
            mu1.dim()
        )));
    }
    let (n0, n1, dim) = (mu0.len(), mu1.len(), mu0.dim());
    if coupling.weights.nrows() != n0 || coupling.weights.ncols() != n1 {
        return Err(Error::DimensionMismatch(format!(
            "coupling is {}x{} but supports have {n0} and {n1} points",
            coupling.weights.nrows(),
            coupling.weights.ncols()
        )));
    }
    let nu1 = &coupling.col_marginal;
    let u1: Vec<f64> = (0..n1)
        .map(|j| {
            if nu1[j] > 0.0 {
                mu1.mass(j) / nu1[j]
            } else {
                0.0
            }
        })
        .collect();
    let perp1: Vec<f64> = (0..n1)
        .map(|j| if nu1[j] > 0.0 { 0.0 } else { mu1.mass(j) })
        .collect();

    let mut sigma = vec![0.0; n0];
    let mut transport_map = vec![0.0; n0 * dim];
    let mut u0 = vec![0.0; n0];
    let mut u1_of_t = vec![0.0; n0];
    let mut perp0 = vec![0.0; n0];
    for i in 0..n0 {
        let s = coupling.row_marginal[i];
        let t = &mut transport_map[i * dim..(i + 1) * dim];
        if s <= 0.0 {
            perp0[i] = mu0.mass(i);
            t.copy_from_slice(mu0.point(i));
            continue;
        }
        if mu0.mass(i) < MIN_TRANSPORTED_MASS {
            return Err(Error::InconsistentDecomposition(format!(
                "source point {i} has mass {} but sends {s} under the plan",
                mu0.mass(i)
            )));
        }
        sigma[i] = s;
        u0[i] = (mu0.mass(i) / s).max(1e-15);
        let mut avg = 0.0;
        for j in 0..n1 {
            let w = coupling.weights[(i, j)] / s;
            if w > 0.0 {
                for (tk, xk) in t.iter_mut().zip(mu1.point(j)) {
                    *tk += w * xk;
                }
                avg += w * u1[j];
            }
        }
        u1_of_t[i] = avg;
    }
    Ok(LebesgueDecomposition {
        source: mu0.clone(),
        target: mu1.clone(),
        sigma: mu0.with_masses(sigma)?,
        transport_map,
        u0,
        u1_of_t,
        u1,
        mu0_perp: mu0.with_masses(perp0)?.drop_zeros(),
        mu1_perp: mu1.with_masses(perp1)?.drop_zeros(),
    })
}

/// HK tangent vector at a reference measure: velocity `v0`, relative
/// growth rate `alpha0` per reference point, and the created mass
/// `mu1_perp` (paired through square roots of its masses).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField {
    pub dim: usize,
    /// Flat, `dim` entries per reference point.
    pub v0: Vec<f64>,
    pub alpha0: Vec<f64>,
    pub mu1_perp: DiscreteMeasure,
}

impl TangentField {
    pub fn zeros(mu0: &DiscreteMeasure) -> Self {
        Self {
            dim: mu0.dim(),
            v0: vec![0.0; mu0.len() * mu0.dim()],
            alpha0: vec![0.0; mu0.len()],
            mu1_perp: DiscreteMeasure::empty(mu0.dim()),
        }
    }

    pub fn len(&self) -> usize {
        self.alpha0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha0.is_empty()
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.v0[i * self.dim..(i + 1) * self.dim]
    }

    /// Scales `(v0, alpha0)` by `s` and the created mass by `s^2`, i.e.
    /// its square root by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Ok(Self {
            dim: self.dim,
            v0: self.v0.iter().map(|v| s * v).collect(),
            alpha0: self.alpha0.iter().map(|a| s * a).collect(),
            mu1_perp: self.mu1_perp.scaled(s * s)?.drop_zeros(),
        })
    }

    fn check(&self, mu0: &DiscreteMeasure) -> Result<()> {
        if self.len() != mu0.len()
            || self.dim != mu0.dim()
            || self.v0.len() != self.len() * self.dim
        {
            return Err(Error::SupportMismatch(format!(
                "tangent field has {} points of dimension {}, reference has {} of dimension {}",
                self.len(),
                self.dim,
                mu0.len(),
                mu0.dim()
            )));
        }
        if self.mu1_perp.dim() != self.dim {
            return Err(Error::DimensionMismatch("singular part dimension".into()));
        }
        Ok(())
    }
}

/// HK logarithmic map of `mu1` at `mu0` through a barycentric projection.
pub fn hk_log(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    decomp: &LebesgueDecomposition,
) -> Result<TangentField> {
    if decomp.source.coords() != mu0.coords() || decomp.source.masses() != mu0.masses() {
        return Err(Error::InconsistentDecomposition(
            "decomposition was built for another source measure".into(),
        ));
    }
    if decomp.target.len() != mu1.len() || decomp.target.coords() != mu1.coords() {
        return Err(Error::InconsistentDecomposition(
            "decomposition was built for another target measure".into(),
        ));
    }
    let dim = mu0.dim();
    let mut tf = TangentField::zeros(mu0);
    tf.mu1_perp = decomp.mu1_perp.clone();
    for i in 0..mu0.len() {
        if !decomp.is_transported(i) {
            tf.alpha0[i] = -2.0;
            continue;
        }
        let u0 = decomp.u0[i];
        if !(u0 > 0.0) {
            return Err(Error::InconsistentDecomposition(format!(
                "zero source density on transported point {i}"
            )));
        }
        let x = mu0.point(i);
        let t = decomp.target_of(i);
        let d = crate::cost::distance(x, t);
        if d >= FRAC_PI_2 {
            return Err(Error::BeyondTransportRange(d));
        }
        let r = (decomp.u1_of_t[i] / u0).sqrt();
        if d > 0.0 {
            let scale = r * d.sin() / d;
            for k in 0..dim {
                tf.v0[i * dim + k] = (t[k] - x[k]) * scale;
            }
        }
        tf.alpha0[i] = 2.0 * (r * d.cos() - 1.0);
    }
    Ok(tf)
}

/// HK exponential map: pushes `q^2 mu0` along `x + phi v0/|v0|` and adds
/// the created mass. Fails when some `alpha0 < -2`.
pub fn hk_exp(mu0: &DiscreteMeasure, tf: &TangentField) -> Result<DiscreteMeasure> {
    tf.check(mu0)?;
    let dim = mu0.dim();
    let mut coords = Vec::with_capacity(mu0.coords().len());
    let mut masses = Vec::with_capacity(mu0.len());
    for i in 0..mu0.len() {
        let alpha = tf.alpha0[i];
        if alpha < -2.0 || alpha.is_nan() {
            return Err(Error::OutsideExpDomain(format!(
                "growth rate {alpha} below -2 at point {i}"
            )));
        }
        let v = tf.velocity(i);
        let a = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        let b = alpha / 2.0 + 1.0;
        let q2 = a * a + b * b;
        if q2 == 0.0 {
            continue;
        }
        let x = mu0.point(i);
        if a > 0.0 {
            let phi = a.atan2(b);
            coords.extend(x.iter().zip(v).map(|(xk, vk)| xk + phi * vk / a));
        } else {
            coords.extend_from_slice(x);
        }
        masses.push(q2 * mu0.mass(i));
    }
    let moved = DiscreteMeasure::new(dim, coords, masses)?.drop_zeros();
    moved.concat(&tf.mu1_perp)
}

/// Tangent inner product at `mu0`: `sum w (<v, v'> + alpha alpha' / 4)`
/// plus the Hellinger pairing `sum sqrt(m m')` of the created masses.
pub fn hk_inner(mu0: &DiscreteMeasure, tf1: &TangentField, tf2: &TangentField) -> Result<f64> {
    tf1.check(mu0)?;
    tf2.check(mu0)?;
    let mut total = 0.0;
    for i in 0..mu0.len() {
        let dot: f64 = tf1
            .velocity(i)
            .iter()
            .zip(tf2.velocity(i))
            .map(|(a, b)| a * b)
            .sum();
        total += mu0.mass(i) * (dot + 0.25 * tf1.alpha0[i] * tf2.alpha0[i]);
    }
    Ok(total + hellinger_affinity(&tf1.mu1_perp, &tf2.mu1_perp))
}

/// Linearized HK distance between two tangent vectors at `mu0`.
pub fn hk_lin_dist(mu0: &DiscreteMeasure, tf1: &TangentField, tf2: &TangentField) -> Result<f64> {
    tf1.check(mu0)?;
    tf2.check(mu0)?;
    let mut total = 0.0;
    for i in 0..mu0.len() {
        let dv: f64 = tf1
            .velocity(i)
            .iter()
            .zip(tf2.velocity(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let da = tf1.alpha0[i] - tf2.alpha0[i];
        total += mu0.mass(i) * (dv + 0.25 * da * da);
    }
    Ok((total + hellinger_sq_union(&tf1.mu1_perp, &tf2.mu1_perp)).sqrt())
}

/// Flattens `(v0, alpha0)` into `(v0 sqrt(w), alpha0 sqrt(w) / 2)` per
/// point, so Euclidean dot products of flattened fields equal
/// [`hk_inner`] without the singular term.
pub fn flatten_hk(mu0: &DiscreteMeasure, tf: &TangentField) -> Result<Vec<f64>> {
    tf.check(mu0)?;
    let mut out = Vec::with_capacity(mu0.len() * (mu0.dim() + 1));
    for i in 0..mu0.len() {
        let s = mu0.mass(i).sqrt();
        out.extend(tf.velocity(i).iter().map(|v| v * s));
        out.push(0.5 * tf.alpha0[i] * s);
    }
    Ok(out)
}

/// Inverse of [`flatten_hk`]; requires positive reference masses.
pub fn unflatten_hk(mu0: &DiscreteMeasure, row: &[f64]) -> Result<TangentField> {
    let (n, dim) = (mu0.len(), mu0.dim());
    if row.len() != n * (dim + 1) {
        return Err(Error::DimensionMismatch(format!(
            "row has {} entries, expected {}",
            row.len(),
            n * (dim + 1)
        )));
    }
    let mut tf = TangentField::zeros(mu0);
    for i in 0..n {
        let s = mu0.mass(i).sqrt();
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "reference point {i} has no mass"
            )));
        }
        let chunk = &row[i * (dim + 1)..(i + 1) * (dim + 1)];
        for k in 0..dim {
            tf.v0[i * dim + k] = chunk[k] / s;
        }
        tf.alpha0[i] = 2.0 * chunk[dim] / s;
    }
    Ok(tf)
}

/// W2 tangent vector: displacement of each reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct W2TangentField {
    pub dim: usize,
    pub v0: Vec<f64>,
}

impl W2TangentField {
    pub fn zeros(mu0: &DiscreteMeasure) -> Self {
        Self {
            dim: mu0.dim(),
            v0: vec![0.0; mu0.len() * mu0.dim()],
        }
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.v0[i * self.dim..(i + 1) * self.dim]
    }

    fn check(&self, mu0: &DiscreteMeasure) -> Result<()> {
        if self.dim != mu0.dim() || self.v0.len() != mu0.len() * mu0.dim() {
            return Err(Error::SupportMismatch(format!(
                "displacement field has {} entries, reference needs {}",
                self.v0.len(),
                mu0.len() * mu0.dim()
            )));
        }
        Ok(())
    }
}

/// W2 logarithmic map: barycentric target minus the point.
pub fn w2_log(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    coupling: &Coupling,
) -> Result<W2TangentField> {
    let decomp = barycentric_project(coupling, mu0, mu1)?;
    let dim = mu0.dim();
    let mut tf = W2TangentField::zeros(mu0);
    for i in 0..mu0.len() {
        for (k, (t, x)) in decomp.target_of(i).iter().zip(mu0.point(i)).enumerate() {
            tf.v0[i * dim + k] = t - x;
        }
    }
    Ok(tf)
}

/// W2 exponential map `(id + v0) # mu0`.
pub fn w2_exp(mu0: &DiscreteMeasure, tf: &W2TangentField) -> Result<DiscreteMeasure> {
    tf.check(mu0)?;
    let coords = mu0
        .coords()
        .iter()
        .zip(&tf.v0)
        .map(|(x, v)| x + v)
        .collect();
    DiscreteMeasure::new(mu0.dim(), coords, mu0.masses().to_vec())
}

/// Linearized W2 distance `|v1 - v2|_{L2(mu0)}`.
pub fn w2_lin_dist(
    mu0: &DiscreteMeasure,
    tf1: &W2TangentField,
    tf2: &W2TangentField,
) -> Result<f64> {
    tf1.check(mu0)?;
    tf2.check(mu0)?;
    let mut total = 0.0;
    for i in 0..mu0.len() {
        let dv: f64 = tf1
            .velocity(i)
            .iter()
            .zip(tf2.velocity(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += mu0.mass(i) * dv;
    }
    Ok(total.sqrt())
}

/// Flattens a displacement field into `v0 sqrt(w)`.
pub fn flatten_w2(mu0: &DiscreteMeasure, tf: &W2TangentField) -> Result<Vec<f64>> {
    tf.check(mu0)?;
    let dim = mu0.dim();
    Ok((0..mu0.len() * dim)
        .map(|k| tf.v0[k] * mu0.mass(k / dim).sqrt())
        .collect())
}

pub fn unflatten_w2(mu0: &DiscreteMeasure, row: &[f64]) -> Result<W2TangentField> {
    let dim = mu0.dim();
    if row.len() != mu0.len() * dim {
        return Err(Error::DimensionMismatch(format!(
            "row has {} entries, expected {}",
            row.len(),
            mu0.len() * dim
        )));
    }
    let mut v0 = Vec::with_capacity(row.len());
    for (k, r) in row.iter().enumerate() {
        let s = mu0.mass(k / dim).sqrt();
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "reference point {} has no mass",
                k / dim
            )));
        }
        v0.push(r / s);
    }
    Ok(W2TangentField { dim, v0 })
}

/// Writes a planar tangent field as CSV with columns
/// `x,y,mass,vx,vy,alpha`. The created mass is not included.
pub fn tangent_csv_string(
    mu0: &DiscreteMeasure,
    tf: &TangentField,
    comments: &[String],
) -> Result<String> {
    tf.check(mu0)?;
    if mu0.dim() != 2 {
        return Err(Error::DimensionMismatch(
            "tangent CSV holds planar fields only".into(),
        ));
    }
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str("x,y,mass,vx,vy,alpha\n");
    for i in 0..mu0.len() {
        let (p, v) = (mu0.point(i), tf.velocity(i));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p[0],
            p[1],
            mu0.mass(i),
            v[0],
            v[1],
            tf.alpha0[i]
        );
    }
    Ok(out)
}

/// Parses the output of [`tangent_csv_string`]. Returns the reference
/// measure (zero masses kept, so rows stay aligned) and the field with an
/// empty singular part.
pub fn parse_tangent_csv(text: &str) -> Result<(DiscreteMeasure, TangentField)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    let expected = ["x", "y", "mass", "vx", "vy", "alpha"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header '{}'", expected.join(",")),
        });
    }
    let (mut coords, mut masses, mut v0, mut alpha0) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 6 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 6 fields, got {}", record.len()),
            });
        }
        let f: Vec<f64> = record
            .iter()
            .map(|s| parse_f64(s, line))
            .collect::<Result<_>>()?;
        if f[2] < 0.0 {
            return Err(Error::NegativeMass { index, mass: f[2] });
        }
        coords.extend_from_slice(&f[0..2]);
        masses.push(f[2]);
        v0.extend_from_slice(&f[3..5]);
        alpha0.push(f[5]);
    }
    let mu0 = DiscreteMeasure::new(2, coords, masses)?;
    Ok((
        mu0,
        TangentField {
            dim: 2,
            v0,
            alpha0,
            mu1_perp: DiscreteMeasure::empty(2),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{brute_force_hk, solve_hk, SolverConfig};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn pts(p: &[[f64; 2]], m: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_points_2d(p, m).unwrap()
    }

    #[test]
    fn deterministic_coupling_maps_exactly() {
        let mu0 = pts(&[[0.0, 0.0], [1.0, 0.0]], &[1.0, 1.0]);
        let mu1 = pts(&[[0.3, 0.2], [1.1, 0.4]], &[1.0, 1.0]);
        let plan = Coupling::from_weights(DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.8]));
        let d = barycentric_project(&plan, &mu0, &mu1).unwrap();
        assert_eq!(d.target_of(0), &[0.3, 0.2]);
        assert_eq!(d.target_of(1), &[1.1, 0.4]);
    }

    #[test]
    fn empty_plan_is_all_singular() {
        let mu0 = pts(&[[0.0, 0.0], [1.0, 0.0]], &[1.0, 2.0]);
        let mu1 = pts(&[[5.0, 0.0]], &[3.0]);
        let d =
            barycentric_project(&Coupling::from_weights(DMatrix::zeros(2, 1)), &mu0, &mu1).unwrap();
        assert_eq!(d.sigma.total_mass(), 0.0);
        assert_eq!(d.mu0_perp, mu0);
        assert_eq!(d.mu1_perp, mu1);
    }

    #[test]
    fn split_row_maps_to_mean() {
        let mu0 = pts(&[[0.0, 0.0]], &[1.0]);
        let mu1 = pts(&[[0.2, 0.0], [0.0, 0.4]], &[1.0, 1.0]);
        let plan = Coupling::from_weights(DMatrix::from_row_slice(1, 2, &[0.5, 0.5]));
        let d = barycentric_project(&plan, &mu0, &mu1).unwrap();
        assert!((d.target_of(0)[0] - 0.1).abs() < 1e-15 && (d.target_of(0)[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn decomposition_invariants() {
        let mu0 = pts(&[[0.0, 0.0], [0.5, 0.1], [4.0, 4.0]], &[0.3, 0.5, 0.2]);
        let mu1 = pts(&[[0.2, 0.1], [0.6, 0.0], [-4.0, 0.0]], &[0.6, 0.2, 0.4]);
        let plan = solve_hk(&mu0, &mu1, &SolverConfig::default()).unwrap();
        let d = barycentric_project(&plan, &mu0, &mu1).unwrap();
        for i in 0..3 {
            let perp = if d.is_transported(i) {
                0.0
            } else {
                mu0.mass(i)
            };
            assert!((d.u0[i] * d.sigma.mass(i) + perp - mu0.mass(i)).abs() < 1e-9);
        }
        assert_eq!(d.mu0_perp.len(), 1);
        assert_eq!(d.mu1_perp.masses(), &[0.4]);
        let covered: f64 = (0..3).map(|i| d.u1_of_t[i] * d.sigma.mass(i)).sum();
        assert!((d.mu1_perp.total_mass() - (mu1.total_mass() - covered)).abs() < 1e-9);
    }

    #[test]
    fn log_at_base_point_is_zero() {
        let mu0 = pts(&[[0.0, 0.0], [0.3, 0.1], [0.1, 0.6]], &[0.3, 0.5, 0.2]);
        let plan = brute_force_hk(&mu0, &mu0).unwrap();
        let tf = hk_log(&mu0, &mu0, &barycentric_project(&plan, &mu0, &mu0).unwrap()).unwrap();
        assert!(tf.v0.iter().all(|v| v.abs() < 1e-3), "{:?}", tf.v0);
        assert!(tf.alpha0.iter().all(|a| a.abs() < 1e-3), "{:?}", tf.alpha0);
        assert!(tf.mu1_perp.is_empty());
    }

    #[test]
    fn log_of_unit_diracs() {
        let th = 0.6;
        let mu0 = pts(&[[0.0, 0.0]], &[1.0]);
        let mu1 = pts(&[[0.0, th]], &[1.0]);
        let plan = brute_force_hk(&mu0, &mu1).unwrap();
        let tf = hk_log(&mu0, &mu1, &barycentric_project(&plan, &mu0, &mu1).unwrap()).unwrap();
        assert!(tf.v0[0].abs() < 1e-12 && (tf.v0[1] - th.sin()).abs() < 1e-9);
        assert!((tf.alpha0[0] - 2.0 * (th.cos() - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn log_of_scaled_copy() {
        let mu0 = pts(&[[0.0, 0.0]], &[0.7]);
        let mu1 = mu0.scaled(4.0).unwrap();
        let plan = brute_force_hk(&mu0, &mu1).unwrap();
        let tf = hk_log(&mu0, &mu1, &barycentric_project(&plan, &mu0, &mu1).unwrap()).unwrap();
        assert_eq!(tf.v0, vec![0.0, 0.0]);
        assert!((tf.alpha0[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn log_on_singular_points() {
        let mu0 = pts(&[[0.0, 0.0], [5.0, 5.0]], &[1.0, 1.0]);
        let mu1 = pts(&[[0.1, 0.0]], &[1.0]);
        let plan = solve_hk(&mu0, &mu1, &SolverConfig::default()).unwrap();
        let tf = hk_log(&mu0, &mu1, &barycentric_project(&plan, &mu0, &mu1).unwrap()).unwrap();
        assert_eq!(tf.alpha0[1], -2.0);
        assert_eq!(tf.velocity(1), &[0.0, 0.0]);
        assert!(tf.alpha0[0] > -2.0);
    }

    #[test]
    fn exp_of_zero_and_pure_growth() {
        let mu0 = pts(&[[0.0, 0.0], [0.3, 0.1]], &[0.3, 0.5]);
        assert_eq!(hk_exp(&mu0, &TangentField::zeros(&mu0)).unwrap(), mu0);
        let mut tf = TangentField::zeros(&mu0);
        tf.alpha0 = vec![2.0, 2.0];
        assert_eq!(hk_exp(&mu0, &tf).unwrap().masses(), &[1.2, 2.0]);
        tf.alpha0[0] = -2.5;
        assert!(matches!(hk_exp(&mu0, &tf), Err(Error::OutsideExpDomain(_))));
    }

    #[test]
    fn exp_inverts_log_of_dirac() {
        let mu0 = pts(&[[0.0, 0.0]], &[1.5]);
        let mu1 = pts(&[[0.4, -0.5]], &[0.7]);
        let plan = brute_force_hk(&mu0, &mu1).unwrap();
        let d = barycentric_project(&plan, &mu0, &mu1).unwrap();
        let back = hk_exp(&mu0, &hk_log(&mu0, &mu1, &d).unwrap()).unwrap();
        assert!((back.point(0)[0] - 0.4).abs() < 1e-9 && (back.point(0)[1] + 0.5).abs() < 1e-9);
        assert!((back.mass(0) - 0.7).abs() < 1e-9);
    }

    #[test]
    fn inner_product_examples() {
        let mu0 = pts(&[[0.0, 0.0], [1.0, 0.0]], &[0.5, 2.0]);
        let mut a = TangentField::zeros(&mu0);
        a.v0 = vec![1.0, 2.0, 0.0, -1.0];
        a.alpha0 = vec![0.4, -1.0];
        a.mu1_perp = pts(&[[3.0, 3.0]], &[4.0]);
        let mut b = a.clone();
        b.mu1_perp = pts(&[[3.0, 4.0]], &[1.0]);
        let expected = 0.5 * (5.0 + 0.04) + 2.0 * (1.0 + 0.25);
        assert!((hk_inner(&mu0, &a, &b).unwrap() - expected).abs() < 1e-12);
        assert_eq!(hk_inner(&mu0, &a, &TangentField::zeros(&mu0)).unwrap(), 0.0);
        assert_eq!(hk_lin_dist(&mu0, &a, &a).unwrap(), 0.0);
        let bad = TangentField::zeros(&pts(&[[0.0, 0.0]], &[1.0]));
        assert!(matches!(
            hk_inner(&mu0, &a, &bad),
            Err(Error::SupportMismatch(_))
        ));
    }

    #[test]
    fn w2_examples() {
        let mu0 = pts(&[[0.0, 0.0]], &[1.0]);
        let mu1 = pts(&[[3.0, 4.0]], &[1.0]);
        let plan = Coupling::from_weights(DMatrix::from_element(1, 1, 1.0));
        let tf = w2_log(&mu0, &mu1, &plan).unwrap();
        assert_eq!(tf.v0, vec![3.0, 4.0]);
        assert_eq!(
            w2_lin_dist(&mu0, &tf, &W2TangentField::zeros(&mu0)).unwrap(),
            5.0
        );
        assert_eq!(w2_exp(&mu0, &tf).unwrap(), mu1);
        let same = w2_log(&mu0, &mu0, &plan).unwrap();
        assert_eq!(same.v0, vec![0.0, 0.0]);
    }

    #[test]
    fn tangent_csv_round_trip() {
        let mu0 = pts(&[[0.0, 0.5], [1.25, 0.1]], &[0.3, 0.7]);
        let mut tf = TangentField::zeros(&mu0);
        tf.v0 = vec![0.1, -0.2, 1.0 / 3.0, 0.0];
        tf.alpha0 = vec![-2.0, 0.123456789];
        let text = tangent_csv_string(&mu0, &tf, &["run".into()]).unwrap();
        let (m, t) = parse_tangent_csv(&text).unwrap();
        assert_eq!(m, mu0);
        assert_eq!(t, tf);
        assert!(parse_tangent_csv("x,y,mass\n1,2,3\n").is_err());
        assert!(parse_tangent_csv("x,y,mass,vx,vy,alpha\n1,2,-3,0,0,0\n").is_err());
    }

    proptest! {
        #[test]
        fn flatten_round_trip(v in prop::collection::vec(-2.0..2.0f64, 9), m in prop::collection::vec(0.01..3.0f64, 3)) {
            let mu0 = pts(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &m);
            let tf = TangentField { dim: 2, v0: v[..6].to_vec(), alpha0: v[6..].to_vec(), mu1_perp: DiscreteMeasure::empty(2) };
            let row = flatten_hk(&mu0, &tf).unwrap();
            let norm: f64 = row.iter().map(|x| x * x).sum();
            prop_assert!((norm - hk_inner(&mu0, &tf, &tf).unwrap()).abs() < 1e-12);
            let back = unflatten_hk(&mu0, &row).unwrap();
            for (a, b) in back.v0.iter().chain(&back.alpha0).zip(tf.v0.iter().chain(&tf.alpha0)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn cauchy_schwarz(v in prop::collection::vec(-2.0..2.0f64, 18), m in prop::collection::vec(0.01..3.0f64, 3), p in prop::collection::vec(0.0..2.0f64, 4)) {
            let mu0 = pts(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &m);
            let perp = |a: f64, b: f64| pts(&[[5.0, 5.0], [6.0, 5.0]], &[a, b]).drop_zeros();
            let t1 = TangentField { dim: 2, v0: v[..6].to_vec(), alpha0: v[6..9].to_vec(), mu1_perp: perp(p[0], p[1]) };
            let t2 = TangentField { dim: 2, v0: v[9..15].to_vec(), alpha0: v[15..].to_vec(), mu1_perp: perp(p[2], p[3]) };
            let g12 = hk_inner(&mu0, &t1, &t2).unwrap();
            let bound = (hk_inner(&mu0, &t1, &t1).unwrap() * hk_inner(&mu0, &t2, &t2).unwrap()).sqrt();
            prop_assert!(g12.abs() <= bound * (1.0 + 1e-12) + 1e-12);
            let d = hk_lin_dist(&mu0, &t1, &t2).unwrap();
            prop_assert!((d - hk_lin_dist(&mu0, &t2, &t1).unwrap()).abs() < 1e-12);
        }
    }
}
