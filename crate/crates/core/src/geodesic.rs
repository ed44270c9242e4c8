//! HK geodesics: closed form between two Diracs, and the superposition
//! built from a soft-marginal plan. W2 displacement interpolation as a
//! baseline.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use crate::cost::{distance, point_key};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::solver::Coupling;
use crate::tangent::LebesgueDecomposition;

/// Point on the geodesic between two weighted Diracs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracGeodesicEval {
    pub position: Vec<f64>,
    pub mass: f64,
    /// Distance travelled from `x0`, in `[0, |x1 - x0|]`.
    pub angle: f64,
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time {t} outside [0, 1]")))
    }
}

/// Evaluates the transport geodesic from `m0 delta_x0` to `m1 delta_x1`.
///
/// Pairs at distance `pi/2` or more have no transport geodesic and are
/// rejected; callers handle them as pure creation and destruction.
pub fn dirac_geodesic(
    x0: &[f64],
    m0: f64,
    x1: &[f64],
    m1: f64,
    t: f64,
) -> Result<DiracGeodesicEval> {
    check_time(t)?;
    if !(m0 >= 0.0 && m1 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "masses must be non-negative, got {m0} and {m1}"
        )));
    }
    let d = distance(x0, x1);
    if d >= FRAC_PI_2 {
        return Err(Error::BeyondTransportRange(d));
    }
    let s = 1.0 - t;
    let root = (m0 * m1).sqrt();
    let mass = (s * s * m0 + t * t * m1 + 2.0 * t * s * root * d.cos()).max(0.0);
    let angle = if t == 0.0 || m1 == 0.0 {
        0.0
    } else if t == 1.0 || m0 == 0.0 {
        d
    } else {
        // acos of (s sqrt(m0) + t sqrt(m1) cos d) / sqrt(M), written with atan2
        // because sqrt(M) is the norm of this pair; acos loses digits near 0
        (t * m1.sqrt() * d.sin())
            .atan2(s * m0.sqrt() + t * m1.sqrt() * d.cos())
            .min(d)
    };
    let position = if d > 0.0 {
        x0.iter()
            .zip(x1)
            .map(|(a, b)| a + (b - a) / d * angle)
            .collect()
    } else {
        x0.to_vec()
    };
    Ok(DiracGeodesicEval {
        position,
        mass,
        angle,
    })
}

/// Initial velocity and relative growth rate `(dX/dt, (dM/dt)/M)` at
/// `t = 0` of the Dirac geodesic. Requires `m0 > 0`.
pub fn dirac_initial_velocity(x0: &[f64], m0: f64, x1: &[f64], m1: f64) -> Result<(Vec<f64>, f64)> {
    if !(m0 > 0.0 && m1 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need m0 > 0 and m1 >= 0, got {m0} and {m1}"
        )));
    }
    let d = distance(x0, x1);
    if d >= FRAC_PI_2 {
        return Err(Error::BeyondTransportRange(d));
    }
    let r = (m1 / m0).sqrt();
    let v = if d > 0.0 {
        x0.iter()
            .zip(x1)
            .map(|(a, b)| (b - a) / d * r * d.sin())
            .collect()
    } else {
        vec![0.0; x0.len()]
    };
    Ok((v, 2.0 * (r * d.cos() - 1.0)))
}

/// Accumulates Dirac masses, merging coincident points.
struct Cloud {
    dim: usize,
    coords: Vec<f64>,
    masses: Vec<f64>,
    index: HashMap<Vec<u64>, usize>,
}

impl Cloud {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
            masses: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn add(&mut self, p: &[f64], m: f64) {
        if m <= 0.0 {
            return;
        }
        match self.index.get(&point_key(p)) {
            Some(&k) => self.masses[k] += m,
            None => {
                self.index.insert(point_key(p), self.masses.len());
                self.coords.extend_from_slice(p);
                self.masses.push(m);
            }
        }
    }

    fn finish(self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::new(self.dim, self.coords, self.masses)
    }
}

/// HK geodesic at time `t` between the measures of a decomposition.
///
/// Each plan entry travels along the Dirac geodesic between its endpoints
/// weighted by the source and target densities; unmatched mass fades out
/// as `(1 - t)^2 mu0_perp` and in as `t^2 mu1_perp`. Coincident points are
/// merged.
pub fn interpolate_hk(
    coupling: &Coupling,
    decomp: &LebesgueDecomposition,
    t: f64,
) -> Result<DiscreteMeasure> {
    check_time(t)?;
    let (mu0, mu1) = (&decomp.source, &decomp.target);
    if coupling.weights.nrows() != mu0.len() || coupling.weights.ncols() != mu1.len() {
        return Err(Error::InconsistentDecomposition(format!(
            "coupling is {}x{} but the decomposition has {} and {} points",
            coupling.weights.nrows(),
            coupling.weights.ncols(),
            mu0.len(),
            mu1.len()
        )));
    }
    let mut cloud = Cloud::new(mu0.dim());
    for i in 0..mu0.len() {
        for j in 0..mu1.len() {
            let w = coupling.weights[(i, j)];
            if w <= 0.0 {
                continue;
            }
            let (u0, u1) = (decomp.u0[i], decomp.u1[j]);
            if u0 == 0.0 && u1 == 0.0 {
                continue;
            }
            let g = dirac_geodesic(mu0.point(i), u0, mu1.point(j), u1, t).map_err(|e| {
                Error::InconsistentDecomposition(format!("plan entry ({i}, {j}): {e}"))
            })?;
            cloud.add(&g.position, g.mass * w);
        }
    }
    let (s, t2) = ((1.0 - t) * (1.0 - t), t * t);
    for (p, m) in decomp.mu0_perp.points().zip(decomp.mu0_perp.masses()) {
        cloud.add(p, s * m);
    }
    for (p, m) in decomp.mu1_perp.points().zip(decomp.mu1_perp.masses()) {
        cloud.add(p, t2 * m);
    }
    cloud.finish()
}

/// W2 displacement interpolation: each plan entry moves on the segment
/// between its endpoints with fixed mass.
pub fn interpolate_w2(
    coupling: &Coupling,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    t: f64,
) -> Result<DiscreteMeasure> {
    check_time(t)?;
    if mu0.dim() != mu1.dim() {
        return Err(Error::DimensionMismatch(format!(
            "dimensions {} and {}",
            mu0.dim(),
            mu1.dim()
        )));
    }
    if coupling.weights.nrows() != mu0.len() || coupling.weights.ncols() != mu1.len() {
        return Err(Error::DimensionMismatch(
            "coupling does not match the supports".into(),
        ));
    }
    let mut cloud = Cloud::new(mu0.dim());
    let mut p = vec![0.0; mu0.dim()];
    for i in 0..mu0.len() {
        for j in 0..mu1.len() {
            let w = coupling.weights[(i, j)];
            if w > 0.0 {
                for (k, x) in p.iter_mut().enumerate() {
                    *x = (1.0 - t) * mu0.point(i)[k] + t * mu1.point(j)[k];
                }
                cloud.add(&p, w);
            }
        }
    }
    cloud.finish()
}
