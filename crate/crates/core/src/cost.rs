//! Closed-form HK quantities: the soft-marginal transport cost, Dirac
//! distances, Kullback-Leibler and Hellinger divergences, and evaluation of
//! the soft-marginal objective.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::solver::Coupling;

/// Distances at or beyond this value get infinite cost. Slightly below pi/2
/// so that `-2 ln cos` never sees a zero argument.
pub const TRUNCATION_DISTANCE: f64 = FRAC_PI_2 - 1e-9;

pub fn distance(x0: &[f64], x1: &[f64]) -> f64 {
    squared_distance(x0, x1).sqrt()
}

pub fn squared_distance(x0: &[f64], x1: &[f64]) -> f64 {
    x0.iter().zip(x1).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `cos(min(s, pi/2))`.
pub fn cos_bar(s: f64) -> f64 {
    if s >= FRAC_PI_2 {
        0.0
    } else {
        s.cos()
    }
}

/// Cost of transporting a unit of mass over distance `d`:
/// `-2 ln cos d`, or `+inf` from the truncation distance on.
pub fn hk_cost_of_distance(d: f64) -> f64 {
    if d >= TRUNCATION_DISTANCE {
        f64::INFINITY
    } else {
        -2.0 * d.cos().ln()
    }
}

pub fn hk_cost(x0: &[f64], x1: &[f64]) -> f64 {
    hk_cost_of_distance(distance(x0, x1))
}

/// Squared HK distance between `m0 delta_{x0}` and `m1 delta_{x1}`.
pub fn hk_dirac_sq(x0: &[f64], m0: f64, x1: &[f64], m1: f64) -> Result<f64> {
    if m0 < 0.0 || m1 < 0.0 || m0.is_nan() || m1.is_nan() {
        return Err(Error::NegativeMass {
            index: usize::from(m0 >= 0.0),
            mass: m0.min(m1),
        });
    }
    Ok(m0 + m1 - 2.0 * (m0 * m1).sqrt() * cos_bar(distance(x0, x1)))
}

/// Entropy function of the KL divergence, `s ln s - s + 1` with `phi(0) = 1`.
pub fn kl_phi(s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        s * s.ln() - s + 1.0
    }
}

/// `KL(mu | nu)` for two mass vectors on a common index set.
pub fn kl_masses(mu: &[f64], nu: &[f64]) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::SupportMismatch(format!(
            "{} vs {} points",
            mu.len(),
            nu.len()
        )));
    }
    let mut total = 0.0;
    for (&m, &n) in mu.iter().zip(nu) {
        if n == 0.0 {
            if m > 0.0 {
                return Ok(f64::INFINITY);
            }
        } else if m == 0.0 {
            total += n;
        } else {
            total += m * (m / n).ln() - m + n;
        }
    }
    Ok(total)
}

fn check_same_support(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.same_support(nu) {
        Ok(())
    } else {
        Err(Error::SupportMismatch(
            "measures are not listed on the same points".into(),
        ))
    }
}

pub fn kl_divergence(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_same_support(mu, nu)?;
    kl_masses(mu.masses(), nu.masses())
}

/// `sum_i (sqrt(mu_i) - sqrt(nu_i))^2` on a shared support.
pub fn hellinger_sq(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_same_support(mu, nu)?;
    Ok(mu
        .masses()
        .iter()
        .zip(nu.masses())
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum())
}

/// Key for matching points by exact coordinates.
pub(crate) fn point_key(p: &[f64]) -> Vec<u64> {
    p.iter()
        .map(|c| if *c == 0.0 { 0 } else { c.to_bits() })
        .collect()
}

/// Pools the masses of each distinct location.
pub(crate) fn masses_by_location(mu: &DiscreteMeasure) -> HashMap<Vec<u64>, f64> {
    let mut map = HashMap::new();
    for (p, &m) in mu.points().zip(mu.masses()) {
        *map.entry(point_key(p)).or_insert(0.0) += m;
    }
    map
}

/// Hellinger pairing `sum_x sqrt(mu(x) nu(x))` over coincident locations.
pub fn hellinger_affinity(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let a = masses_by_location(mu);
    let b = masses_by_location(nu);
    a.iter()
        .filter_map(|(k, &m)| b.get(k).map(|&n| (m * n).sqrt()))
        .sum()
}

/// Squared Hellinger distance between measures on arbitrary supports,
/// matching points by exact location.
pub fn hellinger_sq_union(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    (mu.total_mass() + nu.total_mass() - 2.0 * hellinger_affinity(mu, nu)).max(0.0)
}

/// Dense `|supp mu0| x |supp mu1|` matrix of pairwise costs, `+inf` marking
/// forbidden pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl CostMatrix {
    pub fn from_fn(
        mu0: &DiscreteMeasure,
        mu1: &DiscreteMeasure,
        f: impl Fn(&[f64], &[f64]) -> f64,
    ) -> Result<Self> {
        if mu0.dim() != mu1.dim() {
            return Err(Error::DimensionMismatch(format!(
                "dimensions {} and {}",
                mu0.dim(),
                mu1.dim()
            )));
        }
        let values = mu0
            .points()
            .flat_map(|x0| mu1.points().map(|x1| f(x0, x1)).collect::<Vec<_>>())
            .collect();
        Ok(Self {
            rows: mu0.len(),
            cols: mu1.len(),
            values,
        })
    }

    /// Soft-marginal HK cost `-2 ln cos |x0 - x1|`.
    pub fn hk(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<Self> {
        Self::from_fn(mu0, mu1, hk_cost)
    }

    /// Squared Euclidean cost.
    pub fn w2(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<Self> {
        Self::from_fn(mu0, mu1, squared_distance)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// `<C, pi>` with the convention `0 * inf = 0`.
pub fn transport_cost(weights: &nalgebra::DMatrix<f64>, cost: &CostMatrix) -> f64 {
    let mut total = 0.0;
    for i in 0..cost.rows {
        for j in 0..cost.cols {
            let w = weights[(i, j)];
            if w > 0.0 {
                total += w * cost.get(i, j);
            }
        }
    }
    total
}

/// Unregularized soft-marginal objective
/// `<C, pi> + KL(P0 pi | mu0) + KL(P1 pi | mu1)`.
pub fn soft_marginal_objective(
    pi: &Coupling,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
) -> Result<f64> {
    let cost = CostMatrix::hk(mu0, mu1)?;
    soft_marginal_objective_with_cost(pi, &cost, mu0, mu1)
}

pub(crate) fn soft_marginal_objective_with_cost(
    pi: &Coupling,
    cost: &CostMatrix,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
) -> Result<f64> {
    if pi.weights.nrows() != mu0.len() || pi.weights.ncols() != mu1.len() {
        return Err(Error::DimensionMismatch(format!(
            "coupling is {}x{} but supports have {} and {} points",
            pi.weights.nrows(),
            pi.weights.ncols(),
            mu0.len(),
            mu1.len()
        )));
    }
    let transport = transport_cost(&pi.weights, cost);
    if transport.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(transport
        + kl_masses(&pi.row_marginal, mu0.masses())?
        + kl_masses(&pi.col_marginal, mu1.masses())?)
}
