//! Entropic solvers for the HK soft-marginal problem and the balanced W2
//! problem, plus a brute-force oracle for tiny instances.

mod config;
mod oracle;
mod sinkhorn;

pub use config::SolverConfig;
pub use oracle::brute_force_hk;

use nalgebra::DMatrix;

use crate::cost::{self, CostMatrix};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use sinkhorn::{Marginals, Sinkhorn};

/// A transport plan between the supports of two measures.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    /// `weights[(i, j)]` is the mass sent from point `i` of the source to
    /// point `j` of the target.
    pub weights: DMatrix<f64>,
    /// Row sums of `weights`, aligned with the source support.
    pub row_marginal: Vec<f64>,
    /// Column sums of `weights`, aligned with the target support.
    pub col_marginal: Vec<f64>,
    /// Unregularized objective of `weights` (soft-marginal HK objective or
    /// W2 transport cost). NaN until evaluated.
    pub objective_value: f64,
    /// False when the final stage hit its iteration budget.
    pub converged: bool,
    pub iterations: usize,
}

impl Coupling {
    pub fn from_weights(weights: DMatrix<f64>) -> Self {
        let row_marginal = weights.row_iter().map(|r| r.sum()).collect();
        let col_marginal = weights.column_iter().map(|c| c.sum()).collect();
        Self {
            weights,
            row_marginal,
            col_marginal,
            objective_value: f64::NAN,
            converged: true,
            iterations: 0,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.row_marginal.iter().sum()
    }

    /// Row marginal as a measure on the source support.
    pub fn row_measure(&self, mu0: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        mu0.with_masses(self.row_marginal.clone())
    }

    /// Column marginal as a measure on the target support.
    pub fn col_measure(&self, mu1: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        mu1.with_masses(self.col_marginal.clone())
    }

    /// HK or W2 distance implied by the objective value.
    pub fn distance(&self) -> f64 {
        self.objective_value.max(0.0).sqrt()
    }
}

fn check_inputs(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<()> {
    if mu0.total_mass() <= 0.0 || mu1.total_mass() <= 0.0 {
        return Err(Error::EmptyMeasure);
    }
    if mu0.dim() != mu1.dim() {
        return Err(Error::DimensionMismatch(format!(
            "dimensions {} and {}",
            mu0.dim(),
            mu1.dim()
        )));
    }
    Ok(())
}

/// Solves the entropic soft-marginal HK problem at unit length scale.
///
/// Zero-mass points are allowed; they receive no plan mass. The returned
/// objective is the unregularized soft-marginal objective of the plan, so
/// its square root approximates `HK(mu0, mu1)`.
pub fn solve_hk(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    cfg: &SolverConfig,
) -> Result<Coupling> {
    check_inputs(mu0, mu1)?;
    cfg.validate()?;
    let cost = CostMatrix::hk(mu0, mu1)?;
    let mut plan = Sinkhorn::new(
        &cost,
        mu0.masses(),
        mu1.masses(),
        Marginals::Soft,
        cfg,
        cfg.schedule(mu0, mu1),
    )
    .solve();
    plan.objective_value = cost::soft_marginal_objective_with_cost(&plan, &cost, mu0, mu1)?;
    if !plan.converged {
        log::warn!(
            "HK solver stopped at the iteration budget ({} iterations)",
            plan.iterations
        );
    }
    Ok(plan)
}

/// Solves the balanced entropic W2 problem. Both measures must carry the
/// same total mass (to 1e-9).
pub fn solve_w2(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    cfg: &SolverConfig,
) -> Result<Coupling> {
    check_inputs(mu0, mu1)?;
    cfg.validate()?;
    let (m0, m1) = (mu0.total_mass(), mu1.total_mass());
    if (m0 - m1).abs() > 1e-9 * m0.max(m1).max(1.0) {
        return Err(Error::UnequalMass(m0, m1));
    }
    let cost = CostMatrix::w2(mu0, mu1)?;
    let mut plan = if mu0.len() == 1 || mu1.len() == 1 {
        // the only feasible plan
        let w = DMatrix::from_fn(mu0.len(), mu1.len(), |i, j| {
            if mu0.len() == 1 {
                mu1.mass(j)
            } else {
                mu0.mass(i)
            }
        });
        Coupling::from_weights(w)
    } else {
        Sinkhorn::new(
            &cost,
            mu0.masses(),
            mu1.masses(),
            Marginals::Hard,
            cfg,
            cfg.schedule(mu0, mu1),
        )
        .solve()
    };
    plan.objective_value = cost::transport_cost(&plan.weights, &cost);
    if !plan.converged {
        log::warn!(
            "W2 solver stopped at the iteration budget ({} iterations)",
            plan.iterations
        );
    }
    Ok(plan)
}

/// Total-variation distance between the plan's marginals and the inputs.
pub fn marginal_violation(
    plan: &Coupling,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
) -> (f64, f64) {
    let tv = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    (
        tv(&plan.row_marginal, mu0.masses()),
        tv(&plan.col_marginal, mu1.masses()),
    )
}
