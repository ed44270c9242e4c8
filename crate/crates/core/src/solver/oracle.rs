//! Direct minimization of the soft-marginal objective for tiny problems.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Coupling;
use crate::cost::{self, CostMatrix};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

/// Largest number of (source, target) pairs the oracle accepts.
pub const MAX_ORACLE_PAIRS: usize = 9;

fn objective(w: &[f64], cost: &CostMatrix, a: &[f64], b: &[f64]) -> f64 {
    let (n0, n1) = (a.len(), b.len());
    let mut total = 0.0;
    let mut r = vec![0.0; n0];
    let mut s = vec![0.0; n1];
    for i in 0..n0 {
        for j in 0..n1 {
            let x = w[i * n1 + j];
            if x > 0.0 {
                total += x * cost.get(i, j);
                r[i] += x;
                s[j] += x;
            }
        }
    }
    let kl = |p: &[f64], q: &[f64]| cost::kl_masses(p, q).unwrap_or(f64::INFINITY);
    total + kl(&r, a) + kl(&s, b)
}

fn gradient(w: &[f64], cost: &CostMatrix, a: &[f64], b: &[f64], out: &mut [f64]) {
    let (n0, n1) = (a.len(), b.len());
    let r: Vec<f64> = (0..n0)
        .map(|i| w[i * n1..(i + 1) * n1].iter().sum())
        .collect();
    let s: Vec<f64> = (0..n1)
        .map(|j| (0..n0).map(|i| w[i * n1 + j]).sum())
        .collect();
    let log_ratio = |m: f64, target: f64| {
        if m > 0.0 {
            (m / target).ln().max(-60.0)
        } else {
            -60.0
        }
    };
    for i in 0..n0 {
        for j in 0..n1 {
            let c = cost.get(i, j);
            out[i * n1 + j] = if c.is_finite() {
                c + log_ratio(r[i], a[i]) + log_ratio(s[j], b[j])
            } else {
                0.0
            };
        }
    }
}

/// Minimizes the soft-marginal objective by projected gradient descent
/// with Armijo backtracking from several deterministic starts, keeping the
/// best result. Pairs at infinite cost are held at zero.
///
/// Meant as an independent reference for the entropic solver on supports
/// with at most [`MAX_ORACLE_PAIRS`] pairs.
pub fn brute_force_hk(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<Coupling> {
    let pairs = mu0.len() * mu1.len();
    if pairs > MAX_ORACLE_PAIRS {
        return Err(Error::SupportTooLarge(pairs));
    }
    if mu0.masses().iter().chain(mu1.masses()).any(|&m| m <= 0.0) {
        return Err(Error::InvalidArgument(
            "oracle needs strictly positive masses".into(),
        ));
    }
    let cost = CostMatrix::hk(mu0, mu1)?;
    let (a, b) = (mu0.masses(), mu1.masses());
    let (n0, n1) = (a.len(), b.len());
    let free: Vec<bool> = cost.values.iter().map(|c| c.is_finite()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let geo = |i: usize, j: usize| (a[i] * b[j]).sqrt() * (-0.5 * cost.get(i, j)).exp();
    starts.push((0..pairs).map(|k| geo(k / n1, k % n1)).collect());
    starts.push((0..pairs).map(|k| a[k / n1] * b[k % n1]).collect());
    starts.push(
        (0..pairs)
            .map(|k| a[k / n1].min(b[k % n1]) / pairs as f64)
            .collect(),
    );
    for _ in 0..3 {
        starts.push(
            (0..pairs)
                .map(|k| rng.gen::<f64>() * a[k / n1].min(b[k % n1]))
                .collect(),
        );
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut grad = vec![0.0; pairs];
    for mut w in starts {
        for (x, &ok) in w.iter_mut().zip(&free) {
            if !ok {
                *x = 0.0;
            }
        }
        let mut value = objective(&w, &cost, a, b);
        let mut step = 1.0;
        for _ in 0..200_000 {
            gradient(&w, &cost, a, b, &mut grad);
            let mut improved = false;
            step *= 4.0;
            while step > 1e-18 {
                let trial: Vec<f64> = w
                    .iter()
                    .zip(&grad)
                    .map(|(x, g)| (x - step * g).max(0.0))
                    .collect();
                let decrease: f64 = w
                    .iter()
                    .zip(&trial)
                    .zip(&grad)
                    .map(|((x, t), g)| g * (x - t))
                    .sum();
                let v = objective(&trial, &cost, a, b);
                if v <= value - 1e-4 * decrease && v < value {
                    let moved = w
                        .iter()
                        .zip(&trial)
                        .map(|(x, t)| (x - t).abs())
                        .fold(0.0, f64::max);
                    w = trial;
                    value = v;
                    improved = moved > 1e-17;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, w));
        }
    }
    let (value, w) = best.expect("at least one start");
    let mut plan = Coupling::from_weights(DMatrix::from_row_slice(n0, n1, &w));
    plan.objective_value = value;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::hk_dirac_sq;

    #[test]
    fn single_pair_matches_closed_form() {
        for (d, m0, m1) in [
            (0.3, 1.0, 1.0),
            (1.0, 0.5, 2.0),
            (1.5, 3.0, 0.2),
            (2.0, 1.0, 1.0),
        ] {
            let mu0 = DiscreteMeasure::dirac(&[0.0, 0.0], m0).unwrap();
            let mu1 = DiscreteMeasure::dirac(&[d, 0.0], m1).unwrap();
            let plan = brute_force_hk(&mu0, &mu1).unwrap();
            let exact = hk_dirac_sq(&[0.0, 0.0], m0, &[d, 0.0], m1).unwrap();
            assert!(
                (plan.objective_value - exact).abs() < 1e-9,
                "d={d}: {} vs {exact}",
                plan.objective_value
            );
        }
    }

    #[test]
    fn rejects_large_supports() {
        let pts: Vec<[f64; 2]> = (0..4).map(|k| [k as f64, 0.0]).collect();
        let mu = DiscreteMeasure::from_points_2d(&pts, &[1.0; 4]).unwrap();
        assert!(matches!(
            brute_force_hk(&mu, &mu),
            Err(Error::SupportTooLarge(16))
        ));
    }
}
