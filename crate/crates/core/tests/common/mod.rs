#![allow(dead_code)]

use hklin::{solve_hk, DiscreteMeasure, SolverConfig};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` points uniform in `[0, side]^2` with masses uniform in `masses`.
pub fn cloud(rng: &mut ChaCha8Rng, n: usize, side: f64, masses: (f64, f64)) -> DiscreteMeasure {
    let coords: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(0.0..side)).collect();
    let m: Vec<f64> = (0..n).map(|_| rng.gen_range(masses.0..masses.1)).collect();
    DiscreteMeasure::new(2, coords, m).unwrap()
}

/// Positive masses on every node of a `k x k` grid spanning `[0, 1]^2`.
pub fn wide_grid(rng: &mut ChaCha8Rng, k: usize) -> DiscreteMeasure {
    let step = 1.0 / (k - 1) as f64;
    let mut coords = Vec::new();
    for r in 0..k {
        for c in 0..k {
            coords.extend([c as f64 * step, r as f64 * step]);
        }
    }
    let m: Vec<f64> = (0..k * k)
        .map(|_| rng.gen_range(0.5..1.5) / (k * k) as f64)
        .collect();
    DiscreteMeasure::new(2, coords, m).unwrap()
}

pub fn hk_sq(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    solve_hk(a, b, &SolverConfig::default())
        .unwrap()
        .objective_value
}

pub fn hk(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    hk_sq(a, b).max(0.0).sqrt()
}
