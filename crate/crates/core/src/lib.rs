//! Hellinger-Kantorovich (HK) transport between discrete non-negative
//! measures, its logarithmic and exponential maps, and linearized
//! embeddings for data analysis, with a Wasserstein-2 baseline.
//!
//! Distances are computed at unit length scale; a length scale `kappa` is
//! handled by [`measure::rescale_domain`] before solving and multiplying the
//! result by `kappa` afterwards.

pub mod analysis;
pub mod cost;
pub mod error;
pub mod geodesic;
pub mod measure;
pub mod solver;
pub mod tangent;

pub use error::{Error, Result};
pub use measure::{normalize, rescale_domain, DiscreteMeasure, GridImage, GridSpec};
pub use solver::{solve_hk, solve_w2, Coupling, SolverConfig};
