use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::measure::{BoundingBox, DiscreteMeasure};

/// Entropic solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// First blur level. `None` picks the squared diameter of the joint
    /// support at solve time.
    pub epsilon_start: Option<f64>,
    pub epsilon_final: f64,
    /// Geometric factor between consecutive blur levels.
    pub epsilon_decay: f64,
    pub max_iters_per_eps: usize,
    /// Sup-norm threshold on the change of the dual potentials.
    pub tol_marginal: f64,
    /// Run every update in the log domain instead of the stabilized
    /// scaling form. Slower, same fixed point.
    pub log_domain: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon_start: None,
            epsilon_final: 1e-4,
            epsilon_decay: 0.5,
            max_iters_per_eps: 5000,
            tol_marginal: 1e-7,
            log_domain: false,
        }
    }
}

const KEYS: [&str; 6] = [
    "epsilon_start",
    "epsilon_final",
    "epsilon_decay",
    "max_iters_per_eps",
    "tol_marginal",
    "log_domain",
];

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.epsilon_final) {
            return bad(format!(
                "epsilon_final must be positive, got {}",
                self.epsilon_final
            ));
        }
        if let Some(s) = self.epsilon_start {
            if !positive(s) {
                return bad(format!("epsilon_start must be positive, got {s}"));
            }
            if s < self.epsilon_final {
                return bad(format!(
                    "epsilon_start {s} is below epsilon_final {}",
                    self.epsilon_final
                ));
            }
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay < 1.0) {
            return bad(format!(
                "epsilon_decay must lie in (0, 1), got {}",
                self.epsilon_decay
            ));
        }
        if self.max_iters_per_eps == 0 {
            return bad("max_iters_per_eps must be at least 1".into());
        }
        if !positive(self.tol_marginal) {
            return bad(format!(
                "tol_marginal must be positive, got {}",
                self.tol_marginal
            ));
        }
        Ok(())
    }

    /// Blur schedule for a pair of measures, ending exactly at
    /// `epsilon_final`.
    pub fn schedule(&self, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Vec<f64> {
        let start = self
            .epsilon_start
            .unwrap_or_else(|| joint_squared_diameter(mu0, mu1))
            .max(self.epsilon_final);
        let mut eps = vec![start];
        let mut e = start;
        while e > self.epsilon_final {
            e = (e * self.epsilon_decay).max(self.epsilon_final);
            eps.push(e);
        }
        eps
    }

    /// Parses a flat `key = value` file. Blank lines and `#` comments are
    /// ignored; unknown or repeated keys are errors. Missing keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = [false; KEYS.len()];
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: n + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let k = KEYS
                .iter()
                .position(|&k| k == key)
                .ok_or_else(|| err(format!("unknown key {key:?}")))?;
            if std::mem::replace(&mut seen[k], true) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            let real = || {
                value
                    .parse::<f64>()
                    .map_err(|_| err(format!("{key}: not a number: {value:?}")))
            };
            match key {
                "epsilon_start" => {
                    cfg.epsilon_start = if value == "auto" { None } else { Some(real()?) }
                }
                "epsilon_final" => cfg.epsilon_final = real()?,
                "epsilon_decay" => cfg.epsilon_decay = real()?,
                "tol_marginal" => cfg.tol_marginal = real()?,
                "max_iters_per_eps" => {
                    cfg.max_iters_per_eps = value
                        .parse()
                        .map_err(|_| err(format!("{key}: not a count: {value:?}")))?
                }
                "log_domain" => {
                    cfg.log_domain = match value {
                        "true" | "1" => true,
                        "false" | "0" => false,
                        _ => {
                            return Err(err(format!(
                                "{key}: expected true or false, got {value:?}"
                            )))
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SolverConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for SolverConfig {
    /// Writes the config back in the format accepted by [`SolverConfig::parse`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.epsilon_start {
            Some(s) => writeln!(f, "epsilon_start = {s}")?,
            None => writeln!(f, "epsilon_start = auto")?,
        }
        writeln!(f, "epsilon_final = {}", self.epsilon_final)?;
        writeln!(f, "epsilon_decay = {}", self.epsilon_decay)?;
        writeln!(f, "max_iters_per_eps = {}", self.max_iters_per_eps)?;
        writeln!(f, "tol_marginal = {}", self.tol_marginal)?;
        writeln!(f, "log_domain = {}", self.log_domain)
    }
}

fn joint_squared_diameter(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> f64 {
    let coords: Vec<f64> = mu0.coords().iter().chain(mu1.coords()).copied().collect();
    let d = BoundingBox::of_coords(mu0.dim(), &coords).diameter();
    d * d
}
