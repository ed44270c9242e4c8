//! Annealed Sinkhorn iterations on a truncated sparse kernel.
//!
//! Plans are parametrized as `pi_ij = a_i b_j exp((f_i + g_j - c_ij) / eps)`.
//! Potentials are kept explicitly; the kernel is built relative to a
//! snapshot `(f0, g0)` of them and rebuilt whenever the potentials drift
//! too far from the snapshot or the blur level changes.

use nalgebra::DMatrix;

use super::{Coupling, SolverConfig};
use crate::cost::CostMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Marginals {
    /// KL penalty with unit weight on both marginals.
    Soft,
    /// Exact marginal constraints.
    Hard,
}

/// Kernel entries with exponent below this (relative to zero, the row
/// maximum and the column maximum) are dropped.
const TRUNCATE: f64 = 50.0;
/// Rebuild once a potential has moved this many multiples of eps.
const DRIFT: f64 = 10.0;

/// Intermediate blur levels only warm-start the next one; they stop once
/// the potentials move less than this multiple of eps.
const STAGE_TOL: f64 = 1e-4;

/// On the last level the marginal residual is only evaluated once the
/// potentials move less than this multiple of eps.
const RESIDUAL_GATE: f64 = 1e-3;

/// Plain iterations used to estimate the contraction rate before
/// switching on over-relaxation.
const PROBE: usize = 60;

/// Plan entries carrying at least this share of their row or column mass
/// tie a row and a column into one translation block.
const BLOCK_LINK: f64 = 0.15;
/// Gauss-Seidel sweeps over the blocks per translation step.
const BLOCK_SWEEPS: usize = 2;

/// SOR-style relaxation factor `2 / (1 + sqrt(1 - r))` from the observed
/// per-iteration contraction `r` of the plain updates.
fn over_relaxation(changes: &[f64]) -> f64 {
    let n = changes.len();
    let (first, last) = (changes[n - 21], changes[n - 1]);
    if !(first > 0.0 && last > 0.0) {
        return 1.0;
    }
    let r = (last / first).powf(1.0 / 20.0);
    if r >= 1.0 {
        return 1.0;
    }
    (2.0 / (1.0 + (1.0 - r).sqrt())).min(1.9)
}

#[derive(Debug, Default, Clone)]
struct Csr {
    ptr: Vec<usize>,
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl Csr {
    fn entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + Clone + '_ {
        let r = self.ptr[i]..self.ptr[i + 1];
        self.idx[r.clone()]
            .iter()
            .map(|&j| j as usize)
            .zip(self.val[r].iter().copied())
    }

    fn row_len(&self, i: usize) -> usize {
        self.ptr[i + 1] - self.ptr[i]
    }

    fn transpose(&self, ncols: usize) -> Csr {
        let mut count = vec![0usize; ncols + 1];
        for &j in &self.idx {
            count[j as usize + 1] += 1;
        }
        for j in 0..ncols {
            count[j + 1] += count[j];
        }
        let ptr = count.clone();
        let mut fill = count;
        let mut idx = vec![0u32; self.idx.len()];
        let mut val = vec![0.0; self.val.len()];
        for i in 0..self.ptr.len() - 1 {
            for (j, v) in self.entries(i) {
                let k = fill[j];
                fill[j] += 1;
                idx[k] = i as u32;
                val[k] = v;
            }
        }
        Csr { ptr, idx, val }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

pub(crate) struct Sinkhorn<'a> {
    n0: usize,
    n1: usize,
    a: &'a [f64],
    la: Vec<f64>,
    lb: Vec<f64>,
    /// Finite-cost pairs between points of positive mass.
    full: Csr,
    full_t: Csr,
    marginals: Marginals,
    cfg: &'a SolverConfig,
    schedule: Vec<f64>,
}

/// Truncated kernel around the snapshot potentials. Values hold
/// `exp((f0_i + g0_j - c_ij) / eps)` in scaling mode and `c_ij` in log mode.
struct Kernel {
    rows: Csr,
    cols: Csr,
    f0: Vec<f64>,
    g0: Vec<f64>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Labels the nodes of a union-find forest by tree, returning the labels
/// and the number of trees.
fn labels(parent: &mut [usize]) -> (Vec<usize>, usize) {
    let mut label = vec![usize::MAX; parent.len()];
    let mut n = 0;
    let out = (0..parent.len())
        .map(|x| {
            let r = find(parent, x);
            if label[r] == usize::MAX {
                label[r] = n;
                n += 1;
            }
            label[r]
        })
        .collect();
    (out, n)
}

impl<'a> Sinkhorn<'a> {
    pub(crate) fn new(
        cost: &CostMatrix,
        a: &'a [f64],
        b: &'a [f64],
        marginals: Marginals,
        cfg: &'a SolverConfig,
        schedule: Vec<f64>,
    ) -> Self {
        let (n0, n1) = (cost.rows, cost.cols);
        let mut full = Csr {
            ptr: vec![0],
            ..Csr::default()
        };
        for i in 0..n0 {
            if a[i] > 0.0 {
                for (j, &c) in cost.row(i).iter().enumerate() {
                    if c.is_finite() && b[j] > 0.0 {
                        full.idx.push(j as u32);
                        full.val.push(c);
                    }
                }
            }
            full.ptr.push(full.idx.len());
        }
        let full_t = full.transpose(n1);
        Self {
            n0,
            n1,
            a,

            la: a.iter().map(|&x| ln_or_neg_inf(x)).collect(),
            lb: b.iter().map(|&x| ln_or_neg_inf(x)).collect(),
            full,
            full_t,
            marginals,
            cfg,
            schedule,
        }
    }

    fn tau(&self, eps: f64) -> f64 {
        match self.marginals {
            Marginals::Soft => 1.0 / (1.0 + eps),
            Marginals::Hard => 1.0,
        }
    }

    fn build_kernel(&self, f: &[f64], g: &[f64], eps: f64) -> Kernel {
        let expo = |i: usize, j: usize, c: f64| (f[i] + g[j] - c) / eps;
        let mut col_max = vec![f64::NEG_INFINITY; self.n1];
        let mut row_max = vec![f64::NEG_INFINITY; self.n0];
        for i in 0..self.n0 {
            for (j, c) in self.full.entries(i) {
                let e = expo(i, j, c);
                row_max[i] = row_max[i].max(e);
                col_max[j] = col_max[j].max(e);
            }
        }
        let mut rows = Csr {
            ptr: vec![0],
            ..Csr::default()
        };
        for i in 0..self.n0 {
            for (j, c) in self.full.entries(i) {
                let e = expo(i, j, c);
                let floor = (-TRUNCATE)
                    .min(row_max[i] - TRUNCATE)
                    .min(col_max[j] - TRUNCATE);
                if e >= floor {
                    rows.idx.push(j as u32);
                    rows.val.push(if self.cfg.log_domain { c } else { e.exp() });
                }
            }
            rows.ptr.push(rows.idx.len());
        }
        let cols = rows.transpose(self.n1);
        Kernel {
            rows,
            cols,
            f0: f.to_vec(),
            g0: g.to_vec(),
        }
    }

    /// One half-step: new potentials on the `out` side given the
    /// potentials `other` on the opposite side.
    #[allow(clippy::too_many_arguments)]
    fn half_step(
        &self,
        kernel: &Csr,
        fallback: &Csr,
        other: &[f64],
        other0: &[f64],
        lmass_other: &[f64],
        own0: &[f64],
        out: &mut [f64],
        eps: f64,
        w: f64,
    ) {
        let tau = self.tau(eps);
        let exact = |i: usize| -> f64 {
            let s = log_sum_exp(
                fallback
                    .entries(i)
                    .map(|(j, c)| lmass_other[j] + (other[j] - c) / eps),
            );
            -tau * eps * s
        };
        if self.cfg.log_domain {
            for (i, o) in out.iter_mut().enumerate() {
                if fallback.row_len(i) == 0 {
                    continue;
                }
                let new = if kernel.row_len(i) == 0 {
                    exact(i)
                } else {
                    let s = log_sum_exp(
                        kernel
                            .entries(i)
                            .map(|(j, c)| lmass_other[j] + (other[j] - c) / eps),
                    );
                    -tau * eps * s
                };
                *o = w * new + (1.0 - w) * *o;
            }
        } else {
            let scale: Vec<f64> = (0..other.len())
                .map(|j| (lmass_other[j] + (other[j] - other0[j]) / eps).exp())
                .collect();
            for (i, o) in out.iter_mut().enumerate() {
                if fallback.row_len(i) == 0 {
                    continue;
                }
                let s: f64 = kernel.entries(i).map(|(j, k)| k * scale[j]).sum();
                let new = if s > 1e-280 && s.is_finite() {
                    -tau * (eps * s.ln() - own0[i])
                } else {
                    exact(i)
                };
                *o = w * new + (1.0 - w) * *o;
            }
        }
    }

    fn drifted(kernel: &Kernel, f: &[f64], g: &[f64], eps: f64) -> bool {
        let far = |x: &[f64], y: &[f64]| x.iter().zip(y).any(|(p, q)| (p - q).abs() > DRIFT * eps);
        far(f, &kernel.f0) || far(g, &kernel.g0)
    }

    /// Log plan entries `ln pi_ij` on the kept kernel entries, row by row.
    fn log_plan(&self, kernel: &Kernel, f: &[f64], g: &[f64], eps: f64) -> Vec<f64> {
        let rows = &kernel.rows;
        let mut out = Vec::with_capacity(rows.idx.len());
        for i in 0..self.n0 {
            for (j, v) in rows.entries(i) {
                let e = if self.cfg.log_domain {
                    (f[i] + g[j] - v) / eps
                } else {
                    v.ln() + (f[i] - kernel.f0[i] + g[j] - kernel.g0[j]) / eps
                };
                out.push(self.la[i] + self.lb[j] + e);
            }
        }
        out
    }

    /// Dual ascent along translations `(f + l, g - l)`, which the
    /// alternating updates contract only by about `1 - 2 eps` per sweep.
    ///
    /// The global translation has a closed form. After it, rows and columns
    /// are grouped into blocks joined by entries carrying at least
    /// `BLOCK_LINK` of their row or column mass, and each block gets its own
    /// exact one-dimensional ascent step with the weak entries to other
    /// blocks included. Entries dropped from the kernel are not seen, so the
    /// block steps are capped at the drift that keeps them negligible.
    fn translate(&self, kernel: &Kernel, f: &mut [f64], g: &mut [f64], eps: f64) {
        let (n0, n1) = (self.n0, self.n1);
        let rows: Vec<usize> = (0..n0).filter(|&i| self.full.row_len(i) > 0).collect();
        let cols: Vec<usize> = (0..n1).filter(|&j| self.full_t.row_len(j) > 0).collect();
        let log_a = log_sum_exp(rows.iter().map(|&i| self.la[i] - f[i]));
        let log_b = log_sum_exp(cols.iter().map(|&j| self.lb[j] - g[j]));
        if log_a.is_finite() && log_b.is_finite() {
            let l = 0.5 * (log_a - log_b);
            f.iter_mut().for_each(|x| *x += l);
            g.iter_mut().for_each(|x| *x -= l);
        }

        let lp = self.log_plan(kernel, f, g, eps);
        let krows = &kernel.rows;
        let mut row_mass = vec![0.0; n0];
        let mut col_mass = vec![0.0; n1];
        for i in 0..n0 {
            for k in krows.ptr[i]..krows.ptr[i + 1] {
                let p = lp[k].exp();
                row_mass[i] += p;
                col_mass[krows.idx[k] as usize] += p;
            }
        }
        let mut parent: Vec<usize> = (0..n0 + n1).collect();
        for i in 0..n0 {
            for k in krows.ptr[i]..krows.ptr[i + 1] {
                let j = krows.idx[k] as usize;
                if lp[k].exp() >= BLOCK_LINK * row_mass[i].min(col_mass[j]) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, n0 + j));
                    if ri != rj {
                        parent[ri] = rj;
                    }
                }
            }
        }
        let (block, n_blocks) = labels(&mut parent);
        if n_blocks < 2 {
            return;
        }

        let mut mass_a = vec![0.0; n_blocks];
        let mut mass_b = vec![0.0; n_blocks];
        for &i in &rows {
            mass_a[block[i]] += (self.la[i] - f[i]).exp();
        }
        for &j in &cols {
            mass_b[block[n0 + j]] += (self.lb[j] - g[j]).exp();
        }
        // Plan mass from rows of one block into columns of another.
        let mut links: std::collections::HashMap<(usize, usize), f64> = Default::default();
        for i in 0..n0 {
            for k in krows.ptr[i]..krows.ptr[i + 1] {
                let (p, q) = (block[i], block[n0 + krows.idx[k] as usize]);
                if p != q {
                    *links.entry((p, q)).or_default() += lp[k].exp();
                }
            }
        }
        let mut out_links = vec![Vec::new(); n_blocks];
        let mut in_links = vec![Vec::new(); n_blocks];
        for (&(p, q), &w) in &links {
            out_links[p].push((q, w));
            in_links[q].push((p, w));
        }

        let cap = DRIFT * eps;
        let mut shift = vec![0.0; n_blocks];
        for _ in 0..BLOCK_SWEEPS {
            for p in 0..n_blocks {
                if mass_a[p] == 0.0 || mass_b[p] == 0.0 {
                    continue;
                }
                let slope = |l: f64, shift: &[f64]| -> (f64, f64) {
                    let (ea, eb) = (mass_a[p] * (-l).exp(), mass_b[p] * l.exp());
                    let (mut d, mut dd) = (ea - eb, -ea - eb);
                    for &(q, w) in &out_links[p] {
                        let t = w * ((l - shift[q]) / eps).exp();
                        d -= t;
                        dd -= t / eps;
                    }
                    for &(q, w) in &in_links[p] {
                        let t = w * ((shift[q] - l) / eps).exp();
                        d += t;
                        dd -= t / eps;
                    }
                    (d, dd)
                };
                let (mut lo, mut hi) = (-cap, cap);
                if slope(lo, &shift).0 <= 0.0 {
                    shift[p] = lo;
                    continue;
                }
                if slope(hi, &shift).0 >= 0.0 {
                    shift[p] = hi;
                    continue;
                }
                let mut l = shift[p];
                for _ in 0..60 {
                    let (d, dd) = slope(l, &shift);
                    if d > 0.0 {
                        lo = l;
                    } else {
                        hi = l;
                    }
                    let mut next = l - d / dd;
                    if !(next > lo && next < hi) {
                        next = 0.5 * (lo + hi);
                    }
                    let done = (next - l).abs() <= 1e-9 * eps;
                    l = next;
                    if done {
                        break;
                    }
                }
                shift[p] = l;
            }
        }
        for (i, x) in f.iter_mut().enumerate() {
            *x += shift[block[i]];
        }
        for (j, x) in g.iter_mut().enumerate() {
            *x -= shift[block[n0 + j]];
        }
    }

    /// TV distance between the row marginal and its target: `a` for hard
    /// marginals, the KL stationarity value `a e^{-f}` for soft ones (rows
    /// without finite-cost partners are skipped there).
    fn row_residual(&self, f: &[f64], g: &[f64], eps: f64) -> f64 {
        (0..self.n0)
            .filter(|&i| self.marginals == Marginals::Hard || self.full.row_len(i) > 0)
            .map(|i| {
                let r: f64 = self
                    .full
                    .entries(i)
                    .map(|(j, c)| (self.la[i] + self.lb[j] + (f[i] + g[j] - c) / eps).exp())
                    .sum();
                let target = match self.marginals {
                    Marginals::Hard => self.a[i],
                    Marginals::Soft => (self.la[i] - f[i]).exp(),
                };
                (r - target).abs()
            })
            .sum()
    }

    pub(crate) fn solve(&self) -> Coupling {
        let mut f = vec![0.0; self.n0];
        let mut g = vec![0.0; self.n1];
        let (mut f_prev, mut g_prev) = (f.clone(), g.clone());
        let mut iterations = 0;
        let mut converged = false;
        let last = self.schedule.len() - 1;
        let mut floor_relax = 1.0f64;
        for (stage, &eps) in self.schedule.iter().enumerate() {
            let mut kernel = self.build_kernel(&f, &g, eps);
            converged = false;
            let start_it = iterations;
            let mut change = f64::NAN;
            let mut relax = 1.0f64;
            let mut history = Vec::new();
            for _ in 0..self.cfg.max_iters_per_eps {
                iterations += 1;
                f_prev.copy_from_slice(&f);
                g_prev.copy_from_slice(&g);
                self.half_step(
                    &kernel.rows,
                    &self.full,
                    &g,
                    &kernel.g0,
                    &self.lb,
                    &kernel.f0,
                    &mut f,
                    eps,
                    relax,
                );
                if Self::drifted(&kernel, &f, &g, eps) {
                    kernel = self.build_kernel(&f, &g, eps);
                }
                self.half_step(
                    &kernel.cols,
                    &self.full_t,
                    &f,
                    &kernel.f0,
                    &self.la,
                    &kernel.g0,
                    &mut g,
                    eps,
                    relax,
                );
                if self.marginals == Marginals::Soft {
                    self.translate(&kernel, &mut f, &mut g, eps);
                }
                if Self::drifted(&kernel, &f, &g, eps) {
                    kernel = self.build_kernel(&f, &g, eps);
                }
                change = f
                    .iter()
                    .zip(&f_prev)
                    .chain(g.iter().zip(&g_prev))
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                if history.len() <= PROBE {
                    history.push(change);
                    if history.len() == PROBE + 1 {
                        relax = over_relaxation(&history).max(floor_relax);
                        floor_relax = relax;
                    }
                }
                let step = change / eps;
                if stage < last && step < STAGE_TOL
                    || stage == last
                        && step < RESIDUAL_GATE
                        && self.row_residual(&f, &g, eps) <= self.cfg.tol_marginal
                {
                    converged = true;
                    break;
                }
            }
            log::debug!(
                "eps {eps:.3e}: {} iterations, relaxation {relax:.3}, last change {change:.2e}, {} kernel entries",
                iterations - start_it,
                kernel.rows.idx.len()
            );
        }
        let eps = self.schedule[last];
        let mut weights = DMatrix::zeros(self.n0, self.n1);
        for i in 0..self.n0 {
            for (j, c) in self.full.entries(i) {
                weights[(i, j)] = (self.la[i] + self.lb[j] + (f[i] + g[j] - c) / eps).exp();
            }
        }
        let mut plan = Coupling::from_weights(weights);
        plan.converged = converged;
        plan.iterations = iterations;
        plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_round_trip() {
        let m = Csr {
            ptr: vec![0, 2, 2, 3],
            idx: vec![0, 2, 1],
            val: vec![1.0, 2.0, 3.0],
        };
        let t = m.transpose(3);
        assert_eq!(t.ptr, vec![0, 1, 2, 3]);
        assert_eq!(t.idx, vec![0, 2, 0]);
        let back = t.transpose(3);
        assert_eq!(back.idx, m.idx);
        assert_eq!(back.val, m.val);
    }

    #[test]
    fn lse_handles_empty_and_large() {
        assert_eq!(log_sum_exp(std::iter::empty()), f64::NEG_INFINITY);
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(v.iter().copied()) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
