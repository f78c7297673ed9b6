//! Log-domain Sinkhorn for entropic optimal transport with cost `½‖x − y‖²`.
//!
//! Potentials are kept in the normalization-free gauge: the optimal plan has density
//!
//! ```text
//! γ_ij = exp((f_i + g_j − c_ij) / ε)
//! ```
//!
//! against the product of the marginal weights `a ⊗ b`. One sweep is the pair of exact
//! block updates
//!
//! ```text
//! f_i ← −ε · log Σ_j b_j exp((g_j − c_ij) / ε)
//! g_j ← −ε · log Σ_i a_i exp((f_i − c_ij) / ε)
//! ```
//!
//! evaluated with max-subtraction, which is block coordinate ascent on the dual
//! objective. Every reduction runs in a fixed sequential order per row or column, so
//! results do not depend on the number of worker threads.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SampleSet;
use crate::error::{Error, Result};

/// Quadratic transport cost `½‖x − y‖²`.
pub fn cost(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * 0.5)
}

#[inline]
pub(crate) fn half_sq_dist(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        s += d * d;
    }
    0.5 * s
}

/// `out[j] = ½‖p − q_j‖²` for points `q` stored column-major in `cols`. Summation runs
/// over coordinates in index order, matching [`half_sq_dist`] bit for bit.
pub(crate) fn half_sq_dists(p: &[f64], cols: &[f64], out: &mut Vec<f64>) {
    let n = cols.len() / p.len();
    out.clear();
    out.resize(n, 0.0);
    for (k, pk) in p.iter().enumerate() {
        for (o, q) in out.iter_mut().zip(&cols[k * n..(k + 1) * n]) {
            let d = pk - q;
            *o += d * d;
        }
    }
    out.iter_mut().for_each(|o| *o *= 0.5);
}

/// Terms this far below the maximum of `len` log-terms add less than half an ulp to the
/// sum in total, so skipping their `exp` leaves the result unchanged to rounding.
pub(crate) fn negligible_gap(len: usize) -> f64 {
    f64::MANTISSA_DIGITS as f64 * std::f64::consts::LN_2 + (len.max(1) as f64).ln()
}

/// Numerically stable `log Σ exp(v)`; returns `-inf` for an empty or all-`-inf` slice.
pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let floor = max - negligible_gap(v.len());
    let mut sum = 0.0;
    for &x in v {
        if x >= floor {
            sum += (x - max).exp();
        }
    }
    max + sum.ln()
}

/// Solver parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Entropic regularization ε.
    pub eps: f64,
    /// Stop once the L1 marginal error is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Marginal error is evaluated every `check_every` sweeps (and at `max_iter`).
    pub check_every: usize,
}

impl SolverConfig {
    pub const DEFAULT_TOL: f64 = 1e-6;
    pub const DEFAULT_MAX_ITER: usize = 10_000;
    pub const DEFAULT_CHECK_EVERY: usize = 10;

    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            tol: Self::DEFAULT_TOL,
            max_iter: Self::DEFAULT_MAX_ITER,
            check_every: Self::DEFAULT_CHECK_EVERY,
        }
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn check_every(mut self, check_every: usize) -> Self {
        self.check_every = check_every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if self.check_every == 0 {
            return Err(Error::invalid("check_every must be at least 1"));
        }
        Ok(())
    }
}

/// Dual potentials on the source (`f`) and target (`g`) atoms plus solver diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialPair {
    pub eps: f64,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub iterations: usize,
    pub marginal_error: f64,
    pub converged: bool,
}

impl PotentialPair {
    /// The same coupling in another gauge: `(f + c, g − c)`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            f: self.f.iter().map(|v| v + c).collect(),
            g: self.g.iter().map(|v| v - c).collect(),
            ..self.clone()
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::write_json(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::read_json(path)
    }
}

/// The pair of point clouds with log-weights, laid out for fast row access.
struct Problem {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Column-major copies of `x` and `y`.
    x_cols: Vec<f64>,
    y_cols: Vec<f64>,
    d: usize,
    m: usize,
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    eps: f64,
}

impl Problem {
    fn new(source: &SampleSet, target: &SampleSet, eps: f64) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                found: target.dim(),
            });
        }
        let flat = |s: &SampleSet| s.points().iter().copied().collect::<Vec<f64>>();
        let cols = |s: &SampleSet| s.points().t().iter().copied().collect::<Vec<f64>>();
        Ok(Self {
            x: flat(source),
            y: flat(target),
            x_cols: cols(source),
            y_cols: cols(target),
            d: source.dim(),
            m: source.len(),
            n: target.len(),
            a: source.weights().to_vec(),
            b: target.weights().to_vec(),
            log_a: source.weights().iter().map(|w| w.ln()).collect(),
            log_b: target.weights().iter().map(|w| w.ln()).collect(),
            eps,
        })
    }

    fn xi(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn yj(&self, j: usize) -> &[f64] {
        &self.y[j * self.d..(j + 1) * self.d]
    }

    /// `L_i = log Σ_j b_j exp((g_j − c_ij)/ε)` for every source atom.
    fn row_lse(&self, g: &[f64]) -> Vec<f64> {
        let inv = 1.0 / self.eps;
        (0..self.m)
            .into_par_iter()
            .map_init(Vec::new, |buf, i| {
                half_sq_dists(self.xi(i), &self.y_cols, buf);
                for ((v, lb), gj) in buf.iter_mut().zip(&self.log_b).zip(g) {
                    *v = lb + (gj - *v) * inv;
                }
                log_sum_exp(buf)
            })
            .collect()
    }

    /// `M_j = log Σ_i a_i exp((f_i − c_ij)/ε)` for every target atom.
    fn col_lse(&self, f: &[f64]) -> Vec<f64> {
        let inv = 1.0 / self.eps;
        (0..self.n)
            .into_par_iter()
            .map_init(Vec::new, |buf, j| {
                half_sq_dists(self.yj(j), &self.x_cols, buf);
                for ((v, la), fi) in buf.iter_mut().zip(&self.log_a).zip(f) {
                    *v = la + (fi - *v) * inv;
                }
                log_sum_exp(buf)
            })
            .collect()
    }

    fn f_update(&self, g: &[f64]) -> Vec<f64> {
        self.row_lse(g).into_iter().map(|l| -self.eps * l).collect()
    }

    fn g_update(&self, f: &[f64]) -> Vec<f64> {
        self.col_lse(f).into_iter().map(|l| -self.eps * l).collect()
    }

    /// Row masses `Σ_j π_ij`.
    fn row_masses(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        let rows = self.row_lse(g);
        (0..self.m).map(|i| self.a[i] * (f[i] / self.eps + rows[i]).exp()).collect()
    }

    /// Column masses `Σ_i π_ij`.
    fn col_masses(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        let cols = self.col_lse(f);
        (0..self.n).map(|j| self.b[j] * (g[j] / self.eps + cols[j]).exp()).collect()
    }

    fn marginal_error(&self, f: &[f64], g: &[f64]) -> f64 {
        let rows: f64 = self.row_masses(f, g).iter().zip(&self.a).map(|(r, a)| (r - a).abs()).sum();
        let cols: f64 = self.col_masses(f, g).iter().zip(&self.b).map(|(c, b)| (c - b).abs()).sum();
        rows + cols
    }

    fn dual_objective(&self, f: &[f64], g: &[f64]) -> f64 {
        let lin: f64 = dot(&self.a, f) + dot(&self.b, g);
        let mass: f64 = self.row_masses(f, g).iter().sum();
        lin - self.eps * (mass - 1.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Incremental solver state; [`fit`] drives it to convergence.
pub struct Sinkhorn {
    problem: Problem,
    cfg: SolverConfig,
    f: Vec<f64>,
    g: Vec<f64>,
    iterations: usize,
}

impl Sinkhorn {
    /// Start from `f = 0`, `g = 0`.
    pub fn new(source: &SampleSet, target: &SampleSet, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let problem = Problem::new(source, target, cfg.eps)?;
        let (m, n) = (problem.m, problem.n);
        Ok(Self {
            problem,
            cfg,
            f: vec![0.0; m],
            g: vec![0.0; n],
            iterations: 0,
        })
    }

    /// Exact f-update against the current `g`.
    pub fn update_f(&mut self) -> Result<()> {
        let f = self.problem.f_update(&self.g);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::SinkhornNonFinite {
                iteration: self.iterations + 1,
            });
        }
        self.f = f;
        Ok(())
    }

    /// Exact g-update against the current `f`.
    pub fn update_g(&mut self) -> Result<()> {
        let g = self.problem.g_update(&self.f);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::SinkhornNonFinite {
                iteration: self.iterations + 1,
            });
        }
        self.g = g;
        Ok(())
    }

    /// One f-update followed by one g-update.
    pub fn sweep(&mut self) -> Result<()> {
        self.update_f()?;
        self.update_g()?;
        self.iterations += 1;
        Ok(())
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn marginal_error(&self) -> f64 {
        self.problem.marginal_error(&self.f, &self.g)
    }

    /// `‖π1 − a‖₁` and `‖πᵀ1 − b‖₁` separately.
    pub fn marginal_errors(&self) -> (f64, f64) {
        let p = &self.problem;
        let rows = p.row_masses(&self.f, &self.g).iter().zip(&p.a).map(|(r, a)| (r - a).abs()).sum();
        let cols = p.col_masses(&self.f, &self.g).iter().zip(&p.b).map(|(c, b)| (c - b).abs()).sum();
        (rows, cols)
    }

    pub fn dual_objective(&self) -> f64 {
        self.problem.dual_objective(&self.f, &self.g)
    }

    /// Run sweeps until the stopping rule fires.
    pub fn run(&mut self) -> Result<PotentialPair> {
        let mut err = f64::INFINITY;
        let mut converged = false;
        while self.iterations < self.cfg.max_iter {
            self.sweep()?;
            if self.iterations % self.cfg.check_every == 0 || self.iterations == self.cfg.max_iter {
                err = self.marginal_error();
                if !err.is_finite() {
                    return Err(Error::SinkhornNonFinite {
                        iteration: self.iterations,
                    });
                }
                if err <= self.cfg.tol {
                    converged = true;
                    break;
                }
            }
        }
        Ok(PotentialPair {
            eps: self.cfg.eps,
            f: self.f.clone(),
            g: self.g.clone(),
            iterations: self.iterations,
            marginal_error: err,
            converged,
        })
    }
}

/// Solve the entropic OT problem between `source` and `target`.
///
/// Hitting `max_iter` is not an error; the returned pair then has `converged == false`.
pub fn fit(source: &SampleSet, target: &SampleSet, cfg: &SolverConfig) -> Result<PotentialPair> {
    Sinkhorn::new(source, target, cfg.clone())?.run()
}

fn check_pair(source: &SampleSet, target: &SampleSet, pair: &PotentialPair) -> Result<()> {
    if pair.f.len() != source.len() {
        return Err(Error::DimensionMismatch {
            expected: source.len(),
            found: pair.f.len(),
        });
    }
    if pair.g.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            found: pair.g.len(),
        });
    }
    if !(pair.eps.is_finite() && pair.eps > 0.0) {
        return Err(Error::invalid("potential pair has non-positive eps"));
    }
    Ok(())
}

/// `‖π1 − a‖₁ + ‖πᵀ1 − b‖₁` for the plan induced by `pair`.
pub fn marginal_error(source: &SampleSet, target: &SampleSet, pair: &PotentialPair) -> Result<f64> {
    check_pair(source, target, pair)?;
    Ok(Problem::new(source, target, pair.eps)?.marginal_error(&pair.f, &pair.g))
}

/// Dual objective `Σ a_i f_i + Σ b_j g_j − ε Σ_ij a_i b_j (exp((f_i + g_j − c_ij)/ε) − 1)`.
pub fn dual_objective(source: &SampleSet, target: &SampleSet, pair: &PotentialPair) -> Result<f64> {
    check_pair(source, target, pair)?;
    Ok(Problem::new(source, target, pair.eps)?.dual_objective(&pair.f, &pair.g))
}

/// A coupling described by its marginals and potentials.
#[derive(Clone, Copy, Debug)]
pub struct PlanView<'a> {
    pub source: &'a SampleSet,
    pub target: &'a SampleSet,
    pub pair: &'a PotentialPair,
}

impl<'a> PlanView<'a> {
    pub fn new(source: &'a SampleSet, target: &'a SampleSet, pair: &'a PotentialPair) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                found: target.dim(),
            });
        }
        check_pair(source, target, pair)?;
        Ok(Self { source, target, pair })
    }

    fn log_density(&self, i: usize, j: usize) -> f64 {
        let c = half_sq_dist(self.source.row(i), self.target.row(j));
        (self.pair.f[i] + self.pair.g[j] - c) / self.pair.eps
    }

    /// Density `γ_ij` of the plan against `a ⊗ b`.
    pub fn density(&self, i: usize, j: usize) -> Result<f64> {
        let (rows, cols) = (self.source.len(), self.target.len());
        if i >= rows || j >= cols {
            return Err(Error::IndexOutOfRange {
                row: i,
                col: j,
                rows,
                cols,
            });
        }
        Ok(self.log_density(i, j).exp())
    }

    /// Plan masses `π_ij = a_i b_j γ_ij`.
    pub fn masses(&self) -> Array2<f64> {
        let a = self.source.weights();
        let b = self.target.weights();
        Array2::from_shape_fn((self.source.len(), self.target.len()), |(i, j)| {
            a[i] * b[j] * self.log_density(i, j).exp()
        })
    }

    /// `Σ π_ij c_ij + ε KL(π ‖ a ⊗ b)`, the entropic primal objective of the plan.
    pub fn primal_objective(&self) -> f64 {
        let a = self.source.weights();
        let b = self.target.weights();
        let eps = self.pair.eps;
        let mut total = 0.0;
        for i in 0..self.source.len() {
            let xi = self.source.row(i);
            for j in 0..self.target.len() {
                let c = half_sq_dist(xi, self.target.row(j));
                let log_gamma = (self.pair.f[i] + self.pair.g[j] - c) / eps;
                let mass = a[i] * b[j] * log_gamma.exp();
                if mass > 0.0 {
                    total += mass * (c + eps * log_gamma);
                }
            }
        }
        total
    }
}

/// `γ_ij` for the plan in `view`.
pub fn plan_density(view: &PlanView<'_>, i: usize, j: usize) -> Result<f64> {
    view.density(i, j)
}
