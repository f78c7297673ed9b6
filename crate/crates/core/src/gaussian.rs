//! Closed-form Schrödinger bridge between two Gaussians, and the drift-MSE experiment.
//!
//! For `μ = N(a, A)`, `ν = N(b, B)` and volatility ε the optimal entropic plan is the
//! Gaussian with cross-covariance
//!
//! ```text
//! C = A^{1/2} (A^{1/2} B A^{1/2} + ε²/4 I)^{1/2} A^{-1/2} − ε/2 I.
//! ```
//!
//! Writing `K = B − Cᵀ A⁻¹ C` for the conditional covariance of `Y | X` and
//! `q = K⁻¹ (b − Cᵀ A⁻¹ a)`, the tilted target `e^{g/ε} ν` has log-density
//! `½|y|²/ε − ½ yᵀK⁻¹y + yᵀq` up to a constant. Integrating it against the heat kernel
//! gives the affine drift `b_t(z) = G_t z + h_t` with
//!
//! ```text
//! M_t = K⁻¹ + t / ((1 − t)ε) I
//! G_t = (M_t⁻¹ / ((1 − t)ε) − I) / (1 − t)
//! h_t = M_t⁻¹ q / (1 − t)
//! ```
//!
//! and the bridge-mixture marginal
//! `N((1 − t)a + t b, (1 − t)²A + t²B + t(1 − t)(C + Cᵀ + εI))`.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SampleSet;
use crate::drift::{self, Direction};
use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics;
use crate::rng::{derive_seed_path, seeded};
use crate::sinkhorn::{self, SolverConfig};

/// Mean and SPD covariance of a Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    mean: Array1<f64>,
    cov: Array2<f64>,
}

impl GaussianParams {
    pub fn new(mean: Array1<f64>, cov: Array2<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: cov.nrows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mean must be finite"));
        }
        linalg::check_spd(&cov)?;
        Ok(Self { mean, cov })
    }

    /// Axis-aligned Gaussian with the given variances.
    pub fn diagonal(mean: Array1<f64>, variances: &[f64]) -> Result<Self> {
        Self::new(mean, Array2::from_diag(&Array1::from(variances.to_vec())))
    }

    /// `N(0, I_d)`.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(Array1::zeros(dim), Array2::eye(dim))
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &Array2<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Exact draws via the Cholesky factor.
    pub fn sample(&self, count: usize, seed: u64) -> Result<SampleSet> {
        sample_gaussian(&self.mean, &self.cov, count, seed)
    }
}

fn sample_gaussian(mean: &Array1<f64>, cov: &Array2<f64>, count: usize, seed: u64) -> Result<SampleSet> {
    if count == 0 {
        return Err(Error::invalid("count must be positive"));
    }
    let l = linalg::cholesky(cov)?;
    let d = mean.len();
    let mut rng = seeded(seed);
    let xi = Array2::from_shape_simple_fn((count, d), || rng.sample::<f64, _>(StandardNormal));
    let pts = xi.dot(&l.t()) + mean;
    SampleSet::new(pts)
}

/// The closed-form bridge with precomputed static quantities.
#[derive(Clone, Debug)]
pub struct GaussianBridge {
    source: GaussianParams,
    target: GaussianParams,
    eps: f64,
    cross_cov: Array2<f64>,
    /// `K⁻¹`, the precision of `Y | X`.
    cond_precision: Array2<f64>,
    /// `K⁻¹ (b − Cᵀ A⁻¹ a)`.
    tilt_linear: Array1<f64>,
}

/// Affine drift coefficients at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineDrift {
    pub t: f64,
    pub g: Array2<f64>,
    pub h: Array1<f64>,
}

impl AffineDrift {
    pub fn apply(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        self.g.dot(&z) + &self.h
    }

    /// Row-wise `G z + h`.
    pub fn apply_batch(&self, z: &Array2<f64>) -> Array2<f64> {
        z.dot(&self.g.t()) + &self.h
    }
}

impl GaussianBridge {
    pub fn source(&self) -> &GaussianParams {
        &self.source
    }

    pub fn target(&self) -> &GaussianParams {
        &self.target
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    /// Cross-covariance `C = Cov(X, Y)` of the optimal plan.
    pub fn cross_cov(&self) -> &Array2<f64> {
        &self.cross_cov
    }

    /// Covariance of `Y | X`.
    pub fn conditional_cov(&self) -> Result<Array2<f64>> {
        linalg::inv_spd(&self.cond_precision)
    }

    /// Joint covariance `[[A, C], [Cᵀ, B]]`.
    pub fn joint_cov(&self) -> Array2<f64> {
        let d = self.dim();
        let mut j = Array2::zeros((2 * d, 2 * d));
        j.slice_mut(ndarray::s![..d, ..d]).assign(self.source.cov());
        j.slice_mut(ndarray::s![..d, d..]).assign(&self.cross_cov);
        j.slice_mut(ndarray::s![d.., ..d]).assign(&self.cross_cov.t());
        j.slice_mut(ndarray::s![d.., d..]).assign(self.target.cov());
        j
    }

    /// `log(e^{g/ε} ν)(y)` up to an additive constant.
    pub fn tilted_log_density(&self, y: ArrayView1<'_, f64>) -> f64 {
        0.5 * y.dot(&y) / self.eps - 0.5 * y.dot(&self.cond_precision.dot(&y)) + y.dot(&self.tilt_linear)
    }

    /// The potential `g(y)` up to an additive constant.
    pub fn potential(&self, y: ArrayView1<'_, f64>) -> Result<f64> {
        let prec = linalg::inv_spd(self.target.cov())?;
        let r = &y - self.target.mean();
        Ok(self.eps * (self.tilted_log_density(y) + 0.5 * r.dot(&prec.dot(&r))))
    }

    /// `(G_t, h_t)` for `0 ≤ t < 1`.
    pub fn drift_coefficients(&self, t: f64) -> Result<AffineDrift> {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::SingularTime(t));
        }
        let d = self.dim();
        let h = 1.0 - t;
        let mut m = self.cond_precision.clone();
        m.diag_mut().mapv_inplace(|v| v + t / (h * self.eps));
        let m_inv = linalg::inv_spd(&linalg::symmetrize(&m))?;
        let g = (&m_inv / (h * self.eps) - Array2::<f64>::eye(d)) / h;
        let hv = m_inv.dot(&self.tilt_linear) / h;
        Ok(AffineDrift { t, g, h: hv })
    }

    /// The same bridge run backwards: source and target swap roles.
    pub fn reversed(&self) -> Result<GaussianBridge> {
        gaussian_bridge(&self.target, &self.source, self.eps)
    }
}

/// Build the closed-form bridge from `source` to `target` with volatility `eps`.
pub fn gaussian_bridge(source: &GaussianParams, target: &GaussianParams, eps: f64) -> Result<GaussianBridge> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            found: target.dim(),
        });
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let d = source.dim();
    let (a, b) = (source.cov(), target.cov());
    let eye = Array2::<f64>::eye(d);
    let a_half = linalg::sqrtm_spd(a)?;
    let a_inv_half = linalg::inv_sqrtm_spd(a)?;
    let inner = linalg::symmetrize(&a_half.dot(b).dot(&a_half)) + &eye * (eps * eps / 4.0);
    let middle = linalg::sqrtm_spd(&inner)?;
    let cross_cov = a_half.dot(&middle).dot(&a_inv_half) - &eye * (eps / 2.0);

    let a_inv = linalg::inv_spd(a)?;
    let ct_ainv = cross_cov.t().dot(&a_inv);
    let k = linalg::symmetrize(&(b - &ct_ainv.dot(&cross_cov)));
    let cond_precision = linalg::inv_spd(&k)?;
    let shift = target.mean() - &ct_ainv.dot(source.mean());
    let tilt_linear = cond_precision.dot(&shift);
    Ok(GaussianBridge {
        source: source.clone(),
        target: target.clone(),
        eps,
        cross_cov,
        cond_precision,
        tilt_linear,
    })
}

/// Exact drift `G_t z + h_t`.
pub fn oracle_drift(bridge: &GaussianBridge, t: f64, z: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if z.len() != bridge.dim() {
        return Err(Error::DimensionMismatch {
            expected: bridge.dim(),
            found: z.len(),
        });
    }
    Ok(bridge.drift_coefficients(t)?.apply(z))
}

/// Mean and covariance of the bridge at time `t ∈ [0, 1]`.
pub fn oracle_marginal(bridge: &GaussianBridge, t: f64) -> Result<GaussianParams> {
    let (mean, cov) = marginal_moments(bridge, t)?;
    GaussianParams::new(mean, cov)
}

fn marginal_moments(bridge: &GaussianBridge, t: f64) -> Result<(Array1<f64>, Array2<f64>)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("marginal time must lie in [0, 1], got {t}")));
    }
    if t == 0.0 {
        return Ok((bridge.source.mean.clone(), bridge.source.cov.clone()));
    }
    if t == 1.0 {
        return Ok((bridge.target.mean.clone(), bridge.target.cov.clone()));
    }
    let s = 1.0 - t;
    let mean = bridge.source.mean() * s + bridge.target.mean() * t;
    let c = &bridge.cross_cov;
    let mut cov = bridge.source.cov() * (s * s) + bridge.target.cov() * (t * t) + (c + &c.t()) * (t * s);
    cov.diag_mut().mapv_inplace(|v| v + t * s * bridge.eps);
    Ok((mean, linalg::symmetrize(&cov)))
}

/// Exact draws from the time-`t` marginal.
pub fn sample_marginal(bridge: &GaussianBridge, t: f64, count: usize, seed: u64) -> Result<SampleSet> {
    let (mean, cov) = marginal_moments(bridge, t)?;
    sample_gaussian(&mean, &cov, count, seed)
}

/// `Q diag(λ) Qᵀ` with `Q` orthogonal from the QR of a seeded Gaussian matrix and
/// `λ ~ U[0.5, 2]`.
pub fn random_spd(dim: usize, seed: u64) -> Result<Array2<f64>> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let mut rng = seeded(seed);
    let g = Array2::from_shape_simple_fn((dim, dim), || rng.sample::<f64, _>(StandardNormal));
    let q = linalg::qr_orthogonal(&g)?;
    let lambda: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..2.0)).collect();
    let scaled = &q * &Array1::from(lambda);
    Ok(linalg::symmetrize(&scaled.dot(&q.t())))
}

/// Parameters of the drift-MSE experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseConfig {
    pub dim: usize,
    pub eps: f64,
    pub n_grid: Vec<usize>,
    pub tau_grid: Vec<f64>,
    pub trials: usize,
    pub n_mc: usize,
    pub seed: u64,
    /// Sinkhorn marginal tolerance for each fit.
    #[serde(default = "default_fit_tol")]
    pub tol: f64,
}

fn default_fit_tol() -> f64 {
    SolverConfig::DEFAULT_TOL
}

impl MseConfig {
    /// `A = I`, seeded random SPD `B`, centered, ε = 1, ten trials, 10⁴ Monte Carlo draws.
    pub fn standard(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            eps: 1.0,
            n_grid: (6..=12).map(|k| 1usize << k).collect(),
            tau_grid: vec![0.2, 0.5, 0.8],
            trials: 10,
            n_mc: 10_000,
            seed,
            tol: default_fit_tol(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim must be at least 1"));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::invalid("eps must be positive"));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::invalid("n grid must be nonempty with positive entries"));
        }
        if self.tau_grid.is_empty() {
            return Err(Error::invalid("tau grid must be nonempty"));
        }
        if let Some(&t) = self.tau_grid.iter().find(|t| !(0.0..1.0).contains(*t)) {
            return Err(Error::SingularTime(t));
        }
        if self.trials == 0 || self.n_mc == 0 {
            return Err(Error::invalid("trials and n_mc must be positive"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        Ok(())
    }

    /// The Gaussian pair the experiment transports between.
    pub fn problem(&self) -> Result<GaussianBridge> {
        let source = GaussianParams::standard(self.dim)?;
        let b = random_spd(self.dim, derive_seed_path(self.seed, &[u64::MAX]))?;
        let target = GaussianParams::new(Array1::zeros(self.dim), b)?;
        gaussian_bridge(&source, &target, self.eps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub n: usize,
    pub tau: f64,
    pub trial: usize,
    pub mse: f64,
}

/// Median and interquartile range over trials at one `(n, τ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseSummary {
    pub n: usize,
    pub tau: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Least-squares slope of `log median` against `log n` for one `τ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub tau: f64,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MseTable {
    pub config: MseConfig,
    pub rows: Vec<MseRow>,
}

impl MseTable {
    pub fn summaries(&self) -> Vec<MseSummary> {
        let mut out = Vec::new();
        for &n in &self.config.n_grid {
            for &tau in &self.config.tau_grid {
                let vals: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.n == n && r.tau == tau)
                    .map(|r| r.mse)
                    .collect();
                out.push(MseSummary {
                    n,
                    tau,
                    median: quantile(&vals, 0.5),
                    q25: quantile(&vals, 0.25),
                    q75: quantile(&vals, 0.75),
                });
            }
        }
        out
    }

    pub fn median(&self, n: usize, tau: f64) -> Option<f64> {
        self.summaries()
            .into_iter()
            .find(|s| s.n == n && s.tau == tau)
            .map(|s| s.median)
    }

    pub fn slopes(&self) -> Vec<SlopeFit> {
        let summaries = self.summaries();
        self.config
            .tau_grid
            .iter()
            .map(|&tau| {
                let pts: Vec<(f64, f64)> = summaries
                    .iter()
                    .filter(|s| s.tau == tau)
                    .map(|s| ((s.n as f64).ln(), s.median.ln()))
                    .collect();
                let (slope, intercept) = linear_fit(&pts);
                SlopeFit { tau, slope, intercept }
            })
            .collect()
    }

    /// CSV with columns `n,tau,trial,mse`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["n", "tau", "trial", "mse"]).map_err(|e| csv_error(path, e))?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                format!("{:?}", r.tau),
                r.trial.to_string(),
                format!("{:?}", r.mse),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// CSV with columns `n,tau,median,q25,q75`.
    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["n", "tau", "median", "q25", "q75"])
            .map_err(|e| csv_error(path, e))?;
        for s in self.summaries() {
            w.write_record([
                s.n.to_string(),
                format!("{:?}", s.tau),
                format!("{:?}", s.median),
                format!("{:?}", s.q25),
                format!("{:?}", s.q75),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("csv error on {path:?}: {other:?}")),
    }
}

/// Linear-interpolated quantile of unsorted values; NaN for an empty slice.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// For every `(trial, n)`: draw `n` source and `n` target samples, fit, and estimate the
/// drift MSE at each `τ` by Monte Carlo over the exact marginal.
///
/// Seeds are derived from `(seed, trial, n)` and `(seed, trial, n, τ index)`, so the
/// table does not depend on the thread schedule.
pub fn mse_experiment(cfg: &MseConfig) -> Result<MseTable> {
    cfg.validate()?;
    let bridge = cfg.problem()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.trials)
        .flat_map(|trial| cfg.n_grid.iter().map(move |&n| (trial, n)))
        .collect();
    let results: Vec<Result<Vec<MseRow>>> = jobs
        .par_iter()
        .map(|&(trial, n)| {
            let key = [trial as u64, n as u64];
            let seed = derive_seed_path(cfg.seed, &key);
            let xs = bridge.source().sample(n, derive_seed_path(seed, &[0]))?;
            let ys = bridge.target().sample(n, derive_seed_path(seed, &[1]))?;
            let pair = sinkhorn::fit(&xs, &ys, &SolverConfig::new(cfg.eps).tol(cfg.tol))?;
            let model = drift::from_potentials(&pair, &xs, &ys, Direction::Forward)?;
            cfg.tau_grid
                .iter()
                .enumerate()
                .map(|(k, &tau)| {
                    let mc_seed = derive_seed_path(seed, &[2, k as u64]);
                    let mse = metrics::mse_drift(&model, &bridge, tau, cfg.n_mc, mc_seed)?;
                    Ok(MseRow { n, tau, trial, mse })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(jobs.len() * cfg.tau_grid.len());
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| {
        (a.n, a.trial)
            .cmp(&(b.n, b.trial))
            .then(a.tau.total_cmp(&b.tau))
    });
    Ok(MseTable {
        config: cfg.clone(),
        rows,
    })
}
