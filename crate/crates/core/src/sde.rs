//! Euler–Maruyama simulation of the bridge SDE and exact bridge-mixture sampling.
//!
//! The simulator advances
//!
//! ```text
//! x_{k+1} = x_k + η b_{kη}(x_k) + √(ηε) ξ_k,   η = τ / N
//! ```
//!
//! with `ξ_k` read from the counter-addressed stream `(seed, trajectory, k)`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{write_floats, SampleSet};
use crate::drift::BridgeModel;
use crate::error::{Error, Result};
use crate::rng::{seeded, NoiseStream};
use crate::sinkhorn::PlanView;

/// Discretization and noise parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Terminal time τ, strictly inside (0, 1).
    pub tau: f64,
    /// Number of Euler–Maruyama steps N.
    pub steps: usize,
    /// Volatility ε; must match the model.
    pub eps: f64,
    pub seed: u64,
    /// Drop the Brownian increment (deterministic ODE limit, for testing).
    #[serde(default)]
    pub zero_noise: bool,
    /// Keep every intermediate state, not just the endpoints.
    #[serde(default = "default_true")]
    pub keep_paths: bool,
}

fn default_true() -> bool {
    true
}

impl SimConfig {
    pub fn new(tau: f64, steps: usize, eps: f64, seed: u64) -> Self {
        Self {
            tau,
            steps,
            eps,
            seed,
            zero_noise: false,
            keep_paths: true,
        }
    }

    pub fn zero_noise(mut self, on: bool) -> Self {
        self.zero_noise = on;
        self
    }

    pub fn keep_paths(mut self, on: bool) -> Self {
        self.keep_paths = on;
        self
    }

    pub fn step_size(&self) -> f64 {
        self.tau / self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::SingularTime(self.tau));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }

    /// `{0, η, …, τ}` with the last entry exactly τ.
    pub fn time_grid(&self) -> Vec<f64> {
        let n = self.steps as f64;
        (0..=self.steps)
            .map(|k| if k == self.steps { self.tau } else { self.tau * k as f64 / n })
            .collect()
    }
}

/// Simulated paths on the time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    pub times: Vec<f64>,
    /// `B × (N+1) × d`; `None` in endpoints-only mode.
    pub paths: Option<Array3<f64>>,
    /// `B × d` final states.
    pub finals: Array2<f64>,
    pub seed: u64,
    pub config: SimConfig,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.finals.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// States at grid index `k` (requires stored paths).
    pub fn snapshot(&self, k: usize) -> Option<Array2<f64>> {
        self.paths
            .as_ref()
            .filter(|p| k < p.shape()[1])
            .map(|p| p.index_axis(ndarray::Axis(1), k).to_owned())
    }

    /// CSV with columns `traj,step,t,x0..x{d-1}`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let paths = self
            .paths
            .as_ref()
            .ok_or_else(|| Error::invalid("batch was simulated without stored paths"))?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        let (b, steps, d) = paths.dim();
        let mut header = vec!["traj".to_string(), "step".to_string(), "t".to_string()];
        header.extend((0..d).map(|k| format!("x{k}")));
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for i in 0..b {
            for k in 0..steps {
                write!(w, "{i},{k},{:?},", self.times[k]).map_err(io)?;
                write_floats(&mut w, (0..d).map(|c| paths[[i, k, c]])).map_err(io)?;
                writeln!(w).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// Run the discretized bridge SDE from every row of `init`.
pub fn simulate(model: &BridgeModel, init: &SampleSet, cfg: &SimConfig) -> Result<TrajectoryBatch> {
    cfg.validate()?;
    if (model.eps() - cfg.eps).abs() > 1e-12 * model.eps() {
        return Err(Error::invalid(format!(
            "simulation eps {} does not match model eps {}",
            cfg.eps,
            model.eps()
        )));
    }
    if init.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: init.dim(),
        });
    }
    let d = model.dim();
    let steps = cfg.steps;
    let times = cfg.time_grid();
    let eta = cfg.step_size();
    let noise_scale = if cfg.zero_noise { 0.0 } else { (eta * cfg.eps).sqrt() };

    let run = |traj: usize| -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let stream = NoiseStream::new(cfg.seed, traj as u64);
        let mut x = init.row(traj).to_vec();
        let mut drift = vec![0.0; d];
        let mut xi = vec![0.0; d];
        let mut scratch = Vec::with_capacity(model.len());
        let mut path = cfg.keep_paths.then(|| {
            let mut p = Vec::with_capacity((steps + 1) * d);
            p.extend_from_slice(&x);
            p
        });
        for (k, &t) in times[..steps].iter().enumerate() {
            model.drift_into(t, &x, &mut scratch, &mut drift);
            if !cfg.zero_noise {
                stream.fill_normals(k as u64, &mut xi);
            }
            for c in 0..d {
                x[c] += eta * drift[c] + noise_scale * xi[c];
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState {
                    trajectory: traj,
                    step: k + 1,
                });
            }
            if let Some(p) = path.as_mut() {
                p.extend_from_slice(&x);
            }
        }
        Ok((x, path))
    };

    let results: Vec<_> = (0..init.len()).into_par_iter().map(run).collect();
    let b = init.len();
    let mut finals = Array2::zeros((b, d));
    let mut paths = cfg.keep_paths.then(|| Array3::zeros((b, steps + 1, d)));
    for (i, r) in results.into_iter().enumerate() {
        let (x, path) = r?;
        finals.row_mut(i).assign(&ndarray::ArrayView1::from(&x));
        if let (Some(all), Some(p)) = (paths.as_mut(), path) {
            let view = ndarray::ArrayView2::from_shape((steps + 1, d), &p).expect("path shape");
            all.index_axis_mut(ndarray::Axis(0), i).assign(&view);
        }
    }
    Ok(TrajectoryBatch {
        times,
        paths,
        finals,
        seed: cfg.seed,
        config: cfg.clone(),
    })
}

/// Final states as a uniformly weighted set.
pub fn endpoints(batch: &TrajectoryBatch) -> Result<SampleSet> {
    SampleSet::new(batch.finals.clone())
}

/// Exact draws from the time-`t` marginal of the Brownian-bridge mixture over the plan
/// in `view`: pick `(i, j)` with probability `π_ij`, then return
/// `t Y_j + (1 − t) X_i + √(t(1 − t)ε) ξ`.
pub fn bridge_mixture_sample(view: &PlanView<'_>, t: f64, count: usize, seed: u64) -> Result<SampleSet> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("mixture time must lie in [0, 1], got {t}")));
    }
    if count == 0 {
        return Err(Error::invalid("count must be positive"));
    }
    let masses = view.masses();
    let total: f64 = masses.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::DegeneratePlan(total));
    }
    let cols = masses.ncols();
    let index = WeightedIndex::new(masses.iter().copied()).map_err(|_| Error::DegeneratePlan(total))?;
    let d = view.source.dim();
    let sd = (t * (1.0 - t) * view.pair.eps).sqrt();
    let mut rng = seeded(seed);
    let mut out = Array2::zeros((count, d));
    for mut row in out.rows_mut() {
        let flat = index.sample(&mut rng);
        let (x, y) = (view.source.row(flat / cols), view.target.row(flat % cols));
        for c in 0..d {
            let xi: f64 = if sd > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            row[c] = t * y[c] + (1.0 - t) * x[c] + sd * xi;
        }
    }
    SampleSet::new(out)
}
