//! Sample-based evaluation: Gaussian surrogates, BW-UVP, drift MSE, energy distance and
//! exact one-dimensional W2.

use std::fmt;
use std::fs::OpenOptions;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SampleSet;
use crate::drift::{self, BridgeModel};
use crate::error::{Error, Result};
use crate::gaussian::{csv_error, sample_marginal, GaussianBridge};
use crate::linalg;
use crate::rng::seeded;

/// Larger sets are subsampled before computing the energy distance.
pub const ENERGY_SUBSAMPLE: usize = 4000;

/// Weighted mean and covariance of a sample set.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSummary {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
    pub count: usize,
}

impl MomentSummary {
    pub fn new(mean: Array1<f64>, cov: Array2<f64>, count: usize) -> Result<Self> {
        if cov.dim() != (mean.len(), mean.len()) {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: cov.nrows(),
            });
        }
        Ok(Self { mean, cov, count })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Weighted mean and covariance, normalized by the total weight (no bias correction).
pub fn empirical_moments(set: &SampleSet) -> Result<MomentSummary> {
    if set.len() < 2 {
        return Err(Error::invalid("moments need at least two points"));
    }
    let pts = set.points();
    let w = Array1::from(set.weights().to_vec());
    let mean = w.dot(&pts);
    let centered = &pts - &mean;
    let weighted = &centered * &w.view().insert_axis(ndarray::Axis(1));
    let cov = linalg::symmetrize(&weighted.t().dot(&centered));
    Ok(MomentSummary {
        mean,
        cov,
        count: set.len(),
    })
}

/// `‖m_p − m_q‖² + tr(Σ_p + Σ_q − 2(Σ_p^{1/2} Σ_q Σ_p^{1/2})^{1/2})`, clamped at zero.
pub fn bures_wasserstein_sq(p: &MomentSummary, q: &MomentSummary) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    let dm = &p.mean - &q.mean;
    let root_p = linalg::sqrtm_psd(&p.cov)?;
    let cross = linalg::sqrtm_psd(&linalg::symmetrize(&root_p.dot(&q.cov).dot(&root_p)))?;
    let trace = p.cov.diag().sum() + q.cov.diag().sum() - 2.0 * cross.diag().sum();
    Ok((dm.dot(&dm) + trace).max(0.0))
}

/// Unexplained variance percentage `100 BW² / (0.5 tr Σ_ref)` of the Gaussian surrogates.
pub fn bw_uvp(generated: &SampleSet, reference: &SampleSet) -> Result<f64> {
    let g = empirical_moments(generated)?;
    let r = empirical_moments(reference)?;
    let total_var = r.cov.diag().sum();
    if !(total_var > 0.0) {
        return Err(Error::invalid("reference set has zero total variance"));
    }
    Ok(100.0 * bures_wasserstein_sq(&g, &r)? / (0.5 * total_var))
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub count: usize,
}

/// Mean of `‖drift(model, t, Z) − oracle(t, Z)‖²` over `n_mc` exact draws `Z` from the
/// oracle marginal at `t`.
pub fn mse_drift(model: &BridgeModel, oracle: &GaussianBridge, t: f64, n_mc: usize, seed: u64) -> Result<f64> {
    Ok(mse_drift_estimate(model, oracle, t, n_mc, seed)?.value)
}

/// [`mse_drift`] together with its Monte Carlo standard error.
pub fn mse_drift_estimate(
    model: &BridgeModel,
    oracle: &GaussianBridge,
    t: f64,
    n_mc: usize,
    seed: u64,
) -> Result<McEstimate> {
    if model.dim() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            found: model.dim(),
        });
    }
    let coeffs = oracle.drift_coefficients(t)?;
    let z = sample_marginal(oracle, t, n_mc, seed)?.into_points();
    let est = drift::drift_batch(model, t, z.view())?;
    let exact = coeffs.apply_batch(&z);
    let sq: Vec<f64> = (est - exact).rows().into_iter().map(|r| r.dot(&r)).collect();
    Ok(mc_mean(&sq))
}

/// Sample mean and standard error of `values`.
pub fn mc_mean(values: &[f64]) -> McEstimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    McEstimate {
        value: mean,
        std_error: (var / n as f64).sqrt(),
        count: n,
    }
}

fn subsample(set: &SampleSet, seed: u64) -> Result<SampleSet> {
    if set.len() <= ENERGY_SUBSAMPLE {
        return Ok(set.clone());
    }
    let mut idx = sample(&mut seeded(seed), set.len(), ENERGY_SUBSAMPLE).into_vec();
    idx.sort_unstable();
    let pts = set.points().select(ndarray::Axis(0), &idx);
    let w: Vec<f64> = idx.iter().map(|&i| set.weights()[i]).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("subsample carries no weight"));
    }
    SampleSet::with_weights(pts, w.iter().map(|v| v / total).collect(), None)
}

/// `Σ_ij a_i b_j ‖x_i − y_j‖`, row sums in parallel, reduced in index order.
fn mean_distance(x: &SampleSet, y: &SampleSet) -> f64 {
    let rows: Vec<f64> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            let mut s = 0.0;
            for (j, &wj) in y.weights().iter().enumerate() {
                let yj = y.row(j);
                let mut d2 = 0.0;
                for (a, b) in xi.iter().zip(yj) {
                    d2 += (a - b) * (a - b);
                }
                s += wj * d2.sqrt();
            }
            x.weights()[i] * s
        })
        .collect();
    rows.iter().sum()
}

/// Weighted energy distance `2E‖X − Y‖ − E‖X − X′‖ − E‖Y − Y′‖` (V-statistic form, so it
/// is nonnegative and vanishes on identical sets). Sets above [`ENERGY_SUBSAMPLE`] points
/// are subsampled without replacement using `seed`.
pub fn energy_distance(a: &SampleSet, b: &SampleSet, seed: u64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let a = subsample(a, seed)?;
    let b = subsample(b, seed.wrapping_add(1))?;
    let ab = mean_distance(&a, &b);
    let aa = mean_distance(&a, &a);
    let bb = mean_distance(&b, &b);
    Ok((2.0 * ab - aa - bb).max(0.0))
}

/// Exact W2 between one-dimensional sets via the quantile coupling.
pub fn w2_1d(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    for s in [a, b] {
        if s.dim() != 1 {
            return Err(Error::invalid(format!("w2-1d needs one-dimensional data, got d = {}", s.dim())));
        }
    }
    let sorted = |s: &SampleSet| {
        let mut v: Vec<(f64, f64)> = s.points().column(0).iter().copied().zip(s.weights().iter().copied()).collect();
        v.sort_by(|p, q| p.0.total_cmp(&q.0));
        v
    };
    let (xa, xb) = (sorted(a), sorted(b));
    if a.len() == b.len() && a.is_uniform() && b.is_uniform() {
        let s: f64 = xa.iter().zip(&xb).map(|(p, q)| (p.0 - q.0) * (p.0 - q.0)).sum();
        return Ok((s / a.len() as f64).sqrt());
    }
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (xa[0].1, xb[0].1);
    let mut total = 0.0;
    while i < xa.len() && j < xb.len() {
        let m = ra.min(rb);
        total += m * (xa[i].0 - xb[j].0).powi(2);
        ra -= m;
        rb -= m;
        if ra <= rb {
            i += 1;
            if i < xa.len() {
                ra += xa[i].1;
            }
        } else {
            j += 1;
            if j < xb.len() {
                rb += xb[j].1;
            }
        }
    }
    Ok(total.max(0.0).sqrt())
}

/// Metrics available to the `eval` command.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    BwUvp,
    EnergyDistance,
    W21d,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::BwUvp => "bw-uvp",
            Metric::EnergyDistance => "energy-distance",
            Metric::W21d => "w2-1d",
        }
    }

    pub fn evaluate(self, generated: &SampleSet, reference: &SampleSet, seed: u64) -> Result<f64> {
        match self {
            Metric::BwUvp => bw_uvp(generated, reference),
            Metric::EnergyDistance => energy_distance(generated, reference, seed),
            Metric::W21d => w2_1d(generated, reference),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bw-uvp" => Ok(Metric::BwUvp),
            "energy-distance" => Ok(Metric::EnergyDistance),
            "w2-1d" => Ok(Metric::W21d),
            other => Err(Error::UnknownMetric(other.to_string())),
        }
    }
}

/// One row of the results ledger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub metric: String,
    pub value: f64,
    /// Compact JSON object with the parameters that produced the value.
    pub params: String,
    pub seed: u64,
}

impl LedgerRow {
    pub fn new(metric: impl Into<String>, value: f64, params: &serde_json::Value, seed: u64) -> Self {
        Self {
            metric: metric.into(),
            value,
            params: params.to_string(),
            seed,
        }
    }
}

/// Append rows to a CSV ledger `metric,value,params,seed`, writing the header if the file
/// is new or empty.
pub fn append_ledger(path: impl AsRef<Path>, rows: &[LedgerRow]) -> Result<()> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(["metric", "value", "params", "seed"])
            .map_err(|e| csv_error(path, e))?;
    }
    for r in rows {
        w.write_record([r.metric.clone(), format!("{:?}", r.value), r.params.clone(), r.seed.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a ledger written by [`append_ledger`].
pub fn read_ledger(path: impl AsRef<Path>) -> Result<Vec<LedgerRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}
