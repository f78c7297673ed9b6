//! Time-dependent bridge drift built from a potential on the endpoint atoms.
//!
//! For atoms `Y_j` with potential `g_j`, the drift at time `t ∈ [0, 1)` is
//!
//! ```text
//! b_t(z) = (−z + Σ_j w_j(t, z) Y_j) / (1 − t)
//! w_j(t, z) ∝ exp((g_j − ‖z − Y_j‖² / (2(1 − t))) / ε)
//! ```
//!
//! The weighted average is the entropic barycentric map at regularization `(1 − t)ε`.
//! Adding a constant to every `g_j` leaves the weights, and hence the drift, unchanged.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::sinkhorn::{negligible_gap, PotentialPair};

/// Atoms, their potential values and the regularization ε.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeModel {
    atoms: Array2<f64>,
    /// Column-major copy of `atoms`: coordinate `k` of every atom is contiguous.
    coords: Vec<f64>,
    potential: Vec<f64>,
    eps: f64,
}

#[derive(Serialize, Deserialize)]
struct BridgeModelJson {
    eps: f64,
    atoms: Vec<Vec<f64>>,
    potential: Vec<f64>,
}

/// Normalized softmax weights over the atoms together with their logits.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxWeights {
    pub logits: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Which way a fitted pair is turned into a bridge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Source to target: target atoms with `g`.
    Forward,
    /// Target to source: source atoms with `f`.
    Backward,
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::SingularTime(t))
    }
}

impl BridgeModel {
    pub fn new(atoms: Array2<f64>, potential: Vec<f64>, eps: f64) -> Result<Self> {
        let (n, d) = atoms.dim();
        if n == 0 || d == 0 {
            return Err(Error::invalid("bridge model needs at least one atom of dimension >= 1"));
        }
        if potential.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: potential.len(),
            });
        }
        if atoms.iter().chain(&potential).any(|v| !v.is_finite()) {
            return Err(Error::invalid("bridge model entries must be finite"));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::invalid(format!("eps must be positive, got {eps}")));
        }
        let atoms = if atoms.is_standard_layout() {
            atoms
        } else {
            atoms.as_standard_layout().into_owned()
        };
        let coords = atoms.t().iter().copied().collect();
        Ok(Self {
            atoms,
            coords,
            potential,
            eps,
        })
    }

    pub fn atoms(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn len(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.atoms.ncols()
    }

    /// `max_j ‖Y_j‖`.
    pub fn support_radius(&self) -> f64 {
        self.atoms
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0, f64::max)
    }

    /// Same model with every potential value shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            potential: self.potential.iter().map(|g| g + c).collect(),
            ..self.clone()
        }
    }

    fn atom(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.atoms.as_slice().expect("standard layout")[j * d..(j + 1) * d]
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: z.len(),
            });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("evaluation point must be finite"));
        }
        Ok(())
    }

    /// Unnormalized log-weights into `logits`; returns their maximum.
    fn fill_logits(&self, t: f64, z: &[f64], logits: &mut [f64]) -> f64 {
        let inv_eps = 1.0 / self.eps;
        let inv_h = 1.0 / (2.0 * (1.0 - t));
        let n = self.len();
        // Squared distances accumulate coordinate by coordinate in index order.
        logits.iter_mut().for_each(|l| *l = 0.0);
        for (k, zk) in z.iter().enumerate() {
            for (l, y) in logits.iter_mut().zip(&self.coords[k * n..(k + 1) * n]) {
                let d = zk - y;
                *l += d * d;
            }
        }
        let mut max = f64::NEG_INFINITY;
        for (l, g) in logits.iter_mut().zip(&self.potential) {
            *l = (g - *l * inv_h) * inv_eps;
            max = max.max(*l);
        }
        max
    }

    /// Barycentric map at `(t, z)` written into `out`; `scratch` holds `n` logits.
    ///
    /// Callers must have validated `t` and `z`.
    pub(crate) fn barycenter_into(&self, t: f64, z: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        scratch.resize(self.len(), 0.0);
        let max = self.fill_logits(t, z, scratch);
        out.iter_mut().for_each(|o| *o = 0.0);
        let floor = max - negligible_gap(scratch.len());
        let mut total = 0.0;
        for (j, &l) in scratch.iter().enumerate() {
            if l < floor {
                continue;
            }
            let w = (l - max).exp();
            total += w;
            for (o, y) in out.iter_mut().zip(self.atom(j)) {
                *o += w * y;
            }
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }

    /// Drift at `(t, z)` written into `out`. Callers must have validated `t` and `z`.
    pub(crate) fn drift_into(&self, t: f64, z: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        self.barycenter_into(t, z, scratch, out);
        let inv = 1.0 / (1.0 - t);
        for (o, zk) in out.iter_mut().zip(z) {
            *o = (*o - zk) * inv;
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_json())?)
    }

    fn to_json(&self) -> BridgeModelJson {
        BridgeModelJson {
            eps: self.eps,
            atoms: self.atoms.rows().into_iter().map(|r| r.to_vec()).collect(),
            potential: self.potential.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::write_json(&self.to_json(), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let raw: BridgeModelJson = crate::read_json(path)?;
        let n = raw.atoms.len();
        let d = raw.atoms.first().map(Vec::len).unwrap_or(0);
        if let Some(row) = raw.atoms.iter().position(|r| r.len() != d) {
            return Err(Error::RaggedRow {
                row,
                expected: d,
                found: raw.atoms[row].len(),
            });
        }
        let flat: Vec<f64> = raw.atoms.into_iter().flatten().collect();
        let atoms = Array2::from_shape_vec((n, d), flat).map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(atoms, raw.potential, raw.eps)
    }
}

/// Softmax weights `w_j(t, z)`.
pub fn weights(model: &BridgeModel, t: f64, z: ArrayView1<'_, f64>) -> Result<SoftmaxWeights> {
    check_time(t)?;
    let z = z.to_vec();
    model.check_point(&z)?;
    let mut logits = vec![0.0; model.len()];
    let max = model.fill_logits(t, &z, &mut logits);
    let mut weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(SoftmaxWeights { logits, weights })
}

/// Entropic barycentric map `Σ_j w_j(t, z) Y_j`.
pub fn barycentric_map(model: &BridgeModel, t: f64, z: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    check_time(t)?;
    let z = z.to_vec();
    model.check_point(&z)?;
    let mut out = vec![0.0; model.dim()];
    model.barycenter_into(t, &z, &mut Vec::new(), &mut out);
    Ok(Array1::from(out))
}

/// Drift `(barycentric_map(t, z) − z) / (1 − t)`.
pub fn drift(model: &BridgeModel, t: f64, z: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    check_time(t)?;
    let z = z.to_vec();
    model.check_point(&z)?;
    let mut out = vec![0.0; model.dim()];
    model.drift_into(t, &z, &mut Vec::new(), &mut out);
    Ok(Array1::from(out))
}

/// Row-wise [`drift`] over a batch of points.
pub fn drift_batch(model: &BridgeModel, t: f64, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_time(t)?;
    if points.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: points.ncols(),
        });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("evaluation points must be finite"));
    }
    let d = model.dim();
    let rows: Vec<f64> = (0..points.nrows())
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| {
            let z = points.row(i).to_vec();
            let mut buf = vec![0.0; d];
            model.drift_into(t, &z, scratch, &mut buf);
            buf
        })
        .flatten_iter()
        .collect();
    let out = Array2::from_shape_vec((points.nrows(), d), rows).expect("row-major drift batch");
    Ok(out)
}

/// Bridge from a point mass at the origin to `target`; the potential is `½‖Y_j‖²`,
/// so no transport problem has to be solved.
pub fn follmer_model(target: &SampleSet, eps: f64) -> Result<BridgeModel> {
    let potential = target
        .points()
        .rows()
        .into_iter()
        .map(|y| 0.5 * y.dot(&y))
        .collect();
    BridgeModel::new(target.points().to_owned(), potential, eps)
}

/// Build the forward (`g` on target atoms) or backward (`f` on source atoms) model.
///
/// An unconverged pair is accepted; a warning is logged.
pub fn from_potentials(
    pair: &PotentialPair,
    source: &SampleSet,
    target: &SampleSet,
    direction: Direction,
) -> Result<BridgeModel> {
    if pair.f.len() != source.len() || pair.g.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: source.len() + target.len(),
            found: pair.f.len() + pair.g.len(),
        });
    }
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            found: target.dim(),
        });
    }
    if !pair.converged {
        log::warn!(
            "building a bridge from an unconverged pair (marginal error {:e} after {} iterations)",
            pair.marginal_error,
            pair.iterations
        );
    }
    match direction {
        Direction::Forward => BridgeModel::new(target.points().to_owned(), pair.g.clone(), pair.eps),
        Direction::Backward => BridgeModel::new(source.points().to_owned(), pair.f.clone(), pair.eps),
    }
}

/// Upper bound on the Lipschitz constant of the drift at time `t` when every atom lies
/// in the ball of radius `radius`: `max(1, R² / ((1 − t)ε)) / (1 − t)`.
pub fn lipschitz_bound(model: &BridgeModel, t: f64, radius: f64) -> Result<f64> {
    check_time(t)?;
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::invalid("radius must be finite and nonnegative"));
    }
    let h = 1.0 - t;
    Ok((radius * radius / (h * model.eps)).max(1.0) / h)
}
