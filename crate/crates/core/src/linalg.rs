//! Small dense symmetric-matrix helpers on `ndarray` matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as zero; functions needing strict positivity fail.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Tolerance on `|M − Mᵀ|` entries for a matrix to count as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub(crate) fn to_na(m: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = m.dim();
    DMatrix::from_fn(r, c, |i, j| m[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// `max |M_ij − M_ji|`, scaled by `max(1, max |M_ij|)`.
pub fn asymmetry(m: &Array2<f64>) -> f64 {
    let scale = m.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    worst / scale
}

pub fn symmetrize(m: &Array2<f64>) -> Array2<f64> {
    (m + &m.t()) * 0.5
}

fn check_square(m: &Array2<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Eigenvalues (ascending) and eigenvectors (columns) of the symmetric part of `m`.
pub fn sym_eigen(m: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    check_square(m)?;
    let eig = SymmetricEigen::new(to_na(&symmetrize(m)));
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Array2::from_shape_fn(m.dim(), |(i, j)| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

/// `V diag(φ(λ)) Vᵀ` for symmetric `m`.
pub fn sym_apply(m: &Array2<f64>, phi: impl Fn(f64) -> f64) -> Result<Array2<f64>> {
    let (values, v) = sym_eigen(m)?;
    let n = values.len();
    let mut scaled = v.clone();
    for j in 0..n {
        let s = phi(values[j]);
        scaled.column_mut(j).mapv_inplace(|x| x * s);
    }
    Ok(symmetrize(&scaled.dot(&v.t())))
}

/// Check symmetry and that every eigenvalue exceeds [`EIGEN_FLOOR`].
pub fn check_spd(m: &Array2<f64>) -> Result<()> {
    check_square(m)?;
    if asymmetry(m) > SYMMETRY_TOL {
        return Err(Error::NotPositiveDefinite(format!("asymmetry {:e}", asymmetry(m))));
    }
    let (values, _) = sym_eigen(m)?;
    if values[0] <= EIGEN_FLOOR {
        return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {:e}", values[0])));
    }
    Ok(())
}

/// Principal square root of a symmetric PSD matrix; eigenvalues in `(−floor, floor]`
/// are clamped to zero, anything more negative is an error.
pub fn sqrtm_psd(m: &Array2<f64>) -> Result<Array2<f64>> {
    let (values, _) = sym_eigen(m)?;
    let scale = values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    if values[0] < -EIGEN_FLOOR * scale {
        return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {:e}", values[0])));
    }
    sym_apply(m, |l| if l <= EIGEN_FLOOR * scale { 0.0 } else { l.sqrt() })
}

/// Square root of an SPD matrix.
pub fn sqrtm_spd(m: &Array2<f64>) -> Result<Array2<f64>> {
    check_spd(m)?;
    sym_apply(m, f64::sqrt)
}

/// Inverse square root of an SPD matrix.
pub fn inv_sqrtm_spd(m: &Array2<f64>) -> Result<Array2<f64>> {
    check_spd(m)?;
    sym_apply(m, |l| 1.0 / l.sqrt())
}

/// Inverse of an SPD matrix.
pub fn inv_spd(m: &Array2<f64>) -> Result<Array2<f64>> {
    check_spd(m)?;
    sym_apply(m, |l| 1.0 / l)
}

/// Inverse of a general square matrix by LU.
pub fn inv(m: &Array2<f64>) -> Result<Array2<f64>> {
    check_square(m)?;
    to_na(m)
        .try_inverse()
        .map(|i| from_na(&i))
        .ok_or_else(|| Error::invalid("matrix is singular"))
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky(m: &Array2<f64>) -> Result<Array2<f64>> {
    check_spd(m)?;
    nalgebra::Cholesky::new(to_na(&symmetrize(m)))
        .map(|c| from_na(&c.l()))
        .ok_or_else(|| Error::NotPositiveDefinite("cholesky failed".into()))
}

/// Orthogonal factor of the QR decomposition, with columns signed so that `R` has a
/// nonnegative diagonal.
pub fn qr_orthogonal(m: &Array2<f64>) -> Result<Array2<f64>> {
    check_square(m)?;
    let qr = to_na(m).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(from_na(&q))
}

/// Frobenius norm.
pub fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}
