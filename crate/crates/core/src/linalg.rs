//! Small dense linear-algebra helpers shared by the density and filter code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub(crate) const SYMMETRY_TOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Cholesky factor of an SPD matrix, or `SingularCovariance`.
pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    let chol = Cholesky::new(m.clone()).ok_or(Error::SingularCovariance)?;
    if chol.l_dirty().diagonal().iter().any(|&d| d <= 0.0 || !d.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    Ok(chol)
}

/// log|A| from a Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Inverse of an SPD matrix.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m)?.inverse()))
}

/// Lower-triangular matrix stored row by row, for fast forward
/// substitution and triangular products on short vectors.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PackedLower {
    n: usize,
    /// Row `i` occupies `data[i (i + 1) / 2 ..][..= i]`.
    data: Vec<f64>,
    inv_diag: Vec<f64>,
}

impl PackedLower {
    pub(crate) fn from_lower(l: &DMatrix<f64>) -> Self {
        let n = l.nrows();
        let mut data = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for k in 0..=i {
                data.push(l[(i, k)]);
            }
        }
        let inv_diag = (0..n).map(|i| 1.0 / l[(i, i)]).collect();
        Self { n, data, inv_diag }
    }

    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.data[start..start + i + 1]
    }

    /// Forward substitution `L y = b` in place.
    pub(crate) fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let acc: f64 = row[..i].iter().zip(&b[..i]).map(|(l, y)| l * y).sum();
            b[i] = (b[i] - acc) * self.inv_diag[i];
        }
    }

    /// `dᵀ (L Lᵀ)⁻¹ d`; `d` is overwritten.
    pub(crate) fn mahalanobis_sq(&self, d: &mut [f64]) -> f64 {
        self.solve_in_place(d);
        d.iter().map(|v| v * v).sum()
    }

    /// `out += L xi`
    pub(crate) fn mul_add(&self, xi: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o += self.row(i).iter().zip(xi).map(|(l, x)| l * x).sum::<f64>();
        }
    }
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalise log-weights in place into linear weights summing to one.
/// Returns the log of the normaliser, or `None` when every weight is zero.
pub(crate) fn normalize_log_weights(log_w: &[f64], out: &mut Vec<f64>) -> Option<f64> {
    let lse = logsumexp(log_w);
    if !lse.is_finite() {
        return None;
    }
    out.clear();
    out.extend(log_w.iter().map(|lw| (lw - lse).exp()));
    let total: f64 = out.iter().sum();
    for w in out.iter_mut() {
        *w /= total;
    }
    Some(lse)
}

pub(crate) fn diag_matrix(entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(entries))
}
