//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted descending.
///
/// Ties keep the order produced by the decomposition.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let h = hermitian_part(m);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// (M + Mᴴ)/2
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Inverse square root of a Hermitian positive definite matrix.
///
/// Fails when an eigenvalue falls below `floor * λ_max`.
pub fn inv_sqrt_hermitian(m: &CMatrix, floor: f64) -> Result<CMatrix> {
    let (values, vectors) = hermitian_eigen(m);
    let largest = values.first().copied().unwrap_or(0.0);
    let smallest = values.last().copied().unwrap_or(0.0);
    if !(largest > 0.0) || smallest < floor * largest {
        return Err(Error::NearSingularWhitener { smallest, largest });
    }
    let scaled = CMatrix::from_fn(vectors.nrows(), vectors.ncols(), |r, c| {
        vectors[(r, c)] / values[c].sqrt()
    });
    Ok(&scaled * vectors.adjoint())
}

/// Left pseudo-inverse (AᴴA)⁻¹Aᴴ of a tall matrix and the Gram inverse (AᴴA)⁻¹,
/// both computed from a thin SVD.
pub struct LeftInverse {
    pub pinv: CMatrix,
    pub gram_inv: CMatrix,
    pub singular_values: Vec<f64>,
}

/// Fails with [`Error::DegenerateCoding`] when σ_min < `rank_tol` · σ_max.
pub fn left_inverse(a: &CMatrix, rank_tol: f64) -> Result<LeftInverse> {
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::Numerical("SVD without U".into()))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Numerical("SVD without Vᴴ".into()))?;
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let largest = sv.iter().copied().fold(0.0, f64::max);
    let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if sv.len() < a.ncols() || !(largest > 0.0) || smallest < rank_tol * largest {
        return Err(Error::DegenerateCoding { smallest, largest });
    }
    let v = v_t.adjoint();
    let n = sv.len();
    let v_over_s = CMatrix::from_fn(v.nrows(), n, |r, c| v[(r, c)] / sv[c]);
    let v_over_s2 = CMatrix::from_fn(v.nrows(), n, |r, c| v[(r, c)] / (sv[c] * sv[c]));
    let pinv = &v_over_s * u.adjoint();
    let gram_inv = &v_over_s2 * v.adjoint();
    Ok(LeftInverse {
        pinv,
        gram_inv,
        singular_values: sv,
    })
}

/// Kronecker product of two column vectors, first-index major.
pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    CVector::from_fn(a.len() * b.len(), |i, _| a[i / b.len()] * b[i % b.len()])
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
