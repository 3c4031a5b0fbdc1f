//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// Relative singular-value cutoff used by [`pinv`].
pub const PINV_RCOND: f64 = 1e-12;

/// Moore-Penrose pseudo-inverse via SVD; singular values below
/// `PINV_RCOND * sigma_max` are treated as zero.
pub fn pinv(m: &CMatrix) -> CMatrix {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = (PINV_RCOND * smax).max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(eps)
        .expect("SVD was computed with both singular-vector sets")
}

/// `a^H b`.
pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.dotc(b)
}

/// `|a^H b|^2`.
pub fn gain(a: &CVector, b: &CVector) -> f64 {
    a.dotc(b).norm_sqr()
}
