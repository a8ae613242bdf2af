use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// Euclidean norm, scaled to avoid overflow for large entries.
pub(crate) fn norm2(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let sum: f64 = x.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * libm::sqrt(sum)
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&diff)
}

pub(crate) fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let v = m * DVector::from_column_slice(x);
    v.iter().copied().collect()
}

/// Largest entrywise deviation of `mᵀm` from the identity.
pub(crate) fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let mut worst = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max(libm::fabs(gram[(i, j)] - target));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_handles_extremes() {
        assert_eq!(norm2(&[3.0, 4.0]), 5.0);
        assert_eq!(norm2(&[0.0, 0.0]), 0.0);
        assert!((norm2(&[3e200, 4e200]) / 5e200 - 1.0).abs() < 1e-15);
        assert!((norm2(&[3e-200, 4e-200]) / 5e-200 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_is_orthogonal() {
        assert_eq!(orthogonality_defect(&DMatrix::identity(4, 4)), 0.0);
        assert_eq!(orthogonality_defect(&DMatrix::from_element(2, 2, 1.0)), 2.0);
    }
}
