//! The `K ∘ g` form of a decomposition.
//!
//! Any unitary `V*` can be inserted next to the lifting: with `g = V v`,
//! `f(x) = U Σ V* g(x) = K g(x)` where `K = U Σ V*` is an ordinary matrix
//! whose SVD is exactly `(U, Σ, V*)`. Right singular vectors with zero
//! singular value span the kernel of `K`; projecting `g(x)` onto them gives
//! the coordinates of `x` that `f` throws away.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lift::{Decomposition, LiftError};
use crate::linalg::{mat_vec, norm2, orthogonality_defect};
use crate::sampling::{rng_for, uniform_in_box};

/// Entrywise tolerance on `MᵀM = I`.
pub const UNITARY_TOL: f64 = 1e-10;
/// Largest matrix side accepted by [`svd_small`].
pub const SVD_MAX_DIM: usize = 64;
/// Singular values at or below `ZERO_SIGMA_REL · σ₁` count as zero.
pub const ZERO_SIGMA_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not unitary: max |MᵀM - I| = {defect}")]
    NotUnitary { defect: f64 },
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is {rows}x{cols}; the small SVD is capped at {SVD_MAX_DIM}")]
    TooLarge { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("Riesz representer needs a functional (p = 1), got p = {p}")]
    NotFunctional { p: usize },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error(transparent)]
    Lift(#[from] LiftError),
}

/// A real square matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(DMatrix<f64>);

impl UnitaryMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, FactorError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(FactorError::NotSquare { rows: matrix.nrows(), cols: matrix.ncols() });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(FactorError::NonFinite);
        }
        let defect = orthogonality_defect(&matrix);
        if defect > UNITARY_TOL {
            return Err(FactorError::NotUnitary { defect });
        }
        Ok(UnitaryMatrix(matrix))
    }

    pub fn identity(dim: usize) -> Self {
        UnitaryMatrix(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn transpose(&self) -> UnitaryMatrix {
        UnitaryMatrix(self.0.transpose())
    }
}

/// Haar-distributed orthogonal matrix: QR of a seeded Gaussian matrix with
/// the signs of `R`'s diagonal folded into `Q`.
pub fn random_unitary(dim: usize, seed: u64) -> UnitaryMatrix {
    let mut rng = rng_for(seed, 0);
    let g = DMatrix::from_fn(dim, dim, |_, _| crate::sampling::gaussian(&mut rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    UnitaryMatrix(q)
}

/// Full SVD `M = U Σ V*` with square `U`, `V*` and descending `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

impl SmallSvd {
    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.u.nrows(), self.v_t.nrows());
        for (i, &v) in self.singular_values.iter().enumerate() {
            s[(i, i)] = v;
        }
        s
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * self.sigma_matrix() * &self.v_t
    }
}

/// Extends orthonormal columns to a square orthogonal matrix.
fn complete_basis(thin: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, k) = thin.shape();
    if k >= rows {
        return thin.columns(0, rows).into_owned();
    }
    let mut aug = DMatrix::zeros(rows, k + rows);
    aug.columns_mut(0, k).copy_from(thin);
    aug.columns_mut(k, rows).fill_with_identity();
    let q = aug.qr().q();
    let mut out = DMatrix::zeros(rows, rows);
    out.columns_mut(0, k).copy_from(thin);
    out.columns_mut(k, rows - k).copy_from(&q.columns(k, rows - k));
    out
}

/// SVD of a small dense matrix (each side at most [`SVD_MAX_DIM`]).
pub fn svd_small(m: &DMatrix<f64>) -> Result<SmallSvd, FactorError> {
    let (rows, cols) = m.shape();
    if rows > SVD_MAX_DIM || cols > SVD_MAX_DIM {
        return Err(FactorError::TooLarge { rows, cols });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(FactorError::NonFinite);
    }
    let k = rows.min(cols);
    if k == 0 {
        return Ok(SmallSvd {
            u: DMatrix::identity(rows, rows),
            singular_values: Vec::new(),
            v_t: DMatrix::identity(cols, cols),
        });
    }
    let svd = m.clone().svd(true, true);
    let u_thin = svd.u.expect("U requested");
    let v_t_thin = svd.v_t.expect("V* requested");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = DMatrix::from_fn(rows, k, |r, c| u_thin[(r, order[c])]);
    let v_sorted = DMatrix::from_fn(cols, k, |r, c| v_t_thin[(order[c], r)]);
    Ok(SmallSvd {
        u: complete_basis(&u_sorted),
        singular_values,
        v_t: complete_basis(&v_sorted).transpose(),
    })
}

/// `K = U Σ V*` together with the lifting `g = V v`.
#[derive(Debug, Clone, PartialEq)]
pub struct KFactorization {
    decomposition: Decomposition,
    vstar: UnitaryMatrix,
    k: DMatrix<f64>,
}

pub fn compose_k(dec: &Decomposition, vstar: UnitaryMatrix) -> Result<KFactorization, FactorError> {
    if vstar.dim() != dec.m() {
        return Err(FactorError::DimensionMismatch { expected: dec.m(), got: vstar.dim() });
    }
    let k = dec.u_matrix() * dec.sigma_matrix() * vstar.matrix();
    Ok(KFactorization { decomposition: dec.clone(), vstar, k })
}

impl KFactorization {
    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn u(&self) -> DMatrix<f64> {
        self.decomposition.u_matrix()
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        self.decomposition.sigma_matrix()
    }

    pub fn vstar(&self) -> &UnitaryMatrix {
        &self.vstar
    }

    /// `g(x) = V v(x)`, so that `V* g(x) = v(x)`.
    pub fn g(&self, x: &[f64]) -> Result<Vec<f64>, LiftError> {
        let v = self.decomposition.lift(x)?.v;
        Ok(self.vstar.matrix().tr_mul(&nalgebra::DVector::from_column_slice(&v)).iter().copied().collect())
    }

    /// `K g(x)`, which equals `f(x)`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, LiftError> {
        Ok(mat_vec(&self.k, &self.g(x)?))
    }

    /// Left inverse of `g`.
    pub fn g_inverse(&self, y: &[f64]) -> Result<Vec<f64>, LiftError> {
        let v = mat_vec(self.vstar.matrix(), y);
        self.decomposition.unlift(&v)
    }
}

/// Right singular vectors of `K` split by whether their singular value is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelAnalysis {
    /// `m × k`, orthonormal columns spanning `ker K`.
    pub kernel_basis: DMatrix<f64>,
    /// `m × r`, orthonormal columns spanning the row space of `K`.
    pub row_basis: DMatrix<f64>,
    /// `σ` padded with zeros to length `m`, aligned with the columns of `V`.
    pub singular_values: Vec<f64>,
}

/// Reads the split directly off `K = U Σ V*`: column `i` of `V` pairs with
/// `σᵢ`, and the `n` structural zero columns of `Σ` always land in the kernel.
pub fn kernel_analysis(kf: &KFactorization) -> KernelAnalysis {
    let m = kf.decomposition.m();
    let mut singular_values = kf.decomposition.sigma_spec().sigma().to_vec();
    singular_values.resize(m, 0.0);
    let sigma_max = singular_values.iter().fold(0.0f64, |a, b| a.max(*b));
    let cutoff = ZERO_SIGMA_REL * sigma_max;
    let v = kf.vstar.matrix().transpose();
    let (row_idx, ker_idx): (Vec<usize>, Vec<usize>) =
        (0..m).partition(|&i| sigma_max > 0.0 && singular_values[i] > cutoff);
    let pick = |idx: &[usize]| DMatrix::from_fn(m, idx.len(), |r, c| v[(r, idx[c])]);
    KernelAnalysis { kernel_basis: pick(&ker_idx), row_basis: pick(&row_idx), singular_values }
}

impl KernelAnalysis {
    pub fn kernel_dim(&self) -> usize {
        self.kernel_basis.ncols()
    }

    pub fn rank(&self) -> usize {
        self.row_basis.ncols()
    }
}

fn project(basis: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    basis.tr_mul(&nalgebra::DVector::from_column_slice(y)).iter().copied().collect()
}

/// Coordinates of `g(x)` along the kernel directions of `K`.
pub fn lost_information(x: &[f64], kf: &KFactorization, ka: &KernelAnalysis) -> Result<Vec<f64>, FactorError> {
    Ok(project(&ka.kernel_basis, &kf.g(x)?))
}

/// Coordinates of `g(x)` along the row-space directions of `K`.
pub fn retained_information(x: &[f64], kf: &KFactorization, ka: &KernelAnalysis) -> Result<Vec<f64>, FactorError> {
    Ok(project(&ka.row_basis, &kf.g(x)?))
}

/// Samples the relaxed null set: uniform draws `x` from the domain box with
/// `‖K g(x)‖ ≤ tol · ‖x‖`. Singular points are skipped.
pub fn nullspace_relaxation_sample(
    kf: &KFactorization,
    budget: usize,
    tol: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>, FactorError> {
    if !(tol > 0.0) {
        return Err(FactorError::InvalidTolerance(tol));
    }
    let domain_box = kf.decomposition.function().domain_box();
    let mut rng = rng_for(seed, 0);
    let mut out = Vec::new();
    for _ in 0..budget {
        let x = uniform_in_box(&mut rng, domain_box);
        let image = match kf.apply(&x) {
            Ok(y) => y,
            Err(e) if e.is_domain_error() => continue,
            Err(e) => return Err(e.into()),
        };
        if norm2(&image) <= tol * norm2(&x) {
            out.push(x);
        }
    }
    Ok(out)
}

/// For `p = 1`, the vector `k` with `f(x) = ⟨k, g(x)⟩`.
pub fn riesz_representer(kf: &KFactorization) -> Result<Vec<f64>, FactorError> {
    let p = kf.k.nrows();
    if p != 1 {
        return Err(FactorError::NotFunctional { p });
    }
    Ok(kf.k.row(0).iter().copied().collect())
}

/// Row-major dump of a [`KFactorization`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFactorizationRecord {
    pub p: usize,
    pub m: usize,
    pub k: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub vstar: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

impl KFactorization {
    pub fn record(&self) -> KFactorizationRecord {
        KFactorizationRecord {
            p: self.decomposition.p(),
            m: self.decomposition.m(),
            k: rows_of(&self.k),
            u: rows_of(&self.u()),
            sigma: self.decomposition.sigma_spec().sigma().to_vec(),
            vstar: rows_of(self.vstar.matrix()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{builtin_mimo, builtin_siso, FunctionSpec};
    use crate::sampling::certificate_points;
    use alloc::vec;
    use proptest::prelude::*;

    fn functional_sigma2() -> Decomposition {
        // p = 1, n = 2, σ = (2): bound b with b·√(1/0.75) = 2.
        let b = 2.0 * libm::sqrt(0.75);
        let f = FunctionSpec::parse(2, &["0.5*x1"], vec![b], vec![[-1.0, 1.0]; 2]).unwrap();
        let dec = Decomposition::new(f, 0.25).unwrap();
        assert!((dec.sigma_spec().sigma()[0] - 2.0).abs() < 1e-15);
        dec
    }

    #[test]
    fn random_unitary_properties() {
        let one = random_unitary(1, 5);
        assert_eq!(one.matrix()[(0, 0)].abs(), 1.0);
        let m = random_unitary(3, 7);
        assert!(orthogonality_defect(m.matrix()) <= 1e-10);
        assert_eq!(m, random_unitary(3, 7));
        assert_ne!(m, random_unitary(3, 8));
        assert!(UnitaryMatrix::new(m.matrix().clone()).is_ok());
    }

    #[test]
    fn non_unitary_is_rejected() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(UnitaryMatrix::new(bad), Err(FactorError::NotUnitary { .. })));
        assert!(matches!(UnitaryMatrix::new(DMatrix::zeros(2, 3)), Err(FactorError::NotSquare { .. })));
        let dec = functional_sigma2();
        assert_eq!(
            compose_k(&dec, UnitaryMatrix::identity(2)),
            Err(FactorError::DimensionMismatch { expected: 3, got: 2 })
        );
    }

    #[test]
    fn identity_vstar_gives_u_sigma() {
        let dec = functional_sigma2();
        let kf = compose_k(&dec, UnitaryMatrix::identity(3)).unwrap();
        assert_eq!(kf.k(), &(dec.u_matrix() * dec.sigma_matrix()));
        let x = [0.3, -0.4];
        assert_eq!(kf.g(&x).unwrap(), dec.lift(&x).unwrap().v);
        let k = riesz_representer(&kf).unwrap();
        assert!((k[0] - 2.0).abs() < 1e-15 && k[1] == 0.0 && k[2] == 0.0);
    }

    #[test]
    fn svd_examples() {
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let s = svd_small(&d).unwrap();
        assert_eq!(s.singular_values, vec![2.0, 1.0]);
        for i in 0..2 {
            assert!((s.u[(i, i)].abs() - 1.0).abs() < 1e-12);
            assert!((s.v_t[(i, i)].abs() - 1.0).abs() < 1e-12);
        }
        let z = svd_small(&DMatrix::zeros(2, 3)).unwrap();
        assert_eq!(z.singular_values, vec![0.0, 0.0]);
        assert!(orthogonality_defect(&z.u) < 1e-12 && orthogonality_defect(&z.v_t) < 1e-12);
        assert!(matches!(svd_small(&DMatrix::zeros(65, 2)), Err(FactorError::TooLarge { .. })));
    }

    #[test]
    fn svd_recovers_sigma_of_composed_k() {
        let f = FunctionSpec::parse(2, &["0.3*x1", "x2", "0.5*sin(x1)"], vec![0.3, 1.0, 0.5], vec![[-3.0, 3.0]; 2])
            .unwrap();
        let dec = Decomposition::new(f, 0.1).unwrap();
        for seed in 0..5 {
            let kf = compose_k(&dec, random_unitary(5, seed)).unwrap();
            let s = svd_small(kf.k()).unwrap();
            for (a, b) in s.singular_values.iter().zip(dec.sigma_spec().sigma()) {
                assert!((a - b).abs() <= 1e-10 * b.max(1.0));
            }
            assert_eq!(s.u.shape(), (3, 3));
            assert_eq!(s.v_t.shape(), (5, 5));
            assert!((s.reconstruct() - kf.k()).norm() <= 1e-10 * kf.k().norm());
        }
    }

    #[test]
    fn kernel_of_functional_with_identity_vstar() {
        let dec = functional_sigma2();
        let kf = compose_k(&dec, UnitaryMatrix::identity(3)).unwrap();
        let ka = kernel_analysis(&kf);
        assert_eq!(ka.rank(), 1);
        assert_eq!(ka.kernel_dim(), 2);
        assert_eq!(ka.row_basis, DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]));
        assert_eq!(ka.kernel_basis, DMatrix::from_column_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));

        let x = [0.6, -0.2];
        let lost = lost_information(&x, &kf, &ka).unwrap();
        let v = dec.lift(&x).unwrap().v;
        assert_eq!(lost, vec![v[1], v[2]]);
        assert_eq!(lost_information(&[0.0, 0.0], &kf, &ka).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn mimo_has_two_kernel_directions() {
        let dec = Decomposition::new(builtin_mimo(), 0.1).unwrap();
        let kf = compose_k(&dec, random_unitary(3, 1)).unwrap();
        let ka = kernel_analysis(&kf);
        assert_eq!(ka.kernel_dim(), 2);
        assert_eq!(ka.rank(), 1);
        let mut all = DMatrix::zeros(3, 3);
        all.columns_mut(0, 2).copy_from(&ka.kernel_basis);
        all.column_mut(2).copy_from(&ka.row_basis.column(0));
        assert!(orthogonality_defect(&all) < 1e-12);
    }

    #[test]
    fn zero_sigma_component_joins_kernel() {
        let f = FunctionSpec::parse(1, &["x1", "0*x1"], vec![1.0, 0.0], vec![[-1.0, 1.0]]).unwrap();
        let dec = Decomposition::new(f, 0.1).unwrap();
        let kf = compose_k(&dec, random_unitary(3, 2)).unwrap();
        let ka = kernel_analysis(&kf);
        assert_eq!((ka.rank(), ka.kernel_dim()), (1, 2));
    }

    #[test]
    fn relaxed_null_set_of_linear_functional() {
        let f = FunctionSpec::parse(2, &["x1"], vec![1.0], vec![[-1.0, 1.0]; 2]).unwrap();
        let dec = Decomposition::new(f, 0.1).unwrap();
        let kf = compose_k(&dec, random_unitary(3, 4)).unwrap();
        let tol = 0.05;
        let pts = nullspace_relaxation_sample(&kf, 4000, tol, 9).unwrap();
        assert!(!pts.is_empty());
        for x in &pts {
            assert!(x[0].abs() <= tol * norm2(x) * (1.0 + 1e-9));
        }
        let all = nullspace_relaxation_sample(&kf, 500, f64::INFINITY, 9).unwrap();
        assert_eq!(all.len(), 500);
        assert_eq!(nullspace_relaxation_sample(&kf, 1, 0.0, 9), Err(FactorError::InvalidTolerance(0.0)));
    }

    #[test]
    fn relaxed_null_set_of_siso_sits_near_roots() {
        let dec = Decomposition::new(builtin_siso(), 0.1).unwrap();
        let kf = compose_k(&dec, random_unitary(2, 3)).unwrap();
        let pts = nullspace_relaxation_sample(&kf, 20_000, 1e-3, 1).unwrap();
        assert!(!pts.is_empty());
        // Root oracle: h(t) = sin t + cos t² changes sign within a short
        // bracket of every returned point (|h| ≤ 2e-3 there and |h'| ≲ 41).
        let h = |t: f64| libm::sin(t) + libm::cos(t * t);
        let mut bracketed = 0;
        for x in &pts {
            let t = x[0];
            assert!(h(t).abs() <= 2e-3 * (1.0 + 1e-9));
            let width = 0.05;
            let steps = 200;
            let mut found = false;
            let mut prev = h(t - width);
            for s in 1..=steps {
                let cur = h(t - width + 2.0 * width * s as f64 / steps as f64);
                if prev == 0.0 || prev * cur <= 0.0 {
                    found = true;
                    break;
                }
                prev = cur;
            }
            if found {
                bracketed += 1;
            }
        }
        // The rest sit at tangential near-roots where sin t ≈ 1 and cos t² ≈ −1.
        assert!(bracketed * 10 >= pts.len() * 9, "{bracketed} of {}", pts.len());
    }

    #[test]
    fn riesz_requires_functional() {
        let f = FunctionSpec::parse(1, &["x1", "x1"], vec![1.0, 1.0], vec![[-1.0, 1.0]]).unwrap();
        let dec = Decomposition::new(f, 0.1).unwrap();
        let kf = compose_k(&dec, UnitaryMatrix::identity(3)).unwrap();
        assert_eq!(riesz_representer(&kf), Err(FactorError::NotFunctional { p: 2 }));
    }

    #[test]
    fn g_inverse_round_trip() {
        let dec = Decomposition::new(builtin_siso(), 0.1).unwrap();
        let kf = compose_k(&dec, random_unitary(2, 11)).unwrap();
        for x in certificate_points(dec.function().domain_box(), 200, 2) {
            let back = kf.g_inverse(&kf.g(&x).unwrap()).unwrap();
            assert!((back[0] - x[0]).abs() <= 1e-10 * x[0].abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn svd_reconstructs_random_matrices(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in any::<u64>(),
        ) {
            let mut rng = rng_for(seed, 0);
            let m = DMatrix::from_fn(rows, cols, |_, _| crate::sampling::gaussian(&mut rng));
            let s = svd_small(&m).unwrap();
            prop_assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(s.singular_values.iter().all(|v| *v >= 0.0));
            prop_assert!(orthogonality_defect(&s.u) <= 1e-10);
            prop_assert!(orthogonality_defect(&s.v_t) <= 1e-10);
            prop_assert!((s.reconstruct() - &m).norm() <= 1e-10 * m.norm().max(1.0));
        }

        #[test]
        fn kernel_and_row_projections_split_the_norm(seed in any::<u64>(), x1 in -10.0f64..10.0, x2 in 0.1f64..10.0) {
            let dec = Decomposition::new(builtin_mimo(), 0.1).unwrap();
            let kf = compose_k(&dec, random_unitary(3, seed)).unwrap();
            let ka = kernel_analysis(&kf);
            let x = [x1, x2];
            prop_assume!(x1 != 0.0);
            let lost = lost_information(&x, &kf, &ka).unwrap();
            let kept = retained_information(&x, &kf, &ka).unwrap();
            let total = norm2(&lost).powi(2) + norm2(&kept).powi(2);
            let nx = norm2(&x);
            prop_assert!((total - nx * nx).abs() <= 1e-12 * (nx * nx).max(1.0));
            let fx = dec.function().eval_f(&x).unwrap()[0];
            prop_assert!((kf.apply(&x).unwrap()[0] - fx).abs() <= 1e-9 * fx.abs().max(1.0));
        }
    }
}
