//! Construction of `f(x) = U Σ v(x)`.
//!
//! With components ordered by descending bound (`f_q`), pick `σ` with
//! `Σᵢ bᵢ²/σᵢ² < 1`. For `x ≠ 0` let
//!
//! ```text
//! wᵢ = f_q(i)(x)² / (σᵢ² ‖x‖²),   S = Σᵢ wᵢ < 1,   γ = S − 1 < 0
//! δᵢ = f_q(i)(x) / (σᵢ √(1 − S))
//! x_δ = [δ; x],                    v(x) = (‖x‖ / ‖x_δ‖) · x_δ
//! ```
//!
//! Then `‖v(x)‖ = ‖x‖`, `v` is injective (its lower block is a positive
//! multiple of `x`), and `σᵢ vᵢ(x) = f_q(i)(x)`. The closed form for `δ` solves
//! `A δ² = ‖x‖² 1` with `A = diag(dᵢ + 1) − 1 1ᵀ`, `dᵢ = σᵢ²‖x‖²/f_q(i)² − 1`;
//! [`oracle`] keeps the dense solve and the Woodbury element formula as
//! independent checks.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{FunctionError, FunctionSpec};
use crate::linalg::{mat_vec, norm2};
use crate::norms::{order_components, ComponentOrdering, NormError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LiftError {
    #[error("admissibility margin eta = {0} must lie in (0, 1)")]
    InvalidEta(f64),
    #[error(transparent)]
    Ordering(#[from] NormError),
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation is undefined at x = 0")]
    ZeroInput,
    #[error("declared norm bound violated at x = {witness:?}: S = {s} >= 1")]
    BoundViolation { witness: Vec<f64>, s: f64 },
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error("oracle requires nonzero sigma and f at every component; component {0} is zero")]
    OracleUndefined(usize),
    #[error("linear system for delta^2 is singular")]
    SingularSystem,
    #[error("delta^2 component {component} = {value} is negative; sigma is not admissible")]
    InadmissibleSigma { component: usize, value: f64 },
    #[error("vector is not in the image of the lifting")]
    NotInImage,
}

impl LiftError {
    /// True for evaluation failures of `f` itself (singular points), which
    /// samplers skip.
    pub fn is_domain_error(&self) -> bool {
        matches!(self, LiftError::Function(FunctionError::Eval { .. }))
    }
}

/// Singular values `σ` for the ordered components, plus the lifting
/// dimension `m = n + p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSpec {
    sigma: Vec<f64>,
    m: usize,
    eta: f64,
    ordering: ComponentOrdering,
}

impl SigmaSpec {
    /// Wraps hand-picked values without checking admissibility; see
    /// [`crate::certify::certify_sigma_admissible`].
    pub fn from_values(sigma: Vec<f64>, n: usize, eta: f64, ordering: ComponentOrdering) -> Result<Self, LiftError> {
        if ordering.len() != sigma.len() {
            return Err(LiftError::DimensionMismatch { expected: sigma.len(), got: ordering.len() });
        }
        Ok(SigmaSpec { m: n + sigma.len(), sigma, eta, ordering })
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.m - self.sigma.len()
    }

    pub fn p(&self) -> usize {
        self.sigma.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn ordering(&self) -> &ComponentOrdering {
        &self.ordering
    }

    /// Largest singular value, `σ₁`.
    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    /// `Σᵢ b_q(i)²/σᵢ²` over components with nonzero bound. Infinite when a
    /// positive bound meets `σᵢ = 0`.
    pub fn admissibility_sum(&self, bounds: &[f64]) -> f64 {
        self.ordering
            .perm()
            .iter()
            .zip(&self.sigma)
            .filter(|(&q, _)| bounds[q] > 0.0)
            .map(|(&q, &s)| if s > 0.0 { (bounds[q] / s) * (bounds[q] / s) } else { f64::INFINITY })
            .sum()
    }

    /// The `p × m` rectangular diagonal `Σ`; columns `p..m` are zero.
    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        let p = self.sigma.len();
        let mut out = DMatrix::zeros(p, self.m);
        for (i, &s) in self.sigma.iter().enumerate() {
            out[(i, i)] = s;
        }
        out
    }
}

/// `σᵢ = b_q(i) · √(p_eff / (1 − η))` where `p_eff` counts nonzero bounds,
/// so the admissibility sum equals `1 − η` exactly; zero bounds get `σᵢ = 0`.
pub fn select_sigma(bounds: &[f64], ordering: &ComponentOrdering, eta: f64, n: usize) -> Result<SigmaSpec, LiftError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(LiftError::InvalidEta(eta));
    }
    if ordering.len() != bounds.len() {
        return Err(LiftError::DimensionMismatch { expected: bounds.len(), got: ordering.len() });
    }
    if bounds.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return Err(LiftError::Ordering(NormError::InvalidBound));
    }
    let p_eff = bounds.iter().filter(|b| **b > 0.0).count();
    let scale = libm::sqrt(p_eff as f64 / (1.0 - eta));
    let sigma = ordering.apply(bounds).into_iter().map(|b| if b > 0.0 { b * scale } else { 0.0 }).collect();
    SigmaSpec::from_values(sigma, n, eta, ordering.clone())
}

/// `S` and `γ = S − 1` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SValue {
    pub s: f64,
    pub gamma: f64,
}

/// Computes `S` from already evaluated `f(x)`; `fx` is in original order.
fn s_from_values(x: &[f64], fx: &[f64], sigma: &SigmaSpec) -> Result<SValue, LiftError> {
    let norm_x = norm2(x);
    if norm_x == 0.0 {
        return Err(LiftError::ZeroInput);
    }
    let mut s = 0.0;
    for (&q, &sig) in sigma.ordering.perm().iter().zip(&sigma.sigma) {
        let fq = fx[q];
        if sig > 0.0 {
            let r = fq / (sig * norm_x);
            s += r * r;
        } else if fq != 0.0 {
            s = f64::INFINITY;
        }
    }
    if !(s < 1.0) {
        return Err(LiftError::BoundViolation { witness: x.to_vec(), s });
    }
    Ok(SValue { s, gamma: s - 1.0 })
}

fn check_dims(x: &[f64], f: &FunctionSpec, sigma: &SigmaSpec) -> Result<(), LiftError> {
    if f.p() != sigma.p() {
        return Err(LiftError::DimensionMismatch { expected: sigma.p(), got: f.p() });
    }
    if x.len() != sigma.n() {
        return Err(LiftError::DimensionMismatch { expected: sigma.n(), got: x.len() });
    }
    Ok(())
}

pub fn compute_s(x: &[f64], f: &FunctionSpec, sigma: &SigmaSpec) -> Result<SValue, LiftError> {
    check_dims(x, f, sigma)?;
    let fx = f.eval_f(x)?;
    s_from_values(x, &fx, sigma)
}

fn delta_from_values(fx: &[f64], s: f64, sigma: &SigmaSpec) -> Vec<f64> {
    let root = libm::sqrt(1.0 - s);
    sigma
        .ordering
        .perm()
        .iter()
        .zip(&sigma.sigma)
        .map(|(&q, &sig)| if sig > 0.0 { fx[q] / (sig * root) } else { 0.0 })
        .collect()
}

/// Auxiliary lifting coordinates `δ(x)`, signed like `f_q(i)(x)`.
pub fn delta(x: &[f64], f: &FunctionSpec, sigma: &SigmaSpec) -> Result<Vec<f64>, LiftError> {
    check_dims(x, f, sigma)?;
    let fx = f.eval_f(x)?;
    let sv = s_from_values(x, &fx, sigma)?;
    Ok(delta_from_values(&fx, sv.s, sigma))
}

/// Independent routes to `δ`, used only to check [`delta`].
pub mod oracle {
    use super::*;
    use nalgebra::DVector;

    struct System {
        norm_sq: f64,
        d: Vec<f64>,
        signs: Vec<f64>,
    }

    fn system(x: &[f64], f: &FunctionSpec, sigma: &SigmaSpec) -> Result<System, LiftError> {
        check_dims(x, f, sigma)?;
        let fx = f.eval_f(x)?;
        s_from_values(x, &fx, sigma)?;
        let norm_sq = {
            let n = norm2(x);
            n * n
        };
        let mut d = Vec::with_capacity(sigma.p());
        let mut signs = Vec::with_capacity(sigma.p());
        for (i, (&q, &sig)) in sigma.ordering.perm().iter().zip(&sigma.sigma).enumerate() {
            let fq = fx[q];
            if sig == 0.0 || fq == 0.0 {
                return Err(LiftError::OracleUndefined(i));
            }
            d.push(sig * sig * norm_sq / (fq * fq) - 1.0);
            signs.push(if fq > 0.0 { 1.0 } else { -1.0 });
        }
        Ok(System { norm_sq, d, signs })
    }

    /// The matrix `A` with diagonal `dᵢ` and `−1` elsewhere.
    pub fn system_matrix(x: &[f64], f: &FunctionSpec, sigma: &SigmaSpec) -> Result<DMatrix<f64>, LiftError> {
        let sys = system(x, f, sigma)?;
        let p = sys.d.len();
        Ok(DMatrix::from_fn(p, p, |i, j| if i == j { sys.d[i] } else { -1.0 }))
    }

    /// Solves `A δ² = ‖x‖² 1` with a dense LU factorization and returns the
    /// raw solution, before any square root.
    pub fn delta_squared(x: &[f64], f: &FunctionSpec, sigma: &SigmaSpec) -> Result<Vec<f64>, LiftError> {
        let sys = system(x, f, sigma)?;
        let p = sys.d.len();
        let a = DMatrix::from_fn(p, p, |i, j| if i == j { sys.d[i] } else { -1.0 });
        let rhs = DVector::from_element(p, sys.norm_sq);
        let sol = a.lu().solve(&rhs).ok_or(LiftError::SingularSystem)?;
        Ok(sol.iter().copied().collect())
    }

    /// `sgn(f_q(i)) · √(solution_i)` of the dense solve.
    pub fn delta_oracle(x: &[f64], f: &FunctionSpec, sigma: &SigmaSpec) -> Result<Vec<f64>, LiftError> {
        let sys = system(x, f, sigma)?;
        let sq = delta_squared(x, f, sigma)?;
        sq.iter()
            .zip(&sys.signs)
            .enumerate()
            .map(|(component, (&value, &sign))| {
                if value < 0.0 {
                    Err(LiftError::InadmissibleSigma { component, value })
                } else {
                    Ok(sign * libm::sqrt(value))
                }
            })
            .collect()
    }

    /// Element formula from the Woodbury inverse of `A`:
    /// `δᵢ² = ‖x‖² (1/(dᵢ+1) − Σⱼ 1/((dᵢ+1)(dⱼ+1)γ))`,
    /// `γ = −1 + Σⱼ 1/(dⱼ+1)`.
    pub fn delta_woodbury(x: &[f64], f: &FunctionSpec, sigma: &SigmaSpec) -> Result<Vec<f64>, LiftError> {
        let sys = system(x, f, sigma)?;
        let gamma = -1.0 + sys.d.iter().map(|d| 1.0 / (d + 1.0)).sum::<f64>();
        sys.d
            .iter()
            .zip(&sys.signs)
            .enumerate()
            .map(|(component, (&di, &sign))| {
                let cross: f64 = sys.d.iter().map(|dj| -1.0 / ((di + 1.0) * (dj + 1.0) * gamma)).sum();
                let value = sys.norm_sq * (1.0 / (di + 1.0) + cross);
                if value < 0.0 {
                    Err(LiftError::InadmissibleSigma { component, value })
                } else {
                    Ok(sign * libm::sqrt(value))
                }
            })
            .collect()
    }
}

pub use oracle::delta_oracle;

/// Everything computed while lifting one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedPoint {
    pub x: Vec<f64>,
    /// `f(x)` in the original component order.
    pub fx: Vec<f64>,
    pub s: f64,
    pub gamma: f64,
    /// `δ`, in ordered (`f_q`) positions.
    pub delta: Vec<f64>,
    pub x_delta: Vec<f64>,
    pub v: Vec<f64>,
}

/// Lifts `x` to `v(x) ∈ R^{n+p}`. At the origin `v(0) = 0`, `S = 0`, `γ = −1`.
pub fn lift(x: &[f64], f: &FunctionSpec, sigma: &SigmaSpec) -> Result<LiftedPoint, LiftError> {
    check_dims(x, f, sigma)?;
    let norm_x = norm2(x);
    let p = sigma.p();
    if norm_x == 0.0 {
        let mut x_delta = vec![0.0; p];
        x_delta.extend_from_slice(x);
        return Ok(LiftedPoint {
            x: x.to_vec(),
            fx: vec![0.0; p],
            s: 0.0,
            gamma: -1.0,
            delta: vec![0.0; p],
            v: vec![0.0; sigma.m()],
            x_delta,
        });
    }
    let fx = f.eval_f(x)?;
    let sv = s_from_values(x, &fx, sigma)?;
    let delta = delta_from_values(&fx, sv.s, sigma);
    let mut x_delta = delta.clone();
    x_delta.extend_from_slice(x);
    let scale = norm_x / norm2(&x_delta);
    let v = x_delta.iter().map(|c| c * scale).collect();
    Ok(LiftedPoint { x: x.to_vec(), fx, s: sv.s, gamma: sv.gamma, delta, x_delta, v })
}

/// Left inverse of the lifting: rescales the lower `n` block of `v` back to
/// norm `‖v‖`.
pub fn unlift(v: &[f64], n: usize, p: usize) -> Result<Vec<f64>, LiftError> {
    if v.len() != n + p {
        return Err(LiftError::DimensionMismatch { expected: n + p, got: v.len() });
    }
    let norm_v = norm2(v);
    if norm_v == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let lower = &v[p..];
    let norm_lower = norm2(lower);
    if norm_lower == 0.0 {
        return Err(LiftError::NotInImage);
    }
    let scale = norm_v / norm_lower;
    Ok(lower.iter().map(|c| c * scale).collect())
}

/// A map from inputs to lifted vectors that a certificate can inspect.
pub trait Lifting {
    fn input_dim(&self) -> usize;
    fn lifted_dim(&self) -> usize;
    fn lift_vector(&self, x: &[f64]) -> Result<Vec<f64>, LiftError>;
}

/// `f = U Σ v` for a concrete function.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    function: FunctionSpec,
    sigma_spec: SigmaSpec,
}

impl Decomposition {
    /// Orders components by declared bound and selects `σ` with margin `eta`.
    pub fn new(function: FunctionSpec, eta: f64) -> Result<Self, LiftError> {
        let ordering = order_components(function.norm_bounds())?;
        let sigma_spec = select_sigma(function.norm_bounds(), &ordering, eta, function.n())?;
        Ok(Decomposition { function, sigma_spec })
    }

    pub fn from_parts(function: FunctionSpec, sigma_spec: SigmaSpec) -> Result<Self, LiftError> {
        if function.p() != sigma_spec.p() || function.n() != sigma_spec.n() {
            return Err(LiftError::DimensionMismatch { expected: sigma_spec.m(), got: function.n() + function.p() });
        }
        Ok(Decomposition { function, sigma_spec })
    }

    pub fn function(&self) -> &FunctionSpec {
        &self.function
    }

    pub fn sigma_spec(&self) -> &SigmaSpec {
        &self.sigma_spec
    }

    pub fn n(&self) -> usize {
        self.function.n()
    }

    pub fn p(&self) -> usize {
        self.function.p()
    }

    pub fn m(&self) -> usize {
        self.sigma_spec.m()
    }

    /// Row `r` of `U` has its single 1 in column `u_index()[r]`. `U` undoes
    /// the ordering: `(U y)[q(i)] = y[i]`.
    pub fn u_index(&self) -> Vec<usize> {
        self.sigma_spec.ordering.inverse().to_vec()
    }

    pub fn u_matrix(&self) -> DMatrix<f64> {
        let p = self.p();
        let perm = self.sigma_spec.ordering.perm();
        let mut u = DMatrix::zeros(p, p);
        for (i, &q) in perm.iter().enumerate() {
            u[(q, i)] = 1.0;
        }
        u
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        self.sigma_spec.sigma_matrix()
    }

    pub fn lift(&self, x: &[f64]) -> Result<LiftedPoint, LiftError> {
        lift(x, &self.function, &self.sigma_spec)
    }

    /// `U Σ v` for a point lifted under this decomposition.
    pub fn reconstruct(&self, lp: &LiftedPoint) -> Vec<f64> {
        let usigma = self.u_matrix() * self.sigma_matrix();
        mat_vec(&usigma, &lp.v)
    }

    pub fn unlift(&self, v: &[f64]) -> Result<Vec<f64>, LiftError> {
        unlift(v, self.n(), self.p())
    }
}

impl Lifting for Decomposition {
    fn input_dim(&self) -> usize {
        self.n()
    }

    fn lifted_dim(&self) -> usize {
        self.m()
    }

    fn lift_vector(&self, x: &[f64]) -> Result<Vec<f64>, LiftError> {
        Ok(self.lift(x)?.v)
    }
}

pub fn reconstruct(lp: &LiftedPoint, dec: &Decomposition) -> Vec<f64> {
    dec.reconstruct(lp)
}
