//! SVD-like factorizations of bounded-input bounded-output (BIBO) functions.
//!
//! A BIBO function `f: Rⁿ → Rᵖ` is written as `f(x) = U Σ v(x)` where `U` is a
//! permutation (hence unitary), `Σ` is a `p × (n+p)` rectangular diagonal
//! matrix of "singular values" and `v` is an injective, norm-preserving
//! lifting of `x` into `R^{n+p}`. The crate also exposes the `K ∘ g`
//! factorization obtained by inserting an arbitrary unitary `V*`, the induced
//! norm envelope `‖f(x)‖ ≤ σ₁‖x‖`, kernel/row-space relaxations and sampling
//! certificates for all of the above.
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the command
//! line live in the `liftsvd` companion crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod certify;
pub mod expr;
pub mod factor;
pub mod lift;
mod linalg;
pub mod norms;
pub mod sampling;

pub use certify::{Certificate, CertifyError};
pub use expr::{builtin_mimo, builtin_siso, EvalError, Expr, FunctionError, FunctionSpec, ParseError, SpecError};
pub use factor::{FactorError, KFactorization, KernelAnalysis, SmallSvd, UnitaryMatrix};
pub use lift::{Decomposition, LiftError, LiftedPoint, Lifting, SigmaSpec};
pub use norms::{ComponentOrdering, NormError, NormEstimate};

/// Default admissibility margin used when selecting `Σ`.
pub const DEFAULT_ETA: f64 = 0.1;
