//! Sampling lower bounds on component induced norms `‖fᵢ‖₂₋₂` and the
//! descending ordering of components by declared bound.
//!
//! A sampler can only falsify a declared bound, never certify it: the
//! estimate is the best ratio `|fᵢ(x)|/‖x‖₂` actually observed.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::FunctionSpec;
use crate::linalg::norm2;
use crate::sampling::{rng_for, sphere_sample};

/// Refinement steps per restart.
pub const REFINE_STEPS: usize = 100;
/// Initial refinement step as a fraction of each box side.
const INITIAL_STEP: f64 = 0.05;
/// Relative slack used when comparing estimates against declared bounds.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    /// 0-based component index.
    pub component: usize,
    pub lower_bound: f64,
    pub declared_bound: f64,
    pub witness: Vec<f64>,
    pub samples_used: usize,
}

impl NormEstimate {
    pub fn is_consistent(&self) -> bool {
        self.lower_bound <= self.declared_bound * (1.0 + BOUND_SLACK)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormError {
    #[error("component {component} does not exist (p = {p})")]
    InvalidComponent { component: usize, p: usize },
    #[error("sample budget must be at least 1")]
    EmptyBudget,
    #[error("component {component}: every sample hit a domain error")]
    NoValidSamples { component: usize },
    #[error("expected {expected} estimates, got {got}")]
    EstimateCount { expected: usize, got: usize },
    #[error("norm bounds must be finite and non-negative")]
    InvalidBound,
}

/// `|fᵢ(x)|/‖x‖₂`, or `None` when undefined at `x`.
fn ratio(f: &FunctionSpec, i: usize, x: &[f64]) -> Option<f64> {
    let norm = norm2(x);
    if norm == 0.0 {
        return None;
    }
    let value = f.eval_component(i, x).ok()?;
    let r = libm::fabs(value) / norm;
    r.is_finite().then_some(r)
}

/// Lower-bounds `‖fᵢ‖₂₋₂` (0-based `i`) by random search plus local refinement.
///
/// `budget` points are drawn on spheres of random radius inside the domain
/// box. The best `restarts` of them are then refined coordinate-wise for
/// [`REFINE_STEPS`] steps, halving the step after every step that fails to
/// improve. Points where `fᵢ` is undefined are skipped.
pub fn estimate_component_norm(
    f: &FunctionSpec,
    i: usize,
    budget: usize,
    restarts: usize,
    seed: u64,
) -> Result<NormEstimate, NormError> {
    if i >= f.p() {
        return Err(NormError::InvalidComponent { component: i, p: f.p() });
    }
    if budget == 0 {
        return Err(NormError::EmptyBudget);
    }
    let domain_box = f.domain_box();
    let mut rng = rng_for(seed, i as u64);

    let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut samples_used = 0;
    for _ in 0..budget {
        let x = sphere_sample(&mut rng, domain_box);
        if let Some(r) = ratio(f, i, &x) {
            samples_used += 1;
            scored.push((r, x));
        }
    }
    if scored.is_empty() {
        return Err(NormError::NoValidSamples { component: i });
    }
    // Stable: equal ratios keep draw order.
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.truncate(restarts.max(1));

    let widths: Vec<f64> = domain_box.iter().map(|&[lo, hi]| hi - lo).collect();
    let mut best = scored[0].clone();
    for (start_ratio, start) in scored {
        let (r, x, evals) = refine(f, i, start, start_ratio, domain_box, &widths);
        samples_used += evals;
        if r > best.0 {
            best = (r, x);
        }
    }

    Ok(NormEstimate {
        component: i,
        lower_bound: best.0,
        declared_bound: f.norm_bounds()[i],
        witness: best.1,
        samples_used,
    })
}

fn refine(
    f: &FunctionSpec,
    i: usize,
    mut x: Vec<f64>,
    mut best: f64,
    domain_box: &[[f64; 2]],
    widths: &[f64],
) -> (f64, Vec<f64>, usize) {
    let mut step = INITIAL_STEP;
    let mut evals = 0;
    for _ in 0..REFINE_STEPS {
        let mut improved = false;
        for j in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut trial = x.clone();
                let [lo, hi] = domain_box[j];
                trial[j] = (trial[j] + sign * step * widths[j]).clamp(lo, hi);
                if let Some(r) = ratio(f, i, &trial) {
                    evals += 1;
                    if r > best {
                        best = r;
                        x = trial;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, x, evals)
}

/// Estimates every component. Each component draws from its own RNG stream,
/// so the result does not depend on evaluation order.
pub fn estimate_all(
    f: &FunctionSpec,
    budget: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<NormEstimate>, NormError> {
    (0..f.p()).map(|i| estimate_component_norm(f, i, budget, restarts, seed)).collect()
}

/// Components whose observed lower bound exceeds the declared bound by more
/// than a relative `1e-9`. Empty means the declared bounds were not falsified.
pub fn validate_bounds(f: &FunctionSpec, estimates: &[NormEstimate]) -> Result<Vec<NormEstimate>, NormError> {
    if estimates.len() != f.p() {
        return Err(NormError::EstimateCount { expected: f.p(), got: estimates.len() });
    }
    Ok(estimates
        .iter()
        .filter(|e| e.lower_bound > f.norm_bounds()[e.component] * (1.0 + BOUND_SLACK))
        .cloned()
        .collect())
}

/// Permutation ranking components by descending norm bound.
///
/// `perm[i]` is the original (0-based) index of the component placed `i`-th;
/// `inverse[perm[i]] == i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentOrdering {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl ComponentOrdering {
    pub fn identity(p: usize) -> Self {
        let perm: Vec<usize> = (0..p).collect();
        ComponentOrdering { inverse: perm.clone(), perm }
    }

    /// Builds an ordering from an explicit permutation, rejecting anything
    /// that is not a bijection on `0..len`.
    pub fn from_perm(perm: Vec<usize>) -> Option<Self> {
        let mut inverse = alloc::vec![usize::MAX; perm.len()];
        for (i, &q) in perm.iter().enumerate() {
            if q >= perm.len() || inverse[q] != usize::MAX {
                return None;
            }
            inverse[q] = i;
        }
        Some(ComponentOrdering { perm, inverse })
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// `values` reordered so position `i` holds `values[perm[i]]`.
    pub fn apply<T: Copy>(&self, values: &[T]) -> Vec<T> {
        self.perm.iter().map(|&q| values[q]).collect()
    }
}

/// Stable descending sort of `bounds`; ties keep the lower original index first.
pub fn order_components(bounds: &[f64]) -> Result<ComponentOrdering, NormError> {
    if bounds.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return Err(NormError::InvalidBound);
    }
    let mut perm: Vec<usize> = (0..bounds.len()).collect();
    perm.sort_by(|&a, &b| bounds[b].total_cmp(&bounds[a]));
    Ok(ComponentOrdering::from_perm(perm).expect("sorted indices form a permutation"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::builtin_siso;
    use alloc::vec;
    use proptest::prelude::*;

    fn scalar(text: &str, bound: f64) -> FunctionSpec {
        FunctionSpec::parse(1, &[text], vec![bound], vec![[-5.0, 5.0]]).unwrap()
    }

    #[test]
    fn linear_scalar_ratio_is_exact() {
        let est = estimate_component_norm(&scalar("3*x1", 3.0), 0, 200, 4, 1).unwrap();
        assert!((est.lower_bound - 3.0).abs() < 1e-6);
        assert!(est.is_consistent());
    }

    #[test]
    fn zero_function_has_zero_norm() {
        let est = estimate_component_norm(&scalar("0*x1", 0.0), 0, 100, 2, 1).unwrap();
        assert_eq!(est.lower_bound, 0.0);
    }

    #[test]
    fn siso_estimate_is_close_to_one() {
        let est = estimate_component_norm(&builtin_siso(), 0, 100_000, 8, 11).unwrap();
        assert!(est.lower_bound >= 0.9 && est.lower_bound <= 1.0, "{}", est.lower_bound);
    }

    #[test]
    fn validate_flags_understated_bounds() {
        let f = scalar("3*x1", 3.0);
        let est = estimate_all(&f, 100, 2, 0).unwrap();
        assert!(validate_bounds(&f, &est).unwrap().is_empty());

        let g = scalar("3*x1", 2.0);
        let est = estimate_all(&g, 100, 2, 0).unwrap();
        let bad = validate_bounds(&g, &est).unwrap();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].component, 0);

        let siso = builtin_siso();
        let est = estimate_all(&siso, 20_000, 4, 0).unwrap();
        assert!(validate_bounds(&siso, &est).unwrap().is_empty());
        assert!(validate_bounds(&siso, &[]).is_err());
    }

    #[test]
    fn all_domain_errors_fail_estimation() {
        let f = scalar("x1*sqrt(-1-abs(x1))", 1.0);
        assert_eq!(estimate_component_norm(&f, 0, 50, 2, 0), Err(NormError::NoValidSamples { component: 0 }));
        assert!(matches!(estimate_component_norm(&f, 3, 50, 2, 0), Err(NormError::InvalidComponent { .. })));
        assert_eq!(estimate_component_norm(&f, 0, 0, 2, 0), Err(NormError::EmptyBudget));
    }

    #[test]
    fn ordering_examples() {
        assert_eq!(order_components(&[0.2, 0.9, 0.5]).unwrap().perm(), &[1, 2, 0]);
        assert_eq!(order_components(&[1.0, 1.0]).unwrap().perm(), &[0, 1]);
        assert_eq!(order_components(&[5.0]).unwrap().perm(), &[0]);
        assert_eq!(order_components(&[-1.0]), Err(NormError::InvalidBound));
        assert!(ComponentOrdering::from_perm(vec![0, 0]).is_none());
    }

    proptest! {
        #[test]
        fn ordering_is_a_descending_bijection(bounds in proptest::collection::vec(0.0f64..10.0, 1..12)) {
            let q = order_components(&bounds).unwrap();
            for i in 0..bounds.len() {
                prop_assert_eq!(q.inverse()[q.perm()[i]], i);
                prop_assert_eq!(q.perm()[q.inverse()[i]], i);
            }
            let sorted = q.apply(&bounds);
            prop_assert!(sorted.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn estimates_are_seed_deterministic(seed in any::<u64>()) {
            let f = FunctionSpec::parse(2, &["x1*cos(x2)"], vec![1.0], vec![[-2.0, 2.0]; 2]).unwrap();
            prop_assert_eq!(
                estimate_component_norm(&f, 0, 64, 2, seed).unwrap(),
                estimate_component_norm(&f, 0, 64, 2, seed).unwrap()
            );
        }
    }
}
