//! Sampling certificates for the properties the construction guarantees in
//! exact arithmetic. Each certificate reports the worst observed violation
//! and passes iff it does not exceed a fixed threshold.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lift::{Decomposition, LiftError, Lifting, SigmaSpec};
use crate::linalg::{distance, norm2};
use crate::sampling::certificate_points;

pub const RECONSTRUCTION_TOL: f64 = 1e-9;
pub const NORM_PRESERVATION_TOL: f64 = 1e-12;
pub const ROUND_TRIP_TOL: f64 = 1e-10;
pub const ENVELOPE_THRESHOLD: f64 = 1.0;
pub const ADMISSIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub name: String,
    pub max_violation: f64,
    pub threshold: f64,
    pub samples: usize,
    pub witness: Option<Vec<f64>>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
}

impl Certificate {
    pub fn new(name: &str, max_violation: f64, threshold: f64, samples: usize, witness: Option<Vec<f64>>) -> Self {
        Certificate {
            name: name.to_string(),
            max_violation,
            threshold,
            samples,
            witness,
            pass: max_violation <= threshold,
            details: BTreeMap::new(),
        }
    }

    fn with_detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error("at least one sample is required")]
    NoSamples,
    #[error("envelope certificate needs sigma_1 > 0")]
    ZeroSigma,
    #[error(transparent)]
    Lift(#[from] LiftError),
}

/// Tracks the largest violation and where it happened.
struct Worst {
    value: f64,
    witness: Option<Vec<f64>>,
    samples: usize,
}

impl Worst {
    fn new() -> Self {
        Worst { value: 0.0, witness: None, samples: 0 }
    }

    fn record(&mut self, value: f64, x: &[f64]) {
        self.samples += 1;
        // NaN always wins so it cannot hide behind a finite maximum.
        let worse = self.witness.is_none() || value > self.value || value.is_nan();
        if worse && !self.value.is_nan() {
            self.value = value;
            self.witness = Some(x.to_vec());
        }
    }

    fn finish(self, name: &str, threshold: f64) -> Certificate {
        Certificate::new(name, self.value, threshold, self.samples, self.witness)
    }
}

fn check_samples(samples: usize) -> Result<(), CertifyError> {
    if samples == 0 {
        return Err(CertifyError::NoSamples);
    }
    Ok(())
}

/// Lifts `x`, treating singular points of `f` as "skip".
fn lift_or_skip<L: Lifting + ?Sized>(l: &L, x: &[f64]) -> Result<Option<Vec<f64>>, CertifyError> {
    match l.lift_vector(x) {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_domain_error() => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// `max ‖U Σ v(x) − f(x)‖ / max(1, ‖f(x)‖)` over `points`.
pub fn reconstruction_certificate(dec: &Decomposition, points: &[Vec<f64>]) -> Result<Certificate, CertifyError> {
    let mut worst = Worst::new();
    for x in points {
        let lp = match dec.lift(x) {
            Ok(lp) => lp,
            Err(e) if e.is_domain_error() => continue,
            Err(e) => return Err(e.into()),
        };
        let rec = dec.reconstruct(&lp);
        let err = distance(&rec, &lp.fx) / norm2(&lp.fx).max(1.0);
        worst.record(err, x);
    }
    Ok(worst.finish("reconstruction", RECONSTRUCTION_TOL))
}

pub fn certify_reconstruction(dec: &Decomposition, samples: usize, seed: u64) -> Result<Certificate, CertifyError> {
    check_samples(samples)?;
    reconstruction_certificate(dec, &certificate_points(dec.function().domain_box(), samples, seed))
}

/// `max ‖f(x)‖ / (σ₁ ‖x‖)` over nonzero `points`. Passes when the ratio
/// stays at or below 1; `details.margin` is the distance left to 1.
pub fn envelope_certificate(dec: &Decomposition, points: &[Vec<f64>]) -> Result<Certificate, CertifyError> {
    let sigma_max = dec.sigma_spec().sigma_max();
    if !(sigma_max > 0.0) {
        return Err(CertifyError::ZeroSigma);
    }
    let mut worst = Worst::new();
    for x in points {
        let norm_x = norm2(x);
        if norm_x == 0.0 {
            continue;
        }
        let lp = match dec.lift(x) {
            Ok(lp) => lp,
            Err(e) if e.is_domain_error() => continue,
            Err(e) => return Err(e.into()),
        };
        worst.record(norm2(&lp.fx) / (sigma_max * norm_x), x);
    }
    let cert = worst.finish("envelope", ENVELOPE_THRESHOLD);
    let margin = ENVELOPE_THRESHOLD - cert.max_violation;
    Ok(cert.with_detail("sigma_1", sigma_max).with_detail("margin", margin))
}

pub fn certify_envelope(dec: &Decomposition, samples: usize, seed: u64) -> Result<Certificate, CertifyError> {
    check_samples(samples)?;
    envelope_certificate(dec, &certificate_points(dec.function().domain_box(), samples, seed))
}

/// `max |‖v(x)‖ − ‖x‖| / max(1, ‖x‖)` for any lifting.
pub fn norm_preservation_certificate<L: Lifting + ?Sized>(
    lifting: &L,
    points: &[Vec<f64>],
) -> Result<Certificate, CertifyError> {
    let mut worst = Worst::new();
    for x in points {
        let Some(v) = lift_or_skip(lifting, x)? else { continue };
        let norm_x = norm2(x);
        worst.record(libm::fabs(norm2(&v) - norm_x) / norm_x.max(1.0), x);
    }
    Ok(worst.finish("norm_preservation", NORM_PRESERVATION_TOL))
}

pub fn certify_norm_preservation(dec: &Decomposition, samples: usize, seed: u64) -> Result<Certificate, CertifyError> {
    check_samples(samples)?;
    norm_preservation_certificate(dec, &certificate_points(dec.function().domain_box(), samples, seed))
}

/// Round trip `‖unlift(v(x)) − x‖ / max(1, ‖x‖)` plus a check that distinct
/// inputs have distinct liftings. A collision counts as a violation of 1.
pub fn injectivity_certificate(dec: &Decomposition, points: &[Vec<f64>]) -> Result<Certificate, CertifyError> {
    let mut unique: Vec<&Vec<f64>> = points.iter().collect();
    unique.sort_by(|a, b| {
        a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(core::cmp::Ordering::Equal)
    });
    unique.dedup();

    let mut worst = Worst::new();
    let mut lifted: Vec<(&Vec<f64>, Vec<f64>)> = Vec::with_capacity(unique.len());
    for x in unique {
        let lp = match dec.lift(x) {
            Ok(lp) => lp,
            Err(e) if e.is_domain_error() => continue,
            Err(e) => return Err(e.into()),
        };
        let back = dec.unlift(&lp.v)?;
        worst.record(distance(&back, x) / norm2(x).max(1.0), x);
        lifted.push((x, lp.v));
    }

    let mut min_sq = f64::INFINITY;
    let mut collision = None;
    for i in 0..lifted.len() {
        for j in (i + 1)..lifted.len() {
            let d: f64 = lifted[i].1.iter().zip(&lifted[j].1).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < min_sq {
                min_sq = d;
                if d == 0.0 {
                    collision = Some(lifted[i].0.clone());
                }
            }
        }
    }
    let mut cert = worst.finish("injectivity", ROUND_TRIP_TOL);
    if let Some(x) = collision {
        cert = Certificate::new("injectivity", 1.0, ROUND_TRIP_TOL, cert.samples, Some(x));
    }
    if min_sq.is_finite() {
        cert = cert.with_detail("min_pairwise_distance", libm::sqrt(min_sq));
    }
    Ok(cert)
}

pub fn certify_injectivity(dec: &Decomposition, samples: usize, seed: u64) -> Result<Certificate, CertifyError> {
    check_samples(samples)?;
    injectivity_certificate(dec, &certificate_points(dec.function().domain_box(), samples, seed))
}

/// Checks `σ₁ ≥ … ≥ σ_p ≥ 0` and `Σ b_q(i)²/σᵢ² ≤ 1 − η`. The violation is the
/// larger of the ordering excess and the admissibility-sum excess.
pub fn certify_sigma_admissible(sigma: &SigmaSpec, bounds: &[f64]) -> Certificate {
    let values = sigma.sigma();
    let mut order_excess = values.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
    if let Some(min) = values.iter().copied().reduce(f64::min) {
        order_excess = order_excess.max(-min);
    }
    let sum = sigma.admissibility_sum(bounds);
    let sum_excess = sum - (1.0 - sigma.eta());
    let violation = order_excess.max(sum_excess).max(0.0);
    Certificate::new("sigma_admissible", violation, ADMISSIBILITY_TOL, values.len(), None)
        .with_detail("admissibility_sum", sum)
        .with_detail("eta", sigma.eta())
}

/// The full suite, in a fixed order, over one shared sample set.
pub fn certify_suite(dec: &Decomposition, samples: usize, seed: u64) -> Result<Vec<Certificate>, CertifyError> {
    check_samples(samples)?;
    let points = certificate_points(dec.function().domain_box(), samples, seed);
    let mut out = Vec::with_capacity(5);
    out.push(certify_sigma_admissible(dec.sigma_spec(), dec.function().norm_bounds()));
    out.push(reconstruction_certificate(dec, &points)?);
    if dec.sigma_spec().sigma_max() > 0.0 {
        out.push(envelope_certificate(dec, &points)?);
    }
    out.push(norm_preservation_certificate(dec, &points)?);
    out.push(injectivity_certificate(dec, &points)?);
    Ok(out)
}
