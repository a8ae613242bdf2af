//! Seeded sample generators shared by norm estimation, certificates and the
//! null-set sampler. Every generator owns a ChaCha stream derived from
//! `(seed, stream)` so independent tasks never share RNG state.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::norm2;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal draw (Box–Muller).
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

pub fn uniform_in_box<R: Rng + ?Sized>(rng: &mut R, domain_box: &[[f64; 2]]) -> Vec<f64> {
    domain_box.iter().map(|&[lo, hi]| lo + (hi - lo) * rng.random::<f64>()).collect()
}

pub fn in_box(x: &[f64], domain_box: &[[f64; 2]]) -> bool {
    x.iter().zip(domain_box).all(|(v, &[lo, hi])| *v >= lo && *v <= hi)
}

/// Uniform direction on the unit sphere in `Rⁿ`.
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        let norm = norm2(&g);
        if norm > 1e-300 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// A point on a sphere of random radius, kept inside `domain_box`.
///
/// The radius is uniform on `(0, R]` where `R` is the distance to the
/// farthest box corner; draws landing outside the box are retried and, after
/// 16 misses, replaced by a uniform box sample.
pub fn sphere_sample<R: Rng + ?Sized>(rng: &mut R, domain_box: &[[f64; 2]]) -> Vec<f64> {
    let corners: Vec<f64> = domain_box.iter().map(|&[lo, hi]| libm::fabs(lo).max(libm::fabs(hi))).collect();
    let reach = norm2(&corners);
    for _ in 0..16 {
        let dir = unit_direction(rng, domain_box.len());
        let radius = reach * (1.0 - rng.random::<f64>());
        let x: Vec<f64> = dir.into_iter().map(|d| d * radius).collect();
        if in_box(&x, domain_box) {
            return x;
        }
    }
    uniform_in_box(rng, domain_box)
}

/// Test inputs for certificates: even indices are uniform in the box, odd
/// indices are uniform box points shrunk by a log-uniform factor in
/// `[1e-6, 1]` so both tiny and large `‖x‖` are exercised.
pub fn certificate_points(domain_box: &[[f64; 2]], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, 0);
    (0..count)
        .map(|k| {
            let x = uniform_in_box(&mut rng, domain_box);
            if k % 2 == 0 {
                x
            } else {
                let scale = libm::pow(10.0, -6.0 * rng.random::<f64>());
                x.into_iter().map(|v| v * scale).collect()
            }
        })
        .collect()
}

/// `count` evenly spaced points from `lo` to `hi` inclusive. The midpoint of
/// a symmetric interval with an odd count is exactly zero.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}
