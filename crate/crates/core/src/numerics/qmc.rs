//! Randomly shifted Halton points on the sphere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical inverse of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// `count` points in `[0,1)^dim`, Cranley–Patterson shifted by a seeded draw.
pub fn halton(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "halton: dimension {dim} too large");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (0..count)
        .map(|i| {
            (0..dim)
                .map(|d| (radical_inverse(i as u64 + 1, PRIMES[d]) + shift[d]).fract())
                .collect()
        })
        .collect()
}

/// Unit vectors in `R^n`, mapping Halton points through the normal quantile.
pub fn sphere_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let normal = Normal::standard();
    halton(n, count, seed)
        .into_iter()
        .map(|u| {
            let z: Vec<f64> = u
                .iter()
                .map(|&p| normal.inverse_cdf(p.clamp(1e-15, 1.0 - 1e-15)))
                .collect();
            let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            z.into_iter().map(|v| v / r).collect()
        })
        .collect()
}
