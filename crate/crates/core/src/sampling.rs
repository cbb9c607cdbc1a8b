//! Seeded sampling helpers: unit directions and reproducible RNG setup.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// All randomized operations in this crate derive their RNG from an explicit
/// seed through this constructor, so identical seeds replay identical runs.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` deterministic unit directions.
///
/// For n = 2 these are equally spaced angles starting at 0 (so the
/// coordinate axes are included whenever 4 divides `count`). For n >= 3 a
/// fixed-seed Gaussian sample is normalized; the set depends only on
/// (`dim`, `count`).
pub fn unit_directions(dim: usize, count: usize) -> Vec<DVector<f64>> {
    assert!(dim >= 2, "unit_directions requires dim >= 2");
    if dim == 2 {
        (0..count)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * (k as f64) / (count as f64);
                DVector::from_vec(vec![theta.cos(), theta.sin()])
            })
            .collect()
    } else {
        let mut rng = seeded_rng(0x5EED_D19E);
        (0..count).map(|_| random_unit_vector(dim, &mut rng)).collect()
    }
}

/// One uniformly distributed unit vector (normalized Gaussian).
pub fn random_unit_vector<R: Rng>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(dim, (0..dim).map(|_| standard_normal(rng)));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Standard normal via Box-Muller; avoids a rand_distr dependency.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
