//! Node/weight rules on the unit sphere `S^{n-1}`.
//!
//! Defaults per dimension: equally spaced angles for n = 2 (spectrally
//! accurate for smooth integrands), Gauss-Legendre in the polar cosine
//! crossed with uniform azimuth for n = 3, and seeded Monte-Carlo for
//! n >= 4 where no cheap deterministic rule exists.

use nalgebra::{DMatrix, DVector};

use crate::error::{FinslerError, Result};
use crate::sampling::{random_unit_vector, seeded_rng};

/// Discretization scheme for the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureScheme {
    /// Equally spaced angles on the circle (n = 2 only).
    UniformAngle,
    /// Gauss-Legendre polar cosine x uniform azimuth (n = 3 only).
    ProductRule,
    /// Seeded uniform sphere sampling (any n, intended for n >= 4).
    MonteCarlo,
}

impl QuadratureScheme {
    pub fn name(self) -> &'static str {
        match self {
            QuadratureScheme::UniformAngle => "uniform-angle",
            QuadratureScheme::ProductRule => "product-rule",
            QuadratureScheme::MonteCarlo => "monte-carlo",
        }
    }
}

/// A quadrature rule on `S^{n-1}`: unit nodes with positive weights that sum
/// to the sphere's surface measure.
#[derive(Debug, Clone)]
pub struct SphericalQuadrature {
    dim: usize,
    scheme: QuadratureScheme,
    resolution: usize,
    nodes: Vec<DVector<f64>>,
    weights: Vec<f64>,
    seed: Option<u64>,
}

const DEFAULT_MC_SEED: u64 = 0x51D_0F1D;

impl SphericalQuadrature {
    /// Builds a rule; Monte-Carlo uses a fixed default seed (see
    /// [`SphericalQuadrature::build_seeded`] to choose one).
    pub fn build(dim: usize, scheme: QuadratureScheme, resolution: usize) -> Result<Self> {
        Self::build_seeded(dim, scheme, resolution, DEFAULT_MC_SEED)
    }

    /// Builds a rule with an explicit seed for the Monte-Carlo scheme (the
    /// seed is ignored by deterministic schemes).
    pub fn build_seeded(
        dim: usize,
        scheme: QuadratureScheme,
        resolution: usize,
        seed: u64,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(FinslerError::Configuration(format!(
                "sphere dimension {dim} not supported; need n >= 2"
            )));
        }
        match scheme {
            QuadratureScheme::UniformAngle => {
                if dim != 2 {
                    return Err(FinslerError::Configuration(
                        "uniform-angle rule is only defined for n = 2".into(),
                    ));
                }
                if resolution < 8 {
                    return Err(FinslerError::Configuration(format!(
                        "uniform-angle rule needs at least 8 angles, got {resolution}"
                    )));
                }
                let m = resolution;
                let w = 2.0 * std::f64::consts::PI / m as f64;
                let nodes = (0..m)
                    .map(|k| {
                        let theta = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                        DVector::from_vec(vec![theta.cos(), theta.sin()])
                    })
                    .collect();
                Ok(SphericalQuadrature {
                    dim,
                    scheme,
                    resolution,
                    nodes,
                    weights: vec![w; m],
                    seed: None,
                })
            }
            QuadratureScheme::ProductRule => {
                if dim != 3 {
                    return Err(FinslerError::Configuration(
                        "product rule is only defined for n = 3".into(),
                    ));
                }
                if resolution < 4 {
                    return Err(FinslerError::Configuration(format!(
                        "product rule needs polar resolution >= 4, got {resolution}"
                    )));
                }
                let (polar_nodes, polar_weights) = gauss_legendre(resolution);
                let azimuth = 2 * resolution;
                let wphi = 2.0 * std::f64::consts::PI / azimuth as f64;
                let mut nodes = Vec::with_capacity(resolution * azimuth);
                let mut weights = Vec::with_capacity(resolution * azimuth);
                for (t, wt) in polar_nodes.iter().zip(&polar_weights) {
                    let s = (1.0 - t * t).max(0.0).sqrt();
                    for k in 0..azimuth {
                        let phi = 2.0 * std::f64::consts::PI * k as f64 / azimuth as f64;
                        nodes.push(DVector::from_vec(vec![s * phi.cos(), s * phi.sin(), *t]));
                        weights.push(wt * wphi);
                    }
                }
                Ok(SphericalQuadrature {
                    dim,
                    scheme,
                    resolution,
                    nodes,
                    weights,
                    seed: None,
                })
            }
            QuadratureScheme::MonteCarlo => {
                if resolution < 100 {
                    return Err(FinslerError::Configuration(format!(
                        "monte-carlo rule needs at least 100 samples, got {resolution}"
                    )));
                }
                let mut rng = seeded_rng(seed);
                let nodes: Vec<DVector<f64>> = (0..resolution)
                    .map(|_| random_unit_vector(dim, &mut rng))
                    .collect();
                let w = surface_measure(dim) / resolution as f64;
                Ok(SphericalQuadrature {
                    dim,
                    scheme,
                    resolution,
                    nodes,
                    weights: vec![w; resolution],
                    seed: Some(seed),
                })
            }
        }
    }

    /// The crate-wide default rule for a given dimension.
    pub fn default_for(dim: usize) -> Result<Self> {
        match dim {
            2 => Self::build(2, QuadratureScheme::UniformAngle, 512),
            3 => Self::build(3, QuadratureScheme::ProductRule, 64),
            _ => Self::build(dim, QuadratureScheme::MonteCarlo, 100_000),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scheme(&self) -> QuadratureScheme {
        self.scheme
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[DVector<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sum_i w_i f(u_i)` in fixed node order.
    pub fn integrate(&self, f: impl Fn(&DVector<f64>) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (i, (u, w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let val = f(u);
            if !val.is_finite() {
                return Err(FinslerError::Evaluation {
                    index: i,
                    point: u.iter().copied().collect(),
                    reason: format!("integrand evaluated to {val}"),
                });
            }
            acc += w * val;
        }
        Ok(acc)
    }

    /// The same rule at doubled resolution (Monte-Carlo refines with a seed
    /// derived deterministically from the stored one).
    pub fn refined(&self) -> Result<Self> {
        let seed = self
            .seed
            .map(|s| s.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1))
            .unwrap_or(DEFAULT_MC_SEED);
        Self::build_seeded(self.dim, self.scheme, self.resolution * 2, seed)
    }

    /// A posteriori error estimate `|I(rule) - I(doubled rule)|`.
    pub fn estimate_error(&self, f: impl Fn(&DVector<f64>) -> f64) -> Result<f64> {
        let coarse = self.integrate(&f)?;
        let fine = self.refined()?.integrate(&f)?;
        Ok((coarse - fine).abs())
    }
}

/// Surface measure of `S^{n-1}`: `2 pi^{n/2} / Gamma(n/2)`.
pub fn surface_measure(dim: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(dim as f64 / 2.0) / gamma_half_integer(dim)
}

/// Gamma(n/2) for integer n >= 1 by the recurrence from Gamma(1/2) and
/// Gamma(1).
fn gamma_half_integer(n: usize) -> f64 {
    let mut x = n as f64 / 2.0;
    let mut acc = 1.0;
    while x > 1.0 + 1e-12 {
        x -= 1.0;
        acc *= x;
    }
    if (x - 0.5).abs() < 1e-12 {
        acc * std::f64::consts::PI.sqrt()
    } else {
        acc
    }
}

/// Gauss-Legendre nodes/weights on [-1, 1] via the Golub-Welsch
/// eigendecomposition of the Jacobi matrix.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut jacobi = DMatrix::zeros(m, m);
    for k in 1..m {
        let kf = k as f64;
        let beta = kf / (4.0 * kf * kf - 1.0).sqrt();
        jacobi[(k - 1, k)] = beta;
        jacobi[(k, k - 1)] = beta;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let w = 2.0 * eig.eigenvectors[(0, i)] * eig.eigenvectors[(0, i)];
            (node, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}
