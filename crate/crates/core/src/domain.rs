//! Axis-aligned box domains in `R^n`.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{FinslerError, Result};

/// A bounded axis-aligned box domain in `R^n`, `n >= 2`.
///
/// One-dimensional domains are rejected everywhere: the unit tangent sphere
/// degenerates to two points and none of the spherical machinery applies.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    convex: bool,
}

impl Domain {
    /// Builds a box domain from per-axis bounds.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, convex: bool) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(FinslerError::Configuration(format!(
                "bound lengths differ: {} vs {}",
                lower.len(),
                upper.len()
            )));
        }
        let dim = lower.len();
        if dim < 2 {
            return Err(FinslerError::Configuration(format!(
                "dimension {dim} not supported; need n >= 2"
            )));
        }
        for i in 0..dim {
            if !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(FinslerError::NonFiniteInput(format!(
                    "domain bound on axis {i}"
                )));
            }
            if lower[i] >= upper[i] {
                return Err(FinslerError::Configuration(format!(
                    "axis {i}: lower bound {} is not below upper bound {}",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Domain {
            dim,
            lower,
            upper,
            convex,
        })
    }

    /// The symmetric cube `[-half_width, half_width]^dim`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Domain::new(vec![-half_width; dim], vec![half_width; dim], true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim,
            self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)),
        )
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.contains_with_margin(x, 0.0)
    }

    /// True when `x` lies in the box and at distance `margin` or more from
    /// every face.
    pub fn contains_with_margin(&self, x: &DVector<f64>, margin: f64) -> bool {
        if x.len() != self.dim {
            return false;
        }
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&xi, (&l, &u))| xi.is_finite() && xi >= l + margin && xi <= u - margin)
    }

    /// Component-wise projection back into the box.
    pub fn clamp(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dim,
            x.iter()
                .enumerate()
                .map(|(i, &xi)| xi.clamp(self.lower[i], self.upper[i])),
        )
    }

    /// Uniform sample from the box.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.dim,
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(&l, &u)| rng.random_range(l..u)),
        )
    }

    /// Uniform sample from the box shrunk by `margin` on every face.
    pub fn sample_with_margin<R: Rng>(&self, rng: &mut R, margin: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.dim,
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(&l, &u)| rng.random_range((l + margin)..(u - margin))),
        )
    }

    /// Shortest distance from `x` to the boundary (0 outside).
    pub fn boundary_margin(&self, x: &DVector<f64>) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.dim {
            m = m.min(x[i] - self.lower[i]).min(self.upper[i] - x[i]);
        }
        m.max(0.0)
    }
}
