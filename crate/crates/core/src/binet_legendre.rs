//! The Binet-Legendre tensor of a Finsler structure.
//!
//! At a point `x` the unit tangent ball `Omega_x = {v : F(x, v) < 1}` is
//! averaged into the inverse tensor
//!
//! ```text
//! g^{ij}(x) = n * int_{S^{n-1}} u_i u_j F(x,u)^{-(n+2)} dsigma
//!               / int_{S^{n-1}} F(x,u)^{-n} dsigma
//! ```
//!
//! and `g_ij(x)` is its matrix inverse. The polar form above is what the
//! quadrature path evaluates; polyhedral unit balls additionally get an
//! exact moment path, and a twisted variant accepts a fiberwise
//! change of variables `A(x, v)` (the change of variables is exact, so the
//! result must agree with the untwisted tensor).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::domain::Domain;
use crate::error::{FinslerError, Result};
use crate::finsler::FinslerStructure;
use crate::polytope::ConvexPolytope;
use crate::quadrature::{QuadratureScheme, SphericalQuadrature};
use crate::regularity::{holder_seminorm, HolderEstimate};
use crate::sampling::unit_directions;

/// Condition-number cap for tensor inversion; beyond it the indicatrix is
/// treated as numerically degenerate.
pub const INVERSION_CONDITION_CAP: f64 = 1e12;

/// A validated symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    m: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates symmetry (to 1e-12, relative) and positive definiteness.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(FinslerError::NumericalFailure(
                "tensor matrix is not square".into(),
            ));
        }
        if m.iter().any(|c| !c.is_finite()) {
            return Err(FinslerError::NumericalFailure(
                "tensor matrix has non-finite entries".into(),
            ));
        }
        let scale = m.abs().max().max(1e-300);
        let sym_defect = (&m - m.transpose()).abs().max();
        if sym_defect > 1e-12 * scale.max(1.0) {
            return Err(FinslerError::NumericalFailure(format!(
                "tensor matrix is not symmetric (defect {sym_defect:.3e})"
            )));
        }
        let sym = (&m + m.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(sym.clone());
        let min = eig.eigenvalues.min();
        if !(min > 0.0) {
            return Err(FinslerError::NumericalFailure(format!(
                "tensor matrix is not positive definite (min eigenvalue {min:.3e})"
            )));
        }
        Ok(SpdMatrix { m: sym })
    }

    pub fn identity(dim: usize) -> Self {
        SpdMatrix {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// (min, max) eigenvalues.
    pub fn eigenvalue_range(&self) -> (f64, f64) {
        let eig = nalgebra::SymmetricEigen::new(self.m.clone());
        (eig.eigenvalues.min(), eig.eigenvalues.max())
    }

    pub fn condition_number(&self) -> f64 {
        let (min, max) = self.eigenvalue_range();
        max / min
    }

    /// Inverse through the symmetric eigendecomposition, rejecting condition
    /// numbers above [`INVERSION_CONDITION_CAP`].
    pub fn inverse(&self) -> Result<SpdMatrix> {
        let eig = nalgebra::SymmetricEigen::new(self.m.clone());
        let min = eig.eigenvalues.min();
        let max = eig.eigenvalues.max();
        if !(min > 0.0) || max / min > INVERSION_CONDITION_CAP {
            return Err(FinslerError::NumericalFailure(format!(
                "tensor inversion failed: eigenvalues in [{min:.3e}, {max:.3e}]"
            )));
        }
        let mut diag = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.dim() {
            diag[(i, i)] = 1.0 / eig.eigenvalues[i];
        }
        let inv = &eig.eigenvectors * diag * eig.eigenvectors.transpose();
        let sym = (&inv + inv.transpose()) * 0.5;
        Ok(SpdMatrix { m: sym })
    }

    /// Largest absolute entry difference.
    pub fn inf_norm_diff(&self, other: &SpdMatrix) -> f64 {
        (&self.m - &other.m).abs().max()
    }
}

/// How a tensor field was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Spherical quadrature with the given scheme/resolution.
    Quadrature {
        scheme: QuadratureScheme,
        resolution: usize,
    },
    /// Exact polyhedral moments.
    Exact,
    /// Sampled from a closed form.
    ClosedForm,
}

/// A symmetric positive definite tensor per node of a regular grid.
///
/// Nodes are ordered lexicographically with the last axis fastest; the
/// ordering is part of the serialized format and must not change.
#[derive(Debug, Clone)]
pub struct MetricTensorField {
    domain: Domain,
    resolution: Vec<usize>,
    tensors: Vec<SpdMatrix>,
    provenance: Provenance,
}

impl MetricTensorField {
    /// Evaluates `f` on every grid node.
    pub fn from_fn(
        domain: Domain,
        resolution: &[usize],
        provenance: Provenance,
        f: impl Fn(&DVector<f64>) -> Result<SpdMatrix>,
    ) -> Result<Self> {
        if resolution.len() != domain.dim() {
            return Err(FinslerError::Configuration(format!(
                "resolution has {} axes for a {}-dimensional domain",
                resolution.len(),
                domain.dim()
            )));
        }
        if resolution.iter().any(|&r| r < 2) {
            return Err(FinslerError::Configuration(
                "grid resolution must be >= 2 per axis".into(),
            ));
        }
        let count: usize = resolution.iter().product();
        let mut tensors = Vec::with_capacity(count);
        let shell = MetricTensorField {
            domain: domain.clone(),
            resolution: resolution.to_vec(),
            tensors: Vec::new(),
            provenance,
        };
        for flat in 0..count {
            let point = shell.node_point(flat);
            let tensor = f(&point).map_err(|e| FinslerError::Evaluation {
                index: flat,
                point: point.iter().copied().collect(),
                reason: e.to_string(),
            })?;
            if tensor.dim() != domain.dim() {
                return Err(FinslerError::Configuration(
                    "tensor dimension does not match the grid".into(),
                ));
            }
            tensors.push(tensor);
        }
        Ok(MetricTensorField {
            domain,
            resolution: resolution.to_vec(),
            tensors,
            provenance,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn node_count(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn tensors(&self) -> &[SpdMatrix] {
        &self.tensors
    }

    pub fn get(&self, flat: usize) -> &SpdMatrix {
        &self.tensors[flat]
    }

    /// Grid spacing along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        (self.domain.upper()[axis] - self.domain.lower()[axis])
            / (self.resolution[axis] - 1) as f64
    }

    /// Multi-index of a flat node index (last axis fastest).
    pub fn node_coords(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        let mut coords = vec![0usize; self.resolution.len()];
        for axis in (0..self.resolution.len()).rev() {
            coords[axis] = rem % self.resolution[axis];
            rem /= self.resolution[axis];
        }
        coords
    }

    pub fn flat_index(&self, coords: &[usize]) -> usize {
        let mut flat = 0usize;
        for (axis, &c) in coords.iter().enumerate() {
            flat = flat * self.resolution[axis] + c;
        }
        flat
    }

    pub fn node_point(&self, flat: usize) -> DVector<f64> {
        let coords = self.node_coords(flat);
        DVector::from_iterator(
            self.resolution.len(),
            coords.iter().enumerate().map(|(axis, &c)| {
                let l = self.domain.lower()[axis];
                let u = self.domain.upper()[axis];
                l + (u - l) * c as f64 / (self.resolution[axis] - 1) as f64
            }),
        )
    }

    /// Multilinear interpolation of the tensor entries at `x`.
    pub fn interpolate(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if !self.domain.contains(x) {
            return Err(FinslerError::outside(x.as_slice(), "field interpolation"));
        }
        let dim = self.domain.dim();
        let mut cell = vec![0usize; dim];
        let mut frac = vec![0.0f64; dim];
        for axis in 0..dim {
            let r = self.resolution[axis];
            let l = self.domain.lower()[axis];
            let u = self.domain.upper()[axis];
            let t = ((x[axis] - l) / (u - l) * (r - 1) as f64).clamp(0.0, (r - 1) as f64);
            let c = (t.floor() as usize).min(r - 2);
            cell[axis] = c;
            frac[axis] = t - c as f64;
        }
        let mut acc = DMatrix::zeros(dim, dim);
        for corner in 0..(1usize << dim) {
            let mut weight = 1.0;
            let mut coords = vec![0usize; dim];
            for axis in 0..dim {
                if corner >> axis & 1 == 1 {
                    coords[axis] = cell[axis] + 1;
                    weight *= frac[axis];
                } else {
                    coords[axis] = cell[axis];
                    weight *= 1.0 - frac[axis];
                }
            }
            if weight == 0.0 {
                continue;
            }
            acc += self.get(self.flat_index(&coords)).as_matrix() * weight;
        }
        Ok(acc)
    }
}

fn check_point_and_rule(
    f: &FinslerStructure,
    x: &DVector<f64>,
    q: &SphericalQuadrature,
) -> Result<()> {
    if q.dim() != f.dim() {
        return Err(FinslerError::Configuration(format!(
            "quadrature dimension {} does not match structure dimension {}",
            q.dim(),
            f.dim()
        )));
    }
    if !f.domain().contains(x) {
        return Err(FinslerError::outside(x.as_slice(), "tensor evaluation"));
    }
    Ok(())
}

/// The inverse tensor `g^{ij}(x)` by spherical quadrature.
pub fn bl_inverse_tensor_at(
    f: &FinslerStructure,
    x: &DVector<f64>,
    q: &SphericalQuadrature,
) -> Result<SpdMatrix> {
    check_point_and_rule(f, x, q)?;
    let n = f.dim();
    let mut numerator = DMatrix::zeros(n, n);
    let mut denominator = 0.0;
    for (idx, (u, &w)) in q.nodes().iter().zip(q.weights()).enumerate() {
        let fu = f.value(x, u);
        if !(fu > 0.0) || !fu.is_finite() {
            return Err(FinslerError::InvalidStructure(format!(
                "F(x, u) = {fu} at quadrature node {idx}; the structure is not positive"
            )));
        }
        let inv_n = fu.powi(-(n as i32));
        let inv_n2 = inv_n / (fu * fu);
        denominator += w * inv_n;
        for i in 0..n {
            for j in i..n {
                numerator[(i, j)] += w * u[i] * u[j] * inv_n2;
            }
        }
    }
    if !(denominator > 0.0) {
        return Err(FinslerError::NumericalFailure(format!(
            "volume integral is non-positive ({denominator})"
        )));
    }
    for i in 0..n {
        for j in 0..i {
            numerator[(i, j)] = numerator[(j, i)];
        }
    }
    SpdMatrix::new(numerator * (n as f64 / denominator))
}

/// The tensor `g_ij(x)`: inverse of [`bl_inverse_tensor_at`].
pub fn bl_tensor_at(
    f: &FinslerStructure,
    x: &DVector<f64>,
    q: &SphericalQuadrature,
) -> Result<SpdMatrix> {
    bl_inverse_tensor_at(f, x, q)?.inverse()
}

/// Evaluates `g_ij` on a regular grid; nodes are independent.
pub fn bl_field(
    f: &FinslerStructure,
    resolution: &[usize],
    q: &SphericalQuadrature,
) -> Result<MetricTensorField> {
    MetricTensorField::from_fn(
        f.domain().clone(),
        resolution,
        Provenance::Quadrature {
            scheme: q.scheme(),
            resolution: q.resolution(),
        },
        |x| bl_tensor_at(f, x, q),
    )
}

/// Exact `g_ij` for the Minkowski norm whose unit ball is the convex hull of
/// `vertices` (origin strictly inside, dimension 2 or 3).
///
/// Volume and second moments come from the origin-fan simplex formula that
/// the polytope module pins against a Monte-Carlo oracle.
pub fn bl_polyhedral_exact(vertices: &[DVector<f64>], dim: usize) -> Result<SpdMatrix> {
    let poly = ConvexPolytope::from_points(dim, vertices)?;
    let (volume, moment) = poly.volume_and_second_moment()?;
    let inverse = SpdMatrix::new(moment * ((dim as f64 + 2.0) / volume))?;
    inverse.inverse()
}

/// A fiberwise change of variables `A(x, v)`, positively homogeneous of
/// degree 1 in `v`.
#[derive(Clone)]
pub struct TwistMap {
    evaluator: Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>,
    jacobian: Option<Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>>,
    fd_step: f64,
}

impl std::fmt::Debug for TwistMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TwistMap")
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl TwistMap {
    /// Wraps an evaluator and an optional analytic `v`-Jacobian; without one
    /// the Jacobian falls back to forward differences with relative step
    /// 1e-6.
    pub fn new(
        evaluator: Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>,
        jacobian: Option<Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>>,
    ) -> Self {
        TwistMap {
            evaluator,
            jacobian,
            fd_step: 1e-6,
        }
    }

    /// The identity twist `A(x, v) = v`.
    pub fn identity(dim: usize) -> Self {
        TwistMap::new(
            Arc::new(|_, v: &DVector<f64>| v.clone()),
            Some(Arc::new(move |_, _| DMatrix::identity(dim, dim))),
        )
    }

    /// A position-dependent planar rotation `A(x, v) = R(theta(x)) v`.
    pub fn planar_rotation(theta: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>) -> Self {
        let theta2 = theta.clone();
        TwistMap::new(
            Arc::new(move |x, v: &DVector<f64>| {
                let t = theta(x);
                DVector::from_vec(vec![
                    t.cos() * v[0] - t.sin() * v[1],
                    t.sin() * v[0] + t.cos() * v[1],
                ])
            }),
            Some(Arc::new(move |x, _| {
                let t = theta2(x);
                DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()])
            })),
        )
    }

    /// A constant linear twist `A(x, v) = T v`.
    pub fn linear(t: DMatrix<f64>) -> Self {
        let t2 = t.clone();
        TwistMap::new(
            Arc::new(move |_, v: &DVector<f64>| &t * v),
            Some(Arc::new(move |_, _| t2.clone())),
        )
    }

    pub fn apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        (self.evaluator)(x, v)
    }

    /// `J(x, u) = |det D_v A_x(u)|`, analytic when available, otherwise
    /// forward differences with step `fd_step * |u|`.
    pub fn jacobian_det(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        let m = match &self.jacobian {
            Some(j) => j(x, u),
            None => {
                let dim = u.len();
                let h = self.fd_step * u.norm().max(1e-12);
                let base = self.apply(x, u);
                let mut m = DMatrix::zeros(dim, dim);
                for j in 0..dim {
                    let mut shifted = u.clone();
                    shifted[j] += h;
                    let col = (self.apply(x, &shifted) - &base) / h;
                    m.set_column(j, &col);
                }
                m
            }
        };
        let det = m.determinant().abs();
        if !(det > 0.0) || !det.is_finite() {
            return Err(FinslerError::InvalidTwist(format!(
                "twist Jacobian determinant {det} at u = {:?}",
                u.as_slice()
            )));
        }
        Ok(det)
    }

    /// Samples the twist invariants at `x`: degree-1 homogeneity in `v` and
    /// a bilipschitz fiber map (Jacobian determinant bounded away from 0).
    pub fn validate_at(&self, x: &DVector<f64>, direction_count: usize) -> Result<()> {
        for u in unit_directions(x.len(), direction_count.max(8)) {
            let a1 = self.apply(x, &u);
            let a2 = self.apply(x, &(&u * 2.0));
            if ((&a1 * 2.0) - &a2).norm() > 1e-9 * (1.0 + a2.norm()) {
                return Err(FinslerError::InvalidTwist(
                    "twist is not positively homogeneous of degree 1".into(),
                ));
            }
            self.jacobian_det(x, &u)?;
        }
        Ok(())
    }
}

/// The twisted tensor: numerator and denominator integrals evaluated through
/// the change of variables `A`, then inverted. Agrees with [`bl_tensor_at`]
/// because the substitution is exact.
pub fn bl_twisted_tensor_at(
    f: &FinslerStructure,
    twist: &TwistMap,
    x: &DVector<f64>,
    q: &SphericalQuadrature,
) -> Result<SpdMatrix> {
    check_point_and_rule(f, x, q)?;
    let n = f.dim();
    let mut numerator = DMatrix::zeros(n, n);
    let mut denominator = 0.0;
    for (idx, (u, &w)) in q.nodes().iter().zip(q.weights()).enumerate() {
        let a = twist.apply(x, u);
        let j = twist.jacobian_det(x, u)?;
        let fa = f.value(x, &a);
        if !(fa > 0.0) || !fa.is_finite() {
            return Err(FinslerError::InvalidStructure(format!(
                "F(x, A(x,u)) = {fa} at quadrature node {idx}"
            )));
        }
        let inv_n = fa.powi(-(n as i32));
        let inv_n2 = inv_n / (fa * fa);
        denominator += w * j * inv_n;
        for i in 0..n {
            for jj in i..n {
                numerator[(i, jj)] += w * a[i] * a[jj] * j * inv_n2;
            }
        }
    }
    if !(denominator > 0.0) {
        return Err(FinslerError::NumericalFailure(format!(
            "twisted volume integral is non-positive ({denominator})"
        )));
    }
    for i in 0..n {
        for j in 0..i {
            numerator[(i, j)] = numerator[(j, i)];
        }
    }
    SpdMatrix::new(numerator * (n as f64 / denominator))?.inverse()
}

/// Per-direction Hölder data for a partial-smoothness probe.
#[derive(Debug, Clone)]
pub struct PartialSmoothnessReport {
    pub alpha: f64,
    pub direction_count: usize,
    pub pair_count: usize,
    /// Worst C^{0,alpha} seminorm of `x -> F(x, A(x,u))` over sampled `u`.
    pub max_h_seminorm: f64,
    /// Worst seminorm of `x -> A(x, u)`.
    pub max_a_seminorm: f64,
    /// Worst seminorm of `x -> J(x, u)`.
    pub max_j_seminorm: f64,
    pub bound: f64,
    /// Whether the summed seminorms stay below `bound` for every direction.
    pub bounded: bool,
}

/// Estimates the `C^{0,alpha}` seminorms of `h_u`, `A_u` and `J_u` over the
/// domain for sampled directions `u`, and checks them against `bound`.
pub fn partial_smoothness_check(
    f: &FinslerStructure,
    twist: &TwistMap,
    alpha: f64,
    direction_count: usize,
    pair_count: usize,
    seed: u64,
    bound: f64,
) -> Result<PartialSmoothnessReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(FinslerError::Configuration(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    let domain = f.domain().clone();
    let mut report = PartialSmoothnessReport {
        alpha,
        direction_count,
        pair_count,
        max_h_seminorm: 0.0,
        max_a_seminorm: 0.0,
        max_j_seminorm: 0.0,
        bound,
        bounded: true,
    };
    for u in unit_directions(f.dim(), direction_count) {
        let h_est: HolderEstimate = holder_seminorm(
            |x: &DVector<f64>| f.value(x, &twist.apply(x, &u)),
            &domain,
            alpha,
            pair_count,
            seed,
        )?;
        let a_est = holder_seminorm(
            |x: &DVector<f64>| twist.apply(x, &u),
            &domain,
            alpha,
            pair_count,
            seed,
        )?;
        let j_est = holder_seminorm(
            |x: &DVector<f64>| twist.jacobian_det(x, &u).unwrap_or(f64::NAN),
            &domain,
            alpha,
            pair_count,
            seed,
        )?;
        report.max_h_seminorm = report.max_h_seminorm.max(h_est.seminorm);
        report.max_a_seminorm = report.max_a_seminorm.max(a_est.seminorm);
        report.max_j_seminorm = report.max_j_seminorm.max(j_est.seminorm);
        if h_est.seminorm + a_est.seminorm + j_est.seminorm > bound {
            report.bounded = false;
        }
    }
    Ok(report)
}
