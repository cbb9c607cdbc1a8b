//! Analysis of candidate maps between Finsler domains: pullback residuals,
//! blow-up isometry tests, quasiconformal distortion, Christoffel
//! transformation residuals and dilation checks.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};


use crate::binet_legendre::MetricTensorField;
use crate::domain::Domain;
use crate::error::{FinslerError, Result};
use crate::finsler::FinslerStructure;
use crate::metric_space::{distance_with_options, DistanceOptions};
use crate::sampling::{seeded_rng, unit_directions};

/// A sampled candidate map between two domains, with a finite-difference
/// step for its Jacobians.
#[derive(Clone)]
pub struct DiscreteMap {
    source: Domain,
    target: Domain,
    map: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    step: f64,
}

impl std::fmt::Debug for DiscreteMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteMap")
            .field("source_dim", &self.source.dim())
            .field("target_dim", &self.target.dim())
            .field("step", &self.step)
            .finish()
    }
}

impl DiscreteMap {
    pub fn new(
        source: Domain,
        target: Domain,
        map: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
        step: Option<f64>,
    ) -> Result<Self> {
        let step = step.unwrap_or(1e-4 * source.diameter());
        if !(step.is_finite() && step > 0.0) {
            return Err(FinslerError::Configuration(format!(
                "finite-difference step must be positive, got {step}"
            )));
        }
        Ok(DiscreteMap {
            source,
            target,
            map,
            step,
        })
    }

    pub fn identity(domain: Domain) -> Self {
        let step = 1e-4 * domain.diameter();
        DiscreteMap {
            source: domain.clone(),
            target: domain,
            map: Arc::new(|x: &DVector<f64>| x.clone()),
            step,
        }
    }

    pub fn linear(source: Domain, target: Domain, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != target.dim() || matrix.ncols() != source.dim() {
            return Err(FinslerError::Configuration(
                "linear map shape does not match the domains".into(),
            ));
        }
        DiscreteMap::new(
            source,
            target,
            Arc::new(move |x: &DVector<f64>| &matrix * x),
            None,
        )
    }

    pub fn dilation(source: Domain, target: Domain, a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(FinslerError::Configuration(format!(
                "dilation factor must be positive, got {a}"
            )));
        }
        DiscreteMap::new(source, target, Arc::new(move |x: &DVector<f64>| x * a), None)
    }

    /// Map sampled on a regular grid (node-major, last axis fastest),
    /// evaluated by multilinear interpolation.
    pub fn from_grid_samples(
        source: Domain,
        target: Domain,
        resolution: Vec<usize>,
        values: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if resolution.len() != source.dim() {
            return Err(FinslerError::Configuration(
                "grid resolution axes do not match the source dimension".into(),
            ));
        }
        if resolution.iter().any(|&r| r < 2) {
            return Err(FinslerError::Configuration(
                "grid-sampled maps need >= 2 nodes per axis".into(),
            ));
        }
        let expected: usize = resolution.iter().product();
        if values.len() != expected {
            return Err(FinslerError::Configuration(format!(
                "expected {expected} grid samples, got {}",
                values.len()
            )));
        }
        let tdim = target.dim();
        if values.iter().any(|v| v.len() != tdim) {
            return Err(FinslerError::Configuration(
                "grid sample dimension does not match the target".into(),
            ));
        }
        let src = source.clone();
        let dim = source.dim();
        let evaluator = move |x: &DVector<f64>| -> DVector<f64> {
            let mut cell = vec![0usize; dim];
            let mut frac = vec![0.0f64; dim];
            for axis in 0..dim {
                let r = resolution[axis];
                let l = src.lower()[axis];
                let u = src.upper()[axis];
                let t = ((x[axis] - l) / (u - l) * (r - 1) as f64).clamp(0.0, (r - 1) as f64);
                let c = (t.floor() as usize).min(r - 2);
                cell[axis] = c;
                frac[axis] = t - c as f64;
            }
            let flat_of = |coords: &[usize]| -> usize {
                let mut flat = 0usize;
                for (axis, &c) in coords.iter().enumerate() {
                    flat = flat * resolution[axis] + c;
                }
                flat
            };
            let mut acc = DVector::zeros(tdim);
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
                if weight != 0.0 {
                    acc += &values[flat_of(&coords)] * weight;
                }
            }
            acc
        };
        DiscreteMap::new(source, target, Arc::new(evaluator), None)
    }

    pub fn source(&self) -> &Domain {
        &self.source
    }

    pub fn target(&self) -> &Domain {
        &self.target
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.map)(x)
    }

    /// Central-difference Jacobian with entries
    /// `(phi_i(x + h e_j) - phi_i(x - h e_j)) / (2h)`.
    pub fn jacobian_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if !self.source.contains_with_margin(x, self.step) {
            return Err(FinslerError::InsufficientMargin {
                point: x.iter().copied().collect(),
                margin: self.step,
            });
        }
        let sdim = self.source.dim();
        let tdim = self.target.dim();
        let mut jac = DMatrix::zeros(tdim, sdim);
        for j in 0..sdim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += self.step;
            xm[j] -= self.step;
            let col = (self.eval(&xp) - self.eval(&xm)) / (2.0 * self.step);
            jac.set_column(j, &col);
        }
        Ok(jac)
    }
}

/// `max_u |F2(phi(x), dphi_x u) - F1(x, u)|` over sampled unit directions;
/// zero certifies a pointwise linear isometry of the frozen norms.
pub fn pullback_residual(
    f1: &FinslerStructure,
    f2: &FinslerStructure,
    phi: &DiscreteMap,
    x: &DVector<f64>,
    direction_count: usize,
) -> Result<f64> {
    let jac = phi.jacobian_at(x)?;
    let image = phi.eval(x);
    if !f2.domain().contains(&image) {
        return Err(FinslerError::outside(
            image.as_slice(),
            "pullback image point",
        ));
    }
    let mut worst = 0.0f64;
    for u in unit_directions(f1.dim(), direction_count) {
        let w = &jac * &u;
        if w.norm() < 1e-12 {
            return Err(FinslerError::DegenerateMap(
                "differential maps a unit vector to zero".into(),
            ));
        }
        let r = (f2.value(&image, &w) - f1.value(x, &u)).abs();
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Result of the blow-up test: secant rescalings of the map against the
/// frozen Minkowski norms at `x` and `phi(x)`.
#[derive(Debug, Clone)]
pub struct BlowupReport {
    pub t_values: Vec<f64>,
    /// Pullback residual of the secant map `(phi(x + t u) - phi(x)) / t` per t.
    pub residuals: Vec<f64>,
    /// Residual of the central-difference differential itself.
    pub linear_residual: f64,
    /// `residual - linear_residual`, clamped positive.
    pub deltas: Vec<f64>,
    /// Empirical convergence orders between consecutive t values.
    pub empirical_orders: Vec<f64>,
    /// Whether the residual sequence strictly decreases.
    pub monotone: bool,
}

/// Blow-up test: checks that the secant rescalings converge to the linear
/// differential, i.e. that the frozen-norm isometry defect of `phi` at `x`
/// is a first-order phenomenon.
pub fn blowup_isometry_test(
    f1: &FinslerStructure,
    f2: &FinslerStructure,
    phi: &DiscreteMap,
    x: &DVector<f64>,
    t_values: &[f64],
    direction_count: usize,
) -> Result<BlowupReport> {
    if t_values.is_empty() || t_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(FinslerError::Configuration(
            "t sequence must be strictly decreasing".into(),
        ));
    }
    if t_values.iter().any(|&t| !(t > 0.0)) {
        return Err(FinslerError::Configuration(
            "t values must be positive".into(),
        ));
    }
    let image = phi.eval(x);
    if !f2.domain().contains(&image) {
        return Err(FinslerError::outside(image.as_slice(), "blow-up base image"));
    }
    let linear_residual = pullback_residual(f1, f2, phi, x, direction_count)?;
    let dirs = unit_directions(f1.dim(), direction_count);
    let mut residuals = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let mut worst = 0.0f64;
        for u in &dirs {
            let z = x + u * t;
            if !phi.source.contains(&z) {
                return Err(FinslerError::Scale(format!(
                    "t = {t} pushes the rescaled chart outside the domain"
                )));
            }
            let secant = (phi.eval(&z) - &image) / t;
            let r = (f2.value(&image, &secant) - f1.value(x, u)).abs();
            worst = worst.max(r);
        }
        residuals.push(worst);
    }
    let deltas: Vec<f64> = residuals
        .iter()
        .map(|r| (r - linear_residual).max(1e-18))
        .collect();
    let mut empirical_orders = Vec::new();
    for k in 0..deltas.len().saturating_sub(1) {
        let order = (deltas[k] / deltas[k + 1]).ln() / (t_values[k] / t_values[k + 1]).ln();
        empirical_orders.push(order);
    }
    let monotone = residuals.windows(2).all(|w| w[1] < w[0]);
    Ok(BlowupReport {
        t_values: t_values.to_vec(),
        residuals,
        linear_residual,
        deltas,
        empirical_orders,
        monotone,
    })
}

/// Linear distortion and conformal factor of a map at a point.
#[derive(Debug, Clone)]
pub struct DistortionResult {
    /// `H = max / min` of the image norm over the F1-indicatrix; >= 1.
    pub h: f64,
    /// Conformal factor: geometric mean of max and min (their common value
    /// when H = 1).
    pub mu: f64,
    /// Unit direction attaining the maximum.
    pub max_direction: DVector<f64>,
    /// Unit direction attaining the minimum.
    pub min_direction: DVector<f64>,
}

/// Max/min of `F2(phi(x), dphi_x(u))` over the F1-indicatrix `F1(x, u) = 1`,
/// sampled on Euclidean-uniform directions rescaled to F1-unit length and
/// then polished by a deterministic local pattern search on the sphere.
pub fn distortion_at(
    f1: &FinslerStructure,
    f2: &FinslerStructure,
    phi: &DiscreteMap,
    x: &DVector<f64>,
    direction_count: usize,
) -> Result<DistortionResult> {
    let jac = phi.jacobian_at(x)?;
    if jac.determinant().abs() < 1e-12 {
        return Err(FinslerError::DegenerateMap(
            "singular differential in distortion computation".into(),
        ));
    }
    let image = phi.eval(x);
    if !f2.domain().contains(&image) {
        return Err(FinslerError::outside(image.as_slice(), "distortion image"));
    }
    let dim = f1.dim();
    let value_at = |u: &DVector<f64>| -> f64 {
        let f1u = f1.value(x, u);
        f2.value(&image, &(&jac * (u / f1u)))
    };
    let mut max_u = DVector::zeros(dim);
    let mut min_u = DVector::zeros(dim);
    let mut max_v = f64::NEG_INFINITY;
    let mut min_v = f64::INFINITY;
    for u in unit_directions(dim, direction_count) {
        let v = value_at(&u);
        if v > max_v {
            max_v = v;
            max_u = u.clone();
        }
        if v < min_v {
            min_v = v;
            min_u = u;
        }
    }
    // Local polish on the unit sphere: axis perturbations, renormalized.
    let polish = |mut u: DVector<f64>, mut best: f64, maximize: bool| -> (DVector<f64>, f64) {
        let mut step = 2.0 * std::f64::consts::PI / direction_count as f64;
        while step > 1e-12 {
            let mut improved = false;
            for axis in 0..dim {
                for sign in [-1.0, 1.0] {
                    let mut cand = u.clone();
                    cand[axis] += sign * step;
                    let norm = cand.norm();
                    if norm < 1e-12 {
                        continue;
                    }
                    cand /= norm;
                    let v = value_at(&cand);
                    if (maximize && v > best) || (!maximize && v < best) {
                        best = v;
                        u = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        (u, best)
    };
    let (max_u, max_v) = polish(max_u, max_v, true);
    let (min_u, min_v) = polish(min_u, min_v, false);
    if !(min_v > 0.0) {
        return Err(FinslerError::DegenerateMap(format!(
            "image norm minimum {min_v} is not positive"
        )));
    }
    Ok(DistortionResult {
        h: max_v / min_v,
        mu: (max_v * min_v).sqrt(),
        max_direction: max_u,
        min_direction: min_u,
    })
}

/// Christoffel symbols of a tensor field, per node, with boundary nodes
/// computed one-sided and flagged.
#[derive(Debug, Clone)]
pub struct ChristoffelField {
    domain: Domain,
    resolution: Vec<usize>,
    dim: usize,
    /// Node-major; per node `dim^3` entries indexed `[m][i][j]`.
    data: Vec<f64>,
    boundary: Vec<bool>,
}

impl ChristoffelField {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn node_count(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        self.boundary[flat]
    }

    pub fn gamma(&self, flat: usize, m: usize, i: usize, j: usize) -> f64 {
        let n = self.dim;
        self.data[flat * n * n * n + m * n * n + i * n + j]
    }

    pub fn node_values(&self, flat: usize) -> &[f64] {
        let n3 = self.dim * self.dim * self.dim;
        &self.data[flat * n3..(flat + 1) * n3]
    }

    fn node_coords(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        let mut coords = vec![0usize; self.resolution.len()];
        for axis in (0..self.resolution.len()).rev() {
            coords[axis] = rem % self.resolution[axis];
            rem /= self.resolution[axis];
        }
        coords
    }

    fn flat_index(&self, coords: &[usize]) -> usize {
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

    /// Multilinear interpolation of all `dim^3` symbols at `x`.
    pub fn interpolate(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        if !self.domain.contains(x) {
            return Err(FinslerError::outside(x.as_slice(), "Christoffel interpolation"));
        }
        let dim = self.dim;
        let n3 = dim * dim * dim;
        let mut cell = vec![0usize; self.resolution.len()];
        let mut frac = vec![0.0f64; self.resolution.len()];
        for axis in 0..self.resolution.len() {
            let r = self.resolution[axis];
            let l = self.domain.lower()[axis];
            let u = self.domain.upper()[axis];
            let t = ((x[axis] - l) / (u - l) * (r - 1) as f64).clamp(0.0, (r - 1) as f64);
            let c = (t.floor() as usize).min(r - 2);
            cell[axis] = c;
            frac[axis] = t - c as f64;
        }
        let mut acc = vec![0.0f64; n3];
        for corner in 0..(1usize << self.resolution.len()) {
            let mut weight = 1.0;
            let mut coords = vec![0usize; self.resolution.len()];
            for axis in 0..self.resolution.len() {
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
            let vals = self.node_values(self.flat_index(&coords));
            for (a, v) in acc.iter_mut().zip(vals) {
                *a += weight * v;
            }
        }
        Ok(acc)
    }
}

/// `Gamma^m_ij = 1/2 g^{ml} (d_i g_lj + d_j g_li - d_l g_ij)` with
/// central-difference metric derivatives (one-sided and flagged on the
/// boundary).
pub fn christoffel_field(g: &MetricTensorField) -> Result<ChristoffelField> {
    let resolution = g.resolution().to_vec();
    if resolution.iter().any(|&r| r < 5) {
        return Err(FinslerError::Configuration(
            "christoffel_field needs grid resolution >= 5 per axis".into(),
        ));
    }
    let dim = g.domain().dim();
    let node_count = g.node_count();
    let n3 = dim * dim * dim;
    let mut data = vec![0.0f64; node_count * n3];
    let mut boundary = vec![false; node_count];
    for flat in 0..node_count {
        let coords = g.node_coords(flat);
        // d_axis g at this node, one matrix per axis.
        let mut derivs: Vec<DMatrix<f64>> = Vec::with_capacity(dim);
        let mut on_boundary = false;
        for axis in 0..dim {
            let r = resolution[axis];
            let h = g.spacing(axis);
            let mut plus = coords.clone();
            let mut minus = coords.clone();
            let d = if coords[axis] == 0 {
                on_boundary = true;
                // Second-order forward difference.
                plus[axis] = 1;
                let mut plus2 = coords.clone();
                plus2[axis] = 2;
                let g0 = g.get(flat).as_matrix();
                let g1 = g.get(g.flat_index(&plus)).as_matrix();
                let g2 = g.get(g.flat_index(&plus2)).as_matrix();
                (g1 * 4.0 - g2 - g0 * 3.0) / (2.0 * h)
            } else if coords[axis] == r - 1 {
                on_boundary = true;
                minus[axis] = r - 2;
                let mut minus2 = coords.clone();
                minus2[axis] = r - 3;
                let g0 = g.get(flat).as_matrix();
                let g1 = g.get(g.flat_index(&minus)).as_matrix();
                let g2 = g.get(g.flat_index(&minus2)).as_matrix();
                (g0 * 3.0 - g1 * 4.0 + g2) / (2.0 * h)
            } else {
                plus[axis] += 1;
                minus[axis] -= 1;
                let gp = g.get(g.flat_index(&plus)).as_matrix();
                let gm = g.get(g.flat_index(&minus)).as_matrix();
                (gp - gm) / (2.0 * h)
            };
            derivs.push(d);
        }
        boundary[flat] = on_boundary;
        let inverse = g.get(flat).inverse().map_err(|e| FinslerError::Evaluation {
            index: flat,
            point: g.node_point(flat).iter().copied().collect(),
            reason: e.to_string(),
        })?;
        let ginv = inverse.as_matrix();
        for m in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    let mut acc = 0.0;
                    for l in 0..dim {
                        acc += ginv[(m, l)]
                            * (derivs[i][(l, j)] + derivs[j][(l, i)] - derivs[l][(i, j)]);
                    }
                    data[flat * n3 + m * dim * dim + i * dim + j] = 0.5 * acc;
                }
            }
        }
    }
    Ok(ChristoffelField {
        domain: g.domain().clone(),
        resolution,
        dim,
        data,
        boundary,
    })
}

/// Worst absolute residual of the Christoffel transformation rule
///
/// `d2phi^m/dx^i dx^j = Gamma^mu_ij dphi^m/dx^mu
///                      - Gamma~^m_nl dphi^n/dx^i dphi^l/dx^j`
///
/// over interior test nodes. A zero residual does not certify an isometry
/// (both sides vanish for any affine map between flat metrics); it is the
/// compatibility check used on candidate isometries.
pub fn christoffel_transform_residual(
    g1: &MetricTensorField,
    g2: &MetricTensorField,
    phi: &DiscreteMap,
) -> Result<f64> {
    let dim = g1.domain().dim();
    if g2.domain().dim() != dim || phi.source().dim() != dim || phi.target().dim() != dim {
        return Err(FinslerError::Configuration(
            "christoffel residual needs matching dimensions".into(),
        ));
    }
    if g1.domain() != phi.source() {
        return Err(FinslerError::Configuration(
            "g1 grid domain does not match the map source".into(),
        ));
    }
    let gamma1 = christoffel_field(g1)?;
    let gamma2 = christoffel_field(g2)?;
    let h = phi.step();
    let mut worst = 0.0f64;
    let mut tested = 0usize;
    for flat in 0..g1.node_count() {
        if gamma1.is_boundary(flat) {
            continue;
        }
        let x = g1.node_point(flat);
        if !phi.source().contains_with_margin(&x, 2.0 * h) {
            continue;
        }
        let jac = phi.jacobian_at(&x)?;
        let image = phi.eval(&x);
        let g2_gamma = gamma2.interpolate(&image)?;
        let gamma_at = |m: usize, i: usize, j: usize| -> f64 {
            gamma1.gamma(flat, m, i, j)
        };
        let gamma2_at = |m: usize, i: usize, j: usize| -> f64 {
            g2_gamma[m * dim * dim + i * dim + j]
        };
        // Second derivatives of phi by central differences.
        let mut second = vec![0.0f64; dim * dim * dim]; // [m][i][j]
        for i in 0..dim {
            for j in i..dim {
                let vals = if i == j {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    (phi.eval(&xp) + phi.eval(&xm) - phi.eval(&x) * 2.0) / (h * h)
                } else {
                    let mut xpp = x.clone();
                    let mut xpm = x.clone();
                    let mut xmp = x.clone();
                    let mut xmm = x.clone();
                    xpp[i] += h;
                    xpp[j] += h;
                    xpm[i] += h;
                    xpm[j] -= h;
                    xmp[i] -= h;
                    xmp[j] += h;
                    xmm[i] -= h;
                    xmm[j] -= h;
                    (phi.eval(&xpp) - phi.eval(&xpm) - phi.eval(&xmp) + phi.eval(&xmm))
                        / (4.0 * h * h)
                };
                for m in 0..dim {
                    second[m * dim * dim + i * dim + j] = vals[m];
                    second[m * dim * dim + j * dim + i] = vals[m];
                }
            }
        }
        for m in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    let mut rhs = 0.0;
                    for mu in 0..dim {
                        rhs += gamma_at(mu, i, j) * jac[(m, mu)];
                    }
                    for nu in 0..dim {
                        for la in 0..dim {
                            rhs -= gamma2_at(m, nu, la) * jac[(nu, i)] * jac[(la, j)];
                        }
                    }
                    let res = (second[m * dim * dim + i * dim + j] - rhs).abs();
                    worst = worst.max(res);
                }
            }
        }
        tested += 1;
    }
    if tested == 0 {
        return Err(FinslerError::Configuration(
            "no interior test nodes available for the residual".into(),
        ));
    }
    Ok(worst)
}

/// Outcome of a dilation comparison `d(phi p, phi q) vs a * d(p, q)`.
#[derive(Debug, Clone)]
pub struct DilationReport {
    pub factor: f64,
    pub pairs_tested: usize,
    pub worst_deviation: f64,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares computed distances of image pairs against `a` times the source
/// distances on seeded sample pairs. Pairs whose image leaves the domain are
/// rejected; if almost all do, that is a domain error.
pub fn dilation_check(
    f: &FinslerStructure,
    phi: &DiscreteMap,
    a: f64,
    pair_count: usize,
    seed: u64,
    opts: &DistanceOptions,
    tolerance: f64,
) -> Result<DilationReport> {
    if !(a.is_finite() && a > 0.0) {
        return Err(FinslerError::Configuration(format!(
            "dilation constant must be positive, got {a}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let domain = f.domain().clone();
    let mut report = DilationReport {
        factor: a,
        pairs_tested: 0,
        worst_deviation: 0.0,
        worst_pair: None,
        tolerance,
        pass: true,
    };
    let mut attempts = 0usize;
    while report.pairs_tested < pair_count {
        attempts += 1;
        if attempts > pair_count * 50 {
            return Err(FinslerError::outside(
                &[],
                "dilation images keep leaving the domain; shrink the sampling region",
            ));
        }
        let p = domain.sample(&mut rng);
        let q = domain.sample(&mut rng);
        if (&q - &p).norm() < 0.05 * domain.diameter() {
            continue;
        }
        let fp = phi.eval(&p);
        let fq = phi.eval(&q);
        if !domain.contains(&fp) || !domain.contains(&fq) {
            continue;
        }
        let d_source = distance_with_options(f, &p, &q, opts)?.value;
        let d_image = distance_with_options(f, &fp, &fq, opts)?.value;
        if d_source <= 0.0 {
            continue;
        }
        let deviation = (d_image - a * d_source).abs() / (a * d_source);
        if deviation > report.worst_deviation {
            report.worst_deviation = deviation;
            report.worst_pair = Some((p.iter().copied().collect(), q.iter().copied().collect()));
        }
        report.pairs_tested += 1;
    }
    report.pass = report.worst_deviation <= tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsler::{MetricSpec, Remark2Profile};
    use crate::quadrature::{QuadratureScheme, SphericalQuadrature};

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    fn cube(half: f64) -> Domain {
        Domain::cube(2, half).unwrap()
    }

    fn euclid_on(half: f64) -> FinslerStructure {
        FinslerStructure::from_spec_on(&MetricSpec::Euclidean { dim: 2 }, cube(half)).unwrap()
    }

    fn remark2_map(amplitude: f64, half: f64) -> DiscreteMap {
        let profile = Remark2Profile::new(amplitude).unwrap();
        DiscreteMap::new(
            cube(half),
            cube(half * 1.5),
            Arc::new(move |x: &DVector<f64>| dv(&[profile.f(x[0]), x[1]])),
            Some(1e-5),
        )
        .unwrap()
    }

    #[test]
    fn jacobian_identity_and_linear() {
        let id = DiscreteMap::identity(cube(1.0));
        let j = id.jacobian_at(&dv(&[0.2, -0.3])).unwrap();
        assert!((j - DMatrix::identity(2, 2)).abs().max() < 1e-10);

        let t = DMatrix::from_row_slice(2, 2, &[1.5, -0.4, 0.2, 0.9]);
        let lin = DiscreteMap::linear(cube(1.0), cube(3.0), t.clone()).unwrap();
        let j = lin.jacobian_at(&dv(&[0.1, 0.1])).unwrap();
        assert!((j - t).abs().max() < 1e-9);
    }

    #[test]
    fn jacobian_remark2_profile() {
        let phi = remark2_map(0.3, 1.0);
        let j = phi.jacobian_at(&dv(&[0.0, 0.0])).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.3, 0.0, 0.0, 1.0]);
        assert!((j - expected).abs().max() < 1e-9);
    }

    #[test]
    fn jacobian_margin_error() {
        let id = DiscreteMap::identity(cube(1.0));
        assert!(matches!(
            id.jacobian_at(&dv(&[1.0, 0.0])),
            Err(FinslerError::InsufficientMargin { .. })
        ));
    }

    #[test]
    fn jacobian_converges_at_second_order() {
        let map = DiscreteMap::new(
            cube(1.0),
            cube(3.0),
            Arc::new(|x: &DVector<f64>| dv(&[x[0].sin() + x[1] * x[1], x[1].cos()])),
            Some(1e-2),
        )
        .unwrap();
        let x = dv(&[0.3, -0.2]);
        let exact = DMatrix::from_row_slice(
            2,
            2,
            &[x[0].cos(), 2.0 * x[1], 0.0, -x[1].sin()],
        );
        let e1 = (map.jacobian_at(&x).unwrap() - &exact).abs().max();
        let e2 = (map.clone().with_step(5e-3).jacobian_at(&x).unwrap() - &exact)
            .abs()
            .max();
        let order = (e1 / e2).log2();
        assert!(order > 1.8, "order {order} (e1 {e1}, e2 {e2})");
    }

    #[test]
    fn pullback_rotation_isometry() {
        let f = euclid_on(1.0);
        let angle = 0.6f64;
        let rot = DMatrix::from_row_slice(
            2,
            2,
            &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()],
        );
        let phi = DiscreteMap::linear(cube(1.0), cube(1.0), rot).unwrap();
        let r = pullback_residual(&f, &f, &phi, &dv(&[0.2, 0.1]), 64).unwrap();
        assert!(r < 1e-9, "residual {r}");
    }

    #[test]
    fn pullback_remark2_isometry() {
        let f1 = FinslerStructure::from_spec(&MetricSpec::Remark2 { amplitude: 0.3 }).unwrap();
        let f2 = euclid_on(1.5);
        let phi = remark2_map(0.3, 1.0);
        let r = pullback_residual(&f1, &f2, &phi, &dv(&[0.4, -0.2]), 128).unwrap();
        assert!(r < 1e-8, "residual {r}");
    }

    #[test]
    fn pullback_detects_dilation() {
        let f = euclid_on(2.0);
        let phi = DiscreteMap::dilation(cube(2.0), cube(2.0), 2.0).unwrap();
        let r = pullback_residual(&f, &f, &phi, &dv(&[0.1, 0.1]), 64).unwrap();
        assert!((r - 1.0).abs() < 1e-9, "residual {r}");
    }

    #[test]
    fn blowup_linear_isometry_is_exact() {
        let f = euclid_on(1.0);
        let angle = -0.4f64;
        let rot = DMatrix::from_row_slice(
            2,
            2,
            &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()],
        );
        let phi = DiscreteMap::linear(cube(1.0), cube(1.0), rot).unwrap();
        let report =
            blowup_isometry_test(&f, &f, &phi, &dv(&[0.0, 0.0]), &[0.1, 0.05, 0.025], 64).unwrap();
        assert!(report.residuals.iter().all(|&r| r < 1e-12));
    }

    #[test]
    fn blowup_remark2_first_order() {
        let f1 = FinslerStructure::from_spec(&MetricSpec::Remark2 { amplitude: 0.3 }).unwrap();
        let f2 = euclid_on(1.5);
        let phi = remark2_map(0.3, 1.0);
        // At x1 = 0.5 the profile has nonvanishing second derivative, so the
        // secant residual decays at first order.
        let report = blowup_isometry_test(
            &f1,
            &f2,
            &phi,
            &dv(&[0.5, 0.1]),
            &[0.1, 0.05, 0.025],
            64,
        )
        .unwrap();
        assert!(report.monotone, "residuals {:?}", report.residuals);
        for order in &report.empirical_orders {
            assert!(*order > 0.9, "orders {:?}", report.empirical_orders);
        }
    }

    #[test]
    fn blowup_curved_map_converges_to_linear_residual() {
        let f = euclid_on(2.0);
        let phi = DiscreteMap::new(
            cube(2.0),
            cube(2.0),
            Arc::new(|x: &DVector<f64>| dv(&[x[0] + 0.1 * x[0] * x[0], x[1]])),
            Some(1e-6),
        )
        .unwrap();
        let x = dv(&[0.5, 0.0]);
        let report =
            blowup_isometry_test(&f, &f, &phi, &x, &[0.2, 0.1, 0.05, 0.025], 64).unwrap();
        // dphi = diag(1.1, 1): its pullback residual is 0.1 at u = e1.
        assert!((report.linear_residual - 0.1).abs() < 1e-6);
        for w in report.deltas.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(report.residuals.last().unwrap() - report.linear_residual < 5e-3);
    }

    #[test]
    fn blowup_scale_error() {
        let f = euclid_on(1.0);
        let phi = DiscreteMap::identity(cube(1.0));
        assert!(matches!(
            blowup_isometry_test(&f, &f, &phi, &dv(&[0.9, 0.9]), &[0.5, 0.25], 16),
            Err(FinslerError::Scale(_))
        ));
    }

    #[test]
    fn distortion_identity() {
        let f = euclid_on(1.0);
        let phi = DiscreteMap::identity(cube(1.0));
        let d = distortion_at(&f, &f, &phi, &dv(&[0.1, 0.2]), 256).unwrap();
        assert!((d.h - 1.0).abs() < 1e-9);
        assert!((d.mu - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distortion_matches_singular_values() {
        let f = euclid_on(4.0);
        let a = DMatrix::from_row_slice(2, 2, &[1.8, 0.6, -0.2, 0.7]);
        let phi = DiscreteMap::linear(cube(1.0), cube(4.0), a.clone()).unwrap();
        let d = distortion_at(&f, &f, &phi, &dv(&[0.0, 0.0]), 256).unwrap();
        let svd = a.svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        assert!((d.h - smax / smin).abs() < 1e-6, "H {} vs {}", d.h, smax / smin);
        assert!((d.mu - (smax * smin).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn distortion_of_dilation_is_conformal() {
        let f = euclid_on(2.0);
        let phi = DiscreteMap::dilation(cube(0.9), cube(2.0), 2.0).unwrap();
        let d = distortion_at(&f, &f, &phi, &dv(&[0.2, -0.1]), 256).unwrap();
        assert!((d.h - 1.0).abs() < 1e-9);
        assert!((d.mu - 2.0).abs() < 1e-9);
    }

    #[test]
    fn distortion_composition_with_dilation_preserves_h() {
        let f = euclid_on(4.0);
        let a = DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.0, 0.8]);
        let a2 = a.clone();
        let phi = DiscreteMap::linear(cube(1.0), cube(4.0), a).unwrap();
        let scaled = DiscreteMap::new(
            cube(1.0),
            cube(4.0),
            Arc::new(move |x: &DVector<f64>| &a2 * x * 1.7),
            None,
        )
        .unwrap();
        let x = dv(&[0.0, 0.0]);
        let d1 = distortion_at(&f, &f, &phi, &x, 256).unwrap();
        let d2 = distortion_at(&f, &f, &scaled, &x, 256).unwrap();
        assert!((d1.h - d2.h).abs() < 1e-9);
        assert!((d2.mu / d1.mu - 1.7).abs() < 1e-8);
        assert!(d1.h >= 1.0 && d2.h >= 1.0);
    }

    fn remark2_field(amplitude: f64, res: usize) -> MetricTensorField {
        let profile = Remark2Profile::new(amplitude).unwrap();
        MetricTensorField::from_fn(
            cube(1.0),
            &[res, res],
            crate::binet_legendre::Provenance::ClosedForm,
            |x| {
                let fp = profile.df(x[0]);
                crate::binet_legendre::SpdMatrix::new(DMatrix::from_row_slice(
                    2,
                    2,
                    &[fp * fp, 0.0, 0.0, 1.0],
                ))
            },
        )
        .unwrap()
    }

    fn identity_field(half: f64, res: usize) -> MetricTensorField {
        MetricTensorField::from_fn(
            cube(half),
            &[res, res],
            crate::binet_legendre::Provenance::ClosedForm,
            |_| Ok(crate::binet_legendre::SpdMatrix::identity(2)),
        )
        .unwrap()
    }

    #[test]
    fn christoffel_constant_field_vanishes() {
        let field = identity_field(1.0, 9);
        let gamma = christoffel_field(&field).unwrap();
        for flat in 0..gamma.node_count() {
            assert!(gamma.node_values(flat).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn christoffel_remark2_closed_form() {
        let profile = Remark2Profile::new(0.3).unwrap();
        let field = remark2_field(0.3, 41);
        let gamma = christoffel_field(&field).unwrap();
        for flat in 0..gamma.node_count() {
            if gamma.is_boundary(flat) {
                continue;
            }
            let x = gamma.node_point(flat);
            let expected = profile.d2f(x[0]) / profile.df(x[0]);
            assert!(
                (gamma.gamma(flat, 0, 0, 0) - expected).abs() < 5e-3,
                "Gamma^1_11 at {x:?}"
            );
            for (m, i, j) in [(0usize, 0usize, 1usize), (0, 1, 1), (1, 0, 0), (1, 0, 1), (1, 1, 1)]
            {
                assert!(gamma.gamma(flat, m, i, j).abs() < 1e-9, "Gamma {m}{i}{j}");
            }
        }
    }

    #[test]
    fn christoffel_requires_resolution() {
        let field = identity_field(1.0, 4);
        assert!(christoffel_field(&field).is_err());
    }

    #[test]
    fn transform_residual_identity_is_zero() {
        let g = remark2_field(0.3, 21);
        let phi = DiscreteMap::identity(cube(1.0)).with_step(1e-4);
        let r = christoffel_transform_residual(&g, &g, &phi).unwrap();
        assert!(r < 1e-7, "residual {r}");
    }

    #[test]
    fn transform_residual_remark2_decreases_with_refinement() {
        let phi = remark2_map(0.3, 1.0);
        let coarse = christoffel_transform_residual(
            &remark2_field(0.3, 21),
            &identity_field(1.5, 21),
            &phi.clone().with_step(2e-3),
        )
        .unwrap();
        let fine = christoffel_transform_residual(
            &remark2_field(0.3, 41),
            &identity_field(1.5, 41),
            &phi.with_step(1e-3),
        )
        .unwrap();
        assert!(
            fine < coarse / 2.0,
            "no first-order decrease: {coarse} -> {fine}"
        );
    }

    #[test]
    fn transform_residual_blind_to_flat_dilations() {
        // phi(x) = 2x between flat metrics: both sides of the rule vanish,
        // so the residual is ~0 even though phi is not an isometry.
        let g1 = identity_field(1.0, 21);
        let g2 = identity_field(2.0, 21);
        let phi = DiscreteMap::dilation(cube(1.0), cube(2.0), 2.0).unwrap();
        let r = christoffel_transform_residual(&g1, &g2, &phi).unwrap();
        assert!(r < 1e-9, "residual {r}");
    }

    #[test]
    fn dilation_check_minkowski_passes() {
        let f = FinslerStructure::from_spec(&MetricSpec::Polyhedral {
            dim: 2,
            vertices: vec![dv(&[1.0, 1.0]), dv(&[-1.0, 1.0]), dv(&[-1.0, -1.0]), dv(&[1.0, -1.0])],
        })
        .unwrap();
        let opts = DistanceOptions::default().with_resolution(61);
        for a in [0.5, 2.0] {
            let phi = DiscreteMap::dilation(cube(1.0), cube(1.0), a).unwrap();
            let report = dilation_check(&f, &phi, a, 12, 77, &opts, 0.005).unwrap();
            assert!(report.pass, "a = {a}: {report:?}");
        }
    }

    #[test]
    fn dilation_check_rejects_remark2() {
        let f = FinslerStructure::from_spec(&MetricSpec::Remark2 { amplitude: 0.3 }).unwrap();
        let phi = DiscreteMap::dilation(cube(1.0), cube(1.0), 2.0).unwrap();
        let opts = DistanceOptions::default().with_resolution(61);
        let report = dilation_check(&f, &phi, 2.0, 12, 77, &opts, 0.005).unwrap();
        assert!(!report.pass, "{report:?}");
        assert!(report.worst_pair.is_some());
        assert!(report.worst_deviation > 0.008);
    }

    #[test]
    fn grid_sampled_map_interpolates() {
        let res = vec![9usize, 9];
        let profile = Remark2Profile::new(0.3).unwrap();
        let mut values = Vec::new();
        for i in 0..9 {
            for j in 0..9 {
                let x = -1.0 + 2.0 * i as f64 / 8.0;
                let y = -1.0 + 2.0 * j as f64 / 8.0;
                values.push(dv(&[profile.f(x), y]));
            }
        }
        let phi =
            DiscreteMap::from_grid_samples(cube(1.0), cube(1.5), res, values).unwrap();
        // Interpolation is exact at nodes and close between them.
        let at_node = phi.eval(&dv(&[0.0, 0.5]));
        assert!((at_node[0] - profile.f(0.0)).abs() < 1e-12);
        let between = phi.eval(&dv(&[0.1, 0.1]));
        assert!((between[0] - profile.f(0.1)).abs() < 5e-3);
        assert!((between[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn pullback_to_bl_transfer() {
        // Small pullback residual implies the BL tensors transfer:
        // dphi^T g2(phi x) dphi is close to g1(x).
        let f1 = FinslerStructure::from_spec(&MetricSpec::Remark2 { amplitude: 0.3 }).unwrap();
        let f2 = euclid_on(1.5);
        let phi = remark2_map(0.3, 1.0);
        let q = SphericalQuadrature::build(2, QuadratureScheme::UniformAngle, 512).unwrap();
        let x = dv(&[0.3, -0.4]);
        let residual = pullback_residual(&f1, &f2, &phi, &x, 128).unwrap();
        assert!(residual < 1e-8);
        let g1 = crate::binet_legendre::bl_tensor_at(&f1, &x, &q).unwrap();
        let g2 = crate::binet_legendre::bl_tensor_at(&f2, &phi.eval(&x), &q).unwrap();
        let jac = phi.jacobian_at(&x).unwrap();
        let transferred = jac.transpose() * g2.as_matrix() * &jac;
        assert!((transferred - g1.as_matrix()).abs().max() < 1e-6);
    }
}
