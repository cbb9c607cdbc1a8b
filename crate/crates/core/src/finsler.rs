//! Continuous Finsler structures: evaluation, axiom checking, and the
//! built-in metric zoo.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::domain::Domain;
use crate::error::{FinslerError, Result};
use crate::polytope::ConvexPolytope;
use crate::sampling::{seeded_rng, unit_directions};

/// Shared evaluator `(x, v) -> F(x, v)`.
pub type Evaluator = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;

static NEXT_STRUCTURE_ID: AtomicU64 = AtomicU64::new(1);

/// Which closed-form family a structure belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Riemannian,
    Minkowski,
    Randers,
    Funk,
    Polyhedral,
    Custom,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Riemannian => "riemannian",
            MetricKind::Minkowski => "minkowski",
            MetricKind::Randers => "randers",
            MetricKind::Funk => "funk",
            MetricKind::Polyhedral => "polyhedral",
            MetricKind::Custom => "custom",
        }
    }
}

/// A Finsler structure `F(x, v)` on a box domain, carried as an evaluator
/// plus metadata. The comparability constant `C0 >= 1` asserts
/// `|v|/C0 <= F(x, v) <= C0 |v|` on the domain.
#[derive(Clone)]
pub struct FinslerStructure {
    id: u64,
    domain: Domain,
    evaluator: Evaluator,
    reversible: bool,
    kind: MetricKind,
    comparability: f64,
    position_independent: bool,
}

impl std::fmt::Debug for FinslerStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FinslerStructure")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .field("dim", &self.domain.dim())
            .field("reversible", &self.reversible)
            .field("comparability", &self.comparability)
            .finish()
    }
}

impl FinslerStructure {
    /// Wraps a user evaluator. When `comparability` is `None` the constant
    /// is estimated by sampling `F` on unit directions over the domain and
    /// adding a 5% safety margin.
    pub fn custom(
        domain: Domain,
        evaluator: Evaluator,
        reversible: bool,
        kind: MetricKind,
        comparability: Option<f64>,
    ) -> Result<Self> {
        let comparability = match comparability {
            Some(c) => {
                if !(c.is_finite() && c >= 1.0) {
                    return Err(FinslerError::InvalidSpec(format!(
                        "comparability constant must be >= 1, got {c}"
                    )));
                }
                c
            }
            None => estimate_comparability(&domain, evaluator.as_ref())?,
        };
        Ok(FinslerStructure {
            id: NEXT_STRUCTURE_ID.fetch_add(1, Ordering::Relaxed),
            domain,
            evaluator,
            reversible,
            kind,
            comparability,
            position_independent: false,
        })
    }

    /// Builds a zoo metric on its default domain.
    pub fn from_spec(spec: &MetricSpec) -> Result<Self> {
        let domain = spec.default_domain()?;
        Self::from_spec_on(spec, domain)
    }

    /// Builds a zoo metric on an explicit domain.
    pub fn from_spec_on(spec: &MetricSpec, domain: Domain) -> Result<Self> {
        spec.validate(&domain)?;
        let dim = domain.dim();
        let (evaluator, reversible, kind, position_independent): (Evaluator, bool, MetricKind, bool) =
            match spec {
                MetricSpec::Euclidean { .. } => {
                    (Arc::new(|_: &DVector<f64>, v: &DVector<f64>| v.norm()), true, MetricKind::Minkowski, true)
                }
                MetricSpec::Ellipsoid { h } => {
                    let h = h.clone();
                    (
                        Arc::new(move |_: &DVector<f64>, v: &DVector<f64>| (v.dot(&(&h * v))).max(0.0).sqrt()),
                        true,
                        MetricKind::Riemannian,
                        true,
                    )
                }
                MetricSpec::PNorm { p, .. } => {
                    let p = *p;
                    (
                        Arc::new(move |_: &DVector<f64>, v: &DVector<f64>| {
                            v.iter().map(|c| c.abs().powf(p)).sum::<f64>().powf(1.0 / p)
                        }),
                        true,
                        MetricKind::Minkowski,
                        true,
                    )
                }
                MetricSpec::Polyhedral { vertices, .. } => {
                    let poly = ConvexPolytope::from_points(dim, vertices)?;
                    let symmetric = polytope_is_symmetric(&poly);
                    (
                        Arc::new(move |_: &DVector<f64>, v: &DVector<f64>| poly.gauge(v)),
                        symmetric,
                        MetricKind::Polyhedral,
                        true,
                    )
                }
                MetricSpec::Randers { h, b } => {
                    let h = h.clone();
                    let b = b.clone();
                    let reversible = b.norm() == 0.0;
                    (
                        Arc::new(move |_: &DVector<f64>, v: &DVector<f64>| {
                            (v.dot(&(&h * v))).max(0.0).sqrt() + b.dot(v)
                        }),
                        reversible,
                        MetricKind::Randers,
                        true,
                    )
                }
                MetricSpec::Funk { .. } => (
                    Arc::new(|x: &DVector<f64>, v: &DVector<f64>| {
                        let one_minus = 1.0 - x.norm_squared();
                        let xv = x.dot(v);
                        ((one_minus * v.norm_squared() + xv * xv).max(0.0).sqrt() + xv) / one_minus
                    }),
                    false,
                    MetricKind::Funk,
                    false,
                ),
                MetricSpec::Remark2 { amplitude } => {
                    let profile = Remark2Profile::new(*amplitude)?;
                    (
                        Arc::new(move |x: &DVector<f64>, v: &DVector<f64>| {
                            let fp = profile.df(x[0]);
                            (fp * fp * v[0] * v[0] + v[1] * v[1]).sqrt()
                        }),
                        true,
                        MetricKind::Riemannian,
                        false,
                    )
                }
            };
        let comparability = estimate_comparability(&domain, evaluator.as_ref())?;
        Ok(FinslerStructure {
            id: NEXT_STRUCTURE_ID.fetch_add(1, Ordering::Relaxed),
            domain,
            evaluator,
            reversible,
            kind,
            comparability,
            position_independent,
        })
    }

    /// Stable identity used to key caches; unique per constructed structure.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn is_reversible(&self) -> bool {
        self.reversible
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn comparability_constant(&self) -> f64 {
        self.comparability
    }

    /// True for Minkowski-type structures whose evaluator ignores `x`.
    pub fn is_position_independent(&self) -> bool {
        self.position_independent
    }

    /// Checked evaluation of `F(x, v)`.
    pub fn evaluate(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        if x.iter().any(|c| !c.is_finite()) || v.iter().any(|c| !c.is_finite()) {
            return Err(FinslerError::NonFiniteInput("evaluate(x, v)".into()));
        }
        if x.len() != self.dim() || v.len() != self.dim() {
            return Err(FinslerError::Configuration(format!(
                "expected dimension {}, got x: {}, v: {}",
                self.dim(),
                x.len(),
                v.len()
            )));
        }
        if !self.domain.contains(x) {
            return Err(FinslerError::outside(x.as_slice(), "evaluate"));
        }
        Ok((self.evaluator)(x, v))
    }

    /// Unchecked evaluation for hot loops; callers keep `x` in the domain.
    #[inline]
    pub fn value(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        debug_assert!(self.domain.contains(x));
        (self.evaluator)(x, v)
    }

    /// The structure scaled to `lambda * F`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(FinslerError::InvalidSpec(format!(
                "scale factor must be positive, got {lambda}"
            )));
        }
        let inner = self.evaluator.clone();
        let comparability = (self.comparability * lambda.max(1.0 / lambda)).max(1.0);
        Ok(FinslerStructure {
            id: NEXT_STRUCTURE_ID.fetch_add(1, Ordering::Relaxed),
            domain: self.domain.clone(),
            evaluator: Arc::new(move |x, v| lambda * inner(x, v)),
            reversible: self.reversible,
            kind: MetricKind::Custom,
            comparability,
            position_independent: self.position_independent,
        })
    }

    /// `F_T(x, v) = F(x, T v)`: the fiberwise pullback by an invertible
    /// linear map. Positions are untouched.
    pub fn precomposed_linear(&self, t: &DMatrix<f64>) -> Result<Self> {
        if t.nrows() != self.dim() || t.ncols() != self.dim() {
            return Err(FinslerError::Configuration(format!(
                "linear map must be {0} x {0}",
                self.dim()
            )));
        }
        if t.clone().lu().determinant().abs() < 1e-14 {
            return Err(FinslerError::DegenerateMap(
                "precomposition matrix is singular".into(),
            ));
        }
        let inner = self.evaluator.clone();
        let t = t.clone();
        let evaluator: Evaluator = Arc::new(move |x, v| inner(x, &(&t * v)));
        let comparability = estimate_comparability(&self.domain, evaluator.as_ref())?;
        Ok(FinslerStructure {
            id: NEXT_STRUCTURE_ID.fetch_add(1, Ordering::Relaxed),
            domain: self.domain.clone(),
            evaluator,
            reversible: self.reversible,
            kind: MetricKind::Custom,
            comparability,
            position_independent: self.position_independent,
        })
    }

    /// Samples the Finsler axioms (positive homogeneity, subadditivity,
    /// comparability) and reports the worst residuals.
    pub fn check_axioms(&self, sample_count: usize, seed: u64) -> Result<AxiomReport> {
        if sample_count == 0 {
            return Err(FinslerError::Configuration(
                "sample_count must be >= 1".into(),
            ));
        }
        let tolerance = 1e-9;
        let mut rng = seeded_rng(seed);
        let dim = self.dim();
        let mut report = AxiomReport {
            samples: sample_count,
            tolerance,
            homogeneity_residual: 0.0,
            subadditivity_violation: 0.0,
            comparability_violation: 0.0,
            homogeneity_pass: true,
            subadditivity_pass: true,
            comparability_pass: true,
        };
        let c0 = self.comparability;
        for _ in 0..sample_count {
            let x = self.domain.sample(&mut rng);
            let v = random_vector(dim, &mut rng);
            let w = random_vector(dim, &mut rng);
            let lambda: f64 = rng.random_range(0.0..4.0);

            let fv = self.value(&x, &v);
            let fw = self.value(&x, &w);
            let flv = self.value(&x, &(&v * lambda));
            let fvw = self.value(&x, &(&v + &w));
            if ![fv, fw, flv, fvw].iter().all(|t| t.is_finite()) {
                return Err(FinslerError::NonFiniteInput(
                    "evaluator produced a non-finite value".into(),
                ));
            }

            let hom = (flv - lambda * fv).abs();
            report.homogeneity_residual = report.homogeneity_residual.max(hom);
            if hom > tolerance * (1.0 + lambda * fv.abs()) {
                report.homogeneity_pass = false;
            }

            let sub = (fvw - fv - fw).max(0.0);
            report.subadditivity_violation = report.subadditivity_violation.max(sub);
            if sub > tolerance * (1.0 + fv.abs() + fw.abs()) {
                report.subadditivity_pass = false;
            }

            let vn = v.norm();
            if vn > 1e-12 {
                let upper = (fv - c0 * vn).max(0.0);
                let lower = (vn / c0 - fv).max(0.0);
                let comp = (upper.max(lower)) / vn;
                report.comparability_violation = report.comparability_violation.max(comp);
                if comp > tolerance {
                    report.comparability_pass = false;
                }
            }
        }
        Ok(report)
    }

    /// `max_u max(F(x,-u)/F(x,u), F(x,u)/F(x,-u))` over sampled unit
    /// directions; equals 1 on the sample iff the structure is reversible
    /// there.
    pub fn reversibility_defect(&self, x: &DVector<f64>, direction_count: usize) -> Result<f64> {
        if direction_count < 4 {
            return Err(FinslerError::Configuration(
                "direction_count must be >= 4".into(),
            ));
        }
        if !self.domain.contains(x) {
            return Err(FinslerError::outside(x.as_slice(), "reversibility_defect"));
        }
        let mut defect: f64 = 1.0;
        for u in unit_directions(self.dim(), direction_count) {
            let fwd = self.value(x, &u);
            let bwd = self.value(x, &(-&u));
            if fwd <= 0.0 || bwd <= 0.0 {
                return Err(FinslerError::InvalidStructure(format!(
                    "non-positive value on a unit direction: F = {} / {}",
                    fwd, bwd
                )));
            }
            defect = defect.max(fwd / bwd).max(bwd / fwd);
        }
        Ok(defect)
    }
}

fn random_vector<R: Rng>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| rng.random_range(-1.0..1.0)))
}

fn polytope_is_symmetric(poly: &ConvexPolytope) -> bool {
    unit_directions(poly.dim(), 64).iter().all(|u| {
        let f = poly.gauge(u);
        let b = poly.gauge(&(-u));
        (f - b).abs() <= 1e-12 * (1.0 + f.abs())
    })
}

/// Samples `F` on unit directions across the domain and returns
/// `max(max F, 1/min F)` with a 5% safety margin.
fn estimate_comparability(
    domain: &Domain,
    evaluator: &(dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync),
) -> Result<f64> {
    let dim = domain.dim();
    let dirs = unit_directions(dim, if dim == 2 { 256 } else { 512 });
    let mut rng = seeded_rng(0xC0_E57);
    let mut points = vec![domain.center()];
    // Corners included explicitly: comparability extremes of
    // position-dependent metrics sit on the boundary.
    if dim <= 10 {
        for mask in 0..(1usize << dim) {
            points.push(DVector::from_iterator(
                dim,
                (0..dim).map(|a| {
                    if mask >> a & 1 == 1 {
                        domain.upper()[a]
                    } else {
                        domain.lower()[a]
                    }
                }),
            ));
        }
    }
    for _ in 0..48 {
        points.push(domain.sample(&mut rng));
    }
    let mut max_f = f64::NEG_INFINITY;
    let mut min_f = f64::INFINITY;
    for x in &points {
        for u in &dirs {
            let f = evaluator(x, u);
            if !f.is_finite() {
                return Err(FinslerError::NonFiniteInput(
                    "evaluator produced a non-finite value while estimating C0".into(),
                ));
            }
            max_f = max_f.max(f);
            min_f = min_f.min(f);
        }
    }
    if min_f <= 0.0 {
        return Err(FinslerError::InvalidStructure(format!(
            "F is non-positive on a unit direction (min {min_f}); not a Finsler structure"
        )));
    }
    Ok((max_f.max(1.0 / min_f).max(1.0)) * 1.05)
}

/// Worst sampled residuals for the three Finsler axioms.
#[derive(Debug, Clone)]
pub struct AxiomReport {
    pub samples: usize,
    pub tolerance: f64,
    pub homogeneity_residual: f64,
    pub subadditivity_violation: f64,
    pub comparability_violation: f64,
    pub homogeneity_pass: bool,
    pub subadditivity_pass: bool,
    pub comparability_pass: bool,
}

impl AxiomReport {
    pub fn pass(&self) -> bool {
        self.homogeneity_pass && self.subadditivity_pass && self.comparability_pass
    }
}

/// Declarative specification of a zoo metric.
#[derive(Debug, Clone)]
pub enum MetricSpec {
    Euclidean { dim: usize },
    Ellipsoid { h: DMatrix<f64> },
    PNorm { dim: usize, p: f64 },
    Polyhedral { dim: usize, vertices: Vec<DVector<f64>> },
    Randers { h: DMatrix<f64>, b: DVector<f64> },
    Funk { dim: usize },
    Remark2 { amplitude: f64 },
}

impl MetricSpec {
    pub fn dim(&self) -> usize {
        match self {
            MetricSpec::Euclidean { dim } | MetricSpec::PNorm { dim, .. } => *dim,
            MetricSpec::Ellipsoid { h } => h.nrows(),
            MetricSpec::Polyhedral { dim, .. } => *dim,
            MetricSpec::Randers { h, .. } => h.nrows(),
            MetricSpec::Funk { dim } => *dim,
            MetricSpec::Remark2 { .. } => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetricSpec::Euclidean { .. } => "euclidean",
            MetricSpec::Ellipsoid { .. } => "ellipsoid",
            MetricSpec::PNorm { .. } => "p-norm",
            MetricSpec::Polyhedral { .. } => "polyhedral",
            MetricSpec::Randers { .. } => "randers",
            MetricSpec::Funk { .. } => "funk",
            MetricSpec::Remark2 { .. } => "remark2",
        }
    }

    /// Default working domain for the metric. The Funk metric lives on the
    /// open unit ball, so its default box is strictly inside it.
    pub fn default_domain(&self) -> Result<Domain> {
        match self {
            MetricSpec::Funk { dim } => {
                let half = 0.85 / (*dim as f64).sqrt();
                Domain::cube(*dim, half)
            }
            other => Domain::cube(other.dim(), 1.0),
        }
    }

    fn validate(&self, domain: &Domain) -> Result<()> {
        let dim = self.dim();
        if domain.dim() != dim {
            return Err(FinslerError::Configuration(format!(
                "domain dimension {} does not match metric dimension {dim}",
                domain.dim()
            )));
        }
        match self {
            MetricSpec::Ellipsoid { h } => validate_spd("ellipsoid h", h),
            MetricSpec::PNorm { p, .. } => {
                if !(p.is_finite() && *p >= 1.0) {
                    return Err(FinslerError::InvalidSpec(format!(
                        "p-norm exponent must satisfy p >= 1, got {p}"
                    )));
                }
                Ok(())
            }
            MetricSpec::Randers { h, b } => {
                validate_spd("randers h", h)?;
                if b.len() != h.nrows() {
                    return Err(FinslerError::InvalidSpec(
                        "randers drift dimension does not match h".into(),
                    ));
                }
                // Positivity of sqrt(v^T h v) + <b, v> is equivalent to the
                // dual norm bound b^T h^{-1} b < 1.
                let hinv = h
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| FinslerError::InvalidSpec("randers h is singular".into()))?;
                let dual = b.dot(&(&hinv * b));
                if dual >= 1.0 {
                    return Err(FinslerError::InvalidSpec(format!(
                        "randers drift too strong: |b|_h^2 = {dual} >= 1 (metric not positive)"
                    )));
                }
                Ok(())
            }
            MetricSpec::Funk { .. } => {
                let corner = DVector::from_iterator(
                    dim,
                    domain
                        .lower()
                        .iter()
                        .zip(domain.upper())
                        .map(|(l, u)| l.abs().max(u.abs())),
                );
                if corner.norm() >= 1.0 {
                    return Err(FinslerError::InvalidSpec(
                        "funk metric domain must sit strictly inside the unit ball".into(),
                    ));
                }
                Ok(())
            }
            MetricSpec::Remark2 { amplitude } => {
                if !(amplitude.is_finite() && amplitude.abs() < 1.0) {
                    return Err(FinslerError::InvalidSpec(format!(
                        "remark2 amplitude must satisfy |a| < 1, got {amplitude}"
                    )));
                }
                Ok(())
            }
            MetricSpec::Polyhedral { .. } | MetricSpec::Euclidean { .. } => Ok(()),
        }
    }
}

fn validate_spd(what: &str, h: &DMatrix<f64>) -> Result<()> {
    if h.nrows() != h.ncols() {
        return Err(FinslerError::InvalidSpec(format!("{what} must be square")));
    }
    let sym_err = (h - h.transpose()).abs().max();
    if sym_err > 1e-12 * (1.0 + h.abs().max()) {
        return Err(FinslerError::InvalidSpec(format!(
            "{what} is not symmetric (defect {sym_err:.3e})"
        )));
    }
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(FinslerError::InvalidSpec(format!(
            "{what} is not positive definite"
        )));
    }
    Ok(())
}

/// The plane diffeomorphism profile `f(t) = t + a sin t` behind the
/// `remark2` zoo metric `g = f'(x1)^2 dx1^2 + dx2^2`.
#[derive(Debug, Clone, Copy)]
pub struct Remark2Profile {
    amplitude: f64,
}

impl Remark2Profile {
    pub fn new(amplitude: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude.abs() < 1.0) {
            return Err(FinslerError::InvalidSpec(format!(
                "remark2 amplitude must satisfy |a| < 1, got {amplitude}"
            )));
        }
        Ok(Remark2Profile { amplitude })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn f(&self, t: f64) -> f64 {
        t + self.amplitude * t.sin()
    }

    pub fn df(&self, t: f64) -> f64 {
        1.0 + self.amplitude * t.cos()
    }

    pub fn d2f(&self, t: f64) -> f64 {
        -self.amplitude * t.sin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    fn euclidean2() -> FinslerStructure {
        FinslerStructure::from_spec(&MetricSpec::Euclidean { dim: 2 }).unwrap()
    }

    fn randers_half() -> FinslerStructure {
        FinslerStructure::from_spec(&MetricSpec::Randers {
            h: DMatrix::identity(2, 2),
            b: dv(&[0.5, 0.0]),
        })
        .unwrap()
    }

    fn square_norm() -> FinslerStructure {
        FinslerStructure::from_spec(&MetricSpec::Polyhedral {
            dim: 2,
            vertices: vec![dv(&[1.0, 1.0]), dv(&[-1.0, 1.0]), dv(&[-1.0, -1.0]), dv(&[1.0, -1.0])],
        })
        .unwrap()
    }

    #[test]
    fn evaluate_pythagorean() {
        let f = euclidean2();
        let x = dv(&[0.0, 0.0]);
        assert_eq!(f.evaluate(&x, &dv(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(f.evaluate(&x, &dv(&[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_randers_drift() {
        let f = randers_half();
        let x = dv(&[0.0, 0.0]);
        assert!((f.evaluate(&x, &dv(&[1.0, 0.0])).unwrap() - 1.5).abs() < 1e-15);
        assert!((f.evaluate(&x, &dv(&[-1.0, 0.0])).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn evaluate_rejects_bad_inputs() {
        let f = euclidean2();
        assert!(matches!(
            f.evaluate(&dv(&[2.0, 0.0]), &dv(&[1.0, 0.0])),
            Err(FinslerError::OutsideDomain { .. })
        ));
        assert!(matches!(
            f.evaluate(&dv(&[f64::NAN, 0.0]), &dv(&[1.0, 0.0])),
            Err(FinslerError::NonFiniteInput(_))
        ));
    }

    #[test]
    fn axioms_pass_for_norms() {
        for f in [euclidean2(), randers_half(), square_norm()] {
            let report = f.check_axioms(500, 11).unwrap();
            assert!(report.pass(), "{:?} failed {report:?}", f.kind());
        }
    }

    #[test]
    fn axioms_catch_subadditivity_failure() {
        // F(v) = (sqrt|v1| + sqrt|v2|)^2 is homogeneous but not subadditive:
        // the pair v = e1, w = e2 gives F(v + w) = 4 > F(v) + F(w) = 2.
        let domain = Domain::cube(2, 1.0).unwrap();
        let f = FinslerStructure::custom(
            domain,
            Arc::new(|_, v: &DVector<f64>| {
                let s = v[0].abs().sqrt() + v[1].abs().sqrt();
                s * s
            }),
            true,
            MetricKind::Custom,
            None,
        )
        .unwrap();
        // Direct-evaluation oracle on the canonical pair.
        let x = dv(&[0.0, 0.0]);
        let direct =
            f.value(&x, &dv(&[1.0, 1.0])) - f.value(&x, &dv(&[1.0, 0.0])) - f.value(&x, &dv(&[0.0, 1.0]));
        assert!((direct - 2.0).abs() < 1e-12);
        let report = f.check_axioms(2000, 5).unwrap();
        assert!(!report.subadditivity_pass);
        assert!(report.subadditivity_violation > 0.1);
        assert!(report.homogeneity_pass);
    }

    #[test]
    fn axioms_catch_positivity_failure() {
        // F(v) = v1 vanishes on e2 and is negative on -e1.
        let domain = Domain::cube(2, 1.0).unwrap();
        let f = FinslerStructure::custom(
            domain,
            Arc::new(|_, v: &DVector<f64>| v[0]),
            false,
            MetricKind::Custom,
            Some(2.0),
        )
        .unwrap();
        let report = f.check_axioms(500, 3).unwrap();
        assert!(!report.comparability_pass);
    }

    #[test]
    fn reversibility_defects() {
        let x = dv(&[0.0, 0.0]);
        assert!((euclidean2().reversibility_defect(&x, 64).unwrap() - 1.0).abs() < 1e-12);
        assert!((square_norm().reversibility_defect(&x, 64).unwrap() - 1.0).abs() < 1e-12);
        // Grid-search oracle: (1 + cos t / 2)/(1 - cos t / 2) peaks at t = 0
        // with value 3; the sampled direction set contains e1.
        let defect = randers_half().reversibility_defect(&x, 360).unwrap();
        assert!((defect - 3.0).abs() < 1e-12);
        let mut oracle: f64 = 1.0;
        for k in 0..100_000 {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 100_000.0;
            let fwd = 1.0 + 0.5 * t.cos();
            let bwd = 1.0 - 0.5 * t.cos();
            oracle = oracle.max(fwd / bwd).max(bwd / fwd);
        }
        assert!(defect <= oracle + 1e-12);
        assert!(oracle - defect < 1e-6);
    }

    #[test]
    fn zoo_flags_and_constants() {
        assert!(euclidean2().is_reversible());
        assert!(!randers_half().is_reversible());
        assert!(square_norm().is_reversible());
        // Randers C0: F ranges over [0.5, 1.5] on the circle, so the
        // estimate is 2 plus the 5% margin.
        let c0 = randers_half().comparability_constant();
        assert!((c0 - 2.1).abs() < 1e-9, "c0 = {c0}");
    }

    #[test]
    fn zoo_rejects_invalid_specs() {
        assert!(FinslerStructure::from_spec(&MetricSpec::Randers {
            h: DMatrix::identity(2, 2),
            b: dv(&[1.0, 0.0]),
        })
        .is_err());
        assert!(FinslerStructure::from_spec(&MetricSpec::Polyhedral {
            dim: 2,
            vertices: vec![dv(&[2.0, 1.0]), dv(&[4.0, 1.0]), dv(&[3.0, 2.0])],
        })
        .is_err());
        assert!(FinslerStructure::from_spec(&MetricSpec::PNorm { dim: 2, p: 0.5 }).is_err());
    }

    #[test]
    fn funk_metric_normalizes_at_origin_and_satisfies_axioms() {
        let f = FinslerStructure::from_spec(&MetricSpec::Funk { dim: 2 }).unwrap();
        let origin = dv(&[0.0, 0.0]);
        for u in unit_directions(2, 32) {
            assert!((f.value(&origin, &u) - 1.0).abs() < 1e-12);
        }
        let report = f.check_axioms(1000, 17).unwrap();
        assert!(report.pass(), "{report:?}");
        assert!(!f.is_reversible());
        let defect = f.reversibility_defect(&dv(&[0.3, 0.1]), 128).unwrap();
        assert!(defect > 1.01);
    }

    #[test]
    fn remark2_with_zero_amplitude_is_euclidean() {
        let f = FinslerStructure::from_spec(&MetricSpec::Remark2 { amplitude: 0.0 }).unwrap();
        let x = dv(&[0.4, -0.2]);
        assert!((f.value(&x, &dv(&[3.0, 4.0])) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn remark2_profile_metric() {
        let f = FinslerStructure::from_spec(&MetricSpec::Remark2 { amplitude: 0.3 }).unwrap();
        let p = Remark2Profile::new(0.3).unwrap();
        let x = dv(&[0.25, 0.0]);
        let fp = p.df(0.25);
        assert!((f.value(&x, &dv(&[1.0, 0.0])) - fp).abs() < 1e-14);
        assert!((f.value(&x, &dv(&[0.0, 1.0])) - 1.0).abs() < 1e-14);
        let report = f.check_axioms(500, 23).unwrap();
        assert!(report.pass());
    }

    #[test]
    fn scaled_structure() {
        let f = euclidean2();
        let g = f.scaled(2.5).unwrap();
        let x = dv(&[0.0, 0.0]);
        assert!((g.value(&x, &dv(&[3.0, 4.0])) - 12.5).abs() < 1e-12);
        assert!(f.scaled(-1.0).is_err());
    }

    #[test]
    fn precomposed_linear_structure() {
        let f = euclidean2();
        let t = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let g = f.precomposed_linear(&t).unwrap();
        let x = dv(&[0.0, 0.0]);
        assert!((g.value(&x, &dv(&[1.0, 0.0])) - 2.0).abs() < 1e-14);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(f.precomposed_linear(&singular).is_err());
    }
}
