//! Convex polytopes with the origin in their interior: hulls, gauge
//! functions, and exact volume / second-moment integrals.
//!
//! Moments are assembled from an origin fan over the boundary facets. Each
//! simplex with one vertex at the origin contributes
//! `vol * (sum_k v_k v_k^T + s s^T) / ((n+1)(n+2))` with `s` the vertex sum,
//! a closed form that the test module pins against a Monte-Carlo oracle
//! before anything else trusts it.

use nalgebra::{DMatrix, DVector};

use crate::error::{FinslerError, Result};

const PLANE_TOL: f64 = 1e-9;

/// A facet of the polytope, stored as the functional `a . x <= 1`.
#[derive(Debug, Clone)]
pub struct Facet {
    /// Outward functional normalized so the facet plane is `a . x = 1`.
    pub functional: DVector<f64>,
    /// Indices into the hull vertex list, ordered around the facet.
    pub vertices: Vec<usize>,
}

/// Convex polytope in dimension 2 or 3 with the origin strictly inside.
#[derive(Debug, Clone)]
pub struct ConvexPolytope {
    dim: usize,
    vertices: Vec<DVector<f64>>,
    facets: Vec<Facet>,
}

impl ConvexPolytope {
    /// Builds the convex hull of `points` and validates that the origin is
    /// strictly interior.
    pub fn from_points(dim: usize, points: &[DVector<f64>]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(FinslerError::Configuration(format!(
                "polytope dimension {dim} not supported (need 2 or 3)"
            )));
        }
        for p in points {
            if p.len() != dim {
                return Err(FinslerError::InvalidSpec(format!(
                    "vertex of length {} in dimension {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(FinslerError::NonFiniteInput("polytope vertex".into()));
            }
        }
        let points = dedup_points(points);
        let (vertices, facets) = match dim {
            2 => hull_2d(&points)?,
            _ => hull_3d(&points)?,
        };
        let poly = ConvexPolytope {
            dim,
            vertices,
            facets,
        };
        poly.check_origin_interior()?;
        Ok(poly)
    }

    fn check_origin_interior(&self) -> Result<()> {
        // Facet functionals are a . x = 1 on the facet; the origin evaluates
        // to 0 < 1 automatically, so interiority reduces to every facet
        // having been normalizable (offset > 0), which hull construction
        // verifies. Re-check here against roundoff.
        for f in &self.facets {
            if !f.functional.iter().all(|c| c.is_finite()) {
                return Err(FinslerError::InvalidSpec(
                    "origin is not strictly inside the polytope".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Minkowski gauge of the body: `max_i a_i . v`, positively homogeneous,
    /// 1 exactly on the boundary.
    pub fn gauge(&self, v: &DVector<f64>) -> f64 {
        self.facets
            .iter()
            .map(|f| f.functional.dot(v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Exact volume and second-moment matrix `\int_P v v^T dv` via an origin
    /// fan over the facet triangulation.
    pub fn volume_and_second_moment(&self) -> Result<(f64, DMatrix<f64>)> {
        let n = self.dim;
        let mut volume = 0.0;
        let mut moment = DMatrix::zeros(n, n);
        let denom = ((n + 1) * (n + 2)) as f64;
        for simplex in self.boundary_simplices() {
            let vol = simplex_signed_volume(&simplex);
            if vol.abs() < 1e-300 {
                continue; // degenerate sliver, contributes nothing
            }
            let mut s = DVector::zeros(n);
            let mut local = DMatrix::zeros(n, n);
            for v in &simplex {
                local += v * v.transpose();
                s += v;
            }
            local += &s * s.transpose();
            moment += local * (vol / denom);
            volume += vol;
        }
        if volume <= 0.0 {
            return Err(FinslerError::InvalidSpec(
                "polytope has non-positive volume".into(),
            ));
        }
        Ok((volume, moment))
    }

    /// Boundary facets triangulated and fanned from the origin; each entry
    /// holds the non-origin vertices of one simplex, outward-oriented.
    fn boundary_simplices(&self) -> Vec<Vec<DVector<f64>>> {
        let mut simplices = Vec::new();
        for f in &self.facets {
            match self.dim {
                2 => {
                    let a = self.vertices[f.vertices[0]].clone();
                    let b = self.vertices[f.vertices[1]].clone();
                    simplices.push(vec![a, b]);
                }
                _ => {
                    let anchor = self.vertices[f.vertices[0]].clone();
                    for w in f.vertices.windows(2).skip(1) {
                        simplices.push(vec![
                            anchor.clone(),
                            self.vertices[w[0]].clone(),
                            self.vertices[w[1]].clone(),
                        ]);
                    }
                }
            }
        }
        simplices
    }
}

fn dedup_points(points: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for p in points {
        if !out.iter().any(|q| (p - q).norm() < 1e-12) {
            out.push(p.clone());
        }
    }
    out
}

/// Signed volume of the simplex spanned by the origin and `verts`.
fn simplex_signed_volume(verts: &[DVector<f64>]) -> f64 {
    let n = verts.len();
    let mut m = DMatrix::zeros(n, n);
    for (j, v) in verts.iter().enumerate() {
        m.set_column(j, v);
    }
    let factorial: f64 = (1..=n).map(|k| k as f64).product();
    m.determinant() / factorial
}

/// Monotone-chain hull; facets are CCW edges with outward functionals.
fn hull_2d(points: &[DVector<f64>]) -> Result<(Vec<DVector<f64>>, Vec<Facet>)> {
    if points.len() < 3 {
        return Err(FinslerError::InvalidSpec(format!(
            "2-d polytope needs at least 3 distinct vertices, got {}",
            points.len()
        )));
    }
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        (points[a][0], points[a][1])
            .partial_cmp(&(points[b][0], points[b][1]))
            .unwrap()
    });
    let cross = |o: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let build = |iter: &mut dyn Iterator<Item = usize>| {
        let mut chain: Vec<usize> = Vec::new();
        for i in iter {
            while chain.len() >= 2
                && cross(
                    &points[chain[chain.len() - 2]],
                    &points[chain[chain.len() - 1]],
                    &points[i],
                ) <= 0.0
            {
                chain.pop();
            }
            chain.push(i);
        }
        chain
    };
    let mut lower = build(&mut idx.iter().copied());
    let mut upper = build(&mut idx.iter().rev().copied());
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        return Err(FinslerError::InvalidSpec(
            "polytope vertices are collinear".into(),
        ));
    }
    let vertices: Vec<DVector<f64>> = lower.iter().map(|&i| points[i].clone()).collect();
    let m = vertices.len();
    let mut facets = Vec::with_capacity(m);
    for i in 0..m {
        let a = &vertices[i];
        let b = &vertices[(i + 1) % m];
        let d = b - a;
        // CCW orientation: outward normal is the edge direction rotated -90.
        let normal = DVector::from_vec(vec![d[1], -d[0]]);
        let offset = normal.dot(a);
        if offset <= PLANE_TOL * normal.norm() {
            return Err(FinslerError::InvalidSpec(
                "origin is not strictly inside the polytope".into(),
            ));
        }
        facets.push(Facet {
            functional: normal / offset,
            vertices: vec![i, (i + 1) % m],
        });
    }
    Ok((vertices, facets))
}

/// Brute-force supporting-plane hull for small 3-d vertex sets; coplanar
/// faces are grouped per plane and fan-triangulated.
fn hull_3d(points: &[DVector<f64>]) -> Result<(Vec<DVector<f64>>, Vec<Facet>)> {
    let n = points.len();
    if n < 4 {
        return Err(FinslerError::InvalidSpec(format!(
            "3-d polytope needs at least 4 distinct vertices, got {}",
            n
        )));
    }
    let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1.0);
    let tol = PLANE_TOL * scale;

    // Collect distinct supporting planes (normal, offset) with outward normal.
    let mut planes: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let u = &points[j] - &points[i];
                let v = &points[k] - &points[i];
                let mut normal = cross3(&u, &v);
                let norm = normal.norm();
                if norm < tol * tol {
                    continue;
                }
                normal /= norm;
                let mut offset = normal.dot(&points[i]);
                let mut above = false;
                let mut below = false;
                for p in points {
                    let d = normal.dot(p) - offset;
                    if d > tol {
                        above = true;
                    } else if d < -tol {
                        below = true;
                    }
                    if above && below {
                        break;
                    }
                }
                if above && below {
                    continue;
                }
                if above {
                    normal = -normal;
                    offset = -offset;
                }
                if !planes
                    .iter()
                    .any(|(pn, po)| (pn - &normal).norm() < 1e-7 && (po - offset).abs() < tol * 10.0)
                {
                    planes.push((normal, offset));
                }
            }
        }
    }
    if planes.len() < 4 {
        return Err(FinslerError::InvalidSpec(
            "3-d polytope vertices are coplanar".into(),
        ));
    }

    // Hull vertices = points on at least three supporting planes.
    let mut keep: Vec<usize> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let incident = planes
            .iter()
            .filter(|(pn, po)| (pn.dot(p) - po).abs() <= tol * 10.0)
            .count();
        if incident >= 3 {
            keep.push(i);
        }
    }
    let vertices: Vec<DVector<f64>> = keep.iter().map(|&i| points[i].clone()).collect();

    let mut facets = Vec::new();
    for (normal, offset) in &planes {
        if *offset <= tol {
            return Err(FinslerError::InvalidSpec(
                "origin is not strictly inside the polytope".into(),
            ));
        }
        let mut face: Vec<usize> = (0..vertices.len())
            .filter(|&i| (normal.dot(&vertices[i]) - offset).abs() <= tol * 10.0)
            .collect();
        if face.len() < 3 {
            continue;
        }
        // Order face vertices CCW as seen from outside (along the normal).
        let centroid = face
            .iter()
            .fold(DVector::zeros(3), |acc, &i| acc + &vertices[i])
            / face.len() as f64;
        let e1 = orthonormal_to(normal);
        let e2 = cross3(normal, &e1);
        face.sort_by(|&a, &b| {
            let pa = &vertices[a] - &centroid;
            let pb = &vertices[b] - &centroid;
            let ta = pa.dot(&e2).atan2(pa.dot(&e1));
            let tb = pb.dot(&e2).atan2(pb.dot(&e1));
            ta.partial_cmp(&tb).unwrap()
        });
        facets.push(Facet {
            functional: normal / *offset,
            vertices: face,
        });
    }
    Ok((vertices, facets))
}

fn cross3(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

fn orthonormal_to(n: &DVector<f64>) -> DVector<f64> {
    let trial = if n[0].abs() < 0.9 {
        DVector::from_vec(vec![1.0, 0.0, 0.0])
    } else {
        DVector::from_vec(vec![0.0, 1.0, 0.0])
    };
    let mut e = cross3(n, &trial);
    let norm = e.norm();
    e /= norm;
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::seeded_rng;
    use rand::Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    /// Monte-Carlo moment oracle over a hand-written membership predicate,
    /// independent of the hull/facet machinery. Returns (volume estimate,
    /// moment estimates, 3-sigma radii for the moment entries).
    fn mc_moments(
        dim: usize,
        half_width: f64,
        inside: impl Fn(&[f64]) -> bool,
        samples: usize,
        seed: u64,
    ) -> (f64, DMatrix<f64>, DMatrix<f64>) {
        let mut rng = seeded_rng(seed);
        let box_vol = (2.0 * half_width).powi(dim as i32);
        let mut hits = 0usize;
        let mut sum: DMatrix<f64> = DMatrix::zeros(dim, dim);
        let mut sum_sq: DMatrix<f64> = DMatrix::zeros(dim, dim);
        let mut x = vec![0.0; dim];
        for _ in 0..samples {
            for c in x.iter_mut() {
                *c = rng.random_range(-half_width..half_width);
            }
            if inside(&x) {
                hits += 1;
                for i in 0..dim {
                    for j in 0..dim {
                        let m = x[i] * x[j];
                        sum[(i, j)] += m;
                        sum_sq[(i, j)] += m * m;
                    }
                }
            }
        }
        let n = samples as f64;
        let mean = &sum / n;
        let volume = box_vol * hits as f64 / n;
        let moment = &mean * box_vol;
        let mut sigma3 = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let var = f64::max(sum_sq[(i, j)] / n - mean[(i, j)] * mean[(i, j)], 0.0);
                sigma3[(i, j)] = 3.0 * box_vol * (var / n).sqrt();
            }
        }
        (volume, moment, sigma3)
    }

    #[test]
    fn square_moments_match_monte_carlo_oracle() {
        let poly = ConvexPolytope::from_points(
            2,
            &[dv(&[1.0, 1.0]), dv(&[-1.0, 1.0]), dv(&[-1.0, -1.0]), dv(&[1.0, -1.0])],
        )
        .unwrap();
        let (vol, moment) = poly.volume_and_second_moment().unwrap();
        assert!((vol - 4.0).abs() < 1e-12);
        // Closed form: int x^2 over [-1,1]^2 = 4/3, off-diagonal 0.
        assert!((moment[(0, 0)] - 4.0 / 3.0).abs() < 1e-12);
        assert!((moment[(1, 1)] - 4.0 / 3.0).abs() < 1e-12);
        assert!(moment[(0, 1)].abs() < 1e-12);

        let (mc_vol, mc_m, sigma3) = mc_moments(
            2,
            1.0,
            |x| x[0].abs() <= 1.0 && x[1].abs() <= 1.0,
            1_000_000,
            41,
        );
        assert!((vol - mc_vol).abs() < 0.02);
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (moment[(i, j)] - mc_m[(i, j)]).abs() <= sigma3[(i, j)].max(1e-9),
                    "moment ({i},{j}) outside 3 sigma"
                );
            }
        }
    }

    #[test]
    fn hexagon_moments_match_monte_carlo_oracle() {
        let verts: Vec<DVector<f64>> = (0..6)
            .map(|k| {
                let t = std::f64::consts::PI / 3.0 * k as f64;
                dv(&[t.cos(), t.sin()])
            })
            .collect();
        let poly = ConvexPolytope::from_points(2, &verts).unwrap();
        let (vol, moment) = poly.volume_and_second_moment().unwrap();
        // Regular hexagon, circumradius 1: area 3*sqrt(3)/2; by 6-fold
        // symmetry the moment matrix is isotropic.
        assert!((vol - 1.5 * 3.0_f64.sqrt()).abs() < 1e-12);
        assert!((moment[(0, 0)] - moment[(1, 1)]).abs() < 1e-12);
        assert!(moment[(0, 1)].abs() < 1e-12);

        let inside = |x: &[f64]| {
            // Hexagon with flat sides at angles 30, 90, ... : intersection of
            // |y| <= sqrt(3)/2 and |sqrt(3) x +- y| <= sqrt(3).
            let s3 = 3.0_f64.sqrt();
            x[1].abs() <= s3 / 2.0
                && (s3 * x[0] + x[1]).abs() <= s3
                && (s3 * x[0] - x[1]).abs() <= s3
        };
        let (mc_vol, mc_m, sigma3) = mc_moments(2, 1.0, inside, 1_000_000, 43);
        assert!((vol - mc_vol).abs() < 0.02);
        for i in 0..2 {
            for j in 0..2 {
                assert!((moment[(i, j)] - mc_m[(i, j)]).abs() <= sigma3[(i, j)].max(1e-9));
            }
        }
    }

    #[test]
    fn cube_moments_match_monte_carlo_oracle() {
        let mut verts = Vec::new();
        for &x in &[-1.0, 1.0] {
            for &y in &[-1.0, 1.0] {
                for &z in &[-1.0, 1.0] {
                    verts.push(dv(&[x, y, z]));
                }
            }
        }
        let poly = ConvexPolytope::from_points(3, &verts).unwrap();
        assert_eq!(poly.facets().len(), 6);
        let (vol, moment) = poly.volume_and_second_moment().unwrap();
        assert!((vol - 8.0).abs() < 1e-12);
        // int x^2 over [-1,1]^3 = (2/3)*4 = 8/3.
        for i in 0..3 {
            assert!((moment[(i, i)] - 8.0 / 3.0).abs() < 1e-12);
        }
        let (mc_vol, mc_m, sigma3) =
            mc_moments(3, 1.0, |x| x.iter().all(|c| c.abs() <= 1.0), 1_000_000, 47);
        assert!((vol - mc_vol).abs() < 0.05);
        for i in 0..3 {
            for j in 0..3 {
                assert!((moment[(i, j)] - mc_m[(i, j)]).abs() <= sigma3[(i, j)].max(1e-9));
            }
        }
    }

    #[test]
    fn octahedron_moments_match_monte_carlo_oracle() {
        let verts = vec![
            dv(&[1.0, 0.0, 0.0]),
            dv(&[-1.0, 0.0, 0.0]),
            dv(&[0.0, 1.0, 0.0]),
            dv(&[0.0, -1.0, 0.0]),
            dv(&[0.0, 0.0, 1.0]),
            dv(&[0.0, 0.0, -1.0]),
        ];
        let poly = ConvexPolytope::from_points(3, &verts).unwrap();
        assert_eq!(poly.facets().len(), 8);
        let (vol, moment) = poly.volume_and_second_moment().unwrap();
        assert!((vol - 4.0 / 3.0).abs() < 1e-12);
        let (mc_vol, mc_m, sigma3) = mc_moments(
            3,
            1.0,
            |x| x.iter().map(|c| c.abs()).sum::<f64>() <= 1.0,
            1_000_000,
            53,
        );
        assert!((vol - mc_vol).abs() < 0.02);
        for i in 0..3 {
            for j in 0..3 {
                assert!((moment[(i, j)] - mc_m[(i, j)]).abs() <= sigma3[(i, j)].max(1e-9));
            }
        }
    }

    #[test]
    fn gauge_is_one_on_boundary_and_homogeneous() {
        let poly = ConvexPolytope::from_points(
            2,
            &[dv(&[1.0, 1.0]), dv(&[-1.0, 1.0]), dv(&[-1.0, -1.0]), dv(&[1.0, -1.0])],
        )
        .unwrap();
        assert!((poly.gauge(&dv(&[1.0, 0.3])) - 1.0).abs() < 1e-12);
        assert!((poly.gauge(&dv(&[0.5, 0.25])) - 0.5).abs() < 1e-12);
        assert!((poly.gauge(&dv(&[-0.2, 1.0])) - 1.0).abs() < 1e-12);
        // max-norm gauge
        assert!((poly.gauge(&dv(&[3.0, -4.0])) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_origin_outside() {
        let shifted = ConvexPolytope::from_points(
            2,
            &[dv(&[2.0, 1.0]), dv(&[4.0, 1.0]), dv(&[3.0, 2.0])],
        );
        assert!(shifted.is_err());
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(ConvexPolytope::from_points(2, &[dv(&[1.0, 0.0]), dv(&[-1.0, 0.0])]).is_err());
        assert!(ConvexPolytope::from_points(
            2,
            &[dv(&[1.0, 1.0]), dv(&[2.0, 2.0]), dv(&[3.0, 3.0])]
        )
        .is_err());
    }

    #[test]
    fn hull_discards_interior_points() {
        let poly = ConvexPolytope::from_points(
            2,
            &[
                dv(&[1.0, 1.0]),
                dv(&[-1.0, 1.0]),
                dv(&[-1.0, -1.0]),
                dv(&[1.0, -1.0]),
                dv(&[0.1, 0.2]),
                dv(&[0.0, 0.0]),
            ],
        )
        .unwrap();
        assert_eq!(poly.vertices().len(), 4);
    }

    #[test]
    fn random_tetrahedra_match_monte_carlo() {
        // Random tetrahedra containing the origin: formula vs oracle.
        let mut rng = seeded_rng(97);
        let mut tested = 0;
        while tested < 3 {
            let verts: Vec<DVector<f64>> = (0..4)
                .map(|_| DVector::from_iterator(3, (0..3).map(|_| rng.random_range(-1.0..1.0))))
                .collect();
            let centroid = verts.iter().fold(DVector::zeros(3), |a, v| a + v) / 4.0;
            let shifted: Vec<DVector<f64>> = verts.iter().map(|v| v - &centroid).collect();
            let poly = match ConvexPolytope::from_points(3, &shifted) {
                Ok(p) => p,
                Err(_) => continue, // degenerate draw
            };
            let (vol, moment) = poly.volume_and_second_moment().unwrap();
            let inside = |x: &[f64]| {
                let p = dv(x);
                poly.facets().iter().all(|f| f.functional.dot(&p) <= 1.0)
            };
            let (mc_vol, mc_m, sigma3) = mc_moments(3, 2.0, inside, 400_000, 1000 + tested as u64);
            assert!((vol - mc_vol).abs() < 0.05 * vol.max(0.01));
            for i in 0..3 {
                for j in 0..3 {
                    assert!((moment[(i, j)] - mc_m[(i, j)]).abs() <= sigma3[(i, j)].max(1e-6));
                }
            }
            tested += 1;
        }
    }
}
