//! F-lengths of polylines and directed Finsler distances.
//!
//! Distances are upper bounds obtained from a directed shortest path on a
//! regular grid graph (midpoint-rule edge weights, metric-adapted stencil)
//! followed by local polyline refinement: merge passes that drop redundant
//! vertices and a pattern-search coordinate descent on the interior
//! vertices. Everything is directed, because the metrics need not be
//! reversible.

use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DVector;


use crate::domain::Domain;
use crate::error::{FinslerError, Result};
use crate::finsler::FinslerStructure;
use crate::sampling::seeded_rng;

/// An oriented polygonal path; orientation matters for non-reversible
/// metrics.
#[derive(Debug, Clone)]
pub struct Polyline {
    points: Vec<DVector<f64>>,
}

impl Polyline {
    /// At least two points, consecutive points distinct.
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(FinslerError::Configuration(
                "polyline needs at least 2 points".into(),
            ));
        }
        for w in points.windows(2) {
            if (&w[1] - &w[0]).norm() == 0.0 {
                return Err(FinslerError::Configuration(
                    "polyline has repeated consecutive points".into(),
                ));
            }
        }
        Ok(Polyline { points })
    }

    /// Internal constructor for witnesses, allowing the degenerate
    /// two-equal-points path that represents a zero distance.
    pub(crate) fn witness(points: Vec<DVector<f64>>) -> Self {
        Polyline { points }
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Midpoint-rule F-length: `sum_seg F(midpoint, end - start)`.
///
/// Domain membership is checked at the vertices and segment midpoints; on
/// the convex domains this module targets that certifies the whole segment.
pub fn path_length(f: &FinslerStructure, gamma: &Polyline) -> Result<f64> {
    let mut total = 0.0;
    for w in gamma.points.windows(2) {
        total += segment_cost(f, &w[0], &w[1])?;
    }
    Ok(total)
}

fn segment_cost(f: &FinslerStructure, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    let domain = f.domain();
    if !domain.contains(a) {
        return Err(FinslerError::outside(a.as_slice(), "path segment start"));
    }
    if !domain.contains(b) {
        return Err(FinslerError::outside(b.as_slice(), "path segment end"));
    }
    let mid = (a + b) * 0.5;
    if !domain.contains(&mid) {
        return Err(FinslerError::outside(mid.as_slice(), "path segment midpoint"));
    }
    let value = f.value(&mid, &(b - a));
    if !value.is_finite() {
        return Err(FinslerError::NumericalFailure(
            "non-finite segment cost".into(),
        ));
    }
    Ok(value)
}

#[inline]
fn segment_cost_unchecked(f: &FinslerStructure, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    f.value(&((a + b) * 0.5), &(b - a))
}

/// How a distance value was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMethod {
    Graph,
    Refined,
}

/// A distance value together with its witness path and an a posteriori gap
/// estimate (how much slack the discretization may still hide).
#[derive(Debug, Clone)]
pub struct DistanceResult {
    pub value: f64,
    pub witness: Polyline,
    pub method: DistanceMethod,
    pub gap: f64,
}

/// Tuning knobs for the grid-graph distance.
#[derive(Debug, Clone)]
pub struct DistanceOptions {
    /// Grid nodes per axis.
    pub grid_resolution: usize,
    /// Offsets per node for n = 2; one of 8, 16, 32. Three dimensions always
    /// use the 26-neighborhood.
    pub stencil: usize,
    /// Run the polyline refinement stage.
    pub refine: bool,
    /// Maximum refinement sweeps.
    pub max_sweeps: usize,
    /// Merged segments may not exceed this multiple of the grid spacing
    /// (keeps the midpoint rule honest on position-dependent metrics).
    pub merge_cap: f64,
    /// Endpoint attachment radius in grid cells.
    pub attach_cells: usize,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions {
            grid_resolution: 101,
            stencil: 16,
            refine: true,
            max_sweeps: 80,
            merge_cap: 6.0,
            attach_cells: 5,
        }
    }
}

impl DistanceOptions {
    pub fn with_resolution(mut self, r: usize) -> Self {
        self.grid_resolution = r;
        self
    }

    pub fn with_stencil(mut self, s: usize) -> Self {
        self.stencil = s;
        self
    }

    pub fn with_refine(mut self, refine: bool) -> Self {
        self.refine = refine;
        self
    }
}

/// Directed grid graph with midpoint-rule edge weights for one structure.
///
/// Construction is the expensive part; queries reuse it, and the module-level
/// [`distance`] entry point keeps a process-wide cache keyed by
/// (structure id, resolution, stencil).
pub struct GridGraph {
    domain: Domain,
    resolution: usize,
    dims: Vec<usize>,
    spacing: Vec<f64>,
    offsets: Vec<Vec<i64>>,
    /// Worst directional overshoot ratio of the stencil relaxation,
    /// measured at the domain center during stencil selection.
    stencil_score: f64,
    adj_start: Vec<u32>,
    adj_node: Vec<u32>,
    adj_weight: Vec<f64>,
}

impl GridGraph {
    pub fn build(f: &FinslerStructure, opts: &DistanceOptions) -> Result<Self> {
        let domain = f.domain().clone();
        let dim = domain.dim();
        let r = opts.grid_resolution;
        if r < 8 {
            return Err(FinslerError::Resolution(format!(
                "grid resolution {r} too coarse; need >= 8 nodes per axis"
            )));
        }
        if dim == 2 && ![8usize, 16, 32].contains(&opts.stencil) {
            return Err(FinslerError::Configuration(format!(
                "stencil must be one of 8, 16, 32; got {}",
                opts.stencil
            )));
        }
        if dim > 3 {
            return Err(FinslerError::Configuration(
                "grid distances support n = 2 and n = 3 only".into(),
            ));
        }
        let dims = vec![r; dim];
        let spacing: Vec<f64> = (0..dim)
            .map(|a| (domain.upper()[a] - domain.lower()[a]) / (r - 1) as f64)
            .collect();
        let (offsets, stencil_score) = if dim == 2 {
            select_stencil_2d(f, &spacing, opts.stencil)
        } else {
            (offsets_3d(), 1.08) // documented 26-neighborhood worst case
        };

        let node_count: usize = dims.iter().product();
        let graph_shell = GridGraph {
            domain: domain.clone(),
            resolution: r,
            dims: dims.clone(),
            spacing: spacing.clone(),
            offsets: offsets.clone(),
            stencil_score,
            adj_start: Vec::new(),
            adj_node: Vec::new(),
            adj_weight: Vec::new(),
        };

        let mut adj_start = Vec::with_capacity(node_count + 1);
        let mut adj_node = Vec::new();
        let mut adj_weight = Vec::new();
        adj_start.push(0u32);
        let mut coords = vec![0i64; dim];
        for flat in 0..node_count {
            graph_shell.coords_of(flat, &mut coords);
            let from = graph_shell.point_of_coords(&coords);
            for off in &offsets {
                let mut target = coords.clone();
                let mut ok = true;
                for a in 0..dim {
                    target[a] += off[a];
                    if target[a] < 0 || target[a] >= dims[a] as i64 {
                        ok = false;
                        break;
                    }
                }
                if !ok {
                    continue;
                }
                let to = graph_shell.point_of_coords(&target);
                let w = f.value(&((&from + &to) * 0.5), &(&to - &from));
                if !w.is_finite() || w < 0.0 {
                    return Err(FinslerError::NumericalFailure(format!(
                        "edge weight {w} at {:?}",
                        from.as_slice()
                    )));
                }
                adj_node.push(graph_shell.flat_of_coords(&target) as u32);
                adj_weight.push(w);
            }
            adj_start.push(adj_node.len() as u32);
        }
        if adj_node.is_empty() {
            return Err(FinslerError::Resolution(
                "grid graph has no edges; resolution too coarse for the stencil".into(),
            ));
        }
        Ok(GridGraph {
            domain,
            resolution: r,
            dims,
            spacing,
            offsets,
            stencil_score,
            adj_start,
            adj_node,
            adj_weight,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn stencil_score(&self) -> f64 {
        self.stencil_score
    }

    fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    fn coords_of(&self, flat: usize, out: &mut [i64]) {
        let mut rem = flat;
        for axis in (0..self.dims.len()).rev() {
            out[axis] = (rem % self.dims[axis]) as i64;
            rem /= self.dims[axis];
        }
    }

    fn flat_of_coords(&self, coords: &[i64]) -> usize {
        let mut flat = 0usize;
        for (axis, &c) in coords.iter().enumerate() {
            flat = flat * self.dims[axis] + c as usize;
        }
        flat
    }

    fn point_of_coords(&self, coords: &[i64]) -> DVector<f64> {
        DVector::from_iterator(
            coords.len(),
            coords
                .iter()
                .enumerate()
                .map(|(a, &c)| self.domain.lower()[a] + c as f64 * self.spacing[a]),
        )
    }

    fn point_of_flat(&self, flat: usize) -> DVector<f64> {
        let mut coords = vec![0i64; self.dims.len()];
        self.coords_of(flat, &mut coords);
        self.point_of_coords(&coords)
    }

    /// Grid nodes within `attach_cells` cells of `x` (Chebyshev).
    fn attach_nodes(&self, x: &DVector<f64>, attach_cells: usize) -> Vec<usize> {
        let dim = self.dims.len();
        let mut lo = vec![0i64; dim];
        let mut hi = vec![0i64; dim];
        for a in 0..dim {
            let t = (x[a] - self.domain.lower()[a]) / self.spacing[a];
            lo[a] = (t.floor() as i64 - attach_cells as i64).max(0);
            hi[a] = (t.ceil() as i64 + attach_cells as i64).min(self.dims[a] as i64 - 1);
        }
        let mut nodes = Vec::new();
        let mut cursor = lo.clone();
        'outer: loop {
            nodes.push(self.flat_of_coords(&cursor));
            for a in (0..dim).rev() {
                cursor[a] += 1;
                if cursor[a] <= hi[a] {
                    continue 'outer;
                }
                cursor[a] = lo[a];
                if a == 0 {
                    break 'outer;
                }
            }
        }
        nodes
    }

    /// Directed shortest path from `p` to `q` plus optional refinement.
    pub fn query(
        &self,
        f: &FinslerStructure,
        p: &DVector<f64>,
        q: &DVector<f64>,
        opts: &DistanceOptions,
    ) -> Result<DistanceResult> {
        for (pt, what) in [(p, "source"), (q, "target")] {
            if pt.iter().any(|c| !c.is_finite()) {
                return Err(FinslerError::NonFiniteInput(format!("distance {what}")));
            }
            if !self.domain.contains(pt) {
                return Err(FinslerError::outside(pt.as_slice(), format!("distance {what}")));
            }
        }
        if (p - q).norm() == 0.0 {
            return Ok(DistanceResult {
                value: 0.0,
                witness: Polyline::witness(vec![p.clone(), q.clone()]),
                method: DistanceMethod::Graph,
                gap: 0.0,
            });
        }

        let n = self.node_count();
        let start = n;
        let goal = n + 1;
        let start_edges: Vec<(usize, f64)> = self
            .attach_nodes(p, opts.attach_cells)
            .into_iter()
            .map(|g| {
                let gp = self.point_of_flat(g);
                (g, segment_cost_unchecked(f, p, &gp))
            })
            .filter(|(_, w)| *w > 0.0 || true)
            .collect();
        let mut goal_edges: HashMap<usize, f64> = HashMap::new();
        for g in self.attach_nodes(q, opts.attach_cells) {
            let gp = self.point_of_flat(g);
            goal_edges.insert(g, segment_cost_unchecked(f, &gp, q));
        }
        let max_attach = (0..self.dims.len())
            .map(|a| self.spacing[a] * opts.attach_cells as f64)
            .fold(f64::INFINITY, f64::min);
        let direct = if (0..self.dims.len()).all(|a| (q[a] - p[a]).abs() <= max_attach) {
            Some(segment_cost_unchecked(f, p, q))
        } else {
            None
        };

        // Dijkstra over grid nodes plus the two virtual endpoints.
        let mut dist = vec![f64::INFINITY; n + 2];
        let mut parent = vec![u32::MAX; n + 2];
        let mut settled = vec![false; n + 2];
        let mut heap = BinaryHeap::new();
        dist[start] = 0.0;
        heap.push(HeapEntry { dist: 0.0, node: start as u32 });
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            let u = node as usize;
            if settled[u] {
                continue;
            }
            settled[u] = true;
            if u == goal {
                break;
            }
            let push = |v: usize, w: f64, dist: &mut Vec<f64>, parent: &mut Vec<u32>,
                            heap: &mut BinaryHeap<HeapEntry>| {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    parent[v] = u as u32;
                    heap.push(HeapEntry { dist: nd, node: v as u32 });
                }
            };
            if u == start {
                for &(g, w) in &start_edges {
                    push(g, w, &mut dist, &mut parent, &mut heap);
                }
                if let Some(w) = direct {
                    push(goal, w, &mut dist, &mut parent, &mut heap);
                }
            } else {
                let a = self.adj_start[u] as usize;
                let b = self.adj_start[u + 1] as usize;
                for e in a..b {
                    push(
                        self.adj_node[e] as usize,
                        self.adj_weight[e],
                        &mut dist,
                        &mut parent,
                        &mut heap,
                    );
                }
                if let Some(&w) = goal_edges.get(&u) {
                    push(goal, w, &mut dist, &mut parent, &mut heap);
                }
            }
        }
        if !dist[goal].is_finite() {
            return Err(FinslerError::Resolution(
                "endpoints are not connected on the grid graph".into(),
            ));
        }

        // Reconstruct p -> grid nodes -> q, dropping zero-length duplicates.
        let mut chain = Vec::new();
        let mut cur = goal;
        while cur != start {
            let prev = parent[cur] as usize;
            if cur != goal {
                chain.push(self.point_of_flat(cur));
            }
            cur = prev;
        }
        chain.reverse();
        let mut points = vec![p.clone()];
        for pt in chain {
            if (&pt - points.last().unwrap()).norm() > 0.0 {
                points.push(pt);
            }
        }
        if (q - points.last().unwrap()).norm() > 0.0 {
            points.push(q.clone());
        } else if points.len() == 1 {
            points.push(q.clone());
        }

        let graph_value = dist[goal];
        if !opts.refine || points.len() == 2 {
            let witness = Polyline::witness(points);
            let value = path_length(f, &witness)?;
            return Ok(DistanceResult {
                value,
                witness,
                method: DistanceMethod::Graph,
                gap: graph_value * (self.stencil_score - 1.0),
            });
        }

        let h = self.spacing.iter().fold(f64::INFINITY, |m, &s| m.min(s));
        let refined = refine_polyline(f, points, h, opts)?;
        let witness = Polyline::witness(refined);
        let value = path_length(f, &witness)?;
        Ok(DistanceResult {
            value,
            witness,
            method: DistanceMethod::Refined,
            gap: (graph_value - value).max(0.0),
        })
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed for a min-heap; node id breaks ties deterministically.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Coprime planar offsets with Chebyshev radius <= 5.
fn candidate_offsets_2d() -> Vec<[i64; 2]> {
    let mut out = Vec::new();
    for i in -5i64..=5 {
        for j in -5i64..=5 {
            if i == 0 && j == 0 {
                continue;
            }
            if gcd(i.unsigned_abs(), j.unsigned_abs()) == 1 {
                out.push([i, j]);
            }
        }
    }
    out
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Greedy backward selection of `count` offsets minimizing the worst
/// directional overshoot of the stencil relaxation against `F` at the domain
/// center. Dense Minkowski norms keep their slanted directions covered this
/// way (a fixed knight-move stencil can overshoot 5%+ on strongly
/// non-reversible norms).
fn select_stencil_2d(
    f: &FinslerStructure,
    spacing: &[f64],
    count: usize,
) -> (Vec<Vec<i64>>, f64) {
    let center = f.domain().center();
    let candidates = candidate_offsets_2d();
    // Scaled offset vectors and their costs.
    let vecs: Vec<[f64; 2]> = candidates
        .iter()
        .map(|o| [o[0] as f64 * spacing[0], o[1] as f64 * spacing[1]])
        .collect();
    let costs: Vec<f64> = vecs
        .iter()
        .map(|v| f.value(&center, &DVector::from_vec(vec![v[0], v[1]])))
        .collect();
    const DIRS: usize = 720;
    let mut dir_vec = Vec::with_capacity(DIRS);
    let mut dir_cost = Vec::with_capacity(DIRS);
    for k in 0..DIRS {
        let t = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / DIRS as f64;
        let w = [t.cos(), t.sin()];
        dir_vec.push(w);
        dir_cost.push(f.value(&center, &DVector::from_vec(vec![w[0], w[1]])));
    }

    let score = |selected: &[usize]| -> f64 {
        // Sort by angle once per evaluation.
        let mut by_angle: Vec<usize> = selected.to_vec();
        by_angle.sort_by(|&a, &b| {
            let ta = vecs[a][1].atan2(vecs[a][0]);
            let tb = vecs[b][1].atan2(vecs[b][0]);
            ta.partial_cmp(&tb).unwrap()
        });
        let angles: Vec<f64> = by_angle
            .iter()
            .map(|&i| vecs[i][1].atan2(vecs[i][0]))
            .collect();
        let mut worst: f64 = 1.0;
        for k in 0..DIRS {
            let w = dir_vec[k];
            let theta = w[1].atan2(w[0]);
            let pos = angles.partition_point(|&a| a <= theta);
            let i2 = by_angle[pos % by_angle.len()];
            let i1 = by_angle[(pos + by_angle.len() - 1) % by_angle.len()];
            let (d1, d2) = (vecs[i1], vecs[i2]);
            let det = d1[0] * d2[1] - d1[1] * d2[0];
            if det.abs() < 1e-14 {
                return f64::INFINITY;
            }
            let a = (w[0] * d2[1] - w[1] * d2[0]) / det;
            let b = (w[1] * d1[0] - w[0] * d1[1]) / det;
            if a < -1e-12 || b < -1e-12 {
                return f64::INFINITY;
            }
            let cost = a.max(0.0) * costs[i1] + b.max(0.0) * costs[i2];
            worst = worst.max(cost / dir_cost[k]);
        }
        worst
    };

    let mut selected: Vec<usize> = (0..candidates.len()).collect();
    while selected.len() > count {
        let mut best_remove = 0usize;
        let mut best_score = f64::INFINITY;
        for r in 0..selected.len() {
            let mut trial = selected.clone();
            trial.remove(r);
            let s = score(&trial);
            if s < best_score {
                best_score = s;
                best_remove = r;
            }
        }
        selected.remove(best_remove);
    }
    let final_score = score(&selected);
    let mut offsets: Vec<Vec<i64>> = selected
        .iter()
        .map(|&i| candidates[i].to_vec())
        .collect();
    offsets.sort();
    (offsets, final_score)
}

/// Full 26-neighborhood for n = 3.
fn offsets_3d() -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for i in -1i64..=1 {
        for j in -1i64..=1 {
            for k in -1i64..=1 {
                if i != 0 || j != 0 || k != 0 {
                    out.push(vec![i, j, k]);
                }
            }
        }
    }
    out
}

/// Merge redundant vertices and pattern-descend the interior ones;
/// monotonically decreases the midpoint-rule length.
fn refine_polyline(
    f: &FinslerStructure,
    mut pts: Vec<DVector<f64>>,
    h: f64,
    opts: &DistanceOptions,
) -> Result<Vec<DVector<f64>>> {
    let domain = f.domain().clone();
    let dim = domain.dim();
    let max_seg = opts.merge_cap * h;
    let mut step = 0.75 * h;
    let cost = |a: &DVector<f64>, b: &DVector<f64>| segment_cost_unchecked(f, a, b);
    for _sweep in 0..opts.max_sweeps {
        let mut improved = false;
        // Merge pass.
        let mut i = 1;
        while i + 1 < pts.len() && pts.len() > 2 {
            let merged_len = (&pts[i + 1] - &pts[i - 1]).norm();
            if merged_len <= max_seg {
                let old = cost(&pts[i - 1], &pts[i]) + cost(&pts[i], &pts[i + 1]);
                let merged = cost(&pts[i - 1], &pts[i + 1]);
                let mid = (&pts[i - 1] + &pts[i + 1]) * 0.5;
                if merged <= old + 1e-14 * (1.0 + old) && domain.contains(&mid) {
                    pts.remove(i);
                    improved = true;
                    continue;
                }
            }
            i += 1;
        }
        // Descent pass (Gauss-Seidel pattern search).
        for i in 1..pts.len().saturating_sub(1) {
            let current = cost(&pts[i - 1], &pts[i]) + cost(&pts[i], &pts[i + 1]);
            let mut best_cost = current;
            let mut best_point: Option<DVector<f64>> = None;
            for axis in 0..dim {
                for sign in [-1.0f64, 1.0] {
                    let mut cand = pts[i].clone();
                    cand[axis] += sign * step;
                    if !domain.contains(&cand) {
                        continue;
                    }
                    let c = cost(&pts[i - 1], &cand) + cost(&cand, &pts[i + 1]);
                    if c < best_cost - 1e-15 * (1.0 + best_cost) {
                        best_cost = c;
                        best_point = Some(cand);
                    }
                }
            }
            if let Some(p) = best_point {
                pts[i] = p;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-5 * h {
                break;
            }
        }
    }
    Ok(pts)
}

type GraphCache = Mutex<HashMap<(u64, usize, usize), Arc<GridGraph>>>;

fn graph_cache() -> &'static GraphCache {
    static CACHE: OnceLock<GraphCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached graph for (structure, resolution, stencil).
pub fn graph_for(f: &FinslerStructure, opts: &DistanceOptions) -> Result<Arc<GridGraph>> {
    let key = (f.id(), opts.grid_resolution, opts.stencil);
    {
        let cache = graph_cache().lock().unwrap();
        if let Some(g) = cache.get(&key) {
            return Ok(g.clone());
        }
    }
    let graph = Arc::new(GridGraph::build(f, opts)?);
    let mut cache = graph_cache().lock().unwrap();
    if cache.len() > 64 {
        cache.clear();
    }
    cache.insert(key, graph.clone());
    Ok(graph)
}

/// Directed distance estimate from `p` to `q` with default refinement.
pub fn distance(
    f: &FinslerStructure,
    p: &DVector<f64>,
    q: &DVector<f64>,
    grid_resolution: usize,
    stencil: usize,
) -> Result<DistanceResult> {
    let opts = DistanceOptions::default()
        .with_resolution(grid_resolution)
        .with_stencil(stencil);
    distance_with_options(f, p, q, &opts)
}

/// Directed distance with explicit options (graphs are cached).
pub fn distance_with_options(
    f: &FinslerStructure,
    p: &DVector<f64>,
    q: &DVector<f64>,
    opts: &DistanceOptions,
) -> Result<DistanceResult> {
    let graph = graph_for(f, opts)?;
    graph.query(f, p, q, opts)
}

/// `rho(p, q) = (d(p, q) + d(q, p)) / 2`; symmetric by construction.
pub fn symmetrized_distance(
    f: &FinslerStructure,
    p: &DVector<f64>,
    q: &DVector<f64>,
    grid_resolution: usize,
    stencil: usize,
) -> Result<f64> {
    let fwd = distance(f, p, q, grid_resolution, stencil)?;
    let bwd = distance(f, q, p, grid_resolution, stencil)?;
    Ok(0.5 * (fwd.value + bwd.value))
}

/// Outcome of a sampled two-sided comparison of `d_F` with the Euclidean
/// distance.
#[derive(Debug, Clone)]
pub struct BilipschitzReport {
    pub c: f64,
    pub slack: f64,
    pub pair_count: usize,
    pub violations: usize,
    /// Smallest value of `d / (|q-p|/C) - 1` over the pairs (negative means
    /// the lower bound failed).
    pub worst_lower_margin: f64,
    /// Smallest value of `C (1+slack) |q-p| / d - 1` (negative: upper bound
    /// failed).
    pub worst_upper_margin: f64,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
    pub pass: bool,
}

/// Verifies `(1-slack) |q-p| / C <= d <= C |q-p| (1+slack)` on seeded pairs.
///
/// Requires a convex domain unless a quasi-convexity constant `K > 1` is
/// supplied, in which case the bound is relaxed to `C * K`.
pub fn bilipschitz_check(
    f: &FinslerStructure,
    c: f64,
    pair_count: usize,
    seed: u64,
) -> Result<BilipschitzReport> {
    bilipschitz_check_with(
        f,
        c,
        pair_count,
        seed,
        &DistanceOptions::default().with_resolution(61),
        0.05,
        1.0,
    )
}

pub fn bilipschitz_check_with(
    f: &FinslerStructure,
    c: f64,
    pair_count: usize,
    seed: u64,
    opts: &DistanceOptions,
    slack: f64,
    quasiconvexity: f64,
) -> Result<BilipschitzReport> {
    if !(c.is_finite() && c >= 1.0) {
        return Err(FinslerError::Configuration(format!(
            "bilipschitz constant must be >= 1, got {c}"
        )));
    }
    if !f.domain().is_convex() && quasiconvexity <= 1.0 {
        return Err(FinslerError::Configuration(
            "bilipschitz comparison needs a convex domain or a quasi-convexity constant > 1"
                .into(),
        ));
    }
    let c_eff = c * quasiconvexity.max(1.0);
    let mut rng = seeded_rng(seed);
    let mut report = BilipschitzReport {
        c: c_eff,
        slack,
        pair_count,
        violations: 0,
        worst_lower_margin: f64::INFINITY,
        worst_upper_margin: f64::INFINITY,
        worst_pair: None,
        pass: true,
    };
    let graph = graph_for(f, opts)?;
    for _ in 0..pair_count {
        let p = f.domain().sample(&mut rng);
        let q = f.domain().sample(&mut rng);
        let sep = (&q - &p).norm();
        if sep < 1e-9 {
            continue;
        }
        let d = graph.query(f, &p, &q, opts)?.value;
        let lower = sep * (1.0 - slack) / c_eff;
        let upper = c_eff * sep * (1.0 + slack);
        let lower_margin = d / (sep / c_eff) - 1.0;
        let upper_margin = c_eff * (1.0 + slack) * sep / d - 1.0;
        let violated = d < lower || d > upper;
        if violated {
            report.violations += 1;
            report.pass = false;
        }
        if lower_margin < report.worst_lower_margin || upper_margin < report.worst_upper_margin {
            if violated || report.worst_pair.is_none() {
                report.worst_pair = Some((p.iter().copied().collect(), q.iter().copied().collect()));
            }
        }
        report.worst_lower_margin = report.worst_lower_margin.min(lower_margin);
        report.worst_upper_margin = report.worst_upper_margin.min(upper_margin);
    }
    Ok(report)
}
