//! Exact k-nearest-neighbor radius queries over a fixed point set.
//!
//! The central quantity is the k-NN radius: the smallest radius of a
//! closed ball around a query that contains at least `k` points of the
//! set, which is the k-th smallest of the query-to-set Euclidean
//! distances. Two interchangeable backends compute it exactly: a
//! brute-force scan and a median-split kd-tree. `Auto` picks the tree
//! for low dimensions and the scan beyond [`AUTO_KDTREE_MAX_DIM`],
//! where axis-aligned pruning stops paying for itself.
//!
//! Ties in distance are broken by ascending dataset index, so the
//! reported neighbor set is unique and both backends agree on it
//! element for element.

use rayon::prelude::*;
use thiserror::Error;

use crate::tensor_io::EmbeddingMatrix;

/// Dimension threshold up to which `IndexStrategy::Auto` selects the
/// kd-tree backend.
pub const AUTO_KDTREE_MAX_DIM: usize = 16;

/// Points per kd-tree leaf bucket.
pub const KDTREE_LEAF_SIZE: usize = 32;

/// Errors from index construction and queries.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum KnnError {
    #[error("k = {k} is out of range: need 1 <= k <= {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("query has dimension {found}, index has dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("query contains a non-finite coordinate")]
    NonFiniteQuery,
    #[error("member index {index} is out of range for a set of {n} points")]
    MemberOutOfRange { index: usize, n: usize },
    #[error("zero radius: density estimate would divide by zero")]
    ZeroRadius,
}

/// Backend selection for [`build_index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexStrategy {
    BruteForce,
    KdTree,
    /// KdTree for `d <= AUTO_KDTREE_MAX_DIM`, BruteForce otherwise.
    Auto,
}

/// A borrowed view of an [`EmbeddingMatrix`] treated as a metric
/// dataset. The matrix type already guarantees at least one point and
/// finite coordinates.
#[derive(Debug, Clone, Copy)]
pub struct PointSet<'a> {
    matrix: &'a EmbeddingMatrix,
}

impl<'a> PointSet<'a> {
    pub fn new(matrix: &'a EmbeddingMatrix) -> Self {
        Self { matrix }
    }

    pub fn len(&self) -> usize {
        self.matrix.n()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.matrix.d()
    }

    pub fn point(&self, i: usize) -> &'a [f64] {
        self.matrix.row(i)
    }
}

/// Result of one radius query: the k-NN radius and the `k` neighbor
/// indices attaining distances at most that radius, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusQueryResult {
    pub radius: f64,
    pub neighbor_indices: Vec<usize>,
}

#[derive(Debug)]
enum Backend {
    Brute,
    Kd(KdTree),
}

/// A query structure over a [`PointSet`]. Shareable across threads;
/// batch queries run in parallel with deterministic output order.
#[derive(Debug)]
pub struct KnnIndex<'a> {
    points: PointSet<'a>,
    backend: Backend,
}

/// Builds a query index with the requested backend.
pub fn build_index(points: PointSet<'_>, strategy: IndexStrategy) -> KnnIndex<'_> {
    let use_tree = match strategy {
        IndexStrategy::BruteForce => false,
        IndexStrategy::KdTree => true,
        IndexStrategy::Auto => points.dim() <= AUTO_KDTREE_MAX_DIM,
    };
    let backend = if use_tree { Backend::Kd(KdTree::build(points)) } else { Backend::Brute };
    KnnIndex { points, backend }
}

impl<'a> KnnIndex<'a> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn points(&self) -> PointSet<'a> {
        self.points
    }

    /// The backend actually in use (`Auto` has been resolved).
    pub fn strategy(&self) -> IndexStrategy {
        match self.backend {
            Backend::Brute => IndexStrategy::BruteForce,
            Backend::Kd(_) => IndexStrategy::KdTree,
        }
    }

    fn check_query(&self, query: &[f64], k: usize) -> Result<(), KnnError> {
        if query.len() != self.dim() {
            return Err(KnnError::DimensionMismatch { expected: self.dim(), found: query.len() });
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(KnnError::NonFiniteQuery);
        }
        if k == 0 || k > self.len() {
            return Err(KnnError::KTooLarge { k, n: self.len() });
        }
        Ok(())
    }

    fn query(&self, query: &[f64], k: usize) -> KBest {
        let mut best = KBest::new(k);
        match &self.backend {
            Backend::Brute => {
                for i in 0..self.points.len() {
                    best.offer(dist2(query, self.points.point(i)), i as u32);
                }
            }
            Backend::Kd(tree) => tree.search(self.points, query, &mut best),
        }
        best
    }
}

/// The k-NN radius of `query`, with the neighbor indices that realize
/// it. A point at distance exactly the radius counts as inside the
/// ball.
///
/// # Errors
///
/// `KTooLarge` unless `1 <= k <= n`, `DimensionMismatch` or
/// `NonFiniteQuery` for malformed queries.
pub fn knn_radius(index: &KnnIndex<'_>, query: &[f64], k: usize) -> Result<RadiusQueryResult, KnnError> {
    index.check_query(query, k)?;
    Ok(index.query(query, k).into_result())
}

/// k-NN radii for every row of `queries`, in row order. Rows are
/// processed in parallel; the output order never depends on the thread
/// count.
pub fn knn_radius_batch(
    index: &KnnIndex<'_>,
    queries: &EmbeddingMatrix,
    k: usize,
) -> Result<Vec<f64>, KnnError> {
    if queries.d() != index.dim() {
        return Err(KnnError::DimensionMismatch { expected: index.dim(), found: queries.d() });
    }
    if k == 0 || k > index.len() {
        return Err(KnnError::KTooLarge { k, n: index.len() });
    }
    (0..queries.n())
        .into_par_iter()
        .map(|i| knn_radius(index, queries.row(i), k).map(|r| r.radius))
        .collect()
}

/// Leave-one-out radius of training member `i`: its k-NN radius with
/// itself excluded from the set. Because the member sits at distance
/// zero, this equals the (k+1)-NN radius over the full set, so no
/// rebuild is needed.
///
/// # Errors
///
/// `MemberOutOfRange`, or `KTooLarge` unless `1 <= k <= n - 1`.
pub fn loo_radius(index: &KnnIndex<'_>, member: usize, k: usize) -> Result<f64, KnnError> {
    let n = index.len();
    if member >= n {
        return Err(KnnError::MemberOutOfRange { index: member, n });
    }
    if k == 0 || k > n - 1 {
        return Err(KnnError::KTooLarge { k, n: n - 1 });
    }
    Ok(index.query(index.points.point(member), k + 1).into_result().radius)
}

/// k-NN density estimate at `query`: `k / (n * v_d * r^d)` where `r`
/// is the k-NN radius and `v_d` the unit-ball volume (pass
/// [`unit_ball_volume`]`(d)`).
///
/// # Errors
///
/// As [`knn_radius`], plus `ZeroRadius` when the radius vanishes.
pub fn knn_density(index: &KnnIndex<'_>, query: &[f64], k: usize, v_d: f64) -> Result<f64, KnnError> {
    let r = knn_radius(index, query, k)?.radius;
    if r == 0.0 {
        return Err(KnnError::ZeroRadius);
    }
    let n = index.len() as f64;
    Ok(k as f64 / (n * v_d * r.powi(index.dim() as i32)))
}

/// Volume of the d-dimensional Euclidean unit ball,
/// `pi^(d/2) / Gamma(d/2 + 1)`, evaluated through the log-gamma
/// function so the Gamma factor never overflows on its own. Once the
/// true volume drops below the smallest positive double (around
/// d = 500) the result underflows to zero.
pub fn unit_ball_volume(d: usize) -> f64 {
    let half_d = d as f64 / 2.0;
    let ln_vd = half_d * std::f64::consts::PI.ln() - statrs::function::gamma::ln_gamma(half_d + 1.0);
    ln_vd.exp()
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        let diff = a[i] - b[i];
        acc += diff * diff;
    }
    acc
}

/// Candidate neighbor ordered by (squared distance, dataset index).
/// Distances are finite by construction, so the ordering is total.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: u32,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2
            .partial_cmp(&other.d2)
            .expect("distances are finite")
            .then(self.index.cmp(&other.index))
    }
}

/// Bounded max-heap keeping the k smallest candidates seen so far.
struct KBest {
    heap: std::collections::BinaryHeap<Candidate>,
    k: usize,
}

impl KBest {
    fn new(k: usize) -> Self {
        Self { heap: std::collections::BinaryHeap::with_capacity(k + 1), k }
    }

    #[inline]
    fn offer(&mut self, d2: f64, index: u32) {
        let cand = Candidate { d2, index };
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if cand < *self.heap.peek().expect("heap is non-empty") {
            self.heap.pop();
            self.heap.push(cand);
        }
    }

    /// Squared distance that a new candidate must beat, or infinity
    /// while the heap is not yet full.
    #[inline]
    fn worst_d2(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().expect("heap is non-empty").d2
        }
    }

    fn into_result(self) -> RadiusQueryResult {
        let mut candidates = self.heap.into_vec();
        candidates.sort_unstable();
        let radius = candidates.last().expect("k >= 1").d2.sqrt();
        RadiusQueryResult {
            radius,
            neighbor_indices: candidates.into_iter().map(|c| c.index as usize).collect(),
        }
    }
}

#[derive(Debug)]
enum KdNode {
    Leaf { start: u32, end: u32 },
    Split { dim: u32, value: f64, left: u32, right: u32 },
}

/// Median-split kd-tree over point indices. Splits on the coordinate
/// with the widest spread; leaves hold up to [`KDTREE_LEAF_SIZE`]
/// points.
#[derive(Debug)]
struct KdTree {
    nodes: Vec<KdNode>,
    order: Vec<u32>,
    root: u32,
}

impl KdTree {
    fn build(points: PointSet<'_>) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        let root = Self::build_node(points, &mut order, 0, &mut nodes);
        Self { nodes, order, root }
    }

    fn build_node(points: PointSet<'_>, idxs: &mut [u32], offset: usize, nodes: &mut Vec<KdNode>) -> u32 {
        let len = idxs.len();
        if len > KDTREE_LEAF_SIZE {
            if let Some(dim) = widest_dim(points, idxs) {
                let mid = len / 2;
                idxs.select_nth_unstable_by(mid, |&a, &b| {
                    let ca = points.point(a as usize)[dim];
                    let cb = points.point(b as usize)[dim];
                    ca.partial_cmp(&cb).expect("coordinates are finite")
                });
                let value = points.point(idxs[mid] as usize)[dim];
                let (lo, hi) = idxs.split_at_mut(mid);
                let left = Self::build_node(points, lo, offset, nodes);
                let right = Self::build_node(points, hi, offset + mid, nodes);
                nodes.push(KdNode::Split { dim: dim as u32, value, left, right });
                return (nodes.len() - 1) as u32;
            }
        }
        nodes.push(KdNode::Leaf { start: offset as u32, end: (offset + len) as u32 });
        (nodes.len() - 1) as u32
    }

    fn search(&self, points: PointSet<'_>, query: &[f64], best: &mut KBest) {
        self.visit(self.root, points, query, best);
    }

    fn visit(&self, node: u32, points: PointSet<'_>, query: &[f64], best: &mut KBest) {
        match &self.nodes[node as usize] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[*start as usize..*end as usize] {
                    best.offer(dist2(query, points.point(i as usize)), i);
                }
            }
            KdNode::Split { dim, value, left, right } => {
                let delta = query[*dim as usize] - value;
                let (near, far) = if delta < 0.0 { (*left, *right) } else { (*right, *left) };
                self.visit(near, points, query, best);
                // A far-side point can still tie the current worst
                // candidate and win on index, so only a strictly
                // larger plane distance may prune.
                if delta * delta <= best.worst_d2() {
                    self.visit(far, points, query, best);
                }
            }
        }
    }
}

/// Dimension with the widest coordinate spread over `idxs`, or `None`
/// when every point is identical (zero spread in every dimension).
fn widest_dim(points: PointSet<'_>, idxs: &[u32]) -> Option<usize> {
    let d = points.dim();
    let mut best: Option<(usize, f64)> = None;
    for dim in 0..d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in idxs {
            let c = points.point(i as usize)[dim];
            lo = lo.min(c);
            hi = hi.max(c);
        }
        let spread = hi - lo;
        if spread > 0.0 && best.is_none_or(|(_, s)| spread > s) {
            best = Some((dim, spread));
        }
    }
    best.map(|(dim, _)| dim)
}
