//! Geodesic spectral-clustering parcellation: feature distances on the
//! 6-connected voxel graph, all-pairs shortest paths, classical-MDS
//! embedding of the geodesic matrix, and k-means labeling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::VolumeGrid;
use crate::linalg::{sym_eigen, Mat};
use crate::rng::{self};
use crate::scalar::{fl, fu, Scalar};

/// Euclidean distance between two feature vectors.
pub fn local_distance<F: Scalar>(fv: &[F], fw: &[F]) -> Result<F> {
    if fv.len() != fw.len() {
        return Err(Error::Shape(format!(
            "feature vectors of lengths {} and {}",
            fv.len(),
            fw.len()
        )));
    }
    let ss = fv.iter().zip(fw).fold(F::zero(), |acc, (&a, &b)| {
        let d = a - b;
        acc + d * d
    });
    Ok(ss.sqrt())
}

/// Masked voxel graph under 6-connectivity with feature-distance weights.
#[derive(Debug, Clone)]
pub struct VoxelGraph<F> {
    pub adjacency: Vec<Vec<(usize, F)>>,
}

impl<F: Scalar> VoxelGraph<F> {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(|a| a.len()).sum::<usize>() / 2
    }
}

pub fn build_graph<F: Scalar>(grid: &VolumeGrid, features: &Mat<F>) -> Result<VoxelGraph<F>> {
    let v = grid.n_voxels();
    if features.rows() != v {
        return Err(Error::Shape(format!(
            "{} feature rows for {v} voxels",
            features.rows()
        )));
    }
    let mut adjacency = vec![Vec::new(); v];
    for row in 0..v {
        for nb in grid.neighbors6(row) {
            if nb > row {
                let w = local_distance(features.row(row), features.row(nb))?;
                adjacency[row].push((nb, w));
                adjacency[nb].push((row, w));
            }
        }
    }
    Ok(VoxelGraph { adjacency })
}

/// All-pairs geodesic distances. When the mask is disconnected, pairs in
/// different components get ten times the largest finite distance as a
/// finite surrogate and `connected` is false.
#[derive(Debug, Clone)]
pub struct GeodesicMatrix<F> {
    pub delta: Mat<F>,
    pub connected: bool,
    /// Connected-component id per voxel.
    pub components: Vec<usize>,
}

struct HeapEntry<F> {
    dist: F,
    node: usize,
}

impl<F: Scalar> PartialEq for HeapEntry<F> {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl<F: Scalar> Eq for HeapEntry<F> {}
impl<F: Scalar> PartialOrd for HeapEntry<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<F: Scalar> Ord for HeapEntry<F> {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance through BinaryHeap's max ordering
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then(other.node.cmp(&self.node))
    }
}

fn dijkstra<F: Scalar>(graph: &VoxelGraph<F>, source: usize) -> Vec<F> {
    let n = graph.n_nodes();
    let mut dist = vec![F::infinity(); n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = F::zero();
    heap.push(HeapEntry {
        dist: F::zero(),
        node: source,
    });
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        for &(nb, w) in &graph.adjacency[node] {
            let cand = d + w;
            if cand < dist[nb] {
                dist[nb] = cand;
                heap.push(HeapEntry {
                    dist: cand,
                    node: nb,
                });
            }
        }
    }
    dist
}

fn connected_components<F: Scalar>(graph: &VoxelGraph<F>) -> Vec<usize> {
    let n = graph.n_nodes();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0usize;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut queue = std::collections::VecDeque::from(vec![start]);
        comp[start] = next;
        while let Some(u) = queue.pop_front() {
            for &(nb, _) in &graph.adjacency[u] {
                if comp[nb] == usize::MAX {
                    comp[nb] = next;
                    queue.push_back(nb);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Per-source Dijkstra over the whole graph; sources run in parallel and
/// the result is symmetrized.
pub fn geodesics<F: Scalar>(graph: &VoxelGraph<F>) -> Result<GeodesicMatrix<F>> {
    let n = graph.n_nodes();
    if n == 0 {
        return Err(Error::Param("empty graph".into()));
    }
    let rows: Vec<Vec<F>> = (0..n)
        .into_par_iter()
        .map(|source| dijkstra(graph, source))
        .collect();
    let components = connected_components(graph);
    let connected = components.iter().all(|&c| c == 0);

    let mut delta = Mat::zeros(n, n);
    if connected {
        for (i, row) in rows.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                delta[(i, j)] = d;
            }
        }
    } else {
        let mut max_finite = F::zero();
        for row in &rows {
            for &d in row {
                if d.is_finite() {
                    max_finite = max_finite.max(d);
                }
            }
        }
        let surrogate = max_finite * fl::<F>(10.0);
        for (i, row) in rows.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                delta[(i, j)] = if d.is_finite() { d } else { surrogate };
            }
        }
    }
    // exact symmetry (addition order can differ between directions)
    for i in 0..n {
        for j in (i + 1)..n {
            let m = (delta[(i, j)] + delta[(j, i)]) * fl::<F>(0.5);
            delta[(i, j)] = m;
            delta[(j, i)] = m;
        }
    }
    Ok(GeodesicMatrix {
        delta,
        connected,
        components,
    })
}

/// Classical MDS: double-centers the squared distances, eigendecomposes,
/// and scales the top eigenvectors by the square roots of their
/// eigenvalues (negative eigenvalues clamp to zero). Column signs follow
/// the largest-magnitude coordinate.
pub fn spectral_embed<F: Scalar>(geo: &GeodesicMatrix<F>, dims: usize) -> Result<Mat<F>> {
    let v = geo.delta.rows();
    if dims == 0 || dims >= v {
        return Err(Error::Param(format!(
            "dims must be in 1..={}, got {dims}",
            v.saturating_sub(1)
        )));
    }
    let mut sq = Mat::zeros(v, v);
    for i in 0..v {
        for j in 0..v {
            let d = geo.delta[(i, j)];
            sq[(i, j)] = d * d;
        }
    }
    let mut row_mean = vec![F::zero(); v];
    let mut grand = F::zero();
    for i in 0..v {
        let m = sq.row(i).iter().copied().sum::<F>() / fu(v);
        row_mean[i] = m;
        grand += m;
    }
    grand /= fu(v);
    let mut b = Mat::zeros(v, v);
    let half = fl::<F>(-0.5);
    for i in 0..v {
        for j in 0..v {
            b[(i, j)] = half * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand);
        }
    }
    let eig = sym_eigen(&b)?;
    let mut coords = Mat::zeros(v, dims);
    for k in 0..dims {
        let scale = eig.values[k].max(F::zero()).sqrt();
        for i in 0..v {
            coords[(i, k)] = eig.vectors[(i, k)] * scale;
        }
    }
    // sign convention per column
    for k in 0..dims {
        let col = coords.col(k);
        let mut best = 0usize;
        for (i, val) in col.iter().enumerate() {
            if val.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < F::zero() {
            for i in 0..v {
                coords[(i, k)] = -coords[(i, k)];
            }
        }
    }
    Ok(coords)
}

/// Where a parcellation's feature space came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureProvenance {
    Pls { k: usize },
    Glm,
    Coordinates,
    Direct,
}

impl std::fmt::Display for FeatureProvenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureProvenance::Pls { k } => write!(f, "pls{k}"),
            FeatureProvenance::Glm => write!(f, "glm"),
            FeatureProvenance::Coordinates => write!(f, "sc"),
            FeatureProvenance::Direct => write!(f, "direct"),
        }
    }
}

/// Per-voxel parcel labels.
#[derive(Debug, Clone)]
pub struct Parcellation {
    pub labels: Vec<usize>,
    pub k: usize,
    pub provenance: FeatureProvenance,
    pub rng_seed: u64,
}

const KMEANS_MAX_ITER: usize = 300;
const KMEANS_TOL: f64 = 1e-9;

fn squared_distance<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

fn kmeans_plus_plus_init<F: Scalar>(
    coords: &Mat<F>,
    k: usize,
    rng: &mut rng::SeededRng,
) -> Vec<Vec<F>> {
    let n = coords.rows();
    let mut centers: Vec<Vec<F>> = Vec::with_capacity(k);
    let first = rng::below(rng, n);
    centers.push(coords.row(first).to_vec());
    let mut d2: Vec<F> = (0..n)
        .map(|i| squared_distance(coords.row(i), &centers[0]))
        .collect();
    while centers.len() < k {
        let total: F = d2.iter().copied().sum();
        let idx = if total > F::zero() {
            let mut target = rng::uniform::<F>(rng) * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            // all mass at the chosen centers: spread deterministically
            rng::below(rng, n)
        };
        centers.push(coords.row(idx).to_vec());
        for i in 0..n {
            let d = squared_distance(coords.row(i), centers.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centers
}

fn assign<F: Scalar>(coords: &Mat<F>, centers: &[Vec<F>]) -> (Vec<usize>, F) {
    let n = coords.rows();
    let mut labels = vec![0usize; n];
    let mut wcss = F::zero();
    for i in 0..n {
        let p = coords.row(i);
        let mut best = 0usize;
        let mut best_d = squared_distance(p, &centers[0]);
        for (c, center) in centers.iter().enumerate().skip(1) {
            let d = squared_distance(p, center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best;
        wcss += best_d;
    }
    (labels, wcss)
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty<F: Scalar>(coords: &Mat<F>, centers: &mut [Vec<F>], labels: &mut [usize]) {
    let k = centers.len();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let empty = match counts.iter().position(|&c| c == 0) {
            Some(e) => e,
            None => return,
        };
        let mut worst = 0usize;
        let mut worst_d = F::neg_infinity();
        for i in 0..coords.rows() {
            if counts[labels[i]] <= 1 {
                continue;
            }
            let d = squared_distance(coords.row(i), &centers[labels[i]]);
            if d > worst_d {
                worst_d = d;
                worst = i;
            }
        }
        labels[worst] = empty;
        centers[empty] = coords.row(worst).to_vec();
    }
}

fn lloyd<F: Scalar>(coords: &Mat<F>, mut centers: Vec<Vec<F>>) -> (Vec<usize>, F) {
    let n = coords.rows();
    let dims = coords.cols();
    let k = centers.len();
    let tol = fl::<F>(KMEANS_TOL);
    for _ in 0..KMEANS_MAX_ITER {
        let (mut l, _) = assign(coords, &centers);
        repair_empty(coords, &mut centers, &mut l);
        let mut sums = vec![vec![F::zero(); dims]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[l[i]] += 1;
            for (s, &x) in sums[l[i]].iter_mut().zip(coords.row(i)) {
                *s += x;
            }
        }
        let mut movement = F::zero();
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let inv = F::one() / fu::<F>(counts[c]);
            let mut delta = F::zero();
            for (dim, s) in sums[c].iter().enumerate() {
                let new = *s * inv;
                let d = new - centers[c][dim];
                delta += d * d;
                centers[c][dim] = new;
            }
            movement = movement.max(delta.sqrt());
        }
        if movement < tol {
            break;
        }
    }
    let (mut labels, _) = assign(coords, &centers);
    repair_empty(coords, &mut centers, &mut labels);
    let mut wcss = F::zero();
    for i in 0..n {
        wcss += squared_distance(coords.row(i), &centers[labels[i]]);
    }
    (labels, wcss)
}

/// Relabels so parcel ids appear in first-occurrence order.
fn canonical_relabel(labels: &mut [usize], k: usize) {
    let mut map = vec![usize::MAX; k];
    let mut next = 0usize;
    for l in labels.iter_mut() {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
        *l = map[*l];
    }
}

/// k-means with k-means++ starts, best of `n_restarts` by within-cluster
/// sum of squares (ties toward the earlier restart). Deterministic given
/// `rng_seed`.
pub fn cmeans<F: Scalar>(
    coords: &Mat<F>,
    k_p: usize,
    rng_seed: u64,
    n_restarts: usize,
) -> Result<Parcellation> {
    let v = coords.rows();
    if k_p == 0 || k_p > v {
        return Err(Error::Param(format!(
            "parcel count must be in 1..={v}, got {k_p}"
        )));
    }
    let restarts = n_restarts.max(1);
    let mut best: Option<(Vec<usize>, F)> = None;
    for r in 0..restarts {
        let mut stream = rng::substream(rng_seed, r as u64);
        let centers = kmeans_plus_plus_init(coords, k_p, &mut stream);
        let (labels, wcss) = lloyd(coords, centers);
        let better = match &best {
            None => true,
            Some((_, best_wcss)) => wcss < *best_wcss,
        };
        if better {
            best = Some((labels, wcss));
        }
    }
    let (mut labels, _) = best.expect("at least one restart");
    canonical_relabel(&mut labels, k_p);
    Ok(Parcellation {
        labels,
        k: k_p,
        provenance: FeatureProvenance::Direct,
        rng_seed,
    })
}

/// Voxel grid coordinates as a feature matrix (the spatial-clustering
/// baseline clusters exactly these).
pub fn coordinate_features<F: Scalar>(grid: &VolumeGrid) -> Mat<F> {
    Mat::from_fn(grid.n_voxels(), 3, |row, axis| {
        fl::<F>(grid.coord_of_row(row)[axis] as f64)
    })
}

/// Knobs for the end-to-end parcellation.
#[derive(Debug, Clone)]
pub struct ParcellateParams {
    pub k_p: usize,
    pub dims: usize,
    pub rng_seed: u64,
    pub n_restarts: usize,
}

impl Default for ParcellateParams {
    fn default() -> Self {
        ParcellateParams {
            k_p: 600,
            dims: 20,
            rng_seed: 0,
            n_restarts: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParcellationOutput<F> {
    pub parcellation: Parcellation,
    pub embedding: Mat<F>,
    pub geodesic_connected: bool,
    pub components: Vec<usize>,
}

/// Full pipeline: feature graph, geodesics, spectral embedding, k-means.
/// Works for any V x F feature matrix (PLS features, GLM t-vectors, ...).
/// The embedding dimension is clamped to V-1.
pub fn parcellate_pipeline<F: Scalar>(
    features: &Mat<F>,
    grid: &VolumeGrid,
    params: &ParcellateParams,
    provenance: FeatureProvenance,
) -> Result<ParcellationOutput<F>> {
    let graph = build_graph(grid, features)?;
    let geo = geodesics(&graph)?;
    let dims = params.dims.min(grid.n_voxels() - 1).max(1);
    let embedding = spectral_embed(&geo, dims)?;
    let mut parcellation = cmeans(&embedding, params.k_p, params.rng_seed, params.n_restarts)?;
    parcellation.provenance = provenance;
    Ok(ParcellationOutput {
        parcellation,
        embedding,
        geodesic_connected: geo.connected,
        components: geo.components,
    })
}
