//! Classical (Torgerson) MDS and ISOMAP over a [`DistanceMatrix`].

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::DistanceMatrix;

/// Eigenvalues at or below this fraction of the largest magnitude count as zero.
pub const POSITIVE_EIGENVALUE_CUTOFF: f64 = 1e-10;
/// Allowed eigenpair residual `‖Bv − λv‖` relative to `‖B‖₂`.
pub const EIGEN_RESIDUAL_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_K_NEIGHBORS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingCoordinates {
    labels: Vec<String>,
    coords: Vec<f64>,
    dims: usize,
    eigenvalues: Vec<f64>,
}

impl EmbeddingCoordinates {
    /// `coords` is row-major, `labels.len() × dims`.
    pub fn new(labels: Vec<String>, coords: Vec<f64>, dims: usize, eigenvalues: Vec<f64>) -> Self {
        assert_eq!(coords.len(), labels.len() * dims, "coordinate buffer size");
        EmbeddingCoordinates {
            labels,
            coords,
            dims,
            eigenvalues,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dims..(i + 1) * self.dims]
    }

    /// Full spectrum of the centered Gram matrix, descending. The first
    /// `dims()` entries belong to the returned coordinate columns.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Double-centered Gram matrix `B = −½ J D² J`.
pub fn centered_gram(d: &DistanceMatrix) -> DMatrix<f64> {
    let n = d.len();
    let sq = DMatrix::from_fn(n, n, |i, j| d.get(i, j) * d.get(i, j));
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand))
}

pub fn classical_mds(d: &DistanceMatrix, k: usize) -> Result<EmbeddingCoordinates> {
    if k == 0 {
        return Err(Error::Config("MDS needs at least one output dimension".into()));
    }
    let n = d.len();
    if n == 0 {
        return Err(Error::EmptyInput("distance matrix has no rows".into()));
    }
    let b = centered_gram(d);
    let eig = SymmetricEigen::new(b.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let scale = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let cutoff = POSITIVE_EIGENVALUE_CUTOFF * scale;
    let positive = eigenvalues.iter().take_while(|&&l| l > cutoff && l > 0.0).count();
    let dims = k.min(positive);
    if dims < k {
        log::warn!("only {positive} positive eigenvalues; returning {dims} of {k} requested dimensions");
    }

    let mut coords = vec![0.0; n * dims];
    for (c, &col) in order.iter().take(dims).enumerate() {
        let lambda = eig.eigenvalues[col];
        let mut v = eig.eigenvectors.column(col).into_owned();
        let residual = (&b * &v - &v * lambda).norm();
        let bound = EIGEN_RESIDUAL_TOLERANCE * scale;
        if residual > bound {
            return Err(Error::EigenResidual { residual, bound });
        }
        let pivot = (0..n).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        let s = lambda.sqrt();
        for i in 0..n {
            coords[i * dims + c] = v[i] * s;
        }
    }
    Ok(EmbeddingCoordinates::new(
        d.labels().to_vec(),
        coords,
        dims,
        eigenvalues,
    ))
}

/// Undirected weighted graph over matrix rows.
#[derive(Clone, Debug)]
pub struct NeighborhoodGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl NeighborhoodGraph {
    /// Edges `(u, v, w)`; duplicate edges keep the smaller weight.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut add = |u: usize, v: usize, w: f64| match adjacency[u].iter_mut().find(|e| e.0 == v) {
            Some(e) => e.1 = e.1.min(w),
            None => adjacency[u].push((v, w)),
        };
        for (u, v, w) in edges {
            if u != v {
                add(u, v, w);
                add(v, u, w);
            }
        }
        for list in &mut adjacency {
            list.sort_by_key(|e| e.0);
        }
        NeighborhoodGraph { adjacency }
    }

    /// Edge `{i, j}` whenever either endpoint has the other among its `k`
    /// nearest rows (ties broken by row index), weighted by `d(i, j)`.
    pub fn knn(d: &DistanceMatrix, k: usize) -> Self {
        let n = d.len();
        let mut edges = Vec::new();
        for i in 0..n {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| d.get(i, a).total_cmp(&d.get(i, b)).then(a.cmp(&b)));
            edges.extend(others.into_iter().take(k).map(|j| (i, j, d.get(i, j))));
        }
        Self::from_edges(n, edges)
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.len()];
        let mut out = Vec::new();
        for start in 0..self.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Dijkstra from `source`; unreachable nodes get `f64::INFINITY`.
    pub fn shortest_paths_from(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Candidate(0.0, source));
        while let Some(Candidate(du, u)) = heap.pop() {
            if du > dist[u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let alt = du + w;
                if alt < dist[v] {
                    dist[v] = alt;
                    heap.push(Candidate(alt, v));
                }
            }
        }
        dist
    }

    /// Row-major all-pairs geodesics, symmetrized by taking the smaller of
    /// the two directions.
    pub fn all_pairs_shortest_paths(&self) -> Vec<f64> {
        let n = self.len();
        let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| self.shortest_paths_from(s)).collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = rows[i][j].min(rows[j][i]);
            }
        }
        out
    }
}

/// Min-heap entry ordered by distance, then node.
#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug)]
pub struct Isomap {
    pub coordinates: EmbeddingCoordinates,
    pub geodesics: DistanceMatrix,
    /// Rows of the input matrix that were embedded, ascending.
    pub kept: Vec<usize>,
}

/// ISOMAP: k-NN graph, geodesic distances, then classical MDS. A disconnected
/// graph is an error unless `largest_component` is set, in which case only
/// the largest component (the earliest one on a size tie) is embedded.
pub fn isomap(d: &DistanceMatrix, k_neighbors: usize, dims: usize, largest_component: bool) -> Result<Isomap> {
    if k_neighbors == 0 {
        return Err(Error::Config("ISOMAP needs k_neighbors >= 1".into()));
    }
    if dims == 0 {
        return Err(Error::Config("ISOMAP needs at least one output dimension".into()));
    }
    if d.is_empty() {
        return Err(Error::EmptyInput("distance matrix has no rows".into()));
    }
    let graph = NeighborhoodGraph::knn(d, k_neighbors);
    let components = graph.components();
    let (d, graph, kept) = if components.len() == 1 {
        (d.clone(), graph, (0..d.len()).collect())
    } else {
        if !largest_component {
            let mut sizes: Vec<usize> = components.iter().map(Vec::len).collect();
            sizes.sort_unstable_by(|a, b| b.cmp(a));
            return Err(Error::DisconnectedGraph { sizes });
        }
        let largest = components
            .iter()
            .fold(&components[0], |best, c| if c.len() > best.len() { c } else { best });
        log::warn!(
            "neighborhood graph has {} components; embedding the largest ({} of {} rows)",
            components.len(),
            largest.len(),
            d.len()
        );
        let sub = d.select(largest);
        let graph = NeighborhoodGraph::knn(&sub, k_neighbors);
        (sub, graph, largest.clone())
    };
    let geodesics = DistanceMatrix::new(d.labels().to_vec(), graph.all_pairs_shortest_paths())?;
    let coordinates = classical_mds(&geodesics, dims)?;
    Ok(Isomap {
        coordinates,
        geodesics,
        kept,
    })
}
