//! Undirected sensor networks and their dissemination delays.
//!
//! Sensor ids are 0-based everywhere in this crate and in every output.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("a network needs at least one sensor")]
    Empty,
    #[error("ring needs n >= 3 (got n = {n})")]
    RingTooSmall { n: usize },
    #[error("ring G({n},{m}) needs 1 <= m < n/2")]
    RingDegree { n: usize, m: usize },
    #[error("self-loop at sensor {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("sensor id {id} out of range for {n} sensors")]
    OutOfRange { id: usize, n: usize },
    #[error("graph is disconnected: sensor {unreached} is unreachable from sensor 0")]
    Disconnected { unreached: usize },
}

/// Connected undirected graph over sensors `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n_sensors: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Circulant graph `G(n, m)`: sensor `k` is adjacent to `(k ± d) mod n`
    /// for `d = 1..=m`.
    pub fn ring(n: usize, m: usize) -> Result<Self, TopologyError> {
        if n < 3 {
            return Err(TopologyError::RingTooSmall { n });
        }
        if m == 0 || 2 * m >= n {
            return Err(TopologyError::RingDegree { n, m });
        }
        let mut edges = Vec::with_capacity(n * m);
        for k in 0..n {
            for d in 1..=m {
                edges.push((k, (k + d) % n));
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self, TopologyError> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self, TopologyError> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges)
    }

    /// Builds a topology from unordered pairs, rejecting self-loops,
    /// duplicates (in either orientation), bad ids and disconnected graphs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        let mut seen = BTreeSet::new();
        let mut neighbors = vec![Vec::new(); n];
        let mut canonical = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            for id in [a, b] {
                if id >= n {
                    return Err(TopologyError::OutOfRange { id, n });
                }
            }
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(TopologyError::DuplicateEdge(key.0, key.1));
            }
            canonical.push(key);
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        canonical.sort_unstable();
        let topology = Self { n_sensors: n, edges: canonical, neighbors };
        let dist = topology.bfs(0);
        if let Some(unreached) = dist.iter().position(Option::is_none) {
            return Err(TopologyError::Disconnected { unreached });
        }
        Ok(topology)
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    /// Edges as sorted `(min, max)` pairs.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor ids of sensor `k`.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.neighbors[k].len()
    }

    /// `{k} ∪ N_k`, sorted.
    pub fn closed_neighborhood(&self, k: usize) -> Vec<usize> {
        let mut v = self.neighbors[k].clone();
        v.push(k);
        v.sort_unstable();
        v
    }

    fn bfs(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_sensors];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes have a distance");
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Hop distances from every sensor (BFS), `dist[l][k]`.
    pub fn hop_distances(&self) -> Vec<Vec<usize>> {
        (0..self.n_sensors)
            .map(|s| {
                self.bfs(s)
                    .into_iter()
                    .map(|d| d.expect("topology is connected"))
                    .collect()
            })
            .collect()
    }

    /// Dissemination delays `ν_{ℓ→k} = max(1, hops(ℓ, k))`.
    pub fn delay_matrix(&self) -> DelayMatrix {
        let nu = self
            .hop_distances()
            .into_iter()
            .map(|row| row.into_iter().map(|d| d.max(1)).collect())
            .collect();
        DelayMatrix { nu }
    }

    pub fn adjacency_matrix<T: Scalar>(&self) -> Matrix<T> {
        let mut a = Matrix::zeros(self.n_sensors, self.n_sensors);
        for &(i, j) in &self.edges {
            a[(i, j)] = T::one();
            a[(j, i)] = T::one();
        }
        a
    }

    pub fn degree_matrix<T: Scalar>(&self) -> Matrix<T> {
        let mut d = Matrix::zeros(self.n_sensors, self.n_sensors);
        for k in 0..self.n_sensors {
            d[(k, k)] = T::of_usize(self.degree(k));
        }
        d
    }

    /// Graph Laplacian `L = D − A`.
    pub fn laplacian<T: Scalar>(&self) -> Matrix<T> {
        &self.degree_matrix::<T>() - &self.adjacency_matrix::<T>()
    }
}

/// `nu[ℓ][k]`: slot index at which sensor `ℓ`'s sample of slot `j` has
/// reached sensor `k` is `j + nu[ℓ][k] - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayMatrix {
    nu: Vec<Vec<usize>>,
}

impl DelayMatrix {
    pub fn get(&self, from: usize, to: usize) -> usize {
        self.nu[from][to]
    }

    pub fn n_sensors(&self) -> usize {
        self.nu.len()
    }

    /// Delays into sensor `k` from every source, `ν_{·→k}`.
    pub fn column(&self, k: usize) -> Vec<usize> {
        self.nu.iter().map(|row| row[k]).collect()
    }

    pub fn max_delay(&self) -> usize {
        self.nu.iter().flatten().copied().max().unwrap_or(1)
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.nu
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_12_2_neighbors() {
        let t = Topology::ring(12, 2).unwrap();
        assert_eq!(t.neighbors(0), &[1, 2, 10, 11]);
        assert!((0..12).all(|k| t.degree(k) == 4));
        assert_eq!(t.edges().len(), 24);
    }

    #[test]
    fn small_ring_is_cycle() {
        let t = Topology::ring(4, 1).unwrap();
        assert!((0..4).all(|k| t.degree(k) == 2));
        assert_eq!(t.neighbors(0), &[1, 3]);
    }

    #[test]
    fn ring_degree_guard() {
        assert_eq!(Topology::ring(12, 6), Err(TopologyError::RingDegree { n: 12, m: 6 }));
        assert_eq!(Topology::ring(12, 0), Err(TopologyError::RingDegree { n: 12, m: 0 }));
        assert_eq!(Topology::ring(2, 1), Err(TopologyError::RingTooSmall { n: 2 }));
    }

    #[test]
    fn edge_list_validation() {
        let p = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(p.neighbors(1), &[0, 2]);
        assert_eq!(Topology::from_edges(2, &[(0, 0)]), Err(TopologyError::SelfLoop(0)));
        assert_eq!(
            Topology::from_edges(4, &[(0, 1), (2, 3)]),
            Err(TopologyError::Disconnected { unreached: 2 })
        );
        assert_eq!(
            Topology::from_edges(3, &[(0, 1), (1, 0), (1, 2)]),
            Err(TopologyError::DuplicateEdge(0, 1))
        );
        assert_eq!(
            Topology::from_edges(3, &[(0, 3)]),
            Err(TopologyError::OutOfRange { id: 3, n: 3 })
        );
        assert_eq!(Topology::from_edges(0, &[]), Err(TopologyError::Empty));
        assert!(Topology::from_edges(1, &[]).is_ok());
    }

    #[test]
    fn delays() {
        let t = Topology::ring(12, 2).unwrap();
        let nu = t.delay_matrix();
        assert_eq!(nu.get(0, 6), 3);
        assert_eq!(nu.column(0), vec![1, 1, 1, 2, 2, 3, 3, 3, 2, 2, 1, 1]);
        assert!((0..12).all(|k| nu.get(k, k) == 1));
        let c = Topology::complete(6).unwrap().delay_matrix();
        assert!(c.rows().iter().flatten().all(|&v| v == 1));
        assert_eq!(c.max_delay(), 1);
    }

    #[test]
    fn laplacian_shape() {
        let l = Topology::path(2).unwrap().laplacian::<f64>();
        assert_eq!(l.to_rows(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let r = Topology::ring(12, 2).unwrap().laplacian::<f64>();
        assert!((0..12).all(|k| r[(k, k)] == 4.0));
        assert!(r.row_sums().iter().all(|&s| s == 0.0));
        assert_eq!(r.asymmetry(), 0.0);
    }
}
