//! Communication topology of the control layer.
//!
//! Nodes are indexed from 0 internally. Edges are undirected with unit
//! weight; each node may carry a non-negative pinning gain that couples it
//! to the frequency reference.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::linalg::{sym_eigen, Matrix};

const CONNECTIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("topology needs at least one node")]
    Empty,
    #[error("node {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("expected {expected} pinning gains, got {got}")]
    PinningLength { expected: usize, got: usize },
    #[error("pinning gain of node {node} must be finite and >= 0, got {gain}")]
    InvalidPinning { node: usize, gain: f64 },
    #[error("edge ({0}, {1}) does not exist")]
    EdgeNotFound(usize, usize),
}

/// Undirected graph plus per-node pinning gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    // stored as (min, max)
    edges: BTreeSet<(usize, usize)>,
    pinning: Vec<f64>,
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl Topology {
    pub fn new(n: usize, edges: &[(usize, usize)], pinning: Vec<f64>) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if pinning.len() != n {
            return Err(GraphError::PinningLength {
                expected: n,
                got: pinning.len(),
            });
        }
        for (node, &gain) in pinning.iter().enumerate() {
            if !(gain.is_finite() && gain >= 0.0) {
                return Err(GraphError::InvalidPinning { node, gain });
            }
        }
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            for node in [i, j] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            set.insert(ordered(i, j));
        }
        Ok(Topology {
            n,
            edges: set,
            pinning,
        })
    }

    /// Ring `0 - 1 - ... - (n-1) - 0`.
    pub fn cycle(n: usize, pinning: Vec<f64>) -> Result<Self, GraphError> {
        let edges: Vec<_> = if n < 3 {
            (1..n).map(|i| (i - 1, i)).collect()
        } else {
            (0..n).map(|i| (i, (i + 1) % n)).collect()
        };
        Topology::new(n, &edges, pinning)
    }

    pub fn path(n: usize, pinning: Vec<f64>) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Topology::new(n, &edges, pinning)
    }

    /// Star with `center` joined to every other node.
    pub fn star(n: usize, center: usize, pinning: Vec<f64>) -> Result<Self, GraphError> {
        let edges: Vec<_> = (0..n).filter(|&i| i != center).map(|i| (center, i)).collect();
        Topology::new(n, &edges, pinning)
    }

    pub fn complete(n: usize, pinning: Vec<f64>) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Topology::new(n, &edges, pinning)
    }

    /// Random connected graph: a random spanning tree plus each remaining
    /// pair with probability `extra_edge_prob`. Pinning is left at zero.
    pub fn random_connected<R: Rng + ?Sized>(n: usize, extra_edge_prob: f64, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut edges = BTreeSet::new();
        for k in 1..n {
            let parent = order[rng.random_range(0..k)];
            edges.insert(ordered(order[k], parent));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if !edges.contains(&(i, j)) && rng.random_bool(extra_edge_prob) {
                    edges.insert((i, j));
                }
            }
        }
        Topology {
            n,
            edges,
            pinning: vec![0.0; n],
        }
    }

    /// Random connected graph with between 1 and `max(1, n/3)` leaders of gain 1.
    pub fn random_pinned<R: Rng + ?Sized>(n: usize, extra_edge_prob: f64, rng: &mut R) -> Self {
        let mut t = Topology::random_connected(n, extra_edge_prob, rng);
        let leaders = rng.random_range(1..=(n / 3).max(1));
        let mut nodes: Vec<usize> = (0..n).collect();
        nodes.shuffle(rng);
        for &i in &nodes[..leaders] {
            t.pinning[i] = 1.0;
        }
        t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pinning(&self) -> &[f64] {
        &self.pinning
    }

    pub fn with_pinning(&self, pinning: Vec<f64>) -> Result<Self, GraphError> {
        let edges: Vec<_> = self.edges.iter().copied().collect();
        Topology::new(self.n, &edges, pinning)
    }

    pub fn has_leader(&self) -> bool {
        self.pinning.iter().any(|&g| g > 0.0)
    }

    /// Undirected edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&ordered(i, j))
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    /// Adjacency as a 0/1 matrix.
    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    pub fn laplacian(&self) -> Matrix {
        let mut l = Matrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            l[(i, j)] = -1.0;
            l[(j, i)] = -1.0;
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
        }
        l
    }

    /// `A = -(L + G)`.
    pub fn pinned_matrix(&self) -> Matrix {
        let mut a = self.laplacian().scale(-1.0);
        for (i, &g) in self.pinning.iter().enumerate() {
            a[(i, i)] -= g;
        }
        a
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Second-smallest Laplacian eigenvalue (0 for a single node).
    pub fn fiedler_value(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let eig = sym_eigen(&self.laplacian()).expect("Laplacian is symmetric and finite");
        eig.eigenvalues[1].max(0.0)
    }

    /// Spectrum of `L`, ascending.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        sym_eigen(&self.laplacian())
            .expect("Laplacian is symmetric and finite")
            .eigenvalues
    }

    pub fn lambda_max_laplacian(&self) -> f64 {
        *self.laplacian_spectrum().last().unwrap()
    }

    /// Smallest eigenvalue of `L + G`.
    pub fn lambda_min_pinned(&self) -> f64 {
        let lg = self.pinned_matrix().scale(-1.0);
        sym_eigen(&lg).expect("L + G is symmetric and finite").min()
    }

    /// Copy without the undirected edge `{i, j}`.
    pub fn remove_edge(&self, i: usize, j: usize) -> Result<Topology, GraphError> {
        let key = ordered(i, j);
        if !self.edges.contains(&key) {
            return Err(GraphError::EdgeNotFound(i, j));
        }
        let mut t = self.clone();
        t.edges.remove(&key);
        Ok(t)
    }

    pub(crate) fn connectivity_tol() -> f64 {
        CONNECTIVITY_TOL
    }
}
