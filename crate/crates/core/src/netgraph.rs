//! Follower communication topology and leader attachment.
//!
//! Edge convention: `weights[(i, j)] = a_ij > 0` means follower `i` receives
//! information from follower `j` (an edge `j → i`).

use std::collections::{BTreeSet, VecDeque};

use crate::error::{dim_err, Error, Result};
use crate::matcore::{self, Complex, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    weights: Matrix,
    leader_gains: Vec<f64>,
}

/// Outcome of the spanning-tree / leader-attachment check.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphReport {
    pub holds: bool,
    /// Nodes (0-based) from which every follower is reachable.
    pub roots: BTreeSet<usize>,
    pub self_loops: Vec<usize>,
    pub leader_attached_to_root: bool,
}

impl GraphReport {
    /// Short reason for a failing report, `None` when the assumption holds.
    pub fn failure(&self) -> Option<GraphFailure> {
        if !self.self_loops.is_empty() {
            Some(GraphFailure::SelfLoop)
        } else if self.roots.is_empty() {
            Some(GraphFailure::NoSpanningTree)
        } else if !self.leader_attached_to_root {
            Some(GraphFailure::LeaderNotConnectedToRoot)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFailure {
    SelfLoop,
    NoSpanningTree,
    LeaderNotConnectedToRoot,
}

impl std::fmt::Display for GraphFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GraphFailure::SelfLoop => "graph has self-loops",
            GraphFailure::NoSpanningTree => "graph has no spanning tree",
            GraphFailure::LeaderNotConnectedToRoot => "leader not connected to a root",
        })
    }
}

impl CommGraph {
    /// Builds a graph from an `n × n` nonnegative weight matrix and a
    /// length-`n` nonnegative leader-gain vector. Self-loops are accepted
    /// here and rejected by [`CommGraph::check_assumption`].
    pub fn new(weights: Matrix, leader_gains: Vec<f64>) -> Result<Self> {
        matcore::ensure_square(&weights)?;
        if leader_gains.len() != weights.nrows() {
            return Err(dim_err(format!(
                "{} leader gains for {} followers",
                leader_gains.len(),
                weights.nrows()
            )));
        }
        matcore::ensure_finite(&weights, "graph weights")?;
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidArgument("graph weights must be nonnegative".into()));
        }
        if leader_gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::InvalidArgument(
                "leader gains must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { weights, leader_gains })
    }

    /// Unit-weight graph from directed edges `(from, to)`, 0-based.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], leader_gains: Vec<f64>) -> Result<Self> {
        let mut w = Matrix::zeros(n, n);
        for &(from, to) in edges {
            if from >= n || to >= n {
                return Err(dim_err(format!("edge ({from}, {to}) out of range for {n} nodes")));
            }
            w[(to, from)] = 1.0;
        }
        Self::new(w, leader_gains)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn leader_gains(&self) -> &[f64] {
        &self.leader_gains
    }

    /// In-degrees `d_i = Σ_j a_ij`.
    pub fn degrees(&self) -> Vec<f64> {
        self.weights.row_iter().map(|r| r.sum()).collect()
    }

    pub fn degree_matrix(&self) -> Matrix {
        Matrix::from_diagonal(&nalgebra::DVector::from_vec(self.degrees()))
    }

    /// `L = D − A`.
    pub fn laplacian(&self) -> Matrix {
        self.degree_matrix() - &self.weights
    }

    /// Followers reachable from `start` along information-flow edges.
    fn reachable_from(&self, start: usize) -> Vec<bool> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(j) = queue.pop_front() {
            for i in 0..n {
                if !seen[i] && self.weights[(i, j)] > 0.0 {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        seen
    }

    /// Spanning-tree and leader-attachment check by reachability search.
    pub fn check_assumption(&self) -> GraphReport {
        let n = self.n();
        let roots: BTreeSet<usize> = (0..n)
            .filter(|&r| self.reachable_from(r).iter().all(|&s| s))
            .collect();
        let self_loops: Vec<usize> = (0..n).filter(|&i| self.weights[(i, i)] != 0.0).collect();
        let leader_attached_to_root = roots.iter().any(|&r| self.leader_gains[r] > 0.0);
        GraphReport {
            holds: !roots.is_empty() && leader_attached_to_root && self_loops.is_empty(),
            roots,
            self_loops,
            leader_attached_to_root,
        }
    }

    /// `(I + D + G)⁻¹ (L + G)`.
    pub fn coupling_matrix(&self) -> Matrix {
        let n = self.n();
        let mut m = self.laplacian();
        let degrees = self.degrees();
        for i in 0..n {
            m[(i, i)] += self.leader_gains[i];
            let scale = 1.0 / (1.0 + degrees[i] + self.leader_gains[i]);
            for j in 0..n {
                m[(i, j)] *= scale;
            }
        }
        m
    }

    pub fn coupling_eigenvalues(&self) -> Result<Vec<Complex>> {
        matcore::eigenvalues(&self.coupling_matrix())
    }
}
