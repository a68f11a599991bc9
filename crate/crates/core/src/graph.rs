//! Undirected communication topology and its matrix algebra.
//!
//! Nodes are stored 0-based. Scenario files use 1-based node ids; use
//! [`Graph::from_one_based`] when reading them. The first node of each edge
//! pair is the edge's initial node, which fixes the sign of the incidence
//! matrix column.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

/// Structural errors detected when constructing a [`Graph`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge {edge} references node {node}, but the graph has {node_count} nodes")]
    NodeOutOfRange {
        edge: usize,
        node: usize,
        node_count: usize,
    },
    #[error("edge {edge} is a self-loop on node {node}")]
    SelfLoop { edge: usize, node: usize },
    #[error("edge {edge} duplicates an earlier edge between nodes {a} and {b}")]
    Duplicate { edge: usize, a: usize, b: usize },
}

/// Undirected graph with an ordered edge list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from 0-based edge pairs, rejecting self-loops,
    /// duplicates (in either orientation) and out-of-range nodes.
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); node_count];
        for (k, &(a, b)) in edges.iter().enumerate() {
            for node in [a, b] {
                if node >= node_count {
                    return Err(GraphError::NodeOutOfRange {
                        edge: k,
                        node,
                        node_count,
                    });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop { edge: k, node: a });
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(GraphError::Duplicate { edge: k, a, b });
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        Ok(Self {
            node_count,
            edges,
            adjacency,
        })
    }

    /// Builds a graph from 1-based edge pairs as written in scenario files.
    pub fn from_one_based(node_count: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut zero_based = Vec::with_capacity(edges.len());
        for (k, &(a, b)) in edges.iter().enumerate() {
            for node in [a, b] {
                if node == 0 || node > node_count {
                    return Err(GraphError::NodeOutOfRange {
                        edge: k,
                        node,
                        node_count,
                    });
                }
            }
            zero_based.push((a - 1, b - 1));
        }
        Self::new(node_count, zero_based)
    }

    /// The eight-node spanning tree used in the reference formation run:
    /// (1,2), (2,3), (3,4), (3,5), (4,6), (5,7), (6,8).
    pub fn reference_tree() -> Self {
        Self::from_one_based(8, &[(1, 2), (2, 3), (3, 4), (3, 5), (4, 6), (5, 7), (6, 8)])
            .expect("reference tree is well formed")
    }

    /// Path graph 0–1–…–(n−1).
    pub fn path(node_count: usize) -> Result<Self, GraphError> {
        Self::new(node_count, (1..node_count).map(|i| (i - 1, i)).collect())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    /// Incidence matrix `B` (N × |E|): `+1` at the initial node of each edge,
    /// `−1` at the terminal node.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.node_count, self.edges.len());
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            b[(i, k)] = 1.0;
            b[(j, k)] = -1.0;
        }
        b
    }

    /// Graph Laplacian `L = B Bᵀ`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let b = self.incidence_matrix();
        &b * b.transpose()
    }

    /// Edge Laplacian `L_e = Bᵀ B`.
    pub fn edge_laplacian(&self) -> DMatrix<f64> {
        let b = self.incidence_matrix();
        b.transpose() * &b
    }

    /// Relative states `z = Bᵀ x`, one per edge: `z_k = x_i − x_j` for edge `(i, j)`.
    pub fn edge_differences(&self, x: &[f64]) -> Vec<f64> {
        self.edges.iter().map(|&(i, j)| x[i] - x[j]).collect()
    }

    /// Connected components, each sorted, ordered by their smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut visited = vec![false; self.node_count];
        let mut components = Vec::new();
        for start in 0..self.node_count {
            if visited[start] {
                continue;
            }
            let mut component = Vec::new();
            let mut queue = VecDeque::from([start]);
            visited[start] = true;
            while let Some(node) = queue.pop_front() {
                component.push(node);
                for &next in &self.adjacency[node] {
                    if !visited[next] {
                        visited[next] = true;
                        queue.push_back(next);
                    }
                }
            }
            component.sort_unstable();
            components.push(component);
        }
        components
    }

    /// Checks that the graph is connected and acyclic (a spanning tree).
    pub fn check_tree(&self) -> TreeReport {
        let components = self.components();
        // A forest with c components has exactly N − c edges; anything more closes a cycle.
        let forest_edges = self.node_count - components.len();
        TreeReport {
            has_cycle: self.edges.len() > forest_edges,
            components,
        }
    }
}

/// Outcome of [`Graph::check_tree`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeReport {
    /// Connected components (0-based node ids); a single entry when connected.
    pub components: Vec<Vec<usize>>,
    pub has_cycle: bool,
}

impl TreeReport {
    pub fn is_connected(&self) -> bool {
        self.components.len() == 1
    }

    pub fn is_tree(&self) -> bool {
        self.is_connected() && !self.has_cycle
    }

    /// Human-readable problems, empty for a tree.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.is_connected() {
            out.push(format!("graph is disconnected: components {self}"));
        }
        if self.has_cycle {
            out.push("graph contains a cycle".to_owned());
        }
        out
    }
}

impl fmt::Display for TreeReport {
    /// Lists components with 1-based ids, e.g. `{1,2} {3,4}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, component) in self.components.iter().enumerate() {
            if c > 0 {
                write!(f, " ")?;
            }
            let ids: Vec<String> = component.iter().map(|n| (n + 1).to_string()).collect();
            write!(f, "{{{}}}", ids.join(","))?;
        }
        Ok(())
    }
}
