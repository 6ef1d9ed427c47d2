//! Road network between cell centroids.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CellId;
use crate::{Error, Result};

/// Undirected network link between two cell centroids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from_cell: CellId,
    pub to_cell: CellId,
    pub length_m: f64,
}

/// Adjacency-list graph over cell indices.
#[derive(Debug, Clone)]
pub struct Graph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

#[derive(Copy, Clone, PartialEq)]
struct Frontier {
    cost: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, ties broken by node for a deterministic order
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Graph {
    pub fn undirected(
        n_nodes: usize,
        links: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n_nodes];
        for (a, b, len) in links {
            if a >= n_nodes || b >= n_nodes {
                return Err(Error::Data(format!(
                    "edge ({a}, {b}) outside {n_nodes} nodes"
                )));
            }
            if !(len >= 0.0 && len.is_finite()) {
                return Err(Error::Data(format!(
                    "edge ({a}, {b}) has invalid length {len}"
                )));
            }
            adjacency[a].push((b, len));
            if a != b {
                adjacency[b].push((a, len));
            }
        }
        Ok(Graph { adjacency })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbours(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    /// Multi-source Dijkstra: distance from every node to the nearest
    /// source. Unreachable nodes get `f64::INFINITY`.
    pub fn distances_from(&self, sources: &[usize]) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.n_nodes()];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            if dist[s] > 0.0 {
                dist[s] = 0.0;
                heap.push(Frontier { cost: 0.0, node: s });
            }
        }
        while let Some(Frontier { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &(next, len) in &self.adjacency[node] {
                let c = cost + len;
                if c < dist[next] {
                    dist[next] = c;
                    heap.push(Frontier {
                        cost: c,
                        node: next,
                    });
                }
            }
        }
        dist
    }

    /// Shortest distance from `source` to any node flagged in `is_target`,
    /// stopping as soon as the first target is settled.
    pub fn distance_to_nearest(&self, source: usize, is_target: &[bool]) -> f64 {
        let mut dist = vec![f64::INFINITY; self.n_nodes()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Frontier {
            cost: 0.0,
            node: source,
        });
        while let Some(Frontier { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            if is_target[node] {
                return cost;
            }
            for &(next, len) in &self.adjacency[node] {
                let c = cost + len;
                if c < dist[next] {
                    dist[next] = c;
                    heap.push(Frontier {
                        cost: c,
                        node: next,
                    });
                }
            }
        }
        f64::INFINITY
    }

    /// Row-major all-pairs distance matrix.
    pub fn all_pairs(&self) -> Vec<f64> {
        let n = self.n_nodes();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|s| self.distances_from(&[s]))
            .collect();
        rows.into_iter().flatten().collect()
    }
}
