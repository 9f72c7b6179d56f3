//! Difference-constraint graphs.
//!
//! Node 0 is the reference token. An edge `j -> k` with weight `c` encodes
//! `z_k - z_j <= c`, so the shortest distance `d(0, i)` bounds `z_i - z_0`
//! from above and `-d(i, 0)` bounds it from below.

use crate::error::{Error, Result};

/// Dense constraint graph over `n` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintGraph {
    n: usize,
    weights: Vec<f64>,
}

/// Tightest bounds on `z_i - z_0` implied by a graph. Infinite when
/// unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBounds {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ConstraintGraph {
    /// Graph with no constraints.
    pub fn new(n: usize) -> Self {
        ConstraintGraph { n, weights: vec![f64::INFINITY; n * n] }
    }

    /// Graph with the prior `z_i - z_0 >= -bound` for every node.
    pub fn with_lower_prior(n: usize, bound: f64) -> Self {
        let mut g = Self::new(n);
        for i in 1..n {
            g.add_constraint(i, 0, bound);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Record `z_to - z_from <= c`, keeping the tightest value per edge.
    pub fn add_constraint(&mut self, from: usize, to: usize, c: f64) {
        if from == to {
            return;
        }
        let w = &mut self.weights[from * self.n + to];
        if c < *w {
            *w = c;
        }
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.weights[from * self.n + to]
    }

    /// Record the observation that `winner` was the argmax under `bias`
    /// (indexed by node, `bias[0]` normally zero).
    pub fn add_argmax_observation(&mut self, winner: usize, bias: &[f64]) {
        for j in 0..self.n {
            if j != winner {
                self.add_constraint(winner, j, bias[winner] - bias[j]);
            }
        }
    }

    fn bellman_ford(&self, source: usize, reversed: bool) -> Result<Vec<f64>> {
        let n = self.n;
        let mut dist = vec![f64::INFINITY; n];
        dist[source] = 0.0;
        let w = |u: usize, v: usize| if reversed { self.weights[v * n + u] } else { self.weights[u * n + v] };
        for round in 0..n {
            let mut changed = false;
            for u in 0..n {
                if !dist[u].is_finite() {
                    continue;
                }
                for v in 0..n {
                    let c = w(u, v);
                    if c.is_finite() && dist[u] + c < dist[v] {
                        dist[v] = dist[u] + c;
                        changed = true;
                    }
                }
            }
            if !changed {
                return Ok(dist);
            }
            if round == n - 1 {
                let node = (0..n)
                    .find(|&v| (0..n).any(|u| dist[u].is_finite() && dist[u] + w(u, v) < dist[v]))
                    .unwrap_or(0);
                return Err(Error::NegativeCycle { node });
            }
        }
        Ok(dist)
    }
}

/// Tightest bounds via Bellman-Ford from node 0 on the graph and on its
/// reverse.
pub fn shortest_path_bounds(graph: &ConstraintGraph) -> Result<GraphBounds> {
    if graph.is_empty() {
        return Ok(GraphBounds { alpha: vec![], beta: vec![] });
    }
    let beta = graph.bellman_ford(0, false)?;
    let to_zero = graph.bellman_ford(0, true)?;
    Ok(GraphBounds { alpha: to_zero.iter().map(|d| -d).collect(), beta })
}

/// All-pairs shortest distances maintained under batches of new edges that
/// all leave one node, which is exactly what an argmax observation adds.
#[derive(Debug, Clone)]
pub struct IncrementalBounds {
    n: usize,
    dist: Vec<f64>,
    scratch: Vec<f64>,
}

impl IncrementalBounds {
    /// Start from the box prior `-bound <= z_i - z_0 <= 0`.
    pub fn new(n: usize, bound: f64) -> Self {
        let mut dist = vec![0.0; n * n];
        for u in 0..n {
            for v in 0..n {
                dist[u * n + v] = match (u, v) {
                    _ if u == v => 0.0,
                    (0, _) => 0.0,
                    _ => bound,
                };
            }
        }
        IncrementalBounds { n, dist, scratch: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn distance(&self, u: usize, v: usize) -> f64 {
        self.dist[u * self.n + v]
    }

    /// Upper bound on `z_i - z_0`.
    pub fn beta(&self, i: usize) -> f64 {
        self.dist[i]
    }

    /// Lower bound on `z_i - z_0`.
    pub fn alpha(&self, i: usize) -> f64 {
        -self.dist[i * self.n]
    }

    /// Add `winner -> j` edges with weight `bias[winner] - bias[j]`.
    pub fn observe_argmax(&mut self, winner: usize, bias: &[f64]) -> Result<()> {
        let n = self.n;
        let k = winner;
        // Best new distances out of k.
        let row_k = &self.dist[k * n..(k + 1) * n];
        self.scratch.copy_from_slice(row_k);
        for j in 0..n {
            if j == k {
                continue;
            }
            let w = bias[k] - bias[j];
            let row_j = &self.dist[j * n..(j + 1) * n];
            for (s, d) in self.scratch.iter_mut().zip(row_j) {
                let c = w + d;
                if c < *s {
                    *s = c;
                }
            }
        }
        if self.scratch[k] < -1e-9 {
            return Err(Error::NegativeCycle { node: k });
        }
        self.scratch[k] = 0.0;
        for u in 0..n {
            let duk = self.dist[u * n + k];
            let row_u = &mut self.dist[u * n..(u + 1) * n];
            for (d, s) in row_u.iter_mut().zip(&self.scratch) {
                let c = duk + s;
                if c < *d {
                    *d = c;
                }
            }
        }
        Ok(())
    }
}
