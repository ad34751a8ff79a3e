//! Undirected communication graphs, Laplacian spectra and the sufficient
//! convergence condition `μ(λ₂ − θ) > θ²`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAX_GRAPH_DRAWS: usize = 1000;

#[derive(Debug, Clone)]
pub struct Graph {
    adjacency: DMatrix<f64>,
    laplacian: DMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
    eigenvalues: Vec<f64>,
    connected: bool,
}

impl Graph {
    /// Builds a graph from a symmetric 0/1 adjacency matrix with zero diagonal.
    pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if n != adjacency.ncols() {
            return Err(Error::InvalidGraph(format!(
                "adjacency is {}x{}",
                n,
                adjacency.ncols()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidGraph("empty graph".into()));
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {i}")));
            }
            for j in 0..n {
                let a = adjacency[(i, j)];
                if a != 0.0 && a != 1.0 {
                    return Err(Error::InvalidGraph(format!(
                        "entry ({i},{j}) = {a} is not 0/1"
                    )));
                }
                if a != adjacency[(j, i)] {
                    return Err(Error::InvalidGraph(format!("asymmetric entry ({i},{j})")));
                }
            }
        }
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| adjacency[(i, j)] == 1.0).collect())
            .collect();
        let mut laplacian = -adjacency.clone();
        for i in 0..n {
            laplacian[(i, i)] = neighbors[i].len() as f64;
        }
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(laplacian.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eigenvalues.sort_by(f64::total_cmp);
        let connected = bfs_connected(&neighbors);
        Ok(Self {
            adjacency,
            laplacian,
            neighbors,
            eigenvalues,
            connected,
        })
    }

    pub fn from_nested(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::InvalidGraph(format!(
                "row {bad} has the wrong length"
            )));
        }
        Self::from_adjacency(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::from_adjacency(DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { 0.0 } else { 1.0 },
        ))
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::from_adjacency(DMatrix::from_fn(n, n, |i, j| {
            if i.abs_diff(j) == 1 {
                1.0
            } else {
                0.0
            }
        }))
    }

    /// Erdős–Rényi draw, redrawn from the same seeded stream until connected.
    pub fn random_connected(n: usize, p: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!(
                "need at least 2 vertices, got {n}"
            )));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidGraph(format!(
                "edge probability {p} not in (0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..MAX_GRAPH_DRAWS {
            let mut adj = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(p) {
                        adj[(i, j)] = 1.0;
                        adj[(j, i)] = 1.0;
                    }
                }
            }
            let g = Self::from_adjacency(adj)?;
            if g.connected {
                return Ok(g);
            }
        }
        Err(Error::GraphGeneration {
            attempts: MAX_GRAPH_DRAWS,
            p,
        })
    }

    pub fn vertices(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Laplacian spectrum in ascending order.
    pub fn spectrum(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Algebraic connectivity λ₂ (0 for a single vertex).
    pub fn lambda2(&self) -> f64 {
        self.eigenvalues.get(1).copied().unwrap_or(0.0).max(0.0)
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// Connectivity from a breadth-first search.
    pub fn connected(&self) -> bool {
        self.connected
    }

    pub fn adjacency_rows(&self) -> Vec<Vec<f64>> {
        self.adjacency
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

fn bfs_connected(neighbors: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; neighbors.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &u in &neighbors[v] {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ConditionReport {
    pub holds: bool,
    /// `μ(λ₂ − θ) − θ²`
    pub margin: f64,
}

/// Sufficient condition for the partial-information laws; strict inequality.
pub fn check_condition(mu: f64, theta: f64, lambda2: f64) -> ConditionReport {
    let margin = mu * (lambda2 - theta) - theta * theta;
    ConditionReport {
        holds: margin > 0.0,
        margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn path_graph_spectrum() {
        let g = Graph::path(3).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        assert_eq!(g.laplacian(), &expected);
        assert_relative_eq!(g.lambda2(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.lambda_max(), 3.0, epsilon = 1e-12);
        assert!(g.connected());
    }

    #[test]
    fn complete_graph_lambda2_is_n() {
        assert_relative_eq!(Graph::complete(5).unwrap().lambda2(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn two_disjoint_edges_are_disconnected() {
        let g = Graph::from_nested(&[
            vec![0., 1., 0., 0.],
            vec![1., 0., 0., 0.],
            vec![0., 0., 0., 1.],
            vec![0., 0., 1., 0.],
        ])
        .unwrap();
        assert!(g.lambda2().abs() < 1e-12);
        assert!(!g.connected());
    }

    #[test]
    fn malformed_adjacency_is_rejected() {
        assert!(Graph::from_nested(&[vec![0., 1.], vec![0., 0.]]).is_err());
        assert!(Graph::from_nested(&[vec![1., 0.], vec![0., 0.]]).is_err());
        assert!(Graph::from_nested(&[vec![0., 2.], vec![2., 0.]]).is_err());
        assert!(Graph::from_nested(&[vec![0., 1.], vec![1.]]).is_err());
    }

    #[test]
    fn random_graphs() {
        let k2 = Graph::random_connected(2, 1.0, 3).unwrap();
        assert_eq!(k2.edge_count(), 1);
        assert_relative_eq!(k2.lambda2(), 2.0, epsilon = 1e-12);

        let k5 = Graph::random_connected(5, 1.0, 11).unwrap();
        assert_relative_eq!(k5.lambda2(), 5.0, epsilon = 1e-12);

        let g = Graph::random_connected(10, 0.4, 7).unwrap();
        assert!(g.connected());
        assert!(g.lambda2() > 0.0);
        let again = Graph::random_connected(10, 0.4, 7).unwrap();
        assert_eq!(g.adjacency(), again.adjacency());

        assert!(Graph::random_connected(1, 0.5, 0).is_err());
        assert!(Graph::random_connected(4, 0.0, 0).is_err());
        assert!(matches!(
            Graph::random_connected(40, 1e-6, 0),
            Err(Error::GraphGeneration { .. })
        ));
    }

    #[test]
    fn condition_boundary_is_strict() {
        let c = check_condition(2.0, 12.0, 84.0);
        assert_eq!(c.margin, 0.0);
        assert!(!c.holds);
        let c = check_condition(2.0, 12.0, 85.0);
        assert_relative_eq!(c.margin, 2.0);
        assert!(c.holds);
        let c = check_condition(1.0, 1.0, 2.6158);
        assert_relative_eq!(c.margin, 0.6158, epsilon = 1e-12);
        assert!(c.holds);
        let c = check_condition(2.0, 12.0, 5.0);
        assert_eq!(c.margin, -158.0);
        assert!(!c.holds);
    }

    #[test]
    fn condition_is_monotone_in_lambda2() {
        let mut prev = false;
        for k in 0..400 {
            let c = check_condition(1.5, 3.0, k as f64 * 0.05);
            assert!(!(prev && !c.holds));
            prev = c.holds;
        }
        assert!(prev);
    }
}
