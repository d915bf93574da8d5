//! Time discretization: the cell grid on (0, τ] and the Gauss–Legendre rule
//! applied inside every cell.
//!
//! Cells are right-closed, `(t_{k-1}, t_k]` with `t_0 = 0`, so a censoring
//! atom sitting on node `t_k` belongs to cell `k`. Every hazard break, every
//! censoring atom and every sampling-bucket boundary has to be a node; inside
//! a cell all hazards are constant and the observed-data densities are plain
//! exponentials, which the Gauss–Legendre rule integrates to rounding error.

use serde::{Deserialize, Serialize};

use crate::error::{BoundError, Result};

/// Default number of uniform (non-atom) nodes.
pub const DEFAULT_NODES: usize = 400;
/// Default Gauss–Legendre order per cell.
pub const DEFAULT_GL_ORDER: usize = 6;

const NODE_MERGE_TOL: f64 = 1e-12;

/// Gauss–Legendre rule mapped to the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let m = order;
        let mut nodes = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(m, x);
            if d != 0.0 {
                dp = d;
            }
            nodes.push(0.5 * (1.0 + x));
            weights.push(1.0 / ((1.0 - x * x) * dp * dp));
        }
        // cos() runs from +1 down, so reverse to get ascending nodes.
        nodes.reverse();
        weights.reverse();
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes in (0, 1), ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights summing to 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        if h == 0.0 {
            return 0.0;
        }
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(a + h * x))
            .sum::<f64>()
            * h
    }
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if m == 0 { 1.0 } else { p1 };
    let d = m as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Cell grid on (0, τ].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    atom_times: Vec<f64>,
    weights: Vec<f64>,
    tau: f64,
}

impl TimeGrid {
    /// Uniform nodes `τ i / n`, with every `required` point and every atom
    /// inserted exactly (a point within 1e-12 τ of a uniform node replaces it).
    pub fn uniform(tau: f64, n: usize, required: &[f64], atoms: &[f64]) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(BoundError::Structural(format!("τ must be positive, got {tau}")));
        }
        if n == 0 {
            return Err(BoundError::Structural("grid needs at least one node".into()));
        }
        let mut nodes: Vec<f64> = (1..=n).map(|i| tau * i as f64 / n as f64).collect();
        nodes[n - 1] = tau;
        let mut exact: Vec<f64> = required.iter().chain(atoms).copied().collect();
        exact.sort_by(f64::total_cmp);
        for &p in &exact {
            if !(p > 0.0 && p <= tau) {
                return Err(BoundError::Structural(format!(
                    "point {p} lies outside (0, τ = {tau}]"
                )));
            }
            let pos = nodes.partition_point(|&t| t < p);
            let near = |i: usize| (nodes[i] - p).abs() <= NODE_MERGE_TOL * tau;
            if pos < nodes.len() && near(pos) {
                nodes[pos] = p;
            } else if pos > 0 && near(pos - 1) {
                nodes[pos - 1] = p;
            } else {
                nodes.insert(pos, p);
            }
        }
        let mut atom_times: Vec<f64> = atoms.to_vec();
        atom_times.sort_by(f64::total_cmp);
        atom_times.dedup();
        Self::from_parts(nodes, atom_times, tau)
    }

    /// Grid with explicitly given nodes. τ must be the last node.
    pub fn from_nodes(nodes: Vec<f64>, atom_times: Vec<f64>) -> Result<Self> {
        let tau = *nodes
            .last()
            .ok_or_else(|| BoundError::Structural("empty node list".into()))?;
        Self::from_parts(nodes, atom_times, tau)
    }

    fn from_parts(nodes: Vec<f64>, atom_times: Vec<f64>, tau: f64) -> Result<Self> {
        let mut prev = 0.0;
        let mut weights = Vec::with_capacity(nodes.len());
        for &t in &nodes {
            if !(t > prev) || !t.is_finite() {
                return Err(BoundError::Structural(format!(
                    "nodes must be strictly increasing in (0, τ]; saw {t} after {prev}"
                )));
            }
            weights.push(t - prev);
            prev = t;
        }
        let grid = Self { nodes, atom_times, weights, tau };
        for &a in &grid.atom_times {
            if grid.node_index(a).is_none() {
                return Err(BoundError::Structural(format!("atom at {a} is not a grid node")));
            }
        }
        Ok(grid)
    }

    /// Bisects every cell; atoms and breaks stay nodes.
    pub fn refined(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len());
        let mut prev = 0.0;
        for &t in &self.nodes {
            nodes.push(0.5 * (prev + t));
            nodes.push(t);
            prev = t;
        }
        Self::from_parts(nodes, self.atom_times.clone(), self.tau)
            .expect("bisection keeps a valid grid")
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn atom_times(&self) -> &[f64] {
        &self.atom_times
    }

    /// Cell widths; node `k` carries the width of the cell it closes.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_cells(&self) -> usize {
        self.nodes.len()
    }

    /// Endpoints `(t_{k-1}, t_k)` of cell `k`.
    pub fn cell(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { 0.0 } else { self.nodes[k - 1] };
        (lo, self.nodes[k])
    }

    /// Cell containing `t`, i.e. `t_{k-1} < t <= t_k`.
    pub fn locate(&self, t: f64) -> Option<usize> {
        if !(t > 0.0 && t <= self.tau) {
            return None;
        }
        Some(self.nodes.partition_point(|&n| n < t).min(self.nodes.len() - 1))
    }

    /// Index of the node equal to `t` (up to 1e-12 τ).
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let pos = self.nodes.partition_point(|&n| n < t);
        let tol = NODE_MERGE_TOL * self.tau;
        [pos.checked_sub(1), Some(pos)]
            .into_iter()
            .flatten()
            .find(|&i| i < self.nodes.len() && (self.nodes[i] - t).abs() <= tol)
    }

    /// Checks that each of `points` is a node.
    pub fn require_nodes(&self, points: &[f64]) -> Result<()> {
        for &p in points {
            if self.node_index(p).is_none() {
                return Err(BoundError::Structural(format!("{p} is not a grid node")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(6);
        for p in 0..12 {
            let got = rule.integrate(0.3, 1.7, |x| x.powi(p));
            let want = (1.7f64.powi(p + 1) - 0.3f64.powi(p + 1)) / (p + 1) as f64;
            assert!((got - want).abs() < 1e-13 * want.abs().max(1.0), "degree {p}");
        }
        assert!((rule.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn uniform_grid_inserts_atoms_exactly() {
        let g = TimeGrid::uniform(1.0, 10, &[0.333], &[0.25, 1.0]).unwrap();
        assert_eq!(g.nodes().last(), Some(&1.0));
        assert!(g.node_index(0.25).is_some());
        assert!(g.node_index(0.333).is_some());
        assert_eq!(g.n_cells(), 12);
        let total: f64 = g.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn locate_uses_right_closed_cells() {
        let g = TimeGrid::uniform(1.0, 4, &[], &[]).unwrap();
        assert_eq!(g.locate(0.25), Some(0));
        assert_eq!(g.locate(0.2500001), Some(1));
        assert_eq!(g.locate(1.0), Some(3));
        assert_eq!(g.locate(0.0), None);
        assert_eq!(g.locate(1.5), None);
    }

    #[test]
    fn refinement_is_nested() {
        let g = TimeGrid::uniform(2.0, 5, &[0.7], &[2.0]).unwrap();
        let r = g.refined();
        assert_eq!(r.n_cells(), 2 * g.n_cells());
        for t in g.nodes() {
            assert!(r.node_index(*t).is_some());
        }
    }

    #[test]
    fn rejects_atoms_off_grid() {
        let err = TimeGrid::from_nodes(vec![0.5, 1.0], vec![0.7]).unwrap_err();
        assert!(matches!(err, BoundError::Structural(_)));
    }
}
