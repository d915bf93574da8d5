//! Discretized functions: [`GridFunction`] on the failure cells and
//! [`ScoreField`] on the observed-data support.

use serde::{Deserialize, Serialize};

/// Piecewise-constant function of `(t, z)`: one value per (level, cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    n_levels: usize,
    n_cells: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(n_levels: usize, n_cells: usize) -> Self {
        Self { n_levels, n_cells, values: vec![0.0; n_levels * n_cells] }
    }

    pub fn from_values(n_levels: usize, n_cells: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_levels * n_cells, "grid function size mismatch");
        Self { n_levels, n_cells, values }
    }

    pub fn from_fn(n_levels: usize, n_cells: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_levels * n_cells);
        for l in 0..n_levels {
            for k in 0..n_cells {
                values.push(f(l, k));
            }
        }
        Self { n_levels, n_cells, values }
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.values[l * self.n_cells + k]
    }

    pub fn set(&mut self, l: usize, k: usize, value: f64) {
        self.values[l * self.n_cells + k] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn level(&self, l: usize) -> &[f64] {
        &self.values[l * self.n_cells..(l + 1) * self.n_cells]
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        assert_eq!(self.values.len(), other.values.len());
        Self {
            values: self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect(),
            ..self.clone()
        }
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Function `b(y, δ, z)` sampled on the observed-data support: the
/// Gauss–Legendre points of every cell for `δ = 1` and for the continuous
/// part of `δ = 0`, plus the right node of every cell for censoring atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreField {
    pub(crate) n_levels: usize,
    pub(crate) n_cells: usize,
    pub(crate) order: usize,
    /// `b(s_kj, 1, z_l)`, index `(l * K + k) * m + j`.
    pub fail: Vec<f64>,
    /// `b(s_kj, 0, z_l)`, same layout.
    pub cens: Vec<f64>,
    /// `b(t_k, 0, z_l)`, index `l * K + k`.
    pub atom: Vec<f64>,
}

impl ScoreField {
    pub fn zeros(n_levels: usize, n_cells: usize, order: usize) -> Self {
        let n = n_levels * n_cells;
        Self {
            n_levels,
            n_cells,
            order,
            fail: vec![0.0; n * order],
            cens: vec![0.0; n * order],
            atom: vec![0.0; n],
        }
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            fail: self.fail.iter().map(|&v| f(v)).collect(),
            cens: self.cens.iter().map(|&v| f(v)).collect(),
            atom: self.atom.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.atom.len(), other.atom.len(), "score field size mismatch");
        let z = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect();
        Self {
            fail: z(&self.fail, &other.fail),
            cens: z(&self.cens, &other.cens),
            atom: z(&self.atom, &other.atom),
            ..self.clone()
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    /// Largest absolute value, ignoring support points flagged false in `mask`.
    pub fn sup_norm_masked(&self, mask: &ScoreMask) -> f64 {
        let m = |v: &[f64], w: &[bool]| {
            v.iter().zip(w).filter(|(_, &k)| k).fold(0.0f64, |a, (x, _)| a.max(x.abs()))
        };
        m(&self.fail, &mask.fail).max(m(&self.cens, &mask.cens)).max(m(&self.atom, &mask.atom))
    }
}

/// Which support points of a [`ScoreField`] carry positive probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMask {
    pub fail: Vec<bool>,
    pub cens: Vec<bool>,
    pub atom: Vec<bool>,
}
