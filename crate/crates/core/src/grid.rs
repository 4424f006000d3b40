//! Cubic lattice on the flat torus `T^n` with mesh `h = 1/k`.
//!
//! Nodes are enumerated row-major over the multi-index, with the first axis
//! varying slowest. Operators iterate over the `2n` directional edge slots of
//! a node (`z ± e_i`); for `k = 2` the two slots along an axis reach the same
//! node and both are counted, whereas [`TorusGrid::neighbors`] reports the
//! deduplicated neighbor set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    k: usize,
}

/// Multi-index `(k_1, ..., k_n)` of a node, each entry in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeIndex(pub Vec<usize>);

impl NodeIndex {
    pub fn new(coords: Vec<usize>) -> Self {
        NodeIndex(coords)
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }
}

impl TorusGrid {
    pub fn new(dim: usize, k: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGrid("dimension must be positive".into()));
        }
        if k < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 nodes per axis, got {k}"
            )));
        }
        let total = (k as u128).checked_pow(dim as u32);
        match total {
            Some(t) if t <= (1u128 << 40) => Ok(TorusGrid { dim, k }),
            _ => Err(Error::InvalidGrid(format!("{k}^{dim} nodes is too many"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn h(&self) -> f64 {
        1.0 / self.k as f64
    }

    /// Number of nodes, `k^n`.
    pub fn len(&self) -> usize {
        self.k.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Measure of one cell, `h^n`.
    pub fn cell_measure(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Distance in the flat index between consecutive nodes along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.k.pow((self.dim - 1 - axis) as u32)
    }

    pub fn linear(&self, z: &NodeIndex) -> usize {
        debug_assert_eq!(z.0.len(), self.dim);
        z.0.iter().fold(0, |acc, &c| acc * self.k + (c % self.k))
    }

    pub fn node(&self, mut idx: usize) -> NodeIndex {
        let mut coords = vec![0; self.dim];
        for c in coords.iter_mut().rev() {
            *c = idx % self.k;
            idx /= self.k;
        }
        NodeIndex(coords)
    }

    /// Coordinate of flat node `idx` along `axis`.
    pub fn coord(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.k
    }

    /// Flat index of the node one step forward (`forward = true`) or backward along `axis`.
    pub fn step(&self, idx: usize, axis: usize, forward: bool) -> usize {
        let s = self.stride(axis);
        let c = self.coord(idx, axis);
        if forward {
            if c + 1 == self.k {
                idx + s - self.k * s
            } else {
                idx + s
            }
        } else if c == 0 {
            idx + (self.k - 1) * s
        } else {
            idx - s
        }
    }

    /// The `2n` directional neighbor slots of `idx`: for each axis the forward then backward node.
    pub fn slots(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim).flat_map(move |axis| [self.step(idx, axis, true), self.step(idx, axis, false)])
    }

    /// Distinct neighbors of `z`.
    pub fn neighbors(&self, z: &NodeIndex) -> Vec<NodeIndex> {
        let idx = self.linear(z);
        let mut out: Vec<usize> = Vec::with_capacity(2 * self.dim);
        for n in self.slots(idx) {
            if !out.contains(&n) {
                out.push(n);
            }
        }
        out.into_iter().map(|i| self.node(i)).collect()
    }

    /// Node whose half-open cell `[z_i - h/2, z_i + h/2)^n` contains `x`; `x` is reduced modulo 1 first.
    pub fn cell_of(&self, x: &[f64]) -> Result<NodeIndex> {
        if x.len() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "point has {} coordinates, grid has dimension {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinitePoint(x.to_vec()));
        }
        Ok(NodeIndex(x.iter().map(|&xi| self.cell_coord(xi)).collect()))
    }

    /// One-axis version of [`cell_of`](Self::cell_of).
    pub fn cell_coord(&self, x: f64) -> usize {
        let kf = self.k as f64;
        let r = x - x.floor();
        let c = (r * kf + 0.5).floor() as i64;
        c.rem_euclid(self.k as i64) as usize
    }

    /// Position of node `idx` in `[0, 1)^n`.
    pub fn position(&self, idx: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|a| self.coord(idx, a) as f64 * self.h())
            .collect()
    }
}
