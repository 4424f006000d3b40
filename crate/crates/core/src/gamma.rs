//! The averaging operator `(Γu)_j = (2/3) u_j + (1/6)(u_{j-1} + u_{j+1})` on the
//! periodic 1-D grid, its inverse, square root, spectrum and matrix exponential.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::calculus::GridFunction;
use crate::circulant::{solve_cyclic_tridiagonal, Circulant};
use crate::error::{Error, Result};
use crate::grid::TorusGrid;

/// Largest size for which dense exponentials are built.
pub const MAX_DENSE_K: usize = 4096;
const SERIES_TERM_CAP: usize = 512;

#[derive(Debug, Clone)]
pub struct GammaOperator {
    grid: TorusGrid,
    circ: Circulant,
}

/// Eigenvalue of Γ on the Fourier mode `l`: `(2 + cos(2π l / k)) / 3`.
pub fn gamma_eigenvalue(k: usize, l: usize) -> f64 {
    (2.0 + (2.0 * PI * l as f64 / k as f64).cos()) / 3.0
}

pub(crate) fn require_1d(grid: &TorusGrid) -> Result<()> {
    if grid.dim() != 1 {
        return Err(Error::NotOneDimensional(grid.dim()));
    }
    Ok(())
}

impl GammaOperator {
    pub fn new(grid: TorusGrid) -> Result<Self> {
        require_1d(&grid)?;
        Ok(GammaOperator { grid, circ: Circulant::new(grid.k(), 2.0 / 3.0, 1.0 / 6.0) })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    /// Eigenvalues `γ_l`, `l = 0..k`.
    pub fn spectrum(&self) -> Vec<f64> {
        (0..self.grid.k()).map(|l| gamma_eigenvalue(self.grid.k(), l)).collect()
    }

    fn check(&self, u: &GridFunction) -> Result<()> {
        crate::calculus::same_grid(&self.grid, &u.grid)
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        self.check(u)?;
        Ok(GridFunction { grid: self.grid, values: self.circ.apply(&u.values) })
    }

    /// `Γ⁻¹ b` by Fourier diagonalisation.
    pub fn solve(&self, b: &GridFunction) -> Result<GridFunction> {
        self.check(b)?;
        Ok(GridFunction { grid: self.grid, values: self.circ.solve(&b.values) })
    }

    /// `Γ⁻¹ b` by cyclic tridiagonal elimination.
    pub fn solve_elimination(&self, b: &GridFunction) -> Result<GridFunction> {
        self.check(b)?;
        Ok(GridFunction {
            grid: self.grid,
            values: solve_cyclic_tridiagonal(2.0 / 3.0, 1.0 / 6.0, &b.values),
        })
    }

    pub fn sqrt_apply(&self, u: &GridFunction) -> Result<GridFunction> {
        self.check(u)?;
        Ok(GridFunction { grid: self.grid, values: self.circ.apply_fn(&u.values, f64::sqrt) })
    }

    /// Dense matrix of Γ, with periodic couplings added (so `k = 2` has off-diagonal 1/3).
    pub fn dense(&self) -> DMatrix<f64> {
        gamma_dense(self.grid.k())
    }
}

pub fn gamma_dense(k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    for j in 0..k {
        m[(j, j)] += 2.0 / 3.0;
        m[(j, (j + 1) % k)] += 1.0 / 6.0;
        m[(j, (j + k - 1) % k)] += 1.0 / 6.0;
    }
    m
}

fn check_exp_args(x: f64, k: usize) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::InvalidParameter(format!("exponent {x} is not finite")));
    }
    if !(2..=MAX_DENSE_K).contains(&k) {
        return Err(Error::InvalidParameter(format!("k = {k} outside 2..={MAX_DENSE_K}")));
    }
    Ok(())
}

/// `e^{Γx}` from the cosine sum `h e^{2x/3} Σ_l e^{x cos(2π h l)/3} cos(2π h l (i - j))`.
pub fn gamma_exp(x: f64, k: usize) -> Result<DMatrix<f64>> {
    check_exp_args(x, k)?;
    let h = 1.0 / k as f64;
    let weights: Vec<f64> = (0..k)
        .map(|l| (x * (2.0 * PI * h * l as f64).cos() / 3.0).exp())
        .collect();
    // entries depend on (i - j) mod k only
    let row: Vec<f64> = (0..k)
        .map(|d| {
            let s: f64 = weights
                .iter()
                .enumerate()
                .map(|(l, w)| w * (2.0 * PI * h * ((l * d) % k) as f64).cos())
                .sum();
            h * (2.0 * x / 3.0).exp() * s
        })
        .collect();
    Ok(DMatrix::from_fn(k, k, |i, j| row[(i + k - j) % k]))
}

/// Coefficients `B_l(x) = Σ_m (x/6)^{mk+l} / (mk+l)!`, `l = 0..k`.
pub fn shift_series(x: f64, k: usize) -> Result<Vec<f64>> {
    let y = x / 6.0;
    let mut b = vec![0.0; k];
    let mut term = 1.0;
    let mut small_run = 0usize;
    for j in 0..SERIES_TERM_CAP {
        if j > 0 {
            term *= y / j as f64;
        }
        let l = j % k;
        b[l] += term;
        // terms decrease once j > |y|; a full cycle of negligible terms ends the sum
        let negligible = term == 0.0 || term.abs() < 1e-15 * b[l].abs();
        if j as f64 > y.abs() && negligible {
            small_run += 1;
            if small_run >= k {
                return Ok(b);
            }
        } else {
            small_run = 0;
        }
    }
    Err(Error::NonConvergence {
        what: "exponential series",
        iterations: SERIES_TERM_CAP,
        residual: term.abs(),
    })
}

/// `e^{Γx}` from the series form `e^{2x/3} Σ_l B_l(x) B_{l+j-i}(x)`.
pub fn gamma_exp_series(x: f64, k: usize) -> Result<DMatrix<f64>> {
    check_exp_args(x, k)?;
    let b = shift_series(x, k)?;
    let pre = (2.0 * x / 3.0).exp();
    let row: Vec<f64> = (0..k)
        .map(|d| pre * (0..k).map(|l| b[l] * b[(l + d) % k]).sum::<f64>())
        .collect();
    Ok(DMatrix::from_fn(k, k, |i, j| row[(j + k - i) % k]))
}
