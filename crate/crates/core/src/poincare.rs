//! Sharp Poincaré–Wirtinger constants on an interval, recovered from the smallest
//! eigenvalue of the Dirichlet second-difference matrix on (0, 1) and of its square.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// `m x m` matrix of `-w''` with `w(0) = w(1) = 0` on the uniform interior grid.
pub fn dirichlet_second_difference(m: usize) -> DMatrix<f64> {
    let inv = ((m + 1) * (m + 1)) as f64;
    DMatrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
        0 => 2.0 * inv,
        1 => -inv,
        _ => 0.0,
    })
}

fn operator(order: u32, m: usize) -> Result<DMatrix<f64>> {
    if m < 4 {
        return Err(Error::InvalidParameter(format!("need at least 4 interior points, got {m}")));
    }
    let a = dirichlet_second_difference(m);
    match order {
        2 => Ok(a),
        4 => Ok(&a * &a),
        _ => Err(Error::InvalidParameter(format!("order must be 2 or 4, got {order}"))),
    }
}

pub fn min_eigenvalue(order: u32, m: usize) -> Result<f64> {
    let eig = SymmetricEigen::try_new(operator(order, m)?, 1e-15, 10_000).ok_or(Error::NonConvergence {
        what: "symmetric eigensolver",
        iterations: 10_000,
        residual: f64::NAN,
    })?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `π²` or `π⁴`.
pub fn target(order: u32) -> f64 {
    std::f64::consts::PI.powi(order as i32)
}

#[derive(Debug, Clone, Serialize)]
pub struct PoincareReport {
    pub order: u32,
    pub m: usize,
    pub eigenvalue: f64,
    pub target: f64,
    pub relative_error: f64,
    /// Error at `m` over error at `2m`.
    pub richardson_ratio: f64,
}

pub fn poincare_check(order: u32, m: usize) -> Result<PoincareReport> {
    let goal = target(order);
    let coarse = min_eigenvalue(order, m)?;
    let fine = min_eigenvalue(order, 2 * m)?;
    Ok(PoincareReport {
        order,
        m,
        eigenvalue: coarse,
        target: goal,
        relative_error: (coarse - goal).abs() / goal,
        richardson_ratio: (coarse - goal).abs() / (fine - goal).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_spectrum() {
        for m in [4usize, 9, 30] {
            let delta = 1.0 / (m + 1) as f64;
            let exact = 4.0 / (delta * delta) * (std::f64::consts::PI * delta / 2.0).sin().powi(2);
            let got = min_eigenvalue(2, m).unwrap();
            assert!((got - exact).abs() < 1e-10 * exact, "{m}");
            assert!((min_eigenvalue(4, m).unwrap() - exact * exact).abs() < 1e-8 * exact * exact);
        }
    }

    #[test]
    fn constants_at_two_hundred_points() {
        let second = poincare_check(2, 200).unwrap();
        assert!(second.relative_error < 1e-3);
        assert!((3.5..=4.5).contains(&second.richardson_ratio), "{second:?}");
        let fourth = poincare_check(4, 200).unwrap();
        assert!(fourth.relative_error < 5e-3);
        assert!((3.5..=4.5).contains(&fourth.richardson_ratio), "{fourth:?}");
        // discrete eigenvalues approach from below
        assert!(second.eigenvalue < second.target && fourth.eigenvalue < fourth.target);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(poincare_check(3, 10).is_err());
        assert!(poincare_check(2, 3).is_err());
    }
}
