//! Symmetric circulant operators `(Au)_j = c0 u_j + c1 (u_{j-1} + u_{j+1})` on
//! the periodic 1-D grid, diagonalised by the discrete Fourier transform.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Circulant {
    pub c0: f64,
    pub c1: f64,
    symbol: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Circulant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Circulant")
            .field("k", &self.symbol.len())
            .field("c0", &self.c0)
            .field("c1", &self.c1)
            .finish()
    }
}

impl Circulant {
    pub fn new(k: usize, c0: f64, c1: f64) -> Self {
        let symbol = (0..k)
            .map(|l| c0 + 2.0 * c1 * (2.0 * PI * l as f64 / k as f64).cos())
            .collect();
        let mut planner = FftPlanner::new();
        Circulant {
            c0,
            c1,
            symbol,
            forward: planner.plan_fft_forward(k),
            inverse: planner.plan_fft_inverse(k),
        }
    }

    pub fn k(&self) -> usize {
        self.symbol.len()
    }

    /// Eigenvalue on the Fourier mode `l`.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let k = u.len();
        (0..k)
            .map(|j| self.c0 * u[j] + self.c1 * (u[(j + k - 1) % k] + u[(j + 1) % k]))
            .collect()
    }

    /// `f(A) u` by multiplying each Fourier coefficient with `f` of its eigenvalue.
    pub fn apply_fn(&self, u: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let k = self.k();
        assert_eq!(u.len(), k);
        let mut buf: Vec<Complex<f64>> = u.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (c, &s) in buf.iter_mut().zip(&self.symbol) {
            *c *= f(s);
        }
        self.inverse.process(&mut buf);
        let inv = 1.0 / k as f64;
        buf.iter().map(|c| c.re * inv).collect()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.apply_fn(b, |s| 1.0 / s)
    }
}

/// Solves the cyclic tridiagonal system with constant diagonal `a` and off-diagonal `c`
/// by elimination (Sherman–Morrison correction of a Thomas solve). Independent of the
/// Fourier path.
pub fn solve_cyclic_tridiagonal(a: f64, c: f64, b: &[f64]) -> Vec<f64> {
    let k = b.len();
    match k {
        0 => return vec![],
        1 => return vec![b[0] / (a + 2.0 * c)],
        2 => {
            // both wrap couplings land on the same off-diagonal entry
            let off = 2.0 * c;
            let det = a * a - off * off;
            return vec![(a * b[0] - off * b[1]) / det, (a * b[1] - off * b[0]) / det];
        }
        _ => {}
    }
    let gamma = -a;
    let mut diag = vec![a; k];
    diag[0] = a - gamma;
    diag[k - 1] = a - c * c / gamma;
    let x = thomas(&diag, c, b);
    let mut u = vec![0.0; k];
    u[0] = gamma;
    u[k - 1] = c;
    let z = thomas(&diag, c, &u);
    let fact = (x[0] + c * x[k - 1] / gamma) / (1.0 + z[0] + c * z[k - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

fn thomas(diag: &[f64], c: f64, b: &[f64]) -> Vec<f64> {
    let k = diag.len();
    let mut cp = vec![0.0; k];
    let mut dp = vec![0.0; k];
    cp[0] = c / diag[0];
    dp[0] = b[0] / diag[0];
    for i in 1..k {
        let m = diag[i] - c * cp[i - 1];
        cp[i] = c / m;
        dp[i] = (b[i] - c * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; k];
    x[k - 1] = dp[k - 1];
    for i in (0..k - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn fourier_solve_inverts_apply(v in proptest::collection::vec(-5.0f64..5.0, 2..40),
                                       c0 in 1.0f64..4.0, c1 in -0.45f64..0.45) {
            let a = Circulant::new(v.len(), c0, c1);
            let x = a.solve(&a.apply(&v));
            for (p, q) in x.iter().zip(&v) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }

        #[test]
        fn elimination_matches_fourier(v in proptest::collection::vec(-5.0f64..5.0, 2..40),
                                       c0 in 1.0f64..4.0, c1 in -0.45f64..0.45) {
            let a = Circulant::new(v.len(), c0, c1);
            let x = a.solve(&v);
            let y = solve_cyclic_tridiagonal(c0, c1, &v);
            for (p, q) in x.iter().zip(&y) {
                prop_assert!((p - q).abs() < 1e-11);
            }
        }
    }
}
