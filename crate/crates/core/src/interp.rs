//! Continuous piecewise-linear fields on the periodic 1-D grid: the embedding
//! `I_h`, the induced inner product, nodal interpolation, the L² projection onto
//! piecewise-linear fields, and the interpolation/projection error estimates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::calculus::{same_grid, GridFunction};
use crate::error::{Error, Result};
use crate::gamma::{require_1d, GammaOperator};
use crate::grid::TorusGrid;
use crate::quadrature;

/// Gauss points per interval for norms of smooth integrands.
const SMOOTH_ORDER: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearField {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PwlEnvelope {
    n: usize,
    k: usize,
    representation: String,
    values: Vec<f64>,
}

/// `I_h u`.
pub fn lin_embed(u: &GridFunction) -> Result<PiecewiseLinearField> {
    require_1d(&u.grid)?;
    Ok(PiecewiseLinearField { grid: u.grid, values: u.values.clone() })
}

impl PiecewiseLinearField {
    fn k(&self) -> usize {
        self.values.len()
    }

    fn ends(&self, j: usize) -> (f64, f64) {
        (self.values[j], self.values[(j + 1) % self.k()])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.k() as f64;
        let r = (x - x.floor()) * k;
        let j = (r.floor() as usize).min(self.k() - 1);
        let t = r - j as f64;
        let (a, b) = self.ends(j);
        a + (b - a) * t
    }

    pub fn l2_norm_sq(&self) -> f64 {
        let h = self.grid.h();
        (0..self.k())
            .map(|j| {
                let (a, b) = self.ends(j);
                a * a + b * b + a * b
            })
            .sum::<f64>()
            * h
            / 3.0
    }

    /// `∫ |f|^m` for even `m`, from the segment formula `h/(m+1) Σ_l a^l b^(m-l)`.
    pub fn lm_norm_pow(&self, m: u32) -> Result<f64> {
        if m == 0 || m % 2 == 1 {
            return Err(Error::InvalidParameter(format!("exponent {m} must be even and positive")));
        }
        let h = self.grid.h();
        let s: f64 = (0..self.k())
            .map(|j| {
                let (a, b) = self.ends(j);
                (0..=m).map(|l| a.powi(l as i32) * b.powi((m - l) as i32)).sum::<f64>()
            })
            .sum();
        Ok(s * h / (m as f64 + 1.0))
    }

    /// `∫ |f'|²`.
    pub fn derivative_l2_sq(&self) -> f64 {
        let k = self.k() as f64;
        (0..self.k())
            .map(|j| {
                let (a, b) = self.ends(j);
                (b - a) * (b - a)
            })
            .sum::<f64>()
            * k
    }

    /// Continuum Dirichlet energy `(1/2) ∫ |f'|²`.
    pub fn dirichlet(&self) -> f64 {
        0.5 * self.derivative_l2_sq()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.h()
    }

    /// Exact `||self - i_h u||²` where `u` lives on the same grid.
    pub fn distance_to_pc_sq(&self, u: &GridFunction) -> Result<f64> {
        same_grid(&self.grid, &u.grid)?;
        let h = self.grid.h();
        let k = self.k();
        // each cell splits at its node into two halves on which both fields are affine
        let mut total = 0.0;
        for j in 0..k {
            let c = u.values[j];
            let left = 0.5 * (self.values[(j + k - 1) % k] + self.values[j]);
            let right = 0.5 * (self.values[j] + self.values[(j + 1) % k]);
            total += seg_sq(left - c, self.values[j] - c, 0.5 * h);
            total += seg_sq(self.values[j] - c, right - c, 0.5 * h);
        }
        Ok(total)
    }

    /// Values at the nodes of a commensurate finer grid.
    pub fn refine(&self, fine: TorusGrid) -> Result<PiecewiseLinearField> {
        require_1d(&fine)?;
        if !fine.k().is_multiple_of(self.k()) {
            return Err(Error::NotCommensurate { coarse: self.k(), fine: fine.k() });
        }
        let r = fine.k() / self.k();
        let values = (0..fine.k())
            .map(|m| {
                let j = m / r;
                let t = (m % r) as f64 / r as f64;
                let (a, b) = self.ends(j);
                a + (b - a) * t
            })
            .collect();
        Ok(PiecewiseLinearField { grid: fine, values })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&PwlEnvelope {
            n: 1,
            k: self.k(),
            representation: "pwl".into(),
            values: self.values.clone(),
        })
        .expect("finite values serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let e: PwlEnvelope = serde_json::from_str(text)?;
        if e.representation != "pwl" {
            return Err(Error::Parse(format!("representation `{}` is not pwl", e.representation)));
        }
        let g = GridFunction::new(TorusGrid::new(e.n, e.k)?, e.values)?;
        lin_embed(&g)
    }
}

/// `∫_0^len (a + (b - a) t/len)² dt`.
fn seg_sq(a: f64, b: f64, len: f64) -> f64 {
    len * (a * a + b * b + a * b) / 3.0
}

/// Exact `||a - b||²` for piecewise-linear fields on commensurate grids.
pub fn pl_distance_sq(a: &PiecewiseLinearField, b: &PiecewiseLinearField) -> Result<f64> {
    let (coarse, fine) = if a.k() <= b.k() { (a, b) } else { (b, a) };
    let c = coarse.refine(fine.grid)?;
    let diff = PiecewiseLinearField {
        grid: fine.grid,
        values: c.values.iter().zip(&fine.values).map(|(x, y)| x - y).collect(),
    };
    Ok(diff.l2_norm_sq())
}

/// Exact `||i_h u - f||²` for a grid function `u` and a piecewise-linear `f` on a
/// commensurate finer grid.
pub fn pc_pl_distance_sq(u: &GridFunction, f: &PiecewiseLinearField) -> Result<f64> {
    require_1d(&u.grid)?;
    let kc = u.grid.k();
    let kf = f.k();
    if !kf.is_multiple_of(kc) {
        return Err(Error::NotCommensurate { coarse: kc, fine: kf });
    }
    let hf = f.grid.h();
    // halves of fine intervals never straddle a coarse cell boundary
    let mut total = 0.0;
    for m in 0..kf {
        let (a, b) = f.ends(m);
        let mid = 0.5 * (a + b);
        for (half, (p, q)) in [(0, (a, mid)), (1, (mid, b))] {
            let centre = (m as f64 + 0.25 + 0.5 * half as f64) * hf;
            let c = u.values[u.grid.cell_coord(centre)];
            total += seg_sq(p - c, q - c, 0.5 * hf);
        }
    }
    Ok(total)
}

/// `(u, v)_h = (h/3) Σ [2 u_j v_j + (u_j v_{j+1} + u_{j+1} v_j)/2]`.
pub fn induced_inner(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    same_grid(&u.grid, &v.grid)?;
    require_1d(&u.grid)?;
    let k = u.len();
    let s: f64 = (0..k)
        .map(|j| {
            let n = (j + 1) % k;
            2.0 * u.values[j] * v.values[j] + 0.5 * (u.values[j] * v.values[n] + u.values[n] * v.values[j])
        })
        .sum();
    Ok(s * u.grid.h() / 3.0)
}

/// Nodal samples `w(jh)`.
pub fn nodal_interpolate(w: impl Fn(f64) -> f64, grid: TorusGrid) -> Result<GridFunction> {
    require_1d(&grid)?;
    GridFunction::new(grid, (0..grid.k()).map(|j| w(j as f64 * grid.h())).collect())
}

/// Hat moments `h⁻¹ ∫ w φ_j` by Gauss quadrature on the two supporting intervals.
pub fn hat_moments(w: impl Fn(f64) -> f64, grid: TorusGrid, order: usize) -> Result<GridFunction> {
    require_1d(&grid)?;
    if order == 0 {
        return Err(Error::Quadrature("order must be positive".into()));
    }
    let h = grid.h();
    let k = grid.k();
    let (t, wt) = quadrature::rule_on(order, 0.0, 1.0);
    // contribution of interval [jh, (j+1)h]: to node j with weight 1-t, to node j+1 with weight t
    let mut b = vec![0.0; k];
    for j in 0..k {
        for (ti, wi) in t.iter().zip(&wt) {
            let f = w((j as f64 + ti) * h) * wi;
            b[j] += f * (1.0 - ti);
            b[(j + 1) % k] += f * ti;
        }
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature("non-finite hat moment".into()));
    }
    GridFunction::new(grid, b)
}

/// `P_h w = Γ⁻¹ b` for a callable `w`.
pub fn l2_project(w: impl Fn(f64) -> f64, grid: TorusGrid, order: usize) -> Result<GridFunction> {
    let b = hat_moments(w, grid, order)?;
    GammaOperator::new(grid)?.solve(&b)
}

/// `P_h f` for a piecewise-linear field on a commensurate finer grid, integrated exactly.
pub fn l2_project_pl(f: &PiecewiseLinearField, grid: TorusGrid) -> Result<GridFunction> {
    require_1d(&grid)?;
    if !f.k().is_multiple_of(grid.k()) {
        return Err(Error::NotCommensurate { coarse: grid.k(), fine: f.k() });
    }
    let r = f.k() / grid.k();
    let coarse_b = hat_moments_fine(f, grid, r);
    GammaOperator::new(grid)?.solve(&GridFunction::new(grid, coarse_b)?)
}

fn hat_moments_fine(f: &PiecewiseLinearField, grid: TorusGrid, r: usize) -> Vec<f64> {
    let k = grid.k();
    // integrands are quadratic on each fine interval, so two Gauss points are exact
    let (t, wt) = quadrature::rule_on(2, 0.0, 1.0);
    let mut b = vec![0.0; k];
    let hf = f.grid.h();
    let h = grid.h();
    for j in 0..k {
        for s in 0..r {
            let m = j * r + s;
            let (a, c) = f.ends(m);
            for (ti, wi) in t.iter().zip(&wt) {
                let val = a + (c - a) * ti;
                let local = (s as f64 + ti) / r as f64;
                let wf = val * wi * hf / h;
                b[j] += wf * (1.0 - local);
                b[(j + 1) % k] += wf * local;
            }
        }
    }
    b
}

/// Trigonometric polynomial `c0 + Σ_j (a_j cos 2πjx + b_j sin 2πjx)`, `j = 1..`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    pub c0: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn new(c0: f64, cos: Vec<f64>, sin: Vec<f64>) -> Self {
        TrigPoly { c0, cos, sin }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.c0;
        for (j, a) in self.cos.iter().enumerate() {
            v += a * (2.0 * PI * (j + 1) as f64 * x).cos();
        }
        for (j, b) in self.sin.iter().enumerate() {
            v += b * (2.0 * PI * (j + 1) as f64 * x).sin();
        }
        v
    }

    pub fn derivative(&self) -> TrigPoly {
        let n = self.cos.len().max(self.sin.len());
        let mut cos = vec![0.0; n];
        let mut sin = vec![0.0; n];
        for j in 0..n {
            let w = 2.0 * PI * (j + 1) as f64;
            let a = self.cos.get(j).copied().unwrap_or(0.0);
            let b = self.sin.get(j).copied().unwrap_or(0.0);
            cos[j] = w * b;
            sin[j] = -w * a;
        }
        TrigPoly { c0: 0.0, cos, sin }
    }

    /// `∫_0^1 |w|²` by Parseval.
    pub fn l2_norm_sq(&self) -> f64 {
        self.c0 * self.c0
            + 0.5 * self.cos.iter().chain(&self.sin).map(|c| c * c).sum::<f64>()
    }
}

/// `∫ (f - w)²` for piecewise-linear `f`, by high-order Gauss per interval.
pub fn pl_minus_smooth_sq(f: &PiecewiseLinearField, w: impl Fn(f64) -> f64) -> f64 {
    let h = f.grid.h();
    (0..f.k())
        .map(|j| {
            let (a, b) = f.ends(j);
            let x0 = j as f64 * h;
            quadrature::integrate(
                |x| {
                    let v = a + (b - a) * (x - x0) / h;
                    (v - w(x)).powi(2)
                },
                x0,
                x0 + h,
                SMOOTH_ORDER,
            )
        })
        .sum()
}

/// `∫ (f' - w')²` for piecewise-linear `f`.
pub fn pl_derivative_minus_smooth_sq(f: &PiecewiseLinearField, dw: impl Fn(f64) -> f64) -> f64 {
    let h = f.grid.h();
    (0..f.k())
        .map(|j| {
            let (a, b) = f.ends(j);
            let slope = (b - a) / h;
            let x0 = j as f64 * h;
            quadrature::integrate(|x| (slope - dw(x)).powi(2), x0, x0 + h, SMOOTH_ORDER)
        })
        .sum()
}

/// Upper bound on the stability constant of the projection's derivative.
pub fn projection_stability_constant() -> f64 {
    4.0 * 3f64.sqrt() / PI + 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl EstimateCheck {
    pub fn new(name: &'static str, lhs: f64, rhs: f64) -> Self {
        let pass = lhs <= rhs + 1e-13 * (1.0 + rhs.abs());
        EstimateCheck { name, lhs, rhs, margin: rhs - lhs, pass }
    }
}

/// Interpolation and projection error estimates for `w` on `grid`.
pub fn verify_interp_estimates(w: &TrigPoly, grid: TorusGrid) -> Result<Vec<EstimateCheck>> {
    require_1d(&grid)?;
    let h = grid.h();
    let dw = w.derivative();
    let ddw = dw.derivative();
    let pi_w = lin_embed(&nodal_interpolate(|x| w.eval(x), grid)?)?;
    let err = pl_minus_smooth_sq(&pi_w, |x| w.eval(x));
    let derr = pl_derivative_minus_smooth_sq(&pi_w, |x| dw.eval(x));
    let w1 = dw.l2_norm_sq();
    let w2 = ddw.l2_norm_sq();
    let proj = lin_embed(&l2_project(|x| w.eval(x), grid, SMOOTH_ORDER)?)?;
    let c = projection_stability_constant();
    Ok(vec![
        EstimateCheck::new("interp-error-l2-first", err, (2.0 * h / PI).powi(2) * w1),
        EstimateCheck::new("interp-error-l2-second", err, (h / PI).powi(4) * w2),
        EstimateCheck::new("interp-error-derivative", derr, h * h / 3.0 * w2),
        EstimateCheck::new("interp-derivative-stability", pi_w.derivative_l2_sq().sqrt(), w1.sqrt()),
        EstimateCheck::new("inverse-estimate", pi_w.derivative_l2_sq(), 12.0 / (h * h) * pi_w.l2_norm_sq()),
        EstimateCheck::new("projection-derivative-stability", proj.derivative_l2_sq().sqrt(), c * w1.sqrt()),
    ])
}

/// `||I_h P_h w - w||` for a trigonometric polynomial.
pub fn projection_error(w: &TrigPoly, grid: TorusGrid) -> Result<f64> {
    let p = lin_embed(&l2_project(|x| w.eval(x), grid, SMOOTH_ORDER)?)?;
    Ok(pl_minus_smooth_sq(&p, |x| w.eval(x)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{dirichlet_h, edge_inner, embed_pc, graph_gradient, inner_h};
    use proptest::prelude::*;

    fn g(k: usize) -> TorusGrid {
        TorusGrid::new(1, k).unwrap()
    }

    fn gf(v: Vec<f64>) -> GridFunction {
        GridFunction::new(g(v.len()), v).unwrap()
    }

    #[test]
    fn embedding_examples() {
        let u = gf(vec![1.0, 0.0, 0.0, 0.0]);
        let f = lin_embed(&u).unwrap();
        assert!((f.l2_norm_sq() - 1.0 / 6.0).abs() < 1e-15);
        assert!((induced_inner(&u, &u).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        // the exact gap is (h²/6) φ_D = 1/24, below the bound h² φ_D = 1/4
        let gap = f.distance_to_pc_sq(&u).unwrap();
        assert!((gap - 1.0 / 24.0).abs() < 1e-15);
        assert!(gap <= 0.25);
        let c = lin_embed(&GridFunction::constant(g(5), 2.0)).unwrap();
        assert!((0..50).all(|i| (c.eval(i as f64 * 0.0217) - 2.0).abs() < 1e-15));
        assert!(lin_embed(&GridFunction::zeros(TorusGrid::new(2, 3).unwrap())).is_err());
    }

    #[test]
    fn gap_matches_quadrature_oracle() {
        let u = gf(vec![0.3, -1.2, 2.0, 0.5, 0.0, -0.7]);
        let f = lin_embed(&u).unwrap();
        let pc = embed_pc(&u);
        let h = u.grid.h();
        // integrate over each half cell with Gauss; both fields are smooth there
        let mut oracle = 0.0;
        for j in 0..12 {
            let a = (j as f64 - 1.0) * h / 2.0;
            let b = a + h / 2.0;
            let mid = 0.5 * (a + b);
            let c = pc.eval(&[mid]).unwrap();
            oracle += quadrature::integrate(|x| (f.eval(x) - c).powi(2), a, b, 4);
        }
        let exact = f.distance_to_pc_sq(&u).unwrap();
        assert!((exact - oracle).abs() < 1e-14);
        assert!((exact - h * h / 6.0 * dirichlet_h(&u)).abs() < 1e-14);
    }

    #[test]
    fn interpolation_examples() {
        let s = nodal_interpolate(|x| (2.0 * PI * x).sin(), g(4)).unwrap();
        let want = [0.0, 1.0, 0.0, -1.0];
        for (a, b) in s.values.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let f = lin_embed(&gf(vec![1.0, -2.0, 0.5, 3.0, 0.0])).unwrap();
        let again = lin_embed(&nodal_interpolate(|x| f.eval(x), g(5)).unwrap()).unwrap();
        for i in 0..200 {
            let x = i as f64 / 200.0;
            assert!((again.eval(x) - f.eval(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_examples() {
        let p = l2_project(|x| (2.0 * PI * x).cos(), g(2), 16).unwrap();
        let want = 12.0 / (PI * PI);
        assert!((p.values[0] - want).abs() < 1e-12 && (p.values[1] + want).abs() < 1e-12);
        let b = hat_moments(|x| (2.0 * PI * x).cos(), g(2), 16).unwrap();
        assert!((b.values[0] - 4.0 / (PI * PI)).abs() < 1e-12);
        let c = l2_project(|_| 1.5, g(6), 8).unwrap();
        assert!(c.values.iter().all(|v| (v - 1.5).abs() < 1e-13));
    }

    #[test]
    fn projection_cross_check_least_squares() {
        // fine-grid least squares over the span of the coarse hats
        let k = 4;
        let w = |x: f64| (2.0 * PI * x).cos() + 0.3 * (6.0 * PI * x).sin();
        let p = l2_project(w, g(k), 16).unwrap();
        let samples = 4000;
        let mut ata = nalgebra::DMatrix::<f64>::zeros(k, k);
        let mut atb = nalgebra::DVector::<f64>::zeros(k);
        for s in 0..samples {
            let x = (s as f64 + 0.5) / samples as f64;
            let basis: Vec<f64> = (0..k)
                .map(|j| {
                    let mut e = vec![0.0; k];
                    e[j] = 1.0;
                    lin_embed(&gf(e)).unwrap().eval(x)
                })
                .collect();
            for a in 0..k {
                atb[a] += basis[a] * w(x);
                for b in 0..k {
                    ata[(a, b)] += basis[a] * basis[b];
                }
            }
        }
        let sol = ata.lu().solve(&atb).unwrap();
        for j in 0..k {
            assert!((sol[j] - p.values[j]).abs() < 1e-5);
        }
    }

    #[test]
    fn exact_projection_of_finer_field() {
        let u = gf(vec![0.2, 1.0, -0.5, 0.1]);
        let f = lin_embed(&u).unwrap().refine(g(12)).unwrap();
        let back = l2_project_pl(&f, g(4)).unwrap();
        assert!(back.sub(&u).unwrap().sup_norm() < 1e-13);
        let fine = lin_embed(&gf((0..16).map(|j| ((j * 7) % 5) as f64 - 2.0).collect())).unwrap();
        let exact = l2_project_pl(&fine, g(4)).unwrap();
        // oracle: composite Gauss on subintervals aligned with the fine kinks
        let hat = |j: usize, x: f64| {
            let d = (x * 4.0 - j as f64).rem_euclid(4.0);
            let d = d.min(4.0 - d);
            (1.0 - d).max(0.0)
        };
        let b: Vec<f64> = (0..4)
            .map(|j| {
                (0..160)
                    .map(|s| quadrature::integrate(|x| fine.eval(x) * hat(j, x), s as f64 / 160.0, (s + 1) as f64 / 160.0, 3))
                    .sum::<f64>()
                    * 4.0
            })
            .collect();
        let oracle = GammaOperator::new(g(4)).unwrap().solve(&gf(b)).unwrap();
        assert!(exact.sub(&oracle).unwrap().sup_norm() < 1e-13);
    }

    #[test]
    fn estimates_for_sine() {
        let w = TrigPoly::new(0.0, vec![], vec![1.0]);
        let checks = verify_interp_estimates(&w, g(16)).unwrap();
        assert_eq!(checks.len(), 6);
        for c in &checks {
            assert!(c.pass && c.margin > 0.0, "{c:?}");
        }
        let flat = TrigPoly::new(2.0, vec![], vec![]);
        for c in verify_interp_estimates(&flat, g(8)).unwrap() {
            assert!(c.pass);
            assert!(c.lhs.abs() < 1e-13);
        }
    }

    #[test]
    fn sawtooth_attains_inverse_estimate() {
        let k = 10;
        let u = gf((0..k).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect());
        let f = lin_embed(&u).unwrap();
        let h = u.grid.h();
        let ratio = f.derivative_l2_sq() / (12.0 / (h * h) * f.l2_norm_sq());
        assert!((ratio - 1.0).abs() < 1e-13);
    }

    #[test]
    fn projection_converges() {
        let w = TrigPoly::new(0.1, vec![1.0, 0.0, 0.25], vec![0.5, -0.3]);
        let errs: Vec<f64> = [4, 8, 16, 32, 64]
            .iter()
            .map(|&k| projection_error(&w, g(k)).unwrap())
            .collect();
        for pair in errs.windows(2) {
            assert!(pair[1] < pair[0]);
        }
        assert!(errs[4] < errs[0] / 8.0);
    }

    #[test]
    fn json_roundtrip() {
        let f = lin_embed(&gf(vec![0.1, -3.0, 1.0 / 7.0])).unwrap();
        let s = f.to_json();
        assert!(s.contains("\"representation\":\"pwl\""));
        assert_eq!(PiecewiseLinearField::from_json(&s).unwrap(), f);
    }

    #[test]
    fn trig_derivative() {
        let w = TrigPoly::new(0.5, vec![1.0], vec![0.0, 2.0]);
        let d = w.derivative();
        let x = 0.37;
        let fd = (w.eval(x + 1e-6) - w.eval(x - 1e-6)) / 2e-6;
        assert!((d.eval(x) - fd).abs() < 1e-6);
        let quad = quadrature::integrate(|x| w.eval(x).powi(2), 0.0, 1.0, 30);
        assert!((quad - w.l2_norm_sq()).abs() < 1e-13);
    }

    fn field() -> impl Strategy<Value = GridFunction> {
        proptest::collection::vec(-3.0f64..3.0, 2..30).prop_map(gf)
    }

    fn pair() -> impl Strategy<Value = (GridFunction, GridFunction)> {
        (2usize..30).prop_flat_map(|k| {
            let s = proptest::collection::vec(-3.0f64..3.0, k);
            (s.clone(), s).prop_map(|(a, b)| (gf(a), gf(b)))
        })
    }

    proptest! {
        #[test]
        fn induced_inner_is_gamma_form((u, v) in pair()) {
            let a = induced_inner(&u, &v).unwrap();
            let b = inner_h(&GammaOperator::new(u.grid).unwrap().apply(&u).unwrap(), &v).unwrap();
            prop_assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()) * 10.0);
        }

        #[test]
        fn induced_norm_sandwich(u in field()) {
            let n = inner_h(&u, &u).unwrap();
            let q = induced_inner(&u, &u).unwrap();
            prop_assert!(q >= n / 3.0 - 1e-13 && q <= n + 1e-13);
            let f = lin_embed(&u).unwrap();
            prop_assert!((f.l2_norm_sq() - q).abs() <= 1e-13 * (1.0 + q));
        }

        #[test]
        fn norm_gap_identity(u in field()) {
            let f = lin_embed(&u).unwrap();
            let h = u.grid.h();
            let d = graph_gradient(&u);
            let lhs = inner_h(&u, &u).unwrap() - f.l2_norm_sq();
            let rhs = h * h / 6.0 * edge_inner(&d, &d).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + rhs));
        }

        #[test]
        fn quartic_sandwich(u in field()) {
            let f = lin_embed(&u).unwrap();
            let discrete = u.values.iter().map(|v| v.powi(4)).sum::<f64>() * u.grid.h();
            let cont = f.lm_norm_pow(4).unwrap();
            prop_assert!(cont <= discrete * (1.0 + 1e-13) + 1e-15);
            prop_assert!(cont >= discrete / 5.0 * (1.0 - 1e-13) - 1e-15);
        }

        #[test]
        fn dirichlet_is_preserved(u in field()) {
            let f = lin_embed(&u).unwrap();
            let d = dirichlet_h(&u);
            prop_assert!((f.dirichlet() - d).abs() <= 1e-12 * (1.0 + d));
        }

        #[test]
        fn gap_below_dirichlet_bound(u in field()) {
            let f = lin_embed(&u).unwrap();
            let h = u.grid.h();
            prop_assert!(f.distance_to_pc_sq(&u).unwrap() <= h * h * dirichlet_h(&u) + 1e-15);
        }

        #[test]
        fn projection_inverts_embedding(u in field()) {
            let f = lin_embed(&u).unwrap();
            let p = l2_project(|x| f.eval(x), u.grid, 4).unwrap();
            prop_assert!(p.sub(&u).unwrap().sup_norm() <= 1e-12 * (1.0 + u.sup_norm()));
        }

        #[test]
        fn projection_preserves_mean_and_is_nonexpansive(
            c in proptest::collection::vec(-1.0f64..1.0, 4),
            k in 2usize..24,
        ) {
            let w = TrigPoly::new(c[0], vec![c[1], c[2]], vec![c[3]]);
            let p = lin_embed(&l2_project(|x| w.eval(x), g(k), 16).unwrap()).unwrap();
            prop_assert!((p.integral() - w.c0).abs() <= 1e-12);
            prop_assert!(p.l2_norm_sq() <= w.l2_norm_sq() + 1e-12);
            // Pythagoras against an arbitrary member of the piecewise-linear space
            let v = lin_embed(&GridFunction::from_fn(g(k), |x| x[0].sin())).unwrap();
            let lhs = pl_distance_sq(&v, &p).unwrap() + pl_minus_smooth_sq(&p, |x| w.eval(x));
            let rhs = pl_minus_smooth_sq(&v, |x| w.eval(x));
            prop_assert!((lhs - rhs).abs() <= 1e-11);
        }

        #[test]
        fn estimates_hold_for_trig_polys(
            c in proptest::collection::vec(-1.0f64..1.0, 5),
            k in prop_oneof![Just(8usize), Just(16), Just(32)],
        ) {
            let w = TrigPoly::new(c[0], vec![c[1], c[2]], vec![c[3], c[4]]);
            for chk in verify_interp_estimates(&w, g(k)).unwrap() {
                prop_assert!(chk.pass, "{:?}", chk);
            }
        }
    }
}
