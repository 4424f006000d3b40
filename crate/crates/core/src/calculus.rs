//! Grid functions, edge fields, the graph gradient and Laplacian, discrete
//! energies and the piecewise-constant embedding/projection pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::quadrature;

/// Default Gauss–Legendre points per axis per cell for projecting callables.
pub const DEFAULT_QUADRATURE_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("value at node {i} is not finite")));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        GridFunction { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f` at the node positions.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.position(i))).collect();
        GridFunction { grid, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        Ok(GridFunction {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm_h(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_measure()).sqrt()
    }

    /// `(sum |u|^m h^n)^(1/m)`.
    pub fn lm_norm_h(&self, m: f64) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.abs().powf(m)).sum();
        (s * self.grid.cell_measure()).powf(1.0 / m)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{i},{}\n", fmt17(*v)));
        }
        s
    }

    pub fn from_csv(grid: TorusGrid, text: &str) -> Result<Self> {
        let mut values = vec![f64::NAN; grid.len()];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("index")) {
                continue;
            }
            let (i, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `index,value`", lineno + 1)))?;
            let i: usize = i.trim().parse().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            let v: f64 = v.trim().parse().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            if i >= values.len() {
                return Err(Error::GridMismatch(format!("index {i} out of range")));
            }
            values[i] = v;
        }
        Self::new(grid, values)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Envelope {
            n: self.grid.dim(),
            k: self.grid.k(),
            values: self.values.clone(),
        })
        .expect("finite values serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let e: Envelope = serde_json::from_str(text)?;
        Self::new(TorusGrid::new(e.n, e.k)?, e.values)
    }
}

/// Shortest decimal form that reads back to the same bits (at most 17 significant digits).
pub fn fmt17(v: f64) -> String {
    let s = format!("{v:?}");
    debug_assert_eq!(s.parse::<f64>().ok(), Some(v));
    s
}

pub(crate) fn same_grid(a: &TorusGrid, b: &TorusGrid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!(
            "n={}, k={} vs n={}, k={}",
            a.dim(),
            a.k(),
            b.dim(),
            b.k()
        )));
    }
    Ok(())
}

/// Values on the directed edge slots `(z, z ± e_i)`; slot `2i` is forward, `2i + 1` backward.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
}

impl EdgeField {
    pub fn zeros(grid: TorusGrid) -> Self {
        EdgeField { grid, values: vec![0.0; grid.len() * 2 * grid.dim()] }
    }

    pub fn slots_per_node(&self) -> usize {
        2 * self.grid.dim()
    }

    pub fn get(&self, node: usize, axis: usize, forward: bool) -> f64 {
        self.values[node * self.slots_per_node() + 2 * axis + usize::from(!forward)]
    }

    /// Value on the edge `(from, to)` summed over all slots joining them.
    pub fn on_edge(&self, from: usize, to: usize) -> f64 {
        let g = self.grid;
        let mut v = 0.0;
        let mut count = 0;
        for (s, nb) in g.slots(from).enumerate() {
            if nb == to {
                v += self.values[from * self.slots_per_node() + s];
                count += 1;
            }
        }
        if count == 0 { 0.0 } else { v / count as f64 }
    }
}

pub fn inner_h(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    same_grid(&u.grid, &v.grid)?;
    Ok(u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum::<f64>() * u.grid.cell_measure())
}

pub fn graph_gradient(u: &GridFunction) -> EdgeField {
    let g = u.grid;
    let inv_h = g.k() as f64;
    let mut out = EdgeField::zeros(g);
    let spn = out.slots_per_node();
    for z in 0..g.len() {
        for (s, nb) in g.slots(z).enumerate() {
            out.values[z * spn + s] = (u.values[nb] - u.values[z]) * inv_h;
        }
    }
    out
}

pub fn graph_laplacian(u: &GridFunction) -> GridFunction {
    let g = u.grid;
    let inv_h2 = (g.k() * g.k()) as f64;
    let values = (0..g.len())
        .map(|z| {
            let uz = u.values[z];
            g.slots(z).map(|nb| u.values[nb] - uz).sum::<f64>() * inv_h2
        })
        .collect();
    GridFunction { grid: g, values }
}

pub fn edge_inner(chi: &EdgeField, phi: &EdgeField) -> Result<f64> {
    same_grid(&chi.grid, &phi.grid)?;
    let s: f64 = chi.values.iter().zip(&phi.values).map(|(a, b)| a * b).sum();
    Ok(0.5 * s * chi.grid.cell_measure())
}

/// One-dimensional form `sum_k h chi(k,k+1) phi(k,k+1)`, valid for antisymmetric fields.
pub fn edge_inner_forward_1d(chi: &EdgeField, phi: &EdgeField) -> Result<f64> {
    same_grid(&chi.grid, &phi.grid)?;
    if chi.grid.dim() != 1 {
        return Err(Error::NotOneDimensional(chi.grid.dim()));
    }
    let h = chi.grid.h();
    Ok((0..chi.grid.len())
        .map(|i| h * chi.get(i, 0, true) * phi.get(i, 0, true))
        .sum())
}

/// Anisotropic graph total variation `(1/2) sum_z sum_{slots} h^(n-1) |u(z) - u(z~)|`.
pub fn tv_h(u: &GridFunction) -> f64 {
    let g = u.grid;
    let w = g.h().powi(g.dim() as i32 - 1);
    let s: f64 = (0..g.len())
        .map(|z| g.slots(z).map(|nb| (u.values[z] - u.values[nb]).abs()).sum::<f64>())
        .sum();
    0.5 * w * s
}

/// Dirichlet energy `(1/4) sum h^(n-2) (u(z) - u(z~))^2`.
pub fn dirichlet_h(u: &GridFunction) -> f64 {
    let g = u.grid;
    let w = g.h().powi(g.dim() as i32 - 2);
    let s: f64 = (0..g.len())
        .map(|z| g.slots(z).map(|nb| (u.values[z] - u.values[nb]).powi(2)).sum::<f64>())
        .sum();
    0.25 * w * s
}

/// Double-well `alpha (x^2 - 1)^2 / 4`.
pub fn double_well(x: f64, alpha: f64) -> f64 {
    0.25 * alpha * (x * x - 1.0).powi(2)
}

pub fn double_well_prime(x: f64, alpha: f64) -> f64 {
    alpha * x * (x * x - 1.0)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

pub fn potential_h(u: &GridFunction, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(u.values.iter().map(|&v| double_well(v, alpha)).sum::<f64>() * u.grid.cell_measure())
}

pub fn ac_h(u: &GridFunction, alpha: f64) -> Result<f64> {
    Ok(dirichlet_h(u) + potential_h(u, alpha)?)
}

/// A field constant on each cell `Q_z` of its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantField {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
}

impl PiecewiseConstantField {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let z = self.grid.cell_of(x)?;
        Ok(self.values[self.grid.linear(&z)])
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_measure()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_measure()
    }

    /// Integral over the cell of node `z`.
    pub fn cell_integral(&self, z: usize) -> f64 {
        self.values[z] * self.grid.cell_measure()
    }
}

/// `i_h`: extend each nodal value over its cell.
pub fn embed_pc(u: &GridFunction) -> PiecewiseConstantField {
    PiecewiseConstantField { grid: u.grid, values: u.values.clone() }
}

/// L² inner product of two piecewise-constant fields on the same grid.
pub fn pc_inner(a: &PiecewiseConstantField, b: &PiecewiseConstantField) -> Result<f64> {
    same_grid(&a.grid, &b.grid)?;
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>() * a.grid.cell_measure())
}

/// Calls `visit(cell, x, weight)` for every tensor Gauss point of every cell.
pub fn for_each_cell_point(grid: TorusGrid, order: usize, mut visit: impl FnMut(usize, &[f64], f64)) {
    let h = grid.h();
    let (offs, wts) = quadrature::rule_on(order, -0.5 * h, 0.5 * h);
    let n = grid.dim();
    let q = offs.len();
    let mut x = vec![0.0; n];
    let combos = q.pow(n as u32);
    for z in 0..grid.len() {
        let base = grid.position(z);
        for t in 0..combos {
            let mut rest = t;
            let mut w = 1.0;
            for a in (0..n).rev() {
                let j = rest % q;
                rest /= q;
                x[a] = base[a] + offs[j];
                w *= wts[j];
            }
            visit(z, &x, w);
        }
    }
}

/// `p_h w` for a callable, by tensor Gauss–Legendre quadrature in each cell.
pub fn project_pc(w: impl Fn(&[f64]) -> f64, grid: TorusGrid, order: usize) -> Result<GridFunction> {
    if order == 0 {
        return Err(Error::Quadrature("order must be positive".into()));
    }
    let inv = 1.0 / grid.cell_measure();
    let mut values = vec![0.0; grid.len()];
    for_each_cell_point(grid, order, |z, x, wt| values[z] += wt * w(x));
    values.iter_mut().for_each(|v| *v *= inv);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature("non-finite cell integral".into()));
    }
    Ok(GridFunction { grid, values })
}

/// Quadrature estimate of the projection error: difference between orders `order` and `2 order`.
pub fn project_pc_error_estimate(w: impl Fn(&[f64]) -> f64, grid: TorusGrid, order: usize) -> Result<f64> {
    let a = project_pc(&w, grid, order)?;
    let b = project_pc(&w, grid, 2 * order)?;
    Ok(a.sub(&b)?.sup_norm())
}

/// Overlap of target cells with source cells along one axis, for grids where one
/// size divides the other. Entry `j` lists `(source index, overlap / h_target)`.
pub(crate) fn overlap_1d(k_target: usize, k_source: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    if !k_source.is_multiple_of(k_target) && !k_target.is_multiple_of(k_source) {
        return Err(Error::NotCommensurate { coarse: k_target.min(k_source), fine: k_target.max(k_source) });
    }
    let l = k_target.max(k_source) as i64;
    let rt = l / k_target as i64;
    let rs = l / k_source as i64;
    // positions in units of 1/(2l); cell j of a grid with ratio r spans [(2j-1) r, (2j+1) r)
    let mut out = Vec::with_capacity(k_target);
    for j in 0..k_target as i64 {
        let lo = (2 * j - 1) * rt;
        let hi = (2 * j + 1) * rt;
        let mut entries = Vec::new();
        let m_lo = (lo + rs).div_euclid(2 * rs) - 1;
        let m_hi = (hi + rs).div_euclid(2 * rs) + 1;
        for m in m_lo..=m_hi {
            let a = lo.max((2 * m - 1) * rs);
            let b = hi.min((2 * m + 1) * rs);
            if b > a {
                let src = m.rem_euclid(k_source as i64) as usize;
                entries.push((src, (b - a) as f64 / (2 * rt) as f64));
            }
        }
        out.push(entries);
    }
    Ok(out)
}

/// Exact `p_h` of a piecewise-constant field on a grid commensurate with `grid`.
pub fn project_pc_field(f: &PiecewiseConstantField, grid: TorusGrid) -> Result<GridFunction> {
    if f.grid.dim() != grid.dim() {
        return Err(Error::GridMismatch("dimension differs".into()));
    }
    let ov = overlap_1d(grid.k(), f.grid.k())?;
    let n = grid.dim();
    let values = (0..grid.len())
        .map(|z| {
            let lists: Vec<&Vec<(usize, f64)>> = (0..n).map(|a| &ov[grid.coord(z, a)]).collect();
            tensor_sum(&lists, f.grid, |idx, w| f.values[idx] * w)
        })
        .collect();
    Ok(GridFunction { grid, values })
}

fn tensor_sum(lists: &[&Vec<(usize, f64)>], fine: TorusGrid, term: impl Fn(usize, f64) -> f64) -> f64 {
    let n = lists.len();
    let mut pos = vec![0usize; n];
    let mut total = 0.0;
    loop {
        let mut idx = 0;
        let mut w = 1.0;
        for a in 0..n {
            let (c, wa) = lists[a][pos[a]];
            idx = idx * fine.k() + c;
            w *= wa;
        }
        total += term(idx, w);
        let mut a = n;
        loop {
            if a == 0 {
                return total;
            }
            a -= 1;
            pos[a] += 1;
            if pos[a] < lists[a].len() {
                break;
            }
            pos[a] = 0;
        }
    }
}

/// Exact `||a - b||²_{L²}` for piecewise-constant fields whose grids are commensurate.
pub fn pc_distance_sq(a: &PiecewiseConstantField, b: &PiecewiseConstantField) -> Result<f64> {
    let (coarse, fine) = if a.grid.k() <= b.grid.k() { (a, b) } else { (b, a) };
    if coarse.grid.dim() != fine.grid.dim() {
        return Err(Error::GridMismatch("dimension differs".into()));
    }
    let ov = overlap_1d(coarse.grid.k(), fine.grid.k())?;
    let n = coarse.grid.dim();
    let hc = coarse.grid.cell_measure();
    let mut total = 0.0;
    for z in 0..coarse.grid.len() {
        let lists: Vec<&Vec<(usize, f64)>> = (0..n).map(|ax| &ov[coarse.grid.coord(z, ax)]).collect();
        let cz = coarse.values[z];
        total += tensor_sum(&lists, fine.grid, |idx, w| (fine.values[idx] - cz).powi(2) * w) * hc;
    }
    Ok(total)
}

/// Quadrature value of `∫ |f - w|^p` for a piecewise-constant `f` and callable `w`.
pub fn pc_minus_callable_lp(
    f: &PiecewiseConstantField,
    w: impl Fn(&[f64]) -> f64,
    p: f64,
    order: usize,
) -> f64 {
    let mut total = 0.0;
    for_each_cell_point(f.grid, order, |z, x, wt| total += wt * (f.values[z] - w(x)).abs().powf(p));
    total
}

/// Anisotropic total variation of a piecewise-constant field, summed as jumps
/// across cell interfaces line by line along each axis.
pub fn continuum_tv_pc(f: &PiecewiseConstantField) -> f64 {
    let g = f.grid;
    let n = g.dim();
    let k = g.k();
    let face = g.h().powi(n as i32 - 1);
    let mut total = 0.0;
    for axis in 0..n {
        let stride = g.stride(axis);
        // every line along `axis` starts at a node whose coordinate on `axis` is zero
        for start in (0..g.len()).filter(|&z| g.coord(z, axis) == 0) {
            let line: Vec<f64> = (0..k).map(|j| f.values[start + j * stride]).collect();
            // essential variation of the periodic step function with these cell values
            let var: f64 = (0..k).map(|j| (line[(j + 1) % k] - line[j]).abs()).sum();
            total += var * face;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn g(n: usize, k: usize) -> TorusGrid {
        TorusGrid::new(n, k).unwrap()
    }

    fn gf(grid: TorusGrid, v: &[f64]) -> GridFunction {
        GridFunction::new(grid, v.to_vec()).unwrap()
    }

    #[test]
    fn inner_examples() {
        let u = gf(g(1, 4), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(inner_h(&u, &u).unwrap(), 0.25);
        let one = GridFunction::constant(g(3, 3), 1.0);
        assert!((inner_h(&one, &one).unwrap() - 1.0).abs() < 1e-15);
        let a = gf(g(2, 2), &[1.0, 2.0, 3.0, 4.0]);
        let b = GridFunction::constant(g(2, 2), 1.0);
        assert_eq!(inner_h(&a, &b).unwrap(), 2.5);
        assert!(inner_h(&a, &u).is_err());
    }

    #[test]
    fn gradient_and_laplacian_examples() {
        let u = gf(g(1, 4), &[1.0, 0.0, 0.0, 0.0]);
        let d = graph_gradient(&u);
        assert_eq!(d.on_edge(0, 1), -4.0);
        assert_eq!(d.on_edge(3, 0), 4.0);
        assert_eq!(d.on_edge(1, 2), 0.0);
        assert_eq!(d.on_edge(2, 3), 0.0);
        assert_eq!(edge_inner(&d, &d).unwrap(), 8.0);
        assert_eq!(edge_inner_forward_1d(&d, &d).unwrap(), 8.0);
        let lap = graph_laplacian(&u);
        assert_eq!(lap.values, vec![-32.0, 16.0, 0.0, 16.0]);
        let neg = lap.map(|v| -v);
        assert_eq!(inner_h(&neg, &u).unwrap(), 8.0);
        let c = GridFunction::constant(g(2, 5), 3.0);
        assert!(graph_gradient(&c).values.iter().all(|&v| v == 0.0));
        assert!(graph_laplacian(&c).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_examples() {
        let u = gf(g(1, 4), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(tv_h(&u), 2.0);
        assert_eq!(dirichlet_h(&u), 4.0);
        assert_eq!(potential_h(&u, 1.0).unwrap(), 3.0 / 16.0);
        let plateau = gf(g(1, 8), &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(tv_h(&plateau), 2.0);
        assert_eq!(tv_h(&GridFunction::constant(g(2, 4), 2.0)), 0.0);
        for c in [1.0, -1.0] {
            assert_eq!(ac_h(&GridFunction::constant(g(1, 6), c), 2.0).unwrap(), 0.0);
        }
        assert!((ac_h(&GridFunction::zeros(g(1, 6)), 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(potential_h(&u, 0.0).is_err());
    }

    #[test]
    fn embedding_examples() {
        let u = gf(g(1, 4), &[1.0, 0.0, 0.0, 0.0]);
        let f = embed_pc(&u);
        assert_eq!(f.eval(&[0.1]).unwrap(), 1.0);
        assert_eq!(f.eval(&[-0.125]).unwrap(), 1.0);
        assert_eq!(f.eval(&[0.125]).unwrap(), 0.0);
        assert_eq!(f.l2_norm_sq(), 0.25);
        assert_eq!(continuum_tv_pc(&f), 2.0);
        let mut v = vec![0.0; 16];
        v[5] = 1.0;
        let f2 = embed_pc(&gf(g(2, 4), &v));
        assert_eq!(continuum_tv_pc(&f2), 1.0);
        assert_eq!(continuum_tv_pc(&embed_pc(&GridFunction::constant(g(3, 3), 1.5))), 0.0);
    }

    #[test]
    fn projection_of_cosine() {
        let p = project_pc(|x| (2.0 * PI * x[0]).cos(), g(1, 2), 8).unwrap();
        let want = 2.0 / PI;
        // analytic cell integral: (1/h) ∫_{-1/4}^{1/4} cos(2πx) dx = 2/π
        assert!((p.values[0] - want).abs() < 1e-13);
        assert!((p.values[1] + want).abs() < 1e-13);
        assert!(project_pc_error_estimate(|x| (2.0 * PI * x[0]).cos(), g(1, 2), 8).unwrap() < 1e-12);
    }

    #[test]
    fn overlap_weights_cover_cells() {
        for (kc, kf) in [(2, 4), (3, 9), (4, 8), (2, 2), (4, 12)] {
            let ov = overlap_1d(kc, kf).unwrap();
            for row in &ov {
                let s: f64 = row.iter().map(|e| e.1).sum();
                assert!((s - 1.0).abs() < 1e-15);
            }
            let mut per_fine = vec![0.0; kf];
            for row in &ov {
                for &(m, w) in row {
                    per_fine[m] += w * kf as f64 / kc as f64;
                }
            }
            assert!(per_fine.iter().all(|v| (v - 1.0).abs() < 1e-14));
        }
        assert!(overlap_1d(4, 6).is_err());
    }

    #[test]
    fn projection_onto_finer_grid() {
        let f = embed_pc(&gf(g(1, 2), &[1.0, 0.0]));
        // odd ratio: fine cells nest inside coarse cells
        let p3 = project_pc_field(&f, g(1, 6)).unwrap();
        assert_eq!(p3.values, vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        // even ratio: the fine cells at the coarse boundaries straddle the jump
        let p2 = project_pc_field(&f, g(1, 4)).unwrap();
        assert_eq!(p2.values, vec![1.0, 0.5, 0.0, 0.5]);
        let d = pc_distance_sq(&f, &embed_pc(&p2)).unwrap();
        assert!((d - 2.0 * 0.25 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn projection_of_finer_field_matches_quadrature() {
        // odd refinement ratio: every coarse cell is a union of fine cells
        let w = |x: &[f64]| (2.0 * PI * x[0]).sin() + (2.0 * PI * x[1]).cos() * 0.5;
        let fine = project_pc(w, g(2, 12), 10).unwrap();
        let via_fine = project_pc_field(&embed_pc(&fine), g(2, 4)).unwrap();
        let direct = project_pc(w, g(2, 4), 10).unwrap();
        assert!(via_fine.sub(&direct).unwrap().sup_norm() < 1e-13);
    }

    #[test]
    fn csv_and_json_roundtrip() {
        let u = gf(g(2, 3), &[0.1, 1.0 / 3.0, -2.5e-300, 7.0, PI, -0.0, 1e17, 2.0, 5.5]);
        let back = GridFunction::from_csv(u.grid, &u.to_csv()).unwrap();
        assert_eq!(back.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   u.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        let back = GridFunction::from_json(&u.to_json()).unwrap();
        assert_eq!(back, u);
        assert!(GridFunction::from_json(r#"{"n":1,"k":4,"values":[1,2]}"#).is_err());
    }

    fn field(max_n: usize) -> impl Strategy<Value = GridFunction> {
        (1..=max_n, 2usize..=5).prop_flat_map(|(n, k)| {
            let grid = g(n, k);
            proptest::collection::vec(-3.0f64..3.0, grid.len())
                .prop_map(move |v| GridFunction::new(grid, v).unwrap())
        })
    }

    fn field_pair() -> impl Strategy<Value = (GridFunction, GridFunction)> {
        (1usize..=3, 2usize..=5).prop_flat_map(|(n, k)| {
            let grid = g(n, k);
            let s = proptest::collection::vec(-3.0f64..3.0, grid.len());
            (s.clone(), s).prop_map(move |(a, b)| {
                (GridFunction::new(grid, a).unwrap(), GridFunction::new(grid, b).unwrap())
            })
        })
    }

    proptest! {
        #[test]
        fn summation_by_parts((u, v) in field_pair()) {
            let lhs = -inner_h(&graph_laplacian(&u), &v).unwrap();
            let mid = edge_inner(&graph_gradient(&u), &graph_gradient(&v)).unwrap();
            let rhs = -inner_h(&u, &graph_laplacian(&v)).unwrap();
            let scale = 1.0 + mid.abs();
            prop_assert!((lhs - mid).abs() <= 1e-12 * scale);
            prop_assert!((rhs - mid).abs() <= 1e-12 * scale);
        }

        #[test]
        fn gradient_is_antisymmetric(u in field(3)) {
            let d = graph_gradient(&u);
            let grid = u.grid;
            for z in 0..grid.len() {
                for a in 0..grid.dim() {
                    let nb = grid.step(z, a, true);
                    prop_assert_eq!(d.get(z, a, true), -d.get(nb, a, false));
                }
            }
        }

        #[test]
        fn dirichlet_is_half_gradient_norm(u in field(3)) {
            let d = graph_gradient(&u);
            let half = 0.5 * edge_inner(&d, &d).unwrap();
            prop_assert!((dirichlet_h(&u) - half).abs() <= 1e-12 * (1.0 + half));
        }

        #[test]
        fn isometry_and_roundtrip((u, v) in field_pair()) {
            let iu = embed_pc(&u);
            let iv = embed_pc(&v);
            let a = pc_inner(&iu, &iv).unwrap();
            prop_assert!((a - inner_h(&u, &v).unwrap()).abs() <= 1e-13);
            let back = project_pc_field(&iu, u.grid).unwrap();
            prop_assert!(back.sub(&u).unwrap().sup_norm() <= 1e-14);
        }

        #[test]
        fn embedded_tv_matches_jump_sum(u in field(3)) {
            let a = continuum_tv_pc(&embed_pc(&u));
            prop_assert!((a - tv_h(&u)).abs() <= 1e-12 * (1.0 + a));
        }

        #[test]
        fn tv_vanishes_only_on_constants(u in field(2)) {
            let t = tv_h(&u);
            let spread = u.values.iter().cloned().fold(f64::MIN, f64::max)
                - u.values.iter().cloned().fold(f64::MAX, f64::min);
            prop_assert!(t >= 0.0);
            prop_assert_eq!(t == 0.0, spread == 0.0);
        }

        #[test]
        fn one_dim_symmetric_reduction(v in proptest::collection::vec(-2.0f64..2.0, 2..12)) {
            let grid = g(1, v.len());
            let u = GridFunction::new(grid, v).unwrap();
            let d = graph_gradient(&u);
            let full = edge_inner(&d, &d).unwrap();
            let red = edge_inner_forward_1d(&d, &d).unwrap();
            prop_assert!((full - red).abs() <= 1e-14 * (1.0 + full));
        }
    }
}
