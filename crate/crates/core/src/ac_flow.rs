//! One-dimensional Allen–Cahn flows in the standard and Γ-weighted metrics, their
//! generalisation `u' = Δ_h u + λu - F(u)`, a fine-grid reference solution and the
//! comparison, smoothing, two-flow and convergence checks.
//!
//! Stepping is semi-implicit: diffusion implicit through a circulant solve,
//! reaction explicit.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::calculus::{ac_h, dirichlet_h, double_well_prime, graph_laplacian, GridFunction};
use crate::circulant::Circulant;
use crate::error::{Error, Result};
use crate::gamma::{require_1d, GammaOperator};
use crate::grid::TorusGrid;
use crate::interp::{lin_embed, pc_pl_distance_sq, pl_distance_sq};
use crate::trajectory::{step_count, SchemeMeta, Trajectory};

/// Sample intervals stored by sampled runs (65 states including `t = 0`).
pub const SAMPLE_INTERVALS: usize = 64;
/// Points used to sample a user-supplied `F'` on the comparison range.
const CUSTOM_SAMPLES: usize = 2001;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Reaction {
    /// `F(x) = W'(x) + λx` with `W(x) = α(x² - 1)²/4`.
    Canonical,
    Custom { f: ScalarFn, df: ScalarFn },
}

#[derive(Clone)]
pub struct PotentialSpec {
    pub alpha: f64,
    pub lambda: f64,
    pub reaction: Reaction,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.reaction {
            Reaction::Canonical => "canonical",
            Reaction::Custom { .. } => "custom",
        };
        f.debug_struct("PotentialSpec")
            .field("alpha", &self.alpha)
            .field("lambda", &self.lambda)
            .field("reaction", &kind)
            .finish()
    }
}

/// Growth constant `N` with a note when it was obtained by sampling.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthConstant {
    pub value: f64,
    pub radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl PotentialSpec {
    pub fn canonical(alpha: f64, lambda: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        if !(lambda > alpha && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} must exceed alpha {alpha}")));
        }
        Ok(PotentialSpec { alpha, lambda, reaction: Reaction::Canonical })
    }

    /// User reaction `F` with derivative `df`; requires `F(0) = 0`.
    pub fn custom(alpha: f64, lambda: f64, f: ScalarFn, df: ScalarFn) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("invalid alpha {alpha} or lambda {lambda}")));
        }
        let f0 = f(0.0);
        if f0 != 0.0 {
            return Err(Error::InvalidParameter(format!("F(0) must vanish, got {f0}")));
        }
        Ok(PotentialSpec { alpha, lambda, reaction: Reaction::Custom { f, df } })
    }

    pub fn is_canonical(&self) -> bool {
        matches!(self.reaction, Reaction::Canonical)
    }

    pub fn f(&self, x: f64) -> f64 {
        match &self.reaction {
            Reaction::Canonical => double_well_prime(x, self.alpha) + self.lambda * x,
            Reaction::Custom { f, .. } => f(x),
        }
    }

    pub fn df(&self, x: f64) -> f64 {
        match &self.reaction {
            Reaction::Canonical => self.alpha * (3.0 * x * x - 1.0) + self.lambda,
            Reaction::Custom { df, .. } => df(x),
        }
    }

    /// Explicit part `λx - F(x)`.
    fn reaction(&self, x: f64) -> f64 {
        match &self.reaction {
            Reaction::Canonical => -double_well_prime(x, self.alpha),
            Reaction::Custom { f, .. } => self.lambda * x - f(x),
        }
    }

    /// `N = sup { F'(s) : |s| <= radius }`.
    pub fn growth_constant(&self, radius: f64) -> GrowthConstant {
        match &self.reaction {
            Reaction::Canonical => {
                // F' is increasing in s², so the endpoint is the maximum
                GrowthConstant { value: self.df(radius).max(self.df(0.0)), radius, warning: None }
            }
            Reaction::Custom { df, .. } => {
                let mut max = f64::NEG_INFINITY;
                let mut min = f64::INFINITY;
                for i in 0..CUSTOM_SAMPLES {
                    let s = -radius + 2.0 * radius * i as f64 / (CUSTOM_SAMPLES - 1) as f64;
                    let d = df(s);
                    max = max.max(d);
                    min = min.min(d);
                }
                let mut warning = format!("N sampled from F' at {CUSTOM_SAMPLES} points of [-{radius}, {radius}]");
                if min < 1e-8 * (1.0 + max.abs()) {
                    warning.push_str(&format!("; sampled min F' = {min:e} does not certify monotonicity"));
                }
                GrowthConstant { value: max, radius, warning: Some(warning) }
            }
        }
    }

    /// `C_N = (N² + λ²)/36`.
    pub fn c_n(&self, n: f64) -> f64 {
        (n * n + self.lambda * self.lambda) / 36.0
    }

    /// `C_* = e^{2λT}(1/6 + 3 C_N/(λδ))`.
    pub fn c_star(&self, n: f64, t_end: f64, delta: f64) -> f64 {
        (2.0 * self.lambda * t_end).exp() * (1.0 / 6.0 + 3.0 * self.c_n(n) / (self.lambda * delta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Standard,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// 65 evenly spaced states; the step count is rounded up to a multiple of 64.
    Uniform,
    /// Every step.
    Dense,
}

/// `M - τΔ_h` for the mass stencil `M = (m0, m1)`.
fn implicit_operator(k: usize, m0: f64, m1: f64, tau: f64) -> Circulant {
    let inv_h2 = (k * k) as f64;
    Circulant::new(k, m0 + 2.0 * tau * inv_h2, m1 - tau * inv_h2)
}

/// Semi-implicit run of either metric.
pub fn ac_run(
    u0: &GridFunction,
    spec: &PotentialSpec,
    t_end: f64,
    tau: f64,
    metric: Metric,
    sampling: Sampling,
) -> Result<Trajectory> {
    require_1d(&u0.grid)?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon {t_end} must be positive")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("step {tau} must be positive")));
    }
    let k = u0.len();
    let steps = match sampling {
        Sampling::Uniform => step_count(t_end, tau, SAMPLE_INTERVALS),
        Sampling::Dense => step_count(t_end, tau, 1),
    };
    let stride = match sampling {
        Sampling::Uniform => steps / SAMPLE_INTERVALS,
        Sampling::Dense => 1,
    };
    let dt = t_end / steps as f64;
    let (lhs, gamma) = match metric {
        Metric::Standard => (implicit_operator(k, 1.0, 0.0, dt), None),
        Metric::Gamma => (implicit_operator(k, 2.0 / 3.0, 1.0 / 6.0, dt), Some(Circulant::new(k, 2.0 / 3.0, 1.0 / 6.0))),
    };
    let sup0 = u0.sup_norm();
    let samples = steps / stride;
    let mut times = Vec::with_capacity(samples + 1);
    let mut states = Vec::with_capacity(samples + 1);
    times.push(0.0);
    states.push(u0.values.clone());
    let mut u = u0.values.clone();
    let mut rhs = vec![0.0; k];
    for m in 1..=steps {
        let base = match &gamma {
            Some(g) => g.apply(&u),
            None => u.clone(),
        };
        for j in 0..k {
            rhs[j] = base[j] + dt * spec.reaction(u[j]);
        }
        u = lhs.solve(&rhs);
        let t = m as f64 * dt;
        let guard = 10.0 * sup0 * (spec.lambda * t).exp();
        let norm = u.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if !(norm <= guard) {
            return Err(Error::StepRejected { step: m, norm, guard });
        }
        if m % stride == 0 {
            times.push(match sampling {
                Sampling::Uniform => t_end * (m / stride) as f64 / SAMPLE_INTERVALS as f64,
                Sampling::Dense if m == steps => t_end,
                Sampling::Dense => t,
            });
            states.push(u.clone());
        }
    }
    let scheme = match metric {
        Metric::Standard => "allen-cahn-semi-implicit",
        Metric::Gamma => "allen-cahn-gamma-semi-implicit",
    };
    Ok(Trajectory {
        grid: u0.grid,
        times,
        states,
        meta: SchemeMeta { scheme: scheme.into(), tau: dt, steps, eps_prox: None, step_gaps: vec![] },
    })
}

/// `(Id - τΔ_h) u^{m+1} = u^m + τ(λu^m - F(u^m))`, 65 samples.
pub fn dac_flow(u0: &GridFunction, spec: &PotentialSpec, t_end: f64, tau: f64) -> Result<Trajectory> {
    ac_run(u0, spec, t_end, tau, Metric::Standard, Sampling::Uniform)
}

/// `(Γ - τΔ_h) U^{m+1} = ΓU^m + τ(λU^m - F(U^m))`, 65 samples.
pub fn mdac_flow(u0: &GridFunction, spec: &PotentialSpec, t_end: f64, tau: f64) -> Result<Trajectory> {
    ac_run(u0, spec, t_end, tau, Metric::Gamma, Sampling::Uniform)
}

/// Default step `min(h², 1e-3)`.
pub fn default_tau(k: usize) -> f64 {
    let h = 1.0 / k as f64;
    (h * h).min(1e-3)
}

/// Fine-grid run standing in for the continuum flow, started from nodal samples of `u0`.
pub fn continuum_reference(
    u0: impl Fn(f64) -> f64,
    alpha: f64,
    t_end: f64,
    k_ref: usize,
    tau_ref: f64,
) -> Result<Trajectory> {
    let grid = TorusGrid::new(1, k_ref)?;
    let init = GridFunction::from_fn(grid, |x| u0(x[0]));
    dac_flow(&init, &PotentialSpec::canonical(alpha, 2.0 * alpha)?, t_end, tau_ref)
}

fn grad_norm_sq(u: &GridFunction) -> f64 {
    2.0 * dirichlet_h(u)
}

/// Step-size dependent slack `10 τ (1 + T)` used by the Allen–Cahn checks.
pub fn scheme_slack(tau: f64, t_end: f64) -> f64 {
    10.0 * tau * (1.0 + t_end)
}

#[derive(Debug, Clone, Serialize)]
pub struct CpReport {
    /// `max_t (||u(t)||_∞ - ||u0||_∞ e^{λt})`.
    pub growth_excess: f64,
    /// `min` over nodes and samples of `||u0||_∞ e^{λt} ∓ u(t)`.
    pub supersolution_min: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Growth estimate and minimum principle along a run.
pub fn cp_check(traj: &Trajectory, spec: &PotentialSpec) -> CpReport {
    let sup0 = traj.state(0).sup_norm();
    let mut growth = f64::NEG_INFINITY;
    let mut minimum = f64::INFINITY;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let envelope = sup0 * (spec.lambda * t).exp();
        for &v in s {
            growth = growth.max(v.abs() - envelope);
            minimum = minimum.min(envelope - v).min(envelope + v);
        }
    }
    let slack = 10.0 * traj.meta.tau;
    CpReport { growth_excess: growth, supersolution_min: minimum, slack, pass: growth <= slack && minimum >= -slack }
}

#[derive(Debug, Clone, Serialize)]
pub struct SacReport {
    /// `(t, e^{-2λt}||u - Γu||² + 2∫ e^{-2λs}||∇(u - Γu)||² ds)` per stored state.
    pub lhs: Vec<(f64, f64)>,
    /// `(h²/9) ||∇_h u0||²`.
    pub bound: f64,
    pub worst_excess: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Smoothing estimate for `u - Γu`; the time integral is a trapezoid over the stored states,
/// so dense runs give the sharpest values.
pub fn sac_check(traj: &Trajectory, spec: &PotentialSpec) -> Result<SacReport> {
    let gamma = GammaOperator::new(traj.grid)?;
    let h = traj.grid.h();
    let mut lhs = Vec::with_capacity(traj.len());
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..traj.len() {
        let u = traj.state(i);
        let d = u.sub(&gamma.apply(&u)?)?;
        let t = traj.times[i];
        let w = (-2.0 * spec.lambda * t).exp();
        let g = w * grad_norm_sq(&d);
        if let Some((t0, g0)) = prev {
            integral += 0.5 * (t - t0) * (g0 + g);
        }
        prev = Some((t, g));
        lhs.push((t, w * d.norm_h().powi(2) + 2.0 * integral));
    }
    let bound = h * h / 9.0 * grad_norm_sq(&traj.state(0));
    let worst = lhs.iter().map(|(_, v)| v - bound).fold(f64::NEG_INFINITY, f64::max);
    let slack = scheme_slack(traj.meta.tau, traj.horizon());
    Ok(SacReport { lhs, bound, worst_excess: worst, slack, pass: worst <= slack })
}

/// How the step is chosen from the mesh size in multi-grid studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauRule {
    /// `min(h², 1e-3)`.
    Default,
    /// `h²`.
    MeshSquared,
    Fixed(f64),
}

impl TauRule {
    pub fn tau(&self, k: usize) -> f64 {
        let h = 1.0 / k as f64;
        match *self {
            TauRule::Default => default_tau(k),
            TauRule::MeshSquared => h * h,
            TauRule::Fixed(t) => t,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TdfEntry {
    pub k: usize,
    pub h: f64,
    pub tau: f64,
    /// `sup_t ||u(t) - U(t)||_h`.
    pub sup_error: f64,
    /// Worst `||u - U||²_h - C_* h² ||∇u0||² e^{6(λ+δ)t}` over samples, and where it occurs.
    pub worst_excess: f64,
    pub worst_time: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TdfReport {
    pub growth: GrowthConstant,
    pub c_n: f64,
    pub c_star: f64,
    pub delta: f64,
    pub entries: Vec<TdfEntry>,
    pub empirical_order: f64,
    pub pass: bool,
}

/// Paired standard / Γ-metric runs from the same nodal data on each grid.
pub fn tdf_check(
    u0: impl Fn(f64) -> f64,
    spec: &PotentialSpec,
    t_end: f64,
    delta: f64,
    grids: &[usize],
    rule: TauRule,
) -> Result<TdfReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} must be positive")));
    }
    if !(spec.lambda > 0.0) {
        return Err(Error::InvalidParameter("the two-flow bound needs lambda > 0".into()));
    }
    check_grids(grids)?;
    let inits: Vec<GridFunction> = grids
        .iter()
        .map(|&k| Ok(GridFunction::from_fn(TorusGrid::new(1, k)?, |x| u0(x[0]))))
        .collect::<Result<_>>()?;
    let sup0 = inits.iter().map(|u| u.sup_norm()).fold(0.0, f64::max);
    let growth = spec.growth_constant(sup0 * (spec.lambda * t_end).exp());
    let c_n = spec.c_n(growth.value);
    let c_star = spec.c_star(growth.value, t_end, delta);
    let mut entries = Vec::new();
    for (init, &k) in inits.iter().zip(grids) {
        let tau = rule.tau(k);
        let a = dac_flow(init, spec, t_end, tau)?;
        let b = mdac_flow(init, spec, t_end, tau)?;
        let h = init.grid.h();
        let g0 = grad_norm_sq(init);
        let slack = scheme_slack(a.meta.tau, t_end);
        let mut sup = 0.0f64;
        let mut worst = (f64::NEG_INFINITY, 0.0);
        for i in 0..a.len() {
            let t = a.times[i];
            let d = a.state(i).sub(&b.state(i))?.norm_h();
            sup = sup.max(d);
            let bound = c_star * h * h * g0 * (6.0 * (spec.lambda + delta) * t).exp();
            if d * d - bound > worst.0 {
                worst = (d * d - bound, t);
            }
        }
        entries.push(TdfEntry {
            k,
            h,
            tau: a.meta.tau,
            sup_error: sup,
            worst_excess: worst.0,
            worst_time: worst.1,
            slack,
            pass: worst.0 <= slack,
        });
    }
    let empirical_order = fit_order(&entries.iter().map(|e| (e.h, e.sup_error)).collect::<Vec<_>>());
    let pass = entries.iter().all(|e| e.pass);
    Ok(TdfReport { growth, c_n, c_star, delta, entries, empirical_order, pass })
}

fn check_grids(grids: &[usize]) -> Result<()> {
    if grids.is_empty() {
        return Err(Error::InvalidParameter("empty grid list".into()));
    }
    if grids.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(format!("grids {grids:?} must be strictly increasing")));
    }
    Ok(())
}

/// Least-squares slope of `log e` against `log h`; NaN with fewer than two usable points.
pub fn fit_order(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(h, e)| *h > 0.0 && *e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceConfig {
    pub k_ref: usize,
    /// Step of the reference run; `None` takes a quarter of the smallest study step.
    pub tau_ref: Option<f64>,
    pub rule: TauRule,
    /// Required final error.
    pub threshold: f64,
    /// Allowed relative increase between consecutive grids.
    pub monotone_slack: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { k_ref: 1024, tau_ref: None, rule: TauRule::Default, threshold: 1e-2, monotone_slack: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CacEntry {
    pub k: usize,
    pub h: f64,
    pub tau: f64,
    /// `sup_t ||I_h u^h(t) - u(t)||_{L²}`.
    pub sup_error: f64,
    /// Same with `i_h` in place of `I_h`.
    pub sup_error_pc: f64,
    /// `h sqrt(φ_AC^h(u0^h))`.
    pub interchange_bound: f64,
    /// `h ||∇_h u0^h||_{h,h}`.
    pub initial_roughness: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CacReport {
    pub k_ref: usize,
    pub tau_ref: f64,
    pub entries: Vec<CacEntry>,
    pub empirical_order: f64,
    pub monotone: bool,
    pub below_threshold: bool,
    pub interchange_ok: bool,
    pub roughness_decreasing: bool,
    pub pass: bool,
}

/// Mesh-refinement study of the standard flow against a fine reference run.
pub fn cac_convergence(
    u0: impl Fn(f64) -> f64 + Sync,
    alpha: f64,
    t_end: f64,
    grids: &[usize],
    config: &ReferenceConfig,
) -> Result<CacReport> {
    check_grids(grids)?;
    let largest = *grids.last().expect("nonempty");
    if config.k_ref < 8 * largest || grids.iter().any(|k| !config.k_ref.is_multiple_of(*k)) {
        return Err(Error::InvalidParameter(format!(
            "reference grid {} must be a multiple of every study grid and at least 8 x {largest}",
            config.k_ref
        )));
    }
    let spec = PotentialSpec::canonical(alpha, 2.0 * alpha)?;
    let min_tau = grids.iter().map(|&k| config.rule.tau(k)).fold(f64::INFINITY, f64::min);
    let tau_ref = config.tau_ref.unwrap_or(min_tau / 4.0);
    if tau_ref > min_tau / 4.0 {
        return Err(Error::InvalidParameter(format!("reference step {tau_ref} exceeds a quarter of {min_tau}")));
    }
    let reference = continuum_reference(&u0, alpha, t_end, config.k_ref, tau_ref)?;
    let mut entries = Vec::new();
    for &k in grids {
        let init = GridFunction::from_fn(TorusGrid::new(1, k)?, |x| u0(x[0]));
        let run = dac_flow(&init, &spec, t_end, config.rule.tau(k))?;
        let (mut sup, mut sup_pc) = (0.0f64, 0.0f64);
        for i in 0..run.len() {
            let fine = lin_embed(&reference.state(i))?;
            sup = sup.max(pl_distance_sq(&lin_embed(&run.state(i))?, &fine)?.sqrt());
            sup_pc = sup_pc.max(pc_pl_distance_sq(&run.state(i), &fine)?.sqrt());
        }
        let h = init.grid.h();
        entries.push(CacEntry {
            k,
            h,
            tau: run.meta.tau,
            sup_error: sup,
            sup_error_pc: sup_pc,
            interchange_bound: h * ac_h(&init, alpha)?.sqrt(),
            initial_roughness: h * grad_norm_sq(&init).sqrt(),
        });
    }
    let monotone = entries.windows(2).all(|w| w[1].sup_error <= w[0].sup_error * (1.0 + config.monotone_slack));
    let below_threshold = entries.last().map(|e| e.sup_error <= config.threshold).unwrap_or(false);
    let interchange_ok = entries.iter().all(|e| (e.sup_error - e.sup_error_pc).abs() <= e.interchange_bound);
    let roughness_decreasing = entries.windows(2).all(|w| w[1].initial_roughness < w[0].initial_roughness);
    let empirical_order = fit_order(&entries.iter().map(|e| (e.h, e.sup_error)).collect::<Vec<_>>());
    Ok(CacReport {
        k_ref: config.k_ref,
        tau_ref: reference.meta.tau,
        entries,
        empirical_order,
        monotone,
        below_threshold,
        interchange_ok,
        roughness_decreasing,
        pass: monotone && below_threshold && interchange_ok && roughness_decreasing,
    })
}

/// `sup_t ||I u_ref - I u_2ref||_{L²}` between reference runs on `k_ref` and `2 k_ref`.
pub fn reference_consistency(
    u0: impl Fn(f64) -> f64,
    alpha: f64,
    t_end: f64,
    k_ref: usize,
    tau_ref: f64,
) -> Result<f64> {
    let a = continuum_reference(&u0, alpha, t_end, k_ref, tau_ref)?;
    let b = continuum_reference(&u0, alpha, t_end, 2 * k_ref, tau_ref)?;
    let mut sup = 0.0f64;
    for i in 0..a.len() {
        sup = sup.max(pl_distance_sq(&lin_embed(&a.state(i))?, &lin_embed(&b.state(i))?)?.sqrt());
    }
    Ok(sup)
}

/// Largest increase of `φ_AC^h` between consecutive stored states.
pub fn ac_energy_increase(traj: &Trajectory, alpha: f64) -> Result<f64> {
    let e: Vec<f64> = (0..traj.len()).map(|i| ac_h(&traj.state(i), alpha)).collect::<Result<_>>()?;
    Ok(e.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max))
}

/// Largest excess of the per-step EVI with modulus `-α` over the probes, after subtracting
/// the explicit-reaction slack `sup|W''| ||u_{m+1} - u_m||_h ||v - u_{m+1}||_h`.
/// Needs a dense standard-metric run of the canonical flow.
pub fn ac_evi_excess(traj: &Trajectory, spec: &PotentialSpec, probes: &[GridFunction]) -> Result<f64> {
    if !spec.is_canonical() {
        return Err(Error::InvalidParameter("EVI residual needs the canonical energy".into()));
    }
    let alpha = spec.alpha;
    let mut worst = f64::NEG_INFINITY;
    for m in 0..traj.len().saturating_sub(1) {
        let a = traj.state(m);
        let b = traj.state(m + 1);
        let dt = traj.times[m + 1] - traj.times[m];
        let radius = a.sup_norm().max(b.sup_norm());
        let curvature = alpha * (3.0 * radius * radius - 1.0).max(1.0);
        let step = b.sub(&a)?.norm_h();
        let phi_b = ac_h(&b, alpha)?;
        for v in probes {
            let db = b.sub(v)?.norm_h();
            let da = a.sub(v)?.norm_h();
            let lhs = (db * db - da * da) / (2.0 * dt) - 0.5 * alpha * db * db;
            let rhs = ac_h(v, alpha)? - phi_b + curvature * step * db;
            worst = worst.max(lhs - rhs);
        }
    }
    Ok(worst)
}

/// Largest `||u(t) - v(t)||_h - e^{αt}||u0 - v0||_h` over paired samples.
pub fn ac_contraction_excess(a: &Trajectory, b: &Trajectory, alpha: f64) -> Result<f64> {
    if a.times != b.times {
        return Err(Error::InvalidParameter("paired runs must share sample times".into()));
    }
    let d0 = a.state(0).sub(&b.state(0))?.norm_h();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..a.len() {
        let d = a.state(i).sub(&b.state(i))?.norm_h();
        worst = worst.max(d - (alpha * a.times[i]).exp() * d0);
    }
    Ok(worst)
}

/// `|| (u1 - u0)/τ - V(u0) ||_h` after one step, where `V` is `Δ_h u - W'(u)` or its
/// `Γ⁻¹` image; first order in `τ`.
pub fn vector_field_defect(u0: &GridFunction, spec: &PotentialSpec, tau: f64, metric: Metric) -> Result<f64> {
    let traj = ac_run(u0, spec, tau, tau, metric, Sampling::Dense)?;
    let slope = traj.last().sub(u0)?.map(|v| v / tau);
    let mut field = graph_laplacian(u0);
    for (f, &u) in field.values.iter_mut().zip(&u0.values) {
        *f += spec.reaction(u);
    }
    if metric == Metric::Gamma {
        field = GammaOperator::new(u0.grid)?.solve(&field)?;
    }
    Ok(slope.sub(&field)?.norm_h())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn line(k: usize) -> TorusGrid {
        TorusGrid::new(1, k).unwrap()
    }

    fn sine(k: usize, amp: f64) -> GridFunction {
        GridFunction::from_fn(line(k), |x| amp * (2.0 * PI * x[0]).sin())
    }

    fn canonical() -> PotentialSpec {
        PotentialSpec::canonical(1.0, 2.0).unwrap()
    }

    fn rk4_scalar(c0: f64, alpha: f64, t_end: f64, steps: usize) -> f64 {
        let f = |c: f64| -double_well_prime(c, alpha);
        let dt = t_end / steps as f64;
        let mut c = c0;
        for _ in 0..steps {
            let k1 = f(c);
            let k2 = f(c + 0.5 * dt * k1);
            let k3 = f(c + 0.5 * dt * k2);
            let k4 = f(c + dt * k3);
            c += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        c
    }

    #[test]
    fn wells_and_origin_are_frozen() {
        for metric in [Metric::Standard, Metric::Gamma] {
            for c in [1.0, -1.0, 0.0] {
                let u0 = GridFunction::constant(line(16), c);
                let traj = ac_run(&u0, &canonical(), 0.5, 1e-2, metric, Sampling::Uniform).unwrap();
                assert_eq!(traj.len(), SAMPLE_INTERVALS + 1);
                for s in &traj.states {
                    assert!(s.iter().all(|v| (v - c).abs() < 1e-13), "{metric:?} {c}");
                }
            }
        }
    }

    #[test]
    fn constant_data_follows_the_scalar_ode() {
        let exact = rk4_scalar(0.5, 1.0, 1.0, 100_000);
        for metric in [Metric::Standard, Metric::Gamma] {
            let err = |tau: f64| {
                let u0 = GridFunction::constant(line(8), 0.5);
                let traj = ac_run(&u0, &canonical(), 1.0, tau, metric, Sampling::Uniform).unwrap();
                traj.last().values.iter().map(|v| (v - exact).abs()).fold(0.0, f64::max)
            };
            let coarse = err(1.0 / 512.0);
            let fine = err(1.0 / 1024.0);
            assert!(coarse < 1.0 / 512.0, "{metric:?} {coarse}");
            assert!((coarse / fine - 2.0).abs() < 0.1, "{metric:?} {}", coarse / fine);
        }
    }

    #[test]
    fn sample_times_are_exact() {
        let traj = dac_flow(&sine(8, 1.0), &canonical(), 1.0, 1e-2).unwrap();
        assert_eq!(traj.meta.steps, 128);
        for (i, t) in traj.times.iter().enumerate() {
            assert_eq!(*t, i as f64 / 64.0);
        }
    }

    #[test]
    fn custom_reaction_reproduces_canonical() {
        let custom = PotentialSpec::custom(
            1.0,
            2.0,
            Arc::new(|x: f64| x * x * x - x + 2.0 * x),
            Arc::new(|x: f64| 3.0 * x * x - 1.0 + 2.0),
        )
        .unwrap();
        let u0 = sine(32, 0.8);
        let a = dac_flow(&u0, &canonical(), 0.3, 1e-3).unwrap();
        let b = dac_flow(&u0, &custom, 0.3, 1e-3).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            for (p, q) in x.iter().zip(y) {
                assert!((p - q).abs() < 1e-12);
            }
        }
        let n = custom.growth_constant(2.0);
        assert!((n.value - canonical().growth_constant(2.0).value).abs() < 1e-12);
        assert!(n.warning.is_some());
    }

    #[test]
    fn invalid_potentials_are_rejected() {
        assert!(PotentialSpec::canonical(1.0, 1.0).is_err());
        assert!(PotentialSpec::canonical(0.0, 2.0).is_err());
        let shifted = PotentialSpec::custom(1.0, 2.0, Arc::new(|x: f64| x + 1.0), Arc::new(|_| 1.0));
        assert!(matches!(shifted, Err(Error::InvalidParameter(_))));
        let two_d = GridFunction::constant(TorusGrid::new(2, 4).unwrap(), 0.0);
        assert!(matches!(dac_flow(&two_d, &canonical(), 1.0, 0.1), Err(Error::NotOneDimensional(2))));
        assert!(dac_flow(&sine(8, 1.0), &canonical(), 1.0, 0.0).is_err());
    }

    #[test]
    fn oversized_steps_are_rejected() {
        let u0 = GridFunction::constant(line(8), 2.0);
        let err = ac_run(&u0, &canonical(), 5.0, 1.0, Metric::Standard, Sampling::Dense).unwrap_err();
        assert!(matches!(err, Error::StepRejected { step: 3, .. }), "{err}");
    }

    #[test]
    fn constants_follow_closed_forms() {
        let spec = canonical();
        let radius = 2.0f64.exp();
        let n = spec.growth_constant(radius);
        assert!((n.value - (3.0 * radius * radius - 1.0 + 2.0)).abs() < 1e-12);
        assert!(n.warning.is_none());
        assert_eq!(spec.growth_constant(0.1).value, 2.0 - 1.0 + 3.0 * 0.01);
        assert!((spec.c_n(3.0) - 13.0 / 36.0).abs() < 1e-15);
        let expected = 8.0f64.exp() * (1.0 / 6.0 + 3.0 * (13.0 / 36.0) / 2.0);
        assert!((spec.c_star(3.0, 2.0, 1.0) - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn comparison_principle_for_sine() {
        let traj = dac_flow(&sine(64, 1.0), &canonical(), 1.0, 1e-4).unwrap();
        let report = cp_check(&traj, &canonical());
        assert!(report.pass, "{report:?}");
        assert!(report.growth_excess.abs() < 1e-15);
        // the wells attract, so the envelope is far from tight at the end
        assert!(traj.last().sup_norm() < 1.01);
    }

    #[test]
    fn smoothing_estimate() {
        let spec = canonical();
        let flat = dac_flow(&GridFunction::constant(line(16), 0.3), &spec, 1.0, 1e-3).unwrap();
        let report = sac_check(&flat, &spec).unwrap();
        assert_eq!(report.bound, 0.0);
        assert!(report.lhs.iter().all(|(_, v)| v.abs() < 1e-25));
        for tau in [1e-3, 1e-4] {
            let traj = ac_run(&sine(64, 1.0), &spec, 1.0, tau, Metric::Standard, Sampling::Dense).unwrap();
            let report = sac_check(&traj, &spec).unwrap();
            assert!(report.pass, "{tau} {} {}", report.worst_excess, report.slack);
            assert!(report.worst_excess <= 10.0 * tau * 2.0);
        }
    }

    #[test]
    fn two_flows_agree_on_constants() {
        let spec = canonical();
        let report = tdf_check(|_| 0.4, &spec, 1.0, 1.0, &[8, 16], TauRule::Fixed(1e-3)).unwrap();
        for e in &report.entries {
            assert!(e.sup_error <= 2.0 * e.tau, "{e:?}");
        }
        assert!(report.pass);
    }

    #[test]
    fn two_flows_first_order_in_h() {
        let spec = canonical();
        let report =
            tdf_check(|x| (2.0 * PI * x).sin(), &spec, 1.0, 1.0, &[16, 32, 64], TauRule::MeshSquared).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.empirical_order >= 0.9, "{}", report.empirical_order);
        assert!(tdf_check(|x| x, &spec, 1.0, 0.0, &[8], TauRule::Default).is_err());
        assert!(tdf_check(|x| x, &spec, 1.0, 1.0, &[16, 8], TauRule::Default).is_err());
    }

    #[test]
    fn convergence_study_small() {
        let config = ReferenceConfig { k_ref: 256, ..Default::default() };
        let report = cac_convergence(|x| 0.5 * (2.0 * PI * x).sin(), 1.0, 0.5, &[8, 16, 32], &config).unwrap();
        assert!(report.monotone && report.interchange_ok && report.roughness_decreasing, "{report:?}");
        assert!(report.empirical_order > 0.8 && report.empirical_order < 2.2, "{report:?}");
        let flat = cac_convergence(|_| 1.0, 1.0, 0.5, &[8, 16], &config).unwrap();
        assert!(flat.entries.iter().all(|e| e.sup_error < 1e-12));
        let bad = ReferenceConfig { k_ref: 100, ..Default::default() };
        assert!(cac_convergence(|_| 1.0, 1.0, 0.5, &[8, 16], &bad).is_err());
    }

    #[test]
    fn reference_stays_inside_the_wells() {
        let traj = continuum_reference(|x| 0.5 * (2.0 * PI * x).sin(), 1.0, 0.5, 256, 1e-4).unwrap();
        assert!(traj.last().sup_norm() < 1.0);
        let flat = continuum_reference(|_| 1.0, 1.0, 0.5, 64, 1e-3).unwrap();
        assert!(flat.last().values.iter().all(|v| (v - 1.0).abs() < 1e-13));
    }

    #[test]
    fn vector_field_consistency() {
        let u0 = sine(32, 0.7);
        for metric in [Metric::Standard, Metric::Gamma] {
            let a = vector_field_defect(&u0, &canonical(), 1e-4, metric).unwrap();
            let b = vector_field_defect(&u0, &canonical(), 5e-5, metric).unwrap();
            assert!((1.8..=2.2).contains(&(a / b)), "{metric:?} {a} {b}");
        }
    }

    #[test]
    fn evi_contraction_and_energy() {
        let spec = canonical();
        let u0 = sine(16, 0.9);
        let v0 = GridFunction::from_fn(line(16), |x| 0.6 * (4.0 * PI * x[0]).cos());
        let a = ac_run(&u0, &spec, 0.2, 1e-3, Metric::Standard, Sampling::Dense).unwrap();
        let b = ac_run(&v0, &spec, 0.2, 1e-3, Metric::Standard, Sampling::Dense).unwrap();
        let probes = [v0.clone(), GridFunction::constant(line(16), 1.0), sine(16, -0.3)];
        assert!(ac_evi_excess(&a, &spec, &probes).unwrap() <= 1e-12);
        assert!(ac_contraction_excess(&a, &b, spec.alpha).unwrap() <= 10.0 * 1e-3 * 0.2);
        assert!(ac_energy_increase(&a, spec.alpha).unwrap() <= 1e-3);
    }

    #[test]
    fn order_fit_recovers_power_laws() {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&h: &f64| (h, 3.0 * h.powf(1.5))).collect();
        assert!((fit_order(&pts) - 1.5).abs() < 1e-12);
        assert!(fit_order(&pts[..1]).is_nan());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_data_respects_comparison_and_energy(
            coeffs in proptest::collection::vec(-0.6f64..0.6, 4),
            metric_gamma in any::<bool>(),
        ) {
            let u0 = GridFunction::from_fn(line(16), |x| {
                coeffs.iter().enumerate().map(|(j, c)| c * (2.0 * PI * (j + 1) as f64 * x[0]).sin()).sum()
            });
            let metric = if metric_gamma { Metric::Gamma } else { Metric::Standard };
            let spec = canonical();
            let traj = ac_run(&u0, &spec, 0.2, 1e-3, metric, Sampling::Uniform).unwrap();
            let cp = cp_check(&traj, &spec);
            prop_assert!(cp.pass, "{:?}", cp);
            if metric == Metric::Standard {
                prop_assert!(ac_energy_increase(&traj, spec.alpha).unwrap() <= 10.0 * traj.meta.tau);
            }
        }
    }
}
