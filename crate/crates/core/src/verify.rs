//! Verification suites. Each suite is a list of check groups; groups run concurrently,
//! their records are assembled in declaration order, and a failing or panicking group
//! becomes a failing record instead of aborting the run.

use std::f64::consts::PI;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ac_flow::{
    ac_contraction_excess, ac_energy_increase, ac_evi_excess, ac_run, cac_convergence, cp_check,
    reference_consistency, sac_check, scheme_slack, tdf_check, vector_field_defect, Metric, PotentialSpec,
    ReferenceConfig, Sampling, TauRule,
};
use crate::calculus::{
    continuum_tv_pc, dirichlet_h, edge_inner, embed_pc, fmt17, graph_gradient, inner_h, pc_distance_sq, pc_inner,
    project_pc, project_pc_field, tv_h, GridFunction, PiecewiseConstantField,
};
use crate::error::{Error, Result};
use crate::gamma::{gamma_dense, gamma_exp, gamma_exp_series, GammaOperator};
use crate::grid::TorusGrid;
use crate::interp::{induced_inner, lin_embed, projection_error, verify_interp_estimates, TrigPoly};
use crate::poincare::poincare_check;
use crate::tv_flow::{
    contraction_excess, evi_excess, oracle_error, plateau_oracle_1d, tv1_refinement_check, tv2_energy_check,
    tv_flow_mm, PlateauProfile,
};

/// Identifiers of the statements a record can verify.
pub const ANCHORS: &[&str] = &[
    "pc-roundtrip",
    "pc-isometry",
    "pc-pythagoras",
    "pc-cell-mass",
    "embedded-tv-identity",
    "anisotropic-tv-bound",
    "induced-norm-sandwich",
    "induced-norm-gap",
    "quartic-sandwich",
    "pl-pc-gap",
    "interpolation-estimate",
    "projection-stability",
    "projection-convergence",
    "gamma-spectrum",
    "gamma-quadratic-form",
    "gamma-gradient-coercivity",
    "shift-gradient-identity",
    "gamma-exp-agreement",
    "gamma-exp-semigroup",
    "plateau-oracle",
    "tv-contraction",
    "tv-energy-identity",
    "tv-refinement",
    "tv-evi",
    "ac-minimum-principle",
    "ac-growth",
    "ac-smoothing",
    "ac-energy",
    "ac-evi",
    "ac-contraction",
    "ac-vector-field",
    "two-flow-bound",
    "two-flow-order",
    "continuum-convergence",
    "metric-interchange",
    "initial-roughness",
    "reference-consistency",
    "poincare-second-order",
    "poincare-fourth-order",
    "suite-error",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub anchor: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    pub measured: f64,
    pub bound: f64,
    /// Distance to the bound, positive when satisfied.
    pub margin: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    fn new(name: impl Into<String>, anchor: &'static str, measured: f64, bound: f64, margin: f64) -> Self {
        debug_assert!(ANCHORS.contains(&anchor), "unregistered anchor {anchor}");
        CheckRecord { name: name.into(), anchor, k: None, h: None, measured, bound, margin, pass: margin >= 0.0, note: None }
    }

    /// `measured <= bound`.
    pub fn at_most(name: impl Into<String>, anchor: &'static str, measured: f64, bound: f64) -> Self {
        Self::new(name, anchor, measured, bound, bound - measured)
    }

    /// `measured >= bound`.
    pub fn at_least(name: impl Into<String>, anchor: &'static str, measured: f64, bound: f64) -> Self {
        Self::new(name, anchor, measured, bound, measured - bound)
    }

    /// `lo <= measured <= hi`; `bound` holds `hi`.
    pub fn within(name: impl Into<String>, anchor: &'static str, measured: f64, lo: f64, hi: f64) -> Self {
        Self::new(name, anchor, measured, hi, (measured - lo).min(hi - measured))
            .with_note(format!("range [{}, {}]", fmt17(lo), fmt17(hi)))
    }

    /// Requires a strictly positive margin.
    fn strict(mut self) -> Self {
        self.pass = self.margin > 0.0;
        self
    }

    pub fn on_grid(mut self, k: usize) -> Self {
        self.k = Some(k);
        self.h = Some(1.0 / k as f64);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        self.note = Some(match self.note.take() {
            Some(old) => format!("{old}; {note}"),
            None => note,
        });
        self
    }

    fn failure(name: &str, message: String) -> Self {
        let mut r = Self::new(name, "suite-error", f64::NAN, f64::NAN, f64::NAN);
        r.pass = false;
        r.note = Some(message);
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Operators,
    Gamma,
    Interp,
    Tvflow,
    Acflow,
    Tdf,
    Cac,
    Poincare,
    All,
}

impl Suite {
    pub const ALL: [Suite; 8] =
        [Suite::Operators, Suite::Gamma, Suite::Interp, Suite::Tvflow, Suite::Acflow, Suite::Tdf, Suite::Cac, Suite::Poincare];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Operators => "operators",
            Suite::Gamma => "gamma",
            Suite::Interp => "interp",
            Suite::Tvflow => "tvflow",
            Suite::Acflow => "acflow",
            Suite::Tdf => "tdf",
            Suite::Cac => "cac",
            Suite::Poincare => "poincare",
            Suite::All => "all",
        }
    }

    fn groups(&self) -> Vec<(&'static str, Group)> {
        match self {
            Suite::Operators => vec![
                ("cell-identities", identity_checks as Group),
                ("embedded-tv", embedded_tv_checks),
                ("anisotropic-tv", anisotropic_tv_checks),
            ],
            Suite::Gamma => vec![("gamma", gamma_checks)],
            Suite::Interp => vec![("inner-products", inner_product_checks), ("projection", projection_checks)],
            Suite::Tvflow => vec![("tv-flow", tv_flow_checks), ("tv-refinement", tv_refinement_checks)],
            Suite::Acflow => vec![("ac-flow", ac_flow_checks)],
            Suite::Tdf => vec![("two-flows", tdf_checks)],
            Suite::Cac => vec![("continuum-convergence", cac_checks)],
            Suite::Poincare => vec![("poincare", poincare_checks)],
            Suite::All => Suite::ALL.iter().flat_map(|s| s.groups()).collect(),
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .iter()
            .chain(std::iter::once(&Suite::All))
            .find(|x| x.name() == s)
            .copied()
            .ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

type Group = fn(&ExperimentConfig) -> Result<Vec<CheckRecord>>;

/// Run parameters. Unset optional fields fall back to each suite's own defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: Suite,
    /// Replaces the grid list of every selected suite (the sizes `m` for poincare).
    pub grids: Option<Vec<usize>>,
    pub alpha: f64,
    pub lambda: f64,
    pub delta: f64,
    /// Horizon of the flow suites.
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    /// Fixed time step for the flow suites.
    pub tau: Option<f64>,
    pub eps_prox: f64,
    pub quadrature_order: usize,
    pub seed: u64,
    /// Random fields per grid in the identity pools.
    pub pool_size: usize,
    pub k_ref: usize,
    /// Required final error of the continuum convergence study.
    pub cac_threshold: f64,
    /// Output directory; not echoed in reports so they do not depend on where they are written.
    #[serde(skip_serializing)]
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            suite: Suite::All,
            grids: None,
            alpha: 1.0,
            lambda: 2.0,
            delta: 1.0,
            t_end: None,
            tau: None,
            eps_prox: 1e-10,
            quadrature_order: 8,
            seed: 42,
            pool_size: 100,
            k_ref: 1024,
            cac_threshold: 2e-3,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("delta", self.delta),
            ("eps_prox", self.eps_prox),
            ("cac_threshold", self.cac_threshold),
            ("T", self.t_end.unwrap_or(1.0)),
            ("tau", self.tau.unwrap_or(1.0)),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.lambda > self.alpha && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda {} must exceed alpha {}", self.lambda, self.alpha)));
        }
        if self.quadrature_order == 0 || self.pool_size < 2 {
            return Err(Error::InvalidParameter("quadrature_order must be positive and pool_size at least 2".into()));
        }
        if let Some(g) = &self.grids {
            if g.is_empty() || g[0] < 2 || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidParameter(format!("grid list {g:?} must be strictly ascending and >= 2")));
            }
        }
        Ok(())
    }

    fn grids_or(&self, default: &[usize]) -> Vec<usize> {
        self.grids.clone().unwrap_or_else(|| default.to_vec())
    }

    fn spec(&self) -> Result<PotentialSpec> {
        PotentialSpec::canonical(self.alpha, self.lambda)
    }

    /// Independent generator for the pool identified by `stream`.
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn pool(&self, tag: u64, grid: TorusGrid, count: usize) -> Vec<GridFunction> {
        let mut rng = self.rng(tag << 32 | (grid.dim() as u64) << 24 | grid.k() as u64);
        (0..count)
            .map(|_| GridFunction { grid, values: (0..grid.len()).map(|_| rng.gen_range(-3.0..3.0)).collect() })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Environment {
    pub crate_version: &'static str,
    pub os: &'static str,
    pub arch: &'static str,
}

impl Environment {
    fn current() -> Self {
        Environment {
            crate_version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suite: Suite,
    pub environment: Environment,
    pub config: ExperimentConfig,
    pub records: Vec<CheckRecord>,
    pub pass: bool,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,k,h,measured,bound,margin,pass\n");
        for r in &self.records {
            let k = r.k.map(|k| k.to_string()).unwrap_or_default();
            let h = r.h.map(fmt17).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                csv_field(&r.name),
                k,
                h,
                fmt17(r.measured),
                fmt17(r.bound),
                fmt17(r.margin),
                r.pass
            ));
        }
        s
    }

    /// Writes `<out>/<suite>.report.json` and `<out>/<suite>.csv`.
    pub fn write(&self, out: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(out)?;
        let json = out.join(format!("{}.report.json", self.suite));
        let csv = out.join(format!("{}.csv", self.suite));
        std::fs::write(&json, self.to_json())?;
        std::fs::write(&csv, self.to_csv())?;
        Ok((json, csv))
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.pass)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Runs every group of the configured suite.
pub fn run_suite(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let groups = config.suite.groups();
    let records: Vec<Vec<CheckRecord>> = groups.par_iter().map(|(name, group)| run_isolated(name, *group, config)).collect();
    let records: Vec<CheckRecord> = records.into_iter().flatten().collect();
    let pass = !records.is_empty() && records.iter().all(|r| r.pass);
    Ok(Report { suite: config.suite, environment: Environment::current(), config: config.clone(), records, pass })
}

/// Runs one group, turning errors and panics into a failing record.
pub fn run_isolated(name: &str, group: Group, config: &ExperimentConfig) -> Vec<CheckRecord> {
    match catch_unwind(AssertUnwindSafe(|| group(config))) {
        Ok(Ok(records)) => records,
        Ok(Err(e)) => vec![CheckRecord::failure(name, e.to_string())],
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            vec![CheckRecord::failure(name, format!("panicked: {msg}"))]
        }
    }
}

const OPERATOR_GRIDS: [usize; 3] = [2, 4, 8];
const IDENTITY_TOL: f64 = 1e-12;

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

/// `p_h ∘ i_h = id`, `i_h` isometry, Pythagoras for `p_h`, per-cell mass of `p_h`.
pub fn identity_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for n in 1..=3 {
        for k in cfg.grids_or(&OPERATOR_GRIDS) {
            let grid = TorusGrid::new(n, k)?;
            let pool = cfg.pool(1, grid, cfg.pool_size);
            let half = TorusGrid::new(n, 2 * k)?;
            let third = TorusGrid::new(n, 3 * k)?;
            let fine_a = cfg.pool(2, half, cfg.pool_size);
            let fine_b = cfg.pool(3, third, cfg.pool_size);
            let (mut roundtrip, mut iso, mut pyth, mut mass) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for (i, u) in pool.iter().enumerate() {
                let v = &pool[(i + 1) % pool.len()];
                let iu = embed_pc(u);
                roundtrip = roundtrip.max(project_pc_field(&iu, grid)?.sub(u)?.sup_norm());
                iso = iso.max((pc_inner(&iu, &embed_pc(v))? - inner_h(u, v)?).abs());
                let w = PiecewiseConstantField { grid: half, values: fine_a[i].values.clone() };
                let p = embed_pc(&project_pc_field(&w, grid)?);
                let iv = embed_pc(v);
                let lhs = pc_distance_sq(&w, &iv)?;
                let rhs = pc_distance_sq(&w, &p)? + pc_distance_sq(&p, &iv)?;
                pyth = pyth.max((lhs - rhs).abs());
                mass = mass.max(cell_mass_defect(&fine_b[i], grid)?);
            }
            let name = |s: &str| format!("{s} n={n}");
            out.push(CheckRecord::at_most(name("pc-roundtrip"), "pc-roundtrip", roundtrip, IDENTITY_TOL).on_grid(k));
            out.push(CheckRecord::at_most(name("pc-isometry"), "pc-isometry", iso, IDENTITY_TOL).on_grid(k));
            out.push(CheckRecord::at_most(name("pc-pythagoras"), "pc-pythagoras", pyth, IDENTITY_TOL).on_grid(k));
            out.push(CheckRecord::at_most(name("pc-cell-mass"), "pc-cell-mass", mass, IDENTITY_TOL).on_grid(k));
        }
    }
    Ok(out)
}

/// Largest `|h^n (p_h w)_z - ∫_{Q_z} w|` for `w` constant on the cells of a finer nested grid,
/// with the cell integrals summed by locating each fine cell centre.
fn cell_mass_defect(fine: &GridFunction, grid: TorusGrid) -> Result<f64> {
    let w = embed_pc(fine);
    let p = project_pc_field(&w, grid)?;
    let mut mass = vec![0.0; grid.len()];
    let cell = fine.grid.cell_measure();
    for (f, v) in fine.values.iter().enumerate() {
        let z = grid.linear(&grid.cell_of(&fine.grid.position(f))?);
        mass[z] += v * cell;
    }
    Ok(max_of(p.values.iter().zip(&mass).map(|(pv, m)| (pv * grid.cell_measure() - m).abs())))
}

/// Jump-sum total variation of `i_h u` against the edge sum.
pub fn embedded_tv_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for n in 1..=3 {
        for k in cfg.grids_or(&OPERATOR_GRIDS) {
            let grid = TorusGrid::new(n, k)?;
            let dev = max_of(cfg.pool(1, grid, cfg.pool_size).iter().map(|u| (continuum_tv_pc(&embed_pc(u)) - tv_h(u)).abs()));
            out.push(
                CheckRecord::at_most(format!("embedded-tv n={n}"), "embedded-tv-identity", dev, IDENTITY_TOL).on_grid(k),
            );
        }
    }
    Ok(out)
}

type Field = fn(&[f64]) -> f64;

fn s2(x: f64) -> f64 {
    (2.0 * PI * x).sin()
}

fn c2(x: f64) -> f64 {
    (2.0 * PI * x).cos()
}

/// Fields with closed-form anisotropic total variation `∫ Σ_i |∂_i w|`.
pub fn anisotropic_tv_fields() -> Vec<(&'static str, usize, Field, f64)> {
    vec![
        ("sin", 1, (|x: &[f64]| s2(x[0])) as Field, 4.0),
        ("half-cos-double", 1, |x| 1.0 + 0.5 * c2(2.0 * x[0]), 4.0),
        ("steep-step", 1, |x| (20.0 * s2(x[0])).tanh(), 4.0 * 20f64.tanh()),
        ("double-step", 1, |x| (8.0 * c2(2.0 * x[0])).tanh(), 8.0 * 8f64.tanh()),
        ("sin-product", 2, |x| s2(x[0]) * s2(x[1]), 16.0 / PI),
        ("sin-sum", 2, |x| s2(x[0]) + s2(x[1]), 8.0),
        ("cos-product", 2, |x| c2(x[0]) * c2(2.0 * x[1]), 24.0 / PI),
        ("stripe-step", 2, |x| (10.0 * s2(x[0])).tanh(), 4.0 * 10f64.tanh()),
        ("trig-sum", 3, |x| s2(x[0]) + c2(x[1]) + s2(x[2]), 12.0),
        ("sin-triple", 3, |x| s2(x[0]) * s2(x[1]) * s2(x[2]), 48.0 / (PI * PI)),
    ]
}

/// `φ_TV^h(p_h w) <= TV(w)` on the fixed field set.
pub fn anisotropic_tv_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for (name, n, w, tv) in anisotropic_tv_fields() {
        for k in cfg.grids_or(&[4, 8, 16]) {
            let p = project_pc(w, TorusGrid::new(n, k)?, cfg.quadrature_order)?;
            out.push(
                CheckRecord::at_most(format!("anisotropic-tv {name}"), "anisotropic-tv-bound", tv_h(&p), tv + 1e-8)
                    .on_grid(k),
            );
        }
    }
    Ok(out)
}

const LINE_GRIDS: [usize; 6] = [2, 3, 4, 8, 16, 32];

/// Sandwich and gap identities between `<.,.>_h`, `(.,.)_h` and the embeddings.
pub fn inner_product_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for k in cfg.grids_or(&LINE_GRIDS) {
        let grid = TorusGrid::new(1, k)?;
        let h = grid.h();
        let (mut sandwich, mut gap, mut quartic, mut pcgap) = (f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for u in cfg.pool(4, grid, cfg.pool_size) {
            let n = inner_h(&u, &u)?;
            let q = induced_inner(&u, &u)?;
            let f = lin_embed(&u)?;
            sandwich = sandwich.max(n / 3.0 - q).max(q - n);
            let d = graph_gradient(&u);
            gap = gap.max((n - f.l2_norm_sq() - h * h / 6.0 * edge_inner(&d, &d)?).abs());
            let discrete = u.values.iter().map(|v| v.powi(4)).sum::<f64>() * h;
            let cont = f.lm_norm_pow(4)?;
            quartic = quartic.max((cont - discrete) / discrete).max((discrete / 5.0 - cont) / discrete);
            pcgap = pcgap.max(f.distance_to_pc_sq(&u)? - h * h * dirichlet_h(&u));
        }
        out.push(CheckRecord::at_most("induced-norm-sandwich", "induced-norm-sandwich", sandwich, 1e-13).on_grid(k));
        out.push(CheckRecord::at_most("induced-norm-gap", "induced-norm-gap", gap, 1e-13).on_grid(k));
        out.push(
            CheckRecord::at_most("quartic-sandwich", "quartic-sandwich", quartic, 1e-13)
                .on_grid(k)
                .with_note("relative violation"),
        );
        out.push(CheckRecord::at_most("pl-pc-gap", "pl-pc-gap", pcgap, 1e-13).on_grid(k));
    }
    Ok(out)
}

/// Trigonometric test set for the interpolation and projection estimates.
pub fn trig_test_set() -> Vec<(&'static str, TrigPoly)> {
    vec![
        ("sin", TrigPoly::new(0.0, vec![], vec![1.0])),
        ("cos-3", TrigPoly::new(0.5, vec![0.0, 0.0, 1.0], vec![])),
        ("mixed", TrigPoly::new(-0.2, vec![0.7, 0.3], vec![0.4, -0.6])),
        ("high", TrigPoly::new(0.0, vec![0.0, 0.0, 0.0, 0.0, 0.5], vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.25])),
    ]
}

/// Interpolation/projection estimates and convergence of `I_h P_h w`.
pub fn projection_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for (name, w) in trig_test_set() {
        for k in cfg.grids_or(&[8, 16, 32]) {
            for chk in verify_interp_estimates(&w, TorusGrid::new(1, k)?)? {
                let anchor =
                    if chk.name == "projection-derivative-stability" { "projection-stability" } else { "interpolation-estimate" };
                out.push(CheckRecord::at_most(format!("{} {name}", chk.name), anchor, chk.lhs, chk.rhs).strict().on_grid(k));
            }
        }
        let grids = cfg.grids_or(&[4, 8, 16, 32, 64]);
        let errs: Vec<f64> = grids.iter().map(|&k| projection_error(&w, TorusGrid::new(1, k)?)).collect::<Result<_>>()?;
        for (i, (&k, &e)) in grids.iter().zip(&errs).enumerate() {
            let bound = if i == 0 { e } else { errs[i - 1] };
            let mut r = CheckRecord::at_most(format!("projection-error {name}"), "projection-convergence", e, bound).on_grid(k);
            if i > 0 {
                r = r.strict();
            }
            out.push(r);
        }
        if let (Some(first), Some(last)) = (errs.first(), errs.last()) {
            out.push(
                CheckRecord::at_most(format!("projection-error-reduction {name}"), "projection-convergence", *last, first / 8.0)
                    .on_grid(*grids.last().expect("nonempty")),
            );
        }
    }
    Ok(out)
}

/// Spectrum, quadratic-form identity, coercivity, shift identity and both exponentials of Γ.
pub fn gamma_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for k in cfg.grids_or(&[2, 3, 4, 5, 8, 16, 32, 64]) {
        let grid = TorusGrid::new(1, k)?;
        let op = GammaOperator::new(grid)?;
        let mut dense: Vec<f64> = SymmetricEigen::new(gamma_dense(k)).eigenvalues.iter().copied().collect();
        let mut closed = op.spectrum();
        dense.sort_by(f64::total_cmp);
        closed.sort_by(f64::total_cmp);
        let dev = max_of(dense.iter().zip(&closed).map(|(a, b)| (a - b).abs()));
        out.push(CheckRecord::at_most("gamma-spectrum", "gamma-spectrum", dev, 1e-12).on_grid(k));

        let h = grid.h();
        let (mut form, mut coercive, mut shift) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
        for u in cfg.pool(5, grid, cfg.pool_size) {
            let gu = op.apply(&u)?;
            let q = inner_h(&gu, &u)?;
            let n = inner_h(&u, &u)?;
            let signless: f64 = (0..k).map(|j| (u.values[j] + u.values[(j + 1) % k]).powi(2)).sum::<f64>() * h / 6.0;
            form = form.max((q - n / 3.0 - signless).abs());
            let du = graph_gradient(&u);
            let dd = edge_inner(&du, &du)?;
            coercive = coercive.max(dd / 3.0 - edge_inner(&du, &graph_gradient(&gu))?);
            for step in [1, k - 1] {
                let shifted = GridFunction { grid, values: (0..k).map(|j| u.values[(j + step) % k]).collect() };
                let d = u.sub(&shifted)?;
                shift = shift.max((inner_h(&d, &d)? - h * h * dd).abs());
            }
        }
        out.push(CheckRecord::at_most("gamma-quadratic-form", "gamma-quadratic-form", form, 1e-12).on_grid(k));
        out.push(CheckRecord::at_most("gamma-gradient-coercivity", "gamma-gradient-coercivity", coercive, 1e-12).on_grid(k));
        out.push(CheckRecord::at_most("shift-gradient-identity", "shift-gradient-identity", shift, 1e-12).on_grid(k));
    }
    let mut rng = cfg.rng(6);
    for k in 2..=16 {
        let mut dev = 0.0f64;
        for i in 0..=16 {
            let x = -2.0 + 0.25 * i as f64;
            dev = dev.max((gamma_exp(x, k)? - gamma_exp_series(x, k)?).amax());
        }
        out.push(CheckRecord::at_most("gamma-exp-agreement", "gamma-exp-agreement", dev, 1e-10).on_grid(k));
        let mut semi = 0.0f64;
        for _ in 0..8 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let y: f64 = rng.gen_range(-1.0..1.0);
            semi = semi.max((gamma_exp(x + y, k)? - gamma_exp(x, k)? * gamma_exp(y, k)?).amax());
        }
        out.push(CheckRecord::at_most("gamma-exp-semigroup", "gamma-exp-semigroup", semi, 1e-9).on_grid(k));
    }
    Ok(out)
}

/// Random profile with 2 to 5 plateaus whose lengths are whole cells.
fn random_plateau_data(rng: &mut ChaCha8Rng, k: usize) -> GridFunction {
    let q = rng.gen_range(2..=5usize).min(k);
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() < q - 1 {
        let c = rng.gen_range(1..k);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let mut heights: Vec<f64> = Vec::new();
    while heights.len() < q {
        let v = (rng.gen_range(0.0..1.0f64) * 64.0).round() / 64.0;
        if heights.last() != Some(&v) && !(heights.len() == q - 1 && heights.first() == Some(&v)) {
            heights.push(v);
        }
    }
    let mut values = vec![0.0; k];
    for (j, v) in values.iter_mut().enumerate() {
        *v = heights[cuts.iter().filter(|&&c| c <= j).count()];
    }
    let grid = TorusGrid::new(1, k).expect("k >= 2");
    GridFunction { grid, values }
}

/// Plateau oracle, contraction, energy identity and discrete EVI of the minimizing movement.
pub fn tv_flow_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    let t_end = cfg.t_end.unwrap_or(0.02);
    let eps = cfg.eps_prox;
    let mut rng = cfg.rng(7);
    for k in cfg.grids_or(&[16, 32]) {
        let h = 1.0 / k as f64;
        let tau = cfg.tau.unwrap_or(h * h / 4.0);
        let slack = 10.0 * (tau + eps / tau) * (1.0 + t_end);
        let mut runs = Vec::new();
        for case in 0..3 {
            let u0 = random_plateau_data(&mut rng, k);
            let traj = tv_flow_mm(&u0, t_end, tau, eps)?;
            let ev = plateau_oracle_1d(&PlateauProfile::from_grid_function(&u0)?, t_end);
            out.push(
                CheckRecord::at_most(format!("plateau-oracle case {case}"), "plateau-oracle", oracle_error(&traj, &ev), slack)
                    .on_grid(k)
                    .with_note(format!("{} plateaus", PlateauProfile::from_grid_function(&u0)?.plateaus.len())),
            );
            let tv2 = tv2_energy_check(&traj);
            out.push(
                CheckRecord::at_most(format!("tv-energy-identity case {case}"), "tv-energy-identity", tv2.mismatch, tv2.bound)
                    .on_grid(k)
                    .with_note(format!("C = {}", fmt17(tv2.constant))),
            );
            runs.push((u0, traj));
        }
        for i in 0..runs.len() {
            let j = (i + 1) % runs.len();
            let excess = contraction_excess(&runs[i].1, &runs[j].1)?;
            out.push(CheckRecord::at_most(format!("tv-contraction pair {i}-{j}"), "tv-contraction", excess, 0.0).on_grid(k));
        }
        let mut probes: Vec<GridFunction> = runs.iter().map(|r| r.0.clone()).collect();
        probes.extend(cfg.pool(8, TorusGrid::new(1, k)?, 4));
        let evi = max_of(runs.iter().map(|r| evi_excess(&r.1, &probes)));
        out.push(CheckRecord::at_most("tv-evi", "tv-evi", evi, eps / tau).on_grid(k));
    }
    Ok(out)
}

/// Refinement of two-plateau data: growth of the discrepancy for a non-nested refinement
/// and the discrepancy itself for a nested one.
pub fn tv_refinement_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let tau = cfg.tau.unwrap_or(1e-4);
    let t_end = cfg.t_end.unwrap_or(0.05);
    let eps = cfg.eps_prox;
    let slack = 5.0 * (tau + eps / tau);
    let grid = TorusGrid::new(1, 8)?;
    let f = embed_pc(&GridFunction { grid, values: vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0] });
    let mut out = Vec::new();
    let doubled = tv1_refinement_check(&f, &[8, 16], t_end, tau, eps)?;
    let e = &doubled.entries[1];
    out.push(
        CheckRecord::at_most("tv-refinement growth 8->16", "tv-refinement", e.excess, slack)
            .on_grid(16)
            .with_note(format!("initial {} sup {}", fmt17(e.initial), fmt17(e.sup))),
    );
    let tripled = tv1_refinement_check(&f, &[8, 24], t_end, tau, eps)?;
    let e = &tripled.entries[1];
    out.push(
        CheckRecord::at_most("tv-refinement 8->24", "tv-refinement", e.sup, slack)
            .on_grid(24)
            .with_note(format!("initial {}", fmt17(e.initial))),
    );
    Ok(out)
}

fn sine(x: f64) -> f64 {
    (2.0 * PI * x).sin()
}

/// Comparison principle, smoothing estimate, energy, EVI, contraction and vector field of
/// the Allen–Cahn scheme from sine data.
pub fn ac_flow_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let spec = cfg.spec()?;
    let k = cfg.grids.as_ref().and_then(|g| g.first().copied()).unwrap_or(64);
    let tau = cfg.tau.unwrap_or(1e-4);
    let t_end = cfg.t_end.unwrap_or(1.0);
    let grid = TorusGrid::new(1, k)?;
    let u0 = GridFunction::from_fn(grid, |x| sine(x[0]));
    let mut out = Vec::new();

    let traj = ac_run(&u0, &spec, t_end, tau, Metric::Standard, Sampling::Dense)?;
    let step = traj.meta.tau;
    let cp = cp_check(&traj, &spec);
    out.push(CheckRecord::at_most("ac-growth", "ac-growth", cp.growth_excess, cp.slack).on_grid(k));
    out.push(CheckRecord::at_least("ac-minimum-principle", "ac-minimum-principle", cp.supersolution_min, -cp.slack).on_grid(k));
    let gamma_run = ac_run(&u0, &spec, t_end, tau, Metric::Gamma, Sampling::Uniform)?;
    let cp = cp_check(&gamma_run, &spec);
    out.push(CheckRecord::at_most("ac-growth gamma-metric", "ac-growth", cp.growth_excess, cp.slack).on_grid(k));

    let sac = sac_check(&traj, &spec)?;
    out.push(
        CheckRecord::at_most("ac-smoothing", "ac-smoothing", sac.worst_excess, sac.slack)
            .on_grid(k)
            .with_note(format!("bound {}", fmt17(sac.bound))),
    );
    let slack = scheme_slack(step, t_end);
    out.push(CheckRecord::at_most("ac-energy", "ac-energy", ac_energy_increase(&traj, spec.alpha)?, slack).on_grid(k));
    out.push(
        CheckRecord::at_most("ac-energy gamma-metric", "ac-energy", ac_energy_increase(&gamma_run, spec.alpha)?, slack).on_grid(k),
    );

    let mut probes = vec![GridFunction::constant(grid, 1.0), GridFunction::constant(grid, -1.0)];
    probes.extend(cfg.pool(9, grid, 4).into_iter().map(|p| p.map(|v| v / 3.0)));
    out.push(CheckRecord::at_most("ac-evi", "ac-evi", ac_evi_excess(&traj, &spec, &probes)?, slack).on_grid(k));

    let mut rng = cfg.rng(10);
    let (a1, a2, a3): (f64, f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let v0 = GridFunction::from_fn(grid, |x| a1 * (2.0 * PI * x[0]).cos() + a2 * (4.0 * PI * x[0]).sin() + a3 * 0.5);
    let other = ac_run(&v0, &spec, t_end, tau, Metric::Standard, Sampling::Dense)?;
    out.push(
        CheckRecord::at_most("ac-contraction", "ac-contraction", ac_contraction_excess(&traj, &other, spec.alpha)?, 10.0 * step * t_end)
            .on_grid(k),
    );

    let probe = u0.map(|v| 0.7 * v);
    for metric in [Metric::Standard, Metric::Gamma] {
        let a = vector_field_defect(&probe, &spec, 1e-4, metric)?;
        let b = vector_field_defect(&probe, &spec, 5e-5, metric)?;
        let label = match metric {
            Metric::Standard => "standard",
            Metric::Gamma => "gamma",
        };
        out.push(CheckRecord::within(format!("ac-vector-field {label}"), "ac-vector-field", a / b, 1.8, 2.2).on_grid(k));
    }
    Ok(out)
}

/// Two-flow bound with its constants and the observed order in `h`.
pub fn tdf_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let spec = cfg.spec()?;
    let grids = cfg.grids_or(&[32, 64, 128, 256]);
    let rule = cfg.tau.map(TauRule::Fixed).unwrap_or(TauRule::MeshSquared);
    let rep = tdf_check(sine, &spec, cfg.t_end.unwrap_or(1.0), cfg.delta, &grids, rule)?;
    let mut out: Vec<CheckRecord> = rep
        .entries
        .iter()
        .map(|e| {
            CheckRecord::at_most("two-flow-bound", "two-flow-bound", e.worst_excess, e.slack)
                .on_grid(e.k)
                .with_note(format!("sup error {} worst at t = {}", fmt17(e.sup_error), fmt17(e.worst_time)))
        })
        .collect();
    let mut order = CheckRecord::at_least("two-flow-order", "two-flow-order", rep.empirical_order, 0.9).with_note(format!(
        "N = {} C_N = {} C_* = {}",
        fmt17(rep.growth.value),
        fmt17(rep.c_n),
        fmt17(rep.c_star)
    ));
    if let Some(w) = &rep.growth.warning {
        order = order.with_note(w.clone());
    }
    out.push(order);
    Ok(out)
}

fn half_sine(x: f64) -> f64 {
    0.5 * sine(x)
}

/// Mesh-refinement study of the standard flow against the fine reference.
pub fn cac_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let grids = cfg.grids_or(&[16, 32, 64, 128]);
    let t_end = cfg.t_end.unwrap_or(0.5);
    let config = ReferenceConfig {
        k_ref: cfg.k_ref,
        tau_ref: None,
        rule: cfg.tau.map(TauRule::Fixed).unwrap_or(TauRule::Default),
        threshold: cfg.cac_threshold,
        monotone_slack: 0.05,
    };
    let rep = cac_convergence(half_sine, cfg.alpha, t_end, &grids, &config)?;
    let mut out = Vec::new();
    for (i, e) in rep.entries.iter().enumerate() {
        let bound = if i == 0 { e.sup_error } else { rep.entries[i - 1].sup_error * (1.0 + config.monotone_slack) };
        out.push(CheckRecord::at_most("continuum-error", "continuum-convergence", e.sup_error, bound).on_grid(e.k));
        out.push(
            CheckRecord::at_most("metric-interchange", "metric-interchange", (e.sup_error - e.sup_error_pc).abs(), e.interchange_bound)
                .on_grid(e.k),
        );
        let rough = if i == 0 { e.initial_roughness } else { rep.entries[i - 1].initial_roughness };
        let mut r = CheckRecord::at_most("initial-roughness", "initial-roughness", e.initial_roughness, rough).on_grid(e.k);
        if i > 0 {
            r = r.strict();
        }
        out.push(r);
    }
    let last = rep.entries.last().expect("grids nonempty");
    out.push(CheckRecord::at_most("continuum-error-final", "continuum-convergence", last.sup_error, cfg.cac_threshold).on_grid(last.k));
    out.push(CheckRecord::within("continuum-order", "continuum-convergence", rep.empirical_order, 0.8, 2.2));
    let drift = reference_consistency(half_sine, cfg.alpha, t_end, cfg.k_ref, rep.tau_ref)?;
    out.push(
        CheckRecord::at_most("reference-consistency", "reference-consistency", drift, 0.1 * rep.entries[0].sup_error)
            .on_grid(2 * cfg.k_ref),
    );
    Ok(out)
}

/// Smallest eigenvalues of the Dirichlet second difference and its square.
pub fn poincare_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for m in cfg.grids_or(&[200]) {
        for (order, tol, anchor) in [(2u32, 1e-3, "poincare-second-order"), (4, 5e-3, "poincare-fourth-order")] {
            let rep = poincare_check(order, m)?;
            let label = if order == 2 { "pi^2" } else { "pi^4" };
            out.push(
                CheckRecord::at_most(format!("poincare {label} relative error"), anchor, rep.relative_error, tol)
                    .on_grid(m)
                    .with_note(format!("eigenvalue {}", fmt17(rep.eigenvalue))),
            );
            out.push(CheckRecord::within(format!("poincare {label} richardson"), anchor, rep.richardson_ratio, 3.5, 4.5).on_grid(m));
        }
    }
    Ok(out)
}
