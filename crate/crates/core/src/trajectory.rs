//! Time-sampled states of a flow together with the scheme that produced them.

use serde::{Deserialize, Serialize};

use crate::calculus::{fmt17, GridFunction};
use crate::grid::TorusGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeMeta {
    pub scheme: String,
    /// Step actually used, `T / steps`.
    pub tau: f64,
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_prox: Option<f64>,
    /// Certified duality gap of each prox step (minimizing-movement runs only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub step_gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TorusGrid,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub meta: SchemeMeta,
}

#[derive(Serialize)]
struct TrajectoryJson<'a> {
    n: usize,
    k: usize,
    meta: &'a SchemeMeta,
    times: &'a [f64],
    states: &'a [Vec<f64>],
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> GridFunction {
        GridFunction { grid: self.grid, values: self.states[i].clone() }
    }

    pub fn last(&self) -> GridFunction {
        self.state(self.len() - 1)
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for i in 0..self.grid.len() {
            s.push_str(&format!(",u{i}"));
        }
        s.push('\n');
        for (t, row) in self.times.iter().zip(&self.states) {
            s.push_str(&fmt17(*t));
            for v in row {
                s.push(',');
                s.push_str(&fmt17(*v));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TrajectoryJson {
            n: self.grid.dim(),
            k: self.grid.k(),
            meta: &self.meta,
            times: &self.times,
            states: &self.states,
        })
        .expect("finite values serialize")
    }
}

/// Number of uniform steps covering `[0, t_end]` with step at most `tau`, rounded up to a multiple of `multiple`.
pub fn step_count(t_end: f64, tau: f64, multiple: usize) -> usize {
    let raw = (t_end / tau - 1e-9).ceil().max(1.0) as usize;
    raw.div_ceil(multiple) * multiple
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_counts() {
        assert_eq!(step_count(1.0, 0.25, 1), 4);
        assert_eq!(step_count(1.0, 0.3, 1), 4);
        assert_eq!(step_count(1.0, 0.01, 64), 128);
        assert_eq!(step_count(0.05, 1e-4, 1), 500);
    }

    #[test]
    fn csv_layout() {
        let grid = TorusGrid::new(1, 2).unwrap();
        let t = Trajectory {
            grid,
            times: vec![0.0, 0.5],
            states: vec![vec![1.0, 0.0], vec![0.75, 0.25]],
            meta: SchemeMeta { scheme: "x".into(), tau: 0.5, steps: 1, eps_prox: None, step_gaps: vec![] },
        };
        assert_eq!(t.to_csv(), "t,u0,u1\n0.0,1.0,0.0\n0.5,0.75,0.25\n");
        let j: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(j["meta"]["tau"], 0.5);
        assert_eq!(j["states"][1][1], 0.25);
    }
}
