//! Equilibrium solvers for the stacked two-stage LCP.
//!
//! Both algorithms decompose by scenario. [`solve_aba`] alternates between
//! `ν` box QPs in `J` variables and one `J`-dimensional LCP; [`solve_pha`]
//! runs progressive hedging on `ν` regularized `3J`-dimensional LCPs.
//!
//! Termination follows three rules checked after every sweep: residual at
//! most `tol_residual`, step `‖v_k - v_{k-1}‖` at most `tol_step`, or
//! `max_iter` sweeps. A run counts as converged when it stops on the
//! residual rule, or on the step rule with residual at most
//! `10 * tol_residual`. Hitting the cap returns the best iterate with
//! `converged = false`.

mod aba;
mod diagnostics;
mod pha;

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{stacked_residual, StackedPoint, TwoStageGame};

pub use aba::solve_aba;
pub use diagnostics::{contraction_diagnostic, ContractionReport};
pub use pha::solve_pha;

/// A step-rule stop counts as converged up to this multiple of
/// `tol_residual`.
pub const STEP_STOP_SLACK: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub tol_residual: f64,
    pub tol_step: f64,
    /// Proximal step `t` of progressive hedging.
    pub pha_step_t: f64,
    /// Tolerance of the per-scenario and first-stage inner solves.
    pub inner_tol: f64,
    /// Replaces the default starting production when set.
    pub x0: Option<Vec<f64>>,
    /// Record `x` after every sweep in [`EquilibriumSolution::x_history`].
    pub keep_history: bool,
    /// Attach a [`ContractionReport`] to ABA results.
    pub contraction_report: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 400,
            tol_residual: 1e-6,
            tol_step: 1e-6,
            pha_step_t: 1.0,
            inner_tol: 1e-12,
            x0: None,
            keep_history: false,
            contraction_report: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        for (name, v) in [
            ("tol_residual", self.tol_residual),
            ("tol_step", self.tol_step),
            ("pha_step_t", self.pha_step_t),
            ("inner_tol", self.inner_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Aba,
    Pha,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Aba => "aba",
            Algorithm::Pha => "pha",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Residual,
    Step,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub residual: f64,
    pub step_norm: f64,
    pub elapsed_seconds: f64,
    /// PHA only: `max_i |(1/ν) Σ_ℓ w_ℓ,i|` after the update.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub multiplier_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub algorithm: Algorithm,
    pub x: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    /// Natural residual on the stacked LCP at `(x, y, s)`.
    pub residual: f64,
    /// Residual at `(x0, 0, ..., 0)`.
    pub initial_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub trace: Vec<TraceEntry>,
    /// PHA only: largest multiplier mean seen over the run.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_multiplier_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub contraction: Option<ContractionReport>,
    #[serde(skip)]
    pub x_history: Vec<Vec<f64>>,
}

impl EquilibriumSolution {
    pub fn point(&self) -> StackedPoint {
        StackedPoint {
            x: self.x.clone(),
            y: self.y.clone(),
            s: self.s.clone(),
        }
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trace_csv(&self.trace, out)
    }
}

/// `iteration,residual,step_norm,elapsed_seconds`
pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "residual", "step_norm", "elapsed_seconds"])?;
    for t in trace {
        w.write_record(&[
            t.iteration.to_string(),
            t.residual.to_string(),
            t.step_norm.to_string(),
            t.elapsed_seconds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `max(0, -(C + re')⁻¹ a)`.
pub fn default_initial_point(g: &TwoStageGame) -> Result<Vec<f64>> {
    let fs = g.first_stage();
    let m: DMatrix<f64> = fs.first_stage_matrix();
    let a = DVector::from_column_slice(fs.a());
    let lu = m.lu();
    let sol = lu
        .solve(&a)
        .ok_or_else(|| Error::Singular("C + re' is singular".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("C + re' is numerically singular".into()));
    }
    Ok(sol.iter().map(|v| (-v).max(0.0)).collect())
}

fn starting_point(g: &TwoStageGame, cfg: &SolverConfig) -> Result<Vec<f64>> {
    match &cfg.x0 {
        Some(x0) => {
            if x0.len() != g.agents() {
                return Err(Error::dim("x0", g.agents(), x0.len()));
            }
            if x0.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::invalid("x0 must be finite and nonnegative"));
            }
            Ok(x0.clone())
        }
        None => default_initial_point(g),
    }
}

fn point_distance(a: &StackedPoint, b: &StackedPoint) -> f64 {
    let sq = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
    let mut total = sq(&a.x, &b.x);
    for l in 0..a.y.len() {
        total += sq(&a.y[l], &b.y[l]) + sq(&a.s[l], &b.s[l]);
    }
    total.sqrt()
}

/// Shared bookkeeping: trace, stopping rules and the best iterate.
struct Tracker {
    algorithm: Algorithm,
    started: Instant,
    prev: StackedPoint,
    best: Option<(f64, StackedPoint)>,
    trace: Vec<TraceEntry>,
    history: Vec<Vec<f64>>,
    keep_history: bool,
    initial_residual: f64,
    max_multiplier_mean: Option<f64>,
}

impl Tracker {
    fn new(g: &TwoStageGame, algorithm: Algorithm, x0: &[f64], cfg: &SolverConfig) -> Result<Self> {
        let prev = StackedPoint::first_stage_only(x0.to_vec(), g.num_scenarios());
        let initial_residual = stacked_residual(g, &prev)?;
        Ok(Self {
            algorithm,
            started: Instant::now(),
            prev,
            best: None,
            trace: Vec::new(),
            history: Vec::new(),
            keep_history: cfg.keep_history,
            initial_residual,
            max_multiplier_mean: None,
        })
    }

    /// Records sweep `k` at `point`; returns the termination reason if any
    /// rule fires.
    fn record(
        &mut self,
        g: &TwoStageGame,
        k: usize,
        point: StackedPoint,
        multiplier_mean: Option<f64>,
        cfg: &SolverConfig,
    ) -> Result<Option<Termination>> {
        let residual = stacked_residual(g, &point)?;
        let step_norm = point_distance(&point, &self.prev);
        if let Some(m) = multiplier_mean {
            self.max_multiplier_mean = Some(self.max_multiplier_mean.unwrap_or(0.0).max(m));
        }
        self.trace.push(TraceEntry {
            iteration: k,
            residual,
            step_norm,
            elapsed_seconds: self.started.elapsed().as_secs_f64(),
            multiplier_mean,
        });
        if self.keep_history {
            self.history.push(point.x.clone());
        }
        if !residual.is_finite() {
            return Err(Error::invalid(format!(
                "{} produced a non-finite residual",
                self.algorithm
            )));
        }
        let done = if residual <= cfg.tol_residual {
            Some(Termination::Residual)
        } else if step_norm <= cfg.tol_step {
            Some(Termination::Step)
        } else if k >= cfg.max_iter {
            Some(Termination::MaxIter)
        } else {
            None
        };
        // A residual or step stop returns its own point; at the cap, the best one.
        let stopped = done.is_some_and(|d| d != Termination::MaxIter);
        if stopped || self.best.as_ref().is_none_or(|(r, _)| residual < *r) {
            self.best = Some((residual, point.clone()));
        }
        self.prev = point;
        Ok(done)
    }

    fn finish(self, termination: Termination, cfg: &SolverConfig) -> EquilibriumSolution {
        let (residual, point) = self.best.expect("at least one sweep recorded");
        EquilibriumSolution {
            algorithm: self.algorithm,
            x: point.x,
            y: point.y,
            s: point.s,
            residual,
            initial_residual: self.initial_residual,
            iterations: self.trace.len(),
            converged: match termination {
                Termination::Residual => true,
                Termination::Step => residual <= STEP_STOP_SLACK * cfg.tol_residual,
                Termination::MaxIter => false,
            },
            termination,
            trace: self.trace,
            max_multiplier_mean: self.max_multiplier_mean,
            contraction: None,
            x_history: self.history,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{FirstStageParams, ScenarioData};

    fn game(c: f64, a: f64) -> TwoStageGame {
        TwoStageGame::new(
            FirstStageParams::new(vec![c], vec![a], vec![0.0]).unwrap(),
            vec![ScenarioData::new(vec![1.0], 1.0, vec![1.0]).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn initial_point_scalar() {
        assert_eq!(default_initial_point(&game(1.0, -2.0)).unwrap(), vec![2.0]);
        assert_eq!(default_initial_point(&game(3.0, 0.5)).unwrap(), vec![0.0]);
    }

    #[test]
    fn initial_point_singular() {
        let g = TwoStageGame::new(
            FirstStageParams::new(vec![1.5, 1.5], vec![0.0, 0.0], vec![-0.5, -0.5]).unwrap(),
            vec![ScenarioData::new(vec![1.0; 2], 1.0, vec![1.0; 2]).unwrap()],
        )
        .unwrap();
        assert!(matches!(default_initial_point(&g), Err(Error::Singular(_))));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            tol_step: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            max_iter: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trace_csv_header() {
        let trace = vec![TraceEntry {
            iteration: 1,
            residual: 0.5,
            step_norm: 1.0,
            elapsed_seconds: 0.0,
            multiplier_mean: None,
        }];
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "iteration,residual,step_norm,elapsed_seconds\n1,0.5,1,0\n"
        );
    }
}
