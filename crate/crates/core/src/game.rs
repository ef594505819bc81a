//! The two-stage stochastic quadratic game and its LCP blocks.
//!
//! Agent `i` chooses production `x_i >= 0` before the scenario is revealed and
//! supply `0 <= y_i <= x_i` after. With quadratic costs and an affine inverse
//! demand the KKT system is the LCP
//!
//! ```text
//! 0 <= x  ⊥ (C + r e')x - E[s] + a          >= 0
//! 0 <= y  ⊥ (H + γ e e')y + s + ρ            >= 0
//! 0 <= s  ⊥ x - y                            >= 0
//! ```
//!
//! with `C = diag(c + r)` and `H = diag(h + γ)`, one `(y, s)` pair per
//! scenario.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lcp::{natural_residual, LcpProblem};

/// Dense assembly of the stacked problem is refused above this dimension.
pub const MAX_DENSE_DIM: usize = 4096;

/// First-stage production cost `θ_i(x) = ½c_i x_i² + a_i x_i + r_i x_i Σ_j x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstStageParams {
    c: Vec<f64>,
    a: Vec<f64>,
    r: Vec<f64>,
}

impl FirstStageParams {
    pub fn new(c: Vec<f64>, a: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        let j = c.len();
        if j == 0 {
            return Err(Error::invalid("at least one agent is required"));
        }
        if a.len() != j {
            return Err(Error::dim("first-stage a", j, a.len()));
        }
        if r.len() != j {
            return Err(Error::dim("first-stage r", j, r.len()));
        }
        if c.iter().chain(&a).chain(&r).any(|x| !x.is_finite()) {
            return Err(Error::invalid("first-stage parameters must be finite"));
        }
        if let Some(i) = c.iter().position(|&ci| !(ci > 0.0)) {
            return Err(Error::invalid(format!("c[{i}] must be positive")));
        }
        Ok(Self { c, a, r })
    }

    pub fn agents(&self) -> usize {
        self.c.len()
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    /// `C + r e'` with `C = diag(c_i + r_i)`.
    pub fn first_stage_matrix(&self) -> DMatrix<f64> {
        let j = self.agents();
        DMatrix::from_fn(j, j, |row, col| {
            let diag = if row == col {
                self.c[row] + self.r[row]
            } else {
                0.0
            };
            diag + self.r[row]
        })
    }

    /// `C + ½(r e' + e r')`, the symmetric part of the first-stage matrix.
    pub fn symmetric_part(&self) -> DMatrix<f64> {
        let m = self.first_stage_matrix();
        (&m + m.transpose()) * 0.5
    }

    /// `θ_i(x)` for every agent.
    pub fn costs(&self, x: &[f64]) -> Vec<f64> {
        let total: f64 = x.iter().sum();
        (0..self.agents())
            .map(|i| 0.5 * self.c[i] * x[i] * x[i] + self.a[i] * x[i] + self.r[i] * x[i] * total)
            .collect()
    }
}

/// One realization of the random data.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioData {
    h: Vec<f64>,
    gamma: f64,
    rho: Vec<f64>,
}

impl ScenarioData {
    pub fn new(h: Vec<f64>, gamma: f64, rho: Vec<f64>) -> Result<Self> {
        if h.len() != rho.len() {
            return Err(Error::dim("scenario rho", h.len(), rho.len()));
        }
        if h.iter().chain(&rho).any(|x| !x.is_finite()) || !gamma.is_finite() {
            return Err(Error::invalid("scenario data must be finite"));
        }
        if let Some(i) = h.iter().position(|&hi| !(hi > 0.0)) {
            return Err(Error::invalid(format!("h[{i}] must be positive")));
        }
        if !(gamma > 0.0) {
            return Err(Error::invalid("gamma must be positive"));
        }
        Ok(Self { h, gamma, rho })
    }

    /// Builds `ρ_i = -α + β_i` from a price intercept and supply costs.
    pub fn from_prices(h: Vec<f64>, gamma: f64, alpha: f64, beta: &[f64]) -> Result<Self> {
        let rho = beta.iter().map(|b| -alpha + b).collect();
        Self::new(h, gamma, rho)
    }

    pub fn agents(&self) -> usize {
        self.h.len()
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Diagonal of `H = diag(h_i + γ)`.
    pub fn h_diag(&self) -> Vec<f64> {
        self.h.iter().map(|h| h + self.gamma).collect()
    }

    /// `(H + γ e e') y`, computed in `O(J)`.
    pub fn hessian_times(&self, y: &[f64]) -> Vec<f64> {
        let total: f64 = y.iter().sum();
        self.h
            .iter()
            .zip(y)
            .map(|(h, yi)| (h + self.gamma) * yi + self.gamma * total)
            .collect()
    }

    /// Dense `H + γ e e'`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let j = self.agents();
        DMatrix::from_fn(j, j, |r, c| {
            let d = if r == c { self.h[r] + self.gamma } else { 0.0 };
            d + self.gamma
        })
    }

    /// Dense `M(ξ) = [[H + γee', I], [-I, 0]]`.
    pub fn lcp_matrix(&self) -> DMatrix<f64> {
        let j = self.agents();
        let mut m = DMatrix::zeros(2 * j, 2 * j);
        m.view_mut((0, 0), (j, j)).copy_from(&self.hessian());
        for i in 0..j {
            m[(i, j + i)] = 1.0;
            m[(j + i, i)] = -1.0;
        }
        m
    }
}

/// Monotonicity report for the first-stage matrix `C + re'`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition9Report {
    /// `c_i + 2r_i > ½ Σ_{j≠i} |r_j + r_i|` for every `i`.
    pub diagonally_dominant: bool,
    /// Agents failing the diagonal-dominance inequality.
    pub failing_agents: Vec<usize>,
    /// `C + ½(re' + er')` admits a Cholesky factorization.
    pub positive_definite: bool,
}

pub fn check_condition_9(fs: &FirstStageParams) -> Condition9Report {
    let (c, r) = (fs.c(), fs.r());
    let failing_agents: Vec<usize> = (0..fs.agents())
        .filter(|&i| {
            let off: f64 = (0..fs.agents())
                .filter(|&j| j != i)
                .map(|j| (r[j] + r[i]).abs())
                .sum();
            !(c[i] + 2.0 * r[i] > 0.5 * off)
        })
        .collect();
    Condition9Report {
        diagonally_dominant: failing_agents.is_empty(),
        failing_agents,
        positive_definite: fs.symmetric_part().cholesky().is_some(),
    }
}

/// The full instance: first-stage data plus `ν` equally likely scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageGame {
    first_stage: FirstStageParams,
    scenarios: Vec<ScenarioData>,
}

impl TwoStageGame {
    pub fn new(first_stage: FirstStageParams, scenarios: Vec<ScenarioData>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::invalid("at least one scenario is required"));
        }
        let j = first_stage.agents();
        for (l, s) in scenarios.iter().enumerate() {
            if s.agents() != j {
                return Err(Error::dim(format!("scenarios[{l}] agents"), j, s.agents()));
            }
        }
        Ok(Self {
            first_stage,
            scenarios,
        })
    }

    pub fn agents(&self) -> usize {
        self.first_stage.agents()
    }

    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    /// `J(2ν + 1)`, the dimension of the stacked LCP.
    pub fn lcp_dim(&self) -> usize {
        self.agents() * (2 * self.num_scenarios() + 1)
    }

    pub fn first_stage(&self) -> &FirstStageParams {
        &self.first_stage
    }

    pub fn scenarios(&self) -> &[ScenarioData] {
        &self.scenarios
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GameRecord::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: GameRecord = serde_json::from_str(text).map_err(|e| Error::Schema {
            field: missing_field(&e).unwrap_or_else(|| "<document>".into()),
            message: e.to_string(),
        })?;
        record.try_into()
    }
}

fn missing_field(e: &serde_json::Error) -> Option<String> {
    let msg = e.to_string();
    let start = msg.find('`')? + 1;
    let end = start + msg[start..].find('`')?;
    Some(msg[start..end].to_string())
}

/// On-disk JSON layout: `{J, c, a, r, scenarios: [{h, gamma, rho}]}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameRecord {
    #[serde(rename = "J")]
    j: usize,
    c: Vec<f64>,
    a: Vec<f64>,
    r: Vec<f64>,
    scenarios: Vec<ScenarioRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRecord {
    h: Vec<f64>,
    gamma: f64,
    rho: Vec<f64>,
}

impl From<&TwoStageGame> for GameRecord {
    fn from(g: &TwoStageGame) -> Self {
        let fs = g.first_stage();
        GameRecord {
            j: g.agents(),
            c: fs.c.clone(),
            a: fs.a.clone(),
            r: fs.r.clone(),
            scenarios: g
                .scenarios
                .iter()
                .map(|s| ScenarioRecord {
                    h: s.h.clone(),
                    gamma: s.gamma,
                    rho: s.rho.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<GameRecord> for TwoStageGame {
    type Error = Error;

    fn try_from(rec: GameRecord) -> Result<Self> {
        let schema = |field: String, message: String| Error::Schema { field, message };
        if rec.j == 0 {
            return Err(schema("J".into(), "must be at least 1".into()));
        }
        for (name, v) in [("c", &rec.c), ("a", &rec.a), ("r", &rec.r)] {
            if v.len() != rec.j {
                return Err(schema(
                    name.into(),
                    format!("expected {} entries, found {}", rec.j, v.len()),
                ));
            }
        }
        if rec.scenarios.is_empty() {
            return Err(schema("scenarios".into(), "must not be empty".into()));
        }
        let fs = FirstStageParams::new(rec.c, rec.a, rec.r)
            .map_err(|e| schema("c".into(), e.to_string()))?;
        let mut scenarios = Vec::with_capacity(rec.scenarios.len());
        for (l, s) in rec.scenarios.into_iter().enumerate() {
            for (name, v) in [("h", &s.h), ("rho", &s.rho)] {
                if v.len() != rec.j {
                    return Err(schema(
                        format!("scenarios[{l}].{name}"),
                        format!("expected {} entries, found {}", rec.j, v.len()),
                    ));
                }
            }
            let sd = ScenarioData::new(s.h, s.gamma, s.rho)
                .map_err(|e| schema(format!("scenarios[{l}]"), e.to_string()))?;
            scenarios.push(sd);
        }
        TwoStageGame::new(fs, scenarios)
    }
}

/// `LCP(M(ξ), q(x, ξ))` with `q = (ρ, x)`; the scenario subproblem for a
/// fixed first-stage decision.
pub fn build_scenario_matrix(s: &ScenarioData, x: &[f64]) -> Result<LcpProblem> {
    let j = s.agents();
    if x.len() != j {
        return Err(Error::dim("first-stage decision", j, x.len()));
    }
    if let Some(i) = x.iter().position(|&xi| !(xi >= 0.0)) {
        return Err(Error::invalid(format!("x[{i}] must be nonnegative")));
    }
    let q = DVector::from_iterator(2 * j, s.rho.iter().chain(x).copied());
    LcpProblem::new(s.lcp_matrix(), q)
}

/// A point of the stacked problem, split into blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedPoint {
    pub x: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
}

impl StackedPoint {
    /// `(x, y_1, s_1, ..., y_ν, s_ν)`.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut out = self.x.clone();
        for (y, s) in self.y.iter().zip(&self.s) {
            out.extend_from_slice(y);
            out.extend_from_slice(s);
        }
        DVector::from_vec(out)
    }

    pub fn from_vector(v: &DVector<f64>, agents: usize, scenarios: usize) -> Result<Self> {
        let n = agents * (2 * scenarios + 1);
        if v.len() != n {
            return Err(Error::dim("stacked vector", n, v.len()));
        }
        let v = v.as_slice();
        let x = v[..agents].to_vec();
        let mut y = Vec::with_capacity(scenarios);
        let mut s = Vec::with_capacity(scenarios);
        for l in 0..scenarios {
            let base = agents + 2 * agents * l;
            y.push(v[base..base + agents].to_vec());
            s.push(v[base + agents..base + 2 * agents].to_vec());
        }
        Ok(Self { x, y, s })
    }

    /// The point `(x, 0, ..., 0)`.
    pub fn first_stage_only(x: Vec<f64>, scenarios: usize) -> Self {
        let j = x.len();
        Self {
            x,
            y: vec![vec![0.0; j]; scenarios],
            s: vec![vec![0.0; j]; scenarios],
        }
    }
}

/// Dense stacked LCP:
///
/// ```text
/// M = [ C+re'  -B/ν ... -B/ν ]      q = [ a  ]
///     [ B'     M(ξ_1)        ]          [ ϱ_1 ]
///     [ ...          ...     ]          [ ... ]
///     [ B'           M(ξ_ν)  ]          [ ϱ_ν ]
/// ```
///
/// with `B = (0, I)` and `ϱ_ℓ = (ρ(ξ_ℓ), 0)`. Refuses dimensions above
/// [`MAX_DENSE_DIM`]; use [`stacked_residual`] for large instances.
pub fn assemble_big_lcp(g: &TwoStageGame) -> Result<LcpProblem> {
    let n = g.lcp_dim();
    if n > MAX_DENSE_DIM {
        return Err(Error::invalid(format!(
            "dense assembly limited to n <= {MAX_DENSE_DIM}, instance has n = {n}"
        )));
    }
    let j = g.agents();
    let nu = g.num_scenarios() as f64;
    let mut m = DMatrix::zeros(n, n);
    let mut q = DVector::zeros(n);
    m.view_mut((0, 0), (j, j))
        .copy_from(&g.first_stage.first_stage_matrix());
    q.rows_mut(0, j).copy_from_slice(g.first_stage.a());
    for (l, s) in g.scenarios.iter().enumerate() {
        let base = j + 2 * j * l;
        for i in 0..j {
            // -B/ν in the first block row hits the s-block.
            m[(i, base + j + i)] = -1.0 / nu;
            // B' in the scenario rows: the s-rows pick up +x.
            m[(base + j + i, i)] = 1.0;
        }
        m.view_mut((base, base), (2 * j, 2 * j))
            .copy_from(&s.lcp_matrix());
        q.rows_mut(base, j).copy_from_slice(s.rho());
    }
    LcpProblem::new(m, q)
}

/// `M v + q` of the stacked problem without forming `M`. `O(Jν + J²)`.
pub fn stacked_affine(g: &TwoStageGame, p: &StackedPoint) -> Result<StackedPoint> {
    let j = g.agents();
    let nu = g.num_scenarios();
    if p.x.len() != j || p.y.len() != nu || p.s.len() != nu {
        return Err(Error::dim(
            "stacked point blocks",
            nu,
            p.y.len().min(p.s.len()),
        ));
    }
    if let Some(bad) = p.y.iter().chain(&p.s).find(|b| b.len() != j) {
        return Err(Error::dim("scenario block", j, bad.len()));
    }
    let fs = &g.first_stage;
    let total_x: f64 = p.x.iter().sum();
    let mut mean_s = vec![0.0; j];
    for s in &p.s {
        for (m, si) in mean_s.iter_mut().zip(s) {
            *m += si;
        }
    }
    let wx: Vec<f64> = (0..j)
        .map(|i| (fs.c[i] + fs.r[i]) * p.x[i] + fs.r[i] * total_x - mean_s[i] / nu as f64 + fs.a[i])
        .collect();
    let mut wy = Vec::with_capacity(nu);
    let mut ws = Vec::with_capacity(nu);
    for (l, sc) in g.scenarios.iter().enumerate() {
        let hy = sc.hessian_times(&p.y[l]);
        wy.push(
            (0..j)
                .map(|i| hy[i] + p.s[l][i] + sc.rho[i])
                .collect::<Vec<_>>(),
        );
        ws.push((0..j).map(|i| p.x[i] - p.y[l][i]).collect::<Vec<_>>());
    }
    Ok(StackedPoint {
        x: wx,
        y: wy,
        s: ws,
    })
}

/// Natural-map residual of the stacked problem at `p`, matrix-free.
pub fn stacked_residual(g: &TwoStageGame, p: &StackedPoint) -> Result<f64> {
    let w = stacked_affine(g, p)?;
    let mut sq = natural_residual(&w.x, &p.x).powi(2);
    for l in 0..g.num_scenarios() {
        sq += natural_residual(&w.y[l], &p.y[l]).powi(2);
        sq += natural_residual(&w.s[l], &p.s[l]).powi(2);
    }
    Ok(sq.sqrt())
}

/// Per-agent expected profit `E[F_i(x, ξ)] - θ_i(x)` at a given supply plan.
///
/// `beta[ℓ]` holds `β(ξ_ℓ)`; the price intercept is recovered as
/// `α(ξ_ℓ) = β_i(ξ_ℓ) - ρ_i(ξ_ℓ)`, which must agree across agents.
pub fn evaluate_profits(
    g: &TwoStageGame,
    beta: &[Vec<f64>],
    x: &[f64],
    y: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let j = g.agents();
    let nu = g.num_scenarios();
    check_plan(g, beta, x, y)?;
    let mut revenue = vec![0.0; j];
    for (l, sc) in g.scenarios.iter().enumerate() {
        let alpha = intercept(sc, &beta[l], l)?;
        let total: f64 = y[l].iter().sum();
        let price = alpha - sc.gamma * total;
        for i in 0..j {
            let yi = y[l][i];
            revenue[i] += price * yi - 0.5 * sc.h[i] * yi * yi - beta[l][i] * yi;
        }
    }
    let cost = g.first_stage.costs(x);
    Ok((0..j).map(|i| revenue[i] / nu as f64 - cost[i]).collect())
}

/// Profit of agent `i` after a unilateral change of its production to
/// `xi_new`. Other agents keep their production and their supply `y_{-i}`;
/// agent `i` re-optimizes its own supply in every scenario.
pub fn deviation_profit(
    g: &TwoStageGame,
    beta: &[Vec<f64>],
    x: &[f64],
    y: &[Vec<f64>],
    i: usize,
    xi_new: f64,
) -> Result<f64> {
    check_plan(g, beta, x, y)?;
    if i >= g.agents() {
        return Err(Error::invalid(format!("agent index {i} out of range")));
    }
    if !(xi_new >= 0.0) {
        return Err(Error::invalid("deviation must be nonnegative"));
    }
    let mut revenue = 0.0;
    for (l, sc) in g.scenarios.iter().enumerate() {
        let alpha = intercept(sc, &beta[l], l)?;
        let others: f64 = y[l]
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, v)| v)
            .sum();
        // max_y (α - γ(y + others)) y - ½h y² - β y  over [0, xi_new]
        let unconstrained = (alpha - beta[l][i] - sc.gamma * others) / (2.0 * sc.gamma + sc.h[i]);
        let yi = unconstrained.clamp(0.0, xi_new);
        revenue +=
            (alpha - sc.gamma * (yi + others)) * yi - 0.5 * sc.h[i] * yi * yi - beta[l][i] * yi;
    }
    let mut x_dev = x.to_vec();
    x_dev[i] = xi_new;
    let cost = g.first_stage.costs(&x_dev)[i];
    Ok(revenue / g.num_scenarios() as f64 - cost)
}

fn intercept(sc: &ScenarioData, beta: &[f64], l: usize) -> Result<f64> {
    let alpha = beta[0] - sc.rho[0];
    for i in 1..sc.agents() {
        let ai = beta[i] - sc.rho[i];
        if (ai - alpha).abs() > 1e-9 * (1.0 + alpha.abs()) {
            return Err(Error::invalid(format!(
                "scenario {l}: beta - rho is not constant across agents"
            )));
        }
    }
    Ok(alpha)
}

fn check_plan(g: &TwoStageGame, beta: &[Vec<f64>], x: &[f64], y: &[Vec<f64>]) -> Result<()> {
    let j = g.agents();
    let nu = g.num_scenarios();
    if x.len() != j {
        return Err(Error::dim("first-stage decision", j, x.len()));
    }
    if y.len() != nu || beta.len() != nu {
        return Err(Error::dim(
            "per-scenario blocks",
            nu,
            y.len().min(beta.len()),
        ));
    }
    for l in 0..nu {
        if y[l].len() != j || beta[l].len() != j {
            return Err(Error::dim(format!("scenario {l} block"), j, y[l].len()));
        }
        for i in 0..j {
            if !(y[l][i] >= 0.0 && y[l][i] <= x[i]) {
                return Err(Error::invalid(format!(
                    "infeasible supply: y[{l}][{i}] = {} not in [0, {}]",
                    y[l][i], x[i]
                )));
            }
        }
    }
    Ok(())
}
