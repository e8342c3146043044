//! Rolling-window backtest, portfolio drift between rebalances, evaluation
//! metrics and the `(τ₁, τ₂)` grid search.
//!
//! Window `t = 1..t̄` trains on rows `[hold·(t−1), hold·(t−1) + τ)` (0-based) and
//! holds the fitted portfolio over the following `hold` rows, with
//! `t̄ = ⌊(N_tol − τ)/hold⌋`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::baselines::{scvar_solve, te_l2_solve, BaselineParams};
use crate::data::{build_sample_set, estimate_moments, ReturnPanel, SampleMode};
use crate::error::{Error, Result};
use crate::model::{ModelParams, PsiKind};
use crate::spg::{spg_solve, SpgParams, StartKind};

/// The penalty grid `{k·10⁻⁴ : k = 0, 2, …, 10}` used for each of `τ₁` and `τ₂`.
pub const PAPER_GRID: [f64; 6] = [0.0, 2e-4, 4e-4, 6e-4, 8e-4, 1e-3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    #[serde(rename = "drcvar-l2")]
    DrcvarL2,
    #[serde(rename = "drcvar-l1")]
    DrcvarL1,
    #[serde(rename = "scvar-l2")]
    ScvarL2,
    #[serde(rename = "scvar-l1")]
    ScvarL1,
    #[serde(rename = "te-l2")]
    TeL2,
}

impl ModelId {
    pub const ALL: [ModelId; 5] = [
        ModelId::DrcvarL2,
        ModelId::DrcvarL1,
        ModelId::ScvarL2,
        ModelId::ScvarL1,
        ModelId::TeL2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::DrcvarL2 => "drcvar-l2",
            ModelId::DrcvarL1 => "drcvar-l1",
            ModelId::ScvarL2 => "scvar-l2",
            ModelId::ScvarL1 => "scvar-l1",
            ModelId::TeL2 => "te-l2",
        }
    }

    pub fn psi(self) -> PsiKind {
        match self {
            ModelId::DrcvarL1 | ModelId::ScvarL1 => PsiKind::Absolute,
            _ => PsiKind::Squared,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model `{s}` (expected one of drcvar-l2, drcvar-l1, scvar-l2, scvar-l1, te-l2)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub window: usize,
    pub hold: usize,
    pub model_id: ModelId,
    /// `psi` is overridden by the model id.
    pub model: ModelParams,
    pub kappa1: f64,
    pub kappa2: f64,
    pub spg: SpgParams,
    pub baseline: BaselineParams,
    pub sample_mode: SampleMode,
    pub start: StartKind,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: 3500,
            hold: 21,
            model_id: ModelId::DrcvarL2,
            model: ModelParams::default(),
            kappa1: 0.1,
            kappa2: 1.0,
            spg: SpgParams::default(),
            baseline: BaselineParams::scvar(),
            sample_mode: SampleMode::Historical,
            start: StartKind::Replication,
        }
    }
}

impl BacktestConfig {
    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            psi: self.model_id.psi(),
            ..self.model
        }
    }

    pub fn with_taus(&self, tau1: f64, tau2: f64) -> Self {
        let mut out = self.clone();
        out.model.tau1 = tau1;
        out.model.tau2 = tau2;
        out
    }

    /// Checks the configuration against a panel of `n_tol` days and returns `t̄`.
    pub fn validate(&self, n_tol: usize) -> Result<usize> {
        if self.hold < 1 {
            return Err(Error::invalid("hold must be >= 1"));
        }
        if self.window < 2 {
            return Err(Error::invalid("window must be >= 2"));
        }
        if self.window + self.hold > n_tol {
            return Err(Error::invalid(format!(
                "window {} + hold {} exceeds the panel length {n_tol}",
                self.window, self.hold
            )));
        }
        if !(self.kappa1.is_finite() && self.kappa1 >= 0.0) {
            return Err(Error::invalid(format!(
                "kappa1 must be >= 0, got {}",
                self.kappa1
            )));
        }
        if !(self.kappa2.is_finite() && self.kappa2 > 0.0) {
            return Err(Error::invalid(format!(
                "kappa2 must be > 0, got {}",
                self.kappa2
            )));
        }
        self.model_params().validate()?;
        self.spg.validate()?;
        self.baseline.validate()?;
        if let SampleMode::GaussianMc { count: 0, .. } = self.sample_mode {
            return Err(Error::invalid("Monte Carlo sample count must be >= 1"));
        }
        Ok(t_bar(n_tol, self.window, self.hold))
    }

    pub fn train_rows(&self, t: usize) -> Range<usize> {
        let start = self.hold * (t - 1);
        start..start + self.window
    }

    pub fn hold_rows(&self, t: usize) -> Range<usize> {
        let start = self.hold * (t - 1) + self.window;
        start..start + self.hold
    }
}

/// `⌊(N_tol − τ)/hold⌋`.
pub fn t_bar(n_tol: usize, window: usize, hold: usize) -> usize {
    n_tol.saturating_sub(window) / hold.max(1)
}

/// Drifted weights `(B ∘ x) / Bᵀx` after one holding period.
pub fn transition_weights(x: &DVector<f64>, gross: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != gross.len() {
        return Err(Error::DimensionMismatch {
            what: "gross returns",
            expected: x.len(),
            got: gross.len(),
        });
    }
    if gross.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
        return Err(Error::invalid("gross returns must be finite and positive"));
    }
    let total = gross.dot(x);
    if !(total > 0.0) {
        return Err(Error::DegeneratePortfolio(total));
    }
    Ok(x.component_mul(gross) / total)
}

/// Compounded index and asset gross returns over one holding period.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldReturns {
    pub index: f64,
    pub assets: DVector<f64>,
}

pub fn hold_period_returns(
    panel: &ReturnPanel,
    config: &BacktestConfig,
) -> Result<Vec<HoldReturns>> {
    let tb = config.validate(panel.len())?;
    (1..=tb)
        .map(|t| {
            let (index, assets) = panel.gross_returns(config.hold_rows(t))?;
            Ok(HoldReturns { index, assets })
        })
        .collect()
}

/// Mean over windows of the mean squared in-sample daily deviation `a_j − ξ_B,jᵀx̂_t`.
pub fn compute_tei(
    weights: &[DVector<f64>],
    panel: &ReturnPanel,
    config: &BacktestConfig,
) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::invalid("no windows to evaluate"));
    }
    let mut total = 0.0;
    for (k, x) in weights.iter().enumerate() {
        let rows = config.train_rows(k + 1);
        panel.check_range(&rows, 1)?;
        let mut sum = 0.0;
        for j in rows.clone() {
            let dev = panel.index_returns()[j] - panel.asset_returns().row(j).transpose().dot(x);
            sum += dev * dev;
        }
        total += sum / rows.len() as f64;
    }
    Ok(total / weights.len() as f64)
}

/// Mean over windows of `(a_{t+1} − B_{t+1}ᵀx̂_t)²` on hold-period gross returns.
pub fn compute_teo(weights: &[DVector<f64>], hold: &[HoldReturns]) -> Result<f64> {
    check_pairs(weights, hold)?;
    let sum: f64 = weights
        .iter()
        .zip(hold)
        .map(|(x, h)| (h.index - h.assets.dot(x)).powi(2))
        .sum();
    Ok(sum / weights.len() as f64)
}

fn check_pairs(weights: &[DVector<f64>], hold: &[HoldReturns]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::invalid("no windows to evaluate"));
    }
    if weights.len() != hold.len() {
        return Err(Error::invalid(format!(
            "{} weight vectors but {} holding periods",
            weights.len(),
            hold.len()
        )));
    }
    Ok(())
}

/// Portfolio variance, Sharpe ratio and turnover; `None` where undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub sigma2: Option<f64>,
    pub sharpe: Option<f64>,
    pub turnover: Option<f64>,
}

pub fn compute_performance(weights: &[DVector<f64>], hold: &[HoldReturns]) -> Result<Performance> {
    check_pairs(weights, hold)?;
    let tb = weights.len();
    if tb < 2 {
        return Ok(Performance {
            sigma2: None,
            sharpe: None,
            turnover: None,
        });
    }
    let gross: Vec<f64> = weights
        .iter()
        .zip(hold)
        .map(|(x, h)| h.assets.dot(x))
        .collect();
    let mean = gross.iter().sum::<f64>() / tb as f64;
    let sigma2 = gross.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (tb - 1) as f64;
    let sharpe = (sigma2 > 0.0).then(|| mean / sigma2.sqrt());
    let mut turnover = 0.0;
    for t in 0..tb - 1 {
        let drifted = transition_weights(&weights[t], &hold[t].assets)?;
        turnover += (&weights[t + 1] - drifted).abs().sum();
    }
    Ok(Performance {
        sigma2: Some(sigma2),
        sharpe,
        turnover: Some(turnover / (tb - 1) as f64),
    })
}

fn serialize_weights<S: Serializer>(weights: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(weights.iter().map(|&w| round_significant(w, 12)))
}

/// `v` rounded to `digits` significant decimal digits.
pub fn round_significant(v: f64, digits: usize) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{:.*e}", digits.saturating_sub(1), v)
        .parse()
        .unwrap_or(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub t: usize,
    #[serde(serialize_with = "serialize_weights")]
    pub weights: Vec<f64>,
    pub solve_seconds: f64,
    pub portfolio_gross_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub model: ModelId,
    pub tau1: f64,
    pub tau2: f64,
    pub window: usize,
    pub hold: usize,
    pub t_bar: usize,
    pub tei: f64,
    pub teo: f64,
    pub sigma2: Option<f64>,
    pub sharpe: Option<f64>,
    pub turnover: Option<f64>,
    pub cpu_seconds: f64,
    pub per_window: Vec<WindowRecord>,
}

impl BacktestReport {
    pub fn weights(&self) -> Vec<DVector<f64>> {
        self.per_window
            .iter()
            .map(|w| DVector::from_column_slice(&w.weights))
            .collect()
    }

    /// Zeroes the wall-clock fields so that reports of identical runs compare equal.
    pub fn without_timings(mut self) -> Self {
        self.cpu_seconds = 0.0;
        for w in &mut self.per_window {
            w.solve_seconds = 0.0;
        }
        self
    }
}

/// Fits the configured model on one training range and returns the weights.
pub fn fit_window(
    panel: &ReturnPanel,
    rows: Range<usize>,
    config: &BacktestConfig,
) -> Result<DVector<f64>> {
    let model = config.model_params();
    let samples = build_sample_set(panel, rows.clone(), config.sample_mode)?;
    match config.model_id {
        ModelId::DrcvarL2 | ModelId::DrcvarL1 => {
            let amb = estimate_moments(panel, rows)?.ambiguity(config.kappa1, config.kappa2)?;
            let nu0 = config.start.point(&samples, &model)?;
            Ok(spg_solve(&nu0, &samples, &amb, &model, &config.spg)?
                .nu_star
                .x)
        }
        ModelId::ScvarL2 | ModelId::ScvarL1 => {
            Ok(scvar_solve(&samples, &model, &config.baseline)?.x)
        }
        ModelId::TeL2 => Ok(te_l2_solve(&samples, model.tau1, &BaselineParams::te_l2())?.x),
    }
}

pub fn run_backtest(panel: &ReturnPanel, config: &BacktestConfig) -> Result<BacktestReport> {
    let tb = config.validate(panel.len())?;
    let start = Instant::now();
    let hold = hold_period_returns(panel, config)?;
    let mut weights = Vec::with_capacity(tb);
    let mut per_window = Vec::with_capacity(tb);
    for t in 1..=tb {
        let solve_start = Instant::now();
        let x = fit_window(panel, config.train_rows(t), config).map_err(|e| Error::Window {
            window: t,
            source: Box::new(e),
        })?;
        let solve_seconds = solve_start.elapsed().as_secs_f64();
        per_window.push(WindowRecord {
            t,
            weights: x.iter().copied().collect(),
            solve_seconds,
            portfolio_gross_return: hold[t - 1].assets.dot(&x),
        });
        weights.push(x);
    }
    let tei = compute_tei(&weights, panel, config)?;
    let teo = compute_teo(&weights, &hold)?;
    let perf = compute_performance(&weights, &hold)?;
    Ok(BacktestReport {
        model: config.model_id,
        tau1: config.model.tau1,
        tau2: config.model.tau2,
        window: config.window,
        hold: config.hold,
        t_bar: tb,
        tei,
        teo,
        sigma2: perf.sigma2,
        sharpe: perf.sharpe,
        turnover: perf.turnover,
        cpu_seconds: start.elapsed().as_secs_f64(),
        per_window,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub tau1: f64,
    pub tau2: f64,
    pub report: BacktestReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub rows: Vec<GridRow>,
    /// Index into `rows` of the lowest-TEO point.
    pub best: usize,
}

impl GridSearchResult {
    pub fn best_row(&self) -> &GridRow {
        &self.rows[self.best]
    }
}

/// Cartesian product of two axes in `(τ₁, τ₂)` lexicographic order.
pub fn grid_product(tau1: &[f64], tau2: &[f64]) -> Vec<(f64, f64)> {
    tau1.iter()
        .flat_map(|&a| tau2.iter().map(move |&b| (a, b)))
        .collect()
}

/// Backtests every grid point (in parallel) and selects the lowest TEO; ties go to
/// the lexicographically smallest `(τ₁, τ₂)`.
pub fn grid_search(
    panel: &ReturnPanel,
    config: &BacktestConfig,
    grid: &[(f64, f64)],
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::invalid("grid is empty"));
    }
    config.validate(panel.len())?;
    for &(a, b) in grid {
        config.with_taus(a, b).validate(panel.len())?;
    }
    let rows: Vec<GridRow> = grid
        .par_iter()
        .map(|&(tau1, tau2)| {
            run_backtest(panel, &config.with_taus(tau1, tau2)).map(|report| GridRow {
                tau1,
                tau2,
                report,
            })
        })
        .collect::<Result<_>>()?;
    let best = select_best(&rows);
    Ok(GridSearchResult { rows, best })
}

fn select_best(rows: &[GridRow]) -> usize {
    let mut best = 0;
    for (i, row) in rows.iter().enumerate().skip(1) {
        let b = &rows[best];
        let better = match row.report.teo.total_cmp(&b.report.teo) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => (row.tau1, row.tau2) < (b.tau1, b.tau2),
        };
        if better {
            best = i;
        }
    }
    best
}
