//! Comparison solvers: the sample-average CVaR-penalized tracking model and
//! plain tracking error with an ℓ₂ penalty.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cvar_from_losses, ModelParams, PsiKind, SampleSet};
use crate::projection::project_simplex;

const ARMIJO_SIGMA: f64 = 1e-6;
const ARMIJO_RHO: f64 = 0.5;
const ARMIJO_MAX_BACKTRACKS: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    ScvarSubgrad,
    TeL2ProjGrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Backtracking from a unit step; falls back to a diminishing step when
    /// backtracking is exhausted.
    Armijo,
    /// `step0 / √(k+1)` along the normalized subgradient.
    Diminishing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub method: BaselineMethod,
    pub max_iters: usize,
    pub step_rule: StepRule,
    pub tolerance: f64,
    /// Scale of the diminishing steps.
    pub step0: f64,
}

impl BaselineParams {
    pub fn scvar() -> Self {
        Self {
            method: BaselineMethod::ScvarSubgrad,
            max_iters: 50_000,
            step_rule: StepRule::Armijo,
            tolerance: 1e-10,
            step0: 0.1,
        }
    }

    pub fn te_l2() -> Self {
        Self {
            method: BaselineMethod::TeL2ProjGrad,
            max_iters: 100_000,
            step_rule: StepRule::Armijo,
            tolerance: 1e-13,
            step0: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::invalid(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if !(self.step0.is_finite() && self.step0 > 0.0) {
            return Err(Error::invalid(format!(
                "step0 must be > 0, got {}",
                self.step0
            )));
        }
        Ok(())
    }
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self::scvar()
    }
}

/// `(1/N)Σψ(ξ_aⁱ − ξ_Bⁱᵀx) + τ₁‖x‖² + τ₂[α + (1/((1−β)N))Σ(−xᵀξ_Bⁱ − α)₊]`.
pub fn scvar_objective(
    x: &DVector<f64>,
    alpha: f64,
    samples: &SampleSet,
    model: &ModelParams,
) -> Result<f64> {
    check(x, samples)?;
    Ok(scvar_value(x, alpha, samples, model))
}

fn check(x: &DVector<f64>, samples: &SampleSet) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if x.len() != samples.d() {
        return Err(Error::DimensionMismatch {
            what: "x",
            expected: samples.d(),
            got: x.len(),
        });
    }
    Ok(())
}

fn scvar_value(x: &DVector<f64>, alpha: f64, samples: &SampleSet, model: &ModelParams) -> f64 {
    let n = samples.len() as f64;
    let dev = samples.deviations(x);
    let losses = samples.losses(x);
    let fidelity = dev.iter().map(|&a| model.psi.eval(a)).sum::<f64>() / n;
    let tail = losses.iter().map(|&l| (l - alpha).max(0.0)).sum::<f64>() / ((1.0 - model.beta) * n);
    fidelity + model.tau1 * x.norm_squared() + model.tau2 * (alpha + tail)
}

/// A subgradient with the plus-terms' and `|·|`'s kinks resolved to 0.
fn scvar_subgradient(
    x: &DVector<f64>,
    alpha: f64,
    samples: &SampleSet,
    model: &ModelParams,
) -> (DVector<f64>, f64) {
    let n = samples.len() as f64;
    let d = samples.d();
    let dev = samples.deviations(x);
    let losses = samples.losses(x);
    let tail_coef = model.tau2 / ((1.0 - model.beta) * n);
    let mut coef = DVector::zeros(samples.len());
    let mut above = 0.0;
    for i in 0..samples.len() {
        let dpsi = match model.psi {
            PsiKind::Squared => 2.0 * dev[i],
            PsiKind::Absolute => {
                if dev[i] > 0.0 {
                    1.0
                } else if dev[i] < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        };
        let ind = if losses[i] > alpha { 1.0 } else { 0.0 };
        above += ind;
        coef[i] = dpsi / n + tail_coef * ind;
    }
    let xb = samples.matrix().columns(0, d);
    let gx = &(x * (2.0 * model.tau1)) - xb.tr_mul(&coef);
    let ga = model.tau2 * (1.0 - above / ((1.0 - model.beta) * n));
    (gx, ga)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineStatus {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScvarSolution {
    pub x: DVector<f64>,
    pub alpha: f64,
    pub objective: f64,
    pub iterations: usize,
    pub status: BaselineStatus,
    /// `(seconds, objective)` after every iteration.
    pub trace: Vec<(f64, f64)>,
    pub wall_time: f64,
}

/// Projected subgradient descent over `Δ_d × ℝ`. The best iterate is returned.
pub fn scvar_solve(
    samples: &SampleSet,
    model: &ModelParams,
    params: &BaselineParams,
) -> Result<ScvarSolution> {
    params.validate()?;
    model.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let start = Instant::now();
    let d = samples.d();
    let mut x = DVector::from_element(d, 1.0 / d as f64);
    let mut alpha = cvar_from_losses(samples.losses(&x).as_slice(), model.beta)?.0;
    let mut value = scvar_value(&x, alpha, samples, model);
    if !value.is_finite() {
        return Err(Error::numerical(
            "SCVaR objective is not finite at the starting point",
        ));
    }
    let mut best = (x.clone(), alpha, value);
    let mut trace = Vec::new();
    let mut status = BaselineStatus::IterationCap;
    let mut iterations = 0;

    for k in 0..params.max_iters {
        let (gx, ga) = scvar_subgradient(&x, alpha, samples, model);
        let unit_x = project_simplex(&(&x - &gx))?;
        let displacement = ((&unit_x - &x).norm_squared() + ga * ga).sqrt();
        if displacement < params.tolerance {
            status = BaselineStatus::Converged;
            break;
        }
        let mut accepted = None;
        if params.step_rule == StepRule::Armijo {
            let mut step = 1.0;
            for _ in 0..=ARMIJO_MAX_BACKTRACKS {
                let tx = project_simplex(&(&x - &gx * step))?;
                let ta = alpha - step * ga;
                let tv = scvar_value(&tx, ta, samples, model);
                let decrease = gx.dot(&(&tx - &x)) + ga * (ta - alpha);
                if tv <= value + ARMIJO_SIGMA * decrease {
                    accepted = Some((tx, ta, tv));
                    break;
                }
                step *= ARMIJO_RHO;
            }
        }
        let (nx, na, nv) = match accepted {
            Some(t) => t,
            None => {
                let norm = (gx.norm_squared() + ga * ga).sqrt();
                let step = params.step0 / ((k + 1) as f64).sqrt() / norm;
                let tx = project_simplex(&(&x - &gx * step))?;
                let ta = alpha - step * ga;
                let tv = scvar_value(&tx, ta, samples, model);
                (tx, ta, tv)
            }
        };
        if !nv.is_finite() {
            return Err(Error::numerical(format!(
                "SCVaR objective is not finite at iteration {k}"
            )));
        }
        x = nx;
        alpha = na;
        value = nv;
        iterations = k + 1;
        if value < best.2 {
            best = (x.clone(), alpha, value);
        }
        trace.push((start.elapsed().as_secs_f64(), value));
    }

    Ok(ScvarSolution {
        x: best.0,
        alpha: best.1,
        objective: best.2,
        iterations,
        status,
        trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeL2Solution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub status: BaselineStatus,
    pub wall_time: f64,
}

/// `(1/N)Σ(ξ_aⁱ − ξ_Bⁱᵀx)² + τ₁‖x‖²`.
pub fn te_l2_objective(x: &DVector<f64>, samples: &SampleSet, tau1: f64) -> Result<f64> {
    check(x, samples)?;
    Ok(samples.deviations(x).norm_squared() / samples.len() as f64 + tau1 * x.norm_squared())
}

/// Quadratic data `f(x) = xᵀGx − 2bᵀx + c` of the tracking error plus ridge term.
struct TeQuadratic {
    g: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl TeQuadratic {
    fn new(samples: &SampleSet, tau1: f64) -> Self {
        let n = samples.len() as f64;
        let d = samples.d();
        let xi = samples.matrix();
        let xb = xi.columns(0, d);
        let a = xi.column(d);
        let mut g = xb.tr_mul(&xb) / n;
        for i in 0..d {
            g[(i, i)] += tau1;
        }
        Self {
            b: xb.tr_mul(&a) / n,
            c: a.norm_squared() / n,
            g,
        }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (x.dot(&(&self.g * x)) - 2.0 * self.b.dot(x) + self.c).max(0.0)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.g * x - &self.b) * 2.0
    }
}

/// Projected gradient with stepsize `1/L`, `L = 2λ_max(G)`.
pub fn te_l2_solve(
    samples: &SampleSet,
    tau1: f64,
    params: &BaselineParams,
) -> Result<TeL2Solution> {
    params.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if !(tau1.is_finite() && tau1 >= 0.0) {
        return Err(Error::invalid(format!("tau1 must be >= 0, got {tau1}")));
    }
    let start = Instant::now();
    let d = samples.d();
    let quad = TeQuadratic::new(samples, tau1);
    let lipschitz = 2.0 * SymmetricEigen::new(quad.g.clone()).eigenvalues.max();
    let mut x = DVector::from_element(d, 1.0 / d as f64);
    let mut status = BaselineStatus::IterationCap;
    let mut iterations = 0;
    if lipschitz > 0.0 {
        let step = 1.0 / lipschitz;
        for k in 0..params.max_iters {
            let next = project_simplex(&(&x - quad.gradient(&x) * step))?;
            let moved = (&next - &x).norm();
            x = next;
            iterations = k + 1;
            if moved < params.tolerance {
                status = BaselineStatus::Converged;
                break;
            }
        }
    } else {
        status = BaselineStatus::Converged;
    }
    let objective = quad.value(&x);
    if !objective.is_finite() {
        return Err(Error::numerical("tracking-error objective is not finite"));
    }
    Ok(TeL2Solution {
        x,
        objective,
        iterations,
        status,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// `‖P_Δ[x − ∇f(x)] − x‖` for the tracking-error objective.
pub fn te_l2_kkt_residual(x: &DVector<f64>, samples: &SampleSet, tau1: f64) -> Result<f64> {
    check(x, samples)?;
    let quad = TeQuadratic::new(samples, tau1);
    Ok((project_simplex(&(x - quad.gradient(x)))? - x).norm())
}
