//! Smoothing projected gradient method.
//!
//! Each outer iteration `k` works on the smoothed objective `φ̃_{μ_k}`:
//!
//! 1. if the projected-gradient residual at `ν^k` is below `ε`, skip to step 3;
//! 2. otherwise run projected gradient steps with Armijo backtracking from
//!    `ν^k` until at least `n₀` steps are done and the scaled step length
//!    `‖y^{j+1} − y^j‖ / α_j` drops below `η μ_k`;
//! 3. set `μ_{k+1} = ω μ_k`.
//!
//! The run stops once the residual is at most `ε` with `μ_k ≤ μ_floor`, or when
//! the outer iteration cap is reached.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    cvar_from_losses, evaluate_phi_n, AmbiguityParams, DualPoint, ModelParams, PsiKind, SampleSet,
};
use crate::projection::project_feasible;
use crate::smoothing::{smooth_phi, smooth_phi_with_grad, SmoothingParam};

/// Consecutive stalled inner loops after which the solver gives up.
const STALL_LIMIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpgParams {
    /// Initial trial stepsize of every line search.
    pub alpha0: f64,
    /// Armijo slope factor.
    pub sigma: f64,
    /// Backtracking ratio.
    pub rho: f64,
    pub mu0: f64,
    /// Inner-loop exit factor.
    pub eta: f64,
    /// Smoothing shrink factor.
    pub omega: f64,
    /// Stationarity tolerance, shared by the skip test and the final stop rule.
    pub epsilon: f64,
    /// Minimum number of inner steps per smoothing level.
    pub n0: usize,
    pub max_outer_iters: usize,
    /// Largest inner loop allowed at one smoothing level before moving on.
    pub max_inner_iters: usize,
    /// Smoothing level the stop rule requires.
    pub mu_floor: f64,
    pub max_backtracks: u32,
    pub record_trace: bool,
}

impl Default for SpgParams {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            sigma: 1e-6,
            rho: 0.5,
            mu0: 1.0,
            eta: 1e3,
            omega: 0.5,
            epsilon: 1e-4,
            n0: 5,
            max_outer_iters: 3000,
            max_inner_iters: 10_000,
            mu_floor: 2e-6,
            max_backtracks: 60,
            record_trace: false,
        }
    }
}

impl SpgParams {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.alpha0.is_finite() && self.alpha0 > 0.0) {
            return Err(Error::invalid(format!(
                "alpha0 must be > 0, got {}",
                self.alpha0
            )));
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("rho", self.rho),
            ("omega", self.omega),
        ] {
            if !open_unit(v) {
                return Err(Error::invalid(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        for (name, v) in [
            ("mu0", self.mu0),
            ("eta", self.eta),
            ("epsilon", self.epsilon),
            ("mu_floor", self.mu_floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.n0 < 1 {
            return Err(Error::invalid("n0 must be >= 1"));
        }
        if self.max_outer_iters < 1 || self.max_inner_iters < 1 {
            return Err(Error::invalid("iteration caps must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    IterationCap,
    Stalled,
}

/// One accepted inner step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Seconds since the solve started.
    pub seconds: f64,
    pub outer: usize,
    pub mu: f64,
    /// `φ̃_μ` before and after the step.
    pub before: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub nu_star: DualPoint,
    pub status: SolveStatus,
    /// Exact `φᴺ(ν*)`.
    pub objective: f64,
    /// `φ̃_{μ_final}(ν*)`.
    pub smooth_objective: f64,
    pub residual: f64,
    pub mu_final: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub gradient_evals: usize,
    pub function_evals: usize,
    pub wall_time: f64,
    pub trace: Option<Vec<TracePoint>>,
}

#[derive(Debug, Clone)]
pub struct ArmijoStep {
    pub y_next: DualPoint,
    pub value: f64,
    pub stepsize: f64,
    pub backtracks: u32,
    /// The backtracking cap was hit; `y_next` is the input point.
    pub stalled: bool,
}

/// `‖P_𝒱[ν − ∇φ̃_μ(ν)] − ν‖`.
pub fn stationarity_residual(
    nu: &DualPoint,
    samples: &SampleSet,
    mu: SmoothingParam,
    amb: &AmbiguityParams,
    model: &ModelParams,
) -> Result<f64> {
    let (_, grad) = smooth_phi_with_grad(nu, samples, mu, amb, model)?;
    residual_with_grad(nu, &grad)
}

fn residual_with_grad(nu: &DualPoint, grad: &DualPoint) -> Result<f64> {
    Ok(project_feasible(&nu.axpy(-1.0, grad))?.sub(nu).norm())
}

struct Problem<'a> {
    samples: &'a SampleSet,
    amb: &'a AmbiguityParams,
    model: &'a ModelParams,
    function_evals: usize,
    gradient_evals: usize,
}

impl Problem<'_> {
    fn value(&mut self, nu: &DualPoint, mu: SmoothingParam) -> Result<f64> {
        self.function_evals += 1;
        smooth_phi(nu, self.samples, mu, self.amb, self.model)
    }

    fn value_grad(&mut self, nu: &DualPoint, mu: SmoothingParam) -> Result<(f64, DualPoint)> {
        self.function_evals += 1;
        self.gradient_evals += 1;
        smooth_phi_with_grad(nu, self.samples, mu, self.amb, self.model)
    }

    fn armijo(
        &mut self,
        y: &DualPoint,
        value: f64,
        grad: &DualPoint,
        mu: SmoothingParam,
        spg: &SpgParams,
    ) -> Result<ArmijoStep> {
        let mut stepsize = spg.alpha0;
        for gamma in 0..=spg.max_backtracks {
            let trial = project_feasible(&y.axpy(-stepsize, grad))?;
            let trial_value = self.value(&trial, mu)?;
            if !trial_value.is_finite() {
                return Err(Error::numerical(format!(
                    "smoothed objective is not finite at stepsize {stepsize:e}"
                )));
            }
            let decrease = grad.dot(&trial.sub(y));
            if trial_value <= value + spg.sigma * decrease {
                return Ok(ArmijoStep {
                    y_next: trial,
                    value: trial_value,
                    stepsize,
                    backtracks: gamma,
                    stalled: false,
                });
            }
            stepsize *= spg.rho;
        }
        Ok(ArmijoStep {
            y_next: y.clone(),
            value,
            stepsize,
            backtracks: spg.max_backtracks,
            stalled: true,
        })
    }
}

/// Projected Armijo step `P_𝒱[y − α∇φ̃_μ(y)]` with `α = α₀ρ^γ` for the smallest admissible `γ`.
pub fn armijo_search(
    y: &DualPoint,
    mu: SmoothingParam,
    samples: &SampleSet,
    amb: &AmbiguityParams,
    model: &ModelParams,
    spg: &SpgParams,
) -> Result<ArmijoStep> {
    let mut problem = Problem {
        samples,
        amb,
        model,
        function_evals: 0,
        gradient_evals: 0,
    };
    let (value, grad) = problem.value_grad(y, mu)?;
    problem.armijo(y, value, &grad, mu, spg)
}

/// Starting point: uniform weights, `α` at the empirical β-quantile of the losses, `q = 0`, `Λ = 0`.
pub fn default_start(samples: &SampleSet, model: &ModelParams) -> Result<DualPoint> {
    let d = samples.d();
    let mut nu = DualPoint::zeros(d);
    nu.x = DVector::from_element(d, 1.0 / d as f64);
    let losses = samples.losses(&nu.x);
    nu.alpha = cvar_from_losses(losses.as_slice(), model.beta)?.0;
    Ok(nu)
}

/// Which starting point a solve uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    /// [`default_start`]
    Zero,
    /// [`replication_start`]
    Replication,
}

impl StartKind {
    pub fn point(self, samples: &SampleSet, model: &ModelParams) -> Result<DualPoint> {
        match self {
            StartKind::Zero => default_start(samples, model),
            StartKind::Replication => replication_start(samples, model),
        }
    }
}

/// [`default_start`] with `Λ⁰ = (−x⁰; 1)(−x⁰; 1)ᵀ` under the squared penalty, so that
/// `ψ(ξ_a − ξ_Bᵀx⁰) − ξᵀΛ⁰ξ = 0` for every scenario.
pub fn replication_start(samples: &SampleSet, model: &ModelParams) -> Result<DualPoint> {
    let mut nu = default_start(samples, model)?;
    if model.psi == PsiKind::Squared {
        let d = samples.d();
        let mut v = DVector::from_element(d + 1, 1.0);
        v.rows_mut(0, d).copy_from(&(-&nu.x));
        nu.lambda = &v * v.transpose();
    }
    Ok(nu)
}

pub fn spg_solve(
    nu0: &DualPoint,
    samples: &SampleSet,
    amb: &AmbiguityParams,
    model: &ModelParams,
    spg: &SpgParams,
) -> Result<SolveResult> {
    spg.validate()?;
    model.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if !nu0.is_finite() {
        return Err(Error::invalid("starting point is not finite"));
    }
    let start = Instant::now();
    let mut problem = Problem {
        samples,
        amb,
        model,
        function_evals: 0,
        gradient_evals: 0,
    };
    let mut trace = spg.record_trace.then(Vec::new);

    let mut nu = project_feasible(nu0)?;
    let mut mu = spg.mu0;
    let mut outer = 0;
    let mut inner_total = 0;
    let mut stall_streak = 0;

    let initial = problem.value(&nu, SmoothingParam::new(mu)?)?;
    if !initial.is_finite() {
        return Err(Error::numerical(
            "smoothed objective is not finite at the starting point",
        ));
    }

    let (status, residual, value_at_stop) = loop {
        let mu_k = SmoothingParam::new(mu)?;
        let (value, grad) = problem.value_grad(&nu, mu_k)?;
        let residual = residual_with_grad(&nu, &grad)?;
        if residual <= spg.epsilon && mu <= spg.mu_floor {
            break (SolveStatus::Converged, residual, value);
        }
        if outer >= spg.max_outer_iters {
            break (SolveStatus::IterationCap, residual, value);
        }
        if stall_streak >= STALL_LIMIT || mu * spg.omega < f64::MIN_POSITIVE {
            break (SolveStatus::Stalled, residual, value);
        }

        if residual >= spg.epsilon {
            let (mut y, mut fy, mut gy) = (nu, value, grad);
            let mut stalled = false;
            for j in 0..spg.max_inner_iters {
                let step = problem.armijo(&y, fy, &gy, mu_k, spg)?;
                if step.stalled {
                    stalled = true;
                    break;
                }
                inner_total += 1;
                debug_assert!(step.value <= fy + 1e-12 * (1.0 + fy.abs()));
                if let Some(trace) = trace.as_mut() {
                    trace.push(TracePoint {
                        seconds: start.elapsed().as_secs_f64(),
                        outer,
                        mu,
                        before: fy,
                        objective: step.value,
                    });
                }
                let scaled_move = step.y_next.sub(&y).norm() / step.stepsize;
                y = step.y_next;
                if j >= spg.n0 && scaled_move < spg.eta * mu {
                    break;
                }
                let (f_next, g_next) = problem.value_grad(&y, mu_k)?;
                fy = f_next;
                gy = g_next;
            }
            stall_streak = if stalled { stall_streak + 1 } else { 0 };
            nu = y;
        }

        mu *= spg.omega;
        outer += 1;
    };

    let mu_final = SmoothingParam::new(mu)?;
    let (objective, _) = evaluate_phi_n(&nu, samples, amb, model)?;
    Ok(SolveResult {
        smooth_objective: value_at_stop,
        objective,
        residual,
        mu_final: mu_final.get(),
        status,
        outer_iters: outer,
        inner_iters: inner_total,
        gradient_evals: problem.gradient_evals,
        function_evals: problem.function_evals,
        wall_time: start.elapsed().as_secs_f64(),
        trace,
        nu_star: nu,
    })
}
