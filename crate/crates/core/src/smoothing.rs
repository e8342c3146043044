//! Smooth surrogates of the nonsmooth pieces of `h_ξ` and of the scenario max.
//!
//! * `[t]₊` becomes `μ ln(1 + e^{t/μ})`;
//! * `|a|` becomes `√(a² + μ)` (the squared penalty is already smooth);
//! * the dual norm becomes `√(κ₁ vᵀΣ̂v + μ)` with `v = q + 2Λμ̂`;
//! * `maxᵢ` becomes `μ ln Σᵢ e^{h̃ᵢ/μ}`.
//!
//! Exponentials are always evaluated at non-positive arguments.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::model::{
    h1_unchecked, norm_argument, symmetrize, AmbiguityParams, DualPoint, ModelParams, PsiKind,
    SampleSet, ScenarioTerms,
};

/// Weights below this are flushed to zero after normalization.
const WEIGHT_FLUSH: f64 = 1e-300;

/// Smoothing level `μ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SmoothingParam(f64);

impl SmoothingParam {
    pub fn new(mu: f64) -> Result<Self> {
        if mu.is_finite() && mu > 0.0 {
            Ok(Self(mu))
        } else {
            Err(Error::invalid(format!(
                "smoothing level must be > 0, got {mu}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// `μ ln(1 + e^{t/μ})`, evaluated as `max(t, 0) + μ ln(1 + e^{−|t|/μ})`.
#[inline]
pub fn smooth_plus(t: f64, mu: f64) -> f64 {
    t.max(0.0) + mu * (-t.abs() / mu).exp().ln_1p()
}

/// Derivative of [`smooth_plus`] in `t`: the logistic function of `t/μ`.
#[inline]
pub fn smooth_plus_deriv(t: f64, mu: f64) -> f64 {
    let e = (-t.abs() / mu).exp();
    if t >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    }
}

/// `√(a² + μ)`.
#[inline]
pub fn smooth_abs(a: f64, mu: f64) -> f64 {
    (a * a + mu).sqrt()
}

/// Smoothed deviation penalty `ψ̃_μ`; identity on the squared penalty.
#[inline]
pub fn smooth_psi(psi: PsiKind, a: f64, mu: f64) -> f64 {
    match psi {
        PsiKind::Squared => a * a,
        PsiKind::Absolute => smooth_abs(a, mu),
    }
}

#[inline]
fn smooth_psi_deriv(psi: PsiKind, a: f64, mu: f64) -> f64 {
    match psi {
        PsiKind::Squared => 2.0 * a,
        PsiKind::Absolute => a / smooth_abs(a, mu),
    }
}

fn check_inputs(nu: &DualPoint, samples: &SampleSet, amb: &AmbiguityParams) -> Result<()> {
    let d = nu.d();
    nu.check_dims(d)?;
    ensure_dim("ambiguity dimension", d + 1, amb.dim())?;
    ensure_dim("sample dimension", d, samples.d())
}

/// The scenario-independent part of `h̃_μ`: `h₁(ν) + √(κ₁ vᵀΣ̂v + μ)`.
struct CommonPart {
    value: f64,
    /// `Σ̂v`
    sigma_v: DVector<f64>,
    /// `√(κ₁ vᵀΣ̂v + μ)`
    root: f64,
}

impl CommonPart {
    fn compute(nu: &DualPoint, amb: &AmbiguityParams, model: &ModelParams, mu: f64) -> Self {
        let v = norm_argument(&nu.q, &nu.lambda, amb);
        let sigma_v = amb.sigma_hat() * &v;
        let root = (amb.kappa1() * v.dot(&sigma_v) + mu).sqrt();
        Self {
            value: h1_unchecked(nu, amb, model) + root,
            sigma_v,
            root,
        }
    }
}

fn smooth_h_values(
    common: &CommonPart,
    terms: &ScenarioTerms,
    model: &ModelParams,
    mu: f64,
) -> DVector<f64> {
    let c = model.excess_coef();
    DVector::from_fn(terms.deviation.len(), |i, _| {
        common.value + smooth_psi(model.psi, terms.deviation[i], mu) - terms.quadratic[i]
            + c * smooth_plus(terms.excess[i], mu)
    })
}

/// Smoothed scenario term `h̃_μ(ν, ξ)`.
pub fn smooth_h(
    nu: &DualPoint,
    xi: &DVector<f64>,
    mu: SmoothingParam,
    amb: &AmbiguityParams,
    model: &ModelParams,
) -> Result<f64> {
    let d = nu.d();
    ensure_dim("xi", d + 1, xi.len())?;
    let set = SampleSet::new(DMatrix::from_row_slice(1, d + 1, xi.as_slice()))?;
    smooth_h_all(nu, &set, mu, amb, model).map(|v| v[0])
}

/// `h̃_μ(ν, ξⁱ)` for every scenario.
pub fn smooth_h_all(
    nu: &DualPoint,
    samples: &SampleSet,
    mu: SmoothingParam,
    amb: &AmbiguityParams,
    model: &ModelParams,
) -> Result<DVector<f64>> {
    check_inputs(nu, samples, amb)?;
    let common = CommonPart::compute(nu, amb, model, mu.get());
    let terms = ScenarioTerms::compute(nu, samples);
    Ok(smooth_h_values(&common, &terms, model, mu.get()))
}

/// `M + μ ln Σᵢ e^{(vᵢ − M)/μ}` with `M = maxᵢ vᵢ`.
pub fn log_sum_exp(values: &[f64], mu: f64) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| ((v - max) / mu).exp()).sum();
    max + mu * sum.ln()
}

/// Normalized softmax weights of `values / μ`.
pub fn softmax_weights(values: &[f64], mu: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = values.iter().map(|&v| ((v - max) / mu).exp()).collect();
    let total: f64 = w.iter().sum();
    for wi in &mut w {
        *wi /= total;
        if *wi < WEIGHT_FLUSH {
            *wi = 0.0;
        }
    }
    w
}

/// Smoothed objective `φ̃_μ(ν) = μ ln Σᵢ e^{h̃_μ(ν, ξⁱ)/μ}`.
pub fn smooth_phi(
    nu: &DualPoint,
    samples: &SampleSet,
    mu: SmoothingParam,
    amb: &AmbiguityParams,
    model: &ModelParams,
) -> Result<f64> {
    let values = smooth_h_all(nu, samples, mu, amb, model)?;
    Ok(log_sum_exp(values.as_slice(), mu.get()))
}

/// Value and gradient of `φ̃_μ` at `ν`. The `Λ` block of the gradient is symmetrized.
pub fn smooth_phi_with_grad(
    nu: &DualPoint,
    samples: &SampleSet,
    mu: SmoothingParam,
    amb: &AmbiguityParams,
    model: &ModelParams,
) -> Result<(f64, DualPoint)> {
    check_inputs(nu, samples, amb)?;
    let mu = mu.get();
    let d = nu.d();
    let common = CommonPart::compute(nu, amb, model, mu);
    let terms = ScenarioTerms::compute(nu, samples);
    let values = smooth_h_values(&common, &terms, model, mu);
    let value = log_sum_exp(values.as_slice(), mu);
    let w = DVector::from_vec(softmax_weights(values.as_slice(), mu));

    let c = model.excess_coef();
    let xi = samples.matrix();
    let n = samples.len();
    // per-scenario sensitivities of ψ̃ and of the smoothed excess term
    let mut x_coef = DVector::zeros(n);
    let mut excess_weight = 0.0;
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        let s = smooth_plus_deriv(terms.excess[i], mu);
        x_coef[i] = w[i] * (smooth_psi_deriv(model.psi, terms.deviation[i], mu) + c * s);
        excess_weight += w[i] * s;
    }

    let xb = xi.columns(0, d);
    let grad_x = &nu.x * (2.0 * model.tau1) - xb.tr_mul(&x_coef);
    let grad_alpha = model.tau2 - c * excess_weight;

    let mu_hat = amb.mu_hat();
    let norm_scale = amb.kappa1() / common.root;
    let mean_xi = xi.tr_mul(&w);
    let grad_q = mu_hat + &common.sigma_v * norm_scale - mean_xi;

    let mut weighted = xi.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let second = xi.tr_mul(&weighted);
    let grad_lambda = amb.sigma_hat() * amb.kappa2()
        + mu_hat * mu_hat.transpose()
        + &common.sigma_v * mu_hat.transpose() * (2.0 * norm_scale)
        - second;

    Ok((
        value,
        DualPoint {
            x: grad_x,
            alpha: grad_alpha,
            q: grad_q,
            lambda: symmetrize(&grad_lambda),
        },
    ))
}

/// Gradient of `φ̃_μ` with respect to `(x, α, q, Λ)`.
pub fn grad_smooth_phi(
    nu: &DualPoint,
    samples: &SampleSet,
    mu: SmoothingParam,
    amb: &AmbiguityParams,
    model: &ModelParams,
) -> Result<DualPoint> {
    smooth_phi_with_grad(nu, samples, mu, amb, model).map(|(_, g)| g)
}

/// Upper bound on `φ̃_μ(ν) − φᴺ(ν)` from the per-term smoothing gaps.
pub fn smoothing_gap_bound(n: usize, mu: f64, model: &ModelParams) -> f64 {
    let psi_gap = match model.psi {
        PsiKind::Squared => 0.0,
        PsiKind::Absolute => mu.sqrt(),
    };
    mu * (n as f64).ln() + mu.sqrt() + model.excess_coef() * mu * std::f64::consts::LN_2 + psi_gap
}
