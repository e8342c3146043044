//! Domain types of the robust tracking model and exact (nonsmooth) evaluation
//! of every function in its dual reformulation.
//!
//! A scenario `ξ ∈ ℝ^{d+1}` is laid out as `(ξ_B; ξ_a)`: the first `d` entries
//! are asset returns and the last entry is the index return. The dual decision
//! block is `ν = (x, α, q, Λ)` ranging over `Δ_d × ℝ × ℝ^{d+1} × S₊^{d+1}`.
//!
//! For a single scenario the dual integrand splits as
//!
//! ```text
//! h_ξ(ν) = h₁(ν) + √κ₁ ‖Σ̂^{1/2}(q + 2Λμ̂)‖ + h₂,ξ(ν)
//! h₁(ν)  = ⟨κ₂Σ̂, Λ⟩ + (Λᵀμ̂ + q)ᵀμ̂ + τ₁‖x‖² + τ₂α
//! h₂,ξ(ν) = ψ(ξ_a − ξ_Bᵀx) − (Λᵀξ + q)ᵀξ + τ₂/(1−β)·[−xᵀξ_B − α]₊
//! ```
//!
//! and the discretized objective is `φᴺ(ν) = maxᵢ h_{ξⁱ}(ν)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, ensure_finite, Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const FEASIBILITY_TOL: f64 = 1e-10;

/// Deviation penalty applied to `ξ_a − ξ_Bᵀx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiKind {
    #[default]
    Squared,
    Absolute,
}

impl PsiKind {
    #[inline]
    pub fn eval(self, a: f64) -> f64 {
        match self {
            PsiKind::Squared => a * a,
            PsiKind::Absolute => a.abs(),
        }
    }
}

/// Penalty weights, CVaR level and deviation function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tau1: f64,
    pub tau2: f64,
    pub beta: f64,
    pub psi: PsiKind,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            tau1: 1e-2,
            tau2: 1e-2,
            beta: 0.95,
            psi: PsiKind::Squared,
        }
    }
}

impl ModelParams {
    pub fn new(tau1: f64, tau2: f64, beta: f64, psi: PsiKind) -> Result<Self> {
        let params = Self {
            tau1,
            tau2,
            beta,
            psi,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau1.is_finite() && self.tau1 >= 0.0) {
            return Err(Error::invalid(format!(
                "tau1 must be >= 0, got {}",
                self.tau1
            )));
        }
        if !(self.tau2.is_finite() && self.tau2 >= 0.0) {
            return Err(Error::invalid(format!(
                "tau2 must be >= 0, got {}",
                self.tau2
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Coefficient `τ₂/(1−β)` in front of the excess-loss term.
    #[inline]
    pub fn excess_coef(&self) -> f64 {
        self.tau2 / (1.0 - self.beta)
    }
}

/// Reference moments and radii of the moment ambiguity set.
#[derive(Debug, Clone)]
pub struct AmbiguityParams {
    mu_hat: DVector<f64>,
    sigma_hat: DMatrix<f64>,
    sigma_hat_sqrt: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    kappa1: f64,
    kappa2: f64,
}

impl AmbiguityParams {
    pub fn new(
        mu_hat: DVector<f64>,
        sigma_hat: DMatrix<f64>,
        kappa1: f64,
        kappa2: f64,
    ) -> Result<Self> {
        let n = mu_hat.len();
        if n < 2 {
            return Err(Error::invalid("reference mean must have length d+1 >= 2"));
        }
        ensure_dim("sigma_hat rows", n, sigma_hat.nrows())?;
        ensure_dim("sigma_hat cols", n, sigma_hat.ncols())?;
        ensure_finite("mu_hat", mu_hat.iter().copied())?;
        ensure_finite("sigma_hat", sigma_hat.iter().copied())?;
        if !(kappa1.is_finite() && kappa1 >= 0.0) {
            return Err(Error::invalid(format!("kappa1 must be >= 0, got {kappa1}")));
        }
        if !(kappa2.is_finite() && kappa2 > 0.0) {
            return Err(Error::invalid(format!("kappa2 must be > 0, got {kappa2}")));
        }
        let asym = (&sigma_hat - sigma_hat.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::invalid(format!(
                "sigma_hat is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let eig = SymmetricEigen::new(sigma_hat.clone());
        let min_eig = eig.eigenvalues.min();
        if !(min_eig > 0.0) {
            return Err(Error::invalid(format!(
                "sigma_hat is not positive definite (smallest eigenvalue {min_eig:e})"
            )));
        }
        let roots = eig.eigenvalues.map(f64::sqrt);
        let sigma_hat_sqrt =
            &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
        let sigma_hat_sqrt = symmetrize(&sigma_hat_sqrt);
        let chol = Cholesky::new(sigma_hat.clone())
            .ok_or_else(|| Error::numerical("Cholesky factorization of sigma_hat failed"))?;
        Ok(Self {
            mu_hat,
            sigma_hat,
            sigma_hat_sqrt,
            chol,
            kappa1,
            kappa2,
        })
    }

    /// Scenario dimension `d+1`.
    pub fn dim(&self) -> usize {
        self.mu_hat.len()
    }

    pub fn mu_hat(&self) -> &DVector<f64> {
        &self.mu_hat
    }

    pub fn sigma_hat(&self) -> &DMatrix<f64> {
        &self.sigma_hat
    }

    pub fn sigma_hat_sqrt(&self) -> &DMatrix<f64> {
        &self.sigma_hat_sqrt
    }

    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    /// Solves `Σ̂ y = b` through the cached Cholesky factor.
    pub fn solve_sigma(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }
}

/// Dual decision block `ν = (x, α, q, Λ)`. Also used as the carrier for gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub x: DVector<f64>,
    pub alpha: f64,
    pub q: DVector<f64>,
    pub lambda: DMatrix<f64>,
}

impl DualPoint {
    pub fn zeros(d: usize) -> Self {
        Self {
            x: DVector::zeros(d),
            alpha: 0.0,
            q: DVector::zeros(d + 1),
            lambda: DMatrix::zeros(d + 1, d + 1),
        }
    }

    pub fn new(x: DVector<f64>, alpha: f64, q: DVector<f64>, lambda: DMatrix<f64>) -> Result<Self> {
        let nu = Self {
            x,
            alpha,
            q,
            lambda,
        };
        nu.check_dims(nu.d())?;
        Ok(nu)
    }

    /// Asset count `d`.
    pub fn d(&self) -> usize {
        self.x.len()
    }

    pub fn check_dims(&self, d: usize) -> Result<()> {
        ensure_dim("x", d, self.x.len())?;
        ensure_dim("q", d + 1, self.q.len())?;
        ensure_dim("lambda rows", d + 1, self.lambda.nrows())?;
        ensure_dim("lambda cols", d + 1, self.lambda.ncols())
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite()
            && self.x.iter().all(|v| v.is_finite())
            && self.q.iter().all(|v| v.is_finite())
            && self.lambda.iter().all(|v| v.is_finite())
    }

    /// Block-wise inner product, Frobenius on the `Λ` block.
    pub fn dot(&self, other: &DualPoint) -> f64 {
        self.x.dot(&other.x)
            + self.alpha * other.alpha
            + self.q.dot(&other.q)
            + self.lambda.dot(&other.lambda)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self + scale · other`.
    pub fn axpy(&self, scale: f64, other: &DualPoint) -> DualPoint {
        DualPoint {
            x: &self.x + &other.x * scale,
            alpha: self.alpha + scale * other.alpha,
            q: &self.q + &other.q * scale,
            lambda: &self.lambda + &other.lambda * scale,
        }
    }

    pub fn sub(&self, other: &DualPoint) -> DualPoint {
        self.axpy(-1.0, other)
    }

    /// Convex combination `t·self + (1−t)·other`.
    pub fn lerp(&self, other: &DualPoint, t: f64) -> DualPoint {
        DualPoint {
            x: &self.x * t + &other.x * (1.0 - t),
            alpha: t * self.alpha + (1.0 - t) * other.alpha,
            q: &self.q * t + &other.q * (1.0 - t),
            lambda: &self.lambda * t + &other.lambda * (1.0 - t),
        }
    }

    /// Flattened layout `[x, α, q, vec(Λ) column-major]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len_for(self.d()));
        out.extend(self.x.iter());
        out.push(self.alpha);
        out.extend(self.q.iter());
        out.extend(self.lambda.iter());
        out
    }

    pub fn from_flat(d: usize, flat: &[f64]) -> Result<Self> {
        let m = d + 1;
        ensure_dim("flat dual point", d + 1 + m + m * m, flat.len())?;
        let x = DVector::from_column_slice(&flat[..d]);
        let alpha = flat[d];
        let q = DVector::from_column_slice(&flat[d + 1..d + 1 + m]);
        let lambda = DMatrix::from_column_slice(m, m, &flat[d + 1 + m..]);
        Ok(Self {
            x,
            alpha,
            q,
            lambda,
        })
    }

    fn flat_len_for(&self, d: usize) -> usize {
        let m = d + 1;
        d + 1 + m + m * m
    }
}

/// Discretization `Ξ_[N]`: an `N × (d+1)` matrix whose rows are scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: DMatrix<f64>,
}

impl SampleSet {
    pub fn new(samples: DMatrix<f64>) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::EmptySampleSet);
        }
        if samples.ncols() < 2 {
            return Err(Error::invalid(
                "scenarios need at least one asset and the index",
            ));
        }
        ensure_finite("samples", samples.iter().copied())?;
        Ok(Self { samples })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptySampleSet);
        }
        let m = rows[0].len();
        for row in rows {
            ensure_dim("sample row", m, row.len())?;
        }
        Self::new(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    /// Asset count `d`.
    pub fn d(&self) -> usize {
        self.samples.ncols() - 1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.samples.row(i).transpose()
    }

    pub fn index_return(&self, i: usize) -> f64 {
        self.samples[(i, self.d())]
    }

    /// Losses `−xᵀξ_Bⁱ` for all scenarios.
    pub fn losses(&self, x: &DVector<f64>) -> DVector<f64> {
        -(self.samples.columns(0, self.d()) * x)
    }

    /// Deviations `ξ_aⁱ − ξ_Bⁱᵀx` for all scenarios.
    pub fn deviations(&self, x: &DVector<f64>) -> DVector<f64> {
        self.samples.column(self.d()) - self.samples.columns(0, self.d()) * x
    }
}

/// Probability weights on the rows of a [`SampleSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    weights: DVector<f64>,
}

impl DiscreteDistribution {
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptySampleSet);
        }
        if weights.iter().any(|&w| !(w.is_finite() && w >= 0.0)) {
            return Err(Error::invalid(
                "distribution weights must be finite and >= 0",
            ));
        }
        let total = weights.sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "distribution weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySampleSet);
        }
        Ok(Self {
            weights: DVector::from_element(n, 1.0 / n as f64),
        })
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub mean: Vec<f64>,
    /// `κ₁ − (m−μ̂)ᵀΣ̂⁻¹(m−μ̂)`.
    pub slack_mean: f64,
    /// Smallest eigenvalue of `κ₂Σ̂ − E[(ξ−μ̂)(ξ−μ̂)ᵀ]`.
    pub slack_second_moment: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakDualityReport {
    /// `Σᵢ Pᵢ K̂(x, α, ξⁱ)`.
    pub primal_expectation: f64,
    /// `φᴺ(ν)`.
    pub dual_value: f64,
    pub holds: bool,
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_point(nu: &DualPoint, amb: &AmbiguityParams) -> Result<()> {
    ensure_dim("ambiguity dimension", nu.d() + 1, amb.dim())?;
    nu.check_dims(nu.d())
}

fn check_xi(xi: &DVector<f64>, d: usize) -> Result<()> {
    ensure_dim("xi", d + 1, xi.len())
}

fn check_samples(samples: &SampleSet, d: usize) -> Result<()> {
    ensure_dim("sample dimension", d, samples.d())
}

/// `K̂(x, α, ξ) = ψ(ξ_a − ξ_Bᵀx) + τ₂/(1−β)·[−xᵀξ_B − α]₊ + τ₁‖x‖² + τ₂α`.
pub fn evaluate_khat(
    x: &DVector<f64>,
    alpha: f64,
    xi: &DVector<f64>,
    model: &ModelParams,
) -> Result<f64> {
    let d = x.len();
    check_xi(xi, d)?;
    ensure_finite("x", x.iter().copied())?;
    ensure_finite("xi", xi.iter().copied())?;
    ensure_finite("alpha", [alpha])?;
    let xb = xi.rows(0, d);
    let port = xb.dot(x);
    let dev = xi[d] - port;
    Ok(model.psi.eval(dev)
        + model.excess_coef() * (-port - alpha).max(0.0)
        + model.tau1 * x.norm_squared()
        + model.tau2 * alpha)
}

/// `h₁(ν) = ⟨κ₂Σ̂, Λ⟩ + (Λᵀμ̂ + q)ᵀμ̂ + τ₁‖x‖² + τ₂α`.
pub fn evaluate_h1(nu: &DualPoint, amb: &AmbiguityParams, model: &ModelParams) -> Result<f64> {
    check_point(nu, amb)?;
    Ok(h1_unchecked(nu, amb, model))
}

pub(crate) fn h1_unchecked(nu: &DualPoint, amb: &AmbiguityParams, model: &ModelParams) -> f64 {
    let mu = amb.mu_hat();
    amb.kappa2() * amb.sigma_hat().dot(&nu.lambda)
        + (nu.lambda.tr_mul(mu) + &nu.q).dot(mu)
        + model.tau1 * nu.x.norm_squared()
        + model.tau2 * nu.alpha
}

/// `q + 2Λμ̂`, the vector inside the dual norm term.
pub(crate) fn norm_argument(
    q: &DVector<f64>,
    lambda: &DMatrix<f64>,
    amb: &AmbiguityParams,
) -> DVector<f64> {
    q + lambda * amb.mu_hat() * 2.0
}

/// `√κ₁ ‖Σ̂^{1/2}(q + 2Λμ̂)‖`.
pub fn evaluate_dual_norm_term(
    q: &DVector<f64>,
    lambda: &DMatrix<f64>,
    amb: &AmbiguityParams,
) -> Result<f64> {
    let m = amb.dim();
    ensure_dim("q", m, q.len())?;
    ensure_dim("lambda rows", m, lambda.nrows())?;
    ensure_dim("lambda cols", m, lambda.ncols())?;
    let v = norm_argument(q, lambda, amb);
    Ok(amb.kappa1().sqrt() * (amb.sigma_hat_sqrt() * v).norm())
}

/// `h₂,ξ(ν) = ψ(ξ_a − ξ_Bᵀx) − (Λᵀξ + q)ᵀξ + τ₂/(1−β)·[−xᵀξ_B − α]₊`.
///
/// Takes the whole `ν` because the excess-loss term depends on `α`.
pub fn evaluate_h2(nu: &DualPoint, xi: &DVector<f64>, model: &ModelParams) -> Result<f64> {
    let d = nu.d();
    nu.check_dims(d)?;
    check_xi(xi, d)?;
    let port = xi.rows(0, d).dot(&nu.x);
    let dev = xi[d] - port;
    let quad = (nu.lambda.tr_mul(xi) + &nu.q).dot(xi);
    Ok(model.psi.eval(dev) - quad + model.excess_coef() * (-port - nu.alpha).max(0.0))
}

/// `h_ξ(ν)` for a single scenario.
pub fn evaluate_h(
    nu: &DualPoint,
    xi: &DVector<f64>,
    amb: &AmbiguityParams,
    model: &ModelParams,
) -> Result<f64> {
    Ok(evaluate_h1(nu, amb, model)?
        + evaluate_dual_norm_term(&nu.q, &nu.lambda, amb)?
        + evaluate_h2(nu, xi, model)?)
}

/// Per-scenario pieces shared by the exact and smoothed objectives.
pub(crate) struct ScenarioTerms {
    /// `ξ_aⁱ − ξ_Bⁱᵀx`
    pub deviation: DVector<f64>,
    /// `−xᵀξ_Bⁱ − α`
    pub excess: DVector<f64>,
    /// `(Λᵀξⁱ + q)ᵀξⁱ`
    pub quadratic: DVector<f64>,
}

impl ScenarioTerms {
    pub fn compute(nu: &DualPoint, samples: &SampleSet) -> Self {
        let xi = samples.matrix();
        let d = samples.d();
        let port = xi.columns(0, d) * &nu.x;
        let deviation = xi.column(d) - &port;
        let excess = port.map(|p| -p - nu.alpha);
        let xl = xi * &nu.lambda;
        let quadratic = DVector::from_fn(xi.nrows(), |i, _| xl.row(i).dot(&xi.row(i))) + xi * &nu.q;
        Self {
            deviation,
            excess,
            quadratic,
        }
    }
}

/// Values `h_{ξⁱ}(ν)` for every scenario.
pub fn evaluate_h_all(
    nu: &DualPoint,
    samples: &SampleSet,
    amb: &AmbiguityParams,
    model: &ModelParams,
) -> Result<DVector<f64>> {
    check_point(nu, amb)?;
    check_samples(samples, nu.d())?;
    let common = h1_unchecked(nu, amb, model) + evaluate_dual_norm_term(&nu.q, &nu.lambda, amb)?;
    let terms = ScenarioTerms::compute(nu, samples);
    let c = model.excess_coef();
    Ok(DVector::from_fn(samples.len(), |i, _| {
        common + model.psi.eval(terms.deviation[i]) - terms.quadratic[i]
            + c * terms.excess[i].max(0.0)
    }))
}

/// `φᴺ(ν) = maxᵢ h_{ξⁱ}(ν)` together with the first maximizing index.
pub fn evaluate_phi_n(
    nu: &DualPoint,
    samples: &SampleSet,
    amb: &AmbiguityParams,
    model: &ModelParams,
) -> Result<(f64, usize)> {
    let values = evaluate_h_all(nu, samples, amb, model)?;
    let (mut best, mut arg) = (values[0], 0);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            arg = i;
        }
    }
    if !best.is_finite() {
        return Err(Error::numerical("discretized objective is not finite"));
    }
    Ok((best, arg))
}

/// Minimizer `α*` of the sample CVaR expression and the resulting value, from sorted losses.
pub fn cvar_from_losses(losses: &[f64], beta: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!(
            "beta must lie in (0, 1), got {beta}"
        )));
    }
    if losses.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    ensure_finite("losses", losses.iter().copied())?;
    let n = losses.len();
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let tail = (1.0 - beta) * n as f64;
    // Any α between the k-th and (k+1)-th largest loss is optimal when `tail` is an integer,
    // so the rounding slack only guards against representation error.
    let k = ((tail - 1e-9).ceil() as usize).clamp(1, n);
    let alpha = sorted[k - 1];
    let excess: f64 = sorted.iter().map(|&l| (l - alpha).max(0.0)).sum();
    Ok((alpha, alpha + excess / tail))
}

/// Sample CVaR `min_α α + 1/((1−β)N) Σᵢ [−xᵀξ_Bⁱ − α]₊`.
pub fn cvar_discrete(x: &DVector<f64>, samples: &SampleSet, beta: f64) -> Result<f64> {
    ensure_dim("x", samples.d(), x.len())?;
    let losses = samples.losses(x);
    cvar_from_losses(losses.as_slice(), beta).map(|(_, v)| v)
}

/// Checks a discrete distribution against both moment constraints of the ambiguity set.
pub fn check_moment_feasibility(
    dist: &DiscreteDistribution,
    samples: &SampleSet,
    amb: &AmbiguityParams,
) -> Result<FeasibilityReport> {
    ensure_dim("distribution support", samples.len(), dist.weights().len())?;
    ensure_dim("scenario dimension", amb.dim(), samples.matrix().ncols())?;
    let xi = samples.matrix();
    let w = dist.weights();
    let mean = xi.tr_mul(w);
    let shift = &mean - amb.mu_hat();
    let mahalanobis = shift.dot(&amb.solve_sigma(&shift));
    let slack_mean = amb.kappa1() - mahalanobis;

    let mut centered = xi.clone();
    for mut row in centered.row_iter_mut() {
        row -= amb.mu_hat().transpose();
    }
    let mut weighted = centered.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let second = symmetrize(&(centered.transpose() * weighted));
    let gap = symmetrize(&(amb.sigma_hat() * amb.kappa2() - second));
    let slack_second_moment = SymmetricEigen::new(gap).eigenvalues.min();

    Ok(FeasibilityReport {
        mean: mean.iter().copied().collect(),
        slack_mean,
        slack_second_moment,
        feasible: slack_mean >= -FEASIBILITY_TOL && slack_second_moment >= -FEASIBILITY_TOL,
    })
}

/// Compares the expected loss under `dist` with the dual bound `φᴺ(ν)`.
///
/// The bound holds for every `ν ∈ 𝒱` whenever `dist` lies in the ambiguity set.
pub fn weak_duality_check(
    nu: &DualPoint,
    dist: &DiscreteDistribution,
    samples: &SampleSet,
    amb: &AmbiguityParams,
    model: &ModelParams,
) -> Result<WeakDualityReport> {
    ensure_dim("distribution support", samples.len(), dist.weights().len())?;
    let (dual_value, _) = evaluate_phi_n(nu, samples, amb, model)?;
    let mut primal_expectation = 0.0;
    for (i, &p) in dist.weights().iter().enumerate() {
        primal_expectation += p * evaluate_khat(&nu.x, nu.alpha, &samples.row(i), model)?;
    }
    Ok(WeakDualityReport {
        primal_expectation,
        dual_value,
        holds: primal_expectation <= dual_value + 1e-6 * (1.0 + dual_value.abs()),
    })
}
