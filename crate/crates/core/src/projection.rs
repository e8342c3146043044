//! Euclidean projection onto `𝒱 = Δ_d × ℝ × ℝ^{d+1} × S₊^{d+1}`, block by block.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{ensure_finite, Error, Result};
use crate::model::{symmetrize, DualPoint};

/// Block sizes of the feasible set for `d` assets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeasibleSetSpec {
    d: usize,
}

impl FeasibleSetSpec {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("asset count must be >= 1"));
        }
        Ok(Self { d })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Dimension of the `q` vector and of the `Λ` matrix.
    pub fn scenario_dim(&self) -> usize {
        self.d + 1
    }

    pub fn contains(&self, nu: &DualPoint, tol: f64) -> bool {
        if nu.check_dims(self.d).is_err() {
            return false;
        }
        let on_simplex =
            nu.x.iter().all(|&v| v >= -tol) && (nu.x.sum() - 1.0).abs() <= tol.max(1e-10);
        let sym = (&nu.lambda - nu.lambda.transpose()).amax() <= 1e-12;
        on_simplex && sym && min_eigenvalue(&nu.lambda) >= -tol
    }
}

/// Projection onto the probability simplex by sorting and thresholding.
pub fn project_simplex(v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.is_empty() {
        return Err(Error::invalid(
            "cannot project an empty vector onto the simplex",
        ));
    }
    ensure_finite("simplex input", v.iter().copied())?;
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &vk) in sorted.iter().enumerate() {
        cumsum += vk;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if vk - candidate > 0.0 {
            theta = candidate;
        }
    }
    Ok(v.map(|vi| (vi - theta).max(0.0)))
}

/// Frobenius-nearest symmetric PSD matrix: symmetrize, then clamp negative eigenvalues to zero.
pub fn project_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::invalid(format!(
            "PSD projection needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite("PSD input", m.iter().copied())?;
    let sym = symmetrize(m);
    let eig = SymmetricEigen::try_new(sym.clone(), f64::EPSILON, 10_000).ok_or_else(|| {
        Error::numerical(format!(
            "symmetric eigensolver did not converge on a {}x{} matrix (Frobenius norm {:e})",
            sym.nrows(),
            sym.ncols(),
            sym.norm()
        ))
    })?;
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(sym);
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    Ok(symmetrize(
        &(v * DMatrix::from_diagonal(&clamped) * v.transpose()),
    ))
}

/// Projection of a full dual point: simplex on `x`, identity on `α` and `q`, PSD on `Λ`.
pub fn project_feasible(nu: &DualPoint) -> Result<DualPoint> {
    nu.check_dims(nu.d())?;
    Ok(DualPoint {
        x: project_simplex(&nu.x)?,
        alpha: nu.alpha,
        q: nu.q.clone(),
        lambda: project_psd(&nu.lambda)?,
    })
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}
