#![allow(dead_code)]

use drcvar::data::moments_of;
use drcvar::{AmbiguityParams, DualPoint, ModelParams, PsiKind, SampleSet};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

pub fn random_samples(rng: &mut impl Rng, n: usize, d: usize, scale: f64) -> SampleSet {
    SampleSet::new(DMatrix::from_fn(n, d + 1, |_, _| {
        rng.random_range(-scale..scale)
    }))
    .unwrap()
}

/// Ambiguity set centered on the empirical moments of `samples`.
pub fn empirical_ambiguity(samples: &SampleSet, kappa1: f64, kappa2: f64) -> AmbiguityParams {
    moments_of(samples.matrix())
        .unwrap()
        .ambiguity(kappa1, kappa2)
        .unwrap()
}

pub fn random_simplex(rng: &mut impl Rng, d: usize) -> DVector<f64> {
    let v = DVector::from_fn(d, |_, _| -rng.random_range(1e-9f64..1.0).ln());
    let s = v.sum();
    v / s
}

/// A point of the feasible set with a random PSD `Λ`.
pub fn random_feasible(rng: &mut impl Rng, d: usize, scale: f64) -> DualPoint {
    let m = d + 1;
    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-scale..scale));
    DualPoint::new(
        random_simplex(rng, d),
        rng.random_range(-scale..scale),
        uniform_vec(rng, m, scale),
        &a * a.transpose(),
    )
    .unwrap()
}

/// An arbitrary point, generally outside the feasible set; `Λ` is symmetric.
pub fn random_point(rng: &mut impl Rng, d: usize, scale: f64) -> DualPoint {
    let m = d + 1;
    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-scale..scale));
    DualPoint::new(
        uniform_vec(rng, d, scale),
        rng.random_range(-scale..scale),
        uniform_vec(rng, m, scale),
        (&a + a.transpose()) * 0.5,
    )
    .unwrap()
}

pub fn random_model(rng: &mut impl Rng, psi: PsiKind) -> ModelParams {
    ModelParams::new(
        rng.random_range(0.0..0.1),
        rng.random_range(0.0..0.1),
        rng.random_range(0.5..0.99),
        psi,
    )
    .unwrap()
}

/// Euclidean projection onto the simplex by enumerating every support set and
/// keeping the best point that satisfies the KKT conditions.
pub fn simplex_oracle(v: &DVector<f64>) -> DVector<f64> {
    let d = v.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 1u32..(1 << d) {
        let support: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
        let k = support.len() as f64;
        let shift = (support.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / k;
        let mut x = DVector::zeros(d);
        let mut ok = true;
        for i in 0..d {
            if mask & (1 << i) != 0 {
                x[i] = v[i] - shift;
                ok &= x[i] >= -1e-14;
            } else {
                ok &= v[i] - shift <= 1e-14;
            }
        }
        if ok {
            let dist = (&x - v).norm_squared();
            if best.as_ref().is_none_or(|(b, _)| dist < *b) {
                best = Some((dist, x));
            }
        }
    }
    best.expect("some support satisfies KKT").1
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.min()
}
