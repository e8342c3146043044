mod common;

use common::*;
use drcvar::model::{
    cvar_discrete, cvar_from_losses, evaluate_h, evaluate_h2, evaluate_khat, evaluate_phi_n,
};
use drcvar::smoothing::{smooth_phi, smooth_plus};
use drcvar::{PsiKind, SampleSet, SmoothingParam};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn psi_strategy() -> impl Strategy<Value = PsiKind> {
    prop_oneof![Just(PsiKind::Squared), Just(PsiKind::Absolute)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn h_is_jointly_convex(seed in any::<u64>(), d in 1usize..5, psi in psi_strategy(), t in 0.0f64..1.0) {
        let mut r = rng(seed);
        let samples = random_samples(&mut r, 8, d, 0.05);
        let amb = empirical_ambiguity(&samples, 0.1, 1.0);
        let model = random_model(&mut r, psi);
        let a = random_feasible(&mut r, d, 1.0);
        let b = random_feasible(&mut r, d, 1.0);
        let xi = samples.row(r.random_range(0..samples.len()));
        let mid = a.lerp(&b, t);
        let lhs = evaluate_h(&mid, &xi, &amb, &model).unwrap();
        let ha = evaluate_h(&a, &xi, &amb, &model).unwrap();
        let hb = evaluate_h(&b, &xi, &amb, &model).unwrap();
        let rhs = t * ha + (1.0 - t) * hb;
        prop_assert!(lhs <= rhs + 1e-10 * (1.0 + rhs.abs()), "{lhs} > {rhs}");
    }

    #[test]
    fn smoothed_objective_is_convex(seed in any::<u64>(), d in 1usize..4, t in 0.0f64..1.0, log_mu in -4.0f64..0.0) {
        let mut r = rng(seed);
        let samples = random_samples(&mut r, 10, d, 0.05);
        let amb = empirical_ambiguity(&samples, 0.1, 1.0);
        let model = random_model(&mut r, PsiKind::Absolute);
        let mu = SmoothingParam::new(10f64.powf(log_mu)).unwrap();
        let a = random_feasible(&mut r, d, 1.0);
        let b = random_feasible(&mut r, d, 1.0);
        let f = |p: &drcvar::DualPoint| smooth_phi(p, &samples, mu, &amb, &model).unwrap();
        let lhs = f(&a.lerp(&b, t));
        let rhs = t * f(&a) + (1.0 - t) * f(&b);
        prop_assert!(lhs <= rhs + 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn phi_n_ignores_order_and_duplicates(seed in any::<u64>(), d in 1usize..4, n in 2usize..12) {
        let mut r = rng(seed);
        let samples = random_samples(&mut r, n, d, 0.05);
        let amb = empirical_ambiguity(&samples, 0.1, 1.0);
        let model = random_model(&mut r, PsiKind::Squared);
        let nu = random_feasible(&mut r, d, 1.0);
        let (base, _) = evaluate_phi_n(&nu, &samples, &amb, &model).unwrap();

        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        order.push(r.random_range(0..n));
        let m = samples.matrix();
        let shuffled = DMatrix::from_fn(order.len(), d + 1, |i, j| m[(order[i], j)]);
        let other = SampleSet::new(shuffled).unwrap();
        let (value, _) = evaluate_phi_n(&nu, &other, &amb, &model).unwrap();
        prop_assert_eq!(base, value);
    }

    #[test]
    fn khat_decomposes_into_h2(seed in any::<u64>(), d in 1usize..6, psi in psi_strategy()) {
        let mut r = rng(seed);
        let model = random_model(&mut r, psi);
        let nu = random_point(&mut r, d, 1.0);
        let xi = uniform_vec(&mut r, d + 1, 0.1);
        let quad = (nu.lambda.tr_mul(&xi) + &nu.q).dot(&xi);
        let lhs = evaluate_h2(&nu, &xi, &model).unwrap()
            + model.tau1 * nu.x.norm_squared()
            + model.tau2 * nu.alpha
            + quad;
        let rhs = evaluate_khat(&nu.x, nu.alpha, &xi, &model).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn cvar_is_positively_homogeneous(seed in any::<u64>(), d in 1usize..5, n in 1usize..40, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let samples = random_samples(&mut r, n, d, 0.05);
        let x = random_simplex(&mut r, d);
        let beta = r.random_range(0.5..0.99);
        let scaled = SampleSet::new(samples.matrix() * c).unwrap();
        let v = cvar_discrete(&x, &samples, beta).unwrap();
        let vs = cvar_discrete(&x, &scaled, beta).unwrap();
        prop_assert!((vs - c * v).abs() <= 1e-10 * (1.0 + (c * v).abs()));
    }

    #[test]
    fn cvar_never_below_mean_loss(seed in any::<u64>(), n in 1usize..60) {
        let mut r = rng(seed);
        let losses: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let beta = r.random_range(0.05..0.99);
        let (alpha, value) = cvar_from_losses(&losses, beta).unwrap();
        let mean = losses.iter().sum::<f64>() / n as f64;
        let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(value >= mean - 1e-12);
        prop_assert!(value <= max + 1e-12);
        prop_assert!(alpha <= max);
    }

    #[test]
    fn smooth_plus_nondecreasing_in_mu(t in -5.0f64..5.0, mu1 in 1e-6f64..1.0, mu2 in 1e-6f64..1.0) {
        let (lo, hi) = if mu1 <= mu2 { (mu1, mu2) } else { (mu2, mu1) };
        prop_assert!(smooth_plus(t, lo) <= smooth_plus(t, hi) + 1e-15);
    }
}
