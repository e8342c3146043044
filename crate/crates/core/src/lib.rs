//! Distributionally robust index tracking with a CVaR penalty.
//!
//! The worst case of the tracking objective over a moment ambiguity set is
//! replaced by its Lagrangian dual, discretized on a finite scenario set, and
//! minimized with a smoothing projected gradient method. A rolling-window
//! backtest evaluates the resulting portfolios against baseline models.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
    }};
}

pub mod backtest;
pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod projection;
pub mod smoothing;
pub mod spg;

pub use error::{Error, ErrorKind, Result};
pub use model::{
    AmbiguityParams, DiscreteDistribution, DualPoint, FeasibilityReport, ModelParams, PsiKind,
    SampleSet,
};
pub use smoothing::SmoothingParam;
pub use spg::{spg_solve, SolveResult, SolveStatus, SpgParams};
