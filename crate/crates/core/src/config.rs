//! Run configuration: defaults, overridden by a JSON file with flat dotted
//! keys, overridden by individual `key=value` settings.
//!
//! ```json
//! { "model.tau1": 2e-4, "spg.max_outer_iters": 500, "backtest.model": "scvar-l2" }
//! ```

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::backtest::{BacktestConfig, ModelId};
use crate::baselines::{BaselineParams, StepRule};
use crate::data::SampleMode;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::spg::{SpgParams, StartKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model_id: ModelId,
    pub model: ModelParams,
    pub kappa1: f64,
    pub kappa2: f64,
    pub spg: SpgParams,
    pub baseline: BaselineParams,
    pub window: usize,
    pub hold: usize,
    /// Draw Gaussian scenarios instead of using the window rows.
    pub monte_carlo: bool,
    pub mc_count: usize,
    pub mc_seed: u64,
    pub start: StartKind,
    pub data_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bt = BacktestConfig::default();
        Self {
            model_id: bt.model_id,
            model: bt.model,
            kappa1: bt.kappa1,
            kappa2: bt.kappa2,
            spg: bt.spg,
            baseline: bt.baseline,
            window: bt.window,
            hold: bt.hold,
            monte_carlo: false,
            mc_count: 1000,
            mc_seed: 0,
            start: bt.start,
            data_path: None,
        }
    }
}

/// Every key accepted by [`RunConfig::set`].
pub const KEYS: &[&str] = &[
    "model.tau1",
    "model.tau2",
    "model.beta",
    "ambiguity.kappa1",
    "ambiguity.kappa2",
    "spg.alpha0",
    "spg.sigma",
    "spg.rho",
    "spg.mu0",
    "spg.eta",
    "spg.omega",
    "spg.epsilon",
    "spg.n0",
    "spg.max_outer_iters",
    "spg.max_inner_iters",
    "spg.mu_floor",
    "spg.max_backtracks",
    "spg.start",
    "baseline.max_iters",
    "baseline.step_rule",
    "baseline.tolerance",
    "baseline.step0",
    "backtest.model",
    "backtest.window",
    "backtest.hold",
    "sample.mode",
    "sample.count",
    "sample.seed",
    "data.path",
];

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::Config(format!("`{key}` expects a number, got {v}")))
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    v.as_u64()
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::Config(format!("`{key}` expects a non-negative integer, got {v}")))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::Config(format!("`{key}` expects a string, got {v}")))
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_json_str(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn apply_json_str(&mut self, text: &str) -> Result<()> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        let Value::Object(map) = value else {
            return Err(Error::Config(
                "config must be a JSON object with dotted keys".into(),
            ));
        };
        for (key, v) in &map {
            self.set(key, v)?;
        }
        Ok(())
    }

    /// Applies `key=value`; the value is read as JSON when possible, else as a string.
    pub fn set_str(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        self.set(key.trim(), &value)
    }

    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        match key {
            "model.tau1" => self.model.tau1 = as_f64(key, v)?,
            "model.tau2" => self.model.tau2 = as_f64(key, v)?,
            "model.beta" => self.model.beta = as_f64(key, v)?,
            "ambiguity.kappa1" => self.kappa1 = as_f64(key, v)?,
            "ambiguity.kappa2" => self.kappa2 = as_f64(key, v)?,
            "spg.alpha0" => self.spg.alpha0 = as_f64(key, v)?,
            "spg.sigma" => self.spg.sigma = as_f64(key, v)?,
            "spg.rho" => self.spg.rho = as_f64(key, v)?,
            "spg.mu0" => self.spg.mu0 = as_f64(key, v)?,
            "spg.eta" => self.spg.eta = as_f64(key, v)?,
            "spg.omega" => self.spg.omega = as_f64(key, v)?,
            "spg.epsilon" => self.spg.epsilon = as_f64(key, v)?,
            "spg.n0" => self.spg.n0 = as_usize(key, v)?,
            "spg.max_outer_iters" => self.spg.max_outer_iters = as_usize(key, v)?,
            "spg.max_inner_iters" => self.spg.max_inner_iters = as_usize(key, v)?,
            "spg.mu_floor" => self.spg.mu_floor = as_f64(key, v)?,
            "spg.max_backtracks" => {
                self.spg.max_backtracks = u32::try_from(as_usize(key, v)?)
                    .map_err(|_| Error::Config(format!("`{key}` is too large")))?
            }
            "spg.start" => {
                self.start = match as_str(key, v)? {
                    "zero" => StartKind::Zero,
                    "replication" => StartKind::Replication,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown start `{other}` (zero, replication)"
                        )))
                    }
                }
            }
            "baseline.max_iters" => self.baseline.max_iters = as_usize(key, v)?,
            "baseline.step_rule" => {
                self.baseline.step_rule = match as_str(key, v)? {
                    "armijo" => StepRule::Armijo,
                    "diminishing" => StepRule::Diminishing,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown step rule `{other}` (armijo, diminishing)"
                        )))
                    }
                }
            }
            "baseline.tolerance" => self.baseline.tolerance = as_f64(key, v)?,
            "baseline.step0" => self.baseline.step0 = as_f64(key, v)?,
            "backtest.model" => self.model_id = as_str(key, v)?.parse()?,
            "backtest.window" => self.window = as_usize(key, v)?,
            "backtest.hold" => self.hold = as_usize(key, v)?,
            "sample.mode" => {
                self.monte_carlo = match as_str(key, v)? {
                    "historical" => false,
                    "gaussian_mc" => true,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown sample mode `{other}` (historical, gaussian_mc)"
                        )))
                    }
                }
            }
            "sample.count" => self.mc_count = as_usize(key, v)?,
            "sample.seed" => self.mc_seed = as_usize(key, v)? as u64,
            "data.path" => self.data_path = Some(PathBuf::from(as_str(key, v)?)),
            _ => {
                return Err(Error::Config(format!(
                    "unknown config key `{key}`; accepted keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            psi: self.model_id.psi(),
            ..self.model
        }
    }

    pub fn sample_mode(&self) -> SampleMode {
        if self.monte_carlo {
            SampleMode::GaussianMc {
                count: self.mc_count,
                seed: self.mc_seed,
            }
        } else {
            SampleMode::Historical
        }
    }

    pub fn backtest(&self) -> BacktestConfig {
        BacktestConfig {
            window: self.window,
            hold: self.hold,
            model_id: self.model_id,
            model: self.model,
            kappa1: self.kappa1,
            kappa2: self.kappa2,
            spg: self.spg,
            baseline: self.baseline,
            sample_mode: self.sample_mode(),
            start: self.start,
        }
    }

    /// Validates every field that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.model_params().validate()?;
        self.spg.validate()?;
        self.baseline.validate()?;
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
        if self.hold < 1 {
            return Err(Error::invalid("hold must be >= 1"));
        }
        if self.window < 2 {
            return Err(Error::invalid("window must be >= 2"));
        }
        if self.monte_carlo && self.mc_count == 0 {
            return Err(Error::invalid("Monte Carlo sample count must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_encode_reference_settings() {
        let c = RunConfig::default();
        assert_eq!((c.kappa1, c.kappa2), (0.1, 1.0));
        assert_eq!((c.window, c.hold), (3500, 21));
        assert_eq!(c.spg, SpgParams::default());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn file_then_flag_precedence() {
        let mut c =
            RunConfig::from_json_str(r#"{"model.tau1": 0.0004, "backtest.model": "te-l2"}"#)
                .unwrap();
        assert_eq!(c.model.tau1, 4e-4);
        assert_eq!(c.model_id, ModelId::TeL2);
        c.set_str("model.tau1=0.0008").unwrap();
        assert_eq!(c.model.tau1, 8e-4);
        c.set_str("backtest.model=scvar-l1").unwrap();
        assert_eq!(c.model_params().psi, crate::model::PsiKind::Absolute);
    }

    #[test]
    fn unknown_and_mistyped_keys_rejected() {
        assert!(matches!(
            RunConfig::from_json_str(r#"{"model.tau3": 1}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_json_str(r#"{"spg.n0": -1}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_json_str(r#"[1, 2]"#),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::default().set_str("novalue").is_err());
    }

    #[test]
    fn sample_mode_keys() {
        let c = RunConfig::from_json_str(
            r#"{"sample.mode": "gaussian_mc", "sample.count": 50, "sample.seed": 3}"#,
        )
        .unwrap();
        assert_eq!(
            c.sample_mode(),
            SampleMode::GaussianMc { count: 50, seed: 3 }
        );
        let c = RunConfig::from_json_str(r#"{"sample.count": 50}"#).unwrap();
        assert_eq!(c.sample_mode(), SampleMode::Historical);
        assert!(RunConfig::from_json_str(r#"{"sample.mode": "bootstrap"}"#).is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let c = RunConfig::from_json_str(r#"{"model.beta": 1.5}"#).unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::from_json_str(r#"{"backtest.hold": 0}"#).unwrap();
        assert!(c.validate().is_err());
    }
}
