//! C ABI over the `drcvar` crate.
//!
//! Objects are opaque handles created by `drcvar_*_new`/`load`/`solve` calls and
//! released with the matching `*_free`. Every call returns a [`DrcvarStatus`];
//! on failure the message is available from [`drcvar_last_error`] on the same
//! thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use drcvar::backtest::{run_backtest, BacktestConfig, BacktestReport, ModelId};
use drcvar::baselines::{scvar_solve, te_l2_solve, BaselineParams};
use drcvar::data::{
    build_sample_set, estimate_moments, gen_synthetic, load_returns_csv, ReturnPanel, SampleMode,
    SyntheticSpec,
};
use drcvar::spg::{spg_solve, SolveStatus, SpgParams, StartKind};
use drcvar::{Error, ErrorKind, ModelParams};
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrcvarStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or a too-small output buffer.
    InvalidArgument = 1,
    Validation = 2,
    Data = 3,
    Numerical = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrcvarModel {
    DrcvarL2 = 0,
    DrcvarL1 = 1,
    ScvarL2 = 2,
    ScvarL1 = 3,
    TeL2 = 4,
}

impl From<DrcvarModel> for ModelId {
    fn from(m: DrcvarModel) -> Self {
        match m {
            DrcvarModel::DrcvarL2 => ModelId::DrcvarL2,
            DrcvarModel::DrcvarL1 => ModelId::DrcvarL1,
            DrcvarModel::ScvarL2 => ModelId::ScvarL2,
            DrcvarModel::ScvarL1 => ModelId::ScvarL1,
            DrcvarModel::TeL2 => ModelId::TeL2,
        }
    }
}

/// Solver and protocol settings. Obtain defaults from [`drcvar_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DrcvarOptions {
    pub model: DrcvarModel,
    pub tau1: f64,
    pub tau2: f64,
    pub beta: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub window: usize,
    pub hold: usize,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Nonzero selects the replication starting point, zero the all-zero one.
    pub replication_start: i32,
}

pub struct DrcvarPanel(ReturnPanel);

pub struct DrcvarSolution {
    weights: Vec<f64>,
    objective: f64,
    converged: bool,
}

pub struct DrcvarReport(BacktestReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DrcvarStatus {
    match e.kind() {
        ErrorKind::Validation => DrcvarStatus::Validation,
        ErrorKind::Data => DrcvarStatus::Data,
        ErrorKind::Numerical => DrcvarStatus::Numerical,
    }
}

enum Failure {
    Arg(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DrcvarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DrcvarStatus::Ok,
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            DrcvarStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            let status = status_of(&e);
            set_error(e.to_string());
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            DrcvarStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::Arg(format!("{what} is null")))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Arg("output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn drcvar_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn drcvar_options_default() -> DrcvarOptions {
    let bt = BacktestConfig::default();
    let spg = SpgParams::default();
    DrcvarOptions {
        model: DrcvarModel::DrcvarL2,
        tau1: bt.model.tau1,
        tau2: bt.model.tau2,
        beta: bt.model.beta,
        kappa1: bt.kappa1,
        kappa2: bt.kappa2,
        window: bt.window,
        hold: bt.hold,
        max_outer_iters: spg.max_outer_iters,
        max_inner_iters: spg.max_inner_iters,
        replication_start: 1,
    }
}

fn backtest_config(o: &DrcvarOptions) -> BacktestConfig {
    let mut cfg = BacktestConfig {
        window: o.window,
        hold: o.hold,
        model_id: o.model.into(),
        kappa1: o.kappa1,
        kappa2: o.kappa2,
        start: if o.replication_start != 0 {
            StartKind::Replication
        } else {
            StartKind::Zero
        },
        ..BacktestConfig::default()
    };
    cfg.model = ModelParams {
        tau1: o.tau1,
        tau2: o.tau2,
        beta: o.beta,
        ..cfg.model
    };
    cfg.spg.max_outer_iters = o.max_outer_iters;
    cfg.spg.max_inner_iters = o.max_inner_iters;
    cfg
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drcvar_panel_load_csv(
    path: *const c_char,
    out: *mut *mut DrcvarPanel,
) -> DrcvarStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure::Arg("path is null".into()));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure::Arg("path is not valid UTF-8".into()))?;
        store(out, DrcvarPanel(load_returns_csv(path)?))
    })
}

/// Builds a panel from `n_days` index returns and a row-major `n_days × n_assets` asset matrix.
///
/// # Safety
/// `index` must point to `n_days` doubles and `assets` to `n_days * n_assets` doubles.
#[no_mangle]
pub unsafe extern "C" fn drcvar_panel_from_arrays(
    n_days: usize,
    n_assets: usize,
    index: *const f64,
    assets: *const f64,
    out: *mut *mut DrcvarPanel,
) -> DrcvarStatus {
    guard(|| {
        if index.is_null() || assets.is_null() {
            return Err(Failure::Arg("return arrays must not be null".into()));
        }
        let len = n_days
            .checked_mul(n_assets)
            .ok_or_else(|| Failure::Arg("panel size overflows".into()))?;
        let index = std::slice::from_raw_parts(index, n_days);
        let assets = std::slice::from_raw_parts(assets, len);
        let panel = ReturnPanel::from_returns(
            DVector::from_column_slice(index),
            DMatrix::from_row_slice(n_days, n_assets, assets),
        )?;
        store(out, DrcvarPanel(panel))
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drcvar_panel_synthetic(
    n_assets: usize,
    n_days: usize,
    seed: u64,
    out: *mut *mut DrcvarPanel,
) -> DrcvarStatus {
    guard(|| {
        store(
            out,
            DrcvarPanel(gen_synthetic(&SyntheticSpec::new(n_assets, n_days, seed))?),
        )
    })
}

/// # Safety
/// `panel` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn drcvar_panel_n_days(panel: *const DrcvarPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.0.len())
}

/// # Safety
/// `panel` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn drcvar_panel_n_assets(panel: *const DrcvarPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.0.n_assets())
}

/// # Safety
/// `panel` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn drcvar_panel_free(panel: *mut DrcvarPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Fits the selected model on rows `[row_start, row_end)`.
///
/// # Safety
/// `panel` and `options` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drcvar_solve(
    panel: *const DrcvarPanel,
    options: *const DrcvarOptions,
    row_start: usize,
    row_end: usize,
    out: *mut *mut DrcvarSolution,
) -> DrcvarStatus {
    guard(|| {
        let panel = &deref(panel, "panel")?.0;
        let cfg = backtest_config(deref(options, "options")?);
        let model = cfg.model_params();
        model.validate()?;
        cfg.spg.validate()?;
        if row_start >= row_end || row_end > panel.len() {
            return Err(Failure::Core(Error::InvalidInput(format!(
                "rows {row_start}..{row_end} are not within 0..{}",
                panel.len()
            ))));
        }
        let rows = row_start..row_end;
        let samples = build_sample_set(panel, rows.clone(), SampleMode::Historical)?;
        let solution = match cfg.model_id {
            ModelId::DrcvarL2 | ModelId::DrcvarL1 => {
                let amb = estimate_moments(panel, rows)?.ambiguity(cfg.kappa1, cfg.kappa2)?;
                let nu0 = cfg.start.point(&samples, &model)?;
                let res = spg_solve(&nu0, &samples, &amb, &model, &cfg.spg)?;
                DrcvarSolution {
                    weights: res.nu_star.x.iter().copied().collect(),
                    objective: res.objective,
                    converged: res.status == SolveStatus::Converged,
                }
            }
            ModelId::ScvarL2 | ModelId::ScvarL1 => {
                let res = scvar_solve(&samples, &model, &cfg.baseline)?;
                DrcvarSolution {
                    weights: res.x.iter().copied().collect(),
                    objective: res.objective,
                    converged: res.status == drcvar::baselines::BaselineStatus::Converged,
                }
            }
            ModelId::TeL2 => {
                let res = te_l2_solve(&samples, model.tau1, &BaselineParams::te_l2())?;
                DrcvarSolution {
                    weights: res.x.iter().copied().collect(),
                    objective: res.objective,
                    converged: res.status == drcvar::baselines::BaselineStatus::Converged,
                }
            }
        };
        store(out, solution)
    })
}

/// Copies the weights into `buf`, which must hold at least as many entries as the panel has assets.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn drcvar_solution_weights(
    solution: *const DrcvarSolution,
    buf: *mut f64,
    len: usize,
) -> DrcvarStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        if buf.is_null() || len < s.weights.len() {
            return Err(Failure::Arg(format!(
                "weight buffer needs {} entries",
                s.weights.len()
            )));
        }
        std::slice::from_raw_parts_mut(buf, s.weights.len()).copy_from_slice(&s.weights);
        Ok(())
    })
}

/// Exact objective at the returned point, or NaN for a NULL handle.
///
/// # Safety
/// `solution` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn drcvar_solution_objective(solution: *const DrcvarSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.objective)
}

/// 1 if the solver met its stopping rule, 0 otherwise.
///
/// # Safety
/// `solution` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn drcvar_solution_converged(solution: *const DrcvarSolution) -> i32 {
    solution.as_ref().map_or(0, |s| s.converged as i32)
}

/// # Safety
/// `solution` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn drcvar_solution_free(solution: *mut DrcvarSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// # Safety
/// `panel` and `options` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drcvar_backtest(
    panel: *const DrcvarPanel,
    options: *const DrcvarOptions,
    out: *mut *mut DrcvarReport,
) -> DrcvarStatus {
    guard(|| {
        let panel = &deref(panel, "panel")?.0;
        let cfg = backtest_config(deref(options, "options")?);
        store(out, DrcvarReport(run_backtest(panel, &cfg)?))
    })
}

/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn drcvar_report_t_bar(report: *const DrcvarReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.t_bar)
}

/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn drcvar_report_tei(report: *const DrcvarReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.tei)
}

/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn drcvar_report_teo(report: *const DrcvarReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.teo)
}

/// The report as a JSON document. Release the string with [`drcvar_string_free`].
///
/// # Safety
/// `report` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drcvar_report_json(
    report: *const DrcvarReport,
    out: *mut *mut c_char,
) -> DrcvarStatus {
    guard(|| {
        let r = deref(report, "report")?;
        if out.is_null() {
            return Err(Failure::Arg("output pointer is null".into()));
        }
        let text = serde_json::to_string(&r.0).map_err(|e| Failure::Arg(e.to_string()))?;
        *out = CString::new(text)
            .map_err(|e| Failure::Arg(e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn drcvar_report_free(report: *mut DrcvarReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn drcvar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
