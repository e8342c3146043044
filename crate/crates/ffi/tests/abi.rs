use std::ffi::{CStr, CString};
use std::ptr;

use drcvar_ffi::*;

fn last_error() -> String {
    let p = drcvar_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn synthetic(assets: usize, days: usize) -> *mut DrcvarPanel {
    let mut panel = ptr::null_mut();
    assert_eq!(
        unsafe { drcvar_panel_synthetic(assets, days, 7, &mut panel) },
        DrcvarStatus::Ok
    );
    panel
}

fn small_options(model: DrcvarModel) -> DrcvarOptions {
    DrcvarOptions {
        model,
        window: 40,
        hold: 10,
        max_outer_iters: 20,
        max_inner_iters: 200,
        ..drcvar_options_default()
    }
}

#[test]
fn panel_lifecycle() {
    let panel = synthetic(3, 60);
    unsafe {
        assert_eq!(drcvar_panel_n_days(panel), 60);
        assert_eq!(drcvar_panel_n_assets(panel), 3);
        drcvar_panel_free(panel);
        drcvar_panel_free(ptr::null_mut());
        assert_eq!(drcvar_panel_n_days(ptr::null()), 0);
    }
}

#[test]
fn panel_from_arrays_validates_returns() {
    let index = [0.01, -0.02, 0.005];
    let assets = [0.01, 0.02, -0.01, 0.0, 0.003, 0.004];
    let mut panel = ptr::null_mut();
    unsafe {
        assert_eq!(
            drcvar_panel_from_arrays(3, 2, index.as_ptr(), assets.as_ptr(), &mut panel),
            DrcvarStatus::Ok
        );
        assert_eq!(drcvar_panel_n_assets(panel), 2);
        drcvar_panel_free(panel);

        let bad = [0.01, -1.5, 0.0];
        let mut other = ptr::null_mut();
        assert_eq!(
            drcvar_panel_from_arrays(3, 2, bad.as_ptr(), assets.as_ptr(), &mut other),
            DrcvarStatus::Data
        );
        assert!(other.is_null());
        assert!(!last_error().is_empty());
    }
}

#[test]
fn null_arguments_are_reported() {
    unsafe {
        assert_eq!(
            drcvar_panel_load_csv(ptr::null(), ptr::null_mut()),
            DrcvarStatus::InvalidArgument
        );
        assert!(last_error().contains("null"));
        let opts = drcvar_options_default();
        let mut sol = ptr::null_mut();
        assert_eq!(
            drcvar_solve(ptr::null(), &opts, 0, 10, &mut sol),
            DrcvarStatus::InvalidArgument
        );
    }
}

#[test]
fn missing_csv_is_a_data_error() {
    let path = CString::new("/nonexistent/returns.csv").unwrap();
    let mut panel = ptr::null_mut();
    let status = unsafe { drcvar_panel_load_csv(path.as_ptr(), &mut panel) };
    assert_eq!(status, DrcvarStatus::Data);
    assert!(last_error().contains("returns.csv"));
}

#[test]
fn solve_returns_simplex_weights() {
    let panel = synthetic(3, 60);
    let opts = small_options(DrcvarModel::DrcvarL2);
    let mut sol = ptr::null_mut();
    unsafe {
        assert_eq!(
            drcvar_solve(panel, &opts, 0, 40, &mut sol),
            DrcvarStatus::Ok
        );
        let mut w = [0.0; 3];
        assert_eq!(
            drcvar_solution_weights(sol, w.as_mut_ptr(), 3),
            DrcvarStatus::Ok
        );
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(w.iter().all(|&v| v >= 0.0));
        assert!(drcvar_solution_objective(sol).is_finite());
        let mut short = [0.0; 2];
        assert_eq!(
            drcvar_solution_weights(sol, short.as_mut_ptr(), 2),
            DrcvarStatus::InvalidArgument
        );
        drcvar_solution_free(sol);
        drcvar_panel_free(panel);
    }
}

#[test]
fn solve_rejects_bad_rows_and_params() {
    let panel = synthetic(2, 30);
    let mut sol = ptr::null_mut();
    unsafe {
        let opts = small_options(DrcvarModel::TeL2);
        assert_eq!(
            drcvar_solve(panel, &opts, 10, 40, &mut sol),
            DrcvarStatus::Validation
        );
        let opts = DrcvarOptions {
            beta: 1.0,
            ..small_options(DrcvarModel::DrcvarL2)
        };
        assert_eq!(
            drcvar_solve(panel, &opts, 0, 20, &mut sol),
            DrcvarStatus::Validation
        );
        assert!(sol.is_null());
        drcvar_panel_free(panel);
    }
}

#[test]
fn backtest_report_json() {
    let panel = synthetic(3, 70);
    let opts = small_options(DrcvarModel::TeL2);
    let mut report = ptr::null_mut();
    unsafe {
        assert_eq!(drcvar_backtest(panel, &opts, &mut report), DrcvarStatus::Ok);
        assert_eq!(drcvar_report_t_bar(report), 3);
        assert!(drcvar_report_tei(report) >= 0.0);
        assert!(drcvar_report_teo(report) >= 0.0);
        let mut json = ptr::null_mut();
        assert_eq!(drcvar_report_json(report, &mut json), DrcvarStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        drcvar_string_free(json);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["t_bar"], 3);
        assert_eq!(value["model"], "te-l2");
        drcvar_report_free(report);
        drcvar_panel_free(panel);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/drcvar.h")).unwrap();
    for name in [
        "drcvar_last_error",
        "drcvar_options_default",
        "drcvar_panel_load_csv",
        "drcvar_panel_from_arrays",
        "drcvar_solve",
        "drcvar_backtest",
        "drcvar_report_json",
        "drcvar_string_free",
        "typedef struct DrcvarPanel DrcvarPanel",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
