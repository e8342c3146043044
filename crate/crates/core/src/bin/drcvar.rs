use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use drcvar::backtest::{
    grid_product, grid_search, run_backtest, BacktestReport, ModelId, PAPER_GRID,
};
use drcvar::baselines::{scvar_solve, te_l2_objective, te_l2_solve, BaselineParams};
use drcvar::config::RunConfig;
use drcvar::data::{
    build_sample_set, estimate_moments, gen_synthetic, load_returns_csv, write_returns_csv,
    ReturnPanel, SyntheticSpec,
};
use drcvar::spg::{spg_solve, SolveStatus};
use drcvar::{Error, ErrorKind};

#[derive(Parser)]
#[command(
    name = "drcvar",
    version,
    about = "Distributionally robust CVaR index tracking"
)]
struct Cli {
    /// Worker threads for grid points; 1 gives bit-reproducible reductions.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic one-factor return panel.
    GenData(GenDataArgs),
    /// Fit one model on a panel.
    Solve(SolveArgs),
    /// Rolling-window backtest of one configuration.
    Backtest(BacktestArgs),
    /// Backtest every (tau1, tau2) grid point and select the lowest TEO.
    GridSearch(GridArgs),
    /// Backtest several models side by side.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    assets: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    days: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Day (0-based) from which loadings and volatilities are redrawn.
    #[arg(long)]
    shift_day: Option<usize>,
    /// Unit betas and no idiosyncratic noise.
    #[arg(long)]
    perfect: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON file with flat dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set spg.max_outer_iters=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    tau1: Option<f64>,
    #[arg(long)]
    tau2: Option<f64>,
    #[arg(long)]
    kappa1: Option<f64>,
    #[arg(long)]
    kappa2: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Row range `start..end` (0-based, end exclusive); defaults to the whole panel.
    #[arg(long)]
    rows: Option<String>,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Exit with the numerical-failure code unless the solver converged.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    hold: Option<usize>,
    /// Write zero for the wall-clock fields.
    #[arg(long)]
    omit_timings: bool,
}

#[derive(Args)]
struct BacktestArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    windows: WindowArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    windows: WindowArgs,
    /// Comma-separated values used for both tau1 and tau2.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    windows: WindowArgs,
    #[arg(long, default_value = "drcvar-l2,scvar-l2,te-l2")]
    models: String,
    /// Select tau1, tau2 per model by grid search instead of using the configured values.
    #[arg(long)]
    tune: bool,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

/// Models that need mixed-integer or nonconvex machinery and are not provided.
const UNAVAILABLE: [&str; 4] = ["mixed-0-1-lp", "te-l0", "lasso-sparse", "l2-lp"];

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Validation => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Backtest(a) => cmd_backtest(a),
        Command::GridSearch(a) => cmd_grid_search(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_gen_data(a: GenDataArgs) -> CliResult<u8> {
    let (assets, days) = (a.assets as usize, a.days as usize);
    let mut spec = if a.perfect {
        SyntheticSpec::perfect_replication(assets, days, a.seed)
    } else {
        SyntheticSpec::new(assets, days, a.seed)
    };
    if let Some(day) = a.shift_day {
        if day >= days {
            return Err(usage(format!(
                "--shift-day {day} is not below --days {days}"
            )));
        }
        spec = spec.with_shift(day);
    }
    let panel = gen_synthetic(&spec)?;
    write_returns_csv(&panel, &a.out)?;
    let idx = panel.index_returns();
    let mean = idx.mean();
    let var = idx.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / idx.len() as f64;
    println!(
        "wrote {}: d = {}, N_tol = {}, index variance = {var:.6e}",
        a.out.display(),
        panel.n_assets(),
        panel.len()
    );
    Ok(0)
}

fn load_config(c: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for s in &c.sets {
        cfg.set_str(s)?;
    }
    if let Some(m) = &c.model {
        cfg.model_id = m.parse()?;
    }
    if let Some(v) = c.tau1 {
        cfg.model.tau1 = v;
    }
    if let Some(v) = c.tau2 {
        cfg.model.tau2 = v;
    }
    if let Some(v) = c.kappa1 {
        cfg.kappa1 = v;
    }
    if let Some(v) = c.kappa2 {
        cfg.kappa2 = v;
    }
    if let Some(p) = &c.data {
        cfg.data_path = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_windows(cfg: &mut RunConfig, w: &WindowArgs) -> CliResult<()> {
    if let Some(v) = w.window {
        cfg.window = v;
    }
    if let Some(v) = w.hold {
        cfg.hold = v;
    }
    cfg.validate()?;
    Ok(())
}

fn load_panel(cfg: &RunConfig) -> CliResult<ReturnPanel> {
    let path = cfg
        .data_path
        .as_ref()
        .ok_or_else(|| usage("no data file given (use --data or the `data.path` config key)"))?;
    Ok(load_returns_csv(path)?)
}

fn parse_rows(text: &str, n: usize) -> CliResult<Range<usize>> {
    let (a, b) = text
        .split_once("..")
        .ok_or_else(|| usage(format!("--rows expects start..end, got `{text}`")))?;
    let start = if a.is_empty() { Ok(0) } else { a.parse() };
    let end = if b.is_empty() { Ok(n) } else { b.parse() };
    match (start, end) {
        (Ok(s), Ok(e)) if s + 2 <= e && e <= n => Ok(s..e),
        _ => Err(usage(format!(
            "--rows `{text}` is not a range of at least 2 rows within 0..{n}"
        ))),
    }
}

fn parse_grid(text: Option<&str>) -> CliResult<Vec<f64>> {
    let Some(text) = text else {
        return Ok(PAPER_GRID.to_vec());
    };
    let values: Result<Vec<f64>, _> = text.split(',').map(|v| v.trim().parse::<f64>()).collect();
    match values {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite() && *x >= 0.0) => Ok(v),
        _ => Err(usage(format!(
            "--grid `{text}` is not a list of non-negative numbers"
        ))),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| usage(format!("serialization: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| {
        Failure::from(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn write_trace(path: &Path, points: &[(f64, f64)]) -> CliResult<()> {
    let io_err = |e| {
        Failure::from(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    writeln!(out, "cpu_seconds,objective").map_err(io_err)?;
    for (t, v) in points {
        writeln!(out, "{t},{v}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn cmd_solve(a: SolveArgs) -> CliResult<u8> {
    let mut cfg = load_config(&a.common)?;
    if a.trace_out.is_some() {
        cfg.spg.record_trace = true;
    }
    let panel = load_panel(&cfg)?;
    let rows = match &a.rows {
        Some(r) => parse_rows(r, panel.len())?,
        None => 0..panel.len(),
    };
    let model = cfg.model_params();
    let samples = build_sample_set(&panel, rows.clone(), cfg.sample_mode())?;
    let names = panel.asset_names();
    let weights_json = |x: &nalgebra::DVector<f64>| -> serde_json::Value {
        names
            .iter()
            .zip(x.iter())
            .map(|(n, w)| (n.clone(), json!(w)))
            .collect()
    };

    let (report, trace, converged) = match cfg.model_id {
        ModelId::DrcvarL2 | ModelId::DrcvarL1 => {
            let amb = estimate_moments(&panel, rows.clone())?.ambiguity(cfg.kappa1, cfg.kappa2)?;
            let nu0 = cfg.start.point(&samples, &model)?;
            let res = spg_solve(&nu0, &samples, &amb, &model, &cfg.spg)?;
            let trace: Vec<(f64, f64)> = res
                .trace
                .iter()
                .flatten()
                .map(|p| (p.seconds, p.objective))
                .collect();
            let report = json!({
                "model": cfg.model_id,
                "rows": [rows.start, rows.end],
                "tau1": model.tau1,
                "tau2": model.tau2,
                "weights": weights_json(&res.nu_star.x),
                "status": res.status,
                "objective": res.objective,
                "smooth_objective": res.smooth_objective,
                "residual": res.residual,
                "mu_final": res.mu_final,
                "outer_iters": res.outer_iters,
                "inner_iters": res.inner_iters,
                "gradient_evals": res.gradient_evals,
                "function_evals": res.function_evals,
                "wall_time": res.wall_time,
                "dual_point": {
                    "alpha": res.nu_star.alpha,
                    "q": res.nu_star.q.as_slice(),
                    "lambda": res.nu_star.lambda.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
                },
            });
            (report, trace, res.status == SolveStatus::Converged)
        }
        ModelId::ScvarL2 | ModelId::ScvarL1 => {
            let res = scvar_solve(&samples, &model, &cfg.baseline)?;
            let report = json!({
                "model": cfg.model_id,
                "rows": [rows.start, rows.end],
                "tau1": model.tau1,
                "tau2": model.tau2,
                "weights": weights_json(&res.x),
                "status": res.status,
                "objective": res.objective,
                "alpha": res.alpha,
                "iterations": res.iterations,
                "wall_time": res.wall_time,
            });
            let converged = res.status == drcvar::baselines::BaselineStatus::Converged;
            (report, res.trace, converged)
        }
        ModelId::TeL2 => {
            let res = te_l2_solve(&samples, model.tau1, &BaselineParams::te_l2())?;
            let objective = te_l2_objective(&res.x, &samples, model.tau1)?;
            let report = json!({
                "model": cfg.model_id,
                "rows": [rows.start, rows.end],
                "tau1": model.tau1,
                "weights": weights_json(&res.x),
                "status": res.status,
                "objective": objective,
                "iterations": res.iterations,
                "wall_time": res.wall_time,
            });
            let converged = res.status == drcvar::baselines::BaselineStatus::Converged;
            (report, vec![(res.wall_time, objective)], converged)
        }
    };
    write_json(&a.out, &report)?;
    if let Some(path) = &a.trace_out {
        write_trace(path, &trace)?;
    }
    println!(
        "{} on rows {}..{}: status {}",
        cfg.model_id, rows.start, rows.end, report["status"]
    );
    if a.strict && !converged {
        return Err(Failure {
            code: 4,
            message: format!("solver did not converge (status {})", report["status"]),
        });
    }
    Ok(0)
}

fn finish_report(report: BacktestReport, omit: bool) -> BacktestReport {
    if omit {
        report.without_timings()
    } else {
        report
    }
}

fn cmd_backtest(a: BacktestArgs) -> CliResult<u8> {
    let mut cfg = load_config(&a.common)?;
    apply_windows(&mut cfg, &a.windows)?;
    let panel = load_panel(&cfg)?;
    let bt = cfg.backtest();
    bt.validate(panel.len())?;
    let report = finish_report(run_backtest(&panel, &bt)?, a.windows.omit_timings);
    write_json(&a.out, &report)?;
    println!(
        "{}: t_bar = {}, TEI = {:.6e}, TEO = {:.6e}",
        report.model, report.t_bar, report.tei, report.teo
    );
    Ok(0)
}

fn cmd_grid_search(a: GridArgs) -> CliResult<u8> {
    let mut cfg = load_config(&a.common)?;
    apply_windows(&mut cfg, &a.windows)?;
    let axis = parse_grid(a.grid.as_deref())?;
    let panel = load_panel(&cfg)?;
    let bt = cfg.backtest();
    bt.validate(panel.len())?;
    let mut result = grid_search(&panel, &bt, &grid_product(&axis, &axis))?;
    if a.windows.omit_timings {
        for row in &mut result.rows {
            row.report = row.report.clone().without_timings();
        }
    }
    let best = result.best_row();
    println!(
        "{}: {} grid points, best tau1 = {}, tau2 = {}, TEO = {:.6e}",
        cfg.model_id,
        result.rows.len(),
        best.tau1,
        best.tau2,
        best.report.teo
    );
    write_json(
        &a.out,
        &json!({"rows": result.rows, "best": result.best, "selected": best}),
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct CompareRow {
    model: ModelId,
    tau1: f64,
    tau2: f64,
    tei: f64,
    teo: f64,
    sigma2: Option<f64>,
    sharpe: Option<f64>,
    turnover: Option<f64>,
    cpu_seconds: f64,
}

fn cmd_compare(a: CompareArgs) -> CliResult<u8> {
    let mut cfg = load_config(&a.common)?;
    apply_windows(&mut cfg, &a.windows)?;
    let models: Vec<ModelId> = a
        .models
        .split(',')
        .map(|m| m.trim().parse::<ModelId>())
        .collect::<Result<_, _>>()?;
    if models.is_empty() {
        return Err(usage("--models is empty"));
    }
    let axis = parse_grid(a.grid.as_deref())?;
    let panel = load_panel(&cfg)?;
    for &m in &models {
        let mut c = cfg.clone();
        c.model_id = m;
        c.backtest().validate(panel.len())?;
    }

    let mut rows = Vec::new();
    for &m in &models {
        let mut c = cfg.clone();
        c.model_id = m;
        let bt = c.backtest();
        let report = if a.tune {
            let res = grid_search(&panel, &bt, &grid_product(&axis, &axis))?;
            let cpu: f64 = res.rows.iter().map(|r| r.report.cpu_seconds).sum();
            let mut best = res.best_row().report.clone();
            best.cpu_seconds = cpu;
            best
        } else {
            run_backtest(&panel, &bt)?
        };
        let report = finish_report(report, a.windows.omit_timings);
        println!(
            "{:<10} tau1 {:<8} tau2 {:<8} TEI {:.4e} TEO {:.4e}",
            m.as_str(),
            report.tau1,
            report.tau2,
            report.tei,
            report.teo
        );
        rows.push(CompareRow {
            model: m,
            tau1: report.tau1,
            tau2: report.tau2,
            tei: report.tei,
            teo: report.teo,
            sigma2: report.sigma2,
            sharpe: report.sharpe,
            turnover: report.turnover,
            cpu_seconds: report.cpu_seconds,
        });
    }
    write_json(&a.out, &json!({"rows": rows, "unavailable": UNAVAILABLE}))?;
    Ok(0)
}
