//! Return panels: CSV ingestion, moment estimation, scenario sets and a seeded
//! one-factor market generator.
//!
//! The CSV layout is `date,index,<asset_1>,…,<asset_d>` with ISO-8601 dates in
//! strictly increasing order and daily simple returns as decimals.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{symmetrize, AmbiguityParams, SampleSet};

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Daily index and asset returns on a common calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    asset_names: Vec<String>,
    index_returns: DVector<f64>,
    /// `N_tol × d`
    asset_returns: DMatrix<f64>,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        asset_names: Vec<String>,
        index_returns: DVector<f64>,
        asset_returns: DMatrix<f64>,
    ) -> Result<Self> {
        let n = dates.len();
        if n < 2 {
            return Err(Error::invalid(format!(
                "a panel needs at least 2 days, got {n}"
            )));
        }
        if asset_names.is_empty() {
            return Err(Error::invalid("a panel needs at least one asset"));
        }
        if index_returns.len() != n || asset_returns.nrows() != n {
            return Err(Error::invalid("dates and return rows differ in length"));
        }
        if asset_returns.ncols() != asset_names.len() {
            return Err(Error::invalid(
                "asset names and return columns differ in count",
            ));
        }
        for i in 1..n {
            if dates[i] <= dates[i - 1] {
                return Err(Error::Ordering {
                    row: i + 1,
                    date: dates[i].to_string(),
                    previous: dates[i - 1].to_string(),
                });
            }
        }
        let check = |row: usize, column: &str, v: f64| -> Result<()> {
            if !v.is_finite() {
                return Err(Error::Data {
                    row: row + 1,
                    column: column.to_string(),
                    message: format!("return {v} is not finite"),
                });
            }
            if v <= -1.0 {
                return Err(Error::Data {
                    row: row + 1,
                    column: column.to_string(),
                    message: format!("return {v} is not greater than -1"),
                });
            }
            Ok(())
        };
        for i in 0..n {
            check(i, "index", index_returns[i])?;
            for (j, name) in asset_names.iter().enumerate() {
                check(i, name, asset_returns[(i, j)])?;
            }
        }
        Ok(Self {
            dates,
            asset_names,
            index_returns,
            asset_returns,
        })
    }

    /// Panel with generated business-day dates and `asset_k` names.
    pub fn from_returns(index_returns: DVector<f64>, asset_returns: DMatrix<f64>) -> Result<Self> {
        let n = index_returns.len();
        let d = asset_returns.ncols();
        Self::new(
            business_days(default_start_date(), n),
            default_asset_names(d),
            index_returns,
            asset_returns,
        )
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.asset_names.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn asset_names(&self) -> &[String] {
        &self.asset_names
    }

    pub fn index_returns(&self) -> &DVector<f64> {
        &self.index_returns
    }

    pub fn asset_returns(&self) -> &DMatrix<f64> {
        &self.asset_returns
    }

    /// Stacked scenarios `(ξ_B; ξ_a)` for the given rows, one row per day.
    pub fn scenario_matrix(&self, rows: Range<usize>) -> Result<DMatrix<f64>> {
        self.check_range(&rows, 1)?;
        let d = self.n_assets();
        let len = rows.len();
        Ok(DMatrix::from_fn(len, d + 1, |i, j| {
            let r = rows.start + i;
            if j < d {
                self.asset_returns[(r, j)]
            } else {
                self.index_returns[r]
            }
        }))
    }

    /// Compounded gross returns `Πₜ(1 + rₜ)` of the index and each asset over `rows`.
    pub fn gross_returns(&self, rows: Range<usize>) -> Result<(f64, DVector<f64>)> {
        self.check_range(&rows, 1)?;
        let index = rows.clone().map(|r| 1.0 + self.index_returns[r]).product();
        let assets = DVector::from_fn(self.n_assets(), |j, _| {
            rows.clone()
                .map(|r| 1.0 + self.asset_returns[(r, j)])
                .product()
        });
        Ok((index, assets))
    }

    pub(crate) fn check_range(&self, rows: &Range<usize>, min_len: usize) -> Result<()> {
        if rows.start > rows.end || rows.end > self.len() || rows.len() < min_len {
            return Err(Error::invalid(format!(
                "row range {}..{} is not valid for a panel of {} days (need at least {min_len} rows)",
                rows.start,
                rows.end,
                self.len()
            )));
        }
        Ok(())
    }

    /// Panel with the asset columns reordered by `perm` (new column j is old column `perm[j]`).
    pub fn permute_assets(&self, perm: &[usize]) -> Result<Self> {
        let d = self.n_assets();
        let mut seen = vec![false; d];
        if perm.len() != d
            || perm
                .iter()
                .any(|&p| p >= d || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::invalid("not a permutation of the asset columns"));
        }
        Ok(Self {
            dates: self.dates.clone(),
            asset_names: perm.iter().map(|&p| self.asset_names[p].clone()).collect(),
            index_returns: self.index_returns.clone(),
            asset_returns: DMatrix::from_fn(self.len(), d, |i, j| self.asset_returns[(i, perm[j])]),
        })
    }
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2008, 1, 2).expect("valid date")
}

fn default_asset_names(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("asset_{k}")).collect()
}

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut day = start;
    while out.len() < n {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day += Duration::days(1);
    }
    out
}

pub fn load_returns_csv(path: impl AsRef<Path>) -> Result<ReturnPanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_returns_csv(file)
}

pub fn read_returns_csv(reader: impl std::io::Read) -> Result<ReturnPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    if header.len() < 3 || &header[0] != "date" || &header[1] != "index" {
        return Err(Error::Schema(
            "header must be `date,index,<asset_1>,...,<asset_d>` with at least one asset".into(),
        ));
    }
    let asset_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    for (k, name) in asset_names.iter().enumerate() {
        if name.trim().is_empty() {
            return Err(Error::Schema(format!(
                "asset column {} has an empty name",
                k + 1
            )));
        }
        if asset_names[..k].contains(name) {
            return Err(Error::Schema(format!("duplicate asset column `{name}`")));
        }
    }
    let d = asset_names.len();

    let mut dates = Vec::new();
    let mut index = Vec::new();
    let mut assets: Vec<f64> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Schema(format!("row {row}: {e}")))?;
        let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT).map_err(|e| Error::Data {
            row,
            column: "date".into(),
            message: format!("`{}` is not an ISO-8601 date: {e}", &record[0]),
        })?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::Ordering {
                    row,
                    date: date.to_string(),
                    previous: prev.to_string(),
                });
            }
        }
        dates.push(date);
        for (k, cell) in record.iter().enumerate().skip(1) {
            let column = &header[k];
            let value = parse_return(cell, row, column)?;
            if k == 1 {
                index.push(value);
            } else {
                assets.push(value);
            }
        }
    }
    let n = dates.len();
    let asset_returns = DMatrix::from_row_slice(n, d, &assets);
    ReturnPanel::new(dates, asset_names, DVector::from_vec(index), asset_returns)
}

fn parse_return(cell: &str, row: usize, column: &str) -> Result<f64> {
    let err = |message: String| Error::Data {
        row,
        column: column.to_string(),
        message,
    };
    let text = cell.trim();
    if text.is_empty() {
        return Err(err("blank cell".into()));
    }
    let value: f64 = text
        .parse()
        .map_err(|_| err(format!("`{text}` is not a decimal number")))?;
    if !value.is_finite() {
        return Err(err(format!("`{text}` is not finite")));
    }
    if value <= -1.0 {
        return Err(err(format!("return {value} is not greater than -1")));
    }
    Ok(value)
}

pub fn write_returns_csv(panel: &ReturnPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_returns(panel, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes the panel in the CSV layout; floats use the shortest round-trip representation.
pub fn write_returns(panel: &ReturnPanel, out: &mut impl Write) -> std::io::Result<()> {
    write!(out, "date,index")?;
    for name in &panel.asset_names {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for (i, date) in panel.dates.iter().enumerate() {
        write!(
            out,
            "{},{}",
            date.format(DATE_FORMAT),
            panel.index_returns[i]
        )?;
        for j in 0..panel.n_assets() {
            write!(out, ",{}", panel.asset_returns[(i, j)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Sample moments of the stacked scenarios over a row range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub mu_hat: DVector<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub repaired: bool,
    pub jitter: f64,
}

impl MomentEstimate {
    pub fn ambiguity(&self, kappa1: f64, kappa2: f64) -> Result<AmbiguityParams> {
        AmbiguityParams::new(self.mu_hat.clone(), self.sigma_hat.clone(), kappa1, kappa2)
    }
}

/// Mean and population covariance (denominator `N`) of the rows of `xi`, with
/// diagonal jitter when the covariance is numerically singular.
pub fn moments_of(xi: &DMatrix<f64>) -> Result<MomentEstimate> {
    let n = xi.nrows();
    if n < 2 {
        return Err(Error::invalid(format!(
            "moment estimation needs at least 2 rows, got {n}"
        )));
    }
    let m = xi.ncols();
    let mu_hat = xi.row_mean().transpose();
    let mut centered = xi.clone();
    for mut row in centered.row_iter_mut() {
        row -= mu_hat.transpose();
    }
    let mut sigma_hat = symmetrize(&(centered.tr_mul(&centered) / n as f64));
    let scale = sigma_hat.trace() / m as f64;
    let min_eig = SymmetricEigen::new(sigma_hat.clone()).eigenvalues.min();
    let (repaired, jitter) = if min_eig < 1e-10 * scale || scale <= 0.0 {
        // an all-constant window has zero trace; fall back to an absolute floor
        let jitter = if scale > 0.0 { 1e-8 * scale } else { 1e-12 };
        for i in 0..m {
            sigma_hat[(i, i)] += jitter;
        }
        (true, jitter)
    } else {
        (false, 0.0)
    };
    Ok(MomentEstimate {
        mu_hat,
        sigma_hat,
        repaired,
        jitter,
    })
}

pub fn estimate_moments(panel: &ReturnPanel, rows: Range<usize>) -> Result<MomentEstimate> {
    panel.check_range(&rows, 2)?;
    moments_of(&panel.scenario_matrix(rows)?)
}

/// How the scenario set for a window is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// The window rows themselves.
    Historical,
    /// `count` draws from `Normal(μ̂, Σ̂)` of the window.
    GaussianMc { count: usize, seed: u64 },
}

pub fn build_sample_set(
    panel: &ReturnPanel,
    rows: Range<usize>,
    mode: SampleMode,
) -> Result<SampleSet> {
    match mode {
        SampleMode::Historical => SampleSet::new(panel.scenario_matrix(rows)?),
        SampleMode::GaussianMc { count, seed } => {
            let moments = estimate_moments(panel, rows)?;
            gaussian_samples(&moments.mu_hat, &moments.sigma_hat, count, seed)
        }
    }
}

/// `count` seeded draws from `Normal(mean, cov)` through a Cholesky factor of `cov`.
pub fn gaussian_samples(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    count: usize,
    seed: u64,
) -> Result<SampleSet> {
    if count == 0 {
        return Err(Error::invalid("Monte Carlo sample count must be >= 1"));
    }
    let m = mean.len();
    let chol = Cholesky::new(cov.clone())
        .ok_or_else(|| Error::numerical("covariance factorization failed"))?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(count, m);
    let mut z = DVector::zeros(m);
    for i in 0..count {
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        let draw = mean + &l * &z;
        out.set_row(i, &draw.transpose());
    }
    SampleSet::new(out)
}

/// Parameters of the one-factor synthetic market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub assets: usize,
    pub days: usize,
    pub seed: u64,
    pub index_mean: f64,
    pub index_vol: f64,
    /// Range of the factor loadings `βᵢ`.
    pub beta_range: (f64, f64),
    /// Range of the idiosyncratic volatilities `σᵢ`.
    pub idio_range: (f64, f64),
    /// Day from which loadings and volatilities are redrawn.
    pub shift_day: Option<usize>,
}

impl SyntheticSpec {
    pub fn new(assets: usize, days: usize, seed: u64) -> Self {
        Self {
            assets,
            days,
            seed,
            index_mean: 3e-4,
            index_vol: 1e-2,
            beta_range: (0.5, 1.5),
            idio_range: (0.005, 0.02),
            shift_day: None,
        }
    }

    /// Every asset equals the index.
    pub fn perfect_replication(assets: usize, days: usize, seed: u64) -> Self {
        Self {
            beta_range: (1.0, 1.0),
            idio_range: (0.0, 0.0),
            ..Self::new(assets, days, seed)
        }
    }

    pub fn with_shift(mut self, day: usize) -> Self {
        self.shift_day = Some(day);
        self
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Index `a_t ~ Normal(mean, vol²)`, asset `i` return `βᵢ a_t + Normal(0, σᵢ²)`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<ReturnPanel> {
    if spec.assets < 1 {
        return Err(Error::invalid("synthetic panel needs at least 1 asset"));
    }
    if spec.days < 2 {
        return Err(Error::invalid("synthetic panel needs at least 2 days"));
    }
    let (d, n) = (spec.assets, spec.days);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut betas: Vec<f64> = (0..d)
        .map(|_| uniform_in(&mut rng, spec.beta_range))
        .collect();
    let mut vols: Vec<f64> = (0..d)
        .map(|_| uniform_in(&mut rng, spec.idio_range))
        .collect();
    let index_dist = Normal::new(spec.index_mean, spec.index_vol)
        .map_err(|e| Error::invalid(format!("index distribution: {e}")))?;

    let mut index = DVector::zeros(n);
    let mut assets = DMatrix::zeros(n, d);
    for t in 0..n {
        if spec.shift_day == Some(t) {
            for b in &mut betas {
                *b = (*b + rng.random_range(-0.5..0.5)).clamp(0.2, 2.0);
            }
            for v in &mut vols {
                *v *= rng.random_range(1.0..2.0);
            }
        }
        // keep every simple return above -1
        let a: f64 = index_dist.sample(&mut rng).max(-0.95);
        index[t] = a;
        for i in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            assets[(t, i)] = (betas[i] * a + vols[i] * z).max(-0.95);
        }
    }
    ReturnPanel::from_returns(index, assets)
}
