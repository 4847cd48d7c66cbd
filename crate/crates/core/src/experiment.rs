//! Day-ahead price data: ingestion, min-max normalization, the train/test
//! protocol, radius sweeps and a seeded synthetic generator.
//!
//! A day is one atom `z = (x, y)` with `x` the 24 normalized hourly prices
//! and `y` the 24 normalized hourly loads, so `n = m = 24`.
//!
//! Out-of-sample metrics are computed on normalized residuals by default.
//! With `N_test` test days and `α < 1/N_test` (for example `α = 0.01` with a
//! month of test data) the empirical CVaR is the largest daily squared
//! error, so sweep curves at that level track a single worst day.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use chrono::{Duration, NaiveDate};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions, FitResult, Method};
use crate::model::{AffineEstimator, EmpiricalDistribution, RiskSpec};
use crate::risk::{cvar_discrete, mean};

pub const HOURS: usize = 24;
const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub date: NaiveDate,
    /// Hourly prices in $/MWh.
    pub prices: [f64; HOURS],
    /// Hourly loads in MW.
    pub loads: [f64; HOURS],
}

/// Days with complete hourly data, strictly increasing in date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<DayRecord>,
}

impl Dataset {
    pub fn new(records: Vec<DayRecord>) -> Result<Self> {
        for w in records.windows(2) {
            if w[1].date <= w[0].date {
                return Err(Error::Data(format!(
                    "dates must be strictly increasing: {} follows {}",
                    w[1].date, w[0].date
                )));
            }
        }
        for r in &records {
            if r.prices.iter().chain(&r.loads).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("record {}", r.date)));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[DayRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Days before `date` and days on or after it.
    pub fn split_at_date(&self, date: NaiveDate) -> (Dataset, Dataset) {
        let k = self.records.partition_point(|r| r.date < date);
        (
            Dataset {
                records: self.records[..k].to_vec(),
            },
            Dataset {
                records: self.records[k..].to_vec(),
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvSchema {
    /// `date,p00..p23,l00..l23`, one row per day.
    Wide,
    /// `date,hour,price,load`, one row per hour, pivoted to wide.
    Long,
    /// Long when the header has an `hour` column, wide otherwise.
    Auto,
}

fn price_col(h: usize) -> String {
    format!("p{h:02}")
}

fn load_col(h: usize) -> String {
    format!("l{h:02}")
}

pub fn load_dataset(path: impl AsRef<Path>, schema: CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: Read>(input: R, schema: CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let idx = |name: &str| headers.iter().position(|h| h == name);
    let schema = match schema {
        CsvSchema::Auto if idx("hour").is_some() => CsvSchema::Long,
        CsvSchema::Auto => CsvSchema::Wide,
        s => s,
    };
    let require = |name: &str| idx(name).ok_or_else(|| Error::Data(format!("missing column {name}")));
    let date_idx = require("date")?;
    let mut bad: Vec<String> = Vec::new();

    let records = match schema {
        CsvSchema::Wide => {
            let mut cols = Vec::with_capacity(2 * HOURS);
            for h in 0..HOURS {
                cols.push((price_col(h), require(&price_col(h))?));
            }
            for h in 0..HOURS {
                cols.push((load_col(h), require(&load_col(h))?));
            }
            let mut records = Vec::new();
            for (i, row) in rdr.records().enumerate() {
                let line = i + 2;
                let row = row?;
                let date = match NaiveDate::parse_from_str(row.get(date_idx).unwrap_or(""), DATE_FORMAT) {
                    Ok(d) => d,
                    Err(e) => {
                        bad.push(format!("line {line} (date: {e})"));
                        continue;
                    }
                };
                let mut values = [0.0; 2 * HOURS];
                let mut ok = true;
                for (k, (name, c)) in cols.iter().enumerate() {
                    match row.get(*c).unwrap_or("").parse::<f64>() {
                        Ok(v) if v.is_finite() => values[k] = v,
                        _ => {
                            bad.push(format!("line {line} ({name}: {:?})", row.get(*c).unwrap_or("")));
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    let mut prices = [0.0; HOURS];
                    let mut loads = [0.0; HOURS];
                    prices.copy_from_slice(&values[..HOURS]);
                    loads.copy_from_slice(&values[HOURS..]);
                    records.push(DayRecord { date, prices, loads });
                }
            }
            records
        }
        CsvSchema::Long | CsvSchema::Auto => {
            let (hour_idx, price_idx, load_idx) = (require("hour")?, require("price")?, require("load")?);
            let mut days: BTreeMap<NaiveDate, [Option<(f64, f64)>; HOURS]> = BTreeMap::new();
            for (i, row) in rdr.records().enumerate() {
                let line = i + 2;
                let row = row?;
                let field = |c: usize| row.get(c).unwrap_or("");
                let date = NaiveDate::parse_from_str(field(date_idx), DATE_FORMAT);
                let hour = field(hour_idx).parse::<usize>();
                let price = field(price_idx).parse::<f64>();
                let load = field(load_idx).parse::<f64>();
                match (date, hour, price, load) {
                    (Ok(d), Ok(h), Ok(p), Ok(l)) if h < HOURS && p.is_finite() && l.is_finite() => {
                        let slot = &mut days.entry(d).or_insert([None; HOURS])[h];
                        if slot.is_some() {
                            bad.push(format!("line {line} (duplicate hour {h} on {d})"));
                        }
                        *slot = Some((p, l));
                    }
                    _ => bad.push(format!("line {line}")),
                }
            }
            let mut records = Vec::with_capacity(days.len());
            for (date, hours) in days {
                let missing: Vec<String> = (0..HOURS)
                    .filter(|&h| hours[h].is_none())
                    .map(|h| h.to_string())
                    .collect();
                if !missing.is_empty() {
                    bad.push(format!("{date} missing hours {}", missing.join(",")));
                    continue;
                }
                let mut prices = [0.0; HOURS];
                let mut loads = [0.0; HOURS];
                for (h, v) in hours.iter().enumerate() {
                    let (p, l) = v.expect("checked above");
                    prices[h] = p;
                    loads[h] = l;
                }
                records.push(DayRecord { date, prices, loads });
            }
            records
        }
    };
    if !bad.is_empty() {
        return Err(Error::Data(format!(
            "unparseable or incomplete rows: {}",
            bad.join("; ")
        )));
    }
    Dataset::new(records)
}

/// Writes the wide schema. Floats use the shortest round-trip form, so a
/// write followed by a read reproduces every value exactly.
pub fn write_dataset<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend((0..HOURS).map(price_col));
    header.extend((0..HOURS).map(load_col));
    w.write_record(&header)?;
    for r in &ds.records {
        let mut row = vec![r.date.format(DATE_FORMAT).to_string()];
        row.extend(r.prices.iter().chain(&r.loads).map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(ds, File::create(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Separate range for every hour of prices and of loads.
    #[default]
    PerCoordinate,
    /// One range shared by all price hours and one shared by all load hours.
    Global,
}

/// Affine map of each coordinate onto `[0, 1]` over the fitting rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub mode: ScaleMode,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Coordinates with `max == min`; they map to 0.5.
    pub degenerate: Vec<usize>,
}

impl MinMaxScaler {
    /// `rows` are `(prices, loads)` concatenations of length 48.
    pub fn fit(rows: &[Vec<f64>], mode: ScaleMode) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptySample);
        };
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("rows of unequal length".into()));
        }
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for r in rows {
            for k in 0..d {
                min[k] = min[k].min(r[k]);
                max[k] = max[k].max(r[k]);
            }
        }
        if mode == ScaleMode::Global {
            let half = d / 2;
            for group in [0..half, half..d] {
                let lo = min[group.clone()].iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = max[group.clone()].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for k in group {
                    min[k] = lo;
                    max[k] = hi;
                }
            }
        }
        let degenerate: Vec<usize> = (0..d).filter(|&k| max[k] == min[k]).collect();
        if !degenerate.is_empty() {
            log::warn!("constant training coordinates {degenerate:?} are mapped to 0.5");
        }
        Ok(Self {
            mode,
            min,
            max,
            degenerate,
        })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Width `max − min` of coordinate `k`; zero for degenerate ones.
    pub fn range(&self, k: usize) -> f64 {
        self.max[k] - self.min[k]
    }

    /// No clipping: values outside the fitted range leave `[0, 1]`.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(k, &v)| {
                let w = self.range(k);
                if w > 0.0 {
                    (v - self.min[k]) / w
                } else {
                    0.5
                }
            })
            .collect()
    }

    /// Degenerate coordinates map back to their constant value.
    pub fn inverse_transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(k, &u)| self.min[k] + u * self.range(k))
            .collect()
    }
}

fn record_row(r: &DayRecord) -> Vec<f64> {
    r.prices.iter().chain(&r.loads).cloned().collect()
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: EmpiricalDistribution,
    pub test: EmpiricalDistribution,
    pub scaler: MinMaxScaler,
    pub train_dates: Vec<NaiveDate>,
    pub test_dates: Vec<NaiveDate>,
}

/// Days before `split_date` train, the rest test. The scaler sees only the
/// training days.
pub fn split_and_normalize(ds: &Dataset, split_date: NaiveDate, mode: ScaleMode) -> Result<Split> {
    let (train, test) = ds.split_at_date(split_date);
    if train.is_empty() || test.is_empty() {
        return Err(Error::Data(format!(
            "split at {split_date} leaves {} training and {} test days",
            train.len(),
            test.len()
        )));
    }
    let train_rows: Vec<Vec<f64>> = train.records.iter().map(record_row).collect();
    let scaler = MinMaxScaler::fit(&train_rows, mode)?;
    let to_dist = |d: &Dataset| {
        let rows: Vec<Vec<f64>> = d.records.iter().map(|r| scaler.transform(&record_row(r))).collect();
        EmpiricalDistribution::from_rows(&rows, HOURS, HOURS)
    };
    Ok(Split {
        train: to_dist(&train)?,
        test: to_dist(&test)?,
        train_dates: train.records.iter().map(|r| r.date).collect(),
        test_dates: test.records.iter().map(|r| r.date).collect(),
        scaler,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutOfSample {
    pub cvar: f64,
    pub mse: f64,
}

/// CVaR and mean of the per-day squared errors `‖xᵢ − Ayᵢ − b‖²`.
pub fn evaluate_out_of_sample(est: &AffineEstimator, test: &EmpiricalDistribution, alpha: f64) -> Result<OutOfSample> {
    if test.is_empty() {
        return Err(Error::EmptySample);
    }
    let losses = est.losses(test)?;
    Ok(OutOfSample {
        cvar: cvar_discrete(&losses, alpha)?.cvar,
        mse: mean(&losses),
    })
}

/// Same metrics with residuals mapped back to price units through the
/// price coordinates of `scaler`.
pub fn evaluate_out_of_sample_original(
    est: &AffineEstimator,
    test: &EmpiricalDistribution,
    alpha: f64,
    scaler: &MinMaxScaler,
) -> Result<OutOfSample> {
    if test.is_empty() {
        return Err(Error::EmptySample);
    }
    est.check_dims(test)?;
    if scaler.dim() < est.n() {
        return Err(Error::Dimension(format!(
            "scaler has {} coordinates, estimator predicts {}",
            scaler.dim(),
            est.n()
        )));
    }
    let losses: Vec<f64> = (0..test.len())
        .map(|i| {
            let r = test.x_part(i) - est.predict(&test.y_part(i));
            r.iter().enumerate().map(|(k, v)| (v * scaler.range(k)).powi(2)).sum()
        })
        .collect();
    Ok(OutOfSample {
        cvar: cvar_discrete(&losses, alpha)?.cvar,
        mse: mean(&losses),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub radius: f64,
    pub method: Method,
    /// Optimal value of the fit; absent when the fit failed.
    pub in_sample: Option<f64>,
    pub oos_cvar: Option<f64>,
    pub oos_mse: Option<f64>,
    pub oos_cvar_original: Option<f64>,
    pub oos_mse_original: Option<f64>,
    pub gamma: Option<f64>,
    pub cross_check_gap: Option<f64>,
    pub solve_time_s: f64,
    /// `optimal`, `reduced_accuracy`, or `failed: <reason>`.
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        !self.status.starts_with("failed")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub alpha: f64,
    pub radii: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    /// Units of `oos_cvar` and `oos_mse`.
    pub units: String,
    /// One row per radius and robust method, radius-major.
    pub rows: Vec<SweepRow>,
    /// `nominal_cvar` and `nominal_mse` fits, reported with radius 0.
    pub baselines: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: [&str; 8] = [
    "radius",
    "method",
    "in_sample",
    "oos_cvar",
    "oos_mse",
    "gamma",
    "solve_time_s",
    "status",
];

impl SweepReport {
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn baseline(&self, method: Method) -> Option<&SweepRow> {
        self.baselines.iter().find(|r| r.method == method)
    }

    /// Rows then baselines.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SWEEP_CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in self.rows.iter().chain(&self.baselines) {
            w.write_record([
                r.radius.to_string(),
                r.method.to_string(),
                opt(r.in_sample),
                opt(r.oos_cvar),
                opt(r.oos_mse),
                opt(r.gamma),
                r.solve_time_s.to_string(),
                r.status.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `radius,dr_cvar,dr_mse,nominal_cvar,nominal_mse` with the
    /// out-of-sample CVaR per method; baselines repeat on every line as
    /// reference levels. Missing values are empty.
    pub fn write_plot_data<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["radius", "dr_cvar", "dr_mse", "nominal_cvar", "nominal_mse"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let base = |m| opt(self.baseline(m).and_then(|r| r.oos_cvar));
        for &r in &self.radii {
            let at = |m: Method| {
                opt(self
                    .rows
                    .iter()
                    .find(|row| row.method == m && row.radius == r)
                    .and_then(|row| row.oos_cvar))
            };
            w.write_record([
                r.to_string(),
                at(Method::DrCvar),
                at(Method::DrMse),
                base(Method::NominalCvar),
                base(Method::NominalMse),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub alpha: f64,
    pub radii: Vec<f64>,
    pub options: FitOptions,
    /// Enables the original-unit columns.
    pub scaler: Option<MinMaxScaler>,
    pub include_baselines: bool,
}

/// Log-spaced radii `10^from .. 10^to` with `per_decade` points per decade.
pub fn log_radius_grid(from: i32, to: i32, per_decade: usize) -> Result<Vec<f64>> {
    if to < from || per_decade == 0 {
        return Err(Error::Data(format!(
            "empty radius grid: from {from}, to {to}, {per_decade} per decade"
        )));
    }
    let steps = (to - from) as usize * per_decade;
    Ok((0..=steps)
        .map(|i| 10f64.powf(from as f64 + i as f64 / per_decade as f64))
        .collect())
}

fn sweep_row(
    method: Method,
    radius: f64,
    train: &EmpiricalDistribution,
    test: &EmpiricalDistribution,
    cfg: &SweepConfig,
) -> SweepRow {
    let start = Instant::now();
    let outcome = RiskSpec::new(cfg.alpha, radius).and_then(|spec| {
        let res: FitResult = fit(method, train, &spec, &cfg.options)?;
        let oos = evaluate_out_of_sample(&res.estimator, test, cfg.alpha)?;
        let orig = match &cfg.scaler {
            Some(s) => Some(evaluate_out_of_sample_original(&res.estimator, test, cfg.alpha, s)?),
            None => None,
        };
        Ok((res, oos, orig))
    });
    match outcome {
        Ok((res, oos, orig)) => {
            let status = match &res.solver {
                Some(s) if s.accuracy != "full" => "reduced_accuracy",
                _ => "optimal",
            };
            SweepRow {
                radius,
                method,
                in_sample: Some(res.optimal_value),
                oos_cvar: Some(oos.cvar),
                oos_mse: Some(oos.mse),
                oos_cvar_original: orig.map(|o| o.cvar),
                oos_mse_original: orig.map(|o| o.mse),
                gamma: res.gamma,
                cross_check_gap: Some(res.cross_check_gap),
                solve_time_s: res.solve_time_s,
                status: status.into(),
            }
        }
        Err(e) => {
            log::warn!("{method} at radius {radius:e} failed: {e}");
            SweepRow {
                radius,
                method,
                in_sample: None,
                oos_cvar: None,
                oos_mse: None,
                oos_cvar_original: None,
                oos_mse_original: None,
                gamma: None,
                cross_check_gap: None,
                solve_time_s: start.elapsed().as_secs_f64(),
                status: format!("failed: {e}"),
            }
        }
    }
}

/// Fits `dr_cvar` at `cfg.alpha` and `dr_mse` for every radius and
/// evaluates both on `test` at `cfg.alpha`. Fits run on the current rayon
/// pool; each fit is deterministic, so only timing fields depend on the
/// thread count. Failed fits become rows with a `failed` status.
pub fn radius_sweep(
    train: &EmpiricalDistribution,
    test: &EmpiricalDistribution,
    cfg: &SweepConfig,
) -> Result<SweepReport> {
    if !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
        return Err(Error::InvalidAlpha(cfg.alpha));
    }
    if cfg.radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidRadius {
            expected: "positive and finite",
            got: cfg
                .radii
                .iter()
                .cloned()
                .find(|&r| !(r > 0.0 && r.is_finite()))
                .unwrap_or(f64::NAN),
        });
    }
    if cfg.radii.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Data("radii must be sorted ascending".into()));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptySample);
    }
    if train.n() != test.n() || train.m() != test.m() {
        return Err(Error::Dimension("train and test atoms differ in shape".into()));
    }

    let mut jobs: Vec<(Method, f64)> = cfg
        .radii
        .iter()
        .flat_map(|&r| [(Method::DrCvar, r), (Method::DrMse, r)])
        .collect();
    let n_rows = jobs.len();
    if cfg.include_baselines {
        jobs.push((Method::NominalCvar, 0.0));
        jobs.push((Method::NominalMse, 0.0));
    }
    let mut rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(method, r)| sweep_row(method, r, train, test, cfg))
        .collect();
    let baselines = rows.split_off(n_rows);
    Ok(SweepReport {
        alpha: cfg.alpha,
        radii: cfg.radii.clone(),
        n_train: train.len(),
        n_test: test.len(),
        units: "normalized".into(),
        rows,
        baselines,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub days: usize,
    pub start: NaiveDate,
    /// Probability that a day carries a price spike.
    pub spike_prob: f64,
    /// Median spike height in $/MWh on the first day.
    pub spike_scale: f64,
    /// Linear growth of spike heights: the last day's heights are
    /// `1 + spike_growth` times the first day's.
    pub spike_growth: f64,
    /// Half-width of the uniform price noise in $/MWh.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            days: 121,
            start: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            spike_prob: 0.15,
            spike_scale: 40.0,
            spike_growth: 1.5,
            noise: 2.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.days > 0
            && (0.0..=1.0).contains(&self.spike_prob)
            && self.spike_scale >= 0.0
            && self.spike_growth >= 0.0
            && self.noise >= 0.0
            && [self.spike_prob, self.spike_scale, self.spike_growth, self.noise]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!("invalid synthetic config {self:?}")))
        }
    }
}

/// Pareto tail index of the spike heights.
const SPIKE_SHAPE: f64 = 2.5;
const PEAK_HOURS: std::ops::Range<usize> = 12..21;

/// Load in MW of hour `h` on a typical day: overnight trough, morning
/// ramp and an evening peak.
pub fn load_shape(h: usize) -> f64 {
    let t = h as f64;
    let morning = (-(t - 8.0).powi(2) / 8.0).exp();
    let evening = (-(t - 18.0).powi(2) / 10.0).exp();
    6000.0 + 1200.0 * morning + 2200.0 * evening
}

/// Noise-free price of hour `h` at load `l`.
pub fn price_affine(h: usize, l: f64) -> f64 {
    let slope = 0.006 + 0.0015 * (2.0 * std::f64::consts::PI * h as f64 / 24.0).sin();
    8.0 + slope * l
}

/// Dataset plus the spike height added on each day (0 without a spike).
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub spikes: Vec<f64>,
}

/// Deterministic synthetic days: smooth load shape scaled by a day factor
/// with bounded hourly noise, prices affine in load with bounded noise, and
/// on spike days a heavy-tailed bump over the afternoon peak.
pub fn synth_spiky_with_spikes(cfg: &SynthConfig, seed: u64) -> Result<Synthetic> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pareto = Pareto::new(1.0, SPIKE_SHAPE).map_err(|e| Error::Data(e.to_string()))?;
    let median = 2f64.powf(1.0 / SPIKE_SHAPE);
    let mut records = Vec::with_capacity(cfg.days);
    let mut spikes = Vec::with_capacity(cfg.days);
    for day in 0..cfg.days {
        let weekday = day % 7;
        let day_factor = if weekday >= 5 { 0.88 } else { 1.0 } * rng.random_range(0.9..1.1);
        let mut loads = [0.0; HOURS];
        let mut prices = [0.0; HOURS];
        for h in 0..HOURS {
            loads[h] = load_shape(h) * day_factor * (1.0 + rng.random_range(-0.03..0.03));
            prices[h] = price_affine(h, loads[h]) + cfg.noise * rng.random_range(-1.0..=1.0);
        }
        // Always draw, so the spike stream does not shift with spike_prob.
        let u: f64 = rng.random();
        let height_draw: f64 = pareto.sample(&mut rng);
        let center = rng.random_range(PEAK_HOURS) as f64;
        let width = rng.random_range(1.0..3.0);
        let mut height = 0.0;
        if u < cfg.spike_prob {
            let growth = 1.0 + cfg.spike_growth * day as f64 / (cfg.days.max(2) - 1) as f64;
            height = cfg.spike_scale * growth * height_draw / median;
            for (h, p) in prices.iter_mut().enumerate() {
                *p += height * (-(h as f64 - center).powi(2) / (2.0 * width * width)).exp();
            }
        }
        spikes.push(height);
        records.push(DayRecord {
            date: cfg.start + Duration::days(day as i64),
            prices,
            loads,
        });
    }
    Ok(Synthetic {
        dataset: Dataset::new(records)?,
        spikes,
    })
}

pub fn synth_spiky(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    Ok(synth_spiky_with_spikes(cfg, seed)?.dataset)
}

/// Stacks a dataset into the unnormalized atom matrix `[prices, loads]`.
pub fn raw_atoms(ds: &Dataset) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = ds.records.iter().map(record_row).collect();
    DMatrix::from_fn(rows.len(), 2 * HOURS, |i, j| rows[i][j])
}
