//! Config and CSV boundary.
//!
//! Trace files are headed CSV with a dense zero-based index column:
//!
//! | file             | columns                               |
//! |------------------|---------------------------------------|
//! | plan             | `slot, p_disp_kw`                     |
//! | 10-second series | `tick, value_kw`                      |
//! | PV forecast      | `slot, g_hat_kw`                      |
//! | load forecast    | `slot, load_forecast_kw`              |
//! | SOC bounds       | `slot, soc_min_pct, soc_max_pct`      |
//!
//! Result files use fixed six-decimal formatting; SOC is in percent.
//!
//! `slots.csv`: `slot, p_disp_kw, load_kw, gcp_kw, error_kw, e_hat_kw,
//! battery_kw, pv_setpoint_kw, g_hat_kw, pv_kw, soc_start_pct, soc_end_pct,
//! soc_min_pct, soc_max_pct, iterations, accuracy_kw, rho, converged,
//! saturated_ticks`.
//!
//! `summary.csv`: `metric, value`, rows as in [`SummaryStats::rows`].
//!
//! `admm_trace.csv`: `slot, k, r_norm, s_norm, rho, eps_pri, eps_dual`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::admm::AdmmConfig;
use crate::error::{Error, Result};
use crate::model::{BatteryModel, ScenarioTrace, TimeGrid};
use crate::sim::{DayResult, Forecaster, Mode, ScenarioConfig, SlotRecord};
use crate::stats::SummaryStats;
use crate::synth::{self, SyntheticParams};

pub const PLAN_FILE: &str = "plan.csv";
pub const LOAD_FILE: &str = "load_10s.csv";
pub const PV_MPP_FILE: &str = "pv_mpp_10s.csv";
pub const PV_FORECAST_FILE: &str = "pv_forecast.csv";
pub const SOC_BOUNDS_FILE: &str = "soc_bounds.csv";
pub const LOAD_FORECAST_FILE: &str = "load_forecast.csv";

pub const SLOTS_HEADER: [&str; 19] = [
    "slot",
    "p_disp_kw",
    "load_kw",
    "gcp_kw",
    "error_kw",
    "e_hat_kw",
    "battery_kw",
    "pv_setpoint_kw",
    "g_hat_kw",
    "pv_kw",
    "soc_start_pct",
    "soc_end_pct",
    "soc_min_pct",
    "soc_max_pct",
    "iterations",
    "accuracy_kw",
    "rho",
    "converged",
    "saturated_ticks",
];

/// Paths of the trace files, as written in the config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceFiles {
    pub plan: PathBuf,
    pub load: PathBuf,
    pub pv_mpp: PathBuf,
    pub pv_forecast: PathBuf,
    pub soc_bounds: PathBuf,
    pub load_forecast: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    /// The seeded synthetic reference day.
    Synthetic {
        seed: u64,
    },
    Files(TraceFiles),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub energy_kwh: f64,
    pub p_min_kw: f64,
    pub p_max_kw: f64,
    pub soc_init_pct: f64,
    pub admm: AdmmConfig,
    /// Coordinator SOC back-off in percent.
    pub soc_backoff_pct: f64,
    pub mode: Mode,
    pub forecaster: Forecaster,
    pub source: TraceSource,
}

const KNOWN_KEYS: [&str; 21] = [
    "battery.energy_kwh",
    "battery.p_min_kw",
    "battery.p_max_kw",
    "battery.soc_init_pct",
    "admm.rho0",
    "admm.mu",
    "admm.tau_incr",
    "admm.tau_decr",
    "admm.eps_abs",
    "admm.eps_rel",
    "admm.max_iter",
    "admm.bess_tol",
    "coordinator.soc_backoff_pct",
    "mode",
    "forecaster",
    "synthetic.seed",
    "trace.plan",
    "trace.load",
    "trace.pv_mpp",
    "trace.pv_forecast",
    "trace.soc_bounds",
];
const OPTIONAL_TRACE_KEY: &str = "trace.load_forecast";

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

struct Keys(BTreeMap<String, toml::Value>);

impl Keys {
    fn take(&mut self, key: &str) -> Option<toml::Value> {
        self.0.remove(key)
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) if x.is_finite() => Ok(Some(x)),
            Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
            Some(v) => Err(Error::config(
                key,
                format!("expected a finite number, got {v}"),
            )),
        }
    }

    fn required_f64(&mut self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or_else(|| Error::config(key, "missing"))
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if i >= 0 => Ok(Some(i as u64)),
            Some(v) => Err(Error::config(
                key,
                format!("expected a non-negative integer, got {v}"),
            )),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(Error::config(key, format!("expected a string, got {v}"))),
        }
    }
}

impl RunConfig {
    /// Parses the flat `key = value` dialect. Relative trace paths are kept
    /// as written; see [`RunConfig::to_scenario`].
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);
        if let Some(unknown) = flat
            .keys()
            .find(|k| !KNOWN_KEYS.contains(&k.as_str()) && k.as_str() != OPTIONAL_TRACE_KEY)
        {
            return Err(Error::config(unknown.clone(), "unknown key"));
        }
        let mut keys = Keys(flat);

        let defaults = AdmmConfig::default();
        let admm = AdmmConfig {
            rho0: keys.f64("admm.rho0")?.unwrap_or(defaults.rho0),
            mu: keys.f64("admm.mu")?.unwrap_or(defaults.mu),
            tau_incr: keys.f64("admm.tau_incr")?.unwrap_or(defaults.tau_incr),
            tau_decr: keys.f64("admm.tau_decr")?.unwrap_or(defaults.tau_decr),
            eps_abs: keys.f64("admm.eps_abs")?.unwrap_or(defaults.eps_abs),
            eps_rel: keys.f64("admm.eps_rel")?.unwrap_or(defaults.eps_rel),
            max_iter: match keys.u64("admm.max_iter")? {
                Some(v) => v as usize,
                None => defaults.max_iter,
            },
            bess_tol: keys.f64("admm.bess_tol")?.unwrap_or(defaults.bess_tol),
        };

        let mode = match keys.string("mode")? {
            Some(s) => s.parse().map_err(|e| Error::config("mode", e))?,
            None => Mode::DispatchWithAdmm,
        };
        let forecaster = match keys.string("forecaster")? {
            Some(s) => s.parse().map_err(|e| Error::config("forecaster", e))?,
            None => Forecaster::TraceProvided,
        };

        let seed = keys.u64("synthetic.seed")?;
        let mut path = |key: &str| keys.string(key).map(|p| p.map(PathBuf::from));
        let plan = path("trace.plan")?;
        let load = path("trace.load")?;
        let pv_mpp = path("trace.pv_mpp")?;
        let pv_forecast = path("trace.pv_forecast")?;
        let soc_bounds = path("trace.soc_bounds")?;
        let load_forecast = path(OPTIONAL_TRACE_KEY)?;
        let any_trace = plan.is_some()
            || load.is_some()
            || pv_mpp.is_some()
            || pv_forecast.is_some()
            || soc_bounds.is_some()
            || load_forecast.is_some();
        let source = match (seed, any_trace) {
            (Some(_), true) => {
                return Err(Error::config(
                    "synthetic.seed",
                    "cannot be combined with trace.* paths",
                ));
            }
            (Some(seed), false) => TraceSource::Synthetic { seed },
            (None, _) => {
                let need =
                    |key: &str, p: Option<PathBuf>| p.ok_or_else(|| Error::config(key, "missing"));
                TraceSource::Files(TraceFiles {
                    plan: need("trace.plan", plan)?,
                    load: need("trace.load", load)?,
                    pv_mpp: need("trace.pv_mpp", pv_mpp)?,
                    pv_forecast: need("trace.pv_forecast", pv_forecast)?,
                    soc_bounds: need("trace.soc_bounds", soc_bounds)?,
                    load_forecast,
                })
            }
        };

        let cfg = RunConfig {
            energy_kwh: keys.required_f64("battery.energy_kwh")?,
            p_min_kw: keys.required_f64("battery.p_min_kw")?,
            p_max_kw: keys.required_f64("battery.p_max_kw")?,
            soc_init_pct: keys.required_f64("battery.soc_init_pct")?,
            admm,
            soc_backoff_pct: keys.f64("coordinator.soc_backoff_pct")?.unwrap_or(0.0),
            mode,
            forecaster,
            source,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.energy_kwh.is_finite() && self.energy_kwh > 0.0) {
            return Err(Error::config("battery.energy_kwh", "must be positive"));
        }
        if self.p_min_kw > 0.0 {
            return Err(Error::config("battery.p_min_kw", "must be <= 0"));
        }
        if self.p_max_kw < 0.0 {
            return Err(Error::config("battery.p_max_kw", "must be >= 0"));
        }
        if !(0.0..=100.0).contains(&self.soc_init_pct) {
            return Err(Error::config(
                "battery.soc_init_pct",
                "must lie in [0, 100]",
            ));
        }
        if !(0.0..50.0).contains(&self.soc_backoff_pct) {
            return Err(Error::config(
                "coordinator.soc_backoff_pct",
                "must lie in [0, 50)",
            ));
        }
        self.admm.validate()
    }

    /// Renders the config in the flat dialect accepted by [`RunConfig::parse`].
    pub fn to_toml(&self) -> String {
        fn num(x: f64) -> String {
            toml::Value::Float(x).to_string()
        }
        fn text(s: &str) -> String {
            toml::Value::String(s.to_string()).to_string()
        }
        let path = |p: &Path| text(&p.to_string_lossy());
        let mut lines = vec![
            format!("battery.energy_kwh = {}", num(self.energy_kwh)),
            format!("battery.p_min_kw = {}", num(self.p_min_kw)),
            format!("battery.p_max_kw = {}", num(self.p_max_kw)),
            format!("battery.soc_init_pct = {}", num(self.soc_init_pct)),
            format!("admm.rho0 = {}", num(self.admm.rho0)),
            format!("admm.mu = {}", num(self.admm.mu)),
            format!("admm.tau_incr = {}", num(self.admm.tau_incr)),
            format!("admm.tau_decr = {}", num(self.admm.tau_decr)),
            format!("admm.eps_abs = {}", num(self.admm.eps_abs)),
            format!("admm.eps_rel = {}", num(self.admm.eps_rel)),
            format!("admm.max_iter = {}", self.admm.max_iter),
            format!("admm.bess_tol = {}", num(self.admm.bess_tol)),
            format!(
                "coordinator.soc_backoff_pct = {}",
                num(self.soc_backoff_pct)
            ),
            format!("mode = {}", text(self.mode.as_str())),
            format!("forecaster = {}", text(self.forecaster.as_str())),
        ];
        match &self.source {
            TraceSource::Synthetic { seed } => lines.push(format!("synthetic.seed = {seed}")),
            TraceSource::Files(f) => {
                lines.push(format!("trace.plan = {}", path(&f.plan)));
                lines.push(format!("trace.load = {}", path(&f.load)));
                lines.push(format!("trace.pv_mpp = {}", path(&f.pv_mpp)));
                lines.push(format!("trace.pv_forecast = {}", path(&f.pv_forecast)));
                lines.push(format!("trace.soc_bounds = {}", path(&f.soc_bounds)));
                if let Some(p) = &f.load_forecast {
                    lines.push(format!("{OPTIONAL_TRACE_KEY} = {}", path(p)));
                }
            }
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    /// Loads the traces and builds a validated scenario. Relative trace
    /// paths are resolved against `base_dir`.
    pub fn to_scenario(&self, base_dir: &Path) -> Result<ScenarioConfig> {
        self.validate()?;
        let grid = TimeGrid::default();
        let soc_init = self.soc_init_pct / 100.0;
        let (trace, soc_min, soc_max) = match &self.source {
            TraceSource::Synthetic { seed } => {
                let params = SyntheticParams {
                    energy_kwh: self.energy_kwh,
                    soc_init,
                    ..SyntheticParams::default()
                };
                let day = synth::generate_with(&params, *seed)?;
                (day.trace, day.battery.soc_min, day.battery.soc_max)
            }
            TraceSource::Files(f) => {
                let resolve = |p: &Path| {
                    if p.is_absolute() {
                        p.to_path_buf()
                    } else {
                        base_dir.join(p)
                    }
                };
                let (soc_min, soc_max) = read_soc_bounds(&resolve(&f.soc_bounds))?;
                let trace = ScenarioTrace {
                    p_disp: read_slot_series(&resolve(&f.plan), "p_disp_kw")?,
                    load_10s: read_tick_series(&resolve(&f.load))?,
                    pv_mpp_10s: read_tick_series(&resolve(&f.pv_mpp))?,
                    pv_gmax_5min: read_slot_series(&resolve(&f.pv_forecast), "g_hat_kw")?,
                    load_forecast: match &f.load_forecast {
                        Some(p) => Some(read_slot_series(&resolve(p), "load_forecast_kw")?),
                        None => None,
                    },
                };
                (trace, soc_min, soc_max)
            }
        };
        if soc_init < soc_min[0] || soc_init > soc_max[0] {
            return Err(Error::config(
                "battery.soc_init_pct",
                format!(
                    "{} % outside the first slot's bounds [{} %, {} %]",
                    self.soc_init_pct,
                    100.0 * soc_min[0],
                    100.0 * soc_max[0]
                ),
            ));
        }
        let battery = BatteryModel::new(
            self.energy_kwh,
            self.p_min_kw,
            self.p_max_kw,
            soc_init,
            soc_min,
            soc_max,
            grid.slot_seconds,
        )?;
        let cfg = ScenarioConfig {
            mode: self.mode,
            trace,
            battery,
            admm: self.admm,
            forecaster: self.forecaster,
            soc_backoff: self.soc_backoff_pct / 100.0,
            grid,
            record_ticks: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads and validates a scenario config; trace paths are relative to the
/// config file.
pub fn load_scenario(config_path: &Path) -> Result<ScenarioConfig> {
    let cfg = RunConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    cfg.to_scenario(base)
}

fn trace_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Trace {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a headed CSV whose first column is a dense index named `index`
/// followed by the `values` columns; returns one vector per value column.
pub fn read_indexed(path: &Path, index: &str, values: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(str::to_string)
        .collect();
    let expected: Vec<&str> = std::iter::once(index)
        .chain(values.iter().copied())
        .collect();
    if header != expected {
        return Err(trace_err(
            path,
            format!("header {header:?}, expected {expected:?}"),
        ));
    }
    let mut columns = vec![Vec::new(); values.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let line = row + 2;
        let idx: usize = record[0]
            .parse()
            .map_err(|_| trace_err(path, format!("line {line}: bad {index} `{}`", &record[0])))?;
        if idx != row {
            return Err(trace_err(
                path,
                format!("line {line}: {index} {idx} breaks the sequence (expected {row})"),
            ));
        }
        for (c, name) in values.iter().enumerate() {
            let v: f64 = record[c + 1].parse().map_err(|_| {
                trace_err(
                    path,
                    format!("line {line}: bad {name} `{}`", &record[c + 1]),
                )
            })?;
            if !v.is_finite() {
                return Err(trace_err(
                    path,
                    format!("line {line}: {name} is not finite"),
                ));
            }
            columns[c].push(v);
        }
    }
    Ok(columns)
}

pub fn read_slot_series(path: &Path, column: &str) -> Result<Vec<f64>> {
    Ok(read_indexed(path, "slot", &[column])?.remove(0))
}

pub fn read_tick_series(path: &Path) -> Result<Vec<f64>> {
    Ok(read_indexed(path, "tick", &["value_kw"])?.remove(0))
}

/// Reads a percent SOC-bound profile and returns fractions.
pub fn read_soc_bounds(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut cols = read_indexed(path, "slot", &["soc_min_pct", "soc_max_pct"])?;
    let max = cols.pop().unwrap_or_default();
    let min = cols.pop().unwrap_or_default();
    if min.is_empty() {
        return Err(trace_err(path, "no rows"));
    }
    for (j, (&lo, &hi)) in min.iter().zip(&max).enumerate() {
        if !((0.0..=100.0).contains(&lo) && (0.0..=100.0).contains(&hi)) {
            return Err(trace_err(
                path,
                format!("slot {j}: bounds must lie in [0, 100] %"),
            ));
        }
        if lo > hi {
            return Err(trace_err(
                path,
                format!("slot {j}: soc_min {lo} % exceeds soc_max {hi} %"),
            ));
        }
    }
    Ok((
        min.iter().map(|v| v / 100.0).collect(),
        max.iter().map(|v| v / 100.0).collect(),
    ))
}

/// Writes an indexed CSV with shortest round-trip number formatting, so
/// that [`read_indexed`] returns the exact values.
pub fn write_indexed(path: &Path, index: &str, names: &[&str], columns: &[&[f64]]) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.len());
    if names.len() != columns.len() || columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidModel("ragged columns".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(std::iter::once(index).chain(names.iter().copied()))
        .map_err(csv_err(path))?;
    for i in 0..n {
        let mut row = vec![i.to_string()];
        row.extend(columns.iter().map(|c| c[i].to_string()));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes the trace set of `cfg` into `dir` under the standard file names
/// and returns the relative paths.
pub fn write_traces(
    trace: &ScenarioTrace,
    battery: &BatteryModel,
    dir: &Path,
) -> Result<TraceFiles> {
    create_dir(dir)?;
    write_indexed(
        &dir.join(PLAN_FILE),
        "slot",
        &["p_disp_kw"],
        &[&trace.p_disp],
    )?;
    write_indexed(
        &dir.join(LOAD_FILE),
        "tick",
        &["value_kw"],
        &[&trace.load_10s],
    )?;
    write_indexed(
        &dir.join(PV_MPP_FILE),
        "tick",
        &["value_kw"],
        &[&trace.pv_mpp_10s],
    )?;
    write_indexed(
        &dir.join(PV_FORECAST_FILE),
        "slot",
        &["g_hat_kw"],
        &[&trace.pv_gmax_5min],
    )?;
    let pct = |v: &[f64]| v.iter().map(|x| 100.0 * x).collect::<Vec<_>>();
    write_indexed(
        &dir.join(SOC_BOUNDS_FILE),
        "slot",
        &["soc_min_pct", "soc_max_pct"],
        &[&pct(&battery.soc_min), &pct(&battery.soc_max)],
    )?;
    if let Some(f) = &trace.load_forecast {
        write_indexed(
            &dir.join(LOAD_FORECAST_FILE),
            "slot",
            &["load_forecast_kw"],
            &[f],
        )?;
    }
    Ok(TraceFiles {
        plan: PLAN_FILE.into(),
        load: LOAD_FILE.into(),
        pv_mpp: PV_MPP_FILE.into(),
        pv_forecast: PV_FORECAST_FILE.into(),
        soc_bounds: SOC_BOUNDS_FILE.into(),
        load_forecast: trace
            .load_forecast
            .as_ref()
            .map(|_| LOAD_FORECAST_FILE.into()),
    })
}

fn fixed(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

/// Writes `slots.csv`, `summary.csv` and `admm_trace.csv` into `out_dir`.
pub fn write_results(result: &DayResult, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;

    let path = out_dir.join("slots.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(SLOTS_HEADER).map_err(csv_err(&path))?;
    for s in &result.slots {
        let row = [
            s.slot.to_string(),
            fixed(s.p_disp_kw),
            fixed(s.load_kw),
            fixed(s.gcp_kw),
            fixed(s.error_kw),
            fixed(s.e_hat_kw),
            fixed(s.battery_kw),
            fixed(s.pv_setpoint_kw),
            fixed(s.g_hat_kw),
            fixed(s.pv_kw),
            fixed(100.0 * s.soc_start),
            fixed(100.0 * s.soc_end),
            fixed(100.0 * s.soc_min),
            fixed(100.0 * s.soc_max),
            s.iterations.to_string(),
            fixed(s.accuracy_kw),
            fixed(s.rho),
            u8::from(s.converged).to_string(),
            s.saturated_ticks.to_string(),
        ];
        w.write_record(&row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;

    let path = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["metric", "value"])
        .map_err(csv_err(&path))?;
    for (name, value) in result.summary().rows() {
        w.write_record([name.to_string(), fixed(value)])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;

    let path = out_dir.join("admm_trace.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record([
        "slot", "k", "r_norm", "s_norm", "rho", "eps_pri", "eps_dual",
    ])
    .map_err(csv_err(&path))?;
    for (slot, trace) in result.admm_traces.iter().enumerate() {
        for it in trace {
            w.write_record([
                slot.to_string(),
                it.k.to_string(),
                fixed(it.r_norm),
                fixed(it.s_norm),
                fixed(it.rho),
                fixed(it.eps_pri),
                fixed(it.eps_dual),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|source| Error::Io { path, source })
}

/// Reads `slots.csv` back into slot records (SOC converted to fractions).
pub fn read_slots(path: &Path) -> Result<Vec<SlotRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if !header.iter().eq(SLOTS_HEADER) {
        return Err(trace_err(path, "unexpected slots.csv header"));
    }
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let f = |c: usize| -> Result<f64> {
            record[c]
                .parse()
                .map_err(|_| trace_err(path, format!("line {}: bad {}", row + 2, SLOTS_HEADER[c])))
        };
        let u = |c: usize| -> Result<usize> {
            record[c]
                .parse()
                .map_err(|_| trace_err(path, format!("line {}: bad {}", row + 2, SLOTS_HEADER[c])))
        };
        out.push(SlotRecord {
            slot: u(0)?,
            p_disp_kw: f(1)?,
            load_kw: f(2)?,
            gcp_kw: f(3)?,
            error_kw: f(4)?,
            e_hat_kw: f(5)?,
            battery_kw: f(6)?,
            pv_setpoint_kw: f(7)?,
            g_hat_kw: f(8)?,
            pv_kw: f(9)?,
            soc_start: f(10)? / 100.0,
            soc_end: f(11)? / 100.0,
            soc_min: f(12)? / 100.0,
            soc_max: f(13)? / 100.0,
            iterations: u(14)?,
            accuracy_kw: f(15)?,
            rho: f(16)?,
            converged: u(17)? != 0,
            saturated_ticks: u(18)?,
        });
    }
    Ok(out)
}

/// Reads `summary.csv` as `(metric, value)` pairs.
pub fn read_summary(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    rdr.records()
        .map(|r| {
            let r = r.map_err(csv_err(path))?;
            let v = r[1]
                .parse()
                .map_err(|_| trace_err(path, format!("bad value for {}", &r[0])))?;
            Ok((r[0].to_string(), v))
        })
        .collect()
}

/// Column layout shared by the CLI comparison table.
pub fn comparison_rows(results: &[(Mode, SummaryStats)]) -> Vec<(String, Vec<f64>)> {
    let Some((_, first)) = results.first() else {
        return Vec::new();
    };
    first
        .rows()
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            (
                name.to_string(),
                results.iter().map(|(_, s)| s.rows()[i].1).collect(),
            )
        })
        .collect()
}
