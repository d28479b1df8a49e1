//! Day-long playback of the two-layer controller.
//!
//! Every slot: refresh the corrective-power forecast over the remaining
//! horizon, let the coordinator fix the PV set-point (ADMM mode only), run
//! the thirty tracking ticks against the recorded prosumption and PV traces,
//! and read the SOC back for the next slot.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::admm::{
    solve_coordination, AdmmConfig, AdmmState, CoordinationProblem, IterationRecord,
};
use crate::error::{Error, Result};
use crate::model::{BatteryModel, ErrorForecast, PvForecast, ScenarioTrace, TimeGrid};
use crate::stats::{summarize, SummaryStats};
use crate::tracker::SlotTracker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Battery idle, PV at its maximum power point.
    NoDispatch,
    /// Battery tracks the plan, PV at its maximum power point.
    DispatchOnly,
    /// Battery tracks the plan, PV set-point from the coordinator.
    DispatchWithAdmm,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::NoDispatch, Mode::DispatchOnly, Mode::DispatchWithAdmm];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NoDispatch => "no_dispatch",
            Mode::DispatchOnly => "dispatch_only",
            Mode::DispatchWithAdmm => "dispatch_admm",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                format!("unknown mode `{s}` (expected no_dispatch, dispatch_only or dispatch_admm)")
            })
    }
}

/// Source of the prosumption forecast behind `ê`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Forecaster {
    /// Holds the last realized slot-average prosumption.
    Persistence,
    /// Realized slot averages (oracle knowledge of the future).
    Perfect,
    /// Day-ahead forecast supplied with the trace.
    TraceProvided,
}

impl Forecaster {
    pub fn as_str(self) -> &'static str {
        match self {
            Forecaster::Persistence => "persistence",
            Forecaster::Perfect => "perfect",
            Forecaster::TraceProvided => "trace",
        }
    }
}

impl fmt::Display for Forecaster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Forecaster {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        [
            Forecaster::Persistence,
            Forecaster::Perfect,
            Forecaster::TraceProvided,
        ]
        .into_iter()
        .find(|f| f.as_str() == s)
        .ok_or_else(|| format!("unknown forecaster `{s}` (expected persistence, perfect or trace)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub trace: ScenarioTrace,
    /// Battery at the start of the day, with the full-day SOC bound profile.
    pub battery: BatteryModel,
    pub admm: AdmmConfig,
    pub forecaster: Forecaster,
    /// SOC back-off (fraction) applied to the coordinator's view of the
    /// bounds beyond the current slot, as a margin for forecast error. The
    /// tracker and the reported bound distance use the true bounds.
    pub soc_backoff: f64,
    pub grid: TimeGrid,
    /// Keep every tick in the result (large; for diagnostics and tests).
    pub record_ticks: bool,
}

impl ScenarioConfig {
    /// A full-day scenario with default ADMM settings, no back-off and no
    /// tick recording.
    pub fn new(
        mode: Mode,
        trace: ScenarioTrace,
        battery: BatteryModel,
        forecaster: Forecaster,
    ) -> Self {
        Self {
            mode,
            grid: TimeGrid::with_slots(battery.slots()),
            trace,
            battery,
            admm: AdmmConfig::default(),
            forecaster,
            soc_backoff: 0.0,
            record_ticks: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.trace.validate(&self.grid)?;
        self.admm.validate()?;
        if self.battery.slots() != self.grid.slots_per_day {
            return Err(Error::LengthMismatch {
                what: "soc bound profile",
                expected: self.grid.slots_per_day,
                got: self.battery.slots(),
            });
        }
        if (self.battery.slot_seconds() - self.grid.slot_seconds).abs() > 1e-9 {
            return Err(Error::InvalidModel(
                "battery and grid slot durations differ".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.soc_backoff) {
            return Err(Error::config(
                "coordinator.soc_backoff_pct",
                "must lie in [0, 50)",
            ));
        }
        if self.forecaster == Forecaster::TraceProvided && self.trace.load_forecast.is_none() {
            return Err(Error::config(
                "forecaster",
                "`trace` needs a prosumption forecast series",
            ));
        }
        Ok(())
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self {
            mode,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub p_disp_kw: f64,
    /// Realized slot-average prosumption.
    pub load_kw: f64,
    pub gcp_kw: f64,
    /// Tracking error `gcp − p_disp`.
    pub error_kw: f64,
    /// Forecast corrective power for this slot.
    pub e_hat_kw: f64,
    /// Slot-average battery charging power.
    pub battery_kw: f64,
    pub pv_setpoint_kw: f64,
    pub g_hat_kw: f64,
    /// Slot-average PV output.
    pub pv_kw: f64,
    pub soc_start: f64,
    pub soc_end: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub iterations: usize,
    pub accuracy_kw: f64,
    pub rho: f64,
    pub converged: bool,
    pub saturated_ticks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub load_kw: f64,
    pub pv_kw: f64,
    pub battery_kw: f64,
    pub gcp_kw: f64,
    pub soc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayResult {
    pub mode: Mode,
    pub slot_hours: f64,
    pub slots: Vec<SlotRecord>,
    /// Residual history of every coordination call (empty outside ADMM mode).
    pub admm_traces: Vec<Vec<IterationRecord>>,
    pub ticks: Vec<TickRecord>,
    /// Wall-clock seconds per coordination call. Not serialized: it is the
    /// only non-deterministic part of a run.
    #[serde(skip)]
    pub coordination_seconds: Vec<f64>,
}

impl DayResult {
    pub fn summary(&self) -> SummaryStats {
        summarize(&self.slots, self.slot_hours)
    }
}

/// `ê_j = forecast prosumption_j − plan_j` for `j ≥ current_slot`.
pub fn build_error_forecast(
    plan: &[f64],
    load_forecast: &[f64],
    current_slot: usize,
) -> Result<ErrorForecast> {
    if plan.len() != load_forecast.len() {
        return Err(Error::LengthMismatch {
            what: "prosumption forecast",
            expected: plan.len(),
            got: load_forecast.len(),
        });
    }
    if current_slot >= plan.len() {
        return Err(Error::InvalidModel(format!(
            "slot {current_slot} beyond plan"
        )));
    }
    ErrorForecast::new(
        load_forecast[current_slot..]
            .iter()
            .zip(&plan[current_slot..])
            .map(|(l, p)| l - p)
            .collect(),
    )
}

/// Relative extra widening applied on top of the minimal one, so the
/// relaxed horizon has a non-degenerate interior.
const RELAX_MARGIN: f64 = 0.05;

/// Lead time (slots) over which the coordinator's SOC back-off ramps up to
/// its full value.
pub const BACKOFF_RAMP_SLOTS: usize = 12;

/// Battery as seen by the coordinator at `slot`: the bounds of slot `j`
/// tightened by `backoff · min(1, (j − slot) / BACKOFF_RAMP_SLOTS)`, so
/// the margin grows with the lead time of the SOC prediction. Bands too
/// narrow for the margin collapse to their midpoint.
fn planning_battery(battery: &BatteryModel, slot: usize, backoff: f64) -> BatteryModel {
    let mut planned = battery.clone();
    if backoff > 0.0 {
        for j in slot + 1..planned.slots() {
            let m = backoff * ((j - slot) as f64 / BACKOFF_RAMP_SLOTS as f64).min(1.0);
            let (lo, hi) = (battery.soc_min[j], battery.soc_max[j]);
            let (lo, hi) = if hi - lo < 2.0 * m {
                let mid = 0.5 * (lo + hi);
                (mid, mid)
            } else {
                (lo + m, hi - m)
            };
            planned.soc_min[j] = lo;
            planned.soc_max[j] = hi;
        }
    }
    planned
}

struct Forecasts {
    load_true: Vec<f64>,
    pv_true: Vec<f64>,
}

impl Forecasts {
    fn new(cfg: &ScenarioConfig) -> Self {
        let tps = cfg.grid.ticks_per_slot;
        Self {
            load_true: ScenarioTrace::slot_means(&cfg.trace.load_10s, tps),
            pv_true: ScenarioTrace::slot_means(&cfg.trace.pv_mpp_10s, tps),
        }
    }

    /// Full-day prosumption forecast as seen at the start of `slot`; only
    /// entries from `slot` on are meaningful.
    fn load(&self, cfg: &ScenarioConfig, slot: usize) -> Vec<f64> {
        match cfg.forecaster {
            Forecaster::Perfect => self.load_true.clone(),
            Forecaster::TraceProvided => cfg.trace.load_forecast.clone().unwrap_or_default(),
            Forecaster::Persistence => {
                let last = if slot == 0 {
                    cfg.trace
                        .load_forecast
                        .as_ref()
                        .map_or(cfg.trace.p_disp[0], |f| f[0])
                } else {
                    self.load_true[slot - 1]
                };
                vec![last; cfg.grid.slots_per_day]
            }
        }
    }

    fn pv<'a>(&'a self, cfg: &'a ScenarioConfig) -> &'a [f64] {
        match cfg.forecaster {
            Forecaster::Perfect => &self.pv_true,
            _ => &cfg.trace.pv_gmax_5min,
        }
    }
}

/// Plays back one day.
pub fn run_day(cfg: &ScenarioConfig) -> Result<DayResult> {
    cfg.validate()?;
    let grid = cfg.grid;
    let n = grid.slots_per_day;
    let tps = grid.ticks_per_slot;
    let tick_alpha = cfg.battery.alpha_for(grid.tick_seconds());
    let forecasts = Forecasts::new(cfg);

    let mut battery = cfg.battery.clone();
    let mut warm: Option<AdmmState> = None;
    let mut slots = Vec::with_capacity(n);
    let mut admm_traces = Vec::new();
    let mut coordination_seconds = Vec::new();
    let mut ticks = Vec::with_capacity(if cfg.record_ticks { n * tps } else { 0 });

    for i in 0..n {
        let soc_start = battery.soc;
        let e_hat = build_error_forecast(&cfg.trace.p_disp, &forecasts.load(cfg, i), i)?;
        let g_hat_all = forecasts.pv(cfg);
        let g_hat_i = g_hat_all[i];

        let (setpoint, iterations, accuracy, rho, converged) = match cfg.mode {
            Mode::DispatchWithAdmm => {
                let mut problem = CoordinationProblem::from_battery(
                    &planning_battery(&battery, i, cfg.soc_backoff),
                    i,
                    &e_hat,
                    &PvForecast::new(g_hat_all[i..].to_vec())?,
                    cfg.admm.bess_tol,
                )?;
                // Even full curtailment cannot keep the forecast SOC inside
                // the planning bounds: plan against the least widened ones.
                if let Some(delta) = problem.coupled_slack().filter(|&d| d > 0.0) {
                    log::debug!(
                        "slot {i}: SOC bounds widened by {:.4} %",
                        100.0 * delta * battery.alpha()
                    );
                    problem.relax_soc_bounds(delta * (1.0 + RELAX_MARGIN));
                }
                let started = Instant::now();
                let res = solve_coordination(&problem, &cfg.admm, warm.take())?;
                coordination_seconds.push(started.elapsed().as_secs_f64());
                // A non-converged iterate (typically an infeasible horizon
                // with a runaway penalty) is a poor starting point.
                warm = if res.converged {
                    res.state.shifted()
                } else {
                    None
                };
                let rho = res.state.rho;
                admm_traces.push(res.trace);
                (
                    res.g_setpoint,
                    res.iterations,
                    res.accuracy,
                    rho,
                    res.converged,
                )
            }
            _ => (g_hat_i, 0, 0.0, 0.0, false),
        };

        let mut tracker = SlotTracker::new(cfg.trace.p_disp[i], i, &battery, tps)?;
        for m in 0..tps {
            let t = i * tps + m;
            let load = cfg.trace.load_10s[t];
            let mpp = cfg.trace.pv_mpp_10s[t];
            // Curtailment caps the plant; irradiance dips pass through.
            let pv = match cfg.mode {
                Mode::DispatchWithAdmm => mpp.min(setpoint),
                _ => mpp,
            };
            let out = match cfg.mode {
                Mode::NoDispatch => tracker.record_idle(load, pv, &battery)?,
                _ => tracker.tick(load, pv, &battery)?,
            };
            battery.soc += tick_alpha * out.battery_kw;
            if cfg.record_ticks {
                ticks.push(TickRecord {
                    load_kw: load,
                    pv_kw: pv,
                    battery_kw: out.battery_kw,
                    gcp_kw: out.gcp_kw,
                    soc: battery.soc,
                });
            }
        }
        let report = tracker.slot_close()?;

        slots.push(SlotRecord {
            slot: i,
            p_disp_kw: cfg.trace.p_disp[i],
            load_kw: forecasts.load_true[i],
            gcp_kw: report.gcp_avg_kw,
            error_kw: report.error_kw,
            e_hat_kw: e_hat.values()[0],
            battery_kw: report.battery_avg_kw,
            pv_setpoint_kw: setpoint,
            g_hat_kw: g_hat_i,
            pv_kw: report.pv_avg_kw,
            soc_start,
            soc_end: battery.soc,
            soc_min: battery.soc_min[i],
            soc_max: battery.soc_max[i],
            iterations,
            accuracy_kw: accuracy,
            rho,
            converged,
            saturated_ticks: report.saturated_ticks,
        });
    }

    Ok(DayResult {
        mode: cfg.mode,
        slot_hours: grid.slot_hours(),
        slots,
        admm_traces,
        ticks,
        coordination_seconds,
    })
}

/// Runs all three modes on the same scenario, concurrently.
pub fn run_comparison(cfg: &ScenarioConfig) -> Result<Vec<DayResult>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = Mode::ALL
            .into_iter()
            .map(|mode| {
                let cfg = cfg.with_mode(mode);
                scope.spawn(move || run_day(&cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("playback thread panicked"))
            .collect()
    })
}
