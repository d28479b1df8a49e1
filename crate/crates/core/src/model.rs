//! Domain types shared by the coordination and tracking layers.
//!
//! Sign conventions used throughout the crate:
//!
//! * battery power `b > 0` charges the battery and raises its SOC;
//! * the grid connection point (GCP) power is positive when importing, so the
//!   realized GCP power is `prosumption + battery charging - pv output`;
//! * SOC is a fraction in `[0, 1]`; percent only appears at the file boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slot/tick structure of one day of operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub slots_per_day: usize,
    pub slot_seconds: f64,
    pub ticks_per_slot: usize,
    pub current_slot: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            slots_per_day: 288,
            slot_seconds: 300.0,
            ticks_per_slot: 30,
            current_slot: 0,
        }
    }
}

impl TimeGrid {
    /// A grid with `slots` five-minute slots of thirty 10-second ticks each.
    pub fn with_slots(slots: usize) -> Self {
        Self {
            slots_per_day: slots,
            ..Self::default()
        }
    }

    pub fn tick_seconds(&self) -> f64 {
        self.slot_seconds / self.ticks_per_slot as f64
    }

    pub fn ticks_per_day(&self) -> usize {
        self.slots_per_day * self.ticks_per_slot
    }

    /// Slot duration in hours (1/12 for five-minute slots).
    pub fn slot_hours(&self) -> f64 {
        self.slot_seconds / 3600.0
    }

    /// Number of slots from the current one to the end of the day.
    pub fn remaining(&self) -> usize {
        self.slots_per_day - self.current_slot
    }

    pub fn advance(&mut self) -> bool {
        if self.current_slot + 1 < self.slots_per_day {
            self.current_slot += 1;
            true
        } else {
            false
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots_per_day == 0 || self.ticks_per_slot == 0 {
            return Err(Error::InvalidModel(
                "time grid must have slots and ticks".into(),
            ));
        }
        if !(self.slot_seconds.is_finite() && self.slot_seconds > 0.0) {
            return Err(Error::InvalidModel("slot duration must be positive".into()));
        }
        if self.current_slot >= self.slots_per_day {
            return Err(Error::InvalidModel(format!(
                "current slot {} outside [0, {})",
                self.current_slot, self.slots_per_day
            )));
        }
        Ok(())
    }
}

/// Battery energy storage system with time-varying SOC bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryModel {
    pub energy_kwh: f64,
    pub p_min_kw: f64,
    pub p_max_kw: f64,
    pub soc: f64,
    pub soc_min: Vec<f64>,
    pub soc_max: Vec<f64>,
    slot_seconds: f64,
    alpha: f64,
}

impl BatteryModel {
    pub fn new(
        energy_kwh: f64,
        p_min_kw: f64,
        p_max_kw: f64,
        soc: f64,
        soc_min: Vec<f64>,
        soc_max: Vec<f64>,
        slot_seconds: f64,
    ) -> Result<Self> {
        if !(energy_kwh.is_finite() && energy_kwh > 0.0) {
            return Err(Error::InvalidModel(format!(
                "energy capacity must be positive, got {energy_kwh}"
            )));
        }
        if !(p_min_kw.is_finite() && p_max_kw.is_finite()) {
            return Err(Error::NonFinite("battery power bounds"));
        }
        if !(p_min_kw <= 0.0 && 0.0 <= p_max_kw) {
            return Err(Error::InvalidModel(format!(
                "power bounds must satisfy p_min <= 0 <= p_max, got [{p_min_kw}, {p_max_kw}]"
            )));
        }
        if soc_min.len() != soc_max.len() || soc_min.is_empty() {
            return Err(Error::LengthMismatch {
                what: "soc bound profiles",
                expected: soc_min.len(),
                got: soc_max.len(),
            });
        }
        for (j, (&lo, &hi)) in soc_min.iter().zip(&soc_max).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::InvalidModel(format!(
                    "soc bounds at slot {j} must satisfy 0 <= min <= max <= 1, got [{lo}, {hi}]"
                )));
            }
        }
        if !soc.is_finite() {
            return Err(Error::NonFinite("initial soc"));
        }
        if soc < soc_min[0] || soc > soc_max[0] {
            return Err(Error::InvalidModel(format!(
                "initial soc {soc} outside slot-0 bounds [{}, {}]",
                soc_min[0], soc_max[0]
            )));
        }
        Ok(Self {
            energy_kwh,
            p_min_kw,
            p_max_kw,
            soc,
            soc_min,
            soc_max,
            slot_seconds,
            alpha: slot_seconds / 3600.0 / energy_kwh,
        })
    }

    /// Battery with constant SOC bounds over `slots` slots of five minutes.
    pub fn with_flat_bounds(
        energy_kwh: f64,
        p_max_kw: f64,
        soc: f64,
        soc_min: f64,
        soc_max: f64,
        slots: usize,
    ) -> Result<Self> {
        Self::new(
            energy_kwh,
            -p_max_kw,
            p_max_kw,
            soc,
            vec![soc_min; slots],
            vec![soc_max; slots],
            300.0,
        )
    }

    /// SOC change per kW over one slot.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// SOC change per kW over `seconds`.
    pub fn alpha_for(&self, seconds: f64) -> f64 {
        seconds / 3600.0 / self.energy_kwh
    }

    pub fn slot_seconds(&self) -> f64 {
        self.slot_seconds
    }

    pub fn slots(&self) -> usize {
        self.soc_min.len()
    }

    pub fn clamp_power(&self, b_kw: f64) -> f64 {
        b_kw.clamp(self.p_min_kw, self.p_max_kw)
    }

    /// Signed distance of `soc` from the slot bounds; positive means violation.
    pub fn bound_distance(&self, slot: usize, soc: f64) -> f64 {
        (soc - self.soc_max[slot]).max(self.soc_min[slot] - soc)
    }
}

/// Slot-level forecast of the curtailable plant's maximum output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvForecast {
    g_hat: Vec<f64>,
}

impl PvForecast {
    pub fn new(g_hat: Vec<f64>) -> Result<Self> {
        if g_hat.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("pv forecast"));
        }
        if let Some(j) = g_hat.iter().position(|&g| g < 0.0) {
            return Err(Error::InvalidModel(format!(
                "pv forecast must be non-negative (slot {j})"
            )));
        }
        Ok(Self { g_hat })
    }

    pub fn values(&self) -> &[f64] {
        &self.g_hat
    }

    pub fn tail(&self, from: usize) -> &[f64] {
        &self.g_hat[from..]
    }
}

/// Forecasted corrective power the two resources must deliver per slot.
///
/// Positive entries mean the prosumption is expected above the plan, so the
/// resources must inject `e_hat[j]` kW at the GCP (battery discharge plus
/// PV output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorForecast {
    e_hat: Vec<f64>,
}

impl ErrorForecast {
    pub fn new(e_hat: Vec<f64>) -> Result<Self> {
        if e_hat.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("error forecast"));
        }
        Ok(Self { e_hat })
    }

    pub fn values(&self) -> &[f64] {
        &self.e_hat
    }

    pub fn len(&self) -> usize {
        self.e_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_hat.is_empty()
    }
}

/// Input series for one day of playback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrace {
    /// Dispatch plan per slot (kW).
    pub p_disp: Vec<f64>,
    /// Uncontrollable prosumption per tick (kW, positive = consumption).
    pub load_10s: Vec<f64>,
    /// Realizable maximum output of the curtailable PV plant per tick (kW).
    pub pv_mpp_10s: Vec<f64>,
    /// Slot-level forecast of the PV maximum output (kW).
    pub pv_gmax_5min: Vec<f64>,
    /// Day-ahead prosumption forecast per slot, used by the trace forecaster.
    pub load_forecast: Option<Vec<f64>>,
}

impl ScenarioTrace {
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        let n = grid.slots_per_day;
        let ticks = grid.ticks_per_day();
        let check = |what: &'static str, v: &[f64], expected: usize| -> Result<()> {
            if v.len() != expected {
                return Err(Error::LengthMismatch {
                    what,
                    expected,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(what));
            }
            Ok(())
        };
        check("dispatch plan", &self.p_disp, n)?;
        check("prosumption series", &self.load_10s, ticks)?;
        check("pv mpp series", &self.pv_mpp_10s, ticks)?;
        check("pv forecast", &self.pv_gmax_5min, n)?;
        if let Some(f) = &self.load_forecast {
            check("prosumption forecast", f, n)?;
        }
        if self
            .pv_mpp_10s
            .iter()
            .chain(&self.pv_gmax_5min)
            .any(|&g| g < 0.0)
        {
            return Err(Error::InvalidModel("pv series must be non-negative".into()));
        }
        Ok(())
    }

    /// Slot averages of a tick series.
    pub fn slot_means(series: &[f64], ticks_per_slot: usize) -> Vec<f64> {
        series
            .chunks(ticks_per_slot)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

/// One slot of SOC propagation: `soc + alpha * b_kw` with `b_kw > 0` charging.
pub fn soc_step(soc: f64, b_kw: f64, battery: &BatteryModel) -> Result<f64> {
    if !(soc.is_finite() && b_kw.is_finite()) {
        return Err(Error::NonFinite("soc step input"));
    }
    Ok(soc + battery.alpha() * b_kw)
}

/// SOC after every prefix of `b_seq`, starting from `soc_i`.
pub fn soc_trajectory(soc_i: f64, b_seq: &[f64], battery: &BatteryModel) -> Result<Vec<f64>> {
    if !soc_i.is_finite() || b_seq.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("soc trajectory input"));
    }
    let alpha = battery.alpha();
    let mut cumulative = 0.0;
    Ok(b_seq
        .iter()
        .map(|&b| {
            cumulative += b;
            soc_i + alpha * cumulative
        })
        .collect())
}
