//! Ten-second tracking layer.
//!
//! Within a slot, the battery set-point is chosen so that, if held for the
//! remaining ticks, the slot-average GCP power equals the dispatch target:
//!
//! ```text
//!   b = (target·T − energy so far) / remaining time − (prosumption − pv)
//! ```
//!
//! The result is clipped to the converter rating and to the power that keeps
//! the SOC projected to the end of the slot inside the current slot's bounds.
//! When the SOC already sits outside its bounds the guard only blocks moves
//! that would push it further out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BatteryModel;

#[derive(Debug, Clone, PartialEq)]
pub struct SlotTracker {
    pub p_disp_slot: f64,
    pub elapsed_ticks: usize,
    ticks_per_slot: usize,
    tick_seconds: f64,
    /// Sum of realized GCP power over elapsed ticks (kW·tick).
    gcp_sum: f64,
    /// Realized GCP energy minus target energy so far (kWh).
    pub energy_error_kwh: f64,
    pub b_limits: (f64, f64),
    pub soc_guard: (f64, f64),
    soc: f64,
    saturated_ticks: usize,
    battery_sum: f64,
    pv_sum: f64,
    samples: Vec<TickOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickOutcome {
    /// Applied battery charging power (kW).
    pub battery_kw: f64,
    /// Set-point before clipping (kW).
    pub requested_kw: f64,
    pub gcp_kw: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotReport {
    pub gcp_avg_kw: f64,
    /// Realized slot-average GCP power minus the dispatch target.
    pub error_kw: f64,
    pub soc_end: f64,
    pub battery_avg_kw: f64,
    pub pv_avg_kw: f64,
    pub saturated_ticks: usize,
}

impl SlotTracker {
    /// Starts tracking `slot` for `battery`, whose `soc` is the value at the
    /// start of the slot.
    pub fn new(
        p_disp_slot: f64,
        slot: usize,
        battery: &BatteryModel,
        ticks_per_slot: usize,
    ) -> Result<Self> {
        if !p_disp_slot.is_finite() {
            return Err(Error::NonFinite("dispatch target"));
        }
        if ticks_per_slot == 0 || slot >= battery.slots() {
            return Err(Error::Tracker(format!(
                "slot {slot} / {ticks_per_slot} ticks out of range"
            )));
        }
        Ok(Self {
            p_disp_slot,
            elapsed_ticks: 0,
            ticks_per_slot,
            tick_seconds: battery.slot_seconds() / ticks_per_slot as f64,
            gcp_sum: 0.0,
            energy_error_kwh: 0.0,
            b_limits: (battery.p_min_kw, battery.p_max_kw),
            soc_guard: (battery.soc_min[slot], battery.soc_max[slot]),
            soc: battery.soc,
            saturated_ticks: 0,
            battery_sum: 0.0,
            pv_sum: 0.0,
            samples: Vec::with_capacity(ticks_per_slot),
        })
    }

    pub fn remaining_ticks(&self) -> usize {
        self.ticks_per_slot - self.elapsed_ticks
    }

    /// Charging power the tick law asks for, before any clipping.
    pub fn requested(&self, prosumption_kw: f64, pv_kw: f64) -> f64 {
        let required_avg = (self.p_disp_slot * self.ticks_per_slot as f64 - self.gcp_sum)
            / self.remaining_ticks() as f64;
        required_avg - (prosumption_kw - pv_kw)
    }

    /// Feasible charging interval for the next tick given `soc`.
    pub fn limits(&self, soc: f64, battery: &BatteryModel) -> (f64, f64) {
        let alpha_rest = battery.alpha_for(self.tick_seconds) * self.remaining_ticks() as f64;
        let (soc_lo, soc_hi) = self.soc_guard;
        let up = ((soc_hi - soc) / alpha_rest).max(0.0);
        let down = ((soc_lo - soc) / alpha_rest).min(0.0);
        let lo = self.b_limits.0.max(down).min(self.b_limits.1);
        let hi = self.b_limits.1.min(up).max(lo);
        (lo, hi)
    }

    /// Advances one tick with the measured prosumption and PV output.
    /// `battery.soc` is taken as the measured SOC at the start of the tick;
    /// the caller applies the returned set-point to the plant.
    pub fn tick(
        &mut self,
        prosumption_kw: f64,
        pv_kw: f64,
        battery: &BatteryModel,
    ) -> Result<TickOutcome> {
        if self.elapsed_ticks >= self.ticks_per_slot {
            return Err(Error::Tracker("slot already complete".into()));
        }
        if !(prosumption_kw.is_finite() && pv_kw.is_finite()) {
            return Err(Error::NonFinite("tick measurement"));
        }
        let requested = self.requested(prosumption_kw, pv_kw);
        let (lo, hi) = self.limits(battery.soc, battery);
        let b = requested.clamp(lo, hi);
        let outcome = self.record(prosumption_kw, pv_kw, b, battery, requested);
        Ok(outcome)
    }

    /// Books a tick with a battery power chosen elsewhere (e.g. an idle
    /// battery).
    pub fn record_idle(
        &mut self,
        prosumption_kw: f64,
        pv_kw: f64,
        battery: &BatteryModel,
    ) -> Result<TickOutcome> {
        if self.elapsed_ticks >= self.ticks_per_slot {
            return Err(Error::Tracker("slot already complete".into()));
        }
        Ok(self.record(prosumption_kw, pv_kw, 0.0, battery, 0.0))
    }

    fn record(
        &mut self,
        prosumption_kw: f64,
        pv_kw: f64,
        b: f64,
        battery: &BatteryModel,
        requested: f64,
    ) -> TickOutcome {
        let gcp = prosumption_kw + b - pv_kw;
        let saturated = (b - requested).abs() > 1e-9;
        self.gcp_sum += gcp;
        self.battery_sum += b;
        self.pv_sum += pv_kw;
        self.energy_error_kwh += (gcp - self.p_disp_slot) * self.tick_seconds / 3600.0;
        self.soc = battery.soc + battery.alpha_for(self.tick_seconds) * b;
        self.saturated_ticks += usize::from(saturated);
        self.elapsed_ticks += 1;
        let outcome = TickOutcome {
            battery_kw: b,
            requested_kw: requested,
            gcp_kw: gcp,
            saturated,
        };
        self.samples.push(outcome);
        outcome
    }

    pub fn samples(&self) -> &[TickOutcome] {
        &self.samples
    }

    /// Closes the slot. Fails unless every tick has been booked.
    pub fn slot_close(&self) -> Result<SlotReport> {
        if self.elapsed_ticks != self.ticks_per_slot {
            return Err(Error::Tracker(format!(
                "slot closed after {} of {} ticks",
                self.elapsed_ticks, self.ticks_per_slot
            )));
        }
        let n = self.ticks_per_slot as f64;
        let gcp_avg = self.gcp_sum / n;
        Ok(SlotReport {
            gcp_avg_kw: gcp_avg,
            error_kw: gcp_avg - self.p_disp_slot,
            soc_end: self.soc,
            battery_avg_kw: self.battery_sum / n,
            pv_avg_kw: self.pv_sum / n,
            saturated_ticks: self.saturated_ticks,
        })
    }
}
