//! Seeded generator for the synthetic reference day.
//!
//! The day mirrors a small office feeder: uncontrollable prosumption with a
//! daytime office block and rooftop PV, a 13 kWp curtailable plant, and a
//! 560 kWh / 720 kW battery. Clouds follow a slow AR(1) process; the
//! day-ahead forecasts see a smoothed version of them and the PV forecast
//! can be biased. The dispatch plan is a smoothed prosumption
//! forecast, lowered in the evening so the battery discharges and regains
//! flexibility for the next day.
//!
//! From `ceiling_hour` on the SOC ceiling drops to `ceiling_margin` below
//! where battery-only dispatch would take the SOC at that time, which makes
//! the late-day flexibility constraint bind.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::{BatteryModel, ScenarioTrace, TimeGrid};
use crate::sim::{Forecaster, Mode, ScenarioConfig};

/// Coordinator SOC back-off used by the reference scenario.
pub const REFERENCE_SOC_BACKOFF: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub base_load_kw: f64,
    pub office_load_kw: f64,
    pub rooftop_kwp: f64,
    pub curtailable_kwp: f64,
    /// Clear-sky output per kWp at solar noon.
    pub pv_derate: f64,
    /// Multiplicative optimism of the PV forecast.
    pub pv_forecast_bias: f64,
    pub energy_kwh: f64,
    pub p_max_kw: f64,
    pub soc_init: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Evening discharge the plan asks for to restore flexibility for the
    /// next day (kW, from `offset_hour` to midnight).
    pub evening_offset_kw: f64,
    pub offset_hour: f64,
    pub ceiling_hour: f64,
    pub ceiling_margin: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            base_load_kw: 40.0,
            office_load_kw: 170.0,
            rooftop_kwp: 82.0,
            curtailable_kwp: 13.0,
            pv_derate: 0.8,
            pv_forecast_bias: 1.0,
            energy_kwh: 560.0,
            p_max_kw: 720.0,
            soc_init: 0.5,
            soc_min: 0.1,
            soc_max: 0.9,
            evening_offset_kw: 12.0,
            offset_hour: 21.0,
            ceiling_hour: 20.0,
            ceiling_margin: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDay {
    pub trace: ScenarioTrace,
    pub battery: BatteryModel,
    pub seed: u64,
}

fn sun(h: f64) -> f64 {
    const RISE: f64 = 5.5;
    const SET: f64 = 21.0;
    if h <= RISE || h >= SET {
        0.0
    } else {
        (std::f64::consts::PI * (h - RISE) / (SET - RISE))
            .sin()
            .powf(1.3)
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Office occupancy in `[0, 1]` with a lunch dip.
fn office(h: f64) -> f64 {
    let open = logistic((h - 7.5) / 0.5) * logistic((18.0 - h) / 0.6);
    open * (1.0 - 0.12 * (-((h - 12.5) / 0.6).powi(2)).exp())
}

/// Centered moving average with a window shrinking at the edges.
fn smooth(v: &[f64], half_width: usize) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(half_width);
            let hi = (i + half_width + 1).min(v.len());
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

pub fn generate(seed: u64) -> Result<SyntheticDay> {
    generate_with(&SyntheticParams::default(), seed)
}

pub fn generate_with(p: &SyntheticParams, seed: u64) -> Result<SyntheticDay> {
    let grid = TimeGrid::default();
    let n = grid.slots_per_day;
    let tps = grid.ticks_per_slot;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut z = || std_normal.sample(&mut rng);

    let hour = |slot: usize| (slot as f64 + 0.5) * grid.slot_hours();

    // Slow cloud cover: clear-sky fraction reaching the panels.
    let mut x: f64 = 0.0;
    let clouds: Vec<f64> = (0..n)
        .map(|_| {
            x = 0.97 * x + 0.06 * z();
            (0.75 + x).clamp(0.15, 1.0)
        })
        .collect();
    let clouds_forecast = smooth(&clouds, 6);

    // Slot-level deviation of the prosumption from its forecast.
    let mut dev = 0.0;
    let deviation: Vec<f64> = (0..n)
        .map(|i| {
            let sigma = 1.0 + 6.0 * office(hour(i));
            dev = 0.3 * dev + sigma * z();
            dev
        })
        .collect();

    let mut load_10s = Vec::with_capacity(n * tps);
    let mut pv_mpp_10s = Vec::with_capacity(n * tps);
    for i in 0..n {
        for m in 0..tps {
            let h = (i as f64 + (m as f64 + 0.5) / tps as f64) * grid.slot_hours();
            let rooftop = p.rooftop_kwp * p.pv_derate * sun(h) * clouds[i];
            let noise = (0.5 + 2.0 * office(h)) * z();
            load_10s.push(
                p.base_load_kw + p.office_load_kw * office(h) - rooftop + deviation[i] + noise,
            );
            let flicker = 1.0 + 0.02 * z();
            pv_mpp_10s
                .push((p.curtailable_kwp * p.pv_derate * sun(h) * clouds[i] * flicker).max(0.0));
        }
    }

    let load_forecast: Vec<f64> = (0..n)
        .map(|i| {
            let h = hour(i);
            p.base_load_kw + p.office_load_kw * office(h)
                - p.rooftop_kwp * p.pv_derate * sun(h) * clouds_forecast[i]
        })
        .collect();
    let pv_gmax_5min: Vec<f64> = (0..n)
        .map(|i| {
            p.pv_forecast_bias * p.curtailable_kwp * p.pv_derate * sun(hour(i)) * clouds_forecast[i]
        })
        .collect();
    let p_disp: Vec<f64> = smooth(&load_forecast, 2)
        .into_iter()
        .enumerate()
        .map(|(i, l)| l - p.evening_offset_kw * logistic((hour(i) - p.offset_hour) / 0.1))
        .collect();

    let trace = ScenarioTrace {
        p_disp,
        load_10s,
        pv_mpp_10s,
        pv_gmax_5min,
        load_forecast: Some(load_forecast),
    };

    // Battery-only SOC at the ceiling hour: the battery absorbs every
    // deviation from the plan, including the whole curtailable PV output.
    let alpha = grid.slot_hours() / p.energy_kwh;
    let load_mean = ScenarioTrace::slot_means(&trace.load_10s, tps);
    let pv_mean = ScenarioTrace::slot_means(&trace.pv_mpp_10s, tps);
    let ceiling_slot = ((p.ceiling_hour / grid.slot_hours()).round() as usize).min(n);
    let soc_at_ceiling = p.soc_init
        + alpha
            * (0..ceiling_slot)
                .map(|i| trace.p_disp[i] - load_mean[i] + pv_mean[i])
                .sum::<f64>();
    let ceiling = (soc_at_ceiling - p.ceiling_margin).clamp(p.soc_min, p.soc_max);

    let soc_min = vec![p.soc_min; n];
    let soc_max: Vec<f64> = (0..n)
        .map(|i| {
            if i >= ceiling_slot {
                ceiling
            } else {
                p.soc_max
            }
        })
        .collect();
    let battery = BatteryModel::new(
        p.energy_kwh,
        -p.p_max_kw,
        p.p_max_kw,
        p.soc_init,
        soc_min,
        soc_max,
        grid.slot_seconds,
    )?;
    Ok(SyntheticDay {
        trace,
        battery,
        seed,
    })
}

/// The constrained reference scenario: synthetic day, day-ahead prosumption
/// forecast, default ADMM settings and [`REFERENCE_SOC_BACKOFF`].
pub fn reference_scenario(seed: u64, mode: Mode) -> Result<ScenarioConfig> {
    let day = generate(seed)?;
    let mut cfg = ScenarioConfig::new(mode, day.trace, day.battery, Forecaster::TraceProvided);
    cfg.soc_backoff = REFERENCE_SOC_BACKOFF;
    cfg.validate()?;
    Ok(cfg)
}
