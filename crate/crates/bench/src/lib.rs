//! Fixtures shared by the benchmarks.

use dispatch_core::sim::build_error_forecast;
use dispatch_core::solvers::DEFAULT_TOL;
use dispatch_core::synth::generate;
use dispatch_core::{BoxChainQp, CoordinationProblem, PvForecast};

/// Coordination problem of the synthetic day at `slot`, with the initial
/// SOC and the day-ahead forecasts.
pub fn reference_problem(seed: u64, slot: usize) -> CoordinationProblem {
    let day = generate(seed).expect("synthetic day");
    let forecast = day.trace.load_forecast.as_deref().expect("load forecast");
    let e_hat = build_error_forecast(&day.trace.p_disp, forecast, slot).expect("error forecast");
    let g_hat = PvForecast::new(day.trace.pv_gmax_5min[slot..].to_vec()).expect("pv forecast");
    CoordinationProblem::from_battery(&day.battery, slot, &e_hat, &g_hat, DEFAULT_TOL)
        .expect("problem")
}

/// Projection instance of length `n` with a wavy target that hits both the
/// box and the prefix-sum bounds.
pub fn wavy_projection(n: usize) -> BoxChainQp {
    let target = (0..n)
        .map(|j| 400.0 * (j as f64 / 7.0).sin() + 150.0)
        .collect();
    BoxChainQp::new(
        target,
        vec![-300.0; n],
        vec![300.0; n],
        vec![-2000.0; n],
        vec![2000.0; n],
        DEFAULT_TOL,
    )
    .expect("valid projection")
}
