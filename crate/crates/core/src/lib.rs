//! Two-layer dispatch of a battery and a curtailable PV plant behind one
//! grid connection point: a 10-second tracker follows a 5-minute dispatch
//! plan, and a receding-horizon ADMM coordinator splits the forecast
//! deviation between battery and PV.

pub mod admm;
pub mod error;
pub mod io;
pub mod model;
pub mod sim;
pub mod solvers;
pub mod stats;
pub mod synth;
pub mod tracker;

pub use admm::{
    solve_coordination, AdmmConfig, AdmmState, CoordinationProblem, CoordinationResult,
    IterationRecord,
};
pub use error::{Error, Result};
pub use model::{
    soc_step, soc_trajectory, BatteryModel, ErrorForecast, PvForecast, ScenarioTrace, TimeGrid,
};
pub use sim::{
    run_comparison, run_day, DayResult, Forecaster, Mode, ScenarioConfig, SlotRecord, TickRecord,
};
pub use solvers::{bess_update, consensus_update, pv_update, BoxChainQp};
pub use stats::{summarize, SummaryStats};
pub use tracker::{SlotReport, SlotTracker, TickOutcome};
