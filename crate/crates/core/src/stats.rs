//! Day-level statistics: tracking error, PV energy and curtailment, SOC
//! bound distance, and coordination effort.

use serde::{Deserialize, Serialize};

use crate::sim::SlotRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub slots: usize,
    pub rmse_kw: f64,
    pub mean_error_kw: f64,
    pub max_abs_error_kw: f64,
    pub pv_generation_kwh: f64,
    pub curtailment_kwh: f64,
    /// Largest signed distance of the end-of-slot SOC from its bounds, in
    /// percent; positive values are violations.
    pub max_soc_bound_distance_pct: f64,
    pub coordinated_slots: usize,
    pub converged_slots: usize,
    pub iterations_mean: f64,
    pub iterations_std: f64,
    pub iterations_max: usize,
    pub accuracy_mean_kw: f64,
    pub accuracy_std_kw: f64,
    pub accuracy_max_kw: f64,
}

impl SummaryStats {
    /// `(name, value)` pairs in the order used by `summary.csv`.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("slots", self.slots as f64),
            ("rmse_kw", self.rmse_kw),
            ("mean_error_kw", self.mean_error_kw),
            ("max_abs_error_kw", self.max_abs_error_kw),
            ("pv_generation_kwh", self.pv_generation_kwh),
            ("curtailment_kwh", self.curtailment_kwh),
            (
                "max_soc_bound_distance_pct",
                self.max_soc_bound_distance_pct,
            ),
            ("coordinated_slots", self.coordinated_slots as f64),
            ("converged_slots", self.converged_slots as f64),
            ("iterations_mean", self.iterations_mean),
            ("iterations_std", self.iterations_std),
            ("iterations_max", self.iterations_max as f64),
            ("accuracy_mean_kw", self.accuracy_mean_kw),
            ("accuracy_std_kw", self.accuracy_std_kw),
            ("accuracy_max_kw", self.accuracy_max_kw),
        ]
    }
}

/// Sum starting from `+0.0` (an empty `Sum` of floats is `-0.0`).
fn sum(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |a, b| a + b)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates slot records; coordination statistics only cover slots where
/// the coordinator ran.
pub fn summarize(slots: &[SlotRecord], slot_hours: f64) -> SummaryStats {
    let n = slots.len();
    let errors: Vec<f64> = slots.iter().map(|s| s.error_kw).collect();
    let (rmse, mean) = if n == 0 {
        (0.0, 0.0)
    } else {
        (
            (sum(errors.iter().map(|e| e * e)) / n as f64).sqrt(),
            sum(errors.iter().copied()) / n as f64,
        )
    };
    let max_abs = errors.iter().fold(0.0_f64, |m, e| m.max(e.abs()));

    let pv_generation = sum(slots.iter().map(|s| s.pv_kw)) * slot_hours;
    let curtailment = sum(slots
        .iter()
        .map(|s| s.g_hat_kw - s.pv_setpoint_kw)
        .filter(|&d| d > 0.0))
        * slot_hours;
    let max_distance = slots
        .iter()
        .map(|s| (s.soc_end - s.soc_max).max(s.soc_min - s.soc_end))
        .fold(f64::NEG_INFINITY, f64::max);

    let coordinated: Vec<&SlotRecord> = slots.iter().filter(|s| s.iterations > 0).collect();
    let iterations: Vec<f64> = coordinated.iter().map(|s| s.iterations as f64).collect();
    let accuracy: Vec<f64> = coordinated.iter().map(|s| s.accuracy_kw).collect();
    let (it_mean, it_std) = mean_std(&iterations);
    let (acc_mean, acc_std) = mean_std(&accuracy);

    SummaryStats {
        slots: n,
        rmse_kw: rmse,
        mean_error_kw: mean,
        max_abs_error_kw: max_abs,
        pv_generation_kwh: pv_generation,
        curtailment_kwh: curtailment,
        max_soc_bound_distance_pct: if n == 0 { 0.0 } else { 100.0 * max_distance },
        coordinated_slots: coordinated.len(),
        converged_slots: coordinated.iter().filter(|s| s.converged).count(),
        iterations_mean: it_mean,
        iterations_std: it_std,
        iterations_max: coordinated.iter().map(|s| s.iterations).max().unwrap_or(0),
        accuracy_mean_kw: acc_mean,
        accuracy_std_kw: acc_std,
        accuracy_max_kw: accuracy.iter().copied().fold(0.0, f64::max),
    }
}
