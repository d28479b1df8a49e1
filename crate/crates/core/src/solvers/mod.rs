//! Per-iteration minimizations of the coordination loop.
//!
//! * [`pv_update`]: closed form for the curtailable PV plant,
//! * [`bess_update`]: projection onto the battery power and SOC constraints,
//! * [`consensus_update`]: aggregator step onto the coupling hyperplane.

mod projection;

pub use projection::{bess_update, BoxChainQp, DEFAULT_TOL};

use crate::error::{Error, Result};

/// Minimizes `Σ (G_j − Ĝ_j)² + (ρ/2) ‖G − z‖²` over `0 ≤ G_j ≤ Ĝ_j`.
///
/// The objective is separable and strictly convex, so the box-constrained
/// minimizer is the clipped unconstrained one.
pub fn pv_update(g_hat: &[f64], z: &[f64], rho: f64) -> Result<Vec<f64>> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidModel(format!(
            "penalty must be positive, got {rho}"
        )));
    }
    if g_hat.len() != z.len() {
        return Err(Error::LengthMismatch {
            what: "pv update operand",
            expected: g_hat.len(),
            got: z.len(),
        });
    }
    let w_hat = 2.0 / (2.0 + rho);
    let w_z = rho / (2.0 + rho);
    Ok(g_hat
        .iter()
        .zip(z)
        .map(|(&g, &zj)| (w_hat * g + w_z * zj).clamp(0.0, g.max(0.0)))
        .collect())
}

/// Closest pair `(𝒢, ℬ)` to `(a, b)` with `𝒢_j + ℬ_j = e_j` in every slot.
///
/// Both components move by the same `δ_j = (e_j − a_j − b_j) / 2`; the battery
/// copy is taken as `e_j − 𝒢_j` so the coupling holds to the last ulp.
pub fn consensus_update(a: &[f64], b: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() || a.len() != e.len() {
        return Err(Error::LengthMismatch {
            what: "consensus operands",
            expected: a.len(),
            got: if a.len() != b.len() { b.len() } else { e.len() },
        });
    }
    let mut gc = Vec::with_capacity(a.len());
    let mut bc = Vec::with_capacity(a.len());
    for j in 0..a.len() {
        let delta = 0.5 * (e[j] - a[j] - b[j]);
        let g = a[j] + delta;
        gc.push(g);
        bc.push(e[j] - g);
    }
    Ok((gc, bc))
}
