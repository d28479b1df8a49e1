//! Five-minute coordination layer: consensus ADMM between the PV plant and
//! the battery over the shrinking horizon from the current slot to the end
//! of the day.
//!
//! The coupled problem solved at every slot `i` is
//!
//! ```text
//!   minimize    Σ_j (G_j − Ĝ_j)²
//!   subject to  B_j + G_j = ê_j
//!               0 ≤ G_j ≤ Ĝ_j
//!               −p_max ≤ B_j ≤ −p_min
//!               SOC^min_j ≤ SOC_i − α (B_i + … + B_j) ≤ SOC^max_j
//! ```
//!
//! Inside this module `B` is the battery power *injected* at the GCP, i.e.
//! the negated charging power of [`BatteryModel`]. In this frame both
//! resources contribute with the same sign to the corrective power `ê`.
//!
//! Each iteration runs the two resource updates, then the aggregator's
//! consensus step, then the scaled dual update. Convergence uses primal and
//! dual residual norms against absolute/relative tolerances, and the
//! penalty is rebalanced whenever one residual outgrows the other by `μ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BatteryModel, ErrorForecast, PvForecast};
use crate::solvers::{bess_update, consensus_update, pv_update, BoxChainQp, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho0: f64,
    /// Residual balance factor.
    pub mu: f64,
    pub tau_incr: f64,
    pub tau_decr: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    /// Tolerance handed to the battery projection.
    pub bess_tol: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            mu: 10.0,
            tau_incr: 2.0,
            tau_decr: 2.0,
            eps_abs: 1e-2,
            eps_rel: 1e-3,
            max_iter: 50,
            bess_tol: DEFAULT_TOL,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive, got {v}")))
            }
        };
        let above_one = |key: &str, v: f64| {
            if v.is_finite() && v > 1.0 {
                Ok(())
            } else {
                Err(Error::config(
                    key,
                    format!("must be greater than 1, got {v}"),
                ))
            }
        };
        positive("admm.rho0", self.rho0)?;
        above_one("admm.mu", self.mu)?;
        above_one("admm.tau_incr", self.tau_incr)?;
        above_one("admm.tau_decr", self.tau_decr)?;
        positive("admm.eps_abs", self.eps_abs)?;
        positive("admm.eps_rel", self.eps_rel)?;
        positive("admm.bess_tol", self.bess_tol)?;
        if self.max_iter == 0 {
            return Err(Error::config("admm.max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// One slot's coordination instance over the remaining horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinationProblem {
    pub e_hat: Vec<f64>,
    pub g_hat: Vec<f64>,
    /// Battery constraints in the injection frame; `target` is overwritten
    /// at every iteration.
    pub battery: BoxChainQp,
}

impl CoordinationProblem {
    /// Builds the horizon `slot..N` from a battery whose `soc` is the
    /// measured state of charge at the start of `slot`.
    pub fn from_battery(
        battery: &BatteryModel,
        slot: usize,
        e_hat: &ErrorForecast,
        g_hat: &PvForecast,
        tol: f64,
    ) -> Result<Self> {
        let n = battery.slots();
        if slot >= n {
            return Err(Error::InvalidModel(format!(
                "slot {slot} outside a {n}-slot day"
            )));
        }
        let h = n - slot;
        for (what, len) in [
            ("error forecast tail", e_hat.len()),
            ("pv forecast tail", g_hat.values().len()),
        ] {
            if len != h {
                return Err(Error::LengthMismatch {
                    what,
                    expected: h,
                    got: len,
                });
            }
        }
        let alpha = battery.alpha();
        let chain_lo = battery.soc_max[slot..]
            .iter()
            .map(|&hi| (battery.soc - hi) / alpha)
            .collect();
        let chain_hi = battery.soc_min[slot..]
            .iter()
            .map(|&lo| (battery.soc - lo) / alpha)
            .collect();
        let qp = BoxChainQp::new(
            vec![0.0; h],
            vec![-battery.p_max_kw; h],
            vec![-battery.p_min_kw; h],
            chain_lo,
            chain_hi,
            tol,
        )?;
        Ok(Self {
            e_hat: e_hat.values().to_vec(),
            g_hat: g_hat.values().to_vec(),
            battery: qp,
        })
    }

    pub fn horizon(&self) -> usize {
        self.e_hat.len()
    }

    /// PV objective `Σ (G_j − Ĝ_j)²`.
    pub fn pv_objective(&self, g: &[f64]) -> f64 {
        g.iter()
            .zip(&self.g_hat)
            .map(|(a, b)| (a - b).powi(2))
            .sum()
    }

    /// Largest coupling violation `max_j |B_j + G_j − ê_j|`.
    pub fn coupling_error(&self, g: &[f64], b: &[f64]) -> f64 {
        g.iter()
            .zip(b)
            .zip(&self.e_hat)
            .map(|((g, b), e)| (g + b - e).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest widening `δ ≥ 0` of every SOC chain bound (kW summed over
    /// slots) for which some plan meets the coupling exactly with
    /// `0 ≤ G ≤ Ĝ`. `None` when the power limits alone rule that out.
    pub fn coupled_slack(&self) -> Option<f64> {
        let qp = &self.battery;
        let n = self.horizon();
        // With G = ê − B the PV box becomes ê − Ĝ ≤ B ≤ ê.
        let lo: Vec<f64> = (0..n)
            .map(|j| qp.lo[j].max(self.e_hat[j] - self.g_hat[j]))
            .collect();
        let hi: Vec<f64> = (0..n).map(|j| qp.hi[j].min(self.e_hat[j])).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return None;
        }
        let feasible = |delta: f64| {
            let (mut s_lo, mut s_hi) = (0.0, 0.0);
            for j in 0..n {
                s_lo = (s_lo + lo[j]).max(qp.chain_lo[j] - delta);
                s_hi = (s_hi + hi[j]).min(qp.chain_hi[j] + delta);
                if s_lo > s_hi {
                    return false;
                }
            }
            true
        };
        if feasible(0.0) {
            return Some(0.0);
        }
        let mut upper = 1.0;
        while !feasible(upper) {
            upper *= 2.0;
        }
        let mut lower = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lower + upper);
            if feasible(mid) {
                upper = mid;
            } else {
                lower = mid;
            }
        }
        Some(upper)
    }

    /// Widens the SOC chain bounds by `delta` on both sides.
    pub fn relax_soc_bounds(&mut self, delta: f64) {
        self.battery.chain_lo.iter_mut().for_each(|a| *a -= delta);
        self.battery.chain_hi.iter_mut().for_each(|b| *b += delta);
    }
}

/// Iterates of the scaled-form ADMM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmState {
    pub g: Vec<f64>,
    pub b: Vec<f64>,
    pub gc: Vec<f64>,
    pub bc: Vec<f64>,
    pub ug: Vec<f64>,
    pub ub: Vec<f64>,
    pub rho: f64,
    pub k: usize,
    pub r_norm: f64,
    pub s_norm: f64,
}

impl AdmmState {
    /// `G = Ĝ`, `B = 0`, copies projected onto the coupling, zero duals.
    pub fn cold(problem: &CoordinationProblem, rho0: f64) -> Result<Self> {
        let n = problem.horizon();
        let g = problem.g_hat.clone();
        let b = vec![0.0; n];
        let (gc, bc) = consensus_update(&g, &b, &problem.e_hat)?;
        Ok(Self {
            g,
            b,
            gc,
            bc,
            ug: vec![0.0; n],
            ub: vec![0.0; n],
            rho: rho0,
            k: 0,
            r_norm: f64::INFINITY,
            s_norm: f64::INFINITY,
        })
    }

    /// Drops the first slot so the state fits the next, one shorter,
    /// horizon. Returns `None` when nothing is left.
    pub fn shifted(&self) -> Option<Self> {
        if self.len() <= 1 {
            return None;
        }
        let tail = |v: &Vec<f64>| v[1..].to_vec();
        Some(Self {
            g: tail(&self.g),
            b: tail(&self.b),
            gc: tail(&self.gc),
            bc: tail(&self.bc),
            ug: tail(&self.ug),
            ub: tail(&self.ub),
            rho: self.rho,
            k: 0,
            r_norm: f64::INFINITY,
            s_norm: f64::INFINITY,
        })
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// One ADMM iteration at the current penalty. Leaves `rho` untouched.
    pub fn iterate(&mut self, problem: &CoordinationProblem) -> Result<IterationRecord> {
        let zg: Vec<f64> = self.gc.iter().zip(&self.ug).map(|(c, u)| c - u).collect();
        let zb: Vec<f64> = self.bc.iter().zip(&self.ub).map(|(c, u)| c - u).collect();
        // The two resource updates are independent of each other.
        self.g = pv_update(&problem.g_hat, &zg, self.rho)?;
        self.b = bess_update(&problem.battery.with_target(zb))?;

        let a: Vec<f64> = self.g.iter().zip(&self.ug).map(|(x, u)| x + u).collect();
        let bb: Vec<f64> = self.b.iter().zip(&self.ub).map(|(x, u)| x + u).collect();
        let (gc, bc) = consensus_update(&a, &bb, &problem.e_hat)?;
        let prev_gc = std::mem::replace(&mut self.gc, gc);
        let prev_bc = std::mem::replace(&mut self.bc, bc);

        for j in 0..self.len() {
            self.ug[j] += self.g[j] - self.gc[j];
            self.ub[j] += self.b[j] - self.bc[j];
        }
        self.k += 1;

        let (r, s) = residuals(self, &prev_gc, &prev_bc);
        self.r_norm = r;
        self.s_norm = s;
        Ok(IterationRecord {
            k: self.k,
            r_norm: r,
            s_norm: s,
            rho: self.rho,
            eps_pri: 0.0,
            eps_dual: 0.0,
        })
    }
}

/// Residual history entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub r_norm: f64,
    pub s_norm: f64,
    /// Penalty used during this iteration.
    pub rho: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinationResult {
    /// PV set-point for the current slot, within `[0, Ĝ_i]`.
    pub g_setpoint: f64,
    /// PV plan over the horizon (original variables).
    pub g_plan: Vec<f64>,
    /// Battery injection plan over the horizon (original variables,
    /// discharge positive). Advisory: the tracking layer overrides it.
    pub b_plan: Vec<f64>,
    pub iterations: usize,
    /// `max_j |B_j + G_j − ê_j|` on the original variables.
    pub accuracy: f64,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
    /// Final iterate, reusable as a warm start for the next slot.
    pub state: AdmmState,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Primal residual `‖G − 𝒢‖ + ‖B − ℬ‖` and dual residual
/// `ρ ‖(ℬ, 𝒢) − (ℬ_prev, 𝒢_prev)‖`.
pub fn residuals(state: &AdmmState, prev_gc: &[f64], prev_bc: &[f64]) -> (f64, f64) {
    let r = norm(state.g.iter().zip(&state.gc).map(|(a, b)| a - b))
        + norm(state.b.iter().zip(&state.bc).map(|(a, b)| a - b));
    let s = state.rho
        * norm(
            state
                .bc
                .iter()
                .zip(prev_bc)
                .chain(state.gc.iter().zip(prev_gc))
                .map(|(a, b)| a - b),
        );
    (r, s)
}

/// Primal and dual stopping tolerances from absolute and relative parts.
pub fn stopping_tolerances(state: &AdmmState, cfg: &AdmmConfig) -> (f64, f64) {
    let p = (state.g.len() + state.b.len()) as f64;
    let base = p.sqrt() * cfg.eps_abs;
    let originals = norm(state.g.iter().chain(&state.b).copied());
    let copies = norm(state.gc.iter().chain(&state.bc).copied());
    let duals = state.rho * norm(state.ug.iter().chain(&state.ub).copied());
    (
        base + cfg.eps_rel * originals.max(copies),
        base + cfg.eps_rel * duals,
    )
}

/// Residual balancing. Returns the new penalty and rescales the scaled
/// duals so `y = ρ u` is unchanged.
pub fn adapt_rho(state: &mut AdmmState, r_norm: f64, s_norm: f64, cfg: &AdmmConfig) -> f64 {
    let old = state.rho;
    let new = if r_norm > cfg.mu * s_norm {
        old * cfg.tau_incr
    } else if s_norm > cfg.mu * r_norm {
        old / cfg.tau_decr
    } else {
        old
    };
    if new != old {
        let scale = old / new;
        state
            .ug
            .iter_mut()
            .chain(state.ub.iter_mut())
            .for_each(|u| *u *= scale);
        state.rho = new;
    }
    new
}

/// Runs the coordination loop for one slot.
///
/// A `warm` state of the wrong length is ignored in favour of a cold start.
/// Reaching `max_iter` is not an error: the result carries
/// `converged = false` and the last iterate.
pub fn solve_coordination(
    problem: &CoordinationProblem,
    cfg: &AdmmConfig,
    warm: Option<AdmmState>,
) -> Result<CoordinationResult> {
    cfg.validate()?;
    let n = problem.horizon();
    if n == 0 {
        return Err(Error::InvalidModel("empty coordination horizon".into()));
    }
    // Infeasible battery constraints are a scenario error, not a slow solve.
    problem.battery.feasible_point()?;

    let mut state = match warm {
        Some(mut w) if w.len() == n => {
            let (gc, bc) = consensus_update(&w.gc, &w.bc, &problem.e_hat)?;
            w.gc = gc;
            w.bc = bc;
            w.k = 0;
            w
        }
        _ => AdmmState::cold(problem, cfg.rho0)?,
    };

    let mut trace = Vec::new();
    let mut converged = false;
    while state.k < cfg.max_iter {
        let mut rec = state.iterate(problem)?;
        let (eps_pri, eps_dual) = stopping_tolerances(&state, cfg);
        rec.eps_pri = eps_pri;
        rec.eps_dual = eps_dual;
        trace.push(rec);
        if rec.r_norm <= eps_pri && rec.s_norm <= eps_dual {
            converged = true;
            break;
        }
        adapt_rho(&mut state, rec.r_norm, rec.s_norm, cfg);
    }
    if !converged {
        log::warn!(
            "coordination stopped at {} iterations without convergence (r = {:.3e}, s = {:.3e})",
            state.k,
            state.r_norm,
            state.s_norm
        );
    }

    Ok(CoordinationResult {
        g_setpoint: state.gc[0].clamp(0.0, problem.g_hat[0]),
        g_plan: state.g.clone(),
        b_plan: state.b.clone(),
        iterations: state.k,
        accuracy: problem.coupling_error(&state.g, &state.b),
        converged,
        trace,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(e: &[f64], g: &[f64], battery: &BatteryModel) -> CoordinationProblem {
        let slot = battery.slots() - e.len();
        CoordinationProblem::from_battery(
            battery,
            slot,
            &ErrorForecast::new(e.to_vec()).unwrap(),
            &PvForecast::new(g.to_vec()).unwrap(),
            DEFAULT_TOL,
        )
        .unwrap()
    }

    #[test]
    fn residual_examples() {
        let mut s = AdmmState {
            g: vec![0.0; 2],
            b: vec![1.0, 1.0],
            gc: vec![0.0; 2],
            bc: vec![1.0, 1.0],
            ug: vec![0.0; 2],
            ub: vec![0.0; 2],
            rho: 1.0,
            k: 1,
            r_norm: 0.0,
            s_norm: 0.0,
        };
        assert_eq!(residuals(&s, &[0.0; 2], &[1.0, 1.0]), (0.0, 0.0));
        s.g = vec![3.0, 4.0];
        assert_eq!(residuals(&s, &[0.0; 2], &[1.0, 1.0]), (5.0, 0.0));
    }

    #[test]
    fn rho_adaptation_cases() {
        let cfg = AdmmConfig::default();
        let mut s = AdmmState {
            g: vec![0.0],
            b: vec![0.0],
            gc: vec![0.0],
            bc: vec![0.0],
            ug: vec![1.0],
            ub: vec![-2.0],
            rho: 1.0,
            k: 1,
            r_norm: 0.0,
            s_norm: 0.0,
        };
        assert_eq!(adapt_rho(&mut s, 10.0, 0.5, &cfg), 2.0);
        assert_eq!((s.ug[0], s.ub[0]), (0.5, -1.0));
        assert_eq!(adapt_rho(&mut s, 0.5, 10.0, &cfg), 1.0);
        assert_eq!((s.ug[0], s.ub[0]), (1.0, -2.0));
        assert_eq!(adapt_rho(&mut s, 1.0, 1.0, &cfg), 1.0);
    }

    #[test]
    fn zero_state_tolerances() {
        let s = AdmmState {
            g: vec![0.0; 2],
            b: vec![0.0; 2],
            gc: vec![0.0; 2],
            bc: vec![0.0; 2],
            ug: vec![0.0; 2],
            ub: vec![0.0; 2],
            rho: 1.0,
            k: 0,
            r_norm: 0.0,
            s_norm: 0.0,
        };
        let (p, d) = stopping_tolerances(&s, &AdmmConfig::default());
        assert!((p - 2e-2).abs() < 1e-15);
        assert!((d - 2e-2).abs() < 1e-15);
    }

    #[test]
    fn single_slot_wide_battery() {
        let bat = BatteryModel::with_flat_bounds(560.0, 720.0, 0.5, 0.0, 1.0, 1).unwrap();
        let res = solve_coordination(
            &problem(&[5.0], &[10.0], &bat),
            &AdmmConfig::default(),
            None,
        )
        .unwrap();
        assert!(res.converged);
        assert!((res.g_setpoint - 10.0).abs() < 0.05, "{res:?}");
        assert!((res.b_plan[0] + 5.0).abs() < 0.05, "{res:?}");
    }

    #[test]
    fn single_slot_pinned_battery() {
        let bat = BatteryModel::new(560.0, 0.0, 0.0, 0.5, vec![0.0], vec![1.0], 300.0).unwrap();
        let res = solve_coordination(
            &problem(&[5.0], &[10.0], &bat),
            &AdmmConfig::default(),
            None,
        )
        .unwrap();
        assert!(res.converged);
        assert!((res.g_setpoint - 5.0).abs() < 0.05, "{res:?}");
        assert_eq!(res.b_plan[0], 0.0);
    }

    #[test]
    fn infeasible_soc_profile_is_an_error() {
        // Needs 50 % of SOC in one slot with a 10 kW converter on 100 kWh.
        let bat = BatteryModel::new(
            100.0,
            -10.0,
            10.0,
            0.2,
            vec![0.2, 0.7],
            vec![0.3, 1.0],
            300.0,
        )
        .unwrap();
        let p = problem(&[0.0, 0.0], &[0.0, 0.0], &bat);
        assert!(matches!(
            solve_coordination(&p, &AdmmConfig::default(), None),
            Err(Error::InfeasibleSet { .. })
        ));
    }

    #[test]
    fn coupled_slack_cases() {
        // 100 kWh, ceiling 0.5 + 10 kW·slot of headroom at the last slot.
        let alpha = 300.0 / 3600.0 / 100.0;
        let bat = BatteryModel::new(
            100.0,
            -50.0,
            50.0,
            0.5,
            vec![0.0; 2],
            vec![1.0, 0.5 + 10.0 * alpha],
            300.0,
        )
        .unwrap();
        // Charging 4 kW per slot fits.
        assert_eq!(
            problem(&[-4.0, -4.0], &[0.0, 0.0], &bat).coupled_slack(),
            Some(0.0)
        );
        // Full curtailment still leaves 20 kW·slot to charge: 10 short.
        let mut p = problem(&[-10.0, -10.0], &[2.5, 2.5], &bat);
        let delta = p.coupled_slack().unwrap();
        assert!((delta - 10.0).abs() < 1e-9, "{delta}");
        p.relax_soc_bounds(delta);
        assert!(p.coupled_slack().unwrap() < 1e-9);
        // More charging than the converter allows is out of reach.
        assert_eq!(
            problem(&[-60.0, 0.0], &[1.0, 1.0], &bat).coupled_slack(),
            None
        );
    }

    #[test]
    fn config_validation_names_keys() {
        let cfg = AdmmConfig {
            mu: 1.0,
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "admm.mu"),
            other => panic!("{other:?}"),
        }
        let cfg = AdmmConfig {
            max_iter: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
