//! Independent reference solvers and instance generators shared by the
//! integration tests. Nothing here calls into the solvers under test.

#![allow(dead_code, clippy::needless_range_loop)]

use dispatch_core::{BatteryModel, CoordinationProblem, ErrorForecast, PvForecast};
use rand::Rng;

/// Golden-section search on `[lo, hi]` for a convex function, driven by
/// `sign(f(x1) - f(x2))` so that flat minima do not drown in rounding.
pub fn golden_min(mut lo: f64, mut hi: f64, diff: impl Fn(f64, f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    for _ in 0..200 {
        if hi - lo <= 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if diff(x1, x2) <= 0.0 {
            hi = x2;
            x2 = x1;
            x1 = hi - inv_phi * (hi - lo);
        } else {
            lo = x1;
            x1 = x2;
            x2 = lo + inv_phi * (hi - lo);
        }
    }
    0.5 * (lo + hi)
}

/// Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, p);
        b.swap(col, p);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Exact feasibility of box + prefix-sum bounds by forward propagation of
/// the reachable interval of the running sum.
pub fn chain_feasible(
    lo: &[f64],
    hi: &[f64],
    chain_lo: &[f64],
    chain_hi: &[f64],
    slack: f64,
) -> bool {
    let (mut s_lo, mut s_hi) = (0.0, 0.0);
    for k in 0..lo.len() {
        s_lo = (s_lo + lo[k]).max(chain_lo[k]);
        s_hi = (s_hi + hi[k]).min(chain_hi[k]);
        if s_lo > s_hi + slack {
            return false;
        }
    }
    true
}

/// Euclidean projection of `t` onto `{lo ≤ x ≤ hi, a_k ≤ Σ_{m≤k} x_m ≤ b_k}`
/// by accelerated projected gradient ascent on the dual of the prefix-sum
/// constraints (the box stays in the primal and is handled by clipping).
pub fn project_box_chain(
    t: &[f64],
    lo: &[f64],
    hi: &[f64],
    chain_lo: &[f64],
    chain_hi: &[f64],
) -> Vec<f64> {
    let n = t.len();
    // Multipliers of the upper (mu) and lower (nu) prefix bounds.
    let primal = |mu: &[f64], nu: &[f64]| -> Vec<f64> {
        // x = clip(t - Sᵀ(mu - nu)); (Sᵀy)_m = Σ_{k≥m} y_k.
        let mut tail = 0.0;
        let mut x = vec![0.0; n];
        for m in (0..n).rev() {
            tail += mu[m] - nu[m];
            x[m] = (t[m] - tail).clamp(lo[m], hi[m]);
        }
        x
    };
    let prefix = |x: &[f64]| -> Vec<f64> {
        let mut s = 0.0;
        x.iter()
            .map(|v| {
                s += v;
                s
            })
            .collect()
    };
    // ‖[S; -S]‖² ≤ 2‖S‖_F² = n(n + 1).
    let step = 1.0 / (n * (n + 1)) as f64;
    let active_hi: Vec<bool> = chain_hi.iter().map(|b| b.is_finite()).collect();
    let active_lo: Vec<bool> = chain_lo.iter().map(|a| a.is_finite()).collect();

    let (mut mu, mut nu) = (vec![0.0; n], vec![0.0; n]);
    let (mut ymu, mut ynu) = (mu.clone(), nu.clone());
    let mut theta: f64 = 1.0;
    let mut best = primal(&mu, &nu);
    for it in 0..400_000 {
        let x = primal(&ymu, &ynu);
        let s = prefix(&x);
        let mut new_mu = vec![0.0; n];
        let mut new_nu = vec![0.0; n];
        for k in 0..n {
            if active_hi[k] {
                new_mu[k] = (ymu[k] + step * (s[k] - chain_hi[k])).max(0.0);
            }
            if active_lo[k] {
                new_nu[k] = (ynu[k] + step * (chain_lo[k] - s[k])).max(0.0);
            }
        }
        let next_theta = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
        let beta = (theta - 1.0) / next_theta;
        // Gradient-based restart.
        let restart: f64 = (0..n)
            .map(|k| {
                (ymu[k] - new_mu[k]) * (new_mu[k] - mu[k])
                    + (ynu[k] - new_nu[k]) * (new_nu[k] - nu[k])
            })
            .sum();
        let moved: f64 = (0..n)
            .map(|k| (new_mu[k] - mu[k]).abs() + (new_nu[k] - nu[k]).abs())
            .sum();
        if restart > 0.0 {
            theta = 1.0;
            ymu = new_mu.clone();
            ynu = new_nu.clone();
        } else {
            theta = next_theta;
            for k in 0..n {
                ymu[k] = new_mu[k] + beta * (new_mu[k] - mu[k]);
                ynu[k] = new_nu[k] + beta * (new_nu[k] - nu[k]);
            }
        }
        mu = new_mu;
        nu = new_nu;
        if it % 64 == 0 || moved == 0.0 {
            best = primal(&mu, &nu);
            let s = prefix(&best);
            let viol = (0..n)
                .map(|k| (s[k] - chain_hi[k]).max(chain_lo[k] - s[k]).max(0.0))
                .fold(0.0, f64::max);
            // Complementary slackness on the prefix constraints.
            let slack = (0..n)
                .map(|k| {
                    let a = if active_hi[k] {
                        mu[k] * (chain_hi[k] - s[k]).abs()
                    } else {
                        0.0
                    };
                    let b = if active_lo[k] {
                        nu[k] * (s[k] - chain_lo[k]).abs()
                    } else {
                        0.0
                    };
                    a + b
                })
                .fold(0.0, f64::max);
            if (viol <= 1e-12 && slack <= 1e-12) || moved == 0.0 {
                break;
            }
        }
    }
    best
}

/// A random coordination instance over `n` slots.
#[derive(Debug, Clone)]
pub struct Instance {
    pub battery: BatteryModel,
    pub e_hat: Vec<f64>,
    pub g_hat: Vec<f64>,
}

impl Instance {
    pub fn problem(&self) -> CoordinationProblem {
        CoordinationProblem::from_battery(
            &self.battery,
            0,
            &ErrorForecast::new(self.e_hat.clone()).unwrap(),
            &PvForecast::new(self.g_hat.clone()).unwrap(),
            1e-9,
        )
        .unwrap()
    }

    /// Bounds of the centralized problem in terms of the battery injection
    /// `B_j` (discharge positive) after eliminating `G = ê − B`:
    /// box `max(-p_max, ê−Ĝ) ≤ B ≤ min(-p_min, ê)` and
    /// `SOC_min ≤ soc − α Σ B ≤ SOC_max`.
    pub fn centralized_bounds(&self) -> [Vec<f64>; 4] {
        let b = &self.battery;
        let a = b.slot_seconds() / 3600.0 / b.energy_kwh;
        let n = self.e_hat.len();
        let lo: Vec<f64> = (0..n)
            .map(|j| (-b.p_max_kw).max(self.e_hat[j] - self.g_hat[j]))
            .collect();
        let hi: Vec<f64> = (0..n).map(|j| (-b.p_min_kw).min(self.e_hat[j])).collect();
        let chain_lo: Vec<f64> = (0..n).map(|j| (b.soc - b.soc_max[j]) / a).collect();
        let chain_hi: Vec<f64> = (0..n).map(|j| (b.soc - b.soc_min[j]) / a).collect();
        [lo, hi, chain_lo, chain_hi]
    }

    pub fn is_feasible(&self) -> bool {
        let [lo, hi, clo, chi] = self.centralized_bounds();
        lo.iter().zip(&hi).all(|(l, h)| l <= h) && chain_feasible(&lo, &hi, &clo, &chi, 0.0)
    }

    /// Optimal `(G, B)` of `min Σ (G − Ĝ)²` subject to the coupling, the PV
    /// box and the battery constraints.
    pub fn centralized(&self) -> (Vec<f64>, Vec<f64>) {
        let [lo, hi, clo, chi] = self.centralized_bounds();
        // G − Ĝ = ê − B − Ĝ, so the optimum projects ê − Ĝ onto the set.
        let target: Vec<f64> = self
            .e_hat
            .iter()
            .zip(&self.g_hat)
            .map(|(e, g)| e - g)
            .collect();
        let b = project_box_chain(&target, &lo, &hi, &clo, &chi);
        let g = self.e_hat.iter().zip(&b).map(|(e, b)| e - b).collect();
        (g, b)
    }

    pub fn objective(&self, g: &[f64]) -> f64 {
        g.iter()
            .zip(&self.g_hat)
            .map(|(a, b)| (a - b).powi(2))
            .sum()
    }
}

/// Draws a random instance; about half of them have binding SOC bounds.
pub fn random_instance(rng: &mut impl Rng, n: usize) -> Instance {
    loop {
        let energy = rng.random_range(20.0..1000.0);
        let p_max = rng.random_range(5.0..720.0);
        let soc = rng.random_range(0.2..0.8);
        let tight = rng.random_bool(0.5);
        let (mut soc_min, mut soc_max) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let (lo, hi): (f64, f64) = if tight {
                let w = rng.random_range(0.0..0.02);
                (soc - rng.random_range(0.0..0.05), soc + w)
            } else {
                (rng.random_range(0.0..0.2), rng.random_range(0.8..1.0))
            };
            soc_min.push(lo.max(0.0));
            soc_max.push(hi.min(1.0));
        }
        soc_min[0] = soc_min[0].min(soc);
        soc_max[0] = soc_max[0].max(soc);
        let Ok(battery) = BatteryModel::new(energy, -p_max, p_max, soc, soc_min, soc_max, 300.0)
        else {
            continue;
        };
        let g_hat: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..15.0)).collect();
        let e_hat: Vec<f64> = (0..n).map(|_| rng.random_range(-25.0..25.0)).collect();
        let inst = Instance {
            battery,
            e_hat,
            g_hat,
        };
        if inst.is_feasible() {
            return inst;
        }
    }
}

/// Random box + prefix-sum instance with a guaranteed feasible set.
pub fn random_box_chain(rng: &mut impl Rng, n: usize) -> [Vec<f64>; 5] {
    loop {
        let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.0..80.0)).collect();
        let (mut clo, mut chi) = (Vec::with_capacity(n), Vec::with_capacity(n));
        let mut s = 0.0;
        for k in 0..n {
            s += rng.random_range(lo[k]..=hi[k]);
            if rng.random_bool(0.2) {
                clo.push(f64::NEG_INFINITY);
                chi.push(f64::INFINITY);
            } else {
                clo.push(s - rng.random_range(0.0..30.0));
                chi.push(s + rng.random_range(0.0..30.0));
            }
        }
        let target: Vec<f64> = (0..n).map(|_| rng.random_range(-120.0..120.0)).collect();
        if chain_feasible(&lo, &hi, &clo, &chi, 0.0) {
            return [target, lo, hi, clo, chi];
        }
    }
}
