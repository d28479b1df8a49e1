//! Euclidean projection onto a box intersected with bounds on every prefix sum.
//!
//! ```text
//!   minimize    ½ ‖x − t‖²
//!   subject to  lo_j ≤ x_j ≤ hi_j
//!               chain_lo_j ≤ x_1 + … + x_j ≤ chain_hi_j
//! ```
//!
//! The problem is solved exactly by dynamic programming over the cumulative
//! sum `S_j`. Let `F_j(S)` be the optimal cost of the first `j` steps ending at
//! `S_j = S`. Then `F_j = ι[chain_j] + (F_{j−1} □ q_j)` with
//! `q_j(x) = ½(x − t_j)² + ι[lo_j, hi_j](x)`. Each `F_j` is convex and is stored
//! through its inverse subgradient map `y ↦ argmin_S F_j(S) − yS`, which is
//! continuous, non-decreasing and piecewise linear. Infimal convolution adds
//! inverse maps and the chain indicator clamps them, so the forward pass is
//! plain breakpoint arithmetic. The backward pass recovers each `x_j` from the
//! subgradient that splits `S_j` between `S_{j−1}` and `x_j`.
//!
//! Cost is `O(n²)` in the worst case and the result is exact up to rounding.

use crate::error::{Error, Result};

/// Default solution tolerance in kW.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Projection problem onto box and prefix-sum ("chain") constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxChainQp {
    pub target: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub chain_lo: Vec<f64>,
    pub chain_hi: Vec<f64>,
    pub tol: f64,
}

impl BoxChainQp {
    /// Builds and validates a problem. Chain bounds may be infinite; box
    /// bounds must be finite.
    pub fn new(
        target: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        chain_lo: Vec<f64>,
        chain_hi: Vec<f64>,
        tol: f64,
    ) -> Result<Self> {
        let n = target.len();
        for (what, v) in [
            ("box lower bounds", &lo),
            ("box upper bounds", &hi),
            ("chain lower bounds", &chain_lo),
            ("chain upper bounds", &chain_hi),
        ] {
            if v.len() != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        if target.iter().chain(&lo).chain(&hi).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("projection target or box"));
        }
        if chain_lo.iter().chain(&chain_hi).any(|x| x.is_nan()) {
            return Err(Error::NonFinite("projection chain bounds"));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::InvalidModel(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        for j in 0..n {
            if lo[j] > hi[j] {
                return Err(Error::InvalidModel(format!(
                    "box bounds inverted at {j}: [{}, {}]",
                    lo[j], hi[j]
                )));
            }
            if chain_lo[j] > chain_hi[j] {
                return Err(Error::InvalidModel(format!(
                    "chain bounds inverted at {j}: [{}, {}]",
                    chain_lo[j], chain_hi[j]
                )));
            }
        }
        Ok(Self {
            target,
            lo,
            hi,
            chain_lo,
            chain_hi,
            tol,
        })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    /// Same constraints, different point to project.
    pub fn with_target(&self, target: Vec<f64>) -> Self {
        debug_assert_eq!(target.len(), self.len());
        Self {
            target,
            ..self.clone()
        }
    }

    /// Largest constraint violation of `x` (zero when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        let mut cumulative = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            cumulative += xj;
            worst = worst
                .max(self.lo[j] - xj)
                .max(xj - self.hi[j])
                .max(self.chain_lo[j] - cumulative)
                .max(cumulative - self.chain_hi[j]);
        }
        worst
    }

    /// Reachable interval of every prefix sum, propagated forward.
    fn reachable(&self) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::with_capacity(self.len());
        let (mut s_lo, mut s_hi) = (0.0, 0.0);
        for j in 0..self.len() {
            s_lo = (s_lo + self.lo[j]).max(self.chain_lo[j]);
            s_hi = (s_hi + self.hi[j]).min(self.chain_hi[j]);
            if s_lo > s_hi + self.tol {
                return Err(Error::InfeasibleSet { step: j });
            }
            if s_lo > s_hi {
                let mid = 0.5 * (s_lo + s_hi);
                s_lo = mid;
                s_hi = mid;
            }
            out.push((s_lo, s_hi));
        }
        Ok(out)
    }

    /// A feasible point found by forward interval propagation and backward
    /// greedy clipping toward the target. Fails with `InfeasibleSet` when the
    /// box and chain constraints have no common point.
    pub fn feasible_point(&self) -> Result<Vec<f64>> {
        let reach = self.reachable()?;
        let n = self.len();
        let mut x = vec![0.0; n];
        if n == 0 {
            return Ok(x);
        }
        let total: f64 = self.target.iter().sum();
        let mut s = total.clamp(reach[n - 1].0, reach[n - 1].1);
        for j in (0..n).rev() {
            let (prev_lo, prev_hi) = if j == 0 { (0.0, 0.0) } else { reach[j - 1] };
            // Previous prefix must lie in its reachable interval and leave a
            // step within the box.
            let lo = prev_lo.max(s - self.hi[j]);
            let hi = prev_hi.min(s - self.lo[j]);
            let prev = (s - self.target[j]).clamp(lo.min(hi), hi.max(lo));
            x[j] = s - prev;
            s = prev;
        }
        Ok(x)
    }
}

/// Continuous non-decreasing piecewise-linear map, constant outside its
/// first and last breakpoints.
#[derive(Debug, Clone)]
struct InverseMap {
    pts: Vec<(f64, f64)>,
}

impl InverseMap {
    fn constant(s: f64) -> Self {
        Self {
            pts: vec![(0.0, s)],
        }
    }

    fn eval(&self, y: f64) -> f64 {
        let pts = &self.pts;
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if y <= first.0 {
            return first.1;
        }
        if y >= last.0 {
            return last.1;
        }
        let k = pts.partition_point(|p| p.0 < y);
        interpolate(pts[k - 1], pts[k], y)
    }

    fn range(&self) -> (f64, f64) {
        (self.pts[0].1, self.pts[self.pts.len() - 1].1)
    }

    /// `y ↦ self(y) + clamp(t + y, lo, hi)`.
    fn add_clamped_step(&self, t: f64, lo: f64, hi: f64) -> Self {
        let knots = [lo - t, hi - t];
        let mut ys: Vec<f64> = Vec::with_capacity(self.pts.len() + 2);
        let (mut a, mut b) = (0, 0);
        while a < self.pts.len() || b < knots.len() {
            let next = match (self.pts.get(a), knots.get(b)) {
                (Some(p), Some(&k)) if p.0 <= k => {
                    a += 1;
                    p.0
                }
                (_, Some(&k)) => {
                    b += 1;
                    k
                }
                (Some(p), None) => {
                    a += 1;
                    p.0
                }
                (None, None) => unreachable!(),
            };
            if ys.last().is_none_or(|&prev| next > prev) {
                ys.push(next);
            }
        }
        let mut pts = Vec::with_capacity(ys.len());
        let mut k = 0;
        for y in ys {
            // self is linear between its own breakpoints; advance the cursor.
            while k < self.pts.len() && self.pts[k].0 < y {
                k += 1;
            }
            let base = if k == 0 {
                self.pts[0].1
            } else if k == self.pts.len() {
                self.pts[k - 1].1
            } else {
                interpolate(self.pts[k - 1], self.pts[k], y)
            };
            pts.push((y, base + (t + y).clamp(lo, hi)));
        }
        Self { pts }.simplified()
    }

    /// `y ↦ clamp(self(y), a, b)`, inserting the crossing points.
    fn clamped(&self, a: f64, b: f64) -> Self {
        let mut pts = Vec::with_capacity(self.pts.len() + 2);
        for (k, &p) in self.pts.iter().enumerate() {
            if k > 0 {
                let q = self.pts[k - 1];
                for level in [a, b] {
                    if level.is_finite() && q.1 < level && level < p.1 {
                        let y = q.0 + (level - q.1) * (p.0 - q.0) / (p.1 - q.1);
                        pts.push((y, level));
                    }
                }
            }
            pts.push((p.0, p.1.clamp(a, b)));
        }
        Self { pts }.simplified()
    }

    /// Drops duplicated abscissae and interior points of flat runs.
    fn simplified(mut self) -> Self {
        self.pts.dedup_by(|cur, prev| cur.0 <= prev.0);
        if self.pts.len() <= 2 {
            if self.pts.len() == 2 && self.pts[0].1 == self.pts[1].1 {
                self.pts.truncate(1);
            }
            return self;
        }
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(self.pts.len());
        for (k, &p) in self.pts.iter().enumerate() {
            let flat_before = k > 0 && self.pts[k - 1].1 == p.1;
            let flat_after = k + 1 < self.pts.len() && self.pts[k + 1].1 == p.1;
            let leading = k == 0 && flat_after;
            let trailing = k + 1 == self.pts.len() && flat_before;
            if (flat_before && flat_after) || leading || trailing {
                continue;
            }
            out.push(p);
        }
        if out.is_empty() {
            out.push(self.pts[0]);
        }
        self.pts = out;
        self
    }

    /// Some `y` with `self(y) = s`, for `s` inside the range.
    fn solve(&self, s: f64) -> f64 {
        let pts = &self.pts;
        if s <= pts[0].1 {
            return pts[0].0;
        }
        if s >= pts[pts.len() - 1].1 {
            return pts[pts.len() - 1].0;
        }
        let k = pts.partition_point(|p| p.1 < s);
        let (p, q) = (pts[k - 1], pts[k]);
        p.0 + (s - p.1) * (q.0 - p.0) / (q.1 - p.1)
    }
}

fn interpolate(p: (f64, f64), q: (f64, f64), y: f64) -> f64 {
    if q.0 == p.0 {
        return q.1;
    }
    p.1 + (y - p.0) * (q.1 - p.1) / (q.0 - p.0)
}

/// Projects `qp.target` onto the box ∩ chain set.
pub fn bess_update(qp: &BoxChainQp) -> Result<Vec<f64>> {
    // Cheap certificate first: fails fast with the offending step.
    qp.reachable()?;
    let n = qp.len();
    if n == 0 {
        return Ok(Vec::new());
    }

    let mut maps = Vec::with_capacity(n + 1);
    maps.push(InverseMap::constant(0.0));
    for j in 0..n {
        let convolved = maps[j].add_clamped_step(qp.target[j], qp.lo[j], qp.hi[j]);
        let (r_lo, r_hi) = convolved.range();
        let (c_lo, c_hi) = (qp.chain_lo[j], qp.chain_hi[j]);
        if r_lo > c_hi + qp.tol || r_hi < c_lo - qp.tol {
            return Err(Error::InfeasibleSet { step: j });
        }
        // Within tolerance of an empty intersection: pin to the touching end.
        let (c_lo, c_hi) = if r_lo > c_hi {
            (r_lo, r_lo)
        } else if r_hi < c_lo {
            (r_hi, r_hi)
        } else {
            (c_lo, c_hi)
        };
        maps.push(convolved.clamped(c_lo, c_hi));
    }

    let mut x = vec![0.0; n];
    let mut s = maps[n].eval(0.0);
    for j in (0..n).rev() {
        let convolved = maps[j].add_clamped_step(qp.target[j], qp.lo[j], qp.hi[j]);
        let y = convolved.solve(s);
        let step = (qp.target[j] + y).clamp(qp.lo[j], qp.hi[j]);
        let (prev_lo, prev_hi) = maps[j].range();
        let prev = (s - step).clamp(prev_lo, prev_hi);
        x[j] = s - prev;
        s = prev;
    }
    Ok(x)
}
