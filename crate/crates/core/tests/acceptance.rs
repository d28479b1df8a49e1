//! One line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{golden_min, project_box_chain, random_box_chain, random_instance};
use dispatch_core::synth::reference_scenario;
use dispatch_core::{
    bess_update, consensus_update, pv_update, run_day, soc_step, solve_coordination, AdmmConfig,
    AdmmState, BatteryModel, BoxChainQp, DayResult, Mode, SummaryStats,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REFERENCE_SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Tolerances for the comparison against the centralized optimum; the
/// defaults stop too early for a 1 % objective match on small objectives.
fn oracle_config() -> AdmmConfig {
    AdmmConfig {
        eps_abs: 1e-4,
        eps_rel: 1e-5,
        max_iter: 1000,
        ..AdmmConfig::default()
    }
}

fn centralized_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = oracle_config();
    let cases = 300;
    let (mut failures, mut worst_gap, mut worst_acc) = (0, 0.0_f64, 0.0_f64);
    for _ in 0..cases {
        let n = rng.random_range(1..=12);
        let inst = random_instance(&mut rng, n);
        let (g_star, _) = inst.centralized();
        let f_star = inst.objective(&g_star);
        let res = match solve_coordination(&inst.problem(), &cfg, None) {
            Ok(r) => r,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let allowed = (0.01 * f_star).max(1e-3);
        let gap = (inst.objective(&res.g_plan) - f_star).abs() / allowed;
        let eps_pri = res.trace.last().map_or(0.0, |r| r.eps_pri);
        worst_gap = worst_gap.max(gap);
        worst_acc = worst_acc.max(res.accuracy / eps_pri);
        if !res.converged || gap > 1.0 || res.accuracy > eps_pri {
            failures += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        failures == 0 && secs <= 60.0,
        format!(
            "{cases} instances, {failures} failures, worst gap {worst_gap:.3} of allowance, \
             worst accuracy {worst_acc:.3} of eps_pri, {secs:.2} s \
             (eps_abs {}, eps_rel {}, max_iter {})",
            cfg.eps_abs, cfg.eps_rel, cfg.max_iter
        ),
    )
}

fn closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cases = 2000;
    let (mut pv_err, mut cons_err) = (0.0_f64, 0.0_f64);
    for _ in 0..cases {
        let g_hat = rng.random_range(0.0..20.0);
        let z = rng.random_range(-30.0..40.0);
        let rho = 10f64.powf(rng.random_range(-2.0..3.0));
        let g = pv_update(&[g_hat], &[z], rho).expect("pv update")[0];
        let x = golden_min(0.0, g_hat, |a, b| {
            (a - b) * ((a + b - 2.0 * g_hat) + 0.5 * rho * (a + b - 2.0 * z))
        });
        pv_err = pv_err.max((g - x).abs() / (1.0 + g_hat));

        let (a, b, e) = (
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
        );
        let (gc, bc) = consensus_update(&[a], &[b], &[e]).expect("consensus update");
        let x = golden_min(-200.0, 200.0, |x1, x2| {
            (x1 - x2) * (2.0 * x1 + 2.0 * x2 - 2.0 * a - 2.0 * (e - b))
        });
        cons_err = cons_err.max((gc[0] - x).abs()).max((bc[0] - (e - x)).abs());
    }
    let bess_cases = 500;
    let mut bess_err = 0.0_f64;
    for _ in 0..bess_cases {
        let n = rng.random_range(1..=6);
        let [t, lo, hi, clo, chi] = random_box_chain(&mut rng, n);
        let oracle = project_box_chain(&t, &lo, &hi, &clo, &chi);
        let qp = BoxChainQp::new(t, lo, hi, clo, chi, 1e-9).expect("valid instance");
        bess_err = bess_err.max(dist(&bess_update(&qp).expect("feasible"), &oracle));
    }
    outcome(
        pv_err <= 1e-8 && cons_err <= 1e-8 && bess_err <= 1e-6,
        format!(
            "pv_update {cases} cases max err {pv_err:.1e}, consensus_update {cases} cases max err {cons_err:.1e}, \
             bess_update {bess_cases} cases (N <= 6) max err {bess_err:.1e}"
        ),
    )
}

fn convergence_envelope(admm: &SummaryStats) -> Outcome {
    outcome(
        admm.converged_slots == admm.coordinated_slots
            && admm.iterations_mean <= 25.0
            && admm.iterations_max <= 50
            && admm.accuracy_mean_kw <= 0.1,
        format!(
            "converged {}/{} slots, iterations mean {:.2} max {}, accuracy mean {:.4} kW",
            admm.converged_slots,
            admm.coordinated_slots,
            admm.iterations_mean,
            admm.iterations_max,
            admm.accuracy_mean_kw
        ),
    )
}

fn soc_experiment(only: &SummaryStats, admm: &SummaryStats) -> Outcome {
    outcome(
        admm.max_soc_bound_distance_pct <= 0.0
            && only.max_soc_bound_distance_pct > 0.0
            && admm.curtailment_kwh > 0.0
            && only.curtailment_kwh == 0.0,
        format!(
            "max SOC-bound distance {:.3} % (admm) vs {:.3} % (dispatch only), \
             curtailment {:.2} kWh vs {:.2} kWh",
            admm.max_soc_bound_distance_pct,
            only.max_soc_bound_distance_pct,
            admm.curtailment_kwh,
            only.curtailment_kwh
        ),
    )
}

fn tracking_order(none: &SummaryStats, only: &SummaryStats, admm: &SummaryStats) -> Outcome {
    outcome(
        none.rmse_kw > only.rmse_kw
            && only.rmse_kw >= admm.rmse_kw
            && admm.mean_error_kw.abs() <= 0.05,
        format!(
            "RMSE {:.4} > {:.4} >= {:.2e} kW, admm mean error {:.2e} kW",
            none.rmse_kw, only.rmse_kw, admm.rmse_kw, admm.mean_error_kw
        ),
    )
}

fn invariants(reference: &DayResult) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failed = Vec::new();

    let mut nonexpansive = true;
    for _ in 0..300 {
        let n = rng.random_range(1..=24);
        let [t, lo, hi, clo, chi] = random_box_chain(&mut rng, n);
        let qp = BoxChainQp::new(t, lo, hi, clo, chi, 1e-9).expect("valid instance");
        let other: Vec<f64> = qp
            .target
            .iter()
            .map(|v| v + rng.random_range(-20.0..20.0))
            .collect();
        let x = bess_update(&qp).expect("feasible");
        let y = bess_update(&qp.with_target(other.clone())).expect("feasible");
        let xx = bess_update(&qp.with_target(x.clone())).expect("feasible");
        nonexpansive &= dist(&x, &y) <= dist(&qp.target, &other) + 1e-8 && dist(&x, &xx) <= 1e-8;
    }
    if !nonexpansive {
        failed.push("projection non-expansiveness");
    }

    let (mut exact, mut telescoping) = (true, true);
    for _ in 0..50 {
        let n = rng.random_range(1..=12);
        let inst = random_instance(&mut rng, n);
        let p = inst.problem();
        let mut state = AdmmState::cold(&p, 1.0).expect("cold start");
        let (mut sum_g, mut sum_b) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..20 {
            state.iterate(&p).expect("iteration");
            for j in 0..n {
                exact &= (state.gc[j] + state.bc[j] - p.e_hat[j]).abs() <= 1e-12;
                sum_g[j] += state.g[j] - state.gc[j];
                sum_b[j] += state.b[j] - state.bc[j];
            }
        }
        telescoping &= dist(&state.ug, &sum_g) <= 1e-9 && dist(&state.ub, &sum_b) <= 1e-9;
    }
    if !exact {
        failed.push("consensus exactness");
    }
    if !telescoping {
        failed.push("dual telescoping");
    }

    let bat = BatteryModel::with_flat_bounds(560.0, 720.0, 0.5, 0.0, 1.0, 1).expect("battery");
    let linear = (0..1000).all(|_| {
        let (s, b1, b2) = (
            rng.random_range(0.0..1.0),
            rng.random_range(-700.0..700.0),
            rng.random_range(-700.0..700.0),
        );
        let d = |b: f64| soc_step(s, b, &bat).expect("finite") - s;
        (d(b1 + b2) - d(b1) - d(b2)).abs() <= 1e-12
    });
    if !linear {
        failed.push("SOC linearity");
    }

    let again =
        run_day(&reference_scenario(REFERENCE_SEED, Mode::DispatchWithAdmm).expect("scenario"))
            .expect("run");
    let same = serde_json::to_vec(reference).ok() == serde_json::to_vec(&again).ok();
    if !same {
        failed.push("determinism");
    }

    let mut cfg = reference_scenario(REFERENCE_SEED, Mode::DispatchWithAdmm).expect("scenario");
    cfg.record_ticks = true;
    let ticked = run_day(&cfg).expect("run");
    let alpha = cfg.battery.alpha_for(cfg.grid.tick_seconds());
    let mut soc = cfg.battery.soc;
    let conserved = ticked.ticks.iter().all(|t| {
        soc += alpha * t.battery_kw;
        (t.gcp_kw - (t.load_kw + t.battery_kw - t.pv_kw)).abs() <= 1e-9
            && (t.soc - soc).abs() <= 1e-12
    });
    if !conserved {
        failed.push("energy bookkeeping");
    }

    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            "non-expansiveness, consensus exactness, dual telescoping, SOC linearity, determinism, \
             energy bookkeeping hold"
                .into()
        } else {
            format!("violated: {}", failed.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let day = |mode| {
        run_day(&reference_scenario(REFERENCE_SEED, mode).expect("reference scenario"))
            .expect("reference run")
    };
    let none = day(Mode::NoDispatch).summary();
    let only = day(Mode::DispatchOnly).summary();
    let admm_day = day(Mode::DispatchWithAdmm);
    let admm = admm_day.summary();

    let results = [
        (
            "ADMM matches the centralized optimum",
            centralized_equivalence(),
        ),
        ("subproblem closed forms", closed_forms()),
        (
            "convergence envelope on the reference day",
            convergence_envelope(&admm),
        ),
        ("SOC-constrained experiment", soc_experiment(&only, &admm)),
        (
            "tracking error ordering",
            tracking_order(&none, &only, &admm),
        ),
        ("invariant suite", invariants(&admm_day)),
    ];
    let mut all = true;
    for (k, (name, o)) in results.iter().enumerate() {
        all &= o.pass;
        println!(
            "criterion {} {}: {name}: {}",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance finished in {:.2} s",
        started.elapsed().as_secs_f64()
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
