//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a nonzero status when any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satguard::controller::ControllerGains;
use satguard::model::{EnvelopeFields, LinearInternalDynamics, PlantTruth, SignalSpec, UncertaintyEnvelope};
use satguard::numerics::{mat_exp, rk4_step, Matrix, QuadSettings, SlidingWindowMax};
use satguard::scenario::*;
use satguard::simulate::*;
use satguard::tuning::*;
use satguard::Execution;

// tolerances
const C0_TARGET: (f64, f64) = (0.05, 0.005);
const C1_TARGET: (f64, f64) = (0.07, 0.01);
const D0_TARGET: (f64, f64) = (0.2, 0.02);
const D1_TARGET: (f64, f64) = (0.42, 0.04);
const CONSTANTS_BUDGET: Duration = Duration::from_secs(10);
const LAMBDA_STAR_TARGET: (f64, f64) = (17.18, 0.5);
const CAP_TARGET: (f64, f64) = (47.6, 0.3);
const LAMBDA_STAR_BUDGET: Duration = Duration::from_secs(1);
const LAMBDA_F_BOUND_TARGET: (f64, f64) = (0.0144, 0.002);
const GOOD_RUN_BUDGET: Duration = Duration::from_secs(60);
const TAIL_FRACTION: f64 = 0.2;
const EXCURSION_RATIO: f64 = 5.0;
const WINDOW_CASES: usize = 10_000;
const DC_GAIN_CASES: usize = 10_000;
const DC_GAIN_REL_TOL: f64 = 1e-10;
const DUAL_QUAD_REL_TOL: f64 = 1e-6;
const RK4_MIN_ORDER: f64 = 3.7;
const UDOT_SCENARIOS: usize = 50;
const ZERO_DISTURBANCE_TOL: f64 = 1e-6;
const INVARIANCE_SCENARIOS: usize = 25;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn within(x: f64, (target, tol): (f64, f64)) -> bool {
    (x - target).abs() <= tol
}

fn criterion_1() -> Outcome {
    let d = reference_dynamics();
    let start = Instant::now();
    let ec = EnvelopeConstants::compute(&d, 0.1, 0.0, &QuadSettings::default(), Execution::default()).unwrap();
    let elapsed = start.elapsed();
    let halved = EnvelopeConstants::compute(&d, 0.1, 0.0, &QuadSettings::with_step(5e-4), Execution::default()).unwrap();
    let converged = [(ec.c0, halved.c0), (ec.c1, halved.c1), (ec.d0, halved.d0), (ec.d1, halved.d1)]
        .iter()
        .all(|(a, b)| (a - b).abs() <= DUAL_QUAD_REL_TOL * a.abs());
    let values = within(ec.c0, C0_TARGET)
        && within(ec.c1, C1_TARGET)
        && within(ec.d0, D0_TARGET)
        && within(ec.d1, D1_TARGET);
    Outcome {
        id: "1 envelope constants",
        pass: values && converged && elapsed < CONSTANTS_BUDGET,
        detail: format!(
            "c0={:.6} (want {}±{}) c1={:.6} (want {}±{}) d0={:.6} (want {}±{}) d1={:.6} (want {}±{}); \
             step-halving converged={converged}; {:.3}s",
            ec.c0, C0_TARGET.0, C0_TARGET.1, ec.c1, C1_TARGET.0, C1_TARGET.1, ec.d0, D0_TARGET.0, D0_TARGET.1,
            ec.d1, D1_TARGET.0, D1_TARGET.1,
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_2a() -> Outcome {
    let e = reference_envelope();
    let start = Instant::now();
    let star = lambda_star(&e, &reference_printed_constants()).unwrap();
    let scan = lambda_star_scan(&e, &reference_printed_constants(), LAMBDA_STAR_SCAN_POINTS).unwrap();
    let elapsed = start.elapsed();
    Outcome {
        id: "2a lambda* on printed constants",
        pass: within(star, LAMBDA_STAR_TARGET) && scan.0 <= star && star <= scan.1 && elapsed < LAMBDA_STAR_BUDGET,
        detail: format!(
            "lambda*={star:.6} (want {}±{}), scan bracket [{:.4}, {:.4}]; {:.4}s",
            LAMBDA_STAR_TARGET.0,
            LAMBDA_STAR_TARGET.1,
            scan.0,
            scan.1,
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_2b() -> Outcome {
    let e = reference_envelope();
    let c1 = compute_c1(&reference_dynamics(), &QuadSettings::default()).unwrap();
    let computed = EnvelopeConstants::new(0.0, c1, 0.0, 0.0, 0.0).unwrap();
    let cap = lambda_cap(&e, &computed);
    Outcome {
        id: "2b cap 1/(alpha_max c1) with computed c1",
        pass: within(cap, CAP_TARGET),
        detail: format!(
            "cap={cap:.4} from c1={c1:.6} (want {}±{}); printed c1 gives {:.4}",
            CAP_TARGET.0,
            CAP_TARGET.1,
            lambda_cap(&e, &reference_printed_constants())
        ),
    }
}

fn criterion_3() -> Outcome {
    let e = reference_envelope();
    let ec = reference_printed_constants();
    let (l, lf) = REFERENCE_GOOD_GAINS;
    let bound = lambda_f_bound(&e, &ec, l).unwrap();
    Outcome {
        id: "3 lambda*phi(17) on printed constants",
        pass: within(bound, LAMBDA_F_BOUND_TARGET),
        detail: format!(
            "lambda*phi={bound:.6} (want {}±{}); 0.95x = {:.6}, deviates from the published lambda_f {lf}",
            LAMBDA_F_BOUND_TARGET.0,
            LAMBDA_F_BOUND_TARGET.1,
            AUTO_LAMBDA_F_FACTOR * bound
        ),
    }
}

fn reference_run(gains: (f64, f64)) -> (Trajectory, TuningReport, Duration) {
    let sc = reference_scenario();
    let e = &sc.envelope;
    let quad = QuadSettings::default();
    let report = feasibility_report(
        e,
        sc.plant.internal(),
        sc.epsilon,
        sc.declared,
        &quad,
        gains.0,
        gains.1,
        Execution::default(),
    )
    .unwrap();
    let g = ControllerGains::new(gains.0, gains.1, 0.0, e.u_min(), e.u_max()).unwrap();
    let start = Instant::now();
    let tr = simulate(&sc.plant, &g, &sc.sim, e.tau()).unwrap();
    (tr, report, start.elapsed())
}

fn criterion_4(good: &(Trajectory, TuningReport, Duration)) -> Outcome {
    let (tr, report, elapsed) = good;
    let rc = verify_region_convergence(tr);
    let tail = asymptotic_error(tr, TAIL_FRACTION).unwrap();
    let bound = report.error_bound.unwrap_or(f64::NAN);
    let env = verify_envelope(tr, &report.envelope, 0.0, ENVELOPE_SLACK);
    let pass = rc.entry_time.is_some()
        && rc.invariant_after_entry
        && tail <= bound
        && env.passed()
        && *elapsed < GOOD_RUN_BUDGET
        && report.feasible();
    Outcome {
        id: "4 good-gain golden run",
        pass,
        detail: format!(
            "feasible={} entry={:?} invariant={} tail sup|e_y|={tail:.6} <= bound {bound:.4}; envelope violations={} \
             (margins {:.4}, {:.4}); {:.2}s",
            report.feasible(),
            rc.entry_time,
            rc.invariant_after_entry,
            env.violations,
            env.ell_margin,
            env.ell_dot_margin,
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_5(good: &Trajectory, bad: &(Trajectory, TuningReport, Duration)) -> Outcome {
    let (tr, report, _) = bad;
    let ratio = tr.sup_abs_ell() / good.sup_abs_ell();
    Outcome {
        id: "5 bad-gain contrast run",
        pass: !report.flags.lambda_below_star && ratio >= EXCURSION_RATIO,
        detail: format!(
            "lambda<lambda* flag={} sup|ell| bad={:.5} good={:.5} ratio={ratio:.2} (want >= {EXCURSION_RATIO})",
            report.flags.lambda_below_star,
            tr.sup_abs_ell(),
            good.sup_abs_ell()
        ),
    }
}

fn criterion_6a() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    let mut mismatches = 0;
    for _ in 0..WINDOW_CASES {
        let span = rng.random_range(0.1..5.0);
        let mut w = SlidingWindowMax::new(span).unwrap();
        let mut buf: Vec<(f64, f64)> = Vec::new();
        let mut t = 0.0;
        for _ in 0..rng.random_range(1..80) {
            t += rng.random_range(0.0..1.0);
            if rng.random_bool(0.3) {
                let naive = buf.iter().filter(|&&(ts, _)| ts >= t - span).fold(0.0f64, |m, &(_, v)| m.max(v));
                if w.max(t).unwrap() != naive {
                    mismatches += 1;
                }
            } else {
                let v = rng.random_range(0.0..10.0);
                w.push(t, v).unwrap();
                buf.push((t, v));
            }
        }
    }
    Outcome {
        id: "6a sliding-window max vs brute force",
        pass: mismatches == 0,
        detail: format!("{WINDOW_CASES} cases, {mismatches} mismatches"),
    }
}

fn criterion_6b() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(602);
    let mut worst = 0.0f64;
    for _ in 0..DC_GAIN_CASES {
        let (l, lf) = (rng.random_range(1e-2..1e3), rng.random_range(1e-4..10.0));
        let exact = 1.0 / (l * lf);
        for alpha in [rng.random_range(1e-3..10.0), rng.random_range(1e-3..10.0)] {
            worst = worst.max((a0_dc_gain(l, lf, alpha).unwrap() - exact).abs() / exact);
        }
    }
    Outcome {
        id: "6b a0_dc_gain = 1/(lambda lambda_f), alpha-free",
        pass: worst <= DC_GAIN_REL_TOL,
        detail: format!("{DC_GAIN_CASES} cases, worst relative error {worst:.2e}"),
    }
}

fn criterion_6c() -> Outcome {
    let mut worst = 0.0f64;
    let mut systems: Vec<(LinearInternalDynamics, f64)> = vec![(reference_dynamics(), 0.1)];
    systems.extend(random_family(603, 10).into_iter().map(|s| (s.plant.internal().clone(), s.envelope.w_bound())));
    for (d, w) in &systems {
        let q = QuadSettings::default();
        let a = EnvelopeConstants::compute(d, *w, 0.0, &q, Execution::default()).unwrap();
        let b = EnvelopeConstants::compute(d, *w, 0.0, &q.dual(), Execution::default()).unwrap();
        for (x, y) in [(a.c0, b.c0), (a.c1, b.c1), (a.d0, b.d0), (a.d1, b.d1)] {
            if x > 0.0 {
                worst = worst.max((x - y).abs() / x);
            }
        }
    }
    Outcome {
        id: "6c dual-quadrature agreement c0..d1",
        pass: worst <= DUAL_QUAD_REL_TOL,
        detail: format!("{} systems, worst relative gap {worst:.2e}", systems.len()),
    }
}

fn rk4_terminal_error(a: &Matrix, x0: &[f64], h: f64) -> f64 {
    let t_end = 2.0;
    let mut x = x0.to_vec();
    for k in 0..(t_end / h).round() as usize {
        x = rk4_step(
            |_, s, dx| {
                dx.copy_from_slice(&a.apply(s).unwrap());
                Ok(())
            },
            &x,
            k as f64 * h,
            h,
        )
        .unwrap();
    }
    let exact = mat_exp(a, t_end).unwrap().apply(x0).unwrap();
    x.iter().zip(&exact).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn criterion_6d() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(604);
    let mut min_order = f64::INFINITY;
    for _ in 0..50 {
        let n = rng.random_range(1..=5);
        let m = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let radius = m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let shift = radius + rng.random_range(0.2..1.0);
        let a = Matrix::checked(m - nalgebra::DMatrix::identity(n, n) * shift).unwrap();
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (coarse, fine) = (rk4_terminal_error(&a, &x0, 0.1), rk4_terminal_error(&a, &x0, 0.05));
        if coarse > 1e-12 {
            min_order = min_order.min((coarse / fine).log2());
        }
    }
    Outcome {
        id: "6d RK4 vs matrix exponential order",
        pass: min_order >= RK4_MIN_ORDER,
        detail: format!("50 random stable systems, minimum measured order {min_order:.3}"),
    }
}

fn criterion_6e() -> Outcome {
    let family = random_family(605, UDOT_SCENARIOS);
    let mut rng = ChaCha8Rng::seed_from_u64(6051);
    let picks: Vec<(f64, f64)> = family
        .iter()
        .map(|s| {
            let ec = s.constants(&QuadSettings::default(), Execution::Sequential).unwrap();
            let star = lambda_star(&s.envelope, &ec).unwrap();
            let l = star * rng.random_range(0.05..0.99);
            let lf = lambda_f_bound(&s.envelope, &ec, l).unwrap() * rng.random_range(0.05..0.99);
            (l, lf)
        })
        .collect();
    let jobs: Vec<(&Scenario, (f64, f64))> = family.iter().zip(picks).collect();
    let results = satguard::exec::map(Execution::default(), &jobs, |(s, (l, lf))| {
        let e = &s.envelope;
        let ec = s.constants(&QuadSettings::default(), Execution::Sequential).unwrap();
        let report = assess(e, ec, None, *l, *lf);
        let g = ControllerGains::new(*l, *lf, 0.0, e.u_min(), e.u_max()).unwrap();
        let tr = simulate(&s.plant, &g, &s.sim, e.tau()).unwrap();
        (report.feasible(), verify_udot_bound(&tr, report.delta_u.unwrap()))
    });
    let infeasible = results.iter().filter(|(f, _)| !f).count();
    let violated = results.iter().filter(|(_, u)| !u.holds).count();
    let worst = results.iter().map(|(_, u)| u.ratio).fold(0.0, f64::max);
    Outcome {
        id: "6e udot bound on random feasible scenarios",
        pass: infeasible == 0 && violated == 0,
        detail: format!(
            "{UDOT_SCENARIOS} scenarios, {infeasible} infeasible picks, {violated} violations, worst observed/delta_u {worst:.3}"
        ),
    }
}

fn criterion_6f() -> Outcome {
    let e = UncertaintyEnvelope::new(EnvelopeFields {
        u_min: -2.0,
        u_max: 2.0,
        g_min: -0.5,
        g_max: 0.5,
        alpha_min: 0.1,
        alpha_max: 0.5,
        g_rate_bound: 0.0,
        w_bound: 0.0,
        tau: 10.0,
    })
    .unwrap();
    let a = reference_dynamics().a().clone();
    let d = LinearInternalDynamics::new(a, Matrix::zeros(3, 1), Matrix::zeros(3, 1), Matrix::row(&[1.0, 0.0, 1.0]).unwrap())
        .unwrap();
    let p = PlantTruth::new(&e, 0.2, SignalSpec::constant(0.0), vec![SignalSpec::constant(0.0)], d, None, 1.0).unwrap();
    let g = ControllerGains::new(2.0, 0.5, 0.8, e.u_min(), e.u_max()).unwrap();
    let cfg = SimConfig {
        t_end: 600.0,
        step: 0.01,
        record_every: 10,
        y0: -3.0,
        z0: None,
        eta0: None,
        setpoint: SetpointSchedule::constant(0.8),
    };
    let err = asymptotic_error(&simulate(&p, &g, &cfg, e.tau()).unwrap(), TAIL_FRACTION).unwrap();
    Outcome {
        id: "6f zero-disturbance asymptotic error",
        pass: err < ZERO_DISTURBANCE_TOL,
        detail: format!("tail sup|e_y| = {err:.3e} (want < {ZERO_DISTURBANCE_TOL:e})"),
    }
}

fn criterion_7() -> Outcome {
    let family = random_family(700, INVARIANCE_SCENARIOS);
    let results = satguard::exec::map(Execution::default(), &family, |s| {
        let e = &s.envelope;
        let ec = s.constants(&QuadSettings::default(), Execution::Sequential).unwrap();
        let (l, lf) = recommended_gains(e, &ec).unwrap();
        let report = assess(e, ec, None, l, lf);
        let g = ControllerGains::new(l, lf, 0.0, e.u_min(), e.u_max()).unwrap();
        let tr = simulate(&s.plant, &g, &s.sim, e.tau()).unwrap();
        (report.feasible(), verify_region_convergence(&tr))
    });
    let infeasible = results.iter().filter(|(f, _)| !f).count();
    let entered = results.iter().filter(|(_, rc)| rc.entry_time.is_some()).count();
    let counterexamples = results
        .iter()
        .filter(|(_, rc)| rc.entry_time.is_some() && !rc.invariant_after_entry)
        .count();
    Outcome {
        id: "7 conditional invariance",
        pass: infeasible == 0 && counterexamples == 0,
        detail: format!(
            "{INVARIANCE_SCENARIOS} scenarios, {infeasible} infeasible, {entered} entered, {counterexamples} counterexamples"
        ),
    }
}

fn main() {
    let good = reference_run(REFERENCE_GOOD_GAINS);
    let bad = reference_run(REFERENCE_BAD_GAINS);
    let outcomes = [
        criterion_1(),
        criterion_2a(),
        criterion_2b(),
        criterion_3(),
        criterion_4(&good),
        criterion_5(&good.0, &bad),
        criterion_6a(),
        criterion_6b(),
        criterion_6c(),
        criterion_6d(),
        criterion_6e(),
        criterion_6f(),
        criterion_7(),
    ];
    for o in &outcomes {
        println!("{} criterion {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
