//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a failure status if any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uav_wpcn::dual::{self, DualOptions};
use uav_wpcn::planner::{self, TourOptions};
use uav_wpcn::scp;
use uav_wpcn::{
    allocation, channel_gain, evaluate_slots, harvested_power, instantaneous_rate, validate_plan, Position2D,
    Scenario, ScenarioParams,
};
use uav_wpcn_cli::{commands, Context, Flags, ScenarioFile};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn load(name: &str) -> ScenarioFile {
    ScenarioFile::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)).unwrap()
}

fn context(name: &str) -> Context {
    Context::new(name, load(&format!("{name}.toml")), &Flags::default()).unwrap()
}

fn paper_scenario(users: Vec<Position2D>, period: f64) -> Scenario {
    Scenario::new(ScenarioParams {
        users,
        altitude: 5.0,
        beta0: 1e-3,
        noise_power: 1e-11,
        efficiency: 0.5,
        power: 10.0,
        max_speed: 10.0,
        period,
    })
    .unwrap()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

/// Power-transfer geometry of the two-user relaxed solution.
fn wpt_geometry() -> Verdict {
    const EPS: f64 = 4.5510;
    const TOL: f64 = 5e-3;
    let (d10, t10) = timed(|| commands::run_relaxed(&context("two_user_d10")).unwrap());
    let (d5, t5) = timed(|| commands::run_relaxed(&context("two_user_d5")).unwrap());
    let mut xs: Vec<(f64, f64)> = d10
        .hovering
        .as_ref()
        .unwrap()
        .wpt
        .iter()
        .map(|w| (w.position.x, w.position.y))
        .collect();
    xs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let two = xs.len() == 2
        && (xs[0].0 + EPS).abs() <= TOL
        && (xs[1].0 - EPS).abs() <= TOL
        && xs.iter().all(|p| p.1.abs() <= TOL);
    let mid: Vec<(f64, f64)> = d5
        .hovering
        .as_ref()
        .unwrap()
        .wpt
        .iter()
        .map(|w| (w.position.x, w.position.y))
        .collect();
    let one = mid.len() == 1 && mid[0].0.hypot(mid[0].1) <= TOL;
    let fast = t10.as_secs_f64() < 60.0 && t5.as_secs_f64() < 60.0;
    verdict(
        two && one && fast,
        format!(
            "D=10 locations {xs:?} (target +-{EPS}), D=5 locations {mid:?}, runtimes {:.2}s / {:.2}s",
            t10.as_secs_f64(),
            t5.as_secs_f64()
        ),
    )
}

/// Equalized dual objectives at convergence.
fn equalization() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let five: Vec<Position2D> = (0..5)
        .map(|_| Position2D::new(rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0)))
        .collect();
    let cases = [
        ("two-user", paper_scenario(vec![Position2D::new(-5.0, 0.0), Position2D::new(5.0, 0.0)], 10.0)),
        ("five-user", paper_scenario(five, 10.0)),
    ];
    let (results, elapsed) = timed(|| {
        cases
            .iter()
            .map(|(name, scn)| {
                let (_, diag) = dual::solve_relaxed(scn, &DualOptions::default()).unwrap();
                (*name, diag.equalization_residual, diag.dual.converged)
            })
            .collect::<Vec<_>>()
    });
    let pass = results.iter().all(|&(_, r, c)| c && r < 1e-2) && elapsed.as_secs_f64() < 300.0;
    verdict(
        pass,
        format!(
            "{}, runtime {:.2}s",
            results.iter().map(|(n, r, _)| format!("{n} spread {r:.2e}")).join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

/// Minorant properties of the energy and rate surrogates.
fn surrogate_suite() -> Verdict {
    let scn = paper_scenario(vec![Position2D::new(-5.0, 0.0), Position2D::new(5.0, 0.0)], 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pos = |rng: &mut ChaCha8Rng| Position2D::new(rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0));
    let ((dominance, tightness, concavity), elapsed) = timed(|| {
        let (mut dom, mut tight, mut conc) = (0usize, 0usize, 0usize);
        for _ in 0..1000 {
            let (q, q_ref, other) = (pos(&mut rng), pos(&mut rng), pos(&mut rng));
            let k = rng.gen_range(0..2);
            let tau0 = rng.gen_range(0.0..1.0);
            let tau = rng.gen_range(0.0..1.0);
            let p = rng.gen_range(0.0..1e-2);
            let e_true = harvested_power(&scn, &q, k).unwrap() * tau0;
            let r_true = instantaneous_rate(&scn, &q, k, p).unwrap() * tau;
            let e = |x: &Position2D| scp::energy_surrogate(&scn, k, tau0, x, &q_ref);
            let r = |x: &Position2D| scp::rate_surrogate(&scn, k, tau, p, x, &q_ref);
            if e(&q) > e_true + 1e-12 {
                dom += 1;
            }
            if r(&q) > r_true + 1e-12 {
                dom += 1;
            }
            let e_ref = harvested_power(&scn, &q_ref, k).unwrap() * tau0;
            let r_ref = instantaneous_rate(&scn, &q_ref, k, p).unwrap() * tau;
            if (e(&q_ref) - e_ref).abs() > 1e-12 || (r(&q_ref) - r_ref).abs() > 1e-12 {
                tight += 1;
            }
            let mid = q.lerp(&other, 0.5);
            if e(&mid) < 0.5 * (e(&q) + e(&other)) - 1e-12 || r(&mid) < 0.5 * (r(&q) + r(&other)) - 1e-12 {
                conc += 1;
            }
        }
        (dom, tight, conc)
    });
    verdict(
        dominance == 0 && tightness == 0 && concavity == 0 && elapsed.as_secs_f64() < 10.0,
        format!(
            "1000 samples per surrogate: {dominance} dominance, {tightness} tightness, {concavity} concavity violations, runtime {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Monotone convergence of the alternating refinement.
fn scp_convergence() -> Verdict {
    let ctx = context("nine_user_20x20").with_period(4.0).unwrap();
    let art = commands::run_optimize(&ctx).unwrap();
    let trace = match art.trace {
        Some(commands::Trace::Scp(t)) => t,
        _ => unreachable!(),
    };
    let monotone = trace.windows(2).all(|w| w[1].common_rate >= w[0].common_rate - 1e-9);
    let n = trace.len() - 1;
    let last = &trace[trace.len() - 1];
    let prev = &trace[trace.len().saturating_sub(2)];
    let rel = (last.common_rate - prev.common_rate) / prev.common_rate.abs();
    verdict(
        monotone && art.converged && n <= 50 && rel < 1e-4,
        format!(
            "nine users, T=4 s: {} -> {} in {n} iterations, last relative improvement {rel:.2e}, monotone {monotone}",
            trace[0].common_rate, last.common_rate
        ),
    )
}

/// Ordering of the four methods across periods, plus the two-user
/// equivalence of hover-and-fly and the refinement.
fn ordering_and_two_user() -> (Verdict, Verdict) {
    let periods = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
    let ((d10, nine), elapsed) = timed(|| {
        (
            commands::run_sweep(&context("two_user_d10"), &periods).unwrap(),
            commands::run_sweep(&context("nine_user_20x20"), &periods).unwrap(),
        )
    });
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, rows) in [("two-user", &d10), ("nine-user", &nine)] {
        let mut last_gap = f64::INFINITY;
        for r in rows.iter() {
            let ordered = r.static_hover <= r.hover_fly + 1e-9 && r.hover_fly <= r.scp + 1e-9 && r.scp <= r.relaxed + 1e-6;
            let gap = (r.relaxed - r.hover_fly) / r.relaxed;
            if !ordered || gap > last_gap + 1e-9 {
                ok = false;
                notes.push(format!("{name} T={} out of order {r:?}", r.period));
            }
            last_gap = gap;
        }
        if last_gap >= 0.05 {
            ok = false;
        }
        notes.push(format!("{name} gap at T=32: {last_gap:.4}"));
    }
    ok &= elapsed.as_secs_f64() < 1800.0;
    notes.push(format!("runtime {:.1}s", elapsed.as_secs_f64()));
    let ordering = verdict(ok, notes.join("; "));

    let mut worst: f64 = 0.0;
    for r in d10.iter().filter(|r| r.period >= r.flight_time) {
        worst = worst.max((r.scp - r.hover_fly).abs() / r.hover_fly);
    }
    let considered = d10.iter().filter(|r| r.period >= r.flight_time).count();
    let two_user = verdict(
        worst < 1e-3 && considered > 0,
        format!("{considered} periods at or above the flight time, largest relative difference {worst:.2e}"),
    );
    (ordering, two_user)
}

/// Brute-force oracles for the LP, the tour and the static allocation.
fn oracles() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    let grid = 10_000;
    let log2 = |x: f64| x.log2();

    // (a) time-sharing LP, one user: charge above the user for a fraction x
    // of the period, uplink for the rest.
    {
        let w = Position2D::new(1.0, 2.0);
        let scn = paper_scenario(vec![w], 1.0);
        let q_up = 1e-4;
        let lp = dual::time_sharing_lp(&scn, &[w], &[q_up]).unwrap();
        let harvest = harvested_power(&scn, &w, 0).unwrap();
        let rate = log2(1.0 + q_up * channel_gain(&scn, &w, 0).unwrap() / scn.noise_power());
        let best = (0..=grid)
            .map(|i| i as f64 / grid as f64)
            .filter(|x| q_up * (1.0 - x) <= harvest * x)
            .map(|x| (1.0 - x) * rate)
            .fold(0.0, f64::max);
        let rel = (lp.common_rate - best).abs() / best;
        ok &= rel < 1e-3;
        notes.push(format!("LP K=1 {rel:.1e}"));
    }
    // symmetric pair: equal charging at both spots and equal uplinks, so a
    // single fraction x of the period goes to charging
    {
        let users = vec![Position2D::new(-5.0, 0.0), Position2D::new(5.0, 0.0)];
        let scn = paper_scenario(users.clone(), 1.0);
        let spots = [Position2D::new(-4.5509, 0.0), Position2D::new(4.5509, 0.0)];
        let q_up = 5e-5;
        let lp = dual::time_sharing_lp(&scn, &spots, &[q_up, q_up]).unwrap();
        let per_spot = harvested_power(&scn, &spots[0], 0).unwrap() + harvested_power(&scn, &spots[1], 0).unwrap();
        let rate = log2(1.0 + q_up * channel_gain(&scn, &users[0], 0).unwrap() / scn.noise_power());
        let best = (0..=grid)
            .map(|i| i as f64 / grid as f64)
            .filter(|x| q_up * (1.0 - x) / 2.0 <= per_spot * x / 2.0)
            .map(|x| (1.0 - x) / 2.0 * rate)
            .fold(0.0, f64::max);
        let rel = (lp.common_rate - best).abs() / best;
        ok &= rel < 1e-3;
        notes.push(format!("LP K=2 {rel:.1e}"));
    }
    // (b) tours against every permutation
    {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut worst: f64 = 0.0;
        for n in 1..=8 {
            let pts: Vec<Position2D> = (0..n)
                .map(|_| Position2D::new(rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0)))
                .collect();
            let tour = planner::plan_tour(&pts, 10.0, &TourOptions::default()).unwrap();
            let exhaustive = (0..n)
                .permutations(n)
                .map(|p| p.windows(2).map(|w| pts[w[0]].dist(&pts[w[1]])).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max((tour.distance - exhaustive).abs());
        }
        ok &= worst < 1e-9;
        notes.push(format!("tour {worst:.1e} m"));
    }
    // (c) static hovering, one user, off-center position
    {
        let scn = paper_scenario(vec![Position2D::new(0.0, 0.0)], 1.0);
        let q = Position2D::new(3.0, 4.0);
        let (_, r) = allocation::solve_static(&scn, q).unwrap();
        let harvest = harvested_power(&scn, &q, 0).unwrap();
        let snr_per_watt = channel_gain(&scn, &q, 0).unwrap() / scn.noise_power();
        let best = (1..grid)
            .map(|i| i as f64 / grid as f64)
            .map(|x| (1.0 - x) * log2(1.0 + snr_per_watt * harvest * x / (1.0 - x)))
            .fold(0.0, f64::max);
        let rel = (r - best).abs() / best;
        ok &= rel < 1e-3;
        notes.push(format!("static K=1 {rel:.1e}"));
    }
    verdict(ok, format!("relative/absolute mismatches: {}", notes.join(", ")))
}

/// Every emitted schedule passes the validator on the shipped scenarios.
fn validator() -> Verdict {
    let mut total = 0;
    let mut passed = 0;
    let mut failures = Vec::new();
    for name in ["two_user_d10", "two_user_d5", "nine_user_20x20"] {
        let ctx = context(name);
        let runs = [
            commands::run_relaxed(&ctx),
            commands::run_plan(&ctx),
            commands::run_optimize(&ctx),
            commands::run_baseline(&ctx),
        ];
        for art in runs {
            total += 1;
            let art = match art {
                Ok(a) => a,
                Err(e) => {
                    failures.push(format!("{name}: {e}"));
                    continue;
                }
            };
            let report = match &art.trajectory {
                Some(traj) => validate_plan(&ctx.scenario, traj, &art.schedule),
                None => evaluate_slots(&ctx.scenario, &art.schedule),
            };
            match report {
                Ok(r) if r.neutral_within(1e-6) => passed += 1,
                Ok(r) => failures.push(format!("{name}/{}: neutrality {:.2e}", art.method.tag(), r.max_neutrality_violation)),
                Err(e) => failures.push(format!("{name}/{}: {e}", art.method.tag())),
            }
        }
    }
    verdict(
        passed == total,
        format!("{passed}/{total} schedules valid{}", if failures.is_empty() { String::new() } else { format!(": {}", failures.join("; ")) }),
    )
}

fn main() -> ExitCode {
    let mut results = vec![
        ("1 two-user power-transfer geometry", wpt_geometry()),
        ("2 dual equalization", equalization()),
        ("3 surrogate property suite", surrogate_suite()),
        ("4 refinement monotone convergence", scp_convergence()),
    ];
    let (ordering, two_user) = ordering_and_two_user();
    results.push(("5 method ordering over periods", ordering));
    results.push(("6 two-user hover-and-fly optimality", two_user));
    results.push(("7 brute-force oracle equivalence", oracles()));
    results.push(("8 validator invariants on shipped scenarios", validator()));
    let mut failed = 0;
    for (name, v) in &results {
        println!("[{}] criterion {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
