//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! Exits 0 whatever the verdicts so that the workspace test run reports the
//! table; set STAGFLOW_ACCEPTANCE_STRICT=1 to exit 1 on any FAIL. The
//! 500×500 vortex runs take hours and only run with STAGFLOW_LONG=1.

mod common;

use std::time::Instant;

use common::*;
use stagflow::cases::{SweepOutcome, SweepSpec, TimeStep};
use stagflow::schemes::SchemeKind;
use stagflow::vortex::{run_mach_set, run_vortex, ViscosityMode, VortexParams, VortexRun, MACH_SET};

const SWEEP_EPS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, name: &str, pass: bool, detail: String, started: Instant) {
        if !pass {
            self.failed += 1;
        }
        println!("{} {name}: {detail} [{:.1}s]", if pass { "PASS" } else { "FAIL" }, started.elapsed().as_secs_f64());
    }

    fn skip(&self, name: &str, why: &str) {
        println!("SKIP {name}: {why}");
    }
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn operator_algebra(rep: &mut Report) {
    let t = Instant::now();
    let fails: Vec<String> = (0..50).flat_map(operator_algebra_trial).collect();
    let detail = if fails.is_empty() { "50 random grids up to 16x16".to_string() } else { fails.join("; ") };
    rep.line("operator algebra", fails.is_empty(), detail, t);
}

fn identities(rep: &mut Report) {
    let t = Instant::now();
    let mut bad = Vec::new();
    let (mut worst, mut semi) = (0.0f64, f64::NEG_INFINITY);
    for kind in SchemeKind::ALL {
        let r = identity_run(kind, 3, 0.1, 20);
        if kind == SchemeKind::SemiImplicit {
            semi = r.worst_kinetic;
        } else {
            worst = worst.max(r.worst_kinetic);
        }
        if r.steps != 20 {
            bad.push(format!("{kind}: {} steps", r.steps));
        }
        bad.extend(r.violations.iter().map(|v| format!("{kind}: {v}")));
    }
    let detail = if bad.is_empty() { format!("6 schemes x 20 steps on 8x8, max scaled kinetic residual {worst:.2e}, largest semi-implicit balance {semi:.2e}") } else { bad.join("; ") };
    rep.line("identity suite", bad.is_empty(), detail, t);
}

fn oracles(rep: &mut Report) {
    let t = Instant::now();
    let gaps: Vec<(OracleCase, f64)> = oracle_cases().into_iter().map(|c| (c, oracle_gap(c))).collect();
    let worst = gaps.iter().map(|g| g.1).fold(0.0, f64::max);
    let pass = gaps.iter().all(|g| g.1 <= 1e-8);
    rep.line("brute-force oracles", pass, format!("{} steps on 2x2, max relative gap {worst:.2e} (limit 1e-8)", gaps.len()), t);
}

fn entropy_bounds(rep: &mut Report) {
    let t = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for g in [1.0, 1.4, 2.0, 3.0] {
        let e = entropy_bound_excess(g, 3.0, 10_000, 17);
        pass &= e <= 0.0;
        parts.push(format!("gamma {g}: {e:.1e}"));
    }
    rep.line("entropy function bounds", pass, format!("worst relative excess over 1e4 densities, R = 3: {}", parts.join(", ")), t);
}

fn sweep(kind: SchemeKind, time_step: TimeStep) -> Result<SweepOutcome, String> {
    let spec = SweepSpec { kind, n: 16, t_end: 0.1, time_step, ..SweepSpec::default() };
    spec.run(&SWEEP_EPS, threads()).map_err(|e| e.to_string())
}

/// Slope and monotonicity, plus the decay ratio and δp spread when `full`.
fn sweep_verdict(o: &SweepOutcome, full: bool) -> (bool, String) {
    let s = &o.summary;
    let slope = s.slope_l2().unwrap_or(f64::NAN);
    let mut pass = slope >= 0.9 && s.distances_monotone;
    let mut detail = format!("dt {:.3e}, L2 slope {slope:.3}, distances monotone {}", o.dt, s.distances_monotone);
    if full {
        let (first, last) = (&s.records[0], &s.records[s.records.len() - 1]);
        let ratio = (last.dist_u_l2 / first.dist_u_l2).max(last.dist_dp_l2 / first.dist_dp_l2);
        let dps: Vec<f64> = s.records.iter().map(|r| r.dp_l2_max).collect();
        let spread = dps.iter().cloned().fold(0.0, f64::max) / dps.iter().cloned().fold(f64::INFINITY, f64::min);
        pass &= ratio <= 1e-3 && spread <= 3.0;
        detail += &format!(", distance ratio 1e-4/1e-1 {ratio:.2e} (limit 1e-3), max dp spread x{spread:.3} (limit 3)");
    }
    let bad: Vec<String> = o.members.iter().filter(|m| m.outcome.min_density <= 0.0 || m.outcome.mass_drift() > 1e-12).map(|m| format!("eps {}", m.eps)).collect();
    if !bad.is_empty() {
        pass = false;
        detail += &format!(", mass or positivity lost for {}", bad.join(", "));
    }
    (pass, detail)
}

fn sweeps(rep: &mut Report) {
    let t = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (kind, step, full) in [
        (SchemeKind::PressureCorrection, TimeStep::Fixed(0.01), true),
        (SchemeKind::Implicit, TimeStep::Fixed(0.005), false),
        (SchemeKind::SemiImplicit, TimeStep::MachUniform { eta: 0.1, c0: None }, false),
    ] {
        match sweep(kind, step) {
            Ok(o) => {
                let (p, d) = sweep_verdict(&o, full);
                pass &= p;
                parts.push(format!("{kind}: {d}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{kind}: {e}"));
            }
        }
    }
    rep.line("asymptotic-preserving sweeps", pass, parts.join("; "), t);
}

fn mach_uniform(rep: &mut Report) {
    let t = Instant::now();
    let spec = SweepSpec { kind: SchemeKind::SemiImplicit, n: 16, time_step: TimeStep::MachUniform { eta: 0.1, c0: None }, ..SweepSpec::default() };
    let (mesh, eos) = (spec.mesh().unwrap(), spec.eos().unwrap());
    let orders: [&[f64]; 3] = [&SWEEP_EPS, &[1e-4, 1e-3, 1e-2, 1e-1], &[1e-2, 1e-4, 1e-1, 1e-3]];
    let dts: Vec<u64> = orders.iter().map(|e| spec.resolve_dt(&mesh, &eos, e).unwrap().0.to_bits()).collect();
    let same = dts.iter().all(|d| *d == dts[0]);
    let (cfl, detail) = match spec.run(&SWEEP_EPS, threads()) {
        Ok(o) => {
            let ok: Vec<bool> = o.members.iter().map(|m| m.outcome.cfl_ok).collect();
            let margin = o.members.iter().flat_map(|m| m.outcome.monitor.reports.iter().map(|r| r.cfl_margin)).fold(f64::INFINITY, f64::min);
            (ok.iter().all(|b| *b), format!("dt {:.6e} identical over eps orders {same}, CFL held every step {ok:?}, smallest margin {margin:.3}", f64::from_bits(dts[0])))
        }
        Err(e) => (false, e.to_string()),
    };
    rep.line("Mach-uniform CFL", same && cfl, detail, t);
}

fn pairwise(runs: &[&VortexRun], f: impl Fn(&VortexRun, &VortexRun) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            worst = worst.max(f(runs[i], runs[j]));
        }
    }
    worst
}

fn vortex(rep: &mut Report) {
    let t = Instant::now();
    let params = VortexParams::default();
    let kind = SchemeKind::PressureCorrection;
    let results = match run_mach_set(&params, &MACH_SET, 100, 0.04, kind, threads()) {
        Ok(r) => r,
        Err(e) => {
            rep.line("vortex 100x100", false, e.to_string(), t);
            return;
        }
    };
    let errors: Vec<String> = results.iter().filter_map(|r| r.as_ref().err().map(|e| e.to_string())).collect();
    if !errors.is_empty() {
        rep.line("vortex 100x100", false, errors.join("; "), t);
        return;
    }
    let runs: Vec<&VortexRun> = results.iter().map(|r| r.as_ref().unwrap()).collect();
    let du = pairwise(&runs, |a, b| a.velocity.max_difference(&b.velocity));
    let l1: Vec<String> = runs.iter().map(|r| format!("{:.4}", r.errors.velocity_l1)).collect();
    rep.line("vortex velocity profiles", du <= 0.02, format!("max pairwise difference {du:.3e} (limit 0.02), L1 errors {}", l1.join("/")), t);

    let t = Instant::now();
    let dp = pairwise(&runs, |a, b| a.pressure.max_difference(&b.pressure) / a.pressure.amplitude().max(b.pressure.amplitude()));
    let amps: Vec<String> = runs.iter().map(|r| format!("{:.4}", r.pressure.amplitude())).collect();
    rep.line("vortex scaled pressure collapse", dp <= 0.1, format!("max pairwise difference {:.1}% of amplitude (limit 10%), amplitudes {}", 100.0 * dp, amps.join("/")), t);

    let t = Instant::now();
    let c_m = 1e4;
    let coarse = runs.iter().find(|r| r.params.c_m == c_m).unwrap().errors.velocity_l1;
    match run_vortex(&VortexParams { c_m, ..params }, 200, 0.02, kind, |_, _, _| {}) {
        Ok(fine) => {
            let ratio = coarse / fine.errors.velocity_l1;
            rep.line(
                "vortex refinement",
                ratio >= 1.5,
                format!("c_M = {c_m:e}: L1 velocity error {coarse:.4} -> {:.4}, ratio {ratio:.3} (limit 1.5)", fine.errors.velocity_l1),
                t,
            );
        }
        Err(e) => rep.line("vortex refinement", false, e.to_string(), t),
    }
}

fn vortex_long(rep: &mut Report) {
    let name = "vortex 500x500";
    if std::env::var("STAGFLOW_LONG").as_deref() != Ok("1") {
        rep.skip(name, "set STAGFLOW_LONG=1 to run (hours)");
        return;
    }
    let t = Instant::now();
    let euler_pressure = [0.0168, 0.0223, 0.0229, 0.0227, 0.0264];
    let ns_pressure = [0.0108, 0.0138, 0.0147, 0.0146, 0.0183];
    let mut pass = true;
    let mut parts = Vec::new();
    for (mode, paper_p) in [(ViscosityMode::EulerArtificial, euler_pressure), (ViscosityMode::NavierStokes, ns_pressure)] {
        let params = VortexParams { mode, ..VortexParams::default() };
        let results = match run_mach_set(&params, &MACH_SET, 500, 0.008, SchemeKind::PressureCorrection, threads()) {
            Ok(r) => r,
            Err(e) => {
                rep.line(name, false, e.to_string(), t);
                return;
            }
        };
        for (i, r) in results.iter().enumerate() {
            let r = match r {
                Ok(r) => r,
                Err(e) => {
                    pass = false;
                    parts.push(format!("{mode} c_M {:e}: {e}", MACH_SET[i]));
                    continue;
                }
            };
            let v = r.errors.velocity_l1;
            let ok_v = match mode {
                ViscosityMode::EulerArtificial => {
                    let target = [0.192, 0.189, 0.187, 0.187, 0.187][i];
                    (v - target).abs() <= 0.01
                }
                ViscosityMode::NavierStokes => v > 0.09 && v < 0.11,
            };
            let p = r.errors.pressure_l1_scaled;
            let ok_p = (p - paper_p[i]).abs() <= 0.3 * paper_p[i];
            pass &= ok_v && ok_p;
            parts.push(format!("{mode} c_M {:e}: velocity {v:.4}, scaled pressure {p:.4}", MACH_SET[i]));
        }
    }
    rep.line(name, pass, parts.join("; "), t);
}

fn main() {
    // libtest passes flags such as --nocapture; listing mode has nothing to list
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut rep = Report { failed: 0 };
    operator_algebra(&mut rep);
    identities(&mut rep);
    oracles(&mut rep);
    entropy_bounds(&mut rep);
    sweeps(&mut rep);
    mach_uniform(&mut rep);
    vortex(&mut rep);
    vortex_long(&mut rep);
    println!("{} criteria failed", rep.failed);
    if rep.failed > 0 && std::env::var("STAGFLOW_ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
