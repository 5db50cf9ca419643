//! The `run`, `sweep`, `vortex` and `check` commands.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use stagflow::cases::{run_scheme, CaseError, RunOutcome, SmoothData, SweepSpec, TimeStep};
use stagflow::diagnostics::DiagnosticsError;
use stagflow::eos::Eos;
use stagflow::mesh::StaggeredMesh;
use stagflow::output;
use stagflow::schemes::{Boundary, Scheme, SchemeError, SchemeKind};
use stagflow::vortex::{self, VortexError, VortexRun};
use thiserror::Error;

use crate::config::{Case, ConfigError, DtSpec, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("writing {0}: {1}")]
    Csv(String, csv::Error),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Vortex(#[from] VortexError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{0}")]
    Rejected(String),
    /// Hard diagnostic violations under strict mode.
    #[error("{} diagnostic violation(s):\n  {}", .0.len(), .0.join("\n  "))]
    Violations(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Violations(_) => 2,
            _ => 1,
        }
    }
}

/// Options shared by every command.
#[derive(Debug, Clone)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub eps: Option<Vec<f64>>,
    pub strict: bool,
    pub threads: usize,
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    RunConfig::parse(&text).map_err(|source| CliError::Config { path: path.display().to_string(), source })
}

fn out_dir(cfg: &RunConfig, opts: &Options) -> Result<PathBuf, CliError> {
    let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(dir.display().to_string(), e))?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<(BufWriter<File>, String), CliError> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    Ok((BufWriter::new(f), path.display().to_string()))
}

fn write_csv(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> csv::Result<()>) -> Result<(), CliError> {
    let (mut w, path) = create(dir, name)?;
    f(&mut w).map_err(|e| CliError::Csv(path, e))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::Io(path.display().to_string(), e))
}

/// Tag for file names: the shortest exact representation.
fn tag(v: f64) -> String {
    format!("{v:e}")
}

/// Hard violations recorded along a run.
pub fn violations(scheme: &Scheme, outcome: &RunOutcome) -> Vec<String> {
    let mut out = Vec::new();
    let m = &outcome.monitor;
    for r in &m.reports {
        if !r.kinetic_ok {
            out.push(format!("step {}: kinetic energy balance residual {:.3e} (scale {:.3e})", r.n, r.ke_residual, r.scale));
        }
        if !r.renorm_ok {
            out.push(format!("step {}: renormalization defect {:.3e} (scale {:.3e})", r.n, r.renorm_max_defect, r.scale));
        }
    }
    if m.estimates_apply {
        let audit = m.audit();
        if let Some(n) = audit.first_violation {
            out.push(format!("step {n}: entropy estimate violated"));
        }
    }
    if scheme.boundary.is_homogeneous() && !scheme.cfg.kind.is_incompressible() && outcome.mass_drift() > 1e-12 {
        out.push(format!("total mass drifted by {:.3e} (relative)", outcome.mass_drift()));
    }
    if !outcome.cfl_ok {
        out.push("a semi-implicit step exceeded its CFL bound".into());
    }
    out
}

fn finish(strict: bool, found: Vec<String>) -> Result<(), CliError> {
    if found.is_empty() {
        return Ok(());
    }
    if strict {
        return Err(CliError::Violations(found));
    }
    for v in &found {
        eprintln!("warning: {v}");
    }
    Ok(())
}

fn summary_line(scheme: &Scheme, outcome: &RunOutcome) -> String {
    let last = outcome.monitor.reports.last();
    format!(
        "scheme {} eps {} dt {} steps {} final mass {} kinetic energy {} min density {}\n",
        scheme.cfg.kind,
        scheme.cfg.eps,
        scheme.cfg.dt,
        outcome.monitor.reports.len(),
        output::float(outcome.state.mass(scheme.mesh)),
        last.map_or(f64::NAN, |r| r.kinetic_energy),
        outcome.min_density
    )
}

/// Snapshots, run log and summary of one run.
fn record_run(dir: &Path, prefix: &str, scheme: &Scheme, outcome: &RunOutcome) -> Result<(), CliError> {
    write_csv(dir, &format!("{prefix}run_log.csv"), |w| output::write_run_log(w, &outcome.monitor.reports))?;
    let s = &outcome.state;
    write_csv(dir, &format!("{prefix}cells_final.csv"), |w| output::write_cells(w, scheme.mesh, &scheme.eos, &s.rho, &s.u))?;
    write_csv(dir, &format!("{prefix}faces_final.csv"), |w| output::write_faces(w, scheme.mesh, &s.u))
}

/// Reject a semi-implicit run whose time step exceeds the CFL bound of the
/// initial state.
fn check_cfl(cfg: &RunConfig, scheme: &Scheme, state: &stagflow::schemes::SolverState) -> Result<(), CliError> {
    if !matches!(scheme.cfg.kind, SchemeKind::SemiImplicit | SchemeKind::IncompSemi) || cfg.allow_cfl_violation {
        return Ok(());
    }
    let b = scheme.cfl_budget(state)?;
    if !b.admits(scheme.cfg.dt) {
        return Err(CliError::Rejected(format!(
            "dt = {} exceeds the semi-implicit CFL bound {:.6e} of the initial state; lower dt, use dt = mach_uniform, or set allow_cfl_violation = true",
            scheme.cfg.dt, b.dt_combined
        )));
    }
    Ok(())
}

fn resolve_dt(cfg: &RunConfig, mesh: &StaggeredMesh, eos: &Eos, eps: &[f64]) -> Result<f64, CliError> {
    match cfg.dt {
        DtSpec::Fixed(dt) => Ok(dt),
        DtSpec::MachUniform => {
            let spec = SweepSpec { time_step: TimeStep::MachUniform { eta: cfg.eta, c0: cfg.c0 }, ..sweep_base(cfg)? };
            Ok(spec.resolve_dt(mesh, eos, eps)?.0)
        }
    }
}

/// Sweep-style description of a single run (rest data for the rest case).
fn sweep_base(cfg: &RunConfig) -> Result<SweepSpec, CliError> {
    let data = cfg.smooth_data().unwrap_or(SmoothData { domain: cfg.domain, rho_amp: 0.0, u_amp: 0.0, ..SmoothData::well_prepared() });
    Ok(SweepSpec {
        kind: cfg.kind,
        n: cfg.nx,
        gamma: cfg.gamma,
        mu: cfg.mu,
        lambda: cfg.lambda,
        t_end: cfg.t_end,
        time_step: TimeStep::Fixed(f64::NAN),
        convection: cfg.convection,
        data,
        tolerances: cfg.tolerances,
    })
}

pub fn run(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    if let Some(e) = opts.eps.as_ref().and_then(|v| v.first()) {
        cfg.eps = *e;
    }
    let dir = out_dir(&cfg, opts)?;
    write_text(&dir, "effective_config.ini", &cfg.to_ini())?;
    if let Case::Vortex { params, .. } = &cfg.case {
        let DtSpec::Fixed(dt) = cfg.dt else { unreachable!("validated") };
        let mesh = params.mesh(cfg.nx)?;
        let mut p = params.clone();
        p.t_end = cfg.t_end;
        let mut scheme = p.scheme(&mesh, cfg.kind, dt)?;
        cfg.tolerances.apply(&mut scheme.cfg);
        let init = p.initial_state(&scheme)?;
        let outcome = run_with_snapshots(&cfg, &dir, &scheme, init)?;
        let t = outcome.state.t;
        let errors = vortex::error_norms(&mesh, &p, &outcome.state.rho, &outcome.state.u, t);
        let line = 0.8_f64.min(p.x0[1] + p.a[1] * t);
        let run = VortexRun {
            params: p.clone(),
            n: cfg.nx,
            dt,
            steps: outcome.monitor.reports.len(),
            errors,
            velocity: vortex::velocity_profile(&mesh, &p, &outcome.state.u, t, line),
            pressure: vortex::pressure_profile(&mesh, &p, &outcome.state.rho, t, line),
            state: outcome.state.clone(),
        };
        write_vortex_files(&dir, &run)?;
        write_csv(&dir, "vortex_errors.csv", |w| output::write_vortex_errors(w, &[&run]))?;
        record_run(&dir, "", &scheme, &outcome)?;
        write_text(&dir, "summary.txt", &summary_line(&scheme, &outcome))?;
        return finish(opts.strict, violations(&scheme, &outcome));
    }
    let mesh = StaggeredMesh::uniform(cfg.nx, cfg.ny, cfg.domain).map_err(|e| CliError::Rejected(e.to_string()))?;
    let eos = Eos::power(cfg.gamma).map_err(SchemeError::from)?;
    let dt = resolve_dt(&cfg, &mesh, &eos, &[cfg.eps])?;
    let spec = sweep_base(&cfg)?;
    let mut scfg = spec.config(cfg.kind, cfg.eps, dt);
    scfg.t_end = cfg.t_end;
    let scheme = Scheme::new(&mesh, eos.clone(), scfg, Boundary::default())?;
    let init = match &cfg.case {
        Case::Rest => {
            if cfg.kind.is_incompressible() {
                scheme.init_incompressible(|_| [0.0; 2], None)?
            } else {
                scheme.init(|_| 1.0, |_| [0.0; 2])?
            }
        }
        _ => {
            let data = cfg.smooth_data().expect("smooth case");
            if cfg.kind.is_incompressible() {
                scheme.init_incompressible(|x| data.velocity(x), data.limit_dp(&mesh, &eos))?
            } else {
                scheme.init(|x| data.rho(cfg.eps, x), |x| data.velocity(x))?
            }
        }
    };
    let outcome = run_with_snapshots(&cfg, &dir, &scheme, init)?;
    record_run(&dir, "", &scheme, &outcome)?;
    write_text(&dir, "summary.txt", &summary_line(&scheme, &outcome))?;
    print!("{}", summary_line(&scheme, &outcome));
    finish(opts.strict, violations(&scheme, &outcome))
}

fn run_with_snapshots(cfg: &RunConfig, dir: &Path, scheme: &Scheme, init: stagflow::schemes::SolverState) -> Result<RunOutcome, CliError> {
    check_cfl(cfg, scheme, &init)?;
    let every = cfg.snapshot_every;
    let mut failure: Option<CliError> = None;
    let outcome = run_scheme(scheme, init, |s, _, r| {
        let n = r.state.n;
        if every > 0 && n % every == 0 && failure.is_none() {
            let st = &r.state;
            let res = write_csv(dir, &format!("cells_{n:06}.csv"), |w| output::write_cells(w, s.mesh, &s.eos, &st.rho, &st.u))
                .and_then(|_| write_csv(dir, &format!("faces_{n:06}.csv"), |w| output::write_faces(w, s.mesh, &st.u)));
            if let Err(e) = res {
                failure = Some(e);
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(outcome),
    }
}

pub fn sweep(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let dir = out_dir(cfg, opts)?;
    let mut cfg = cfg.clone();
    if let Some(e) = &opts.eps {
        cfg.sweep_eps = e.clone();
    }
    write_text(&dir, "effective_config.ini", &cfg.to_ini())?;
    let spec = cfg.sweep_spec().map_err(|source| CliError::Config { path: "<config>".into(), source })?;
    let results = spec.run_members(&cfg.sweep_eps, opts.threads)?;
    // keep whatever finished before reporting a failure
    let mut first_error = None;
    for (job, r) in &results.runs {
        let name = match job {
            Some(e) => format!("eps_{}_", tag(*e)),
            None => "incompressible_".to_string(),
        };
        match r {
            Ok(o) => write_csv(&dir, &format!("{name}run_log.csv"), |w| output::write_run_log(w, &o.monitor.reports))?,
            Err(e) if first_error.is_none() => first_error = Some(e.to_string()),
            Err(_) => {}
        }
    }
    if let Some(e) = first_error {
        return Err(CliError::Rejected(format!("sweep aborted: {e}")));
    }
    let outcome = results.summarize()?;
    write_csv(&dir, "sweep.csv", |w| output::write_sweep(w, &outcome.summary))?;
    let s = &outcome.summary;
    let fmt_slope = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
    let mut report = format!(
        "scheme {} dt {} members {}\nslope L1 {}\nslope L2 {}\nslope Lgamma {}\nslope Lq {}\ndistances monotone {}\n",
        spec.kind,
        output::float(outcome.dt),
        outcome.members.len(),
        fmt_slope(s.slopes[0]),
        fmt_slope(s.slopes[1]),
        fmt_slope(s.slopes[2]),
        fmt_slope(s.slopes[3]),
        s.distances_monotone
    );
    if let Some(m) = outcome.mach {
        report.push_str(&format!("mach uniform C0 {} C {} eta {}\n", output::float(m.c0), output::float(m.c), m.eta));
    }
    write_text(&dir, "rates.txt", &report)?;
    print!("{report}");
    let mut found = Vec::new();
    let mesh = spec.mesh()?;
    for m in &outcome.members {
        let scheme = Scheme::new(&mesh, spec.eos()?, spec.config(spec.kind, m.eps, m.dt), Boundary::default())?;
        found.extend(violations(&scheme, &m.outcome).into_iter().map(|v| format!("eps {}: {v}", m.eps)));
    }
    finish(opts.strict, found)
}

fn write_vortex_files(dir: &Path, run: &VortexRun) -> Result<(), CliError> {
    let t = tag(run.params.c_m);
    write_csv(dir, &format!("profile_cm_{t}.csv"), |w| output::write_velocity_profile(w, &run.velocity))?;
    write_csv(dir, &format!("dp_profile_cm_{t}.csv"), |w| output::write_dp_profile(w, &run.pressure))
}

pub fn vortex_set(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let Case::Vortex { params, c_ms } = &cfg.case else {
        return Err(CliError::Rejected(format!("the vortex command needs case type = vortex (got {})", cfg.case.name())));
    };
    let DtSpec::Fixed(dt) = cfg.dt else { unreachable!("validated") };
    let dir = out_dir(cfg, opts)?;
    write_text(&dir, "effective_config.ini", &cfg.to_ini())?;
    let p = stagflow::vortex::VortexParams { t_end: cfg.t_end, ..params.clone() };
    let results = vortex::run_mach_set(&p, c_ms, cfg.nx, dt, cfg.kind, opts.threads)?;
    let mut runs = Vec::new();
    let mut first_error = None;
    for r in results {
        match r {
            Ok(run) => {
                write_vortex_files(&dir, &run)?;
                runs.push(run);
            }
            Err(e) if first_error.is_none() => first_error = Some(e),
            Err(_) => {}
        }
    }
    let refs: Vec<&VortexRun> = runs.iter().collect();
    write_csv(&dir, "vortex_errors.csv", |w| output::write_vortex_errors(w, &refs))?;
    for r in &runs {
        println!(
            "c_M {:e} Ma {:.3e} velocity L1 error {:.6} pressure L1 error / c {:.6}",
            r.params.c_m,
            1.0 / r.params.sound_speed(),
            r.errors.velocity_l1,
            r.errors.pressure_l1_scaled
        );
    }
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

/// One line of the invariant suite.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Identity checks for every scheme on random smooth data.
pub fn check_suite(cfg: &RunConfig, steps: usize) -> Result<Vec<CheckLine>, CliError> {
    let mut lines = Vec::new();
    let seed = match cfg.case {
        Case::Random { seed } => seed,
        _ => 0,
    };
    let data = SmoothData { domain: [0.0, 1.0, 0.0, 1.0], ..SmoothData::random(seed) };
    let mesh = StaggeredMesh::uniform(8, 8, data.domain).map_err(|e| CliError::Rejected(e.to_string()))?;
    let eos = Eos::power(cfg.gamma).map_err(SchemeError::from)?;
    for kind in SchemeKind::ALL {
        let spec = SweepSpec { kind, n: 8, gamma: cfg.gamma, mu: cfg.mu, lambda: cfg.lambda, data: data.clone(), tolerances: cfg.tolerances, ..SweepSpec::default() };
        let dt = if kind == SchemeKind::SemiImplicit || kind == SchemeKind::IncompSemi {
            let s = SweepSpec { time_step: TimeStep::MachUniform { eta: cfg.eta, c0: None }, ..spec.clone() };
            s.resolve_dt(&mesh, &eos, &[cfg.eps])?.0
        } else {
            0.005
        };
        let mut c = spec.config(kind, cfg.eps, dt);
        c.t_end = dt * steps as f64;
        let scheme = Scheme::new(&mesh, eos.clone(), c, Boundary::default())?;
        let init = if kind.is_incompressible() {
            scheme.init_incompressible(|x| data.velocity(x), None)?
        } else {
            scheme.init(|x| data.rho(cfg.eps, x), |x| data.velocity(x))?
        };
        let outcome = run_scheme(&scheme, init, |_, _, _| {})?;
        let v = violations(&scheme, &outcome);
        let worst = outcome.monitor.reports.iter().map(|r| r.ke_residual.abs() / r.scale).fold(0.0, f64::max);
        lines.push(CheckLine {
            name: format!("identities {kind}"),
            pass: v.is_empty() && outcome.min_density > 0.0,
            detail: if v.is_empty() { format!("{} steps, max scaled kinetic residual {worst:.2e}", outcome.monitor.reports.len()) } else { v.join("; ") },
        });
    }
    Ok(lines)
}

pub fn check(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let lines = check_suite(cfg, 20)?;
    let mut failed = Vec::new();
    for l in &lines {
        println!("{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
        if !l.pass {
            failed.push(format!("{}: {}", l.name, l.detail));
        }
    }
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.display().to_string(), e))?;
        let text: String = lines.iter().map(|l| format!("{} {}: {}\n", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail)).collect();
        write_text(dir, "check.txt", &text)?;
    }
    finish(opts.strict, failed)
}
