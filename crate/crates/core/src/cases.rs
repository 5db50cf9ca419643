//! Initial data and run drivers shared by the command line and the test
//! suites: smooth closed-box data, single runs with diagnostics, and ε sweeps
//! against the incompressible limit.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::diagnostics::{self, DiagnosticsError, Monitor, SweepRun, SweepSummary, SweepTracker};
use crate::eos::Eos;
use crate::fields::{self, CellField};
use crate::mesh::StaggeredMesh;
use crate::operators::Convection;
use crate::schemes::{mach_uniform_step, Boundary, MachUniformStep, Scheme, SchemeConfig, SchemeError, SchemeKind, SolverState, StepResult};

#[derive(Debug, Error)]
pub enum CaseError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("step {step} failed: {source}")]
    Step { step: usize, source: SchemeError },
    #[error("sweep member eps = {eps} failed: {source}")]
    Member { eps: f64, source: Box<CaseError> },
    #[error("{0}")]
    Invalid(String),
}

/// Smooth data in a closed box [x0,x1]×[y0,y1]: a density perturbation of
/// size `rho_amp`·ε^`rho_power` and a velocity vanishing on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothData {
    pub domain: [f64; 4],
    pub rho_amp: f64,
    /// 2 for well-prepared data, 1 for ill-prepared, 0 for ε-independent.
    pub rho_power: i32,
    /// Divergence-free part of the velocity.
    pub u_amp: f64,
    /// Compressible part of the velocity (zero for well-prepared data).
    pub div_amp: f64,
    /// Extra random Fourier modes (seeded), for generic data.
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub k: [f64; 2],
    pub rho: f64,
    pub u: [f64; 2],
}

impl Default for SmoothData {
    fn default() -> Self {
        Self { domain: [0.0, 1.0, 0.0, 1.0], rho_amp: 1.0, rho_power: 2, u_amp: 1.0, div_amp: 0.0, modes: Vec::new() }
    }
}

impl SmoothData {
    pub fn well_prepared() -> Self {
        Self::default()
    }

    /// ε-independent smooth data with a few random modes, density in [0.6, 1.4].
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = (0..3)
            .map(|_| Mode {
                k: [rng.gen_range(1..4) as f64, rng.gen_range(1..4) as f64],
                rho: rng.gen_range(-0.1..0.1),
                u: [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
            })
            .collect();
        Self { rho_amp: rng.gen_range(-0.1..0.1), rho_power: 0, u_amp: rng.gen_range(0.2..1.0), div_amp: rng.gen_range(-0.3..0.3), modes, ..Self::default() }
    }

    fn unit(&self, x: [f64; 2]) -> [f64; 2] {
        let [x0, x1, y0, y1] = self.domain;
        [(x[0] - x0) / (x1 - x0), (x[1] - y0) / (y1 - y0)]
    }

    /// Shape of the leading density perturbation.
    pub fn rho_shape(&self, x: [f64; 2]) -> f64 {
        let [s, t] = self.unit(x);
        (PI * s).cos() * (PI * t).cos()
    }

    pub fn rho(&self, eps: f64, x: [f64; 2]) -> f64 {
        let [s, t] = self.unit(x);
        let mut r = 1.0 + self.rho_amp * eps.powi(self.rho_power) * self.rho_shape(x);
        for m in &self.modes {
            r += m.rho * (m.k[0] * PI * s).cos() * (m.k[1] * PI * t).cos();
        }
        r
    }

    pub fn velocity(&self, x: [f64; 2]) -> [f64; 2] {
        let [s, t] = self.unit(x);
        let (ps, pt) = (PI * s, PI * t);
        let mut u = [
            self.u_amp * ps.sin().powi(2) * (2.0 * pt).sin() + self.div_amp * (2.0 * ps).sin() * pt.sin().powi(2),
            -self.u_amp * (2.0 * ps).sin() * pt.sin().powi(2) + self.div_amp * ps.sin().powi(2) * (2.0 * pt).sin(),
        ];
        for m in &self.modes {
            let b = (m.k[0] * ps).sin() * (m.k[1] * pt).sin();
            u[0] += m.u[0] * b;
            u[1] += m.u[1] * b;
        }
        u
    }

    /// Limit pressure deviation lim (p(ρ⁰) − mean)/ε² = p'(1)·a·shape, defined
    /// for well-prepared data without extra modes.
    pub fn limit_dp(&self, mesh: &StaggeredMesh, eos: &Eos) -> Option<CellField> {
        if self.rho_power != 2 || !self.modes.is_empty() {
            return None;
        }
        let c = eos.dpressure(1.0) * self.rho_amp;
        Some(fields::cell_averages(mesh, |x| c * self.rho_shape(x), 2))
    }
}

/// Everything gathered along one run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: SolverState,
    pub monitor: Monitor,
    pub tracker: SweepTracker,
    /// Every semi-implicit step respected its CFL bound.
    pub cfl_ok: bool,
    pub min_density: f64,
    pub initial_mass: f64,
}

impl RunOutcome {
    pub fn mass_drift(&self) -> f64 {
        self.monitor.reports.iter().map(|r| ((r.mass - self.initial_mass) / self.initial_mass).abs()).fold(0.0, f64::max)
    }
}

/// Advance `initial` over the configured number of steps, recording
/// diagnostics; `on_step` sees each step before the state moves on.
pub fn run_scheme(scheme: &Scheme, initial: SolverState, mut on_step: impl FnMut(&Scheme, &SolverState, &StepResult)) -> Result<RunOutcome, CaseError> {
    let mesh = scheme.mesh;
    let mut monitor = Monitor::new(scheme, &initial)?;
    let mut tracker = SweepTracker::new(scheme.cfg.eps, scheme.eos.gamma().unwrap_or(1.0));
    let dev0 = if scheme.cfg.kind.is_incompressible() {
        diagnostics::deviation_norms(mesh, initial.dp.clone().unwrap_or_else(|| vec![0.0; mesh.n_cells()]))
    } else {
        diagnostics::pressure_deviation(mesh, &initial.rho, &scheme.eos, scheme.cfg.eps).map_err(SchemeError::from)?
    };
    tracker.observe(mesh, &initial.rho, Some(&dev0));
    let initial_mass = initial.mass(mesh);
    let mut min_density = initial.rho.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut cfl_ok = true;
    let mut state = initial;
    for step in 1..=scheme.cfg.n_steps() {
        let r = scheme.step(&state).map_err(|source| CaseError::Step { step, source })?;
        let report = monitor.record(scheme, &state, &r)?;
        let dev = diagnostics::PressureDeviation { dp: Vec::new(), l2: report.dp_l2, linf: report.dp_linf };
        tracker.observe(mesh, &r.state.rho, Some(&dev));
        if let Some(c) = r.cfl {
            cfl_ok &= c.admits(scheme.cfg.dt);
        }
        min_density = r.state.rho.iter().cloned().fold(min_density, f64::min);
        on_step(scheme, &state, &r);
        state = r.state;
    }
    Ok(RunOutcome { state, monitor, tracker, cfl_ok, min_density, initial_mass })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    Fixed(f64),
    /// The Mach-uniform bound, with C0 the largest initial energy over the
    /// sweep unless given.
    MachUniform { eta: f64, c0: Option<f64> },
}

/// Iteration controls that override the scheme defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub newton_rtol: f64,
    pub newton_atol: f64,
    pub newton_max_iter: usize,
    pub outer_rtol: f64,
    pub max_outer: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let c = SchemeConfig::default();
        Self {
            newton_rtol: c.nonlinear.rtol,
            newton_atol: c.nonlinear.atol,
            newton_max_iter: c.nonlinear.max_iter,
            outer_rtol: c.outer_rtol,
            max_outer: c.max_outer,
        }
    }
}

impl Tolerances {
    pub fn apply(&self, cfg: &mut SchemeConfig) {
        cfg.nonlinear.rtol = self.newton_rtol;
        cfg.nonlinear.atol = self.newton_atol;
        cfg.nonlinear.max_iter = self.newton_max_iter;
        cfg.outer_rtol = self.outer_rtol;
        cfg.max_outer = self.max_outer;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub kind: SchemeKind,
    pub n: usize,
    pub gamma: f64,
    pub mu: f64,
    pub lambda: f64,
    pub t_end: f64,
    pub time_step: TimeStep,
    pub convection: Convection,
    pub data: SmoothData,
    pub tolerances: Tolerances,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            kind: SchemeKind::PressureCorrection,
            n: 16,
            gamma: 1.4,
            mu: 0.01,
            lambda: 0.0,
            t_end: 0.1,
            time_step: TimeStep::Fixed(0.01),
            convection: Convection::Centered,
            data: SmoothData::well_prepared(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepMember {
    pub eps: f64,
    pub dt: f64,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub dt: f64,
    pub mach: Option<MachUniformStep>,
    /// Sorted by decreasing ε.
    pub members: Vec<SweepMember>,
    pub reference: RunOutcome,
    pub summary: SweepSummary,
}

impl SweepSpec {
    pub fn mesh(&self) -> Result<StaggeredMesh, CaseError> {
        StaggeredMesh::uniform(self.n, self.n, self.data.domain).map_err(|e| CaseError::Invalid(e.to_string()))
    }

    pub fn eos(&self) -> Result<Eos, CaseError> {
        Eos::power(self.gamma).map_err(|e| CaseError::Scheme(e.into()))
    }

    pub fn config(&self, kind: SchemeKind, eps: f64, dt: f64) -> SchemeConfig {
        let mut cfg = SchemeConfig { kind, eps, dt, t_end: self.t_end, mu: self.mu, lambda: self.lambda, convection: self.convection, ..Default::default() };
        self.tolerances.apply(&mut cfg);
        cfg
    }

    /// ½Σ|D|ρ⁰_D|u⁰|² + ε⁻²Σ|K|Π(ρ⁰) of the sampled initial data.
    pub fn initial_energy(&self, mesh: &StaggeredMesh, eos: &Eos, eps: f64) -> f64 {
        let rho = fields::cell_averages(mesh, |x| self.data.rho(eps, x), 2);
        let mut u = fields::face_means(mesh, |x| self.data.velocity(x), 3);
        fields::clear_boundary(mesh, &mut u);
        let rd = crate::operators::dual_density(mesh, &rho);
        diagnostics::kinetic_energy(mesh, &rd, &u) + diagnostics::elastic_potential(mesh, eos, &rho, eps)
    }

    /// The time step of the sweep, shared by all members.
    pub fn resolve_dt(&self, mesh: &StaggeredMesh, eos: &Eos, eps: &[f64]) -> Result<(f64, Option<MachUniformStep>), CaseError> {
        match self.time_step {
            TimeStep::Fixed(dt) => Ok((dt, None)),
            TimeStep::MachUniform { eta, c0 } => {
                let c0 = match c0 {
                    Some(c) => c,
                    None => eps.iter().map(|&e| self.initial_energy(mesh, eos, e)).fold(0.0, f64::max),
                };
                let radius = crate::operators::assemble_rigidity(mesh, self.mu, self.lambda)
                    .and_then(|a| a.spectral_radius())
                    .map_err(SchemeError::from)?
                    .bound;
                let m = mach_uniform_step(mesh, radius, c0, eta)?;
                Ok((m.dt, Some(m)))
            }
        }
    }

    pub fn run_member(&self, mesh: &StaggeredMesh, eos: &Eos, kind: SchemeKind, eps: f64, dt: f64) -> Result<RunOutcome, CaseError> {
        let scheme = Scheme::new(mesh, eos.clone(), self.config(kind, eps, dt), Boundary::default())?;
        let initial = if kind.is_incompressible() {
            scheme.init_incompressible(|x| self.data.velocity(x), self.data.limit_dp(mesh, eos))?
        } else {
            scheme.init(|x| self.data.rho(eps, x), |x| self.data.velocity(x))?
        };
        run_scheme(&scheme, initial, |_, _, _| {})
    }

    /// Run every ε and the incompressible limit (ε = None) with the shared
    /// time step in a pool of `threads` workers. Each member reports on its own.
    pub fn run_members(&self, eps: &[f64], threads: usize) -> Result<MemberResults, CaseError> {
        if self.kind.is_incompressible() {
            return Err(CaseError::Invalid(format!("sweep needs a compressible scheme, got {}", self.kind)));
        }
        if eps.is_empty() {
            return Err(CaseError::Invalid("empty eps list".into()));
        }
        if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(CaseError::Invalid(format!("eps must be positive (got {e})")));
        }
        let mesh = self.mesh()?;
        let eos = self.eos()?;
        let (dt, mach) = self.resolve_dt(&mesh, &eos, eps)?;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build().map_err(|e| CaseError::Invalid(e.to_string()))?;
        let mut jobs: Vec<Option<f64>> = eps.iter().map(|&e| Some(e)).collect();
        jobs.push(None);
        let runs = pool.install(|| {
            jobs.par_iter()
                .map(|&job| {
                    let r = match job {
                        Some(e) => self.run_member(&mesh, &eos, self.kind, e, dt).map_err(|source| CaseError::Member { eps: e, source: Box::new(source) }),
                        None => self.run_member(&mesh, &eos, self.kind.limit(), 1.0, dt),
                    };
                    (job, r)
                })
                .collect()
        });
        Ok(MemberResults { mesh, eos, dt, mach, runs })
    }

    /// Run the sweep and compare every member with the incompressible limit.
    pub fn run(&self, eps: &[f64], threads: usize) -> Result<SweepOutcome, CaseError> {
        self.run_members(eps, threads)?.summarize()
    }
}

/// Raw results of a sweep, in job order: the ε members, then the limit (None).
pub struct MemberResults {
    pub mesh: StaggeredMesh,
    pub eos: Eos,
    pub dt: f64,
    pub mach: Option<MachUniformStep>,
    pub runs: Vec<(Option<f64>, Result<RunOutcome, CaseError>)>,
}

impl MemberResults {
    pub fn summarize(self) -> Result<SweepOutcome, CaseError> {
        let Self { mesh, eos, dt, mach, runs } = self;
        let mut members = Vec::new();
        let mut reference = None;
        for (job, r) in runs {
            let outcome = r?;
            match job {
                Some(eps) => members.push(SweepMember { eps, dt, outcome }),
                None => reference = Some(outcome),
            }
        }
        let reference = reference.ok_or_else(|| CaseError::Invalid("missing incompressible reference".into()))?;
        members.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        let dps: Vec<CellField> = members
            .iter()
            .map(|m| diagnostics::pressure_deviation(&mesh, &m.outcome.state.rho, &eos, m.eps).map(|d| d.dp))
            .collect::<Result<_, _>>()
            .map_err(SchemeError::from)?;
        let runs: Vec<SweepRun> = members.iter().zip(&dps).map(|(m, dp)| SweepRun { tracker: &m.outcome.tracker, u: &m.outcome.state.u, dp }).collect();
        let ref_dp = reference.state.dp.clone().unwrap_or_else(|| vec![0.0; mesh.n_cells()]);
        let summary = diagnostics::sweep_compare(&mesh, &runs, &reference.state.u, &ref_dp)?;
        Ok(SweepOutcome { dt, mach, members, reference, summary })
    }
}
