//! The traveling isentropic vortex: a radial pressure/density profile
//! balancing an azimuthal velocity, advected at constant speed `a`.
//!
//! With ξ = |x|², f(ξ) = 10ξ²(1−ξ)² on (0,1) and F' = f², the fields
//!   û = f(ξ)(−x₂, x₁),  g = ((γ−1)/(2γ)(F + c_M))^{γ/(γ−1)},  ρ̂ = g^{1/γ},  p̂ = g
//! are a steady Euler solution; the translated pair ρ̂(x − at), û(x − at) + a
//! solves the Euler equations with p = ρ^γ. The constant c_M sets the
//! pressure level, hence the sound speed and Mach number.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::eos::Eos;
use crate::fields::{self, CellField, FaceField};
use crate::mesh::StaggeredMesh;
use crate::operators::{assemble_rigidity, Convection};
use crate::schemes::{Boundary, Scheme, SchemeConfig, SchemeError, SchemeKind, SolverState, Source, StepResult};

/// F(1): the plateau value of F outside the vortex.
pub const F_ONE: f64 = 10.0 / 63.0;

/// Mach set of the benchmark, as pressure-level constants c_M.
pub const MACH_SET: [f64; 5] = [1.0, 1e2, 1e4, 1e6, 1e8];

#[derive(Debug, Error)]
pub enum VortexError {
    #[error("invalid vortex parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("step {step} failed: {source}")]
    Step { step: usize, source: SchemeError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViscosityMode {
    /// Euler equations stabilised by μ_a = ρ_ext v_max h / 10, λ = 0.
    EulerArtificial,
    /// μ = ρ_ext / 50 and a source compensating the viscous term.
    NavierStokes,
}

impl ViscosityMode {
    pub fn name(self) -> &'static str {
        match self {
            ViscosityMode::EulerArtificial => "euler_artificial",
            ViscosityMode::NavierStokes => "navier_stokes",
        }
    }
}

impl fmt::Display for ViscosityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ViscosityMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euler_artificial" | "euler" => Ok(ViscosityMode::EulerArtificial),
            "navier_stokes" | "ns" => Ok(ViscosityMode::NavierStokes),
            _ => Err(format!("unknown viscosity mode '{s}' (expected euler_artificial or navier_stokes)")),
        }
    }
}

/// How the Navier-Stokes source is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceMode {
    /// A applied to the face means of the exact velocity, divided by |D_σ|.
    Discrete,
    /// −μΔu of the exact velocity at the face centre.
    Analytic,
}

impl FromStr for SourceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "discrete" => Ok(SourceMode::Discrete),
            "analytic" => Ok(SourceMode::Analytic),
            _ => Err(format!("unknown source mode '{s}' (expected discrete or analytic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VortexParams {
    pub c_m: f64,
    pub gamma: f64,
    pub a: [f64; 2],
    pub x0: [f64; 2],
    pub domain: [f64; 4],
    pub t_end: f64,
    pub mode: ViscosityMode,
    pub source_mode: SourceMode,
    pub v_max: f64,
}

impl Default for VortexParams {
    fn default() -> Self {
        Self {
            c_m: 1.0,
            gamma: 3.0,
            a: [1.0, 1.0],
            x0: [0.0, 0.0],
            domain: [-1.2, 2.8, -1.2, 2.8],
            t_end: 0.8,
            mode: ViscosityMode::EulerArtificial,
            source_mode: SourceMode::Discrete,
            v_max: 1.4,
        }
    }
}

/// (f(ξ), F(ξ)).
pub fn vortex_profile(xi: f64) -> (f64, f64) {
    if xi <= 0.0 {
        return (0.0, 0.0);
    }
    if xi >= 1.0 {
        return (0.0, F_ONE);
    }
    let f = 10.0 * xi * xi * (1.0 - xi) * (1.0 - xi);
    let x5 = xi.powi(5);
    let big = 100.0 * x5 * (1.0 / 5.0 + xi * (-2.0 / 3.0 + xi * (6.0 / 7.0 + xi * (-0.5 + xi / 9.0))));
    (f, big)
}

/// f'(ξ) and f''(ξ) on (0,1), zero outside.
fn profile_derivatives(xi: f64) -> (f64, f64) {
    if !(xi > 0.0 && xi < 1.0) {
        return (0.0, 0.0);
    }
    (10.0 * (2.0 * xi - 6.0 * xi * xi + 4.0 * xi.powi(3)), 10.0 * (2.0 - 12.0 * xi + 12.0 * xi * xi))
}

/// Sound speed and Mach number (reference velocity 1) outside the vortex.
pub fn mach_table(c_m: f64, gamma: f64) -> (f64, f64) {
    let p = pressure_level(c_m, gamma, F_ONE);
    let c = (gamma * p.powf((gamma - 1.0) / gamma)).sqrt();
    (c, 1.0 / c)
}

fn pressure_level(c_m: f64, gamma: f64, big_f: f64) -> f64 {
    ((gamma - 1.0) / (2.0 * gamma) * (big_f + c_m)).powf(gamma / (gamma - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactValue {
    pub rho: f64,
    pub u: [f64; 2],
    pub p: f64,
}

impl VortexParams {
    pub fn validate(&self) -> Result<(), VortexError> {
        if !(self.c_m > 0.0 && self.c_m.is_finite()) {
            return Err(VortexError::Params(format!("c_M must be positive (got {})", self.c_m)));
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(VortexError::Params(format!("gamma must exceed 1 (got {})", self.gamma)));
        }
        if !(self.v_max > 0.0) {
            return Err(VortexError::Params(format!("v_max must be positive (got {})", self.v_max)));
        }
        if !(self.t_end >= 0.0) {
            return Err(VortexError::Params(format!("t_end must be nonnegative (got {})", self.t_end)));
        }
        Ok(())
    }

    /// g(ξ), the pressure of the steady vortex.
    pub fn g(&self, xi: f64) -> f64 {
        pressure_level(self.c_m, self.gamma, vortex_profile(xi).1)
    }

    pub fn exact(&self, x: [f64; 2], t: f64) -> ExactValue {
        let y = [x[0] - self.x0[0] - self.a[0] * t, x[1] - self.x0[1] - self.a[1] * t];
        let xi = y[0] * y[0] + y[1] * y[1];
        let (f, _) = vortex_profile(xi);
        let p = self.g(xi);
        ExactValue { rho: p.powf(1.0 / self.gamma), u: [self.a[0] - f * y[1], self.a[1] + f * y[0]], p }
    }

    /// −Δu of the exact velocity.
    pub fn minus_laplacian(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let y = [x[0] - self.x0[0] - self.a[0] * t, x[1] - self.x0[1] - self.a[1] * t];
        let xi = y[0] * y[0] + y[1] * y[1];
        let (d1, d2) = profile_derivatives(xi);
        let k = 4.0 * xi * d2 + 8.0 * d1;
        [k * y[1], -k * y[0]]
    }

    pub fn p_ext(&self) -> f64 {
        self.g(1.0)
    }

    pub fn rho_ext(&self) -> f64 {
        self.p_ext().powf(1.0 / self.gamma)
    }

    pub fn sound_speed(&self) -> f64 {
        mach_table(self.c_m, self.gamma).0
    }

    pub fn eos(&self) -> Result<Eos, VortexError> {
        Eos::power(self.gamma).map_err(|e| VortexError::Params(e.to_string()))
    }

    /// (μ, λ) of the configured mode; `h` is the space step.
    pub fn viscosity(&self, h: f64) -> (f64, f64) {
        match self.mode {
            ViscosityMode::EulerArtificial => (self.rho_ext() * self.v_max * h / 10.0, 0.0),
            ViscosityMode::NavierStokes => (self.rho_ext() / 50.0, 0.0),
        }
    }

    pub fn boundary(&self) -> Boundary {
        Boundary { velocity: self.a, rho_ext: Some(self.rho_ext()) }
    }

    pub fn mesh(&self, n: usize) -> Result<StaggeredMesh, VortexError> {
        StaggeredMesh::uniform(n, n, self.domain).map_err(|e| VortexError::Params(e.to_string()))
    }

    /// Scheme configuration at ε = 1: the Mach number enters through c_M.
    pub fn scheme_config(&self, mesh: &StaggeredMesh, kind: SchemeKind, dt: f64) -> SchemeConfig {
        let (mu, lambda) = self.viscosity(mesh.space_step());
        SchemeConfig { kind, eps: 1.0, dt, t_end: self.t_end, mu, lambda, convection: Convection::Centered, ..Default::default() }
    }

    /// Momentum source of the Navier-Stokes mode, `None` for Euler.
    pub fn source(&self, mesh: &StaggeredMesh) -> Result<Option<Source>, VortexError> {
        if self.mode != ViscosityMode::NavierStokes {
            return Ok(None);
        }
        let (mu, lambda) = self.viscosity(mesh.space_step());
        let params = self.clone();
        let mesh = mesh.clone();
        let source: Source = match self.source_mode {
            SourceMode::Discrete => {
                let a = assemble_rigidity(&mesh, mu, lambda).map_err(SchemeError::from)?;
                Arc::new(move |t| {
                    let ue = fields::face_means(&mesh, |x| params.exact(x, t).u, 3);
                    let au = a.apply(&ue);
                    let mut s = fields::zero_faces(&mesh);
                    for &f in &mesh.internal {
                        s[f] = au[f].map(|v| v / mesh.diamond[f]);
                    }
                    s
                })
            }
            SourceMode::Analytic => Arc::new(move |t| {
                let mut s = fields::zero_faces(&mesh);
                for &f in &mesh.internal {
                    s[f] = params.minus_laplacian(mesh.faces[f].center, t).map(|v| mu * v);
                }
                s
            }),
        };
        Ok(Some(source))
    }

    pub fn scheme<'m>(&self, mesh: &'m StaggeredMesh, kind: SchemeKind, dt: f64) -> Result<Scheme<'m>, VortexError> {
        self.validate()?;
        let cfg = self.scheme_config(mesh, kind, dt);
        let mut scheme = Scheme::new(mesh, self.eos()?, cfg, self.boundary())?;
        if let Some(s) = self.source(mesh)? {
            scheme = scheme.with_source(s);
        }
        Ok(scheme)
    }

    pub fn initial_state(&self, scheme: &Scheme) -> Result<SolverState, VortexError> {
        Ok(scheme.init(|x| self.exact(x, 0.0).rho, |x| self.exact(x, 0.0).u)?)
    }
}

/// Mass centre of the diamond (half-diamond on the boundary) of face `s`.
pub fn diamond_centroid(mesh: &StaggeredMesh, s: usize) -> [f64; 2] {
    let f = &mesh.faces[s];
    let mut acc = [0.0; 2];
    let mut w = 0.0;
    for &k in f.cells.iter().flatten() {
        // the half-diamond triangle centroid is (x_K + a + b)/3 = (x_K + 2 x_σ)/3
        let c = mesh.cells[k].center;
        let area = mesh.half_diamond(k);
        acc[0] += area * (c[0] + 2.0 * f.center[0]) / 3.0;
        acc[1] += area * (c[1] + 2.0 * f.center[1]) / 3.0;
        w += area;
    }
    [acc[0] / w, acc[1] / w]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VortexErrors {
    /// Σ_σ |D_σ| |u_σ − u(x_{D_σ})|.
    pub velocity_l1: f64,
    /// Σ_K |K| |p_K − p(x_K)|.
    pub pressure_l1: f64,
    /// pressure_l1 / c.
    pub pressure_l1_scaled: f64,
}

pub fn error_norms(mesh: &StaggeredMesh, params: &VortexParams, rho: &[f64], u: &FaceField, t: f64) -> VortexErrors {
    let mut velocity_l1 = 0.0;
    for s in 0..mesh.n_faces() {
        let e = params.exact(diamond_centroid(mesh, s), t).u;
        velocity_l1 += mesh.diamond[s] * (u[s][0] - e[0]).hypot(u[s][1] - e[1]);
    }
    let mut pressure_l1 = 0.0;
    for (c, r) in mesh.cells.iter().zip(rho) {
        let p = r.powf(params.gamma);
        pressure_l1 += c.area * (p - params.exact(c.center, t).p).abs();
    }
    VortexErrors { velocity_l1, pressure_l1, pressure_l1_scaled: pressure_l1 / params.sound_speed() }
}

/// A line profile: abscissa, numerical and exact values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Profile {
    pub x: Vec<f64>,
    pub numerical: Vec<f64>,
    pub exact: Vec<f64>,
}

impl Profile {
    /// max |a − b| over a shared abscissa.
    pub fn max_difference(&self, other: &Profile) -> f64 {
        self.numerical.iter().zip(&other.numerical).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn amplitude(&self) -> f64 {
        let lo = self.numerical.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.numerical.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

/// Second velocity component on the row of y-normal faces nearest y = `line`.
pub fn velocity_profile(mesh: &StaggeredMesh, params: &VortexParams, u: &FaceField, t: f64, line: f64) -> Profile {
    let j = mesh.face_row_near(line);
    let mut p = Profile::default();
    for i in 0..mesh.nx {
        let s = mesh.hface(i, j);
        let x = mesh.faces[s].center;
        p.x.push(x[0]);
        p.numerical.push(u[s][1]);
        p.exact.push(params.exact(x, t).u[1]);
    }
    p
}

/// δp = (p − p_ext)/c along the same face row, from the mean of the two
/// adjacent cells (the single adjacent cell on the boundary).
pub fn pressure_profile(mesh: &StaggeredMesh, params: &VortexParams, rho: &CellField, t: f64, line: f64) -> Profile {
    let j = mesh.face_row_near(line);
    let (p_ext, c) = (params.p_ext(), params.sound_speed());
    let scaled = |p: f64| (p - p_ext) / c;
    let mut out = Profile::default();
    for i in 0..mesh.nx {
        let s = mesh.hface(i, j);
        let f = &mesh.faces[s];
        let cells: Vec<usize> = f.cells.iter().flatten().copied().collect();
        let p = cells.iter().map(|&k| rho[k].powf(params.gamma)).sum::<f64>() / cells.len() as f64;
        out.x.push(f.center[0]);
        out.numerical.push(scaled(p));
        out.exact.push(scaled(params.exact(f.center, t).p));
    }
    out
}

#[derive(Debug, Clone)]
pub struct VortexRun {
    pub params: VortexParams,
    pub n: usize,
    pub dt: f64,
    pub steps: usize,
    pub state: SolverState,
    pub errors: VortexErrors,
    pub velocity: Profile,
    pub pressure: Profile,
}

/// Run the vortex on an n×n grid up to `t_end`, calling `observe` after each
/// step.
pub fn run_vortex(
    params: &VortexParams,
    n: usize,
    dt: f64,
    kind: SchemeKind,
    mut observe: impl FnMut(&Scheme, &SolverState, &StepResult),
) -> Result<VortexRun, VortexError> {
    let mesh = params.mesh(n)?;
    let scheme = params.scheme(&mesh, kind, dt)?;
    let mut state = params.initial_state(&scheme)?;
    let steps = scheme.cfg.n_steps();
    for step in 1..=steps {
        let r = scheme.step(&state).map_err(|source| VortexError::Step { step, source })?;
        observe(&scheme, &state, &r);
        state = r.state;
    }
    let t = state.t;
    Ok(VortexRun {
        params: params.clone(),
        n,
        dt,
        steps,
        errors: error_norms(&mesh, params, &state.rho, &state.u, t),
        velocity: velocity_profile(&mesh, params, &state.u, t, params.x0[1] + params.a[1] * params.t_end),
        pressure: pressure_profile(&mesh, params, &state.rho, t, params.x0[1] + params.a[1] * params.t_end),
        state,
    })
}

/// Run the same grid and time step for each pressure level in `c_ms`, in a
/// pool of `threads` workers; results come back in input order.
pub fn run_mach_set(params: &VortexParams, c_ms: &[f64], n: usize, dt: f64, kind: SchemeKind, threads: usize) -> Result<Vec<Result<VortexRun, VortexError>>, VortexError> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build().map_err(|e| VortexError::Params(e.to_string()))?;
    Ok(pool.install(|| {
        c_ms.par_iter()
            .map(|&c_m| run_vortex(&VortexParams { c_m, ..params.clone() }, n, dt, kind, |_, _, _| {}))
            .collect()
    }))
}
