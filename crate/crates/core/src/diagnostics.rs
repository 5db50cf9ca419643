//! Discrete energy identities and inequalities of the schemes, checked step by
//! step, and the Mach-number sweep measurements.
//!
//! All per-face and per-cell quantities are multiplied by the control volume
//! measure and by δt, so they carry energy units and can be compared with a
//! single scale.

use thiserror::Error;

use crate::eos::{Eos, EosError};
use crate::fields::{self, CellField, FaceField};
use crate::mesh::StaggeredMesh;
use crate::operators::{
    cell_norm, cell_norm_linf, convection_flux_sum, dual_density, face_norm_l2, h1_seminorm_sq, pressure_gradient, upwind_density, velocity_divergence,
    Convection, DualFluxTable,
};
use crate::schemes::{Scheme, SchemeError, SchemeKind, SolverState, StepResult};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Eos(#[from] EosError),
    #[error("step result lacks {0}")]
    Missing(&'static str),
    #[error("inconsistent sweep: {0}")]
    Sweep(String),
}

/// Relative tolerances of the checks.
pub const KINETIC_RTOL: f64 = 1e-9;
pub const RENORM_RTOL: f64 = 1e-10;
pub const ENTROPY_STEP_RTOL: f64 = 1e-10;
pub const ENTROPY_GLOBAL_RTOL: f64 = 1e-9;

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sq(a: [f64; 2]) -> f64 {
    dot(a, a)
}

/// ½ Σ_σ |D_σ| ρ_σ |u_σ|² with the given dual density.
pub fn kinetic_energy(mesh: &StaggeredMesh, rho_d: &[f64], u: &FaceField) -> f64 {
    mesh.internal.iter().map(|&s| 0.5 * mesh.diamond[s] * rho_d[s] * sq(u[s])).sum()
}

/// ε⁻² Σ_K |K| Π(ρ_K).
pub fn elastic_potential(mesh: &StaggeredMesh, eos: &Eos, rho: &[f64], eps: f64) -> f64 {
    mesh.cells.iter().zip(rho).map(|(c, &r)| c.area * eos.pi(r)).sum::<f64>() / (eps * eps)
}

/// Σ_σ |D_σ| |∇p_σ|² / ρ_σ.
fn weighted_gradient(mesh: &StaggeredMesh, grad: &FaceField, rho_d: &[f64]) -> f64 {
    mesh.internal.iter().map(|&s| mesh.diamond[s] * sq(grad[s]) / rho_d[s]).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureDeviation {
    pub dp: CellField,
    pub l2: f64,
    pub linf: f64,
}

/// δp_K = (p_K − m(p)) / ε².
pub fn pressure_deviation(mesh: &StaggeredMesh, rho: &[f64], eos: &Eos, eps: f64) -> Result<PressureDeviation, EosError> {
    let p = eos.pressure_field(rho)?;
    let m = fields::mean(mesh, &p);
    let dp: CellField = p.iter().map(|v| (v - m) / (eps * eps)).collect();
    Ok(deviation_norms(mesh, dp))
}

pub fn deviation_norms(mesh: &StaggeredMesh, dp: CellField) -> PressureDeviation {
    let l2 = cell_norm(mesh, &dp, 2.0);
    let linf = cell_norm_linf(&dp);
    PressureDeviation { dp, l2, linf }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticCheck {
    /// Per-face value of the balance (zero on boundary faces).
    pub residual: Vec<f64>,
    /// Largest magnitude over the faces.
    pub max_abs: f64,
    pub sum: f64,
    /// Σ |D_σ| δt R_σ (or δt R_E for the semi-implicit scheme).
    pub remainder: f64,
    /// Whether the balance is an inequality (sum ≤ 0) rather than an identity.
    pub inequality: bool,
}

impl KineticCheck {
    pub fn passes(&self, scale: f64) -> bool {
        if self.inequality {
            self.sum <= KINETIC_RTOL * scale
        } else {
            self.max_abs <= KINETIC_RTOL * scale
        }
    }
}

fn conv_minus_mass(mesh: &StaggeredMesh, duals: &DualFluxTable, v: &FaceField, mode: Convection) -> Vec<f64> {
    let conv = convection_flux_sum(mesh, duals, v, mode);
    (0..mesh.n_faces())
        .map(|s| if mesh.faces[s].is_internal() { dot(conv[s], v[s]) - 0.5 * duals.diamond_sum(mesh, s) * sq(v[s]) } else { 0.0 })
        .collect()
}

fn convection_mode(kind: SchemeKind, cfg_mode: Convection) -> Convection {
    match kind {
        SchemeKind::SemiImplicit | SchemeKind::IncompSemi => Convection::Upwind,
        _ => cfg_mode,
    }
}

/// Kinetic energy balance of one step, face by face.
pub fn kinetic_energy_check(scheme: &Scheme, before: &SolverState, result: &StepResult) -> Result<KineticCheck, DiagnosticsError> {
    let mesh = scheme.mesh;
    let cfg = &scheme.cfg;
    let dt = cfg.dt;
    let ie2 = 1.0 / (cfg.eps * cfg.eps);
    let after = &result.state;
    let mode = convection_mode(cfg.kind, cfg.convection);
    let mut res = vec![0.0; mesh.n_faces()];
    let mut remainder = 0.0;
    let src = |s: usize, v: [f64; 2]| result.source.as_ref().map_or(0.0, |q| dot(q[s], v));
    match cfg.kind {
        SchemeKind::Implicit => {
            let d_old = dual_density(mesh, &before.rho);
            let d_new = dual_density(mesh, &after.rho);
            let p = scheme.eos.pressure_field(&after.rho)?;
            let grad = pressure_gradient(mesh, &p);
            let cm = conv_minus_mass(mesh, &after.duals, &after.u, mode);
            let au = scheme.rigidity.apply(&after.u);
            for &s in &mesh.internal {
                let d = mesh.diamond[s];
                let (u, u0) = (after.u[s], before.u[s]);
                let r = 0.5 * d * d_old[s] * sq([u[0] - u0[0], u[1] - u0[1]]);
                remainder += r;
                res[s] = 0.5 * d * (d_new[s] * sq(u) - d_old[s] * sq(u0)) + dt * cm[s] + dt * dot(au[s], u) + dt * d * ie2 * dot(grad[s], u) + r - dt * d * src(s, u);
            }
        }
        SchemeKind::PressureCorrection => {
            let ut = result.u_tilde.as_ref().ok_or(DiagnosticsError::Missing("predicted velocity"))?;
            let prev = before.rho_prev.as_ref().ok_or(DiagnosticsError::Missing("previous density"))?;
            let d_prev = dual_density(mesh, prev);
            let d_now = dual_density(mesh, &before.rho);
            let grad0 = pressure_gradient(mesh, &scheme.eos.pressure_field(&before.rho)?);
            let grad1 = pressure_gradient(mesh, &scheme.eos.pressure_field(&after.rho)?);
            let cm = conv_minus_mass(mesh, &result.conv_duals, ut, mode);
            let au = scheme.rigidity.apply(ut);
            for &s in &mesh.internal {
                let d = mesh.diamond[s];
                let (u, u0, w) = (after.u[s], before.u[s], ut[s]);
                let r = 0.5 * d * d_prev[s] * sq([w[0] - u0[0], w[1] - u0[1]]);
                remainder += r;
                let pres = 0.5 * dt * dt * d * ie2 * ie2 * (sq(grad1[s]) / d_now[s] - sq(grad0[s]) / d_prev[s]);
                res[s] = 0.5 * d * (d_now[s] * sq(u) - d_prev[s] * sq(u0)) + dt * cm[s] + dt * dot(au[s], w) + dt * d * ie2 * dot(grad1[s], u) + pres + r
                    - dt * d * src(s, w);
            }
        }
        SchemeKind::SemiImplicit => {
            let ut = result.u_tilde.as_ref().ok_or(DiagnosticsError::Missing("predicted velocity"))?;
            let prev = before.rho_prev.as_ref().ok_or(DiagnosticsError::Missing("previous density"))?;
            let d_prev = dual_density(mesh, prev);
            let d_now = dual_density(mesh, &before.rho);
            let grad1 = pressure_gradient(mesh, &scheme.eos.pressure_field(&after.rho)?);
            let radius = scheme.rigidity.spectral_radius().map_err(SchemeError::from)?.estimate;
            for &s in &mesh.internal {
                let d = mesh.diamond[s];
                let (u, u0, w) = (after.u[s], before.u[s], ut[s]);
                let neg: f64 = mesh.dual_links(s).iter().map(|l| (-result.conv_duals.from_diamond(l)).max(0.0)).sum();
                let r = dt * (d_now[s] * d / (2.0 * dt) - 0.5 * neg - 0.25 * radius) * sq([w[0] - u0[0], w[1] - u0[1]]);
                remainder += r;
                res[s] = 0.5 * d * (d_now[s] * sq(u) - d_prev[s] * sq(u0)) + dt * d * ie2 * dot(grad1[s], u) + 0.5 * dt * dt * d * ie2 * ie2 * sq(grad1[s]) / d_now[s] + r
                    - dt * d * src(s, w);
            }
        }
        _ => {
            // incompressible schemes: report the velocity divergence instead
            let div = velocity_divergence(mesh, &after.u);
            let max_abs = mesh.cells.iter().zip(&div).map(|(c, v)| (c.area * dt * v).abs()).fold(0.0, f64::max);
            return Ok(KineticCheck { residual: res, max_abs, sum: 0.0, remainder: 0.0, inequality: false });
        }
    }
    let max_abs = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sum = res.iter().sum();
    Ok(KineticCheck { residual: res, max_abs, sum, remainder, inequality: cfg.kind == SchemeKind::SemiImplicit })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenormCheck {
    /// Per-cell value of the identity with R_K left out, that is −|K| δt R_K.
    pub defect: CellField,
    /// Taylor bound on |K| δt R_K from the extreme values of ψ″.
    pub envelope: CellField,
    pub max_defect: f64,
    /// Σ_K |K| δt R_K.
    pub remainder: f64,
}

impl RenormCheck {
    pub fn passes(&self, scale: f64) -> bool {
        let tol = RENORM_RTOL * scale;
        self.defect.iter().zip(&self.envelope).all(|(d, e)| *d <= tol && *d >= -e - tol)
    }
}

/// Relative entropy renormalization identity, cell by cell.
pub fn renormalization_check(mesh: &StaggeredMesh, eos: &Eos, rho_ext: Option<f64>, dt: f64, rho_old: &[f64], rho: &[f64], u: &FaceField) -> Result<RenormCheck, DiagnosticsError> {
    let p = eos.pressure_field(rho)?;
    eos.pressure_field(rho_old)?;
    let up = upwind_density(mesh, rho, u, rho_ext);
    let d1 = eos.dpsi(1.0);
    let lo = rho.iter().chain(rho_old).chain(rho_ext.iter()).fold(f64::INFINITY, |m, &v| m.min(v));
    let hi = rho.iter().chain(rho_old).chain(rho_ext.iter()).fold(0.0f64, |m, &v| m.max(v));
    let d2max = {
        // ψ″ is monotone for power laws; sample densely otherwise
        let n = 64;
        (0..=n).map(|i| eos.d2psi(lo + (hi - lo) * i as f64 / n as f64)).fold(0.0f64, f64::max)
    };
    let mut defect = vec![0.0; mesh.n_cells()];
    let mut envelope = vec![0.0; mesh.n_cells()];
    for (k, c) in mesh.cells.iter().enumerate() {
        let mut flux = 0.0;
        let mut div = 0.0;
        let mut jump = 0.0;
        for &s in &c.faces {
            let f = &mesh.faces[s];
            let w = f.sign_from(k) * dot(u[s], f.normal) * f.length;
            flux += (eos.psi(up[s]) - d1 * up[s]) * w;
            div += w;
            jump += (-w).max(0.0) * (up[s] - rho[k]).powi(2);
        }
        defect[k] = c.area * (eos.pi(rho[k]) - eos.pi(rho_old[k])) + dt * flux + dt * p[k] * div;
        envelope[k] = 0.5 * d2max * (c.area * (rho[k] - rho_old[k]).powi(2) + dt * jump);
    }
    let max_defect = defect.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let remainder = -defect.iter().sum::<f64>();
    Ok(RenormCheck { defect, envelope, max_defect, remainder })
}

/// Everything recorded for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub n: usize,
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub kinetic_energy: f64,
    pub elastic_potential: f64,
    /// Left-hand side of the global entropy estimate at this step.
    pub global_entropy: f64,
    /// Largest face residual of the kinetic balance (sum for inequalities).
    pub ke_residual: f64,
    /// Left-hand side of the local entropy inequality, remainders R_σ / R_E included
    /// and R_K left out (it is checked separately and is nonnegative).
    pub entropy_lhs: f64,
    pub dp_l2: f64,
    pub dp_linf: f64,
    pub cfl_margin: f64,
    pub outer_iters: usize,
    pub mass_residual: f64,
    pub renorm_max_defect: f64,
    pub remainder_faces: f64,
    pub remainder_cells: f64,
    pub scale: f64,
    pub kinetic_ok: bool,
    pub renorm_ok: bool,
}

/// Accumulates step reports along a run.
#[derive(Debug, Clone)]
pub struct Monitor {
    pub kind: SchemeKind,
    pub eps: f64,
    /// Right-hand side of the global entropy estimate.
    pub initial_bound: f64,
    /// Whether the energy estimates apply (homogeneous velocity data, no source).
    pub estimates_apply: bool,
    viscous: f64,
    pressure: f64,
    pub reports: Vec<StepReport>,
}

impl Monitor {
    pub fn new(scheme: &Scheme, initial: &SolverState) -> Result<Self, DiagnosticsError> {
        let mesh = scheme.mesh;
        let cfg = &scheme.cfg;
        let eps = cfg.eps;
        let kind = cfg.kind;
        let initial_bound = match kind {
            SchemeKind::Implicit => kinetic_energy(mesh, &dual_density(mesh, &initial.rho), &initial.u) + elastic_potential(mesh, &scheme.eos, &initial.rho, eps),
            SchemeKind::PressureCorrection | SchemeKind::SemiImplicit => {
                let prev = initial.rho_prev.as_ref().ok_or(DiagnosticsError::Missing("previous density"))?;
                let dp = dual_density(mesh, prev);
                let mut c = kinetic_energy(mesh, &dp, &initial.u) + elastic_potential(mesh, &scheme.eos, &initial.rho, eps);
                if kind == SchemeKind::PressureCorrection {
                    let g = pressure_gradient(mesh, &scheme.eos.pressure_field(&initial.rho)?);
                    c += 0.5 * cfg.dt * cfg.dt / eps.powi(4) * weighted_gradient(mesh, &g, &dp);
                }
                c
            }
            _ => kinetic_energy(mesh, &vec![1.0; mesh.n_faces()], &initial.u),
        };
        Ok(Self { kind, eps, initial_bound, estimates_apply: scheme.boundary.is_homogeneous() && scheme.source.is_none(), viscous: 0.0, pressure: 0.0, reports: Vec::new() })
    }

    pub fn record(&mut self, scheme: &Scheme, before: &SolverState, result: &StepResult) -> Result<&StepReport, DiagnosticsError> {
        let mesh = scheme.mesh;
        let cfg = &scheme.cfg;
        let eps = cfg.eps;
        let dt = cfg.dt;
        let after = &result.state;
        let ie2 = 1.0 / (eps * eps);
        let kinetic = kinetic_energy_check(scheme, before, result)?;
        let mass = after.mass(mesh);
        let mass_residual = mass_balance_residual(mesh, dt, &before.rho, after);
        let cfl_margin = result.cfl.map_or(f64::NAN, |c| c.margin(dt));
        let (ke, elastic, global, lhs, renorm, dev) = if cfg.kind.is_incompressible() {
            let ke = kinetic_energy(mesh, &vec![1.0; mesh.n_faces()], &after.u);
            let dev = deviation_norms(mesh, after.dp.clone().unwrap_or_else(|| vec![0.0; mesh.n_cells()]));
            (ke, 0.0, ke, 0.0, None, dev)
        } else {
            let renorm = renormalization_check(mesh, &scheme.eos, scheme.boundary.rho_ext, dt, &before.rho, &after.rho, &after.u)?;
            let elastic = elastic_potential(mesh, &scheme.eos, &after.rho, eps);
            let d_elastic = elastic - elastic_potential(mesh, &scheme.eos, &before.rho, eps);
            let g1 = pressure_gradient(mesh, &scheme.eos.pressure_field(&after.rho)?);
            let (ke, lhs, global) = match cfg.kind {
                SchemeKind::Implicit => {
                    let ke = kinetic_energy(mesh, &dual_density(mesh, &after.rho), &after.u);
                    let ke0 = kinetic_energy(mesh, &dual_density(mesh, &before.rho), &before.u);
                    let visc = cfg.mu * dt * h1_seminorm_sq(mesh, &after.u);
                    self.viscous += visc;
                    (ke, ke - ke0 + d_elastic + visc + kinetic.remainder, ke + self.viscous + elastic)
                }
                SchemeKind::PressureCorrection => {
                    let prev = before.rho_prev.as_ref().ok_or(DiagnosticsError::Missing("previous density"))?;
                    let (d_prev, d_now) = (dual_density(mesh, prev), dual_density(mesh, &before.rho));
                    let ut = result.u_tilde.as_ref().ok_or(DiagnosticsError::Missing("predicted velocity"))?;
                    let g0 = pressure_gradient(mesh, &scheme.eos.pressure_field(&before.rho)?);
                    let ke = kinetic_energy(mesh, &d_now, &after.u);
                    let ke0 = kinetic_energy(mesh, &d_prev, &before.u);
                    let visc = cfg.mu * dt * h1_seminorm_sq(mesh, ut);
                    self.viscous += visc;
                    let c = 0.5 * dt * dt * ie2 * ie2;
                    let p1 = c * weighted_gradient(mesh, &g1, &d_now);
                    let p0 = c * weighted_gradient(mesh, &g0, &d_prev);
                    (ke, ke - ke0 + d_elastic + visc + p1 - p0 + kinetic.remainder, ke + self.viscous + elastic + p1)
                }
                _ => {
                    let prev = before.rho_prev.as_ref().ok_or(DiagnosticsError::Missing("previous density"))?;
                    let (d_prev, d_now) = (dual_density(mesh, prev), dual_density(mesh, &before.rho));
                    let ke = kinetic_energy(mesh, &d_now, &after.u);
                    let ke0 = kinetic_energy(mesh, &d_prev, &before.u);
                    let p1 = 0.5 * dt * dt * ie2 * ie2 * weighted_gradient(mesh, &g1, &d_now);
                    self.pressure += p1;
                    (ke, ke - ke0 + d_elastic + p1 + kinetic.remainder, ke + elastic + self.pressure)
                }
            };
            let dev = pressure_deviation(mesh, &after.rho, &scheme.eos, eps)?;
            (ke, elastic, global, lhs, Some(renorm), dev)
        };
        let scale = 1f64.max(self.initial_bound).max(ke + elastic);
        let renorm_ok = renorm.as_ref().map_or(true, |r| r.passes(scale));
        let report = StepReport {
            n: after.n,
            t: after.t,
            dt,
            mass,
            kinetic_energy: ke,
            elastic_potential: elastic,
            global_entropy: global,
            ke_residual: if kinetic.inequality { kinetic.sum } else { kinetic.max_abs },
            entropy_lhs: lhs,
            dp_l2: dev.l2,
            dp_linf: dev.linf,
            cfl_margin,
            outer_iters: result.stats.outer_iterations,
            mass_residual,
            renorm_max_defect: renorm.as_ref().map_or(0.0, |r| r.max_defect),
            remainder_faces: kinetic.remainder,
            remainder_cells: renorm.as_ref().map_or(0.0, |r| r.remainder * ie2),
            scale,
            kinetic_ok: kinetic.passes(scale),
            renorm_ok,
        };
        self.reports.push(report);
        Ok(self.reports.last().unwrap())
    }

    pub fn audit(&self) -> EntropyAudit {
        entropy_audit(self.initial_bound, &self.reports)
    }
}

/// max_K |K (ρ_new − ρ_old)/δt + Σ F| relative to the largest term.
pub fn mass_balance_residual(mesh: &StaggeredMesh, dt: f64, rho_old: &[f64], after: &SolverState) -> f64 {
    let mut res = 0.0f64;
    let mut scale = 0.0f64;
    for (k, c) in mesh.cells.iter().enumerate() {
        let mut r = c.area * (after.rho[k] - rho_old[k]) / dt;
        let mut m = c.area * (after.rho[k] + rho_old[k]) / dt;
        for &s in &c.faces {
            let f = after.fluxes.outward(mesh, k, s);
            r += f;
            m += f.abs();
        }
        res = res.max(r.abs());
        scale = scale.max(m);
    }
    res / scale.max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyAudit {
    pub lhs: Vec<f64>,
    pub global: Vec<f64>,
    pub bound: f64,
    pub violated: bool,
    /// First step where either estimate fails.
    pub first_violation: Option<usize>,
}

/// Check the local entropy inequality of every step and the running global bound.
pub fn entropy_audit(initial_bound: f64, reports: &[StepReport]) -> EntropyAudit {
    let lhs: Vec<f64> = reports.iter().map(|r| r.entropy_lhs).collect();
    let global: Vec<f64> = reports.iter().map(|r| r.global_entropy).collect();
    let first_violation = reports
        .iter()
        .find(|r| r.entropy_lhs > ENTROPY_STEP_RTOL * r.scale || r.global_entropy > initial_bound + ENTROPY_GLOBAL_RTOL * r.scale || !r.renorm_ok)
        .map(|r| r.n);
    EntropyAudit { lhs, global, bound: initial_bound, violated: first_violation.is_some(), first_violation }
}

/// Per-run measurements for the Mach-number sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTracker {
    pub eps: f64,
    pub gamma: f64,
    /// max over time of ‖ρ − 1‖ in L¹, L², L^γ and L^{min(2,γ)}.
    pub rho_norms: [f64; 4],
    pub dp_l2_max: f64,
    pub dp_linf_max: f64,
}

impl SweepTracker {
    pub fn new(eps: f64, gamma: f64) -> Self {
        Self { eps, gamma, rho_norms: [0.0; 4], dp_l2_max: 0.0, dp_linf_max: 0.0 }
    }

    pub fn exponents(&self) -> [f64; 4] {
        [1.0, 2.0, self.gamma, self.gamma.min(2.0)]
    }

    pub fn observe(&mut self, mesh: &StaggeredMesh, rho: &[f64], dp: Option<&PressureDeviation>) {
        let dev: Vec<f64> = rho.iter().map(|r| r - 1.0).collect();
        for (i, q) in self.exponents().into_iter().enumerate() {
            self.rho_norms[i] = self.rho_norms[i].max(cell_norm(mesh, &dev, q));
        }
        if let Some(d) = dp {
            self.dp_l2_max = self.dp_l2_max.max(d.l2);
            self.dp_linf_max = self.dp_linf_max.max(d.linf);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub eps: f64,
    pub rho_norms: [f64; 4],
    pub dp_l2_max: f64,
    pub dp_linf_max: f64,
    pub dist_u_l2: f64,
    pub dist_dp_l2: f64,
}

impl SweepRecord {
    pub fn norm_l2(&self) -> f64 {
        self.rho_norms[1]
    }

    pub fn norm_lq(&self) -> f64 {
        self.rho_norms[3]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub records: Vec<SweepRecord>,
    /// Least-squares slopes of log max_n ‖ρⁿ − 1‖ against log ε, one per
    /// norm of `SweepTracker::exponents`.
    pub slopes: [Option<f64>; 4],
    /// Both terminal distances shrink as ε decreases.
    pub distances_monotone: bool,
}

impl SweepSummary {
    pub fn slope_l2(&self) -> Option<f64> {
        self.slopes[1]
    }

    pub fn slope_lq(&self) -> Option<f64> {
        self.slopes[3]
    }
}

/// Terminal fields of one run.
pub struct SweepRun<'a> {
    pub tracker: &'a SweepTracker,
    pub u: &'a FaceField,
    pub dp: &'a [f64],
}

/// Compare compressible runs over ε with the matching incompressible run.
pub fn sweep_compare(mesh: &StaggeredMesh, runs: &[SweepRun], reference_u: &FaceField, reference_dp: &[f64]) -> Result<SweepSummary, DiagnosticsError> {
    if runs.iter().any(|r| r.u.len() != reference_u.len() || r.dp.len() != reference_dp.len()) {
        return Err(DiagnosticsError::Sweep("runs use different meshes".into()));
    }
    let mut records: Vec<SweepRecord> = runs
        .iter()
        .map(|r| {
            let du: FaceField = r.u.iter().zip(reference_u).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect();
            let dd: Vec<f64> = r.dp.iter().zip(reference_dp).map(|(a, b)| a - b).collect();
            SweepRecord {
                eps: r.tracker.eps,
                rho_norms: r.tracker.rho_norms,
                dp_l2_max: r.tracker.dp_l2_max,
                dp_linf_max: r.tracker.dp_linf_max,
                dist_u_l2: face_norm_l2(mesh, &du),
                dist_dp_l2: cell_norm(mesh, &dd, 2.0),
            }
        })
        .collect();
    records.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let slopes = std::array::from_fn(|i| {
        let pts: Vec<(f64, f64)> = records.iter().filter(|r| r.rho_norms[i] > 0.0).map(|r| (r.eps.ln(), r.rho_norms[i].ln())).collect();
        (pts.len() >= 2).then(|| least_squares_slope(&pts))
    });
    let distances_monotone = records.windows(2).all(|w| w[1].dist_u_l2 <= w[0].dist_u_l2 && w[1].dist_dp_l2 <= w[0].dist_dp_l2);
    Ok(SweepSummary { records, slopes, distances_monotone })
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
