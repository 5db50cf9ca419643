//! Time stepping: implicit, pressure-correction and semi-implicit schemes,
//! their incompressible counterparts, and time step bounds.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::eos::{Eos, EosError};
use crate::fields::{self, CellField, FaceField};
use crate::mesh::StaggeredMesh;
use crate::operators::{
    self, assemble_rigidity, convection_flux_sum, convection_weights, dual_density, dual_fluxes, pressure_gradient, primal_mass_fluxes,
    Convection, DualFluxTable, OperatorError, PrimalFluxes, Rigidity,
};
use crate::solvers::{fixed_point_solve, linear_solve, CsrMatrix, Method, NonlinearOptions, NonlinearReport, SolveOptions, SolverError};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Eos(#[from] EosError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage} did not converge after {iterations} iterations (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    NotConverged { stage: &'static str, iterations: usize, residual: f64, tolerance: f64 },
    #[error("density {value:.6e} in cell {cell} is not positive")]
    NegativeDensity { cell: usize, value: f64 },
    #[error("initial density rho^-1 = {value:.6e} in cell {cell} is not positive; reduce dt or the Mach number")]
    InitialDensity { cell: usize, value: f64 },
    #[error("initial density {value:.6e} at ({x}, {y}) is not positive")]
    InitialData { x: f64, y: f64, value: f64 },
}

/// Relative rounding floor of ε⁻²-scaled pressure differences.
const PRESSURE_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Implicit,
    PressureCorrection,
    SemiImplicit,
    IncompImplicit,
    IncompPc,
    IncompSemi,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::Implicit,
        SchemeKind::PressureCorrection,
        SchemeKind::SemiImplicit,
        SchemeKind::IncompImplicit,
        SchemeKind::IncompPc,
        SchemeKind::IncompSemi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Implicit => "implicit",
            SchemeKind::PressureCorrection => "pressure_correction",
            SchemeKind::SemiImplicit => "semi_implicit",
            SchemeKind::IncompImplicit => "incomp_implicit",
            SchemeKind::IncompPc => "incomp_pc",
            SchemeKind::IncompSemi => "incomp_semi",
        }
    }

    pub fn is_incompressible(self) -> bool {
        matches!(self, SchemeKind::IncompImplicit | SchemeKind::IncompPc | SchemeKind::IncompSemi)
    }

    /// The incompressible scheme a compressible one tends to (and itself otherwise).
    pub fn limit(self) -> SchemeKind {
        match self {
            SchemeKind::Implicit => SchemeKind::IncompImplicit,
            SchemeKind::PressureCorrection => SchemeKind::IncompPc,
            SchemeKind::SemiImplicit => SchemeKind::IncompSemi,
            k => k,
        }
    }

    /// Whether the scheme starts from face means (and a ρ⁻¹) rather than diamond means.
    pub fn uses_face_means(self) -> bool {
        !matches!(self, SchemeKind::Implicit | SchemeKind::IncompImplicit)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        SchemeKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = SchemeKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown scheme '{s}' (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub eps: f64,
    pub dt: f64,
    pub t_end: f64,
    pub mu: f64,
    pub lambda: f64,
    /// Momentum convection of the implicit and pressure-correction schemes
    /// (the semi-implicit ones always upwind).
    pub convection: Convection,
    pub nonlinear: NonlinearOptions,
    pub linear: SolveOptions,
    /// Outer iterations of the implicit schemes.
    pub max_outer: usize,
    pub outer_rtol: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            kind: SchemeKind::PressureCorrection,
            eps: 1.0,
            dt: 0.01,
            t_end: 0.1,
            mu: 0.01,
            lambda: 0.0,
            convection: Convection::Centered,
            nonlinear: NonlinearOptions { rtol: 1e-12, atol: 1e-14, scale: 1.0, max_iter: 50, min_relaxation: 1.0 / 16.0 },
            linear: SolveOptions::default(),
            max_outer: 200,
            outer_rtol: 1e-12,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<(), SchemeError> {
        let bad = |m: String| Err(SchemeError::Config(m));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive (got {})", self.eps));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive (got {})", self.dt));
        }
        if !(self.t_end >= 0.0) {
            return bad(format!("t_end must be nonnegative (got {})", self.t_end));
        }
        if !(self.mu >= 0.0) || !(self.mu + self.lambda >= 0.0) {
            return bad(format!("viscosities must satisfy mu >= 0 and mu + lambda >= 0 (got {}, {})", self.mu, self.lambda));
        }
        Ok(())
    }

    /// N = ⌊T/δt⌋ (with a little slack for rounding in T/δt).
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt * (1.0 + 1e-12)).floor() as usize
    }

    fn momentum_convection(&self) -> Convection {
        match self.kind {
            SchemeKind::SemiImplicit | SchemeKind::IncompSemi => Convection::Upwind,
            _ => self.convection,
        }
    }
}

/// Dirichlet data: a constant velocity on every boundary face and, optionally,
/// the density entering through inflow boundary faces.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Boundary {
    pub velocity: [f64; 2],
    pub rho_ext: Option<f64>,
}

impl Boundary {
    pub fn is_homogeneous(&self) -> bool {
        self.velocity == [0.0, 0.0]
    }

    pub fn face_values(&self, mesh: &StaggeredMesh) -> FaceField {
        mesh.faces.iter().map(|f| if f.is_internal() { [0.0; 2] } else { self.velocity }).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub n: usize,
    pub t: f64,
    /// ρⁿ⁻¹ (ρ⁻¹ after the pressure-correction type initialisations).
    pub rho_prev: Option<CellField>,
    pub rho: CellField,
    pub u: FaceField,
    /// δpⁿ, carried by the incompressible schemes.
    pub dp: Option<CellField>,
    /// F(ρⁿ, uⁿ) and its dual fluxes.
    pub fluxes: PrimalFluxes,
    pub duals: DualFluxTable,
}

impl SolverState {
    pub fn mass(&self, mesh: &StaggeredMesh) -> f64 {
        mesh.cells.iter().zip(&self.rho).map(|(c, r)| c.area * r).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    pub outer_iterations: usize,
    pub newton_iterations: usize,
    pub linear_solves: usize,
    pub outer_residual: f64,
    pub newton: Vec<NonlinearReport>,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: SolverState,
    /// Predicted velocity ũⁿ⁺¹ (pressure-correction and semi-implicit schemes).
    pub u_tilde: Option<FaceField>,
    /// Scaled gradient (∇̄p)ⁿ of the pressure-correction scheme.
    pub grad_bar: Option<FaceField>,
    /// Momentum source used in this step.
    pub source: Option<FaceField>,
    /// Dual fluxes used in the momentum convection of this step.
    pub conv_duals: DualFluxTable,
    pub cfl: Option<CflBudget>,
    pub stats: StepStats,
}

/// Momentum source as a function of time (one vector per face).
pub type Source = Arc<dyn Fn(f64) -> FaceField + Send + Sync>;

/// Everything a time step needs besides the state.
pub struct Scheme<'a> {
    pub mesh: &'a StaggeredMesh,
    pub eos: Eos,
    pub cfg: SchemeConfig,
    pub rigidity: Rigidity,
    pub boundary: Boundary,
    pub source: Option<Source>,
    /// A applied to the boundary data, restricted to internal rows.
    boundary_diffusion: Vec<f64>,
    ub: FaceField,
}

impl<'a> Scheme<'a> {
    pub fn new(mesh: &'a StaggeredMesh, eos: Eos, cfg: SchemeConfig, boundary: Boundary) -> Result<Self, SchemeError> {
        cfg.validate()?;
        let rigidity = assemble_rigidity(mesh, cfg.mu, cfg.lambda)?;
        let ub = boundary.face_values(mesh);
        let full = rigidity.apply(&ub);
        let boundary_diffusion = mesh.internal.iter().flat_map(|&s| full[s]).collect();
        Ok(Self { mesh, eos, cfg, rigidity, boundary, source: None, boundary_diffusion, ub })
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = Some(source);
        self
    }

    /// Boundary velocity values (zero on internal faces).
    pub fn boundary_values(&self) -> &FaceField {
        &self.ub
    }

    fn source_at(&self, t: f64) -> Option<FaceField> {
        self.source.as_ref().map(|s| s(t))
    }

    fn fluxes(&self, rho: &[f64], u: &FaceField) -> Result<(PrimalFluxes, DualFluxTable), SchemeError> {
        let f = primal_mass_fluxes(self.mesh, rho, u, self.boundary.rho_ext);
        let d = dual_fluxes(self.mesh, &f)?;
        Ok((f, d))
    }

    fn with_boundary(&self, mut u: FaceField) -> FaceField {
        fields::copy_boundary(self.mesh, &self.ub, &mut u);
        u
    }

    /// Initial state from analytic density and velocity, following the
    /// initialisation of the configured scheme.
    pub fn init(&self, rho0: impl Fn([f64; 2]) -> f64, u0: impl Fn([f64; 2]) -> [f64; 2]) -> Result<SolverState, SchemeError> {
        let mesh = self.mesh;
        if self.cfg.kind.is_incompressible() {
            return self.init_incompressible(u0, None);
        }
        let rho = cell_density(mesh, &rho0)?;
        if self.cfg.kind.uses_face_means() {
            let u = self.with_boundary(fields::face_means(mesh, &u0, 3));
            self.init_from_fields(rho, u)
        } else {
            let u = self.with_boundary(fields::diamond_averages(mesh, &u0, 2));
            let (fluxes, duals) = self.fluxes(&rho, &u)?;
            Ok(SolverState { n: 0, t: 0.0, rho_prev: None, rho, u, dp: None, fluxes, duals })
        }
    }

    /// Pressure-correction type initialisation from discrete ρ⁰, u⁰:
    /// ρ⁻¹ = ρ⁰ + δt div(ρ⁰u⁰).
    pub fn init_from_fields(&self, rho: CellField, u: FaceField) -> Result<SolverState, SchemeError> {
        let (fluxes, duals) = self.fluxes(&rho, &u)?;
        let div = operators::mass_divergence(self.mesh, &fluxes);
        let prev: CellField = rho.iter().zip(&div).map(|(r, d)| r + self.cfg.dt * d).collect();
        if let Some((cell, &value)) = prev.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(SchemeError::InitialDensity { cell, value });
        }
        let rho_prev = if self.cfg.kind.uses_face_means() { Some(prev) } else { None };
        Ok(SolverState { n: 0, t: 0.0, rho_prev, rho, u, dp: None, fluxes, duals })
    }

    /// Initial state of an incompressible scheme: ρ ≡ 1 and the given δp⁰.
    pub fn init_incompressible(&self, u0: impl Fn([f64; 2]) -> [f64; 2], dp0: Option<CellField>) -> Result<SolverState, SchemeError> {
        let mesh = self.mesh;
        let u = if self.cfg.kind.uses_face_means() { fields::face_means(mesh, &u0, 3) } else { fields::diamond_averages(mesh, &u0, 2) };
        let u = self.with_boundary(u);
        let rho = vec![1.0; mesh.n_cells()];
        let (fluxes, duals) = self.fluxes(&rho, &u)?;
        let dp = dp0.map(|p| zero_mean(mesh, p)).unwrap_or_else(|| vec![0.0; mesh.n_cells()]);
        Ok(SolverState { n: 0, t: 0.0, rho_prev: Some(rho.clone()), rho, u, dp: Some(dp), fluxes, duals })
    }

    pub fn step(&self, state: &SolverState) -> Result<StepResult, SchemeError> {
        match self.cfg.kind {
            SchemeKind::Implicit => self.step_implicit(state),
            SchemeKind::PressureCorrection => self.step_pressure_correction(state),
            SchemeKind::SemiImplicit => self.step_semi_implicit(state),
            SchemeKind::IncompImplicit => self.step_incomp_implicit(state),
            SchemeKind::IncompPc => self.step_incomp_pc(state),
            SchemeKind::IncompSemi => self.step_incomp_semi(state),
        }
    }

    fn from_internal(&self, x: &[f64]) -> FaceField {
        let mut u = self.ub.clone();
        for (i, &s) in self.mesh.internal.iter().enumerate() {
            u[s] = [x[2 * i], x[2 * i + 1]];
        }
        u
    }

    /// Matrix of Σ_ε F_{σ,ε} v_ε + (A v)_σ + diag_σ v_σ over internal unknowns,
    /// and the contribution of the boundary data (to be moved to the right-hand side).
    fn momentum_operator(&self, duals: &DualFluxTable, mode: Convection, diag: &[f64]) -> (CsrMatrix, Vec<f64>) {
        let mesh = self.mesh;
        let ni = mesh.n_internal();
        let mut t = self.rigidity.internal.triplets();
        t.reserve(2 * ni * 10);
        let mut bnd = self.boundary_diffusion.clone();
        for (i, &s) in mesh.internal.iter().enumerate() {
            for c in 0..2 {
                t.push((2 * i + c, 2 * i + c, diag[s]));
            }
            for l in mesh.dual_links(s) {
                let (a, b) = convection_weights(duals.from_diamond(l), mode);
                for c in 0..2 {
                    t.push((2 * i + c, 2 * i + c, a));
                    match mesh.internal_index[l.neighbor] {
                        Some(j) => t.push((2 * i + c, 2 * j + c, b)),
                        None => bnd[2 * i + c] += b * self.ub[l.neighbor][c],
                    }
                }
            }
        }
        (CsrMatrix::from_triplets(2 * ni, 2 * ni, t), bnd)
    }

    /// Solve (|D|/δt)(ρ_new ṽ − ρ_old u) + Σ F ṽ_ε + A ṽ + |D| G/ε² = |D| S for ṽ.
    #[allow(clippy::too_many_arguments)]
    fn solve_momentum(
        &self,
        rho_new_d: &[f64],
        rho_old_d: &[f64],
        u_old: &FaceField,
        duals: &DualFluxTable,
        grad: &FaceField,
        inv_eps2: f64,
        source: Option<&FaceField>,
    ) -> Result<FaceField, SchemeError> {
        let mesh = self.mesh;
        let dt = self.cfg.dt;
        let diag: Vec<f64> = (0..mesh.n_faces()).map(|s| mesh.diamond[s] * rho_new_d[s] / dt).collect();
        let (a, bnd) = self.momentum_operator(duals, self.cfg.momentum_convection(), &diag);
        let mut rhs = vec![0.0; a.n_rows];
        for (i, &s) in mesh.internal.iter().enumerate() {
            let d = mesh.diamond[s];
            for c in 0..2 {
                let mut v = d * rho_old_d[s] / dt * u_old[s][c] - d * inv_eps2 * grad[s][c] - bnd[2 * i + c];
                if let Some(src) = source {
                    v += d * src[s][c];
                }
                rhs[2 * i + c] = v;
            }
        }
        let opts = SolveOptions { rtol: self.cfg.linear.rtol.min(1e-12), ..self.cfg.linear };
        let (x, _) = linear_solve(&a, &rhs, &opts)?;
        Ok(self.from_internal(&x))
    }

    /// Velocity update u = ũ − c (∇p(ρ) − g) on internal faces.
    fn corrected_velocity(&self, rho: &[f64], u_tilde: &FaceField, coef: &[f64], g: &FaceField) -> FaceField {
        let p: Vec<f64> = rho.iter().map(|&r| self.eos.pressure(r)).collect();
        let grad = pressure_gradient(self.mesh, &p);
        let mut u = u_tilde.clone();
        for &s in &self.mesh.internal {
            for c in 0..2 {
                u[s][c] = u_tilde[s][c] - coef[s] * (grad[s][c] - g[s][c]);
            }
        }
        self.with_boundary(u)
    }

    fn mass_residual(&self, rho: &[f64], rho_old: &[f64], u: &FaceField) -> Vec<f64> {
        let mesh = self.mesh;
        let f = primal_mass_fluxes(mesh, rho, u, self.boundary.rho_ext);
        mesh.cells
            .iter()
            .enumerate()
            .map(|(k, c)| c.area * (rho[k] - rho_old[k]) / self.cfg.dt + c.faces.iter().map(|&s| f.outward(mesh, k, s)).sum::<f64>())
            .collect()
    }

    /// Newton matrix of the mass residual with the upwind choice frozen at ρ.
    fn mass_jacobian(&self, rho: &[f64], u: &FaceField, coef: &[f64]) -> CsrMatrix {
        let mesh = self.mesh;
        let dt = self.cfg.dt;
        let mut t = Vec::with_capacity(mesh.n_cells() + 4 * mesh.n_faces());
        for (k, c) in mesh.cells.iter().enumerate() {
            t.push((k, k, c.area / dt));
        }
        for (s, f) in mesh.faces.iter().enumerate() {
            let w = u[s][0] * f.normal[0] + u[s][1] * f.normal[1];
            match f.cells {
                [Some(k), Some(l)] => {
                    let up_k = w >= 0.0;
                    let rho_up = if up_k { rho[k] } else { rho[l] };
                    let q = f.length * rho_up * coef[s] * f.length / mesh.diamond[s];
                    let dk = if up_k { f.length * w } else { 0.0 } + q * self.eos.dpressure(rho[k]);
                    let dl = if up_k { 0.0 } else { f.length * w } - q * self.eos.dpressure(rho[l]);
                    t.extend([(k, k, dk), (k, l, dl), (l, k, -dk), (l, l, -dl)]);
                }
                [Some(k), None] | [None, Some(k)] => {
                    let out = f.sign_from(k) * w;
                    if out >= 0.0 || self.boundary.rho_ext.is_none() {
                        t.push((k, k, f.length * out));
                    }
                }
                [None, None] => {}
            }
        }
        CsrMatrix::from_triplets(mesh.n_cells(), mesh.n_cells(), t)
    }

    /// Largest per-cell sum of term magnitudes of the mass residual, which sets
    /// the rounding floor of the Newton iteration.
    fn mass_noise(&self, rho: &[f64], rho_old: &[f64], u_tilde: &FaceField, coef: &[f64], g: &FaceField) -> f64 {
        let mesh = self.mesh;
        let p: Vec<f64> = rho.iter().map(|&r| self.eos.pressure(r)).collect();
        let mut m: Vec<f64> = mesh.cells.iter().enumerate().map(|(k, c)| c.area * (rho[k] + rho_old[k]) / self.cfg.dt).collect();
        for (s, f) in mesh.faces.iter().enumerate() {
            let un = (u_tilde[s][0] * f.normal[0] + u_tilde[s][1] * f.normal[1]).abs();
            let gn = (g[s][0] * f.normal[0] + g[s][1] * f.normal[1]).abs();
            let cells: Vec<usize> = f.cells.iter().flatten().copied().collect();
            let rmax = cells.iter().map(|&k| rho[k]).fold(self.boundary.rho_ext.unwrap_or(0.0), f64::max);
            let pres: f64 = if f.is_internal() { cells.iter().map(|&k| p[k].abs()).sum::<f64>() * f.length / mesh.diamond[s] } else { 0.0 };
            let v = f.length * rmax * (un + coef[s] * (pres + gn));
            for &k in &cells {
                m[k] += v;
            }
        }
        m.into_iter().fold(0.0, f64::max)
    }

    /// Solve |K|(ρ_K − ρ_old,K)/δt + Σ F_{K,σ}(ρ, u(ρ)) = 0 with u(ρ) = ũ − c(∇p(ρ) − g).
    fn correction(
        &self,
        rho_old: &[f64],
        rho_start: Vec<f64>,
        u_tilde: &FaceField,
        coef: &[f64],
        g: &FaceField,
    ) -> Result<(CellField, FaceField, NonlinearReport), SchemeError> {
        let mesh = self.mesh;
        let dt = self.cfg.dt;
        let scale = mesh.cells.iter().zip(rho_old).map(|(c, r)| c.area * r / dt).fold(0.0, f64::max);
        let noise = self.mass_noise(rho_old, rho_old, u_tilde, coef, g);
        let opts = NonlinearOptions { scale, atol: self.cfg.nonlinear.atol + 1e-14 * noise, ..self.cfg.nonlinear };
        let lin = SolveOptions { rtol: 1e-13, atol: 0.0, ..self.cfg.linear };
        let residual = |rho: &[f64]| -> Result<Vec<f64>, SchemeError> {
            if rho.iter().any(|r| !(*r > 0.0)) {
                return Ok(vec![f64::NAN; rho.len()]);
            }
            let u = self.corrected_velocity(rho, u_tilde, coef, g);
            Ok(self.mass_residual(rho, rho_old, &u))
        };
        let update = |rho: &[f64], r: &[f64]| -> Result<Vec<f64>, SchemeError> {
            let u = self.corrected_velocity(rho, u_tilde, coef, g);
            let j = self.mass_jacobian(rho, &u, coef);
            let (d, _) = match linear_solve(&j, r, &lin) {
                Ok(v) => v,
                Err(SolverError::NotConverged { .. }) => linear_solve(&j, r, &SolveOptions { rtol: 1e-10, ..lin })?,
                Err(e) => return Err(e.into()),
            };
            Ok(rho.iter().zip(d).map(|(a, b)| a - b).collect())
        };
        let (rho, rep) = fixed_point_solve(residual, update, rho_start, &opts)?;
        if !rep.converged {
            return Err(SchemeError::NotConverged { stage: "density correction", iterations: rep.iterations, residual: rep.residual, tolerance: rep.tolerance });
        }
        if let Some((cell, &value)) = rho.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(SchemeError::NegativeDensity { cell, value });
        }
        let u = self.corrected_velocity(&rho, u_tilde, coef, g);
        Ok((rho, u, rep))
    }

    fn pressure_field(&self, rho: &[f64]) -> Result<Vec<f64>, SchemeError> {
        Ok(self.eos.pressure_field(rho)?)
    }

    fn finish(&self, state: &SolverState, rho_prev: Option<CellField>, rho: CellField, u: FaceField) -> Result<SolverState, SchemeError> {
        let (fluxes, duals) = self.fluxes(&rho, &u)?;
        Ok(SolverState { n: state.n + 1, t: state.t + self.cfg.dt, rho_prev, rho, u, dp: None, fluxes, duals })
    }

    /// One step of the fully implicit scheme.
    ///
    /// Outer iteration: momentum solve with ρᵏ and ∇p(ρᵏ), then a density
    /// correction with the pressure increment, until the coupled momentum
    /// residual vanishes. The mass balance holds exactly at every iterate.
    pub fn step_implicit(&self, state: &SolverState) -> Result<StepResult, SchemeError> {
        let mesh = self.mesh;
        let dt = self.cfg.dt;
        let inv_eps2 = 1.0 / (self.cfg.eps * self.cfg.eps);
        let source = self.source_at(state.t + dt);
        let rho_old_d = dual_density(mesh, &state.rho);
        let mut rho = state.rho.clone();
        let mut u;
        let mut duals = state.duals.clone();
        let mut stats = StepStats::default();
        loop {
            let rho_d = dual_density(mesh, &rho);
            let p = self.pressure_field(&rho)?;
            let grad = pressure_gradient(mesh, &p);
            let u_tilde = self.solve_momentum(&rho_d, &rho_old_d, &state.u, &duals, &grad, inv_eps2, source.as_ref())?;
            let coef: Vec<f64> = rho_d.iter().map(|r| dt * inv_eps2 / r).collect();
            let (r1, u1, rep) = self.correction(&state.rho, rho.clone(), &u_tilde, &coef, &grad)?;
            stats.linear_solves += 1 + rep.iterations;
            stats.newton_iterations += rep.iterations;
            stats.newton.push(rep);
            stats.outer_iterations += 1;
            rho = r1;
            u = u1;
            duals = self.fluxes(&rho, &u)?.1;
            let (res, scale, floor) = self.momentum_residual(&rho, &rho_old_d, &state.u, &u, &duals, inv_eps2, source.as_ref())?;
            stats.outer_residual = res / scale;
            let tol = self.cfg.outer_rtol * scale + PRESSURE_FLOOR * floor;
            if res <= tol {
                break;
            }
            if stats.outer_iterations >= self.cfg.max_outer {
                return Err(SchemeError::NotConverged { stage: "implicit outer iteration", iterations: stats.outer_iterations, residual: res, tolerance: tol });
            }
        }
        let conv_duals = duals.clone();
        let state1 = self.finish(state, Some(state.rho.clone()), rho, u)?;
        Ok(StepResult { state: state1, u_tilde: None, grad_bar: None, source, conv_duals, cfl: None, stats })
    }

    /// Max-norm of the implicit momentum residual, the largest sum of the
    /// magnitudes of the other terms, and the largest ε⁻²-scaled pressure
    /// magnitude (which only sets a rounding floor: at low Mach number it
    /// dwarfs everything else).
    #[allow(clippy::too_many_arguments)]
    fn momentum_residual(
        &self,
        rho: &[f64],
        rho_old_d: &[f64],
        u_old: &FaceField,
        u: &FaceField,
        duals: &DualFluxTable,
        inv_eps2: f64,
        source: Option<&FaceField>,
    ) -> Result<(f64, f64, f64), SchemeError> {
        let mesh = self.mesh;
        let dt = self.cfg.dt;
        let rho_d = dual_density(mesh, rho);
        let p = self.pressure_field(rho)?;
        let grad = pressure_gradient(mesh, &p);
        let conv = convection_flux_sum(mesh, duals, u, self.cfg.momentum_convection());
        let au = self.rigidity.apply(u);
        let (mut res, mut scale, mut floor) = (0.0f64, 0.0f64, 0.0f64);
        for &s in &mesh.internal {
            let f = &mesh.faces[s];
            let d = mesh.diamond[s];
            let [k, l] = [f.cells[0].unwrap(), f.cells[1].unwrap()];
            let pmag = inv_eps2 * f.length * (p[k].abs() + p[l].abs());
            let fmag: f64 = mesh.dual_links(s).iter().map(|lk| duals.from_diamond(lk).abs()).sum::<f64>()
                * (u[s][0].abs().max(u[s][1].abs()) + mesh.dual_links(s).iter().map(|lk| u[lk.neighbor][0].abs().max(u[lk.neighbor][1].abs())).fold(0.0, f64::max));
            for c in 0..2 {
                let src = source.map_or(0.0, |q| d * q[s][c]);
                let r = d / dt * (rho_d[s] * u[s][c] - rho_old_d[s] * u_old[s][c]) + conv[s][c] + au[s][c] + d * inv_eps2 * grad[s][c] - src;
                let m = d / dt * (rho_d[s] * u[s][c].abs() + rho_old_d[s] * u_old[s][c].abs()) + fmag + au[s][c].abs() + d * inv_eps2 * grad[s][c].abs() + src.abs();
                res = res.max(r.abs());
                scale = scale.max(m);
            }
            floor = floor.max(pmag);
        }
        Ok((res, scale.max(f64::MIN_POSITIVE), floor))
    }

    fn gradient_scaling(&self, state: &SolverState) -> Result<(Vec<f64>, Vec<f64>, FaceField), SchemeError> {
        let mesh = self.mesh;
        let prev = state.rho_prev.as_ref().ok_or_else(|| SchemeError::Config("state lacks rho^{n-1}".into()))?;
        let d_prev = dual_density(mesh, prev);
        let d_now = dual_density(mesh, &state.rho);
        let p = self.pressure_field(&state.rho)?;
        let mut g = pressure_gradient(mesh, &p);
        for &s in &mesh.internal {
            let f = (d_now[s] / d_prev[s]).sqrt();
            g[s] = g[s].map(|x| f * x);
        }
        Ok((d_prev, d_now, g))
    }

    /// One step of the pressure-correction scheme.
    pub fn step_pressure_correction(&self, state: &SolverState) -> Result<StepResult, SchemeError> {
        let dt = self.cfg.dt;
        let inv_eps2 = 1.0 / (self.cfg.eps * self.cfg.eps);
        let source = self.source_at(state.t + dt);
        let (d_prev, d_now, g) = self.gradient_scaling(state)?;
        let u_tilde = self.solve_momentum(&d_now, &d_prev, &state.u, &state.duals, &g, inv_eps2, source.as_ref())?;
        let coef: Vec<f64> = d_now.iter().map(|r| dt * inv_eps2 / r).collect();
        let (rho, u, rep) = self.correction(&state.rho, state.rho.clone(), &u_tilde, &coef, &g)?;
        let stats = StepStats { outer_iterations: 1, newton_iterations: rep.iterations, linear_solves: 1 + rep.iterations, outer_residual: 0.0, newton: vec![rep] };
        let state1 = self.finish(state, Some(state.rho.clone()), rho, u)?;
        Ok(StepResult { state: state1, u_tilde: Some(u_tilde), grad_bar: Some(g), source, conv_duals: state.duals.clone(), cfl: None, stats })
    }

    /// Explicit upwind prediction of the semi-implicit scheme.
    pub fn semi_implicit_prediction(&self, state: &SolverState, d_prev: &[f64], d_now: &[f64], source: Option<&FaceField>) -> FaceField {
        let mesh = self.mesh;
        let dt = self.cfg.dt;
        let conv = convection_flux_sum(mesh, &state.duals, &state.u, Convection::Upwind);
        let au = self.rigidity.apply(&state.u);
        let mut ut = state.u.clone();
        for &s in &mesh.internal {
            let d = mesh.diamond[s];
            for c in 0..2 {
                let src = source.map_or(0.0, |q| q[s][c]);
                ut[s][c] = (d_prev[s] * state.u[s][c] - dt / d * (conv[s][c] + au[s][c]) + dt * src) / d_now[s];
            }
        }
        ut
    }

    /// One step of the semi-implicit scheme.
    pub fn step_semi_implicit(&self, state: &SolverState) -> Result<StepResult, SchemeError> {
        let mesh = self.mesh;
        let dt = self.cfg.dt;
        let inv_eps2 = 1.0 / (self.cfg.eps * self.cfg.eps);
        let source = self.source_at(state.t);
        let prev = state.rho_prev.as_ref().ok_or_else(|| SchemeError::Config("state lacks rho^{n-1}".into()))?;
        let d_prev = dual_density(mesh, prev);
        let d_now = dual_density(mesh, &state.rho);
        let cfl = self.cfl_budget(state)?;
        let u_tilde = self.semi_implicit_prediction(state, &d_prev, &d_now, source.as_ref());
        let coef: Vec<f64> = d_now.iter().map(|r| dt * inv_eps2 / r).collect();
        let zero = fields::zero_faces(mesh);
        let (rho, u, rep) = self.correction(&state.rho, state.rho.clone(), &u_tilde, &coef, &zero)?;
        let stats = StepStats { outer_iterations: 1, newton_iterations: rep.iterations, linear_solves: rep.iterations, outer_residual: 0.0, newton: vec![rep] };
        let state1 = self.finish(state, Some(state.rho.clone()), rho, u)?;
        Ok(StepResult { state: state1, u_tilde: Some(u_tilde), grad_bar: None, source, conv_duals: state.duals.clone(), cfl: Some(cfl), stats })
    }

    /// Time step bounds for the current state.
    pub fn cfl_budget(&self, state: &SolverState) -> Result<CflBudget, SchemeError> {
        let radius = self.rigidity.spectral_radius()?.bound;
        Ok(cfl_budget(self.mesh, &state.rho, &state.duals, radius))
    }

    /// Solve the bordered saddle-point system
    /// [M B 0; Bᵀ 0 w; 0 wᵀ 0] (v, q, λ) = (f, 0, 0), where B q = |D| ∇q and w_K = |K|.
    fn saddle(&self, m: &CsrMatrix, f: &[f64]) -> Result<(Vec<f64>, CellField), SchemeError> {
        let mesh = self.mesh;
        let nu = m.n_rows;
        let nc = mesh.n_cells();
        let n = nu + nc + 1;
        let mut t = m.triplets();
        for (i, &s) in mesh.internal.iter().enumerate() {
            let face = &mesh.faces[s];
            let [k, l] = [face.cells[0].unwrap(), face.cells[1].unwrap()];
            for c in 0..2 {
                let v = face.length * face.normal[c];
                if v != 0.0 {
                    t.extend([(2 * i + c, nu + k, -v), (2 * i + c, nu + l, v), (nu + k, 2 * i + c, -v), (nu + l, 2 * i + c, v)]);
                }
            }
        }
        for (k, c) in mesh.cells.iter().enumerate() {
            t.push((nu + k, n - 1, c.area));
            t.push((n - 1, nu + k, c.area));
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let mut rhs = f.to_vec();
        rhs.resize(n, 0.0);
        let opts = SolveOptions { method: Method::Direct, rtol: 1e-12, ..self.cfg.linear };
        let (x, _) = linear_solve(&a, &rhs, &opts)?;
        Ok((x[..nu].to_vec(), x[nu..nu + nc].to_vec()))
    }

    fn mass_diagonal(&self, factor: f64) -> CsrMatrix {
        let mesh = self.mesh;
        let ni = mesh.n_internal();
        let t = mesh.internal.iter().enumerate().flat_map(|(i, &s)| [(2 * i, 2 * i, factor * mesh.diamond[s]), (2 * i + 1, 2 * i + 1, factor * mesh.diamond[s])]).collect();
        CsrMatrix::from_triplets(2 * ni, 2 * ni, t)
    }

    /// Discrete L² projection onto the divergence-free fields: P(u) = u − ∇φ.
    pub fn project(&self, u: &FaceField) -> Result<FaceField, SchemeError> {
        let m = self.mass_diagonal(1.0);
        let f: Vec<f64> = self.mesh.internal.iter().flat_map(|&s| u[s].map(|x| x * self.mesh.diamond[s])).collect();
        let (x, _) = self.saddle(&m, &f)?;
        Ok(self.from_internal(&x))
    }

    fn incompressible_finish(&self, state: &SolverState, u: FaceField, dp: CellField) -> Result<SolverState, SchemeError> {
        let mut s = self.finish(state, Some(state.rho.clone()), state.rho.clone(), u)?;
        s.dp = Some(zero_mean(self.mesh, dp));
        Ok(s)
    }

    /// Implicit incompressible step, Picard iteration on the convection.
    pub fn step_incomp_implicit(&self, state: &SolverState) -> Result<StepResult, SchemeError> {
        let mesh = self.mesh;
        let dt = self.cfg.dt;
        let source = self.source_at(state.t + dt);
        let ones = vec![1.0; mesh.n_faces()];
        let diag: Vec<f64> = (0..mesh.n_faces()).map(|s| mesh.diamond[s] / dt).collect();
        let mut u = state.u.clone();
        let mut dp;
        let mut duals = state.duals.clone();
        let mut stats = StepStats::default();
        loop {
            let (m, bnd) = self.momentum_operator(&duals, self.cfg.momentum_convection(), &diag);
            let mut f = vec![0.0; m.n_rows];
            for (i, &s) in mesh.internal.iter().enumerate() {
                for c in 0..2 {
                    let src = source.as_ref().map_or(0.0, |q| q[s][c]);
                    f[2 * i + c] = mesh.diamond[s] * (ones[s] * state.u[s][c] / dt + src) - bnd[2 * i + c];
                }
            }
            let (x, p) = self.saddle(&m, &f)?;
            let u1 = self.from_internal(&x);
            dp = p;
            stats.outer_iterations += 1;
            stats.linear_solves += 1;
            let change = mesh.internal.iter().map(|&s| (u1[s][0] - u[s][0]).abs().max((u1[s][1] - u[s][1]).abs())).fold(0.0, f64::max);
            let size = operators::cell_norm_linf(&x).max(1.0);
            u = u1;
            duals = self.fluxes(&vec![1.0; mesh.n_cells()], &u)?.1;
            stats.outer_residual = change / size;
            if change <= self.cfg.outer_rtol * size {
                break;
            }
            if stats.outer_iterations >= self.cfg.max_outer {
                return Err(SchemeError::NotConverged { stage: "incompressible Picard iteration", iterations: stats.outer_iterations, residual: change / size, tolerance: self.cfg.outer_rtol });
            }
        }
        let conv_duals = duals.clone();
        let state1 = self.incompressible_finish(state, u, dp)?;
        Ok(StepResult { state: state1, u_tilde: None, grad_bar: None, source, conv_duals, cfl: None, stats })
    }

    /// Incompressible pressure-correction step: prediction with ∇δpⁿ, then projection.
    pub fn step_incomp_pc(&self, state: &SolverState) -> Result<StepResult, SchemeError> {
        let mesh = self.mesh;
        let dt = self.cfg.dt;
        let source = self.source_at(state.t + dt);
        let ones = vec![1.0; mesh.n_faces()];
        let dp0 = state.dp.clone().unwrap_or_else(|| vec![0.0; mesh.n_cells()]);
        let g = pressure_gradient(mesh, &dp0);
        let u_tilde = self.solve_momentum(&ones, &ones, &state.u, &state.duals, &g, 1.0, source.as_ref())?;
        let m = self.mass_diagonal(1.0 / dt);
        let f: Vec<f64> = mesh.internal.iter().flat_map(|&s| u_tilde[s].map(|x| x * mesh.diamond[s] / dt)).collect();
        let (x, phi) = self.saddle(&m, &f)?;
        let u = self.from_internal(&x);
        let dp: CellField = dp0.iter().zip(&phi).map(|(a, b)| a + b).collect();
        let stats = StepStats { outer_iterations: 1, linear_solves: 2, ..Default::default() };
        let state1 = self.incompressible_finish(state, u, dp)?;
        Ok(StepResult { state: state1, u_tilde: Some(u_tilde), grad_bar: Some(g), source, conv_duals: state.duals.clone(), cfl: None, stats })
    }

    /// Incompressible semi-implicit step: explicit upwind prediction, then projection.
    pub fn step_incomp_semi(&self, state: &SolverState) -> Result<StepResult, SchemeError> {
        let mesh = self.mesh;
        let dt = self.cfg.dt;
        let source = self.source_at(state.t);
        let ones = vec![1.0; mesh.n_faces()];
        let u_tilde = self.semi_implicit_prediction(state, &ones, &ones, source.as_ref());
        let m = self.mass_diagonal(1.0 / dt);
        let f: Vec<f64> = mesh.internal.iter().flat_map(|&s| u_tilde[s].map(|x| x * mesh.diamond[s] / dt)).collect();
        let (x, dp) = self.saddle(&m, &f)?;
        let u = self.from_internal(&x);
        let stats = StepStats { outer_iterations: 1, linear_solves: 1, ..Default::default() };
        let state1 = self.incompressible_finish(state, u, dp)?;
        Ok(StepResult { state: state1, u_tilde: Some(u_tilde), grad_bar: None, source, conv_duals: state.duals.clone(), cfl: None, stats })
    }
}

fn cell_density(mesh: &StaggeredMesh, rho0: impl Fn([f64; 2]) -> f64) -> Result<CellField, SchemeError> {
    let rho = fields::cell_averages(mesh, &rho0, 2);
    for (k, &v) in rho.iter().enumerate() {
        if !(v > 0.0) {
            let c = mesh.cells[k].center;
            return Err(SchemeError::InitialData { x: c[0], y: c[1], value: v });
        }
    }
    Ok(rho)
}

/// Subtract the domain mean.
pub fn zero_mean(mesh: &StaggeredMesh, mut p: CellField) -> CellField {
    let m = fields::mean(mesh, &p);
    p.iter_mut().for_each(|v| *v -= m);
    p
}

/// Time step bounds of the semi-implicit scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflBudget {
    /// min_σ ρ_{D_σ}|D_σ| / Σ_ε (F_{σ,ε})⁻.
    pub dt_convective: f64,
    /// min_σ 2ρ_{D_σ}|D_σ| / ϱ(A).
    pub dt_diffusive: f64,
    /// min_σ 4ρ_{D_σ}|D_σ| / (2Σ_ε (F_{σ,ε})⁻ + ϱ(A)).
    pub dt_combined: f64,
    pub radius: f64,
}

impl CflBudget {
    pub fn admits(&self, dt: f64) -> bool {
        dt <= self.dt_combined
    }

    /// 1 − δt/δt_max (negative when the bound is violated).
    pub fn margin(&self, dt: f64) -> f64 {
        if self.dt_combined.is_infinite() {
            1.0
        } else {
            1.0 - dt / self.dt_combined
        }
    }
}

pub fn cfl_budget(mesh: &StaggeredMesh, rho: &[f64], duals: &DualFluxTable, radius: f64) -> CflBudget {
    let rd = dual_density(mesh, rho);
    let (mut conv, mut diff, mut comb) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for &s in &mesh.internal {
        let neg: f64 = mesh.dual_links(s).iter().map(|l| (-duals.from_diamond(l)).max(0.0)).sum();
        let m = rd[s] * mesh.diamond[s];
        if neg > 0.0 {
            conv = conv.min(m / neg);
        }
        if radius > 0.0 {
            diff = diff.min(2.0 * m / radius);
        }
        if 2.0 * neg + radius > 0.0 {
            comb = comb.min(4.0 * m / (2.0 * neg + radius));
        }
    }
    CflBudget { dt_convective: conv, dt_diffusive: diff, dt_combined: comb, radius }
}

/// Mach-uniform time step (1 − η) min(C h^{1+d/2}, min_σ 2|D_σ|/ϱ(A)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachUniformStep {
    pub c1: f64,
    pub c2: f64,
    pub c0: f64,
    pub c: f64,
    pub h: f64,
    pub eta: f64,
    pub dt: f64,
}

pub fn mach_uniform_step(mesh: &StaggeredMesh, radius: f64, c0: f64, eta: f64) -> Result<MachUniformStep, SchemeError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(SchemeError::Config(format!("eta must lie in (0, 1) (got {eta})")));
    }
    if !(c0 > 0.0) {
        return Err(SchemeError::Config(format!("C0 must be positive (got {c0})")));
    }
    let d = 2.0;
    let h = mesh.h();
    let mut ratio = 0.0f64;
    let mut dmin = f64::INFINITY;
    for &s in &mesh.internal {
        dmin = dmin.min(mesh.diamond[s]);
        for &k in mesh.faces[s].cells.iter().flatten() {
            for &sp in &mesh.cells[k].faces {
                ratio = ratio.max(mesh.faces[sp].length / mesh.diamond[s]);
            }
        }
    }
    let c1 = h * ratio;
    let c2 = h.powf(d / 2.0) / dmin.sqrt();
    let c = 1.0 / (2.0 * 2f64.sqrt() * d * c1 * c2 * c0.sqrt());
    let mut bound = c * h.powf(1.0 + d / 2.0);
    if radius > 0.0 {
        bound = bound.min(mesh.internal.iter().map(|&s| 2.0 * mesh.diamond[s] / radius).fold(f64::INFINITY, f64::min));
    }
    Ok(MachUniformStep { c1, c2, c0, c, h, eta, dt: (1.0 - eta) * bound })
}

/// Initial energy bracket ½Σ|D|ρ⁻¹_D|u⁰|² + ε⁻²Σ|K|Π(ρ⁰) bounding the semi-implicit energy.
pub fn initial_energy(mesh: &StaggeredMesh, eos: &Eos, state: &SolverState, eps: f64) -> f64 {
    let prev = state.rho_prev.as_ref().unwrap_or(&state.rho);
    let dp = dual_density(mesh, prev);
    let ke: f64 = mesh.internal.iter().map(|&s| 0.5 * mesh.diamond[s] * dp[s] * (state.u[s][0].powi(2) + state.u[s][1].powi(2))).sum();
    let pi: f64 = mesh.cells.iter().zip(&state.rho).map(|(c, &r)| c.area * eos.pi(r)).sum();
    ke + pi / (eps * eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> StaggeredMesh {
        StaggeredMesh::uniform(n, n, [0.0, 1.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn kind_names_round_trip() {
        for k in SchemeKind::ALL {
            assert_eq!(k.name().parse::<SchemeKind>().unwrap(), k);
        }
        assert!("explicit".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn rest_state_is_steady_for_every_scheme() {
        let m = unit(4);
        for kind in SchemeKind::ALL {
            let cfg = SchemeConfig { kind, eps: 0.1, dt: 0.01, ..Default::default() };
            let s = Scheme::new(&m, Eos::power(2.0).unwrap(), cfg, Boundary::default()).unwrap();
            let st = s.init(|_| 1.0, |_| [0.0, 0.0]).unwrap();
            let r = s.step(&st).unwrap();
            assert!(r.state.rho.iter().all(|&v| (v - 1.0).abs() < 1e-15), "{kind}");
            assert!(r.state.u.iter().all(|v| v[0].abs() < 1e-15 && v[1].abs() < 1e-15), "{kind}");
            if let Some(ut) = r.u_tilde {
                assert!(ut.iter().all(|v| v == &[0.0, 0.0]));
            }
            if let Some(dp) = r.state.dp {
                assert!(dp.iter().all(|v| v.abs() < 1e-14));
            }
        }
    }

    #[test]
    fn zero_velocity_keeps_initial_density() {
        let m = unit(3);
        let cfg = SchemeConfig { kind: SchemeKind::PressureCorrection, ..Default::default() };
        let s = Scheme::new(&m, Eos::power(1.4).unwrap(), cfg, Boundary::default()).unwrap();
        let st = s.init(|p| 1.0 + 0.1 * p[0], |_| [0.0, 0.0]).unwrap();
        assert_eq!(st.rho_prev.as_ref().unwrap(), &st.rho);
        for (k, c) in m.cells.iter().enumerate() {
            assert!((st.rho[k] - (1.0 + 0.1 * c.center[0])).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_scaling_is_identity_for_steady_density() {
        let m = unit(4);
        let s = Scheme::new(&m, Eos::power(2.0).unwrap(), SchemeConfig::default(), Boundary::default()).unwrap();
        let mut st = s.init(|p| 1.0 + 0.2 * p[0] * p[1], |_| [0.0, 0.0]).unwrap();
        st.rho_prev = Some(st.rho.clone());
        let (_, _, g) = s.gradient_scaling(&st).unwrap();
        let p = s.eos.pressure_field(&st.rho).unwrap();
        assert_eq!(g, pressure_gradient(&m, &p));
    }

    #[test]
    fn config_validation() {
        let m = unit(2);
        for cfg in [
            SchemeConfig { eps: 0.0, ..Default::default() },
            SchemeConfig { dt: -1.0, ..Default::default() },
            SchemeConfig { mu: -0.1, ..Default::default() },
            SchemeConfig { mu: 0.1, lambda: -0.2, ..Default::default() },
        ] {
            assert!(matches!(Scheme::new(&m, Eos::power(2.0).unwrap(), cfg, Boundary::default()), Err(SchemeError::Config(_))));
        }
        assert_eq!(SchemeConfig { t_end: 0.3, dt: 0.1, ..Default::default() }.n_steps(), 3);
    }

    #[test]
    fn cfl_examples() {
        let m = unit(4);
        let zero = DualFluxTable::zero(&m);
        let rho = vec![1.0; 16];
        let b = cfl_budget(&m, &rho, &zero, 0.0);
        assert!(b.dt_combined.is_infinite() && b.dt_convective.is_infinite() && b.dt_diffusive.is_infinite());
        let b = cfl_budget(&m, &rho, &zero, 3.0);
        let expected = m.internal.iter().map(|&s| 4.0 * m.diamond[s] / 3.0).fold(f64::INFINITY, f64::min);
        assert_eq!(b.dt_combined, expected);
        assert!(mach_uniform_step(&m, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn negative_initial_density_rejected() {
        let m = unit(2);
        let s = Scheme::new(&m, Eos::power(2.0).unwrap(), SchemeConfig::default(), Boundary::default()).unwrap();
        assert!(matches!(s.init(|p| p[0] - 0.5 - 1e-3, |_| [0.0, 0.0]), Err(SchemeError::InitialData { .. })));
        // a huge time step empties a cell at n = -1
        let cfg = SchemeConfig { dt: 100.0, ..Default::default() };
        let s = Scheme::new(&m, Eos::power(2.0).unwrap(), cfg, Boundary::default()).unwrap();
        let r = s.init(|_| 1.0, |p| [(p[0] * (1.0 - p[0])).powi(2) * 30.0, 0.0]);
        assert!(matches!(r, Err(SchemeError::InitialDensity { .. })), "{r:?}");
    }
}
