//! Discrete operators: mass fluxes, dual fluxes, momentum convection,
//! Rannacher-Turek diffusion, pressure gradient and norms.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fields::{CellField, FaceField};
use crate::gauss;
use crate::mesh::{StaggeredMesh, DUAL_PAIRS, EAST, NORTH, SOUTH, WEST};
use crate::solvers::CsrMatrix;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OperatorError {
    #[error("viscosities must satisfy mu >= 0 and mu + lambda >= 0 (got mu = {mu}, lambda = {lambda})")]
    Viscosity { mu: f64, lambda: f64 },
    #[error("dual flux bound violated in cell {cell}: |F| = {value:.6e} > {bound:.6e}")]
    DualFluxBound { cell: usize, value: f64, bound: f64 },
    #[error("power iteration did not converge in {0} iterations")]
    PowerIteration(usize),
}

/// Mass flux through every face, counted along the face normal.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalFluxes {
    pub face: Vec<f64>,
}

impl PrimalFluxes {
    pub fn zero(mesh: &StaggeredMesh) -> Self {
        Self { face: vec![0.0; mesh.n_faces()] }
    }

    /// F_{K,σ}: the flux leaving `cell` through `face`.
    pub fn outward(&self, mesh: &StaggeredMesh, cell: usize, face: usize) -> f64 {
        mesh.faces[face].sign_from(cell) * self.face[face]
    }
}

/// Upwind face density ρ_σ. On boundary faces, inflow takes `rho_ext` when
/// given and the inner cell value otherwise.
pub fn upwind_density(mesh: &StaggeredMesh, rho: &[f64], u: &FaceField, rho_ext: Option<f64>) -> Vec<f64> {
    mesh.faces
        .iter()
        .enumerate()
        .map(|(s, f)| {
            let w = u[s][0] * f.normal[0] + u[s][1] * f.normal[1];
            match f.cells {
                [Some(k), Some(l)] => {
                    if w >= 0.0 {
                        rho[k]
                    } else {
                        rho[l]
                    }
                }
                [Some(k), None] => {
                    if w >= 0.0 {
                        rho[k]
                    } else {
                        rho_ext.unwrap_or(rho[k])
                    }
                }
                [None, Some(l)] => {
                    if w <= 0.0 {
                        rho[l]
                    } else {
                        rho_ext.unwrap_or(rho[l])
                    }
                }
                [None, None] => unreachable!("face without cells"),
            }
        })
        .collect()
}

/// F_σ = |σ| ρ_σ u_σ·n_σ with upwind ρ_σ.
pub fn primal_mass_fluxes(mesh: &StaggeredMesh, rho: &[f64], u: &FaceField, rho_ext: Option<f64>) -> PrimalFluxes {
    let up = upwind_density(mesh, rho, u, rho_ext);
    let face = mesh
        .faces
        .iter()
        .enumerate()
        .map(|(s, f)| f.length * up[s] * (u[s][0] * f.normal[0] + u[s][1] * f.normal[1]))
        .collect();
    PrimalFluxes { face }
}

/// div(ρu)_K = Σ_σ F_{K,σ} / |K|.
pub fn mass_divergence(mesh: &StaggeredMesh, fluxes: &PrimalFluxes) -> CellField {
    mesh.cells
        .iter()
        .enumerate()
        .map(|(k, c)| c.faces.iter().map(|&s| fluxes.outward(mesh, k, s)).sum::<f64>() / c.area)
        .collect()
}

/// div(u)_K = Σ_σ |σ| u_σ·n_{K,σ} / |K|.
pub fn velocity_divergence(mesh: &StaggeredMesh, u: &FaceField) -> CellField {
    mesh.cells
        .iter()
        .enumerate()
        .map(|(k, c)| {
            c.faces
                .iter()
                .map(|&s| {
                    let f = &mesh.faces[s];
                    f.sign_from(k) * f.length * (u[s][0] * f.normal[0] + u[s][1] * f.normal[1])
                })
                .sum::<f64>()
                / c.area
        })
        .collect()
}

/// ρ_{D_σ} per face (the adjacent cell value on boundary faces).
pub fn dual_density(mesh: &StaggeredMesh, rho: &[f64]) -> Vec<f64> {
    mesh.faces
        .iter()
        .enumerate()
        .map(|(s, f)| f.cells.iter().flatten().map(|&k| mesh.half_diamond(k) * rho[k]).sum::<f64>() / mesh.diamond[s])
        .collect()
}

/// Dual fluxes, one per dual face, counted from `faces[0]` to `faces[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFluxTable {
    pub values: Vec<f64>,
}

impl DualFluxTable {
    pub fn zero(mesh: &StaggeredMesh) -> Self {
        Self { values: vec![0.0; mesh.duals.len()] }
    }

    /// F_{σ,ε} seen from the diamond the link belongs to.
    pub fn from_diamond(&self, link: &crate::mesh::DualLink) -> f64 {
        link.sign * self.values[link.dual]
    }

    /// Σ_ε F_{σ,ε} over the dual faces of D_σ.
    pub fn diamond_sum(&self, mesh: &StaggeredMesh, face: usize) -> f64 {
        mesh.dual_links(face).iter().map(|l| self.from_diamond(l)).sum()
    }
}

/// Minimum-norm solution of the half-diamond balances of one cell.
///
/// `outward` holds F_{K,σ} in the local order W, E, S, N; the result holds
/// the fluxes of the dual faces in the order of [`DUAL_PAIRS`].
pub fn solve_cell_dual_fluxes(outward: [f64; 4]) -> [f64; 4] {
    // nodes of the cycle W -> S -> E -> N; dual face c joins node c to node c + 1
    const NODES: [usize; 4] = [WEST, SOUTH, EAST, NORTH];
    let quarter = 0.25 * outward.iter().sum::<f64>();
    let b = NODES.map(|n| quarter - outward[n]);
    let mut s = [0.0; 4];
    for i in 1..4 {
        s[i] = s[i - 1] + b[i];
    }
    let m = 0.25 * s.iter().sum::<f64>();
    s.map(|v| v - m)
}

pub fn dual_fluxes(mesh: &StaggeredMesh, fluxes: &PrimalFluxes) -> Result<DualFluxTable, OperatorError> {
    debug_assert_eq!(DUAL_PAIRS[0], (WEST, SOUTH));
    let mut values = vec![0.0; mesh.duals.len()];
    for (k, c) in mesh.cells.iter().enumerate() {
        let out = [0, 1, 2, 3].map(|a| fluxes.outward(mesh, k, c.faces[a]));
        let f = solve_cell_dual_fluxes(out);
        let bound = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (slot, &v) in f.iter().enumerate() {
            if v.abs() > bound * (1.0 + 1e-12) {
                return Err(OperatorError::DualFluxBound { cell: k, value: v.abs(), bound });
            }
            values[4 * k + slot] = v;
        }
    }
    Ok(DualFluxTable { values })
}

/// Largest residual of the half-diamond balances F_{K,σ} + Σ_{ε⊂K} F_{σ,ε} = ξ Σ F_{K,σ'}.
pub fn half_diamond_residual(mesh: &StaggeredMesh, fluxes: &PrimalFluxes, duals: &DualFluxTable) -> f64 {
    let mut worst = 0.0f64;
    for (k, c) in mesh.cells.iter().enumerate() {
        let total: f64 = c.faces.iter().map(|&s| fluxes.outward(mesh, k, s)).sum();
        for &s in &c.faces {
            let inner: f64 = mesh.dual_links(s).iter().filter(|l| l.cell == k).map(|l| duals.from_diamond(l)).sum();
            let r = fluxes.outward(mesh, k, s) + inner - mesh.xi(k, s) * total;
            worst = worst.max(r.abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convection {
    Centered,
    Upwind,
}

/// Weights (on v_σ, on v_σ') of a dual flux in the convection sum.
pub fn convection_weights(flux: f64, mode: Convection) -> (f64, f64) {
    match mode {
        Convection::Centered => (0.5 * flux, 0.5 * flux),
        Convection::Upwind => {
            if flux >= 0.0 {
                (flux, 0.0)
            } else {
                (0.0, flux)
            }
        }
    }
}

/// Σ_ε F_{σ,ε} v_ε for every internal face (zero on boundary faces).
pub fn convection_flux_sum(mesh: &StaggeredMesh, duals: &DualFluxTable, v: &FaceField, mode: Convection) -> FaceField {
    let mut out = vec![[0.0; 2]; mesh.n_faces()];
    for &s in &mesh.internal {
        let mut acc = [0.0; 2];
        for l in mesh.dual_links(s) {
            let (a, b) = convection_weights(duals.from_diamond(l), mode);
            for c in 0..2 {
                acc[c] += a * v[s][c] + b * v[l.neighbor][c];
            }
        }
        out[s] = acc;
    }
    out
}

/// div(ρu⊗v)_σ = Σ_ε F_{σ,ε}(ρ, u) v_ε / |D_σ|.
pub fn momentum_convection(
    mesh: &StaggeredMesh,
    rho: &[f64],
    u: &FaceField,
    v: &FaceField,
    mode: Convection,
) -> Result<FaceField, OperatorError> {
    let duals = dual_fluxes(mesh, &primal_mass_fluxes(mesh, rho, u, None))?;
    let mut out = convection_flux_sum(mesh, &duals, v, mode);
    for &s in &mesh.internal {
        out[s] = out[s].map(|x| x / mesh.diamond[s]);
    }
    Ok(out)
}

/// (∇p)_σ = |σ|/|D_σ| (p_L − p_K) n_{K,σ} on internal faces, zero elsewhere.
pub fn pressure_gradient(mesh: &StaggeredMesh, p: &[f64]) -> FaceField {
    mesh.faces
        .iter()
        .enumerate()
        .map(|(s, f)| match f.cells {
            [Some(k), Some(l)] => {
                let g = f.length / mesh.diamond[s] * (p[l] - p[k]);
                [g * f.normal[0], g * f.normal[1]]
            }
            _ => [0.0; 2],
        })
        .collect()
}

/// Gradients of the four reference Rannacher-Turek functions on [-1, 1]²
/// (local order W, E, S, N).
pub fn rt_reference_gradients(x: f64, y: f64) -> [[f64; 2]; 4] {
    [
        [-0.5 + 0.75 * x, -0.75 * y],
        [0.5 + 0.75 * x, -0.75 * y],
        [-0.75 * x, -0.5 + 0.75 * y],
        [-0.75 * x, 0.5 + 0.75 * y],
    ]
}

/// Values of the reference Rannacher-Turek functions, span{1, x, y, x² − y²}.
pub fn rt_reference_values(x: f64, y: f64) -> [f64; 4] {
    let q = 0.375 * (x * x - y * y);
    [0.25 - 0.5 * x + q, 0.25 + 0.5 * x + q, 0.25 - 0.5 * y - q, 0.25 + 0.5 * y - q]
}

/// Element integrals on a rectangle: ∫∇ζ_a·∇ζ_b and ∫∂_iζ_a ∂_jζ_b.
pub fn rt_element(size: [f64; 2]) -> ([[f64; 4]; 4], [[[[f64; 2]; 2]; 4]; 4]) {
    let [hx, hy] = size;
    let mut lap = [[0.0; 4]; 4];
    let mut ten = [[[[0.0; 2]; 2]; 4]; 4];
    for (p, w) in gauss::rectangle(-1.0, 1.0, -1.0, 1.0, 3) {
        let g = rt_reference_gradients(p[0], p[1]).map(|g| [g[0] * 2.0 / hx, g[1] * 2.0 / hy]);
        let wt = w * hx * hy / 4.0;
        for a in 0..4 {
            for b in 0..4 {
                lap[a][b] += wt * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                for i in 0..2 {
                    for j in 0..2 {
                        ten[a][b][i][j] += wt * g[a][i] * g[b][j];
                    }
                }
            }
        }
    }
    (lap, ten)
}

/// The rigidity matrix of the Rannacher-Turek diffusion operator.
#[derive(Debug)]
pub struct Rigidity {
    pub mu: f64,
    pub lambda: f64,
    /// Blocks over all face unknowns, index 2σ + component.
    pub full: CsrMatrix,
    /// Restriction to internal faces, index 2·(internal position) + component.
    pub internal: CsrMatrix,
    radius: OnceLock<Result<SpectralRadius, OperatorError>>,
}

pub fn assemble_rigidity(mesh: &StaggeredMesh, mu: f64, lambda: f64) -> Result<Rigidity, OperatorError> {
    if !(mu >= 0.0) || !(mu + lambda >= 0.0) {
        return Err(OperatorError::Viscosity { mu, lambda });
    }
    let mut t = Vec::with_capacity(64 * mesh.n_cells());
    if mu != 0.0 || mu + lambda != 0.0 {
        for c in &mesh.cells {
            let (lap, ten) = rt_element(c.size);
            for a in 0..4 {
                for b in 0..4 {
                    let (fa, fb) = (c.faces[a], c.faces[b]);
                    for i in 0..2 {
                        for j in 0..2 {
                            let mut v = (mu + lambda) * ten[a][b][i][j];
                            if i == j {
                                v += mu * lap[a][b];
                            }
                            t.push((2 * fa + i, 2 * fb + j, v));
                        }
                    }
                }
            }
        }
    }
    let nf = mesh.n_faces();
    let full = CsrMatrix::from_triplets(2 * nf, 2 * nf, t);
    let mut ti = Vec::with_capacity(full.nnz());
    for (r, c, v) in full.triplets() {
        if let (Some(ir), Some(ic)) = (mesh.internal_index[r / 2], mesh.internal_index[c / 2]) {
            ti.push((2 * ir + r % 2, 2 * ic + c % 2, v));
        }
    }
    let ni = mesh.n_internal();
    let internal = CsrMatrix::from_triplets(2 * ni, 2 * ni, ti);
    Ok(Rigidity { mu, lambda, full, internal, radius: OnceLock::new() })
}

impl Rigidity {
    /// (A u)_σ over all faces, boundary values of `u` included.
    pub fn apply(&self, u: &FaceField) -> FaceField {
        let flat: Vec<f64> = u.iter().flat_map(|v| *v).collect();
        let y = self.full.matvec(&flat);
        y.chunks(2).map(|c| [c[0], c[1]]).collect()
    }

    /// div τ(u)_σ = −(A u)_σ / |D_σ| on internal faces.
    pub fn div_tau(&self, mesh: &StaggeredMesh, u: &FaceField) -> FaceField {
        let au = self.apply(u);
        let mut out = vec![[0.0; 2]; mesh.n_faces()];
        for &s in &mesh.internal {
            out[s] = au[s].map(|x| -x / mesh.diamond[s]);
        }
        out
    }

    /// (A u, u) summed over internal faces.
    pub fn energy(&self, mesh: &StaggeredMesh, u: &FaceField) -> f64 {
        let au = self.apply(u);
        mesh.internal.iter().map(|&s| au[s][0] * u[s][0] + au[s][1] * u[s][1]).sum()
    }

    /// Spectral radius of the internal block (cached).
    pub fn spectral_radius(&self) -> Result<SpectralRadius, OperatorError> {
        self.radius.get_or_init(|| spectral_radius(&self.internal)).clone()
    }
}

/// Σ_K ∫_K ∇û:∇û.
pub fn h1_seminorm_sq(mesh: &StaggeredMesh, u: &FaceField) -> f64 {
    element_quadratic(mesh, u, |lap, _, a, b, ua, ub| lap[a][b] * (ua[0] * ub[0] + ua[1] * ub[1]))
}

/// Σ_K ∫_K (div û)².
pub fn div_l2_sq(mesh: &StaggeredMesh, u: &FaceField) -> f64 {
    element_quadratic(mesh, u, |_, ten, a, b, ua, ub| {
        let mut v = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                v += ua[i] * ten[a][b][i][j] * ub[j];
            }
        }
        v
    })
}

type Lap = [[f64; 4]; 4];
type Ten = [[[[f64; 2]; 2]; 4]; 4];

fn element_quadratic(mesh: &StaggeredMesh, u: &FaceField, f: impl Fn(&Lap, &Ten, usize, usize, [f64; 2], [f64; 2]) -> f64) -> f64 {
    let mut total = 0.0;
    for c in &mesh.cells {
        let (lap, ten) = rt_element(c.size);
        for a in 0..4 {
            for b in 0..4 {
                total += f(&lap, &ten, a, b, u[c.faces[a]], u[c.faces[b]]);
            }
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRadius {
    /// Converged Rayleigh quotient.
    pub estimate: f64,
    /// estimate × 1.01, for time step bounds.
    pub bound: f64,
    pub iterations: usize,
}

pub const RADIUS_SAFETY: f64 = 1.01;

/// Power iteration with Rayleigh quotients, relative tolerance 1e-8 and a
/// fixed pseudo-random start vector.
pub fn spectral_radius(a: &CsrMatrix) -> Result<SpectralRadius, OperatorError> {
    const MAX_ITER: usize = 10_000;
    let n = a.n_rows;
    if n == 0 || a.nnz() == 0 {
        return Ok(SpectralRadius { estimate: 0.0, bound: 0.0, iterations: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= nx);
    let mut lambda = 0.0f64;
    for it in 1..=MAX_ITER {
        let y = a.matvec(&x);
        let rq: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if ny == 0.0 {
            return Ok(SpectralRadius { estimate: 0.0, bound: 0.0, iterations: it });
        }
        if it > 1 && (rq - lambda).abs() <= 1e-8 * rq.abs() {
            let est = rq.abs();
            return Ok(SpectralRadius { estimate: est, bound: RADIUS_SAFETY * est, iterations: it });
        }
        lambda = rq;
        x = y.into_iter().map(|v| v / ny).collect();
    }
    Err(OperatorError::PowerIteration(MAX_ITER))
}

/// (Σ_K |K| |v_K|^q)^{1/q}.
pub fn cell_norm(mesh: &StaggeredMesh, v: &[f64], q: f64) -> f64 {
    mesh.cells.iter().zip(v).map(|(c, x)| c.area * x.abs().powf(q)).sum::<f64>().powf(1.0 / q)
}

pub fn cell_norm_linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// (Σ_σ∈E_int |D_σ| |u_σ|²)^{1/2}.
pub fn face_norm_l2(mesh: &StaggeredMesh, u: &FaceField) -> f64 {
    mesh.internal.iter().map(|&s| mesh.diamond[s] * (u[s][0] * u[s][0] + u[s][1] * u[s][1])).sum::<f64>().sqrt()
}
