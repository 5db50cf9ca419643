//! Shared by the integration tests and the acceptance runner: random grids,
//! dense oracles for single steps on tiny grids, and the identity suite.
#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagflow::cases::{run_scheme, SmoothData, SweepSpec, TimeStep};
use stagflow::eos::{pi_bound_constants, Eos};
use stagflow::fields::FaceField;
use stagflow::gauss;
use stagflow::mesh::{StaggeredMesh, DUAL_PAIRS};
use stagflow::operators::*;
use stagflow::schemes::{Boundary, Scheme, SchemeConfig, SchemeKind, SolverState};

pub fn random_mesh(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> StaggeredMesh {
    let mut axis = |n: usize| {
        let mut v = vec![rng.gen_range(-1.0..1.0)];
        for _ in 0..n {
            let last = *v.last().unwrap();
            v.push(last + rng.gen_range(0.2..1.0));
        }
        v
    };
    let xs = axis(nx);
    let ys = axis(ny);
    StaggeredMesh::from_coordinates(xs, ys).unwrap()
}

pub fn random_velocity(rng: &mut ChaCha8Rng, m: &StaggeredMesh) -> FaceField {
    (0..m.n_faces()).map(|s| if m.faces[s].is_internal() { [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)] } else { [0.0; 2] }).collect()
}

pub fn random_density(rng: &mut ChaCha8Rng, m: &StaggeredMesh) -> Vec<f64> {
    (0..m.n_cells()).map(|_| rng.gen_range(0.5..2.0)).collect()
}

/// Pseudoinverse solution of the four half-diamond balances of one cell.
pub fn dense_cell_oracle(out: [f64; 4]) -> [f64; 4] {
    let mut a = DMatrix::<f64>::zeros(4, 4);
    for (c, &(from, to)) in DUAL_PAIRS.iter().enumerate() {
        a[(from, c)] += 1.0;
        a[(to, c)] -= 1.0;
    }
    let total: f64 = out.iter().sum();
    let b = DVector::from_iterator(4, out.iter().map(|f| 0.25 * total - f));
    let x: DVector<f64> = a.pseudo_inverse(1e-12).unwrap() * b;
    [x[0], x[1], x[2], x[3]]
}

/// ∫_K ∇û:∇û and ∫_K (div û)² from central differences of the shape functions
/// (exact for these quadratics up to rounding).
pub fn fd_energy(m: &StaggeredMesh, u: &FaceField) -> (f64, f64) {
    let (mut grad, mut div) = (0.0, 0.0);
    let h = 1e-3;
    for c in &m.cells {
        let [hx, hy] = c.size;
        let val = |x: f64, y: f64| {
            let z = rt_reference_values(x, y);
            let mut v = [0.0; 2];
            for a in 0..4 {
                v[0] += z[a] * u[c.faces[a]][0];
                v[1] += z[a] * u[c.faces[a]][1];
            }
            v
        };
        for (p, w) in gauss::rectangle(-1.0, 1.0, -1.0, 1.0, 3) {
            let (ex, wx) = (val(p[0] + h, p[1]), val(p[0] - h, p[1]));
            let (ny, sy) = (val(p[0], p[1] + h), val(p[0], p[1] - h));
            let dx = [(ex[0] - wx[0]) / (2.0 * h) * 2.0 / hx, (ex[1] - wx[1]) / (2.0 * h) * 2.0 / hx];
            let dy = [(ny[0] - sy[0]) / (2.0 * h) * 2.0 / hy, (ny[1] - sy[1]) / (2.0 * h) * 2.0 / hy];
            let wt = w * hx * hy / 4.0;
            grad += wt * (dx[0] * dx[0] + dx[1] * dx[1] + dy[0] * dy[0] + dy[1] * dy[1]);
            div += wt * (dx[0] + dy[1]).powi(2);
        }
    }
    (grad, div)
}

pub fn internal_vector(m: &StaggeredMesh, u: &FaceField) -> Vec<f64> {
    m.internal.iter().flat_map(|&s| u[s]).collect()
}

/// All operator identities on one random grid of at most 16×16. Returns the
/// failed checks.
pub fn operator_algebra_trial(seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, ny) = (rng.gen_range(1..=16), rng.gen_range(1..=16));
    let m = random_mesh(&mut rng, nx, ny);
    let rho = random_density(&mut rng, &m);
    let u = random_velocity(&mut rng, &m);
    let p: Vec<f64> = (0..m.n_cells()).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut fails = Vec::new();
    let mut check = |ok: bool, what: String| {
        if !ok {
            fails.push(format!("seed {seed} ({nx}x{ny}): {what}"));
        }
    };

    // gradient/divergence duality
    let div = velocity_divergence(&m, &u);
    let g = pressure_gradient(&m, &p);
    let a: f64 = m.cells.iter().zip(&p).zip(&div).map(|((c, p), d)| c.area * p * d).sum();
    let b: f64 = (0..m.n_faces()).map(|s| m.diamond[s] * (u[s][0] * g[s][0] + u[s][1] * g[s][1])).sum();
    let scale: f64 = m.cells.iter().zip(&p).zip(&div).map(|((c, p), d)| (c.area * p * d).abs()).sum::<f64>().max(1e-300);
    check((a + b).abs() <= 1e-12 * scale, format!("duality residual {:.3e} (scale {scale:.3e})", a + b));

    // dual fluxes: half-diamond balance, conservativity, bound
    let fl = primal_mass_fluxes(&m, &rho, &u, None);
    let d = dual_fluxes(&m, &fl).unwrap();
    let fscale = fl.face.iter().fold(1e-300f64, |a, b| a.max(b.abs()));
    let h1 = half_diamond_residual(&m, &fl, &d);
    check(h1 <= 1e-13 * fscale, format!("half-diamond residual {h1:.3e}"));
    for s in 0..m.n_faces() {
        for l in m.dual_links(s) {
            let back = m.dual_links(l.neighbor).iter().find(|b| b.dual == l.dual).unwrap();
            check(d.from_diamond(l) == -d.from_diamond(back), format!("dual flux {} not conservative", l.dual));
        }
    }
    for (k, c) in m.cells.iter().enumerate() {
        let bound = c.faces.iter().map(|&s| fl.outward(&m, k, s).abs()).fold(0.0f64, f64::max);
        for slot in 0..4 {
            check(d.values[4 * k + slot].abs() <= bound * (1.0 + 1e-12), format!("dual flux bound in cell {k}"));
        }
    }

    // dual mass balance from a primal one
    let dt = 0.01;
    let mdiv = mass_divergence(&m, &fl);
    let rho1: Vec<f64> = rho.iter().zip(&mdiv).map(|(r, d)| r - dt * d).collect();
    let (d0, d1) = (dual_density(&m, &rho), dual_density(&m, &rho1));
    let mscale = m.diamond.iter().zip(&d0).map(|(d, r)| d * r / dt).fold(0.0f64, f64::max);
    for &s in &m.internal {
        let r = m.diamond[s] / dt * (d1[s] - d0[s]) + d.diamond_sum(&m, s);
        check(r.abs() <= 1e-11 * mscale, format!("dual mass balance {r:.3e} at face {s}"));
    }

    // rigidity: symmetry, energy identity, positivity, coercivity
    let (mu, lambda) = (rng.gen_range(0.1..2.0), rng.gen_range(-0.1..1.0));
    let rig = assemble_rigidity(&m, mu, lambda).unwrap();
    let vscale = rig.internal.values.iter().fold(0.0f64, |x, v| x.max(v.abs()));
    check(rig.internal.asymmetry() <= 1e-12 * vscale, "rigidity asymmetric".into());
    let x = internal_vector(&m, &u);
    if !x.is_empty() {
        let ax = rig.internal.matvec(&x);
        let e: f64 = x.iter().zip(&ax).map(|(p, q)| p * q).sum();
        let (gr, dv) = fd_energy(&m, &u);
        let expected = mu * gr + (mu + lambda) * dv;
        check((e - expected).abs() <= 1e-10 * expected.abs(), format!("energy identity {e} vs {expected}"));
        check(e > 0.0, "rigidity not positive".into());
    }
    for _ in 0..200 {
        let v = random_velocity(&mut rng, &m);
        let dtau = rig.div_tau(&m, &v);
        let lhs: f64 = m.internal.iter().map(|&s| -m.diamond[s] * (v[s][0] * dtau[s][0] + v[s][1] * dtau[s][1])).sum();
        let h1n = h1_seminorm_sq(&m, &v);
        if lhs < mu * h1n * (1.0 - 1e-12) {
            check(false, format!("coercivity {lhs} < {}", mu * h1n));
            break;
        }
    }
    fails
}

/// Largest violation of the entropy function bounds over `n` random densities,
/// relative to the bounding term (nonpositive when every bound holds).
pub fn entropy_bound_excess(gamma: f64, r: f64, n: usize, seed: u64) -> f64 {
    let eos = Eos::power(gamma).unwrap();
    let c = pi_bound_constants(gamma, r).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        // half the samples in (0, 2), the rest spread over (0, 4R) in log scale
        let rho = if i % 2 == 0 { rng.gen_range(1e-6..2.0) } else { (4.0 * r).powf(rng.gen_range(-3.0..1.0)) };
        let pi = eos.pi(rho);
        let d = rho - 1.0;
        if d == 0.0 {
            continue;
        }
        let tol = 1e-12;
        if gamma >= 2.0 || rho < r {
            let low = c.lower_small * d * d;
            worst = worst.max((low - pi) / low - tol);
        } else {
            let low = c.lower_tail * d.abs().powf(gamma);
            worst = worst.max((low - pi) / low - tol);
        }
        if rho < 2.0 {
            let up = c.upper * d * d;
            worst = worst.max((pi - up) / up - tol);
        }
    }
    worst
}

/// Dense Newton on r(x) = 0 with a central-difference Jacobian.
pub fn newton(mut x: Vec<f64>, r: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let n = x.len();
    for _ in 0..60 {
        let r0 = DVector::from_vec(r(&x));
        let mut j = DMatrix::<f64>::zeros(n, n);
        for c in 0..n {
            let h = 1e-7 * x[c].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let col = (DVector::from_vec(r(&xp)) - DVector::from_vec(r(&xm))) / (2.0 * h);
            j.set_column(c, &col);
        }
        let step = j.lu().solve(&r0).expect("singular oracle Jacobian");
        let size = step.amax();
        for c in 0..n {
            x[c] -= step[c];
        }
        if size <= 1e-15 * x.iter().fold(1.0f64, |a, b| a.max(b.abs())) {
            break;
        }
    }
    x
}

/// The discrete equations on a closed box, restated from the geometry alone.
pub struct Restated<'a> {
    pub mesh: &'a StaggeredMesh,
    pub eos: Eos,
    pub eps: f64,
    pub dt: f64,
    pub mode: Convection,
    pub rigidity: Rigidity,
}

const OUT_NORMALS: [[f64; 2]; 4] = [[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]];

impl<'a> Restated<'a> {
    pub fn new(mesh: &'a StaggeredMesh, gamma: f64, eps: f64, dt: f64, mu: f64, lambda: f64, mode: Convection) -> Self {
        Self { mesh, eos: Eos::power(gamma).unwrap(), eps, dt, mode, rigidity: assemble_rigidity(mesh, mu, lambda).unwrap() }
    }

    fn diamond(&self, s: usize) -> f64 {
        self.mesh.faces[s].cells.iter().flatten().map(|&k| self.mesh.cells[k].area / 4.0).sum()
    }

    pub fn rho_d(&self, rho: &[f64], s: usize) -> f64 {
        let cells: Vec<usize> = self.mesh.faces[s].cells.iter().flatten().copied().collect();
        cells.iter().map(|&k| self.mesh.cells[k].area * rho[k]).sum::<f64>() / cells.iter().map(|&k| self.mesh.cells[k].area).sum::<f64>()
    }

    /// Upwind mass flux leaving cell k through its local face a.
    fn outflow(&self, rho: &[f64], u: &FaceField, k: usize, a: usize) -> f64 {
        let s = self.mesh.cells[k].faces[a];
        let f = &self.mesh.faces[s];
        let w = u[s][0] * OUT_NORMALS[a][0] + u[s][1] * OUT_NORMALS[a][1];
        let other = f.cells.iter().flatten().copied().find(|&l| l != k);
        let up = if w >= 0.0 { rho[k] } else { other.map_or(0.0, |l| rho[l]) };
        f.length * up * w
    }

    pub fn mass(&self, rho_old: &[f64], rho: &[f64], u: &FaceField) -> Vec<f64> {
        (0..self.mesh.n_cells())
            .map(|k| self.mesh.cells[k].area * (rho[k] - rho_old[k]) / self.dt + (0..4).map(|a| self.outflow(rho, u, k, a)).sum::<f64>())
            .collect()
    }

    /// Flux out of the diamond of face σ through each of its dual faces,
    /// from the minimum-norm solution of the half-diamond balances.
    pub fn dual(&self, rho: &[f64], u: &FaceField) -> HashMap<(usize, usize), f64> {
        let mut out = HashMap::new();
        for (k, c) in self.mesh.cells.iter().enumerate() {
            let f: Vec<f64> = (0..4).map(|a| self.outflow(rho, u, k, a)).collect();
            let total: f64 = f.iter().sum();
            let pairs: Vec<(usize, usize)> = [0, 1].iter().flat_map(|&a| [2, 3].map(|b| (a, b))).collect();
            let mut m = DMatrix::<f64>::zeros(4, 4);
            for (col, &(a, b)) in pairs.iter().enumerate() {
                m[(a, col)] = 1.0;
                m[(b, col)] = -1.0;
            }
            let rhs = DVector::from_iterator(4, f.iter().map(|x| 0.25 * total - x));
            let g = m.pseudo_inverse(1e-13).unwrap() * rhs;
            for (col, &(a, b)) in pairs.iter().enumerate() {
                out.insert((c.faces[a], c.faces[b]), g[col]);
                out.insert((c.faces[b], c.faces[a]), -g[col]);
            }
        }
        out
    }

    pub fn gradient(&self, rho: &[f64], s: usize) -> [f64; 2] {
        let f = &self.mesh.faces[s];
        let (k, l) = (f.cells[0].unwrap(), f.cells[1].unwrap());
        let (ck, cl) = (self.mesh.cells[k].center, self.mesh.cells[l].center);
        let len = (cl[0] - ck[0]).hypot(cl[1] - ck[1]);
        let n = [(cl[0] - ck[0]) / len, (cl[1] - ck[1]) / len];
        let dp = self.eos.pressure(rho[l]) - self.eos.pressure(rho[k]);
        let c = f.length / self.diamond(s) * dp;
        [c * n[0], c * n[1]]
    }

    /// Σ_ε F_{σ,ε} v_{σ,ε} on face σ.
    pub fn convection(&self, dual: &HashMap<(usize, usize), f64>, v: &FaceField, s: usize) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (&(a, b), &f) in dual {
            if a != s {
                continue;
            }
            for c in 0..2 {
                out[c] += match self.mode {
                    Convection::Centered => 0.5 * f * (v[a][c] + v[b][c]),
                    Convection::Upwind => f * if f >= 0.0 { v[a][c] } else { v[b][c] },
                };
            }
        }
        out
    }

    pub fn field(&self, x: &[f64]) -> FaceField {
        let mut u = vec![[0.0; 2]; self.mesh.n_faces()];
        for (i, &s) in self.mesh.internal.iter().enumerate() {
            u[s] = [x[2 * i], x[2 * i + 1]];
        }
        u
    }

    /// One fully implicit step.
    pub fn implicit_step(&self, rho0: &[f64], u0: &FaceField) -> (Vec<f64>, FaceField) {
        let nc = self.mesh.n_cells();
        let e2 = 1.0 / (self.eps * self.eps);
        let residual = |x: &[f64]| {
            let rho = &x[..nc];
            let u = self.field(&x[nc..]);
            let mut r = self.mass(rho0, rho, &u);
            let dual = self.dual(rho, &u);
            let au = self.rigidity.apply(&u);
            for &s in &self.mesh.internal {
                let d = self.diamond(s);
                let conv = self.convection(&dual, &u, s);
                let g = self.gradient(rho, s);
                for c in 0..2 {
                    r.push(d / self.dt * (self.rho_d(rho, s) * u[s][c] - self.rho_d(rho0, s) * u0[s][c]) + conv[c] + au[s][c] + d * e2 * g[c]);
                }
            }
            r
        };
        let mut x = rho0.to_vec();
        x.extend(self.mesh.internal.iter().flat_map(|&s| u0[s]));
        let x = newton(x, residual);
        (x[..nc].to_vec(), self.field(&x[nc..]))
    }

    /// Velocity correction u = ũ − δt/(ε²ρ_D)(∇p(ρ) − g) and the density solving the mass balance.
    fn correct(&self, rho0: &[f64], rho_d: &[f64], ut: &FaceField, g: &FaceField) -> (Vec<f64>, FaceField) {
        let e2 = 1.0 / (self.eps * self.eps);
        let velocity = |rho: &[f64]| {
            let mut u = ut.clone();
            for &s in &self.mesh.internal {
                let gp = self.gradient(rho, s);
                for c in 0..2 {
                    u[s][c] = ut[s][c] - self.dt * e2 / rho_d[s] * (gp[c] - g[s][c]);
                }
            }
            u
        };
        let rho = newton(rho0.to_vec(), |rho| self.mass(rho0, rho, &velocity(rho)));
        let u = velocity(&rho);
        (rho, u)
    }

    /// One pressure-correction step from (ρⁿ⁻¹, ρⁿ, uⁿ).
    pub fn pressure_correction_step(&self, rho_prev: &[f64], rho0: &[f64], u0: &FaceField) -> (Vec<f64>, FaceField) {
        let e2 = 1.0 / (self.eps * self.eps);
        let n = self.mesh.n_faces();
        let d_prev: Vec<f64> = (0..n).map(|s| if self.mesh.faces[s].is_internal() { self.rho_d(rho_prev, s) } else { 1.0 }).collect();
        let d_now: Vec<f64> = (0..n).map(|s| if self.mesh.faces[s].is_internal() { self.rho_d(rho0, s) } else { 1.0 }).collect();
        let mut g = vec![[0.0; 2]; n];
        for &s in &self.mesh.internal {
            let gp = self.gradient(rho0, s);
            let f = (d_now[s] / d_prev[s]).sqrt();
            g[s] = [f * gp[0], f * gp[1]];
        }
        let dual = self.dual(rho0, u0);
        let prediction = |x: &[f64]| {
            let ut = self.field(x);
            let au = self.rigidity.apply(&ut);
            let mut r = Vec::new();
            for &s in &self.mesh.internal {
                let d = self.diamond(s);
                let conv = self.convection(&dual, &ut, s);
                for c in 0..2 {
                    r.push(d / self.dt * (d_now[s] * ut[s][c] - d_prev[s] * u0[s][c]) + conv[c] + au[s][c] + d * e2 * g[s][c]);
                }
            }
            r
        };
        let x0: Vec<f64> = self.mesh.internal.iter().flat_map(|&s| u0[s]).collect();
        let ut = self.field(&newton(x0, prediction));
        self.correct(rho0, &d_now, &ut, &g)
    }

    /// One semi-implicit step from (ρⁿ⁻¹, ρⁿ, uⁿ): explicit upwind prediction, implicit correction.
    pub fn semi_implicit_step(&self, rho_prev: &[f64], rho0: &[f64], u0: &FaceField) -> (Vec<f64>, FaceField) {
        let n = self.mesh.n_faces();
        let dual = self.dual(rho0, u0);
        let au = self.rigidity.apply(u0);
        let mut ut = u0.clone();
        let mut d_now = vec![1.0; n];
        for &s in &self.mesh.internal {
            let d = self.diamond(s);
            let conv = self.convection(&dual, u0, s);
            d_now[s] = self.rho_d(rho0, s);
            for c in 0..2 {
                ut[s][c] = (self.rho_d(rho_prev, s) * u0[s][c] - self.dt / d * (conv[c] + au[s][c])) / d_now[s];
            }
        }
        self.correct(rho0, &d_now, &ut, &vec![[0.0; 2]; n])
    }
}

/// Data of the tiny-grid oracle comparisons.
#[derive(Debug, Clone, Copy)]
pub struct OracleCase {
    pub kind: SchemeKind,
    pub eps: f64,
    pub mode: Convection,
    pub seed: u64,
}

/// Largest difference between one library step and the dense oracle, relative
/// to the size of the solution, on a 2×2 grid of a rectangle.
pub fn oracle_gap(case: OracleCase) -> f64 {
    let mesh = StaggeredMesh::uniform(2, 2, [0.0, 1.0, 0.0, 0.8]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(case.seed);
    let rho: Vec<f64> = (0..4).map(|_| rng.gen_range(0.8..1.25)).collect();
    let u = random_velocity(&mut rng, &mesh);
    let (gamma, mu, lambda, dt) = (1.4, 0.05, 0.02, 0.02);
    let mode = if case.kind == SchemeKind::SemiImplicit { Convection::Upwind } else { case.mode };
    let cfg = SchemeConfig { kind: case.kind, eps: case.eps, dt, t_end: 2.0 * dt, mu, lambda, convection: case.mode, ..Default::default() };
    let scheme = Scheme::new(&mesh, Eos::power(gamma).unwrap(), cfg, Boundary::default()).unwrap();
    let s0 = scheme.init_from_fields(rho, u).unwrap();
    let oracle = Restated::new(&mesh, gamma, case.eps, dt, mu, lambda, mode);
    // the two-level schemes are compared on their second step, from a genuine (ρⁿ⁻¹, ρⁿ, uⁿ)
    let from: SolverState = if case.kind == SchemeKind::Implicit { s0 } else { scheme.step(&s0).unwrap().state };
    let lib = scheme.step(&from).unwrap().state;
    let (rho1, u1) = match case.kind {
        SchemeKind::Implicit => oracle.implicit_step(&from.rho, &from.u),
        SchemeKind::PressureCorrection => oracle.pressure_correction_step(from.rho_prev.as_ref().unwrap(), &from.rho, &from.u),
        SchemeKind::SemiImplicit => oracle.semi_implicit_step(from.rho_prev.as_ref().unwrap(), &from.rho, &from.u),
        k => panic!("no oracle for {k}"),
    };
    let mut gap = 0.0f64;
    for k in 0..4 {
        gap = gap.max((rho1[k] - lib.rho[k]).abs() / rho1[k].abs());
    }
    let umax = u1.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
    for s in 0..mesh.n_faces() {
        for c in 0..2 {
            gap = gap.max((u1[s][c] - lib.u[s][c]).abs() / umax);
        }
    }
    gap
}

pub fn oracle_cases() -> Vec<OracleCase> {
    let mut v = Vec::new();
    for (i, eps) in [1.0, 0.3].into_iter().enumerate() {
        for mode in [Convection::Centered, Convection::Upwind] {
            v.push(OracleCase { kind: SchemeKind::Implicit, eps, mode, seed: 10 + i as u64 });
            v.push(OracleCase { kind: SchemeKind::PressureCorrection, eps, mode, seed: 20 + i as u64 });
        }
        v.push(OracleCase { kind: SchemeKind::SemiImplicit, eps, mode: Convection::Upwind, seed: 30 + i as u64 });
    }
    v
}

/// Summary of one identity run.
#[derive(Debug)]
pub struct IdentityRun {
    pub kind: SchemeKind,
    pub steps: usize,
    /// Largest scaled kinetic residual (a signed sum for the semi-implicit inequality).
    pub worst_kinetic: f64,
    pub worst_renorm: f64,
    pub mass_drift: f64,
    pub min_density: f64,
    pub violations: Vec<String>,
}

/// Random smooth data on 8×8, `steps` steps of `kind` at Mach number `eps`.
pub fn identity_run(kind: SchemeKind, seed: u64, eps: f64, steps: usize) -> IdentityRun {
    let data = SmoothData::random(seed);
    let mesh = StaggeredMesh::uniform(8, 8, data.domain).unwrap();
    let eos = Eos::power(1.4).unwrap();
    let spec = SweepSpec { kind, n: 8, data: data.clone(), ..SweepSpec::default() };
    let dt = if matches!(kind, SchemeKind::SemiImplicit | SchemeKind::IncompSemi) {
        SweepSpec { time_step: TimeStep::MachUniform { eta: 0.1, c0: None }, ..spec.clone() }.resolve_dt(&mesh, &eos, &[eps]).unwrap().0
    } else {
        0.005
    };
    let mut cfg = spec.config(kind, eps, dt);
    cfg.t_end = dt * steps as f64;
    let scheme = Scheme::new(&mesh, eos, cfg, Boundary::default()).unwrap();
    let init = if kind.is_incompressible() { scheme.init_incompressible(|x| data.velocity(x), None) } else { scheme.init(|x| data.rho(eps, x), |x| data.velocity(x)) }.unwrap();
    let out = run_scheme(&scheme, init, |_, _, _| {}).unwrap();
    let m = &out.monitor;
    let mut violations = Vec::new();
    for r in &m.reports {
        if !r.kinetic_ok {
            violations.push(format!("step {}: kinetic residual {:.3e} (scale {:.3e})", r.n, r.ke_residual, r.scale));
        }
        if !r.renorm_ok {
            violations.push(format!("step {}: renormalization defect {:.3e}", r.n, r.renorm_max_defect));
        }
    }
    if let Some(n) = m.audit().first_violation {
        violations.push(format!("step {n}: entropy inequality violated"));
    }
    if !kind.is_incompressible() && out.mass_drift() > 1e-12 {
        violations.push(format!("mass drift {:.3e}", out.mass_drift()));
    }
    if !out.cfl_ok {
        violations.push("CFL bound exceeded".into());
    }
    if !(out.min_density > 0.0) {
        violations.push(format!("density {:.3e}", out.min_density));
    }
    IdentityRun {
        kind,
        steps: m.reports.len(),
        worst_kinetic: m.reports.iter().map(|r| r.ke_residual / r.scale).fold(f64::NEG_INFINITY, f64::max),
        worst_renorm: m.reports.iter().map(|r| r.renorm_max_defect / r.scale).fold(0.0, f64::max),
        mass_drift: out.mass_drift(),
        min_density: out.min_density,
        violations,
    }
}
