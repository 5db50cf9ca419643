mod common;

use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagflow::mesh::StaggeredMesh;
use stagflow::operators::*;

#[test]
fn cell_dual_fluxes_match_pseudoinverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let out = [0; 4].map(|_| rng.gen_range(-2.0..2.0));
        let f = solve_cell_dual_fluxes(out);
        let o = dense_cell_oracle(out);
        for c in 0..4 {
            assert!((f[c] - o[c]).abs() < 1e-13, "{f:?} {o:?}");
        }
    }
}

#[test]
fn two_by_two_dual_balance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = StaggeredMesh::uniform(2, 2, [0.0, 1.0, 0.0, 1.0]).unwrap();
    for _ in 0..50 {
        let face = (0..m.n_faces()).map(|s| if m.faces[s].is_internal() { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
        let fl = PrimalFluxes { face };
        let d = dual_fluxes(&m, &fl).unwrap();
        let scale = fl.face.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(half_diamond_residual(&m, &fl, &d) <= 1e-13 * scale);
    }
}

#[test]
fn dual_mass_balance_follows_from_primal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let m = random_mesh(&mut rng, 5, 4);
        let rho = random_density(&mut rng, &m);
        let u = random_velocity(&mut rng, &m);
        let dt = 0.01;
        let fl = primal_mass_fluxes(&m, &rho, &u, None);
        let div = mass_divergence(&m, &fl);
        let rho1: Vec<f64> = rho.iter().zip(&div).map(|(r, d)| r - dt * d).collect();
        let duals = dual_fluxes(&m, &fl).unwrap();
        let (d0, d1) = (dual_density(&m, &rho), dual_density(&m, &rho1));
        let scale = m.diamond.iter().zip(&d0).map(|(d, r)| d * r / dt).fold(0.0f64, f64::max);
        for &s in &m.internal {
            let r = m.diamond[s] / dt * (d1[s] - d0[s]) + duals.diamond_sum(&m, s);
            assert!(r.abs() <= 1e-11 * scale, "{r}");
        }
    }
}

#[test]
fn convection_of_constant_is_mass_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = random_mesh(&mut rng, 4, 4);
    let rho = random_density(&mut rng, &m);
    let u = random_velocity(&mut rng, &m);
    let duals = dual_fluxes(&m, &primal_mass_fluxes(&m, &rho, &u, None)).unwrap();
    let c = vec![[0.7, -1.3]; m.n_faces()];
    for mode in [Convection::Centered, Convection::Upwind] {
        let out = convection_flux_sum(&m, &duals, &c, mode);
        for &s in &m.internal {
            let r = duals.diamond_sum(&m, s);
            assert!((out[s][0] - 0.7 * r).abs() < 1e-13 && (out[s][1] + 1.3 * r).abs() < 1e-13);
        }
    }
}

#[test]
fn rigidity_energy_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..100 {
        let m = if trial % 10 == 0 { random_mesh(&mut rng, 4, 3) } else { StaggeredMesh::uniform(4, 4, [0.0, 1.0, 0.0, 1.0]).unwrap() };
        let (mu, lambda) = (rng.gen_range(0.1..2.0), rng.gen_range(-0.1..1.0));
        let a = assemble_rigidity(&m, mu, lambda).unwrap();
        let u = random_velocity(&mut rng, &m);
        let x = internal_vector(&m, &u);
        let ax = a.internal.matvec(&x);
        let e: f64 = x.iter().zip(&ax).map(|(p, q)| p * q).sum();
        let (g, d) = fd_energy(&m, &u);
        let expected = mu * g + (mu + lambda) * d;
        assert!((e - expected).abs() <= 1e-10 * expected.abs(), "{e} {expected}");
        assert!((a.energy(&m, &u) - e).abs() <= 1e-12 * e.abs());
        assert!((h1_seminorm_sq(&m, &u) - g).abs() <= 1e-10 * g);
        assert!((div_l2_sq(&m, &u) - d).abs() <= 1e-10 * g);
        assert!(e > 0.0);
        // coercivity: Σ|D| u·(−div τ(u)) ≥ μ‖u‖²
        let dt = a.div_tau(&m, &u);
        let lhs: f64 = m.internal.iter().map(|&s| -m.diamond[s] * (u[s][0] * dt[s][0] + u[s][1] * dt[s][1])).sum();
        assert!(lhs >= mu * h1_seminorm_sq(&m, &u) * (1.0 - 1e-12));
    }
}

#[test]
fn rigidity_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = random_mesh(&mut rng, 6, 5);
    let a = assemble_rigidity(&m, 0.3, 0.5).unwrap();
    let scale = a.internal.values.iter().fold(0.0f64, |x, v| x.max(v.abs()));
    assert!(a.internal.asymmetry() <= 1e-12 * scale);
    assert!(a.full.asymmetry() <= 1e-12 * scale);
}

#[test]
fn spectral_radius_matches_dense_eigenvalues() {
    let m = StaggeredMesh::uniform(4, 4, [0.0, 1.0, 0.0, 1.0]).unwrap();
    let a = assemble_rigidity(&m, 1.0, 0.5).unwrap();
    let d = a.internal.to_dense();
    let n = d.len();
    let dm = DMatrix::from_fn(n, n, |i, j| d[i][j]);
    let oracle = SymmetricEigen::new(dm).eigenvalues.iter().fold(0.0f64, |x, v| x.max(v.abs()));
    let r = a.spectral_radius().unwrap();
    assert!((r.estimate - oracle).abs() <= 1e-6 * oracle, "{} {}", r.estimate, oracle);
    assert_eq!(r.bound, RADIUS_SAFETY * r.estimate);
}

#[test]
fn rigidity_export_is_coordinate_text() {
    let m = StaggeredMesh::uniform(2, 2, [0.0, 1.0, 0.0, 1.0]).unwrap();
    let a = assemble_rigidity(&m, 1.0, 0.0).unwrap();
    let text = a.internal.to_coordinate_text();
    assert_eq!(text.lines().count(), a.internal.nnz());
    for line in text.lines() {
        let parts: Vec<&str> = line.split(' ').collect();
        assert_eq!(parts.len(), 3);
        let (r, c): (usize, usize) = (parts[0].parse().unwrap(), parts[1].parse().unwrap());
        assert_eq!(parts[2].parse::<f64>().unwrap(), a.internal.get(r, c));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dual_fluxes_satisfy_h1_h3(seed in 0u64..10_000, nx in 1usize..5, ny in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_mesh(&mut rng, nx, ny);
        let rho = random_density(&mut rng, &m);
        let u = random_velocity(&mut rng, &m);
        let fl = primal_mass_fluxes(&m, &rho, &u, None);
        let d = dual_fluxes(&m, &fl).unwrap();
        let scale = fl.face.iter().fold(1e-300f64, |a, b| a.max(b.abs()));
        prop_assert!(half_diamond_residual(&m, &fl, &d) <= 1e-12 * scale);
        for (k, c) in m.cells.iter().enumerate() {
            let bound = c.faces.iter().map(|&s| fl.outward(&m, k, s).abs()).fold(0.0f64, f64::max);
            for slot in 0..4 {
                prop_assert!(d.values[4 * k + slot].abs() <= bound * (1.0 + 1e-12));
            }
        }
        // antisymmetry: each dual face is seen with opposite signs from its two diamonds
        for s in 0..m.n_faces() {
            for l in m.dual_links(s) {
                let back = m.dual_links(l.neighbor).iter().find(|b| b.dual == l.dual).unwrap();
                prop_assert_eq!(d.from_diamond(l), -d.from_diamond(back));
            }
        }
    }

    #[test]
    fn gradient_divergence_duality(seed in 0u64..10_000, nx in 1usize..6, ny in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_mesh(&mut rng, nx, ny);
        let p: Vec<f64> = (0..m.n_cells()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let u = random_velocity(&mut rng, &m);
        let div = velocity_divergence(&m, &u);
        let g = pressure_gradient(&m, &p);
        let a: f64 = m.cells.iter().zip(&p).zip(&div).map(|((c, p), d)| c.area * p * d).sum();
        let b: f64 = (0..m.n_faces()).map(|s| m.diamond[s] * (u[s][0] * g[s][0] + u[s][1] * g[s][1])).sum();
        let scale = a.abs().max(b.abs()).max(1.0);
        prop_assert!((a + b).abs() <= 1e-12 * scale);
    }

    #[test]
    fn mass_divergence_telescopes(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_mesh(&mut rng, 4, 3);
        let rho = random_density(&mut rng, &m);
        let u = random_velocity(&mut rng, &m);
        let div = mass_divergence(&m, &primal_mass_fluxes(&m, &rho, &u, None));
        let total: f64 = m.cells.iter().zip(&div).map(|(c, d)| c.area * d).sum();
        prop_assert!(total.abs() < 1e-13);
    }

    #[test]
    fn dual_density_is_convex_combination(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_mesh(&mut rng, 3, 3);
        let rho = random_density(&mut rng, &m);
        let d = dual_density(&m, &rho);
        for (s, f) in m.faces.iter().enumerate() {
            let vals: Vec<f64> = f.cells.iter().flatten().map(|&k| rho[k]).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(0.0, f64::max);
            prop_assert!(d[s] >= lo * (1.0 - 1e-15) && d[s] <= hi * (1.0 + 1e-15));
        }
    }
}

#[test]
fn operator_algebra_on_random_grids() {
    for seed in 0..10 {
        let f = operator_algebra_trial(seed);
        assert!(f.is_empty(), "{f:?}");
    }
}
