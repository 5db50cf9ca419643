//! CSV emission. Floats are written with 17 significant digits so that a
//! file round-trips bit for bit; line endings are LF.

use std::io::Write;

use csv::{Terminator, WriterBuilder};

use crate::diagnostics::{StepReport, SweepSummary};
use crate::eos::Eos;
use crate::fields::{cell_velocity, FaceField};
use crate::mesh::StaggeredMesh;
use crate::vortex::{Profile, VortexRun};

pub const RUN_LOG_HEADER: [&str; 13] = [
    "n",
    "t",
    "dt",
    "mass",
    "kinetic_energy",
    "elastic_potential",
    "global_entropy",
    "ke_residual",
    "entropy_lhs",
    "dp_l2",
    "dp_linf",
    "cfl_margin",
    "outer_iters",
];
pub const SWEEP_HEADER: [&str; 6] = ["eps", "norm_rho_minus_1_L2", "norm_rho_minus_1_Lq", "dp_l2_max", "dist_u_l2", "dist_dp_l2"];
pub const CELL_HEADER: [&str; 6] = ["x", "y", "rho", "u", "v", "p"];
pub const FACE_HEADER: [&str; 6] = ["x", "y", "nx", "ny", "ux", "uy"];
pub const PROFILE_HEADER: [&str; 3] = ["x1", "u2_numerical", "u2_exact"];
pub const DP_PROFILE_HEADER: [&str; 3] = ["x1", "dp_numerical", "dp_exact"];
pub const VORTEX_ERROR_HEADER: [&str; 9] = ["c_m", "c", "mach", "n", "dt", "steps", "velocity_l1", "pressure_l1", "pressure_l1_scaled"];

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn table<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> csv::Result<()> {
    let mut w = WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn floats(v: &[f64]) -> Vec<String> {
    v.iter().map(|&x| float(x)).collect()
}

pub fn write_run_log<W: Write>(out: W, reports: &[StepReport]) -> csv::Result<()> {
    table(
        out,
        &RUN_LOG_HEADER,
        reports.iter().map(|r| {
            let mut row = vec![r.n.to_string()];
            row.extend(floats(&[
                r.t,
                r.dt,
                r.mass,
                r.kinetic_energy,
                r.elastic_potential,
                r.global_entropy,
                r.ke_residual,
                r.entropy_lhs,
                r.dp_l2,
                r.dp_linf,
                r.cfl_margin,
            ]));
            row.push(r.outer_iters.to_string());
            row
        }),
    )
}

pub fn write_sweep<W: Write>(out: W, summary: &SweepSummary) -> csv::Result<()> {
    table(out, &SWEEP_HEADER, summary.records.iter().map(|r| floats(&[r.eps, r.norm_l2(), r.norm_lq(), r.dp_l2_max, r.dist_u_l2, r.dist_dp_l2])))
}

/// Cell values with the cell-centred velocity (mean of the four faces).
pub fn write_cells<W: Write>(out: W, mesh: &StaggeredMesh, eos: &Eos, rho: &[f64], u: &FaceField) -> csv::Result<()> {
    let uc = cell_velocity(mesh, u);
    table(
        out,
        &CELL_HEADER,
        mesh.cells.iter().enumerate().map(|(k, c)| floats(&[c.center[0], c.center[1], rho[k], uc[k][0], uc[k][1], eos.pressure(rho[k])])),
    )
}

pub fn write_faces<W: Write>(out: W, mesh: &StaggeredMesh, u: &FaceField) -> csv::Result<()> {
    table(out, &FACE_HEADER, mesh.faces.iter().zip(u).map(|(f, v)| floats(&[f.center[0], f.center[1], f.normal[0], f.normal[1], v[0], v[1]])))
}

fn write_profile<W: Write>(out: W, header: &[&str], p: &Profile) -> csv::Result<()> {
    table(out, header, (0..p.x.len()).map(|i| floats(&[p.x[i], p.numerical[i], p.exact[i]])))
}

pub fn write_velocity_profile<W: Write>(out: W, p: &Profile) -> csv::Result<()> {
    write_profile(out, &PROFILE_HEADER, p)
}

pub fn write_dp_profile<W: Write>(out: W, p: &Profile) -> csv::Result<()> {
    write_profile(out, &DP_PROFILE_HEADER, p)
}

pub fn write_vortex_errors<W: Write>(out: W, runs: &[&VortexRun]) -> csv::Result<()> {
    table(
        out,
        &VORTEX_ERROR_HEADER,
        runs.iter().map(|r| {
            let c = r.params.sound_speed();
            let mut row = floats(&[r.params.c_m, c, 1.0 / c]);
            row.push(r.n.to_string());
            row.push(float(r.dt));
            row.push(r.steps.to_string());
            row.extend(floats(&[r.errors.velocity_l1, r.errors.pressure_l1, r.errors.pressure_l1_scaled]));
            row
        }),
    )
}

/// Parse a CSV written by this module back into its header and float rows.
pub fn read_table(text: &str) -> csv::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|s| s.parse::<f64>().unwrap_or(f64::NAN)).collect());
    }
    Ok((header, rows))
}
