//! Discrete fields: one scalar per cell, one 2-vector per face.

use crate::gauss;
use crate::mesh::StaggeredMesh;

/// One value per primal cell.
pub type CellField = Vec<f64>;
/// One 2-vector per face, boundary faces included.
pub type FaceField = Vec<[f64; 2]>;

pub fn zero_faces(mesh: &StaggeredMesh) -> FaceField {
    vec![[0.0; 2]; mesh.n_faces()]
}

/// Set every boundary face entry to zero.
pub fn clear_boundary(mesh: &StaggeredMesh, u: &mut FaceField) {
    for (s, f) in mesh.faces.iter().enumerate() {
        if !f.is_internal() {
            u[s] = [0.0; 2];
        }
    }
}

/// Copy boundary entries of `from` into `u`.
pub fn copy_boundary(mesh: &StaggeredMesh, from: &FaceField, u: &mut FaceField) {
    for (s, f) in mesh.faces.iter().enumerate() {
        if !f.is_internal() {
            u[s] = from[s];
        }
    }
}

/// Cell means of `f` by an `order`-point tensor Gauss rule.
pub fn cell_averages(mesh: &StaggeredMesh, f: impl Fn([f64; 2]) -> f64, order: usize) -> CellField {
    mesh.cells
        .iter()
        .map(|c| {
            let [hx, hy] = c.size;
            let (x0, y0) = (c.center[0] - 0.5 * hx, c.center[1] - 0.5 * hy);
            let pts = gauss::rectangle(x0, x0 + hx, y0, y0 + hy, order);
            pts.iter().map(|(p, w)| w * f(*p)).sum::<f64>() / c.area
        })
        .collect()
}

fn face_ends(mesh: &StaggeredMesh, s: usize) -> ([f64; 2], [f64; 2]) {
    let f = &mesh.faces[s];
    let h = 0.5 * f.length;
    let t = [f.normal[1], f.normal[0]];
    ([f.center[0] - h * t[0], f.center[1] - h * t[1]], [f.center[0] + h * t[0], f.center[1] + h * t[1]])
}

/// Face means of `f` by an `order`-point Gauss rule.
pub fn face_means(mesh: &StaggeredMesh, f: impl Fn([f64; 2]) -> [f64; 2], order: usize) -> FaceField {
    (0..mesh.n_faces())
        .map(|s| {
            let (a, b) = face_ends(mesh, s);
            let mut acc = [0.0; 2];
            for (p, w) in gauss::segment(a, b, order) {
                let v = f(p);
                acc[0] += w * v[0];
                acc[1] += w * v[1];
            }
            let l = mesh.faces[s].length;
            [acc[0] / l, acc[1] / l]
        })
        .collect()
}

/// Means of `f` over the diamonds (half-diamonds on the boundary), using a
/// collapsed `order`-point rule on each half-diamond triangle.
pub fn diamond_averages(mesh: &StaggeredMesh, f: impl Fn([f64; 2]) -> [f64; 2], order: usize) -> FaceField {
    (0..mesh.n_faces())
        .map(|s| {
            let (a, b) = face_ends(mesh, s);
            let mut acc = [0.0; 2];
            for &k in mesh.faces[s].cells.iter().flatten() {
                for (p, w) in gauss::triangle(mesh.cells[k].center, a, b, order) {
                    let v = f(p);
                    acc[0] += w * v[0];
                    acc[1] += w * v[1];
                }
            }
            let d = mesh.diamond[s];
            [acc[0] / d, acc[1] / d]
        })
        .collect()
}

/// Cell-centred velocity: the mean of the four face vectors.
pub fn cell_velocity(mesh: &StaggeredMesh, u: &FaceField) -> Vec<[f64; 2]> {
    mesh.cells
        .iter()
        .map(|c| {
            let mut v = [0.0; 2];
            for &s in &c.faces {
                v[0] += 0.25 * u[s][0];
                v[1] += 0.25 * u[s][1];
            }
            v
        })
        .collect()
}

/// Mean value over the domain, m(p) = Σ|K| p_K / |Ω|.
pub fn mean(mesh: &StaggeredMesh, p: &[f64]) -> f64 {
    let total: f64 = mesh.cells.iter().zip(p).map(|(c, v)| c.area * v).sum();
    total / mesh.cells.iter().map(|c| c.area).sum::<f64>()
}
