//! Staggered discretization of axis-aligned rectangular grids.
//!
//! Cells are indexed row-major (`j * nx + i`). Faces with a normal along x
//! ("vertical" faces) come first, row-major over `(j, i)` with `i in 0..=nx`,
//! followed by faces with a normal along y, row-major over `(j, i)` with
//! `j in 0..=ny`. Every face carries a unit normal pointing from its minus
//! side to its plus side.
//!
//! Each cell is split into four half-diamonds (the cones over its faces with
//! apex at the cell center). The dual faces are the four half-diagonals of
//! the cell; dual face `4 * K + c` separates the half-diamonds of two
//! perpendicular faces of `K`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("cell counts must be positive (got nx = {nx}, ny = {ny})")]
    EmptyGrid { nx: usize, ny: usize },
    #[error("degenerate domain: coordinates must be strictly increasing along {axis}")]
    Degenerate { axis: char },
    #[error("unknown face id {0}")]
    UnknownFace(usize),
    #[error("face {0} lies on the boundary")]
    ExternalFace(usize),
}

/// Local face slots of a cell.
pub const WEST: usize = 0;
pub const EAST: usize = 1;
pub const SOUTH: usize = 2;
pub const NORTH: usize = 3;

/// The local face pairs joined by the four in-cell dual faces, oriented
/// along the cycle W -> S -> E -> N -> W.
pub const DUAL_PAIRS: [(usize, usize); 4] = [(WEST, SOUTH), (SOUTH, EAST), (EAST, NORTH), (NORTH, WEST)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub center: [f64; 2],
    pub size: [f64; 2],
    pub area: f64,
    /// Face ids in the order W, E, S, N.
    pub faces: [usize; 4],
}

#[derive(Debug, Clone)]
pub struct Face {
    pub center: [f64; 2],
    pub length: f64,
    pub axis: Axis,
    pub normal: [f64; 2],
    /// Adjacent cells on the minus and plus side of the normal.
    pub cells: [Option<usize>; 2],
}

impl Face {
    pub fn is_internal(&self) -> bool {
        self.cells[0].is_some() && self.cells[1].is_some()
    }

    /// Outward normal sign of this face seen from `cell`: +1 if the cell is
    /// on the minus side.
    pub fn sign_from(&self, cell: usize) -> f64 {
        if self.cells[0] == Some(cell) {
            1.0
        } else {
            -1.0
        }
    }
}

/// A dual face inside `cell`, separating the half-diamonds of `faces[0]` and
/// `faces[1]`. A stored flux is counted positive from `faces[0]` to `faces[1]`.
#[derive(Debug, Clone, Copy)]
pub struct DualFace {
    pub cell: usize,
    pub faces: [usize; 2],
}

/// One dual face of a diamond, seen from that diamond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualLink {
    pub dual: usize,
    pub neighbor: usize,
    pub cell: usize,
    /// +1 when the diamond is the origin side of the stored orientation.
    pub sign: f64,
}

#[derive(Debug, Clone)]
pub struct StaggeredMesh {
    pub nx: usize,
    pub ny: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub cells: Vec<Cell>,
    pub faces: Vec<Face>,
    pub duals: Vec<DualFace>,
    /// Internal face ids in increasing order.
    pub internal: Vec<usize>,
    /// Position of each face in `internal`, if internal.
    pub internal_index: Vec<Option<usize>>,
    /// |D_σ| per face (half-diamond only, for external faces).
    pub diamond: Vec<f64>,
    links: Vec<Vec<DualLink>>,
}

impl StaggeredMesh {
    pub fn uniform(nx: usize, ny: usize, domain: [f64; 4]) -> Result<Self, MeshError> {
        if nx == 0 || ny == 0 {
            return Err(MeshError::EmptyGrid { nx, ny });
        }
        let [x0, x1, y0, y1] = domain;
        if !(x1 > x0) {
            return Err(MeshError::Degenerate { axis: 'x' });
        }
        if !(y1 > y0) {
            return Err(MeshError::Degenerate { axis: 'y' });
        }
        let xs = (0..=nx).map(|i| lerp(x0, x1, i, nx)).collect();
        let ys = (0..=ny).map(|j| lerp(y0, y1, j, ny)).collect();
        Self::from_coordinates(xs, ys)
    }

    /// Tensor-product grid from strictly increasing node coordinates.
    pub fn from_coordinates(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, MeshError> {
        if xs.len() < 2 || ys.len() < 2 {
            return Err(MeshError::EmptyGrid { nx: xs.len().saturating_sub(1), ny: ys.len().saturating_sub(1) });
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MeshError::Degenerate { axis: 'x' });
        }
        if ys.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MeshError::Degenerate { axis: 'y' });
        }
        let nx = xs.len() - 1;
        let ny = ys.len() - 1;
        let nv = ny * (nx + 1);
        let vface = |i: usize, j: usize| j * (nx + 1) + i;
        let hface = |i: usize, j: usize| nv + j * nx + i;
        let cell_id = |i: usize, j: usize| j * nx + i;

        let mut cells = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let dx = xs[i + 1] - xs[i];
                let dy = ys[j + 1] - ys[j];
                cells.push(Cell {
                    center: [0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])],
                    size: [dx, dy],
                    area: dx * dy,
                    faces: [vface(i, j), vface(i + 1, j), hface(i, j), hface(i, j + 1)],
                });
            }
        }

        let mut faces = Vec::with_capacity(nv + (ny + 1) * nx);
        for j in 0..ny {
            for i in 0..=nx {
                let minus = (i > 0).then(|| cell_id(i - 1, j));
                let plus = (i < nx).then(|| cell_id(i, j));
                faces.push(Face {
                    center: [xs[i], 0.5 * (ys[j] + ys[j + 1])],
                    length: ys[j + 1] - ys[j],
                    axis: Axis::X,
                    normal: [1.0, 0.0],
                    cells: [minus, plus],
                });
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                let minus = (j > 0).then(|| cell_id(i, j - 1));
                let plus = (j < ny).then(|| cell_id(i, j));
                faces.push(Face {
                    center: [0.5 * (xs[i] + xs[i + 1]), ys[j]],
                    length: xs[i + 1] - xs[i],
                    axis: Axis::Y,
                    normal: [0.0, 1.0],
                    cells: [minus, plus],
                });
            }
        }

        let mut internal = Vec::new();
        let mut internal_index = vec![None; faces.len()];
        for (s, f) in faces.iter().enumerate() {
            if f.is_internal() {
                internal_index[s] = Some(internal.len());
                internal.push(s);
            }
        }

        let mut diamond = vec![0.0; faces.len()];
        for (s, f) in faces.iter().enumerate() {
            diamond[s] = f.cells.iter().flatten().map(|&k| 0.25 * cells[k].area).sum();
        }

        let mut duals = Vec::with_capacity(4 * cells.len());
        let mut links = vec![Vec::with_capacity(4); faces.len()];
        for (k, c) in cells.iter().enumerate() {
            for (slot, &(a, b)) in DUAL_PAIRS.iter().enumerate() {
                let (fa, fb) = (c.faces[a], c.faces[b]);
                let id = 4 * k + slot;
                duals.push(DualFace { cell: k, faces: [fa, fb] });
                links[fa].push(DualLink { dual: id, neighbor: fb, cell: k, sign: 1.0 });
                links[fb].push(DualLink { dual: id, neighbor: fa, cell: k, sign: -1.0 });
            }
        }

        Ok(Self { nx, ny, xs, ys, cells, faces, duals, internal, internal_index, diamond, links })
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_internal(&self) -> usize {
        self.internal.len()
    }

    pub fn cell_id(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// |D_{K,σ}|; every half-diamond of a rectangle is a quarter of the cell.
    pub fn half_diamond(&self, cell: usize) -> f64 {
        0.25 * self.cells[cell].area
    }

    /// ξ_K^σ = |D_{K,σ}| / |K|.
    pub fn xi(&self, cell: usize, _face: usize) -> f64 {
        self.half_diamond(cell) / self.cells[cell].area
    }

    /// Dual faces bounding the (half-)diamond of a face, internal or not.
    pub fn dual_links(&self, face: usize) -> &[DualLink] {
        &self.links[face]
    }

    /// Dual faces of the diamond of an internal face: (dual id, neighbor face, cell).
    pub fn dual_face_enumeration(&self, face: usize) -> Result<Vec<(usize, usize, usize)>, MeshError> {
        let f = self.faces.get(face).ok_or(MeshError::UnknownFace(face))?;
        if !f.is_internal() {
            return Err(MeshError::ExternalFace(face));
        }
        Ok(self.links[face].iter().map(|l| (l.dual, l.neighbor, l.cell)).collect())
    }

    pub fn domain_area(&self) -> f64 {
        (self.xs[self.nx] - self.xs[0]) * (self.ys[self.ny] - self.ys[0])
    }

    /// h_T: the largest cell diameter.
    pub fn h(&self) -> f64 {
        self.cells.iter().map(|c| c.size[0].hypot(c.size[1])).fold(0.0, f64::max)
    }

    /// Largest cell edge length (the grid step of a uniform grid).
    pub fn space_step(&self) -> f64 {
        self.cells.iter().map(|c| c.size[0].max(c.size[1])).fold(0.0, f64::max)
    }

    /// θ_T: max over cells of diameter / shortest face.
    pub fn theta(&self) -> f64 {
        self.cells.iter().map(|c| c.size[0].hypot(c.size[1]) / c.size[0].min(c.size[1])).fold(0.0, f64::max)
    }

    /// Face id nearest to the horizontal line y = `y` in the row of y-normal faces.
    pub fn face_row_near(&self, y: f64) -> usize {
        let mut best = 0;
        for j in 1..=self.ny {
            if (self.ys[j] - y).abs() < (self.ys[best] - y).abs() {
                best = j;
            }
        }
        best
    }

    /// Id of the y-normal face at column `i`, node row `j`.
    pub fn hface(&self, i: usize, j: usize) -> usize {
        self.ny * (self.nx + 1) + j * self.nx + i
    }

    /// Id of the x-normal face at node column `i`, row `j`.
    pub fn vface(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
}

impl fmt::Display for StaggeredMesh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cells           {} ({} x {})", self.n_cells(), self.nx, self.ny)?;
        writeln!(f, "faces           {} ({} internal)", self.n_faces(), self.n_internal())?;
        writeln!(f, "dual faces      {}", self.duals.len())?;
        writeln!(f, "h (diameter)    {:.6e}", self.h())?;
        writeln!(f, "space step      {:.6e}", self.space_step())?;
        write!(f, "theta           {:.6e}", self.theta())
    }
}

fn lerp(a: f64, b: f64, i: usize, n: usize) -> f64 {
    if i == n {
        b
    } else {
        a + (b - a) * (i as f64 / n as f64)
    }
}
