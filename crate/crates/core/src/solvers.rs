//! Sparse linear solves and the damped fixed-point driver.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use thiserror::Error;

/// Systems at or above this size use the iterative path by default.
pub const DIRECT_LIMIT: usize = 200_000;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: matrix is {rows}x{cols}, right-hand side has {rhs}")]
    Dimension { rows: usize, cols: usize, rhs: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("iterative solver broke down at iteration {0}")]
    Breakdown(usize),
}

/// Square or rectangular sparse matrix in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from (row, col, value) triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0; n_rows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut i = 0;
        while i < t.len() {
            let (r, c, mut v) = t[i];
            i += 1;
            while i < t.len() && t[i].0 == r && t[i].1 == c {
                v += t[i].2;
                i += 1;
            }
            if v != 0.0 {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
            }
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Self { n_rows, n_cols, indptr, indices, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|r| self.get(r, r)).collect()
    }

    pub fn transpose(&self) -> Self {
        let t = (0..self.n_rows).flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v))).collect();
        Self::from_triplets(self.n_cols, self.n_rows, t)
    }

    /// Largest |a_ij - a_ji| relative to the largest |a_ij|.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - t.get(r, c)).abs());
            }
        }
        worst / scale
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n_rows).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }

    /// Coordinate text export, one `row col value` line per stored entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.triplets() {
            s.push_str(&format!("{r} {c} {v:.16e}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Auto,
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_iter: usize,
    pub method: Method,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-14, max_iter: 10_000, method: Method::Auto }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearReport {
    pub direct: bool,
    pub iterations: usize,
    pub residual: f64,
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.matvec(x);
    b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
}

/// Solve `a x = b`. Small systems are factorized; large ones use BiCGStab
/// with a diagonal preconditioner.
pub fn linear_solve(a: &CsrMatrix, b: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, LinearReport), SolverError> {
    if a.n_rows != a.n_cols || b.len() != a.n_rows {
        return Err(SolverError::Dimension { rows: a.n_rows, cols: a.n_cols, rhs: b.len() });
    }
    let direct = match opts.method {
        Method::Direct => true,
        Method::Iterative => false,
        Method::Auto => a.n_rows < DIRECT_LIMIT,
    };
    if direct {
        direct_solve(a, b, opts)
    } else {
        bicgstab(a, b, opts)
    }
}

fn direct_solve(a: &CsrMatrix, b: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, LinearReport), SolverError> {
    let n = a.n_rows;
    if n == 0 {
        return Ok((Vec::new(), LinearReport { direct: true, iterations: 0, residual: 0.0 }));
    }
    let trip: Vec<_> = a.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip).map_err(|_| SolverError::Singular)?;
    // faer panics on an exact zero pivot instead of returning an error
    let lu = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| m.sp_lu()))
        .map_err(|_| SolverError::Singular)?
        .map_err(|_| SolverError::Singular)?;
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let mut col = faer::Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        lu.solve_in_place(col.as_mut());
        (0..n).map(|i| col[(i, 0)]).collect()
    };
    let mut x = solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::Singular);
    }
    let bnorm = norm2(b);
    let mut r = residual(a, &x, b);
    // two steps of iterative refinement recover digits lost to pivot growth
    for _ in 0..2 {
        if norm2(&r) <= 1e-3 * opts.rtol * bnorm + opts.atol {
            break;
        }
        let dx = solve(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
        r = residual(a, &x, b);
    }
    let res = norm2(&r);
    if !(res <= opts.rtol * bnorm + opts.atol) {
        return Err(SolverError::NotConverged { iterations: 0, residual: res / bnorm.max(f64::MIN_POSITIVE) });
    }
    Ok((x, LinearReport { direct: true, iterations: 0, residual: res }))
}

fn bicgstab(a: &CsrMatrix, b: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, LinearReport), SolverError> {
    let n = a.n_rows;
    let dinv: Vec<f64> = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&dinv).map(|(x, d)| x * d).collect() };
    let bnorm = norm2(b);
    let tol = opts.rtol * bnorm + opts.atol;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    if norm2(&r) <= tol {
        return Ok((x, LinearReport { direct: false, iterations: 0, residual: norm2(&r) }));
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(SolverError::Breakdown(it));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let y = precond(&p);
        v = a.matvec(&y);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            return Err(SolverError::Breakdown(it));
        }
        alpha = rho / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm2(&s) <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            let res = norm2(&residual(a, &x, b));
            if res <= tol {
                return Ok((x, LinearReport { direct: false, iterations: it, residual: res }));
            }
            r = residual(a, &x, b);
            continue;
        }
        let z = precond(&s);
        let t = a.matvec(&z);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) <= tol {
            let res = norm2(&residual(a, &x, b));
            if res <= tol {
                return Ok((x, LinearReport { direct: false, iterations: it, residual: res }));
            }
            r = residual(a, &x, b);
        }
    }
    let res = norm2(&residual(a, &x, b));
    Err(SolverError::NotConverged { iterations: opts.max_iter, residual: res / bnorm.max(f64::MIN_POSITIVE) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Problem scale the relative tolerance refers to.
    pub scale: f64,
    pub max_iter: usize,
    pub min_relaxation: f64,
}

impl Default for NonlinearOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, scale: 1.0, max_iter: 200, min_relaxation: 1.0 / 16.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearReport {
    pub iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub converged: bool,
    pub relaxation: Vec<f64>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY })
}

/// Relaxed fixed-point iteration x <- x + ω (update(x) - x).
///
/// ω starts at 1 and is halved (down to `min_relaxation`) whenever a step
/// would increase the max-norm of the residual. Non-finite residuals count
/// as increases, so `residual` can reject inadmissible states by returning NaN.
pub fn fixed_point_solve<R, U, E>(
    mut residual: R,
    mut update: U,
    x0: Vec<f64>,
    opts: &NonlinearOptions,
) -> Result<(Vec<f64>, NonlinearReport), E>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>, E>,
    U: FnMut(&[f64], &[f64]) -> Result<Vec<f64>, E>,
{
    let tol = opts.rtol * opts.scale + opts.atol;
    let mut x = x0;
    let mut r = residual(&x)?;
    let mut rn = max_abs(&r);
    let mut report = NonlinearReport { iterations: 0, residual: rn, tolerance: tol, converged: rn <= tol, relaxation: Vec::new() };
    while !report.converged && report.iterations < opts.max_iter {
        let target = update(&x, &r)?;
        let mut omega = 1.0;
        loop {
            let trial: Vec<f64> =
                if omega == 1.0 { target.clone() } else { x.iter().zip(&target).map(|(a, b)| a + omega * (b - a)).collect() };
            let rt = residual(&trial)?;
            let rtn = max_abs(&rt);
            if rtn <= rn || omega <= opts.min_relaxation {
                if rtn.is_finite() {
                    x = trial;
                    r = rt;
                    rn = rtn;
                }
                break;
            }
            omega *= 0.5;
        }
        report.relaxation.push(omega);
        report.iterations += 1;
        report.residual = rn;
        report.converged = rn <= tol;
        if !rn.is_finite() {
            break;
        }
    }
    Ok((x, report))
}
