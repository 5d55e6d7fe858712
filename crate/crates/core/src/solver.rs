//! Finite-difference divergence-form operators `-div(a ∇u) = f + div g`
//! and their solution by Jacobi-preconditioned conjugate gradients.
//!
//! The flux stencil lives on a staggered layout: `face_coefficients[k][i]`
//! is `a` at the center of the face between node `i` and its `+e_k`
//! neighbour. Staggered vector fields ("face fields") follow the same
//! convention: component `k` is located at `x_i + h_k/2 e_k`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coefficients::Coefficient;
use crate::grid::{Bc, Grid, GridField};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Direct tridiagonal elimination in 1D, PCG otherwise.
    #[default]
    Auto,
    Pcg,
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolveMethod,
    pub preconditioner: Preconditioner,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 200_000,
            method: SolveMethod::Auto,
            preconditioner: Preconditioner::Auto,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    /// Modified incomplete Cholesky on Dirichlet boxes in d ≥ 2, Jacobi otherwise.
    #[default]
    Auto,
    Jacobi,
    /// Modified incomplete Cholesky, MIC(0). Dirichlet problems only.
    Mic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub wall_time_s: f64,
    pub method: SolveMethod,
    pub preconditioner: Preconditioner,
}

/// Assembled discrete problem.
#[derive(Clone, Debug)]
pub struct DiscreteProblem {
    pub grid: Grid,
    pub face_coefficients: Vec<Vec<f64>>,
    /// Constant mixed-derivative terms `(i, k, c)` with `i < k`, contributing
    /// `-c ∂_i ∂_k u` (so `c = a_ik + a_ki` for a constant tensor).
    pub cross: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    pub bc: Bc,
    boundary: Vec<usize>,
}

impl DiscreteProblem {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    /// `y = A x` on the flux stencil alone, every node treated as interior.
    fn apply_stencil(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let g = &self.grid;
        for k in 0..g.dim {
            let n = g.extents[k];
            let s = g.stride(k);
            let inv = 1.0 / (g.spacing[k] * g.spacing[k]);
            let block = n * s;
            let c = &self.face_coefficients[k];
            let faces = match self.bc {
                Bc::Periodic => n,
                Bc::Dirichlet => n - 1,
            };
            for outer in (0..x.len()).step_by(block) {
                for m in 0..faces {
                    let row = outer + m * s;
                    let next = if m + 1 == n { outer } else { row + s };
                    for t in 0..s {
                        let i = row + t;
                        let j = next + t;
                        let flux = c[i] * (x[j] - x[i]) * inv;
                        y[i] -= flux;
                        y[j] += flux;
                    }
                }
            }
        }
        for &(i, k, coef) in &self.cross {
            apply_cross(g, x, y, i, k, coef);
        }
    }

    /// Operator used by the iterative solver: boundary rows of Dirichlet
    /// problems are the identity.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_stencil(x, y);
        for &b in &self.boundary {
            y[b] = x[b];
        }
    }

    /// Discrete `-div(a ∇x)` evaluated with the actual boundary values of
    /// `x`; boundary rows are set to zero.
    pub fn apply_interior(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_stencil(x, &mut y);
        for &b in &self.boundary {
            y[b] = 0.0;
        }
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let g = &self.grid;
        let mut d = vec![0.0; g.len()];
        for k in 0..g.dim {
            let n = g.extents[k];
            let s = g.stride(k);
            let inv = 1.0 / (g.spacing[k] * g.spacing[k]);
            let c = &self.face_coefficients[k];
            let faces = match self.bc {
                Bc::Periodic => n,
                Bc::Dirichlet => n - 1,
            };
            for outer in (0..d.len()).step_by(n * s) {
                for m in 0..faces {
                    let next = if m + 1 == n { 0 } else { m + 1 };
                    for t in 0..s {
                        let i = outer + m * s + t;
                        let j = outer + next * s + t;
                        d[i] += c[i] * inv;
                        d[j] += c[i] * inv;
                    }
                }
            }
        }
        for &b in &self.boundary {
            d[b] = 1.0;
        }
        d
    }

    /// `‖b - A x‖ / ‖b‖` (absolute residual when `b = 0`).
    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; x.len()];
        self.apply(x, &mut ax);
        let mut r: Vec<f64> = self.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        if self.bc == Bc::Periodic {
            project_mean(&mut r);
        }
        let bn = dot(&self.rhs, &self.rhs).sqrt();
        let rn = dot(&r, &r).sqrt();
        if bn > 0.0 {
            rn / bn
        } else {
            rn
        }
    }
}

fn apply_cross(g: &Grid, x: &[f64], y: &mut [f64], a: usize, b: usize, coef: f64) {
    let (sa, sb) = (g.stride(a), g.stride(b));
    let (na, nb) = (g.extents[a], g.extents[b]);
    let scale = coef / (4.0 * g.spacing[a] * g.spacing[b]);
    let mut mi = vec![0usize; g.dim];
    for idx in 0..g.len() {
        g.multi_index(idx, &mut mi);
        let (ia, ib) = (mi[a], mi[b]);
        let shift = |i: usize, n: usize, s: usize, up: bool| -> Option<isize> {
            match (g.bc, up) {
                (Bc::Periodic, true) => Some(if i + 1 == n { -((n - 1) as isize) * s as isize } else { s as isize }),
                (Bc::Periodic, false) => Some(if i == 0 { ((n - 1) * s) as isize } else { -(s as isize) }),
                (Bc::Dirichlet, true) => (i + 1 < n).then_some(s as isize),
                (Bc::Dirichlet, false) => (i > 0).then_some(-(s as isize)),
            }
        };
        let (Some(ap), Some(am), Some(bp), Some(bm)) = (
            shift(ia, na, sa, true),
            shift(ia, na, sa, false),
            shift(ib, nb, sb, true),
            shift(ib, nb, sb, false),
        ) else {
            continue;
        };
        let at = |da: isize, db: isize| x[(idx as isize + da + db) as usize];
        let mixed = at(ap, bp) - at(ap, bm) - at(am, bp) + at(am, bm);
        y[idx] -= scale * mixed;
    }
}

fn boundary_nodes(grid: &Grid) -> Vec<usize> {
    (0..grid.len()).filter(|&i| grid.is_boundary(i)).collect()
}

/// Staggered face field from a function of `(axis, face_center)`.
pub fn face_field_from_fn(grid: &Grid, mut f: impl FnMut(usize, &[f64]) -> f64) -> GridField {
    let d = grid.dim;
    let mut x = vec![0.0; d];
    let mut data = vec![0.0; grid.len() * d];
    for i in 0..grid.len() {
        grid.coords(i, &mut x);
        for k in 0..d {
            let xk = x[k];
            x[k] += 0.5 * grid.spacing[k];
            data[i * d + k] = f(k, &x);
            x[k] = xk;
        }
    }
    GridField {
        grid: grid.clone(),
        components: d,
        data,
    }
}

/// Forward difference `(v[i + e_k] - v[i]) / h_k`, located on `k`-faces.
/// The last face of a Dirichlet axis has no right neighbour and is zero.
pub fn forward_difference(grid: &Grid, v: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.extents[axis];
    let s = grid.stride(axis);
    let inv = 1.0 / grid.spacing[axis];
    let mut out = vec![0.0; v.len()];
    for outer in (0..v.len()).step_by(n * s) {
        for m in 0..n {
            let next = if m + 1 == n {
                match grid.bc {
                    Bc::Periodic => 0,
                    Bc::Dirichlet => continue,
                }
            } else {
                m + 1
            };
            for t in 0..s {
                let i = outer + m * s + t;
                out[i] = (v[outer + next * s + t] - v[i]) * inv;
            }
        }
    }
    out
}

/// Backward divergence `Σ_k (g_k[i] - g_k[i - e_k]) / h_k` of a face field.
/// Dirichlet boundary rows are zero.
pub fn face_divergence(face: &GridField) -> Vec<f64> {
    let grid = &face.grid;
    let d = grid.dim;
    assert_eq!(face.components, d, "face field must have d components");
    let mut out = vec![0.0; grid.len()];
    for k in 0..d {
        let n = grid.extents[k];
        let s = grid.stride(k);
        let inv = 1.0 / grid.spacing[k];
        for outer in (0..out.len()).step_by(n * s) {
            for m in 0..n {
                let prev = if m == 0 {
                    match grid.bc {
                        Bc::Periodic => n - 1,
                        Bc::Dirichlet => continue,
                    }
                } else {
                    m - 1
                };
                for t in 0..s {
                    let i = outer + m * s + t;
                    let j = outer + prev * s + t;
                    out[i] += (face.data[i * d + k] - face.data[j * d + k]) * inv;
                }
            }
        }
    }
    if grid.bc == Bc::Dirichlet {
        for (i, v) in out.iter_mut().enumerate() {
            if grid.is_boundary(i) {
                *v = 0.0;
            }
        }
    }
    out
}

/// Assemble `-div(a(x/scale) ∇u) = f + div g` on `grid`.
///
/// The coefficient is evaluated directly at face centers (divided by
/// `scale` when given); `rhs_flux` is a face field (see module docs).
pub fn assemble(
    coefficient: &dyn Coefficient,
    grid: &Grid,
    scale: Option<f64>,
    rhs_volume: Option<&GridField>,
    rhs_flux: Option<&GridField>,
    bc: Bc,
) -> Result<DiscreteProblem> {
    if bc != grid.bc {
        return Err(Error::config(format!(
            "boundary condition {bc:?} does not match grid ({:?})",
            grid.bc
        )));
    }
    if coefficient.dim() != grid.dim {
        return Err(Error::config("coefficient and grid dimensions differ"));
    }
    if let Some(s) = scale {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::config(format!("scale must be positive, got {s}")));
        }
    }
    let inv_scale = scale.map(|s| 1.0 / s);
    let d = grid.dim;
    let mut faces = vec![vec![0.0; grid.len()]; d];
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    for i in 0..grid.len() {
        grid.coords(i, &mut x);
        for k in 0..d {
            for m in 0..d {
                y[m] = x[m];
            }
            y[k] += 0.5 * grid.spacing[k];
            if let Some(inv) = inv_scale {
                y.iter_mut().for_each(|v| *v *= inv);
            }
            let a = coefficient.eval(&y);
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::config(format!("non-positive coefficient {a} at {y:?}")));
            }
            faces[k][i] = a;
        }
    }
    build_problem(grid, faces, Vec::new(), rhs_volume, rhs_flux)
}

/// Assemble `-div(A ∇u) = f` for a constant symmetric tensor `A`.
pub fn assemble_constant_tensor(
    tensor: &[Vec<f64>],
    grid: &Grid,
    rhs_volume: Option<&GridField>,
) -> Result<DiscreteProblem> {
    let d = grid.dim;
    if tensor.len() != d || tensor.iter().any(|row| row.len() != d) {
        return Err(Error::config("tensor shape must be d x d"));
    }
    let faces: Vec<Vec<f64>> = (0..d).map(|k| vec![tensor[k][k]; grid.len()]).collect();
    if (0..d).any(|k| !(tensor[k][k] > 0.0)) {
        return Err(Error::config("tensor diagonal must be positive"));
    }
    let scale = (0..d).map(|k| tensor[k][k].abs()).fold(0.0, f64::max);
    let mut cross = Vec::new();
    for i in 0..d {
        for k in i + 1..d {
            let c = tensor[i][k] + tensor[k][i];
            if c.abs() > 1e-14 * scale {
                cross.push((i, k, c));
            }
        }
    }
    build_problem(grid, faces, cross, rhs_volume, None)
}

fn build_problem(
    grid: &Grid,
    faces: Vec<Vec<f64>>,
    cross: Vec<(usize, usize, f64)>,
    rhs_volume: Option<&GridField>,
    rhs_flux: Option<&GridField>,
) -> Result<DiscreteProblem> {
    let mut rhs = vec![0.0; grid.len()];
    if let Some(f) = rhs_volume {
        if f.grid != *grid || f.components != 1 {
            return Err(Error::config("rhs_volume must be a scalar field on the problem grid"));
        }
        rhs.copy_from_slice(&f.data);
    }
    if let Some(g) = rhs_flux {
        if g.grid != *grid || g.components != grid.dim {
            return Err(Error::config("rhs_flux must be a face field on the problem grid"));
        }
        for (r, v) in rhs.iter_mut().zip(face_divergence(g)) {
            *r += v;
        }
    }
    let boundary = match grid.bc {
        Bc::Dirichlet => boundary_nodes(grid),
        Bc::Periodic => Vec::new(),
    };
    for &b in &boundary {
        rhs[b] = 0.0;
    }
    if grid.bc == Bc::Periodic {
        project_mean(&mut rhs);
    }
    Ok(DiscreteProblem {
        grid: grid.clone(),
        face_coefficients: faces,
        cross,
        rhs,
        bc: grid.bc,
        boundary,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent partial sums; fixed order keeps results deterministic.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn project_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

const DIRECT_RESIDUAL_FLOOR: f64 = 1e-7;

/// Solve the assembled problem. Periodic solutions are returned with zero mean.
pub fn solve(problem: &DiscreteProblem, options: &SolverOptions) -> Result<(GridField, SolverReport)> {
    if !(options.tol > 0.0 && options.tol < 1.0) {
        return Err(Error::config(format!("tol must lie in (0, 1), got {}", options.tol)));
    }
    let start = Instant::now();
    let method = match options.method {
        SolveMethod::Auto if problem.grid.dim == 1 && problem.cross.is_empty() => SolveMethod::Direct,
        SolveMethod::Auto => SolveMethod::Pcg,
        m => m,
    };
    let (mut x, iterations) = match method {
        SolveMethod::Direct => {
            if problem.grid.dim != 1 {
                return Err(Error::config("direct solver is only available in 1D"));
            }
            (solve_tridiagonal(problem), 1)
        }
        _ => pcg(problem, options)?,
    };
    let preconditioner = match method {
        SolveMethod::Direct => Preconditioner::Auto,
        _ => resolve_preconditioner(problem, options.preconditioner),
    };
    if problem.bc == Bc::Periodic {
        project_mean(&mut x);
    }
    let relative_residual = problem.relative_residual(&x);
    // elimination is exact up to rounding; its residual floor grows like 1/h²
    let limit = match method {
        SolveMethod::Direct => options.tol.max(DIRECT_RESIDUAL_FLOOR),
        _ => options.tol,
    };
    if !(relative_residual <= limit) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence {
            iterations,
            residual: relative_residual,
        });
    }
    let report = SolverReport {
        iterations,
        relative_residual,
        wall_time_s: start.elapsed().as_secs_f64(),
        method,
        preconditioner,
    };
    Ok((GridField::scalar(&problem.grid, x), report))
}

fn resolve_preconditioner(problem: &DiscreteProblem, requested: Preconditioner) -> Preconditioner {
    match requested {
        Preconditioner::Auto if problem.bc == Bc::Dirichlet && problem.grid.dim >= 2 => Preconditioner::Mic,
        Preconditioner::Auto => Preconditioner::Jacobi,
        p => p,
    }
}

enum Precond {
    Jacobi(Vec<f64>),
    Mic(Mic),
}

impl Precond {
    fn build(problem: &DiscreteProblem, requested: Preconditioner) -> Result<Self> {
        match resolve_preconditioner(problem, requested) {
            Preconditioner::Mic => {
                if problem.bc != Bc::Dirichlet {
                    return Err(Error::config("MIC preconditioner needs Dirichlet boundary conditions"));
                }
                Ok(Precond::Mic(Mic::new(problem)))
            }
            _ => Ok(Precond::Jacobi(problem.diagonal().iter().map(|d| 1.0 / d).collect())),
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Jacobi(inv) => {
                for i in 0..r.len() {
                    z[i] = r[i] * inv[i];
                }
            }
            Precond::Mic(m) => m.apply(r, z),
        }
    }
}

/// MIC(0) factor `(D + L) D^-1 (D + L)^T` of the flux stencil, built on
/// lexicographic order. Cross terms, if any, are left to the Krylov iteration.
struct Mic {
    strides: Vec<usize>,
    /// Off-diagonal entry between `i` and `i + e_k` (zero when either node
    /// is on the boundary), times the pivot factor of `i`.
    scaled: Vec<Vec<f64>>,
    /// `1 / sqrt(pivot)`.
    inv_sqrt: Vec<f64>,
}

impl Mic {
    const TAU: f64 = 0.97;
    const SIGMA: f64 = 0.25;

    fn new(problem: &DiscreteProblem) -> Self {
        let g = &problem.grid;
        let n = g.len();
        let d = g.dim;
        let diag = problem.diagonal();
        let is_bnd: Vec<bool> = (0..n).map(|i| g.is_boundary(i)).collect();
        let strides: Vec<usize> = (0..d).map(|k| g.stride(k)).collect();
        let mut coupling = vec![vec![0.0; n]; d];
        for k in 0..d {
            let inv = 1.0 / (g.spacing[k] * g.spacing[k]);
            let s = strides[k];
            for i in 0..n {
                if is_bnd[i] || i + s >= n || is_bnd[i + s] {
                    continue;
                }
                coupling[k][i] = -problem.face_coefficients[k][i] * inv;
            }
        }
        let mut inv_sqrt = vec![0.0; n];
        for i in 0..n {
            if is_bnd[i] {
                inv_sqrt[i] = 1.0;
                continue;
            }
            let mut e = diag[i];
            for k in 0..d {
                let s = strides[k];
                if i < s {
                    continue;
                }
                let j = i - s;
                let c = coupling[k][j];
                if c == 0.0 {
                    continue;
                }
                let pj = inv_sqrt[j];
                e -= (c * pj) * (c * pj);
                let others: f64 = (0..d).filter(|&m| m != k).map(|m| coupling[m][j]).sum();
                e -= Self::TAU * c * others * pj * pj;
            }
            if e < Self::SIGMA * diag[i] {
                e = diag[i];
            }
            inv_sqrt[i] = 1.0 / e.sqrt();
        }
        let scaled = coupling
            .iter()
            .map(|c| c.iter().zip(&inv_sqrt).map(|(c, p)| c * p).collect())
            .collect();
        Mic {
            strides,
            scaled,
            inv_sqrt,
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let p = &self.inv_sqrt;
        // `cp[k][i] = coupling[k][i] * p[i]` is the strictly upper factor entry.
        let cp = &self.scaled;
        for i in 0..n {
            let mut t = r[i];
            for (k, &s) in self.strides.iter().enumerate() {
                if i >= s {
                    t -= cp[k][i - s] * z[i - s];
                }
            }
            z[i] = t * p[i];
        }
        for i in (0..n).rev() {
            let mut t = z[i];
            for (k, &s) in self.strides.iter().enumerate() {
                if i + s < n {
                    t -= cp[k][i] * z[i + s];
                }
            }
            z[i] = t * p[i];
        }
    }
}

fn pcg(problem: &DiscreteProblem, options: &SolverOptions) -> Result<(Vec<f64>, usize)> {
    let n = problem.len();
    let periodic = problem.bc == Bc::Periodic;
    let b = &problem.rhs;
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let precond = Precond::build(problem, options.preconditioner)?;
    let mut r = b.clone();
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut total = 0usize;
    let target = options.tol * bnorm;

    // Restart from the true residual if the recurrence drifts.
    for _restart in 0..4 {
        problem.apply(&x, &mut ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        if periodic {
            project_mean(&mut r);
        }
        if dot(&r, &r).sqrt() <= target {
            return Ok((x, total));
        }
        precond.apply(&r, &mut z);
        if periodic {
            project_mean(&mut z);
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        loop {
            if total >= options.max_iter {
                let res = dot(&r, &r).sqrt() / bnorm;
                return Err(Error::NoConvergence {
                    iterations: total,
                    residual: res,
                });
            }
            problem.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if periodic {
                project_mean(&mut r);
            }
            total += 1;
            if dot(&r, &r).sqrt() <= 0.5 * target {
                break;
            }
            precond.apply(&r, &mut z);
            if periodic {
                project_mean(&mut z);
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
    Ok((x, total))
}

/// Thomas elimination for 1D problems. Periodic problems pin node 0, solve
/// the remaining nonsingular tridiagonal system, and rely on the caller to
/// remove the mean.
fn solve_tridiagonal(problem: &DiscreteProblem) -> Vec<f64> {
    let g = &problem.grid;
    let n = g.extents[0];
    let inv = 1.0 / (g.spacing[0] * g.spacing[0]);
    let c = &problem.face_coefficients[0];
    let b = &problem.rhs;
    let mut x = vec![0.0; n];
    // Unknowns 1..m_end (exclusive); for Dirichlet the last node is fixed too.
    let m_end = match problem.bc {
        Bc::Dirichlet => n - 1,
        Bc::Periodic => n,
    };
    let m = m_end - 1;
    if m == 0 {
        return x;
    }
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for (row, i) in (1..m_end).enumerate() {
        let left = c[i - 1] * inv;
        let right = if i + 1 < n { c[i] * inv } else { c[n - 1] * inv };
        diag[row] = left + right;
        lower[row] = -left;
        upper[row] = -right;
        rhs[row] = b[i];
    }
    // Forward sweep.
    for row in 1..m {
        let w = lower[row] / diag[row - 1];
        diag[row] -= w * upper[row - 1];
        rhs[row] -= w * rhs[row - 1];
    }
    let mut sol = vec![0.0; m];
    sol[m - 1] = rhs[m - 1] / diag[m - 1];
    for row in (0..m - 1).rev() {
        sol[row] = (rhs[row] - upper[row] * sol[row + 1]) / diag[row];
    }
    x[1..m_end].copy_from_slice(&sol);
    x
}
