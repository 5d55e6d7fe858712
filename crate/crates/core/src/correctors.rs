//! Correctors `w_j = w_per_j + w̃_j`: the periodic cell problem, the
//! defect problem on a truncation box, and their growth rate.
//!
//! Directions are 0-based in code (`j ∈ 0..d`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coefficients::{Coefficient, CoefficientSpec};
use crate::error::{Error, Result};
use crate::fit::{fit_log_log, SlopeFit};
use crate::grid::{gradient, Bc, Grid, GridField, Region};
use crate::solver::{assemble, face_field_from_fn, forward_difference, solve, SolverOptions, SolverReport};

/// Smallest admissible cell resolution (nodes per period).
pub const MIN_CELL_RESOLUTION: usize = 16;

/// Smallest admissible truncation radius, in periods.
pub const MIN_TRUNCATION_RADIUS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DefectMethod {
    /// Closed form in 1D, Dirichlet truncation box otherwise.
    #[default]
    Auto,
    /// Whole-line discrete closed form (1D only), anchored at `w̃(0) = 0`.
    ClosedForm,
    /// Homogeneous Dirichlet data on `[-R, R]^d`.
    DirichletBox,
}

fn check_direction(dim: usize, j: usize) -> Result<()> {
    if j >= dim {
        return Err(Error::config(format!("direction {j} out of range for dimension {dim}")));
    }
    Ok(())
}

/// Periodic corrector: `-div(a_per ∇w) = div(a_per e_j)` on the unit cell,
/// zero mean.
pub fn solve_periodic_corrector(
    spec: &CoefficientSpec,
    cell_resolution: usize,
    j: usize,
    options: &SolverOptions,
) -> Result<(GridField, SolverReport)> {
    check_direction(spec.dim, j)?;
    if cell_resolution < MIN_CELL_RESOLUTION {
        return Err(Error::config(format!(
            "cell resolution {cell_resolution} below the minimum {MIN_CELL_RESOLUTION}"
        )));
    }
    let grid = Grid::periodic_cell(spec.dim, cell_resolution)?;
    let a_per = spec.periodic_view();
    let flux = face_field_from_fn(&grid, |k, x| if k == j { a_per.eval(x) } else { 0.0 });
    let problem = assemble(&a_per, &grid, None, None, Some(&flux), Bc::Periodic)?;
    solve(&problem, options)
}

/// Face field `δ_kj + D⁺_k w_per` on the periodic cell.
fn periodic_face_gradient(w_per: &GridField, j: usize) -> GridField {
    let g = &w_per.grid;
    let comps: Vec<Vec<f64>> = (0..g.dim)
        .map(|k| {
            let mut v = forward_difference(g, &w_per.data, k);
            if k == j {
                v.iter_mut().for_each(|x| *x += 1.0);
            }
            v
        })
        .collect();
    GridField::from_components(g, &comps)
}

/// `δ_kj + D⁺_k w_per` at the face center `x + h/2 e_k` of a box with
/// spacing `h`, read from the cell face field (exact node lookup when the
/// two lattices are aligned).
fn cell_face_value(cell_faces: &GridField, k: usize, x: &[f64], h: f64, buf: &mut [f64]) -> f64 {
    buf.copy_from_slice(x);
    buf[k] += 0.5 * h - 0.5 * cell_faces.grid.spacing[k];
    cell_faces
        .sample_component(k, buf)
        .expect("periodic sampling is total")
}

/// Dirichlet truncation box `[-R, R]^d` with spacing `1/box_resolution`;
/// `R` is rounded up to a multiple of the spacing.
pub fn defect_box_grid(dim: usize, radius: f64, box_resolution: usize) -> Result<Grid> {
    if box_resolution < 2 {
        return Err(Error::config("box resolution must be at least 2 nodes per unit"));
    }
    let h = 1.0 / box_resolution as f64;
    let m = (radius * box_resolution as f64 - 1e-9).ceil() as usize;
    let n = 2 * m + 1;
    Grid::new(vec![n; dim], vec![-(m as f64) * h; dim], vec![h; dim], Bc::Dirichlet)
}

fn check_box(spec: &CoefficientSpec, radius: f64) -> Result<()> {
    if !(radius >= MIN_TRUNCATION_RADIUS) {
        return Err(Error::config(format!(
            "truncation radius {radius} below {MIN_TRUNCATION_RADIUS} periods"
        )));
    }
    let center = spec.defect.center(spec.dim);
    if center.iter().any(|c| c.abs() > 0.5 * radius) {
        return Err(Error::DefectNotCentered { center, radius });
    }
    Ok(())
}

/// Discrete `a*` in 1D from the periodic corrector: the cell mean of the
/// face flux `a_per,f (1 + D⁺w_per)`.
fn astar_1d(spec: &CoefficientSpec, w_per: &GridField) -> f64 {
    let g = &w_per.grid;
    let faces = periodic_face_gradient(w_per, 0);
    let h = g.spacing[0];
    let n = g.len();
    (0..n)
        .map(|i| spec.eval_periodic(&[(i as f64 + 0.5) * h]) * faces.data[i])
        .sum::<f64>()
        / n as f64
}

/// Defect corrector `w̃_j` solving `-div(a ∇w̃) = div(ã (e_j + ∇w_per_j))`.
///
/// The Dirichlet path returns the solution on `[-R, R]^d` with zero boundary
/// values. The 1D closed form instead integrates the whole-line discrete
/// flux identity `a_f (1 + D⁺w_per + D⁺w̃) = a*` from `w̃(0) = 0`; that field
/// does not vanish at `±R`, and it is exact on the whole line rather than
/// an `O(1/R)` truncation of it.
pub fn solve_defect_corrector(
    spec: &CoefficientSpec,
    w_per: &GridField,
    truncation_radius: f64,
    box_resolution: usize,
    j: usize,
    method: DefectMethod,
    options: &SolverOptions,
) -> Result<(GridField, Option<SolverReport>)> {
    check_direction(spec.dim, j)?;
    check_box(spec, truncation_radius)?;
    if w_per.grid.bc != Bc::Periodic || w_per.grid.dim != spec.dim {
        return Err(Error::config("w_per must be a periodic cell field of the spec's dimension"));
    }
    let grid = defect_box_grid(spec.dim, truncation_radius, box_resolution)?;
    if !spec.has_defect() {
        return Ok((GridField::zeros(&grid, 1), None));
    }
    let method = match method {
        DefectMethod::Auto if spec.dim == 1 => DefectMethod::ClosedForm,
        DefectMethod::Auto => DefectMethod::DirichletBox,
        m => m,
    };
    let cell_faces = periodic_face_gradient(w_per, j);
    let h = grid.spacing[0];
    match method {
        DefectMethod::ClosedForm => {
            if spec.dim != 1 {
                return Err(Error::config("closed-form defect corrector is 1D only"));
            }
            let astar = astar_1d(spec, w_per);
            let n = grid.len();
            let mut buf = [0.0];
            let slopes: Vec<f64> = (0..n - 1)
                .map(|m| {
                    let x = grid.coord(0, m);
                    let a = spec.eval(&[x + 0.5 * h]);
                    astar / a - cell_face_value(&cell_faces, 0, &[x], h, &mut buf)
                })
                .collect();
            let anchor = ((-grid.origin[0]) / h).round() as usize;
            let mut w = vec![0.0; n];
            for m in anchor + 1..n {
                w[m] = w[m - 1] + h * slopes[m - 1];
            }
            for m in (0..anchor).rev() {
                w[m] = w[m + 1] - h * slopes[m];
            }
            Ok((GridField::scalar(&grid, w), None))
        }
        _ => {
            let mut buf = vec![0.0; spec.dim];
            let flux = face_field_from_fn(&grid, |k, xf| {
                let defect = spec.eval_defect(xf);
                if defect == 0.0 {
                    return 0.0;
                }
                let mut x = xf.to_vec();
                x[k] -= 0.5 * h;
                defect * cell_face_value(&cell_faces, k, &x, h, &mut buf)
            });
            let problem = assemble(spec, &grid, None, None, Some(&flux), Bc::Dirichlet)?;
            let (w, report) = solve(&problem, options)?;
            Ok((w, Some(report)))
        }
    }
}

/// Periodic and defect correctors in every direction.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorSet {
    pub dim: usize,
    pub cell_resolution: usize,
    pub box_resolution: usize,
    /// Half-width of the truncation box actually used.
    pub truncation_radius: f64,
    pub method: DefectMethod,
    pub periodic: Vec<GridField>,
    /// Central-difference gradients of `periodic`.
    pub periodic_gradients: Vec<GridField>,
    /// `None` when the spec has no defect or in periodic-only mode.
    pub defect: Vec<Option<GridField>>,
}

impl CorrectorSet {
    pub fn compute(
        spec: &CoefficientSpec,
        cell_resolution: usize,
        box_resolution: usize,
        truncation_radius: f64,
        method: DefectMethod,
        options: &SolverOptions,
    ) -> Result<(Self, Vec<SolverReport>)> {
        let mut reports = Vec::new();
        let mut periodic = Vec::with_capacity(spec.dim);
        let mut defect = Vec::with_capacity(spec.dim);
        for j in 0..spec.dim {
            let (w, rep) = solve_periodic_corrector(spec, cell_resolution, j, options)?;
            log::debug!("periodic corrector {j}: {} iterations", rep.iterations);
            reports.push(rep);
            if spec.has_defect() {
                let (wt, rep) =
                    solve_defect_corrector(spec, &w, truncation_radius, box_resolution, j, method, options)?;
                if let Some(rep) = rep {
                    log::debug!("defect corrector {j}: {} iterations", rep.iterations);
                    reports.push(rep);
                }
                defect.push(Some(wt));
            } else {
                defect.push(None);
            }
            periodic.push(w);
        }
        let radius = defect_box_grid(spec.dim, truncation_radius, box_resolution)?.bounds().hi[0];
        Ok((
            Self::from_parts(spec.dim, cell_resolution, box_resolution, radius, method, periodic, defect),
            reports,
        ))
    }

    pub fn from_parts(
        dim: usize,
        cell_resolution: usize,
        box_resolution: usize,
        truncation_radius: f64,
        method: DefectMethod,
        periodic: Vec<GridField>,
        defect: Vec<Option<GridField>>,
    ) -> Self {
        let periodic_gradients = periodic.iter().map(gradient).collect();
        CorrectorSet {
            dim,
            cell_resolution,
            box_resolution,
            truncation_radius,
            method,
            periodic,
            periodic_gradients,
            defect,
        }
    }

    /// The same set with the defect correctors dropped.
    pub fn periodic_only(&self) -> Self {
        CorrectorSet {
            defect: vec![None; self.dim],
            ..self.clone()
        }
    }

    pub fn has_defect(&self) -> bool {
        self.defect.iter().any(Option::is_some)
    }

    /// `w_j(y) = w_per_j(y mod 1) + w̃_j(y)`, with `w̃_j` extended by zero
    /// outside its box.
    pub fn sample(&self, j: usize, y: &[f64]) -> f64 {
        let per = self.periodic[j].sample(y).expect("periodic sampling is total");
        per + self.sample_defect(j, y)
    }

    pub fn sample_defect(&self, j: usize, y: &[f64]) -> f64 {
        match &self.defect[j] {
            Some(field) => {
                let b = field.grid.bounds();
                let tol = 1e-9 * field.grid.spacing[0];
                if y
                    .iter()
                    .zip(b.lo.iter().zip(&b.hi))
                    .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
                {
                    field.sample(y).unwrap_or(0.0)
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }

    /// Largest `|y|_∞` at which the defect part is represented.
    pub fn covered_radius(&self) -> f64 {
        if self.has_defect() {
            self.truncation_radius
        } else {
            f64::INFINITY
        }
    }
}

pub fn sample_corrector(set: &CorrectorSet, j: usize, y: &[f64]) -> f64 {
    set.sample(j, y)
}

/// Fitted growth of an oscillation modulus.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OscillationFit {
    pub radii: Vec<f64>,
    pub oscillation: Vec<f64>,
    pub fit: SlopeFit,
}

fn check_radii(radii: &[f64]) -> Result<()> {
    let increasing = radii.windows(2).all(|w| w[1] > w[0]);
    let positive = radii.first().is_some_and(|&r| r > 0.0);
    if radii.len() < 4 || !increasing || !positive || radii[radii.len() - 1] < 8.0 * radii[0] {
        return Err(Error::InsufficientRadii(radii.to_vec()));
    }
    Ok(())
}

/// Random unit vector in `dim` dimensions.
fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Number of random pairs drawn per radius.
pub const RANDOM_PAIRS: usize = 64;

/// `osc(ρ)`: the largest `|f(x) - f(y)|` over sampled pairs with
/// `ρ/2 ≤ |x - y| ≤ ρ`. Pairs are 64 random ones with `x` in the cube of
/// half-width `ρ/2` around `center`, plus axis-aligned pairs anchored at the
/// center (`c` vs `c ± ρ e_k`, and `c ± ρ/2 e_k` against each other).
pub fn oscillation_modulus(
    f: &dyn Fn(&[f64]) -> f64,
    dim: usize,
    center: &[f64],
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut best = 0.0f64;
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    for _ in 0..RANDOM_PAIRS {
        let dir = unit_vector(rng, dim);
        let t = rng.gen_range(0.5 * radius..=radius);
        for k in 0..dim {
            x[k] = center[k] + rng.gen_range(-0.5 * radius..=0.5 * radius);
            y[k] = x[k] + t * dir[k];
        }
        best = best.max((f(&x) - f(&y)).abs());
    }
    let fc = f(center);
    for k in 0..dim {
        for sign in [-1.0, 1.0] {
            y.copy_from_slice(center);
            y[k] += sign * radius;
            best = best.max((f(&y) - fc).abs());
        }
        x.copy_from_slice(center);
        y.copy_from_slice(center);
        x[k] -= 0.5 * radius;
        y[k] += 0.5 * radius;
        best = best.max((f(&x) - f(&y)).abs());
    }
    best
}

/// Least-squares growth exponent of `osc(ρ)` over `radii`.
pub fn oscillation_exponent(
    f: &dyn Fn(&[f64]) -> f64,
    dim: usize,
    center: &[f64],
    radii: &[f64],
    seed: u64,
) -> Result<OscillationFit> {
    check_radii(radii)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let osc: Vec<f64> = radii
        .iter()
        .map(|&r| oscillation_modulus(f, dim, center, r, &mut rng))
        .collect();
    let scale = osc.iter().cloned().fold(0.0, f64::max);
    if !(scale > 1e-13) {
        return Err(Error::DegenerateOscillation);
    }
    let points: Vec<(f64, f64)> = radii.iter().cloned().zip(osc.iter().cloned()).collect();
    let fit = fit_log_log(&points, false)?;
    Ok(OscillationFit {
        radii: radii.to_vec(),
        oscillation: osc,
        fit,
    })
}

/// Growth exponent of `w_j` about the defect center. Sampled points
/// must stay inside the truncation box: `1.5 ρ_max + 1 ≤ R`.
pub fn sublinearity_exponent(
    set: &CorrectorSet,
    spec: &CoefficientSpec,
    j: usize,
    radii: &[f64],
    seed: u64,
) -> Result<OscillationFit> {
    check_direction(set.dim, j)?;
    check_radii(radii)?;
    let rho_max = radii[radii.len() - 1];
    let needed = 1.5 * rho_max * (set.dim as f64).sqrt() + 1.0;
    if set.has_defect() && set.truncation_radius < needed {
        return Err(Error::config(format!(
            "truncation radius {} too small for radius {rho_max}; need {needed}",
            set.truncation_radius
        )));
    }
    let center = spec.defect.center(spec.dim);
    oscillation_exponent(&|y| set.sample(j, y), set.dim, &center, radii, seed)
}

/// Radius of a box large enough for `sublinearity_exponent` at `rho_max`.
pub fn box_radius_for(dim: usize, rho_max: f64) -> f64 {
    (1.5 * rho_max * (dim as f64).sqrt() + 2.0).ceil()
}

/// Region covered by a set's defect box.
pub fn defect_region(set: &CorrectorSet) -> Option<Region> {
    set.defect.iter().flatten().next().map(|f| f.grid.bounds())
}
