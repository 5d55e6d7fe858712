//! Homogenized tensor, flux residual `M_k` and its antisymmetric potential
//! `B_k` with `div B_k = M_k`.
//!
//! `M_k` is a face field: component `i` lives on `i`-faces. The potential
//! is built from `Δφ^i = M^i` on the same shifted lattices, and `B^{ij} =
//! D⁺_j φ^i − D⁺_i φ^j` sits at edge centers `x + h/2 (e_i + e_j)`. With
//! backward differences for `div B`, the identity `div B = M` then holds to
//! solver precision on periodic cells.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::coefficients::{Coefficient, ConstantCoefficient, CoefficientSpec};
use crate::correctors::{
    defect_box_grid, oscillation_exponent, solve_defect_corrector, solve_periodic_corrector, CorrectorSet,
    DefectMethod, OscillationFit,
};
use crate::error::{Error, Result};
use crate::grid::{partial, Grid, GridField};
use crate::solver::{assemble, face_divergence, forward_difference, solve, SolverOptions, SolverReport};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogenizedTensor {
    pub matrix: Vec<Vec<f64>>,
    pub cell_resolution: usize,
    pub spec_hash: String,
    /// `max |a*_ik − a*_ki|`.
    pub asymmetry: f64,
    pub eigenvalues: Vec<f64>,
    /// Spectrum inside `[1/mu, mu]`.
    pub elliptic: bool,
}

impl HomogenizedTensor {
    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    /// Diagonal scalar `a*` for constant isotropic tensors, e.g. the 1D case.
    pub fn scalar(&self) -> f64 {
        self.matrix[0][0]
    }

    pub fn quadratic_form(&self, xi: &[f64]) -> f64 {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|k| xi[i] * self.matrix[i][k] * xi[k]).sum::<f64>())
            .sum()
    }
}

/// Face flux `a_f (δ_ik + D⁺_i w_k)` for all `i`, as a face field.
fn corrector_flux(coef: &dyn Coefficient, w: &GridField, k: usize) -> GridField {
    let g = &w.grid;
    let d = g.dim;
    let grads: Vec<Vec<f64>> = (0..d).map(|i| forward_difference(g, &w.data, i)).collect();
    let mut x = vec![0.0; d];
    let mut data = vec![0.0; g.len() * d];
    for n in 0..g.len() {
        g.coords(n, &mut x);
        for i in 0..d {
            let xi = x[i];
            x[i] += 0.5 * g.spacing[i];
            let a = coef.eval(&x);
            x[i] = xi;
            let delta = if i == k { 1.0 } else { 0.0 };
            data[n * d + i] = a * (delta + grads[i][n]);
        }
    }
    GridField {
        grid: g.clone(),
        components: d,
        data,
    }
}

fn tensor_certificates(spec: &CoefficientSpec, matrix: Vec<Vec<f64>>, cell_resolution: usize) -> HomogenizedTensor {
    let d = matrix.len();
    let mut asymmetry = 0.0f64;
    for i in 0..d {
        for k in 0..d {
            asymmetry = asymmetry.max((matrix[i][k] - matrix[k][i]).abs());
        }
    }
    let sym = DMatrix::from_fn(d, d, |i, k| 0.5 * (matrix[i][k] + matrix[k][i]));
    let mut eigenvalues: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().cloned().collect();
    eigenvalues.sort_by(|a, b| a.total_cmp(b));
    let elliptic = eigenvalues.iter().all(|&l| l >= 1.0 / spec.mu && l <= spec.mu);
    HomogenizedTensor {
        matrix,
        cell_resolution,
        spec_hash: spec.content_hash(),
        asymmetry,
        eigenvalues,
        elliptic,
    }
}

/// `a*_ik` = cell mean of `a_per,f (δ_ik + D⁺_i w_per_k)` over `i`-faces.
pub fn homogenized_tensor(spec: &CoefficientSpec, w_per: &[GridField]) -> Result<HomogenizedTensor> {
    let d = spec.dim;
    if w_per.len() != d {
        return Err(Error::config("need one periodic corrector per direction"));
    }
    let n = w_per[0].grid.extents[0];
    let a_per = spec.periodic_view();
    let mut matrix = vec![vec![0.0; d]; d];
    for k in 0..d {
        let flux = corrector_flux(&a_per, &w_per[k], k);
        let count = flux.grid.len() as f64;
        for (i, row) in matrix.iter_mut().enumerate() {
            row[k] = (0..flux.grid.len()).map(|m| flux.data[m * d + i]).sum::<f64>() / count;
        }
    }
    Ok(tensor_certificates(spec, matrix, n))
}

/// Solve the periodic correctors and return `a*` with them.
pub fn compute_homogenized_tensor(
    spec: &CoefficientSpec,
    cell_resolution: usize,
    options: &SolverOptions,
) -> Result<(HomogenizedTensor, Vec<GridField>)> {
    let w: Vec<GridField> = (0..spec.dim)
        .map(|j| solve_periodic_corrector(spec, cell_resolution, j, options).map(|(w, _)| w))
        .collect::<Result<_>>()?;
    Ok((homogenized_tensor(spec, &w)?, w))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeEntry {
    pub radius: f64,
    pub with_defect: Vec<Vec<f64>>,
    pub without_defect: Vec<Vec<f64>>,
    pub discrepancy: f64,
}

/// Oversampled tensor: mean over the `i`-faces of the box of
/// `a_f (δ_ik + D⁺_i (w_per_k + w̃_k))`.
fn oversampled_tensor(coef: &dyn Coefficient, w_per: &[GridField], w_tilde: Option<&[GridField]>, grid: &Grid) -> Vec<Vec<f64>> {
    let d = grid.dim;
    let mut out = vec![vec![0.0; d]; d];
    for k in 0..d {
        let mut total = GridField::from_fn(grid, |y| w_per[k].sample(y).expect("periodic sampling is total"));
        if let Some(wt) = w_tilde {
            for (t, v) in total.data.iter_mut().zip(&wt[k].data) {
                *t += v;
            }
        }
        let flux = corrector_flux(coef, &total, k);
        for (i, row) in out.iter_mut().enumerate() {
            let s = grid.stride(i);
            let ni = grid.extents[i];
            let (mut acc, mut count) = (0.0, 0usize);
            for m in 0..grid.len() {
                // Faces with both endpoints in the box.
                if (m / s) % ni + 1 == ni {
                    continue;
                }
                acc += flux.data[m * d + i];
                count += 1;
            }
            row[k] = acc / count as f64;
        }
    }
    out
}

/// `|a*_R(with ã) − a*_R(without ã)|_max` for each truncation radius, using
/// Dirichlet-box defect correctors.
pub fn defect_invariance_probe(
    spec: &CoefficientSpec,
    radii: &[f64],
    cell_resolution: usize,
    options: &SolverOptions,
) -> Result<Vec<ProbeEntry>> {
    if radii.len() < 3 {
        return Err(Error::config("defect invariance probe needs at least 3 radii"));
    }
    let d = spec.dim;
    let w_per: Vec<GridField> = (0..d)
        .map(|j| solve_periodic_corrector(spec, cell_resolution, j, options).map(|(w, _)| w))
        .collect::<Result<_>>()?;
    let periodic_spec = spec.without_defect();
    let mut entries = Vec::with_capacity(radii.len());
    for &radius in radii {
        let grid = defect_box_grid(d, radius, cell_resolution)?;
        let without = oversampled_tensor(&periodic_spec, &w_per, None, &grid);
        let with = if spec.has_defect() {
            let wt: Vec<GridField> = (0..d)
                .map(|j| {
                    solve_defect_corrector(spec, &w_per[j], radius, cell_resolution, j, DefectMethod::DirichletBox, options)
                        .map(|(w, _)| w)
                })
                .collect::<Result<_>>()?;
            oversampled_tensor(spec, &w_per, Some(&wt), &grid)
        } else {
            without.clone()
        };
        let discrepancy = (0..d)
            .flat_map(|i| (0..d).map(move |k| (i, k)))
            .map(|(i, k)| (with[i][k] - without[i][k]).abs())
            .fold(0.0, f64::max);
        entries.push(ProbeEntry {
            radius: grid.bounds().hi[0],
            with_defect: with,
            without_defect: without,
            discrepancy,
        });
    }
    Ok(entries)
}

/// `M_k` for one direction `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxResidual {
    pub k: usize,
    /// Periodic part on the cell, face field.
    pub cell: GridField,
    /// Defect part `M_full − M_per` on the truncation box, face field.
    pub defect: Option<GridField>,
    /// `max |D⁻·M|` of the cell face field (solver-level).
    pub staggered_divergence: f64,
    /// `max |div M|` of the nodal representative
    /// `A*_ik − a(δ_ik + ∂_i w_k)` with central differences; `O(h²)`.
    pub nodal_divergence: f64,
}

/// `M_k^i = A*_ik − a (δ_ik + ∂_i w_k)`.
pub fn flux_residual(
    spec: &CoefficientSpec,
    set: &CorrectorSet,
    astar: &HomogenizedTensor,
    k: usize,
) -> Result<FluxResidual> {
    let d = spec.dim;
    if k >= d || set.dim != d || astar.dim() != d {
        return Err(Error::config("flux residual: inconsistent dimensions"));
    }
    let a_per = spec.periodic_view();
    let wk = &set.periodic[k];
    let flux = corrector_flux(&a_per, wk, k);
    let mut cell = flux.clone();
    for m in 0..cell.grid.len() {
        for i in 0..d {
            cell.data[m * d + i] = astar.matrix[i][k] - flux.data[m * d + i];
        }
    }
    let staggered_divergence = face_divergence(&cell).iter().fold(0.0f64, |m, v| m.max(v.abs()));

    // Nodal representative.
    let g = &wk.grid;
    let mut x = vec![0.0; d];
    let mut nodal_div = vec![0.0; g.len()];
    for i in 0..d {
        let di = partial(g, &wk.data, i);
        let comp: Vec<f64> = (0..g.len())
            .map(|m| {
                g.coords(m, &mut x);
                let delta = if i == k { 1.0 } else { 0.0 };
                astar.matrix[i][k] - a_per.eval(&x) * (delta + di[m])
            })
            .collect();
        for (o, v) in nodal_div.iter_mut().zip(partial(g, &comp, i)) {
            *o += v;
        }
    }
    let nodal_divergence = nodal_div.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let defect = match &set.defect[k] {
        Some(wt) => {
            let bg = &wt.grid;
            let periodic_on_box = GridField::from_fn(bg, |y| wk.sample(y).expect("periodic sampling is total"));
            let mut total = periodic_on_box.clone();
            for (t, v) in total.data.iter_mut().zip(&wt.data) {
                *t += v;
            }
            let full = corrector_flux(spec, &total, k);
            let per = corrector_flux(&a_per, &periodic_on_box, k);
            let data = full.data.iter().zip(&per.data).map(|(f, p)| -(f - p)).collect();
            Some(GridField {
                grid: bg.clone(),
                components: d,
                data,
            })
        }
        None => None,
    };
    Ok(FluxResidual {
        k,
        cell,
        defect,
        staggered_divergence,
        nodal_divergence,
    })
}

/// Antisymmetric potential, upper triangle `B^{ij}` (`i < j`) in the order
/// `(0,1), (0,2), (1,2)`; `B^{ji} = −B^{ij}` and `B^{ii} = 0` by storage.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialPart {
    pub upper: Vec<GridField>,
}

impl PotentialPart {
    pub fn dim(&self) -> usize {
        self.upper.first().map_or(1, |f| f.grid.dim)
    }

    pub fn pair_index(dim: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < dim);
        match (dim, i, j) {
            (_, 0, 1) => 0,
            (3, 0, 2) => 1,
            (3, 1, 2) => 2,
            _ => unreachable!("pair ({i},{j}) in dimension {dim}"),
        }
    }

    pub fn pairs(dim: usize) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for i in 0..dim {
            for j in i + 1..dim {
                v.push((i, j));
            }
        }
        v
    }

    /// `B^{ij}` at storage node `node` (located at `x + h/2 (e_i + e_j)`).
    pub fn get(&self, i: usize, j: usize, node: usize) -> f64 {
        use std::cmp::Ordering;
        let d = self.dim();
        match i.cmp(&j) {
            Ordering::Equal => 0.0,
            Ordering::Less => self.upper[Self::pair_index(d, i, j)].data[node],
            Ordering::Greater => -self.upper[Self::pair_index(d, j, i)].data[node],
        }
    }

    /// `B^{ij}(y)`, accounting for the edge-center offset.
    pub fn sample(&self, i: usize, j: usize, y: &[f64]) -> Result<f64> {
        if i == j {
            return Ok(0.0);
        }
        let (a, b, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        let f = &self.upper[Self::pair_index(self.dim(), a, b)];
        let mut z = y.to_vec();
        z[a] -= 0.5 * f.grid.spacing[a];
        z[b] -= 0.5 * f.grid.spacing[b];
        Ok(sign * f.sample(&z)?)
    }

    /// Full `d×d` matrix field with `B^{ji} = −B^{ij}` exactly.
    pub fn to_matrix_field(&self, grid: &Grid) -> GridField {
        let d = grid.dim;
        let mut out = GridField::zeros(grid, d * d);
        for n in 0..grid.len() {
            for i in 0..d {
                for j in 0..d {
                    out.data[n * d * d + i * d + j] = if self.upper.is_empty() { 0.0 } else { self.get(i, j, n) };
                }
            }
        }
        out
    }

    /// Backward-difference divergence `(div B)^i = Σ_j D⁻_j B^{ij}`, a face field.
    pub fn divergence(&self, grid: &Grid) -> GridField {
        let d = grid.dim;
        let mut out = GridField::zeros(grid, d);
        if self.upper.is_empty() {
            return out;
        }
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let bij: Vec<f64> = (0..grid.len()).map(|n| self.get(i, j, n)).collect();
                // Scalar face field along j carrying B^{ij}.
                let mut comp = GridField::zeros(grid, d);
                for n in 0..grid.len() {
                    comp.data[n * d + j] = bij[n];
                }
                for (n, v) in face_divergence(&comp).into_iter().enumerate() {
                    out.data[n * d + i] += v;
                }
            }
        }
        out
    }
}

/// `B_k = B_per + B̃` for one direction `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSlice {
    pub k: usize,
    pub cell: PotentialPart,
    pub defect: Option<PotentialPart>,
    /// Gauge: the periodic part has zero mean.
    pub gauge: &'static str,
    pub reports: Vec<SolverReport>,
}

impl PotentialSlice {
    /// `B_k^{ij}(y)`: periodic part plus defect part, zero outside the box.
    pub fn sample(&self, i: usize, j: usize, y: &[f64]) -> f64 {
        if self.cell.upper.is_empty() {
            return 0.0;
        }
        let per = self.cell.sample(i, j, y).expect("periodic sampling is total");
        let def = match &self.defect {
            Some(p) => {
                let b = p.upper[0].grid.bounds();
                let inside = y.iter().zip(b.lo.iter().zip(&b.hi)).all(|(&v, (&lo, &hi))| v >= lo && v <= hi);
                if inside {
                    p.sample(i, j, y).unwrap_or(0.0)
                } else {
                    0.0
                }
            }
            None => 0.0,
        };
        per + def
    }
}

fn potential_part(m: &GridField, options: &SolverOptions, reports: &mut Vec<SolverReport>) -> Result<PotentialPart> {
    let g = &m.grid;
    let d = g.dim;
    if d == 1 {
        return Ok(PotentialPart { upper: Vec::new() });
    }
    let lap = ConstantCoefficient { dim: d, value: 1.0 };
    let mut phi = Vec::with_capacity(d);
    for i in 0..d {
        // −Δφ^i = −M^i on the i-face lattice (same index space as the nodes).
        let rhs = GridField::scalar(g, (0..g.len()).map(|n| -m.data[n * d + i]).collect());
        if rhs.max_abs() == 0.0 {
            phi.push(vec![0.0; g.len()]);
            continue;
        }
        let problem = assemble(&lap, g, None, Some(&rhs), None, g.bc)?;
        let (p, rep) = solve(&problem, options)?;
        reports.push(rep);
        phi.push(p.data);
    }
    let mut upper = Vec::new();
    for (i, j) in PotentialPart::pairs(d) {
        let dj_phi_i = forward_difference(g, &phi[i], j);
        let di_phi_j = forward_difference(g, &phi[j], i);
        let b: Vec<f64> = dj_phi_i.iter().zip(&di_phi_j).map(|(a, b)| a - b).collect();
        upper.push(GridField::scalar(g, b));
    }
    Ok(PotentialPart { upper })
}

/// Potential `B_k` of a flux residual: periodic part on the cell, defect part
/// by Dirichlet truncation on the corrector box.
pub fn solve_potential(m: &FluxResidual, options: &SolverOptions) -> Result<PotentialSlice> {
    let mut reports = Vec::new();
    let cell = potential_part(&m.cell, options, &mut reports)?;
    let defect = match &m.defect {
        Some(md) => Some(potential_part(md, options, &mut reports)?),
        None => None,
    };
    Ok(PotentialSlice {
        k: m.k,
        cell,
        defect,
        gauge: "zero-mean periodic part",
        reports,
    })
}

/// `‖div B − M‖₂ / ‖M‖₂` on the periodic cell (0 when `M ≡ 0`).
pub fn potential_residual(slice: &PotentialSlice, m: &FluxResidual) -> f64 {
    let g = &m.cell.grid;
    let div = slice.cell.divergence(g);
    let num: f64 = div.data.iter().zip(&m.cell.data).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = m.cell.data.iter().map(|v| v * v).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Potential for every direction.
pub fn solve_potentials(
    spec: &CoefficientSpec,
    set: &CorrectorSet,
    astar: &HomogenizedTensor,
    options: &SolverOptions,
) -> Result<(Vec<FluxResidual>, Vec<PotentialSlice>)> {
    let mut ms = Vec::with_capacity(spec.dim);
    let mut bs = Vec::with_capacity(spec.dim);
    for k in 0..spec.dim {
        let m = flux_residual(spec, set, astar, k)?;
        if m.staggered_divergence > 1e-6 {
            log::warn!("div M_{k} = {:e} above tolerance", m.staggered_divergence);
        }
        bs.push(solve_potential(&m, options)?);
        ms.push(m);
    }
    Ok((ms, bs))
}

/// Largest growth exponent of `B_k^{ij}` over all `(i, j, k)` with a
/// nonzero oscillation.
pub fn potential_sublinearity(
    slices: &[PotentialSlice],
    center: &[f64],
    radii: &[f64],
    seed: u64,
) -> Result<f64> {
    let mut best: Option<f64> = None;
    for s in slices {
        let d = center.len();
        for (i, j) in PotentialPart::pairs(d) {
            let f = |y: &[f64]| s.sample(i, j, y);
            match oscillation_exponent(&f, d, center, radii, seed) {
                Ok(OscillationFit { fit, .. }) => best = Some(best.map_or(fit.slope, |b: f64| b.max(fit.slope))),
                Err(Error::DegenerateOscillation) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    best.ok_or(Error::DegenerateOscillation)
}
