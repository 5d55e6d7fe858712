//! Oscillatory and homogenized solves, the two-scale remainder
//! `R^ε = u^ε − u* − ε Σ_j w_j(x/ε) ∂_j u*`, the flux `H^ε` with
//! `−div(a(x/ε) ∇R^ε) = div H^ε`, and remainder norms.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coefficients::{Coefficient, CoefficientSpec};
use crate::correctors::CorrectorSet;
use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, norm, partial, Bc, Grid, GridField, NormKind, Region};
use crate::homogenization::{HomogenizedTensor, PotentialSlice};
use crate::solver::{assemble, assemble_constant_tensor, solve, SolverOptions, SolverReport};
use crate::sources::Source;

/// Minimum nodes per period of `a(x/ε)` for oscillatory solves.
pub const MIN_NODES_PER_PERIOD: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectorMode {
    /// `w_j = w_per_j + w̃_j`.
    Full,
    /// `w_per_j` only.
    PeriodicOnly,
}

impl CorrectorMode {
    pub fn name(self) -> &'static str {
        match self {
            CorrectorMode::Full => "full",
            CorrectorMode::PeriodicOnly => "periodic_only",
        }
    }
}

/// Outer domain `Ω` and interior subdomain `Ω₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub omega: Region,
    pub omega1: Region,
}

impl Domain {
    /// `Ω = (−1, 1)^d`, `Ω₁ = (−0.5, 0.5)^d`.
    pub fn standard(dim: usize) -> Self {
        Domain {
            omega: Region::cube(dim, -1.0, 1.0),
            omega1: Region::cube(dim, -0.5, 0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.omega.validate()?;
        self.omega1.validate()?;
        if self.omega.dim() != self.omega1.dim() {
            return Err(Error::config("omega and omega1 dimensions differ"));
        }
        let inside = (0..self.omega.dim())
            .all(|k| self.omega1.lo[k] > self.omega.lo[k] && self.omega1.hi[k] < self.omega.hi[k]);
        if !inside {
            return Err(Error::config("omega1 must be compactly contained in omega"));
        }
        Ok(())
    }

    /// Smallest distance from `Ω₁` to `∂Ω`.
    pub fn margin(&self) -> f64 {
        (0..self.omega.dim())
            .map(|k| (self.omega1.lo[k] - self.omega.lo[k]).min(self.omega.hi[k] - self.omega1.hi[k]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Fine grid on `Ω` with `h = ε / nodes_per_period`.
pub fn fine_grid(omega: &Region, eps: f64, nodes_per_period: usize) -> Result<Grid> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::config(format!("eps must lie in (0, 1), got {eps}")));
    }
    Grid::dirichlet_with_spacing(omega, eps / nodes_per_period as f64)
}

fn check_resolution(grid: &Grid, eps: f64) -> Result<()> {
    let limit = eps / MIN_NODES_PER_PERIOD as f64;
    let h = grid.max_spacing();
    if h > limit * (1.0 + 1e-12) {
        return Err(Error::ResolutionTooCoarse {
            h,
            limit,
            nodes_per_period: MIN_NODES_PER_PERIOD,
        });
    }
    Ok(())
}

/// `−div(a(x/ε) ∇u^ε) = f` in `Ω`, `u^ε = 0` on `∂Ω`.
pub fn solve_oscillatory(
    spec: &CoefficientSpec,
    eps: f64,
    f: &Source,
    grid: &Grid,
    options: &SolverOptions,
) -> Result<(GridField, SolverReport)> {
    check_resolution(grid, eps)?;
    f.validate(grid.dim)?;
    let rhs = GridField::from_fn(grid, |x| f.eval(x));
    let problem = assemble(spec, grid, Some(eps), Some(&rhs), None, Bc::Dirichlet)?;
    solve(&problem, options)
}

/// `−div(a* ∇u*) = f` in `Ω`, `u* = 0` on `∂Ω`.
pub fn solve_homogenized(
    astar: &HomogenizedTensor,
    f: &Source,
    grid: &Grid,
    options: &SolverOptions,
) -> Result<(GridField, SolverReport)> {
    if !astar.elliptic {
        return Err(Error::config("homogenized tensor is not elliptic"));
    }
    f.validate(grid.dim)?;
    let rhs = GridField::from_fn(grid, |x| f.eval(x));
    let problem = assemble_constant_tensor(&astar.matrix, grid, Some(&rhs))?;
    solve(&problem, options)
}

fn check_truncation(set: &CorrectorSet, grid: &Grid, eps: f64, mode: CorrectorMode) -> Result<()> {
    if mode == CorrectorMode::PeriodicOnly || !set.has_defect() {
        return Ok(());
    }
    let required = grid.bounds().sup_extent() / eps;
    if set.covered_radius() < required * (1.0 - 1e-12) {
        return Err(Error::TruncationTooSmall {
            radius: set.covered_radius(),
            required,
        });
    }
    Ok(())
}

fn mode_set(set: &CorrectorSet, mode: CorrectorMode) -> std::borrow::Cow<'_, CorrectorSet> {
    match mode {
        CorrectorMode::Full => std::borrow::Cow::Borrowed(set),
        CorrectorMode::PeriodicOnly => std::borrow::Cow::Owned(set.periodic_only()),
    }
}

/// Nodewise `R^ε`.
pub fn assemble_remainder(
    u_eps: &GridField,
    u_star: &GridField,
    set: &CorrectorSet,
    eps: f64,
    mode: CorrectorMode,
) -> Result<GridField> {
    let grid = &u_eps.grid;
    if u_star.grid != *grid {
        return Err(Error::config("u_eps and u_star must share the fine grid"));
    }
    check_truncation(set, grid, eps, mode)?;
    let set = mode_set(set, mode);
    let d = grid.dim;
    let du: Vec<Vec<f64>> = (0..d).map(|j| partial(grid, &u_star.data, j)).collect();
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let data = (0..grid.len())
        .map(|n| {
            grid.coords(n, &mut x);
            for k in 0..d {
                y[k] = x[k] / eps;
            }
            let corr: f64 = (0..d).map(|j| set.sample(j, &y) * du[j][n]).sum();
            u_eps.data[n] - u_star.data[n] - eps * corr
        })
        .collect();
    Ok(GridField::scalar(grid, data))
}

/// `∂_i ∂_k u*` by the gradient op applied twice, indexed `[i][k]`.
pub fn second_derivatives(u_star: &GridField) -> Vec<Vec<Vec<f64>>> {
    let g = &u_star.grid;
    let d = g.dim;
    let first: Vec<Vec<f64>> = (0..d).map(|k| partial(g, &u_star.data, k)).collect();
    (0..d)
        .map(|i| (0..d).map(|k| partial(g, &first[k], i)).collect())
        .collect()
}

/// `H^ε_i = ε Σ_k a w_k ∂_ik u* − ε Σ_{j,k} B_k^{ji} ∂_jk u*`, with `a`, `w`
/// and `B` evaluated at `x/ε`. The potentials satisfy `Σ_j ∂_j B_k^{ij} = M_k^i`,
/// so the transpose appears here.
pub fn assemble_h(
    spec: &CoefficientSpec,
    set: &CorrectorSet,
    potentials: &[PotentialSlice],
    u_star: &GridField,
    eps: f64,
    mode: CorrectorMode,
) -> Result<GridField> {
    let grid = &u_star.grid;
    let d = grid.dim;
    if d >= 2 && potentials.len() != d {
        return Err(Error::config("H needs one potential per direction in d >= 2"));
    }
    check_truncation(set, grid, eps, mode)?;
    let set = mode_set(set, mode);
    let periodic_spec;
    let coef: &CoefficientSpec = match mode {
        CorrectorMode::Full => spec,
        CorrectorMode::PeriodicOnly => {
            periodic_spec = spec.without_defect();
            &periodic_spec
        }
    };
    let hess = second_derivatives(u_star);
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut data = vec![0.0; grid.len() * d];
    let mut w = vec![0.0; d];
    for n in 0..grid.len() {
        grid.coords(n, &mut x);
        for k in 0..d {
            y[k] = x[k] / eps;
        }
        let a = coef.eval(&y);
        for (k, wk) in w.iter_mut().enumerate() {
            *wk = set.sample(k, &y);
        }
        for i in 0..d {
            let mut v: f64 = (0..d).map(|k| a * w[k] * hess[i][k][n]).sum();
            if d >= 2 {
                for (k, slice) in potentials.iter().enumerate() {
                    for j in 0..d {
                        if j == i {
                            continue;
                        }
                        let b = match mode {
                            CorrectorMode::Full => slice.sample(j, i, &y),
                            CorrectorMode::PeriodicOnly => slice.cell.sample(j, i, &y).unwrap_or(0.0),
                        };
                        v -= b * hess[j][k][n];
                    }
                }
            }
            data[n * d + i] = eps * v;
        }
    }
    Ok(GridField {
        grid: grid.clone(),
        components: d,
        data,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResidualIdentity {
    /// `‖LHS − RHS‖₂ / ‖RHS‖₂` over nodes in `Ω₁`.
    pub relative_residual: f64,
    /// Set when `div H^ε` vanishes identically (constant coefficient);
    /// the residual is then reported as 0.
    pub degenerate_rhs: bool,
}

/// Compare `−div(a(x/ε) ∇R^ε)` (flux stencil) with `div H^ε` (central
/// differences) at the interior nodes of `Ω₁`.
pub fn residual_identity_check(
    spec: &CoefficientSpec,
    eps: f64,
    remainder: &GridField,
    h: &GridField,
    omega1: &Region,
) -> Result<ResidualIdentity> {
    let grid = &remainder.grid;
    let constant = spec.periodic.is_constant() && !spec.has_defect();
    let problem = assemble(spec, grid, Some(eps), None, None, Bc::Dirichlet)?;
    let lhs = problem.apply_interior(&remainder.data);
    let rhs = divergence(h).data;
    let mut x = vec![0.0; grid.dim];
    let (mut num, mut den) = (0.0, 0.0);
    let mut any = false;
    for n in 0..grid.len() {
        if grid.is_boundary(n) {
            continue;
        }
        grid.coords(n, &mut x);
        if !omega1.contains(&x) {
            continue;
        }
        any = true;
        num += (lhs[n] - rhs[n]).powi(2);
        den += rhs[n] * rhs[n];
    }
    if !any {
        return Err(Error::EmptySubdomain);
    }
    if constant || den == 0.0 {
        return Ok(ResidualIdentity {
            relative_residual: 0.0,
            degenerate_rhs: true,
        });
    }
    Ok(ResidualIdentity {
        relative_residual: (num / den).sqrt(),
        degenerate_rhs: false,
    })
}

/// Remainder norms of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderNorms {
    /// `‖R^ε‖_{L²(Ω)}`.
    pub l2_remainder: f64,
    /// `‖u^ε − u*‖_{L²(Ω)}`.
    pub l2_difference: f64,
    /// `‖∇R^ε‖_{L²(Ω₁)}`.
    pub h1_remainder_interior: f64,
    /// `‖∇R^ε‖_{L^∞(Ω₁)}`.
    pub linf_grad_remainder_interior: f64,
    /// `‖u^ε − u*‖_{L^∞(Ω)}`.
    pub linf_difference: f64,
    /// `(p, ‖R^ε‖_{L^p(Ω)})`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lp_remainder: Vec<(f64, f64)>,
}

impl RemainderNorms {
    pub const CHANNELS: [&'static str; 5] = [
        "l2_remainder",
        "l2_difference",
        "h1_remainder_interior",
        "linf_grad_remainder_interior",
        "linf_difference",
    ];

    pub fn channel(&self, name: &str) -> Option<f64> {
        Some(match name {
            "l2_remainder" => self.l2_remainder,
            "l2_difference" => self.l2_difference,
            "h1_remainder_interior" => self.h1_remainder_interior,
            "linf_grad_remainder_interior" => self.linf_grad_remainder_interior,
            "linf_difference" => self.linf_difference,
            _ => return None,
        })
    }

    pub fn channels(&self) -> Vec<(&'static str, f64)> {
        Self::CHANNELS
            .iter()
            .map(|&c| (c, self.channel(c).expect("known channel")))
            .collect()
    }

    pub fn max_relative_difference(&self, other: &RemainderNorms) -> f64 {
        self.channels()
            .iter()
            .zip(other.channels())
            .map(|((_, a), (_, b))| {
                let s = a.abs().max(b.abs());
                if s == 0.0 {
                    0.0
                } else {
                    (a - b).abs() / s
                }
            })
            .fold(0.0, f64::max)
    }
}

pub fn remainder_norms(
    remainder: &GridField,
    u_eps: &GridField,
    u_star: &GridField,
    domain: &Domain,
    p_list: &[f64],
) -> Result<RemainderNorms> {
    let diff = GridField::scalar(
        &u_eps.grid,
        u_eps.data.iter().zip(&u_star.data).map(|(a, b)| a - b).collect(),
    );
    let grad = gradient(remainder);
    let omega = Some(&domain.omega);
    let omega1 = Some(&domain.omega1);
    let mut lp = Vec::with_capacity(p_list.len());
    for &p in p_list {
        if !(p >= 1.0) {
            return Err(Error::config(format!("norm exponent {p} must be >= 1")));
        }
        let kind = if p.is_infinite() { NormKind::Max } else { NormKind::Lp(p) };
        lp.push((p, norm(remainder, kind, omega)?));
    }
    Ok(RemainderNorms {
        l2_remainder: norm(remainder, NormKind::L2, omega)?,
        l2_difference: norm(&diff, NormKind::L2, omega)?,
        h1_remainder_interior: norm(&grad, NormKind::L2, omega1)?,
        linf_grad_remainder_interior: norm(&grad, NormKind::Max, omega1)?,
        linf_difference: norm(&diff, NormKind::Max, omega)?,
        lp_remainder: lp,
    })
}

/// Per-run record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub eps: f64,
    pub mode: CorrectorMode,
    pub norms: RemainderNorms,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_identity: Option<ResidualIdentity>,
    pub grid: GridSummary,
    pub solver: Vec<SolverSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSummary {
    pub h: f64,
    pub n: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverSummary {
    pub problem: &'static str,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Fields and records of a two-scale run at one `ε`, shared solves across modes.
pub struct TwoScaleRun {
    pub eps: f64,
    pub grid: Grid,
    pub u_eps: GridField,
    pub u_star: GridField,
    pub remainders: Vec<(CorrectorMode, GridField)>,
    pub h_fields: Vec<(CorrectorMode, GridField)>,
    pub records: Vec<RunRecord>,
    /// Wall time per stage in seconds (not part of deterministic output).
    pub timings: Vec<(&'static str, f64)>,
}

pub struct TwoScaleInputs<'a> {
    pub spec: &'a CoefficientSpec,
    pub set: &'a CorrectorSet,
    pub astar: &'a HomogenizedTensor,
    /// Needed for `H^ε` in d ≥ 2; `None` skips the residual identity.
    pub potentials: Option<&'a [PotentialSlice]>,
    pub source: &'a Source,
    pub domain: &'a Domain,
    pub nodes_per_period: usize,
    pub p_list: &'a [f64],
    pub residual_identity: bool,
    pub options: &'a SolverOptions,
}

pub fn run_two_scale(inputs: &TwoScaleInputs<'_>, eps: f64, modes: &[CorrectorMode]) -> Result<TwoScaleRun> {
    let spec = inputs.spec;
    let grid = fine_grid(&inputs.domain.omega, eps, inputs.nodes_per_period)?;
    let mut timings = Vec::new();
    let t = Instant::now();
    let (u_eps, rep_eps) = solve_oscillatory(spec, eps, inputs.source, &grid, inputs.options)?;
    timings.push(("oscillatory", t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let (u_star, rep_star) = solve_homogenized(inputs.astar, inputs.source, &grid, inputs.options)?;
    timings.push(("homogenized", t.elapsed().as_secs_f64()));
    let solver = vec![
        SolverSummary {
            problem: "oscillatory",
            iterations: rep_eps.iterations,
            relative_residual: rep_eps.relative_residual,
        },
        SolverSummary {
            problem: "homogenized",
            iterations: rep_star.iterations,
            relative_residual: rep_star.relative_residual,
        },
    ];
    let mut remainders = Vec::new();
    let mut h_fields = Vec::new();
    let mut records = Vec::new();
    for &mode in modes {
        let t = Instant::now();
        let r = assemble_remainder(&u_eps, &u_star, inputs.set, eps, mode)?;
        let norms = remainder_norms(&r, &u_eps, &u_star, inputs.domain, inputs.p_list)?;
        // the identity holds only with the full corrector
        let identity = if mode == CorrectorMode::Full
            && inputs.residual_identity
            && (spec.dim == 1 || inputs.potentials.is_some())
        {
            let pots = inputs.potentials.unwrap_or(&[]);
            let h = assemble_h(spec, inputs.set, pots, &u_star, eps, mode)?;
            let id = residual_identity_check(spec, eps, &r, &h, &inputs.domain.omega1)?;
            h_fields.push((mode, h));
            Some(id)
        } else {
            None
        };
        timings.push((mode.name(), t.elapsed().as_secs_f64()));
        records.push(RunRecord {
            eps,
            mode,
            norms,
            residual_identity: identity,
            grid: GridSummary {
                h: grid.spacing[0],
                n: grid.extents.clone(),
            },
            solver: solver.clone(),
        });
        remainders.push((mode, r));
    }
    Ok(TwoScaleRun {
        eps,
        grid,
        u_eps,
        u_star,
        remainders,
        h_fields,
        records,
        timings,
    })
}
