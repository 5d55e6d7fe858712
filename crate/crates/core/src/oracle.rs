//! Closed-form 1D solutions by quadrature: `a*`, correctors, `u^ε`, `u*`
//! and remainder norms.

use serde::Serialize;

use crate::coefficients::{Coefficient, CoefficientSpec, PeriodicPart};
use crate::error::{Error, Result};
use crate::quadrature::{gk15_nodes, gk15_weights, integrate, Antiderivative, QuadratureProfile};
use crate::sources::Source;
use crate::twoscale::{CorrectorMode, RemainderNorms};

fn require_1d(spec: &CoefficientSpec) -> Result<()> {
    if spec.dim != 1 {
        return Err(Error::config(format!("1D oracle needs dim = 1, got {}", spec.dim)));
    }
    Ok(())
}

/// `(∫₀¹ dy / a_per)⁻¹`.
pub fn exact_astar_1d(periodic: &PeriodicPart) -> f64 {
    let inv = integrate(&|t| 1.0 / periodic.eval(&[t]), 0.0, 1.0, 64, 1e-15);
    1.0 / inv
}

/// Exact 1D correctors on `[−R, R]`.
pub struct CorrectorOracle {
    pub astar: f64,
    periodic: PeriodicPart,
    /// `∫₀^t (a*/a_per − 1)` on one cell.
    cell: Antiderivative<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
    cell_mean: f64,
    /// `∫_{−R}^y a*(1/a − 1/a_per)`; absent without a defect.
    defect: Option<Antiderivative<Box<dyn Fn(f64) -> f64 + Send + Sync>>>,
    defect_zero: f64,
    spec: CoefficientSpec,
}

impl CorrectorOracle {
    pub fn new(spec: &CoefficientSpec, radius: f64) -> Result<Self> {
        require_1d(spec)?;
        let astar = exact_astar_1d(&spec.periodic);
        let per = spec.periodic.clone();
        let cell_f: Box<dyn Fn(f64) -> f64 + Send + Sync> = Box::new(move |t| astar / per.eval(&[t]) - 1.0);
        let cell = Antiderivative::new(cell_f, 0.0, 1.0, 1.0 / 64.0, 1e-15);
        let cell_mean = integrate(&|t| cell.eval(t), 0.0, 1.0, 32, 1e-15);
        let (defect, defect_zero) = if spec.has_defect() {
            let s = spec.clone();
            let f: Box<dyn Fn(f64) -> f64 + Send + Sync> = Box::new(move |y| {
                let ap = s.eval_periodic(&[y]);
                astar * (1.0 / (ap + s.eval_defect(&[y])) - 1.0 / ap)
            });
            let prof = QuadratureProfile::default();
            let r = radius.max(1.0);
            let tab = Antiderivative::new(f, -r, r, prof.panel_width(1.0), 1e-14);
            let z = tab.eval(0.0);
            (Some(tab), z)
        } else {
            (None, 0.0)
        };
        Ok(CorrectorOracle {
            astar,
            periodic: spec.periodic.clone(),
            cell,
            cell_mean,
            defect,
            defect_zero,
            spec: spec.clone(),
        })
    }

    pub fn radius(&self) -> f64 {
        self.defect.as_ref().map_or(f64::INFINITY, |t| t.hi())
    }

    pub fn w_per(&self, y: f64) -> f64 {
        self.cell.eval(y - y.floor()) - self.cell_mean
    }

    pub fn w_per_prime(&self, y: f64) -> f64 {
        self.astar / self.periodic.eval(&[y]) - 1.0
    }

    /// `w̃(y)`, anchored at `w̃(0) = 0`.
    pub fn w_tilde(&self, y: f64) -> f64 {
        match &self.defect {
            Some(t) => t.eval(y) - self.defect_zero,
            None => 0.0,
        }
    }

    pub fn w_tilde_prime(&self, y: f64) -> f64 {
        match &self.defect {
            Some(t) => t.integrand(y),
            None => 0.0,
        }
    }

    pub fn w(&self, y: f64) -> f64 {
        self.w_per(y) + self.w_tilde(y)
    }

    /// `a* / a − 1`.
    pub fn w_prime(&self, y: f64) -> f64 {
        self.astar / self.spec.eval(&[y]) - 1.0
    }
}

/// `(w_per(y), w̃(y))`.
pub fn exact_corrector_1d(spec: &CoefficientSpec, y: f64) -> Result<(f64, f64)> {
    let o = CorrectorOracle::new(spec, y.abs() + 1.0)?;
    Ok((o.w_per(y), o.w_tilde(y)))
}

type Table = Antiderivative<Box<dyn Fn(f64) -> f64 + Send + Sync>>;

/// Exact `u^ε` and `u*` on `(−1, 1)` with homogeneous Dirichlet data.
pub struct ExactSolution1d {
    pub eps: f64,
    pub astar: f64,
    /// Flux constant `c` with `a(x/ε) u′ = c − F`.
    pub flux_constant: f64,
    /// `c*` with `a* u*′ = c* − F`.
    pub flux_constant_star: f64,
    source: Source,
    spec: CoefficientSpec,
    inv_a: Table,
    f_over_a: Table,
    /// `∫_{−1}^x F`.
    f_prim: Table,
}

impl ExactSolution1d {
    pub fn new(spec: &CoefficientSpec, eps: f64, f: &Source) -> Result<Self> {
        require_1d(spec)?;
        f.validate(1)?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::config(format!("eps must lie in (0, 1), got {eps}")));
        }
        let astar = exact_astar_1d(&spec.periodic);
        let prof = QuadratureProfile::default();
        let width = prof.panel_width(eps);
        let s1 = spec.clone();
        let inv: Box<dyn Fn(f64) -> f64 + Send + Sync> = Box::new(move |t| 1.0 / s1.eval(&[t / eps]));
        let inv_a = Antiderivative::new(inv, -1.0, 1.0, width, prof.tol);
        let s2 = spec.clone();
        let src = f.clone();
        let fa: Box<dyn Fn(f64) -> f64 + Send + Sync> =
            Box::new(move |t| src.antiderivative_1d(-1.0, t) / s2.eval(&[t / eps]));
        let f_over_a = Antiderivative::new(fa, -1.0, 1.0, width, prof.tol);
        let src = f.clone();
        let fp: Box<dyn Fn(f64) -> f64 + Send + Sync> = Box::new(move |t| src.antiderivative_1d(-1.0, t));
        let f_prim = Antiderivative::new(fp, -1.0, 1.0, 1.0 / 64.0, prof.tol);
        let flux_constant = f_over_a.total() / inv_a.total();
        let flux_constant_star = f_prim.total() / 2.0;
        Ok(ExactSolution1d {
            eps,
            astar,
            flux_constant,
            flux_constant_star,
            source: f.clone(),
            spec: spec.clone(),
            inv_a,
            f_over_a,
            f_prim,
        })
    }

    pub fn big_f(&self, x: f64) -> f64 {
        self.source.antiderivative_1d(-1.0, x)
    }

    pub fn coefficient(&self, x: f64) -> f64 {
        self.spec.eval(&[x / self.eps])
    }

    pub fn u(&self, x: f64) -> f64 {
        self.flux_constant * self.inv_a.eval(x) - self.f_over_a.eval(x)
    }

    pub fn u_prime(&self, x: f64) -> f64 {
        (self.flux_constant - self.big_f(x)) / self.coefficient(x)
    }

    pub fn u_star(&self, x: f64) -> f64 {
        (self.flux_constant_star * (x + 1.0) - self.f_prim.eval(x)) / self.astar
    }

    pub fn u_star_prime(&self, x: f64) -> f64 {
        (self.flux_constant_star - self.big_f(x)) / self.astar
    }

    pub fn u_star_second(&self, x: f64) -> f64 {
        -self.source.eval(&[x]) / self.astar
    }
}

/// Pointwise values of the exact remainder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RemainderPoint {
    pub remainder: f64,
    pub remainder_prime: f64,
    pub difference: f64,
}

/// Exact remainder `R^ε = u^ε − u* − ε w(x/ε) u*′` in either corrector mode.
pub struct ExactRemainder1d {
    pub solution: ExactSolution1d,
    pub correctors: CorrectorOracle,
}

impl ExactRemainder1d {
    pub fn new(spec: &CoefficientSpec, eps: f64, f: &Source) -> Result<Self> {
        let solution = ExactSolution1d::new(spec, eps, f)?;
        let correctors = CorrectorOracle::new(spec, 1.0 / eps + 2.0)?;
        Ok(ExactRemainder1d { solution, correctors })
    }

    pub fn at(&self, x: f64, mode: CorrectorMode) -> RemainderPoint {
        let s = &self.solution;
        let eps = s.eps;
        let y = x / eps;
        let c = &self.correctors;
        let (w, wp) = match mode {
            CorrectorMode::Full => (c.w(y), c.w_prime(y)),
            CorrectorMode::PeriodicOnly => (c.w_per(y), c.w_per_prime(y)),
        };
        let us = s.u_star(x);
        let usp = s.u_star_prime(x);
        let uspp = s.u_star_second(x);
        let u = s.u(x);
        let remainder = u - us - eps * w * usp;
        let remainder_prime = match mode {
            // u′ − (a*/a) u*′ = (c − c*)/a exactly
            CorrectorMode::Full => (s.flux_constant - s.flux_constant_star) / s.coefficient(x) - eps * w * uspp,
            CorrectorMode::PeriodicOnly => s.u_prime(x) - usp - wp * usp - eps * w * uspp,
        };
        RemainderPoint {
            remainder,
            remainder_prime,
            difference: u - us,
        }
    }
}

#[derive(Default)]
struct Acc {
    sq: f64,
    max: f64,
}

impl Acc {
    fn add(&mut self, w: f64, v: f64) {
        self.sq += w * v * v;
        self.max = self.max.max(v.abs());
    }
}

fn panel_walk(lo: f64, hi: f64, width: f64, mut visit: impl FnMut(f64, f64)) {
    let panels = (((hi - lo) / width).ceil() as usize).max(1);
    let w = (hi - lo) / panels as f64;
    for p in 0..panels {
        let a = lo + p as f64 * w;
        let b = a + w;
        let half = 0.5 * (b - a);
        for (x, wk) in gk15_nodes(a, b).iter().zip(gk15_weights().iter()) {
            visit(*x, wk * half);
        }
        visit(a, 0.0);
    }
    visit(hi, 0.0);
}

/// Quadrature norms of the exact remainder on `Ω = (−1, 1)`, `Ω₁ = (−0.5, 0.5)`.
pub fn oracle_remainder_norms(
    spec: &CoefficientSpec,
    eps: f64,
    f: &Source,
    mode: CorrectorMode,
    p_list: &[f64],
) -> Result<RemainderNorms> {
    let exact = ExactRemainder1d::new(spec, eps, f)?;
    Ok(exact_norms(&exact, mode, p_list))
}

/// Norms from a prebuilt remainder (reuses the quadrature tables).
pub fn exact_norms(exact: &ExactRemainder1d, mode: CorrectorMode, p_list: &[f64]) -> RemainderNorms {
    let width = QuadratureProfile::default().panel_width(exact.solution.eps);
    let mut r = Acc::default();
    let mut diff = Acc::default();
    let mut lp = vec![0.0; p_list.len()];
    panel_walk(-1.0, 1.0, width, |x, w| {
        let pt = exact.at(x, mode);
        r.add(w, pt.remainder);
        diff.add(w, pt.difference);
        for (acc, &p) in lp.iter_mut().zip(p_list) {
            if p.is_finite() {
                *acc += w * pt.remainder.abs().powf(p);
            }
        }
    });
    let mut grad = Acc::default();
    panel_walk(-0.5, 0.5, width, |x, w| {
        grad.add(w, exact.at(x, mode).remainder_prime);
    });
    let lp_remainder = p_list
        .iter()
        .zip(lp)
        .map(|(&p, v)| (p, if p.is_finite() { v.powf(1.0 / p) } else { r.max }))
        .collect();
    RemainderNorms {
        l2_remainder: r.sq.sqrt(),
        l2_difference: diff.sq.sqrt(),
        h1_remainder_interior: grad.sq.sqrt(),
        linf_grad_remainder_interior: grad.max,
        linf_difference: diff.max,
        lp_remainder,
    }
}

/// Oracle part of a study report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleEntry {
    pub eps: f64,
    pub mode: CorrectorMode,
    pub norms: RemainderNorms,
}
