//! Uniform tensor grids and node-based fields in one to three dimensions.
//!
//! Storage is row-major over nodes (last axis fastest) with components
//! interleaved per node. Periodic grids store `n` nodes per axis; the node at
//! index `n` is identified with index 0.

mod io;

pub use io::{load_field, save_field, FIELD_MAGIC};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bc {
    Periodic,
    Dirichlet,
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Region {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&a, &b))| v >= a && v <= b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() || self.lo.is_empty() {
            return Err(Error::config("region lo/hi must have equal, nonzero length"));
        }
        if self
            .lo
            .iter()
            .zip(&self.hi)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b))
        {
            return Err(Error::config(format!("degenerate region {self:?}")));
        }
        Ok(())
    }

    /// `max_k max(|lo_k|, |hi_k|)`.
    pub fn sup_extent(&self) -> f64 {
        self.lo
            .iter()
            .chain(&self.hi)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub extents: Vec<usize>,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub bc: Bc,
}

impl Grid {
    pub fn new(extents: Vec<usize>, origin: Vec<f64>, spacing: Vec<f64>, bc: Bc) -> Result<Self> {
        let dim = extents.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::config(format!("grid dimension must be 1..=3, got {dim}")));
        }
        if origin.len() != dim || spacing.len() != dim {
            return Err(Error::config("grid origin/spacing length must equal dim"));
        }
        if extents.iter().any(|&n| n < 3) {
            return Err(Error::config(format!("grid extents must be >= 3, got {extents:?}")));
        }
        if spacing.iter().any(|&h| !(h.is_finite() && h > 0.0)) || origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::config("grid spacing must be positive and finite"));
        }
        Ok(Grid {
            dim,
            extents,
            origin,
            spacing,
            bc,
        })
    }

    /// Dirichlet grid with `nodes[k]` nodes covering `[lo_k, hi_k]` inclusive.
    pub fn dirichlet_box(region: &Region, nodes: &[usize]) -> Result<Self> {
        region.validate()?;
        if nodes.len() != region.dim() {
            return Err(Error::config("node count per axis must match region dimension"));
        }
        let spacing = nodes
            .iter()
            .zip(region.lo.iter().zip(&region.hi))
            .map(|(&n, (&a, &b))| (b - a) / (n.max(2) - 1) as f64)
            .collect();
        Grid::new(nodes.to_vec(), region.lo.clone(), spacing, Bc::Dirichlet)
    }

    /// Dirichlet grid on `region` with spacing exactly `h` in every axis;
    /// the region extents must be integer multiples of `h`.
    pub fn dirichlet_with_spacing(region: &Region, h: f64) -> Result<Self> {
        region.validate()?;
        let mut nodes = Vec::with_capacity(region.dim());
        for (a, b) in region.lo.iter().zip(&region.hi) {
            let cells = (b - a) / h;
            let n = cells.round();
            if (cells - n).abs() > 1e-9 * n.max(1.0) {
                return Err(Error::config(format!(
                    "region length {} is not a multiple of spacing {h}",
                    b - a
                )));
            }
            nodes.push(n as usize + 1);
        }
        Grid::new(nodes, region.lo.clone(), vec![h; region.dim()], Bc::Dirichlet)
    }

    /// Periodic unit cell `[0, 1)^d` with `n` nodes per axis.
    pub fn periodic_cell(dim: usize, n: usize) -> Result<Self> {
        Grid::new(vec![n; dim], vec![0.0; dim], vec![1.0 / n as f64; dim], Bc::Periodic)
    }

    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim];
        for k in (0..self.dim.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.extents[k + 1];
        }
        s
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.extents[axis + 1..].iter().product()
    }

    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for k in (0..self.dim).rev() {
            out[k] = idx % self.extents[k];
            idx /= self.extents[k];
        }
    }

    pub fn linear_index(&self, mi: &[usize]) -> usize {
        mi.iter()
            .zip(&self.extents)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn coords(&self, idx: usize, out: &mut [f64]) {
        let mut rem = idx;
        for k in (0..self.dim).rev() {
            let i = rem % self.extents[k];
            rem /= self.extents[k];
            out[k] = self.origin[k] + i as f64 * self.spacing[k];
        }
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    /// Box covered by the grid: node span for Dirichlet, one period for periodic.
    pub fn bounds(&self) -> Region {
        let hi = (0..self.dim)
            .map(|k| {
                let cells = match self.bc {
                    Bc::Dirichlet => self.extents[k] - 1,
                    Bc::Periodic => self.extents[k],
                };
                self.origin[k] + cells as f64 * self.spacing[k]
            })
            .collect();
        Region {
            lo: self.origin.clone(),
            hi,
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        if self.bc == Bc::Periodic {
            return false;
        }
        let mut rem = idx;
        for k in (0..self.dim).rev() {
            let i = rem % self.extents[k];
            rem /= self.extents[k];
            if i == 0 || i + 1 == self.extents[k] {
                return true;
            }
        }
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    /// Dual-cell quadrature weight of node `idx` restricted to `region`:
    /// `Π_k |[x_k - h_k/2, x_k + h_k/2] ∩ [lo_k, hi_k]|`, zero for nodes
    /// outside the closed region.
    pub fn node_weight(&self, idx: usize, region: &Region, x: &mut [f64]) -> f64 {
        self.coords(idx, x);
        let mut w = 1.0;
        for k in 0..self.dim {
            let (lo, hi) = (region.lo[k], region.hi[k]);
            let tol = 1e-9 * self.spacing[k];
            if x[k] < lo - tol || x[k] > hi + tol {
                return 0.0;
            }
            let a = (x[k] - 0.5 * self.spacing[k]).max(lo);
            let b = (x[k] + 0.5 * self.spacing[k]).min(hi);
            w *= (b - a).max(0.0);
        }
        w
    }
}

/// Node-based field with 1 (scalar), d (vector) or d·d (matrix) components.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    pub components: usize,
    pub data: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: &Grid, components: usize) -> Self {
        GridField {
            data: vec![0.0; grid.len() * components],
            grid: grid.clone(),
            components,
        }
    }

    pub fn from_data(grid: &Grid, components: usize, data: Vec<f64>) -> Result<Self> {
        let d = grid.dim;
        if ![1, d, d * d].contains(&components) {
            return Err(Error::config(format!("invalid component count {components} for dim {d}")));
        }
        if data.len() != grid.len() * components {
            return Err(Error::config(format!(
                "field data length {} != {} nodes x {components} components",
                data.len(),
                grid.len()
            )));
        }
        Ok(GridField {
            grid: grid.clone(),
            components,
            data,
        })
    }

    pub fn scalar(grid: &Grid, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.len(), "scalar field length");
        GridField {
            grid: grid.clone(),
            components: 1,
            data,
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.dim];
        let data = (0..grid.len())
            .map(|i| {
                grid.coords(i, &mut x);
                f(&x)
            })
            .collect();
        GridField::scalar(grid, data)
    }

    pub fn from_components(grid: &Grid, comps: &[Vec<f64>]) -> Self {
        let n = grid.len();
        let c = comps.len();
        let mut data = vec![0.0; n * c];
        for (ci, comp) in comps.iter().enumerate() {
            assert_eq!(comp.len(), n, "component length");
            for (i, v) in comp.iter().enumerate() {
                data[i * c + ci] = *v;
            }
        }
        GridField {
            grid: grid.clone(),
            components: c,
            data,
        }
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.components)
            .copied()
            .collect()
    }

    #[inline]
    pub fn get(&self, node: usize, c: usize) -> f64 {
        self.data[node * self.components + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridField {
            data: self.data.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Pointwise Euclidean magnitude across components at node `i`.
    fn magnitude(&self, i: usize) -> f64 {
        if self.components == 1 {
            return self.data[i].abs();
        }
        let s = &self.data[i * self.components..(i + 1) * self.components];
        s.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multilinear interpolation of component `c` at `x`.
    pub fn sample_component(&self, c: usize, x: &[f64]) -> Result<f64> {
        let g = &self.grid;
        let d = g.dim;
        let mut base = [0usize; 3];
        let mut next = [0usize; 3];
        let mut t = [0.0f64; 3];
        for k in 0..d {
            let n = g.extents[k];
            let mut s = (x[k] - g.origin[k]) / g.spacing[k];
            let snapped = s.round();
            if (s - snapped).abs() < 1e-9 {
                s = snapped;
            }
            match g.bc {
                Bc::Periodic => {
                    let nf = n as f64;
                    s -= (s / nf).floor() * nf;
                    if s >= nf {
                        s -= nf;
                    }
                    let i = (s.floor() as usize).min(n - 1);
                    base[k] = i;
                    next[k] = (i + 1) % n;
                    t[k] = s - i as f64;
                }
                Bc::Dirichlet => {
                    let top = (n - 1) as f64;
                    if !(s >= -1e-9 && s <= top + 1e-9) {
                        return Err(Error::OutOfDomain {
                            axis: k,
                            coordinate: x[k],
                        });
                    }
                    let s = s.clamp(0.0, top);
                    let i = (s.floor() as usize).min(n - 2);
                    base[k] = i;
                    next[k] = i + 1;
                    t[k] = s - i as f64;
                }
            }
        }
        let strides = g.strides();
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0;
            for k in 0..d {
                let hi = corner >> k & 1 == 1;
                let (i, wk) = if hi { (next[k], t[k]) } else { (base[k], 1.0 - t[k]) };
                if wk == 0.0 {
                    w = 0.0;
                    break;
                }
                w *= wk;
                idx += i * strides[k];
            }
            if w != 0.0 {
                acc += w * self.data[idx * self.components + c];
            }
        }
        Ok(acc)
    }

    pub fn sample(&self, x: &[f64]) -> Result<f64> {
        self.sample_component(0, x)
    }
}

/// Second-order derivative of node values along `axis`: central differences
/// in the interior, one-sided second order at Dirichlet boundaries, and
/// wrap-around at periodic boundaries.
pub fn partial(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.extents[axis];
    let s = grid.stride(axis);
    let h = grid.spacing[axis];
    let inv2h = 0.5 / h;
    let block = n * s;
    let mut out = vec![0.0; values.len()];
    for outer in (0..values.len()).step_by(block) {
        for m in 0..n {
            let row = outer + m * s;
            for t in 0..s {
                let i = row + t;
                out[i] = match grid.bc {
                    Bc::Periodic => {
                        let up = outer + ((m + 1) % n) * s + t;
                        let down = outer + ((m + n - 1) % n) * s + t;
                        (values[up] - values[down]) * inv2h
                    }
                    Bc::Dirichlet => {
                        if m == 0 {
                            (-3.0 * values[i] + 4.0 * values[i + s] - values[i + 2 * s]) * inv2h
                        } else if m + 1 == n {
                            (3.0 * values[i] - 4.0 * values[i - s] + values[i - 2 * s]) * inv2h
                        } else {
                            (values[i + s] - values[i - s]) * inv2h
                        }
                    }
                };
            }
        }
    }
    out
}

/// Gradient of a scalar field as a d-component vector field.
pub fn gradient(f: &GridField) -> GridField {
    assert_eq!(f.components, 1, "gradient expects a scalar field");
    let comps: Vec<Vec<f64>> = (0..f.grid.dim).map(|k| partial(&f.grid, &f.data, k)).collect();
    GridField::from_components(&f.grid, &comps)
}

/// Central-difference divergence of a d-component vector field.
pub fn divergence(f: &GridField) -> GridField {
    assert_eq!(f.components, f.grid.dim, "divergence expects a vector field");
    let mut out = vec![0.0; f.grid.len()];
    for k in 0..f.grid.dim {
        let dk = partial(&f.grid, &f.component(k), k);
        for (o, v) in out.iter_mut().zip(dk) {
            *o += v;
        }
    }
    GridField::scalar(&f.grid, out)
}

/// Exponent of an `L^p` norm; `p = ∞` is the max norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    Lp(f64),
    Max,
}

impl NormKind {
    pub const L2: NormKind = NormKind::Lp(2.0);
}

/// `L^p` norm over `subdomain` (whole grid when `None`); vector fields use
/// the pointwise Euclidean magnitude. Quadrature is the midpoint rule on
/// node-centred dual cells clipped to the subdomain.
pub fn norm(f: &GridField, p: NormKind, subdomain: Option<&Region>) -> Result<f64> {
    norm_of(&f.grid, |i| f.magnitude(i), p, subdomain)
}

pub(crate) fn norm_of(
    grid: &Grid,
    value: impl Fn(usize) -> f64,
    p: NormKind,
    subdomain: Option<&Region>,
) -> Result<f64> {
    let whole = grid.bounds();
    let region = subdomain.unwrap_or(&whole);
    if region.dim() != grid.dim {
        return Err(Error::config("subdomain dimension mismatch"));
    }
    let mut x = vec![0.0; grid.dim];
    let mut any = false;
    let mut acc = 0.0f64;
    for i in 0..grid.len() {
        let w = grid.node_weight(i, region, &mut x);
        if w <= 0.0 {
            continue;
        }
        any = true;
        let v = value(i);
        match p {
            NormKind::Max => acc = acc.max(v),
            NormKind::Lp(q) => {
                acc += if q == 2.0 { v * v * w } else { v.powf(q) * w };
            }
        }
    }
    if !any {
        return Err(Error::EmptySubdomain);
    }
    Ok(match p {
        NormKind::Max => acc,
        NormKind::Lp(q) => {
            if q == 2.0 {
                acc.sqrt()
            } else {
                acc.powf(1.0 / q)
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit_line(n: usize) -> Grid {
        Grid::dirichlet_box(&Region::cube(1, 0.0, 1.0), &[n]).unwrap()
    }

    #[test]
    fn grid_rejects_small_extents() {
        assert!(Grid::new(vec![2], vec![0.0], vec![0.5], Bc::Dirichlet).is_err());
        assert!(Grid::new(vec![4, 4], vec![0.0; 2], vec![0.0, 1.0], Bc::Dirichlet).is_err());
    }

    #[test]
    fn gradient_of_constant_and_affine() {
        let g = Grid::dirichlet_box(&Region::cube(2, -1.0, 1.0), &[17, 9]).unwrap();
        let c = GridField::from_fn(&g, |_| 3.5);
        assert!(gradient(&c).max_abs() < 1e-13);
        let lin = GridField::from_fn(&g, |x| x[0]);
        let gr = gradient(&lin);
        for i in 0..g.len() {
            assert!((gr.get(i, 0) - 1.0).abs() < 1e-12);
            assert!(gr.get(i, 1).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_periodic_sine_taylor_bound() {
        let g = Grid::periodic_cell(1, 64).unwrap();
        let f = GridField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        let gr = gradient(&f);
        let h = 1.0 / 64.0;
        let mut x = [0.0];
        let mut err = 0.0f64;
        for i in 0..g.len() {
            g.coords(i, &mut x);
            err = err.max((gr.data[i] - 2.0 * PI * (2.0 * PI * x[0]).cos()).abs());
        }
        assert!(err <= (2.0 * PI).powi(3) * h * h / 6.0, "err {err}");
    }

    #[test]
    fn gradient_second_order_convergence() {
        let err = |n: usize| {
            let g = Grid::dirichlet_box(&Region::cube(1, 0.0, 1.0), &[n + 1]).unwrap();
            let f = GridField::from_fn(&g, |x| (3.0 * x[0]).exp());
            let gr = gradient(&f);
            let mut x = [0.0];
            (0..g.len())
                .map(|i| {
                    g.coords(i, &mut x);
                    (gr.data[i] - 3.0 * (3.0 * x[0]).exp()).abs()
                })
                .fold(0.0, f64::max)
        };
        for n in [32, 64, 128] {
            assert!(err(n) / err(2 * n) >= 3.5);
        }
    }

    #[test]
    fn norm_examples() {
        let g = Grid::dirichlet_box(&Region::cube(2, 0.0, 1.0), &[33, 17]).unwrap();
        let one = GridField::from_fn(&g, |_| 1.0);
        assert!((norm(&one, NormKind::L2, None).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(norm(&one, NormKind::Max, None).unwrap(), 1.0);

        let g = unit_line(513);
        let x = GridField::from_fn(&g, |x| x[0]);
        let v = norm(&x, NormKind::L2, None).unwrap();
        assert!((v - 1.0 / 3f64.sqrt()).abs() < 1e-5);

        let tiny = Region::cube(1, 0.5001, 0.5002);
        assert!(matches!(norm(&x, NormKind::L2, Some(&tiny)), Err(Error::EmptySubdomain)));

        let half = Region::cube(1, 0.0, 0.5);
        let v = norm(&one_d(&g), NormKind::Lp(1.0), Some(&half)).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    fn one_d(g: &Grid) -> GridField {
        GridField::from_fn(g, |_| 1.0)
    }

    #[test]
    fn sample_examples() {
        let g = Grid::new(vec![3], vec![0.0], vec![1.0], Bc::Dirichlet).unwrap();
        let f = GridField::scalar(&g, vec![2.0, 4.0, 7.0]);
        assert_eq!(f.sample(&[1.0]).unwrap(), 4.0);
        assert_eq!(f.sample(&[0.5]).unwrap(), 3.0);
        assert!(matches!(f.sample(&[2.5]), Err(Error::OutOfDomain { axis: 0, .. })));

        let g = Grid::dirichlet_box(&Region::cube(2, 0.0, 1.0), &[129, 129]).unwrap();
        let f = GridField::from_fn(&g, |x| x[0] * x[1]);
        assert!((f.sample(&[0.3, 0.7]).unwrap() - 0.21).abs() < 1e-4);

        let p = Grid::periodic_cell(1, 8).unwrap();
        let f = GridField::from_fn(&p, |x| x[0]);
        assert_eq!(f.sample(&[3.25]).unwrap(), 0.25);
        assert_eq!(f.sample(&[-0.75]).unwrap(), 0.25);
    }

    proptest! {
        #[test]
        fn gradient_exact_on_affine(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            let g = Grid::dirichlet_box(&Region::cube(2, -1.0, 2.0), &[7, 11]).unwrap();
            let f = GridField::from_fn(&g, |x| a * x[0] + b * x[1] + c);
            let gr = gradient(&f);
            for i in 0..g.len() {
                prop_assert!((gr.get(i, 0) - a).abs() < 1e-12);
                prop_assert!((gr.get(i, 1) - b).abs() < 1e-12);
            }
        }

        #[test]
        fn norm_is_homogeneous(c in -1e3f64..1e3, p in prop::sample::select(vec![1.0, 2.0, 3.5])) {
            let g = Grid::dirichlet_box(&Region::cube(2, -1.0, 1.0), &[9, 13]).unwrap();
            let f = GridField::from_fn(&g, |x| (x[0] * 3.0).sin() + x[1] * x[1]);
            let base = norm(&f, NormKind::Lp(p), None).unwrap();
            let scaled = norm(&f.scaled(c), NormKind::Lp(p), None).unwrap();
            prop_assert!((scaled - c.abs() * base).abs() <= 1e-14 * c.abs() * base + 1e-300);
            let m = norm(&f, NormKind::Max, None).unwrap();
            prop_assert!((norm(&f.scaled(c), NormKind::Max, None).unwrap() - c.abs() * m).abs() <= 1e-14 * c.abs() * m);
        }
    }
}
