//! Gauss–Kronrod (G7/K15) quadrature: single panels, adaptive bisection and
//! cumulative antiderivative tables on fixed panel grids.

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// The 15 Kronrod abscissae mapped to `[a, b]`, ascending.
pub fn gk15_nodes(a: f64, b: f64) -> [f64; 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [0.0; 15];
    for k in 0..7 {
        out[k] = c - h * XGK[k];
        out[14 - k] = c + h * XGK[k];
    }
    out[7] = c;
    out
}

/// Kronrod weights matching [`gk15_nodes`], for the unit half-width.
pub fn gk15_weights() -> [f64; 15] {
    let mut out = [0.0; 15];
    for k in 0..7 {
        out[k] = WGK[k];
        out[14 - k] = WGK[k];
    }
    out[7] = WGK[7];
    out
}

/// K15 estimate of `∫_a^b f` and `|K15 − G7|`.
pub fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for k in 0..7 {
        let dx = h * XGK[k];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive bisection of one panel down to absolute tolerance `tol`.
pub fn adaptive_panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (v, e) = gk15(f, a, b);
    if e <= tol || depth == 0 {
        return v;
    }
    let m = 0.5 * (a + b);
    adaptive_panel(f, a, m, 0.5 * tol, depth - 1) + adaptive_panel(f, m, b, 0.5 * tol, depth - 1)
}

/// `∫_a^b f` over `panels` equal panels, each refined adaptively to `tol`
/// relative to the panel's share of the interval.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize, tol: f64) -> f64 {
    let panels = panels.max(1);
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = a + p as f64 * w;
            adaptive_panel(f, lo, lo + w, tol / panels as f64, 30)
        })
        .sum()
}

/// Panel settings for oscillatory integrands.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureProfile {
    /// Panels per period of the fastest oscillation; at least 32.
    pub panels_per_period: usize,
    /// Absolute tolerance per unit length.
    pub tol: f64,
}

impl Default for QuadratureProfile {
    fn default() -> Self {
        QuadratureProfile {
            panels_per_period: 32,
            tol: 1e-13,
        }
    }
}

impl QuadratureProfile {
    pub fn panel_width(&self, period: f64) -> f64 {
        period / self.panels_per_period.max(32) as f64
    }
}

/// `F(x) = ∫_lo^x f` on `[lo, hi]` from a table of panel-boundary values.
pub struct Antiderivative<F: Fn(f64) -> f64> {
    f: F,
    lo: f64,
    width: f64,
    table: Vec<f64>,
    tol: f64,
}

impl<F: Fn(f64) -> f64> Antiderivative<F> {
    pub fn new(f: F, lo: f64, hi: f64, panel_width: f64, tol: f64) -> Self {
        let panels = (((hi - lo) / panel_width).ceil() as usize).max(1);
        let width = (hi - lo) / panels as f64;
        let mut table = Vec::with_capacity(panels + 1);
        table.push(0.0);
        let mut acc = 0.0;
        for p in 0..panels {
            let a = lo + p as f64 * width;
            acc += adaptive_panel(&f, a, a + width, tol * width, 30);
            table.push(acc);
        }
        Antiderivative {
            f,
            lo,
            width,
            table,
            tol,
        }
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.width * (self.table.len() - 1) as f64
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn total(&self) -> f64 {
        *self.table.last().expect("table is non-empty")
    }

    pub fn integrand(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// `∫_lo^x f`; `x` is clamped to the table range.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(self.lo, self.hi());
        let s = (x - self.lo) / self.width;
        let p = (s.floor() as usize).min(self.table.len() - 2);
        let a = self.lo + p as f64 * self.width;
        if x == a {
            return self.table[p];
        }
        self.table[p] + adaptive_panel(&self.f, a, x, self.tol * (x - a), 30)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomials_are_exact() {
        let (v, e) = gk15(&|x| x.powi(12) - 3.0 * x.powi(5), -1.0, 2.0);
        let exact = (2f64.powi(13) + 1.0) / 13.0 - 3.0 * (64.0 - 1.0) / 6.0;
        assert!((v - exact).abs() < 1e-11 * exact.abs());
        assert!(e < 1e-8);
    }

    #[test]
    fn node_weight_pairs_match_gk15() {
        let w = gk15_weights();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let f = |x: f64| (3.0 * x).exp() * x;
        let (a, b) = (-0.3, 1.1);
        let direct: f64 = gk15_nodes(a, b).iter().zip(w.iter()).map(|(&x, &w)| w * f(x)).sum::<f64>() * 0.5 * (b - a);
        assert!((direct - gk15(&f, a, b).0).abs() < 1e-14);
    }

    #[test]
    fn harmonic_mean_of_two_plus_sine() {
        let v = integrate(&|t| 1.0 / (2.0 + t.sin()), 0.0, 2.0 * PI, 8, 1e-14);
        assert!((v - 2.0 * PI / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn antiderivative_table() {
        let a = Antiderivative::new(|x: f64| x.cos(), -1.0, 3.0, 0.1, 1e-14);
        for x in [-1.0, -0.33, 0.0, 1.234, 2.95, 3.0] {
            assert!((a.eval(x) - (x.sin() - (-1f64).sin())).abs() < 1e-13, "{x}");
        }
    }
}
