//! Multiscale diffusion coefficients `a(y) = a_per(y) + ã(y)`.
//!
//! The coefficient library is a closed set of smooth analytic prototypes, so
//! Hölder continuity holds by construction and evaluation is pure. Periodic
//! prototypes have unit period in every axis and reduce their argument
//! modulo 1 before evaluating trigonometric terms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Anything that can be evaluated as a scalar diffusion coefficient.
pub trait Coefficient: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, y: &[f64]) -> f64;
}

/// Periodic background `a_per`; unit period in every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PeriodicPart {
    /// `a_per ≡ value`.
    Constant { value: f64 },
    /// `base + amp · Π_k sin(2π y_k)`.
    SinProduct { base: f64, amp: f64 },
    /// `base + amp · sin(2π y_axis)`: a laminate varying along one axis.
    Laminate {
        base: f64,
        amp: f64,
        #[serde(default)]
        axis: usize,
    },
    /// Smoothed two-phase checkerboard with phase values `lo` and `hi`
    /// in equal measure: `(lo+hi)/2 + (hi-lo)/2 · Π_k tanh(sharpness · sin(2π y_k))`.
    /// In 1D this is a smoothed two-phase laminate.
    Checkerboard { lo: f64, hi: f64, sharpness: f64 },
}

/// Localized defect `ã`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DefectPart {
    None,
    /// `amplitude · exp(-|y - c|² / width²)`.
    Gaussian {
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// `amplitude · (1 + |y - c|)^(-s)`.
    Power {
        amplitude: f64,
        s: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Compactly supported C^∞ bump of height `amplitude` on the ball of
    /// radius `radius`: `amplitude · exp(1 - 1/(1 - (|y - c|/radius)²))`.
    Bump {
        amplitude: f64,
        radius: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for DefectPart {
    fn default() -> Self {
        DefectPart::None
    }
}

/// Analytic description of `a = a_per + ã` with its structural constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub dim: usize,
    pub periodic: PeriodicPart,
    #[serde(default)]
    pub defect: DefectPart,
    /// Integrability exponent of the defect, `ã ∈ L^r`.
    pub r: f64,
    /// Claimed ellipticity constant: `1/mu ≤ a ≤ mu`.
    pub mu: f64,
    /// Hölder exponent; metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Only unit periods are supported. Present so that configs asking for
    /// anything else are rejected instead of silently ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<Vec<f64>>,
}

#[inline]
fn frac(y: f64) -> f64 {
    y - y.floor()
}

#[inline]
fn sin_2pi(y: f64) -> f64 {
    (2.0 * PI * frac(y)).sin()
}

fn dist(y: &[f64], center: &Option<Vec<f64>>) -> f64 {
    match center {
        Some(c) => y
            .iter()
            .zip(c)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
        None => y.iter().map(|a| a * a).sum::<f64>().sqrt(),
    }
}

impl PeriodicPart {
    pub fn eval(&self, y: &[f64]) -> f64 {
        match *self {
            PeriodicPart::Constant { value } => value,
            PeriodicPart::SinProduct { base, amp } => {
                base + amp * y.iter().map(|&v| sin_2pi(v)).product::<f64>()
            }
            PeriodicPart::Laminate { base, amp, axis } => base + amp * sin_2pi(y[axis]),
            PeriodicPart::Checkerboard { lo, hi, sharpness } => {
                let p: f64 = y.iter().map(|&v| (sharpness * sin_2pi(v)).tanh()).product();
                0.5 * (lo + hi) + 0.5 * (hi - lo) * p
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            PeriodicPart::Constant { .. } => true,
            PeriodicPart::SinProduct { amp, .. } | PeriodicPart::Laminate { amp, .. } => amp == 0.0,
            PeriodicPart::Checkerboard { lo, hi, .. } => lo == hi,
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            PeriodicPart::Constant { value } => vec![value],
            PeriodicPart::SinProduct { base, amp } => vec![base, amp],
            PeriodicPart::Laminate { base, amp, .. } => vec![base, amp],
            PeriodicPart::Checkerboard { lo, hi, sharpness } => vec![lo, hi, sharpness],
        }
    }
}

impl DefectPart {
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            DefectPart::None => 0.0,
            DefectPart::Gaussian {
                amplitude,
                width,
                center,
            } => {
                let r = dist(y, center) / width;
                amplitude * (-r * r).exp()
            }
            DefectPart::Power {
                amplitude,
                s,
                center,
            } => amplitude * (1.0 + dist(y, center)).powf(-s),
            DefectPart::Bump {
                amplitude,
                radius,
                center,
            } => {
                let t = dist(y, center) / radius;
                if t >= 1.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / (1.0 - t * t)).exp()
                }
            }
        }
    }

    pub fn is_none(&self) -> bool {
        match self {
            DefectPart::None => true,
            DefectPart::Gaussian { amplitude, .. }
            | DefectPart::Power { amplitude, .. }
            | DefectPart::Bump { amplitude, .. } => *amplitude == 0.0,
        }
    }

    /// Defect center, defaulting to the origin.
    pub fn center(&self, dim: usize) -> Vec<f64> {
        match self {
            DefectPart::None => vec![0.0; dim],
            DefectPart::Gaussian { center, .. }
            | DefectPart::Power { center, .. }
            | DefectPart::Bump { center, .. } => center.clone().unwrap_or_else(|| vec![0.0; dim]),
        }
    }

    fn center_param(&self) -> Option<&Vec<f64>> {
        match self {
            DefectPart::None => None,
            DefectPart::Gaussian { center, .. }
            | DefectPart::Power { center, .. }
            | DefectPart::Bump { center, .. } => center.as_ref(),
        }
    }
}

impl CoefficientSpec {
    /// Parse and validate a JSON fragment.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: CoefficientSpec =
            serde_json::from_str(s).map_err(|e| Error::config(format!("coefficient spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Structural checks that do not need sampling.
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::config(format!("dim must be 1, 2 or 3, got {}", self.dim)));
        }
        if let Some(p) = &self.period {
            if p.len() != self.dim || p.iter().any(|&v| v != 1.0) {
                return Err(Error::config(format!(
                    "only unit periods are supported, got {p:?}"
                )));
            }
        }
        if !(self.r.is_finite() && self.r > 1.0) {
            return Err(Error::config(format!("r must lie in (1, inf), got {}", self.r)));
        }
        if self.r == self.dim as f64 {
            return Err(Error::CriticalExponent { d: self.dim });
        }
        if !(self.mu.is_finite() && self.mu >= 1.0) {
            return Err(Error::config(format!("mu must be finite and >= 1, got {}", self.mu)));
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::config(format!("alpha must lie in (0, 1), got {alpha}")));
            }
        }
        if self.periodic.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::config("periodic parameters must be finite"));
        }
        match &self.periodic {
            PeriodicPart::Laminate { axis, .. } if *axis >= self.dim => {
                return Err(Error::config(format!("laminate axis {axis} >= dim {}", self.dim)));
            }
            PeriodicPart::Checkerboard { lo, hi, sharpness } if *lo <= 0.0 || *hi <= 0.0 || *sharpness <= 0.0 => {
                return Err(Error::config("checkerboard needs lo, hi, sharpness > 0"));
            }
            _ => {}
        }
        if let Some(c) = self.defect.center_param() {
            if c.len() != self.dim || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!(
                    "defect center must have {} finite coordinates",
                    self.dim
                )));
            }
        }
        match &self.defect {
            DefectPart::None => {}
            DefectPart::Gaussian {
                amplitude, width, ..
            } => {
                if !amplitude.is_finite() || !(width.is_finite() && *width > 0.0) {
                    return Err(Error::config("gaussian defect needs finite amplitude and width > 0"));
                }
            }
            DefectPart::Power { amplitude, s, .. } => {
                if !amplitude.is_finite() || !(s.is_finite() && *s > 0.0) {
                    return Err(Error::config("power defect needs finite amplitude and s > 0"));
                }
                if s * self.r <= self.dim as f64 {
                    return Err(Error::config(format!(
                        "power defect (1+|y|)^-{s} is not in L^{}: need s*r > d = {}",
                        self.r, self.dim
                    )));
                }
            }
            DefectPart::Bump {
                amplitude, radius, ..
            } => {
                if !amplitude.is_finite() || !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::config("bump defect needs finite amplitude and radius > 0"));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn eval_periodic(&self, y: &[f64]) -> f64 {
        self.periodic.eval(y)
    }

    #[inline]
    pub fn eval_defect(&self, y: &[f64]) -> f64 {
        self.defect.eval(y)
    }

    pub fn has_defect(&self) -> bool {
        !self.defect.is_none()
    }

    /// The same coefficient with the defect removed.
    pub fn without_defect(&self) -> Self {
        CoefficientSpec {
            defect: DefectPart::None,
            ..self.clone()
        }
    }

    pub fn periodic_view(&self) -> SpecPart<'_> {
        SpecPart {
            spec: self,
            part: Part::Periodic,
        }
    }

    pub fn defect_view(&self) -> SpecPart<'_> {
        SpecPart {
            spec: self,
            part: Part::Defect,
        }
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

impl Coefficient for CoefficientSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, y: &[f64]) -> f64 {
        eval_coefficient(self, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Full,
    Periodic,
    Defect,
}

/// A borrowed view of one part of a coefficient spec.
#[derive(Clone, Copy, Debug)]
pub struct SpecPart<'a> {
    pub spec: &'a CoefficientSpec,
    pub part: Part,
}

impl Coefficient for SpecPart<'_> {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn eval(&self, y: &[f64]) -> f64 {
        match self.part {
            Part::Full => eval_coefficient(self.spec, y),
            Part::Periodic => self.spec.eval_periodic(y),
            Part::Defect => self.spec.eval_defect(y),
        }
    }
}

/// Constant coefficient, mostly for tests and homogenized problems.
#[derive(Clone, Copy, Debug)]
pub struct ConstantCoefficient {
    pub dim: usize,
    pub value: f64,
}

impl Coefficient for ConstantCoefficient {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _y: &[f64]) -> f64 {
        self.value
    }
}

/// `a_per(y) + ã(y)`.
#[inline]
pub fn eval_coefficient(spec: &CoefficientSpec, y: &[f64]) -> f64 {
    spec.eval_periodic(y) + spec.eval_defect(y)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub min: f64,
    pub max: f64,
    pub min_periodic: f64,
    pub max_periodic: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Sample `a_per` and `a_per + ã` on the lattice of `[-R, R]^d` with
/// `sample_resolution` points per unit length and check both stay in
/// `[1/mu, mu]`.
pub fn validate_ellipticity(
    spec: &CoefficientSpec,
    sample_resolution: usize,
    box_radius: f64,
) -> Result<EllipticityReport> {
    if sample_resolution < 2 {
        return Err(Error::config("sample_resolution must be >= 2"));
    }
    if !(box_radius.is_finite() && box_radius > 0.0) {
        return Err(Error::config("box_radius must be positive"));
    }
    let d = spec.dim;
    let per_axis = (2.0 * box_radius * sample_resolution as f64).round() as usize + 1;
    let h = 2.0 * box_radius / (per_axis - 1) as f64;
    let total = per_axis.pow(d as u32);
    let (lo, hi) = (1.0 / spec.mu, spec.mu);
    let mut report = EllipticityReport {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        min_periodic: f64::INFINITY,
        max_periodic: f64::NEG_INFINITY,
        samples: total,
        pass: true,
    };
    let mut y = vec![0.0; d];
    for idx in 0..total {
        let mut rem = idx;
        for k in (0..d).rev() {
            y[k] = -box_radius + (rem % per_axis) as f64 * h;
            rem /= per_axis;
        }
        let ap = spec.eval_periodic(&y);
        let a = ap + spec.eval_defect(&y);
        for v in [ap, a] {
            if !(v >= lo && v <= hi) {
                return Err(Error::ValidationFailed {
                    point: y.clone(),
                    value: v,
                    mu: spec.mu,
                });
            }
        }
        report.min = report.min.min(a);
        report.max = report.max.max(a);
        report.min_periodic = report.min_periodic.min(ap);
        report.max_periodic = report.max_periodic.max(ap);
    }
    Ok(report)
}

/// Midpoint-rule estimate of `‖ã‖_{L^r([-R, R]^d)}` with cells of width
/// `1/resolution`. The cell count per axis is kept even so that lattices
/// for growing radii are nested and the estimate is monotone in `R`.
pub fn lr_norm_estimate(spec: &CoefficientSpec, box_radius: f64, resolution: usize) -> f64 {
    let d = spec.dim;
    let r = spec.r;
    let h = 1.0 / resolution.max(1) as f64;
    let half = (box_radius * resolution as f64).floor() as usize;
    if half == 0 || spec.defect.is_none() {
        return 0.0;
    }
    let per_axis = 2 * half;
    let total = per_axis.pow(d as u32);
    let mut y = vec![0.0; d];
    let mut sum = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        for k in (0..d).rev() {
            y[k] = ((rem % per_axis) as f64 - half as f64 + 0.5) * h;
            rem /= per_axis;
        }
        sum += spec.eval_defect(&y).abs().powf(r);
    }
    (sum * h.powi(d as i32)).powf(1.0 / r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn sin_1d(defect: DefectPart) -> CoefficientSpec {
        CoefficientSpec {
            dim: 1,
            periodic: PeriodicPart::SinProduct { base: 2.0, amp: 1.0 },
            defect,
            r: 4.0,
            mu: 4.0,
            alpha: None,
            period: None,
        }
    }

    #[test]
    fn eval_examples() {
        let s = sin_1d(DefectPart::None);
        assert!((eval_coefficient(&s, &[0.25]) - 3.0).abs() < 1e-15);

        let s = CoefficientSpec {
            periodic: PeriodicPart::Constant { value: 4.0 },
            defect: DefectPart::Gaussian {
                amplitude: 1.0,
                width: 1.0,
                center: None,
            },
            ..sin_1d(DefectPart::None)
        };
        assert_eq!(eval_coefficient(&s, &[0.0]), 5.0);

        let s = CoefficientSpec::from_json_str(
            r#"{"dim":2, "periodic":{"kind":"sin_product","base":2.0,"amp":1.0}, "defect":{"kind":"power","amplitude":1.0,"s":2.0}, "r":4.0, "mu":4.0}"#,
        )
        .unwrap();
        assert_eq!(eval_coefficient(&s, &[0.0, 0.0]), 3.0);
        assert_eq!(eval_coefficient(&s, &[0.0, 0.0]), eval_coefficient(&s, &[0.0, 0.0]));
    }

    #[test]
    fn parse_rejects_bad_specs() {
        let base = r#""periodic":{"kind":"constant","value":2.0},"mu":4.0"#;
        let critical = format!(r#"{{"dim":2,{base},"r":2.0}}"#);
        assert!(matches!(
            CoefficientSpec::from_json_str(&critical),
            Err(Error::CriticalExponent { d: 2 })
        ));
        let aniso = format!(r#"{{"dim":2,{base},"r":4.0,"period":[1.0,2.0]}}"#);
        assert!(matches!(CoefficientSpec::from_json_str(&aniso), Err(Error::Config(_))));
        let unit = format!(r#"{{"dim":2,{base},"r":4.0,"period":[1.0,1.0]}}"#);
        assert!(CoefficientSpec::from_json_str(&unit).is_ok());
        let not_lr = format!(
            r#"{{"dim":2,{base},"r":4.0,"defect":{{"kind":"power","amplitude":1.0,"s":0.4}}}}"#
        );
        assert!(matches!(CoefficientSpec::from_json_str(&not_lr), Err(Error::Config(_))));
        assert!(CoefficientSpec::from_json_str("{").is_err());
        let unknown = format!(r#"{{"dim":1,{base},"r":4.0,"extra":1}}"#);
        assert!(CoefficientSpec::from_json_str(&unknown).is_err());
    }

    #[test]
    fn ellipticity_pass_and_fail() {
        let rep = validate_ellipticity(&sin_1d(DefectPart::None), 64, 4.0).unwrap();
        assert!(rep.pass);
        assert!((rep.min - 1.0).abs() < 1e-3 && (rep.max - 3.0).abs() < 1e-3);

        let s = CoefficientSpec {
            periodic: PeriodicPart::Constant { value: 1.0 },
            defect: DefectPart::Gaussian {
                amplitude: -2.0,
                width: 1.0,
                center: None,
            },
            ..sin_1d(DefectPart::None)
        };
        match validate_ellipticity(&s, 64, 4.0) {
            Err(Error::ValidationFailed { point, value, .. }) => {
                assert!(value < 1.0 / 4.0);
                assert!(point[0].abs() < 1.0);
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn ellipticity_2d_dense_sampling() {
        let s = CoefficientSpec {
            dim: 2,
            periodic: PeriodicPart::SinProduct { base: 2.0, amp: 1.0 },
            defect: DefectPart::Power {
                amplitude: 1.0,
                s: 2.0,
                center: None,
            },
            r: 4.0,
            mu: 4.0,
            alpha: None,
            period: None,
        };
        let rep = validate_ellipticity(&s, 64, 8.0).unwrap();
        // Oracle: a_per ∈ [1, 3] and 0 < ã ≤ 1, so a ∈ (1, 4].
        assert!(rep.pass && rep.min >= 1.0 - 1e-12 && rep.max <= 4.0);
        assert_eq!(rep.samples, 1025 * 1025);
    }

    #[test]
    fn lr_norm_examples() {
        assert_eq!(lr_norm_estimate(&sin_1d(DefectPart::None), 10.0, 32), 0.0);

        let bump = CoefficientSpec {
            r: 2.0,
            ..sin_1d(DefectPart::Bump {
                amplitude: 1.0,
                radius: 0.5,
                center: None,
            })
        };
        let coarse = lr_norm_estimate(&bump, 2.0, 256);
        let fine = lr_norm_estimate(&bump, 4.0, 2048);
        assert!(coarse > 0.0 && coarse < 1.2);
        assert!((coarse - fine).abs() < 1e-3);

        // ∫ (1+|y|)^-2 over [-R, R] = 2 - 2/(1+R).
        let power = CoefficientSpec {
            r: 2.0,
            ..sin_1d(DefectPart::Power {
                amplitude: 1.0,
                s: 1.0,
                center: None,
            })
        };
        for radius in [10.0f64, 100.0, 1000.0] {
            let exact = (2.0 - 2.0 / (1.0 + radius)).sqrt();
            let est = lr_norm_estimate(&power, radius, 64);
            assert!((est - exact).abs() < 1e-4, "R={radius}: {est} vs {exact}");
        }
        assert!((lr_norm_estimate(&power, 1000.0, 64) - 2f64.sqrt()).abs() < 2e-3);
    }

    #[test]
    fn smoothed_checkerboard_phases() {
        let p = PeriodicPart::Checkerboard {
            lo: 1.0,
            hi: 4.0,
            sharpness: 20.0,
        };
        assert!((p.eval(&[0.25]) - 4.0).abs() < 1e-12);
        assert!((p.eval(&[0.75]) - 1.0).abs() < 1e-12);
        assert!((p.eval(&[0.25, 0.75]) - 1.0).abs() < 1e-12);
    }

    fn periodic_library() -> Vec<PeriodicPart> {
        vec![
            PeriodicPart::SinProduct { base: 2.0, amp: 1.0 },
            PeriodicPart::Laminate {
                base: 2.0,
                amp: 0.5,
                axis: 1,
            },
            PeriodicPart::Checkerboard {
                lo: 1.0,
                hi: 4.0,
                sharpness: 5.0,
            },
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        // Dyadic samples keep y + 1 exactly representable, so period
        // reduction must give bit-identical values.
        #[test]
        fn periodic_part_is_exactly_periodic(a in -(1i64 << 24)..(1i64 << 24), b in -(1i64 << 24)..(1i64 << 24), k in 0usize..2) {
            let y = [a as f64 / (1u64 << 20) as f64, b as f64 / (1u64 << 20) as f64];
            let mut shifted = y;
            shifted[k] += 1.0;
            for p in periodic_library() {
                prop_assert_eq!(p.eval(&y), p.eval(&shifted));
            }
        }

        #[test]
        fn periodic_part_is_periodic_for_arbitrary_reals(y0 in -50.0f64..50.0, y1 in -50.0f64..50.0, k in 0usize..2) {
            let y = [y0, y1];
            let mut shifted = y;
            shifted[k] += 1.0;
            for p in periodic_library() {
                prop_assert!((p.eval(&y) - p.eval(&shifted)).abs() < 1e-12);
            }
        }

        #[test]
        fn power_defect_decay_bound(y0 in -1e3f64..1e3, y1 in -1e3f64..1e3, s in 0.6f64..3.0, amp in 0.1f64..2.0) {
            let d = DefectPart::Power { amplitude: amp, s, center: None };
            let y = [y0, y1];
            let r = (y0 * y0 + y1 * y1).sqrt();
            prop_assert!(d.eval(&y).abs() <= amp * (1.0 + r).powf(-s) * (1.0 + 1e-12));
        }

        #[test]
        fn lr_norm_monotone_in_radius(r1 in 1.0f64..20.0, extra in 0.0f64..20.0) {
            let spec = sin_1d(DefectPart::Power { amplitude: 1.0, s: 0.5, center: None });
            prop_assert!(lr_norm_estimate(&spec, r1 + extra, 16) >= lr_norm_estimate(&spec, r1, 16));
        }
    }
}
