//! Smooth source terms `f` for the oscillatory and homogenized problems.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    /// `f ≡ value`.
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
    /// `amplitude · exp(-|x - center|² / width²)`.
    GaussianBump {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "default_width")]
        width: f64,
    },
    /// `amplitude · Π_k cos(frequency · π x_k / 2)`.
    CosineProduct {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_width() -> f64 {
    0.5
}

impl Default for Source {
    fn default() -> Self {
        Source::Constant { value: 1.0 }
    }
}

impl Source {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Source::Constant { value } if !value.is_finite() => Err(Error::config("source value must be finite")),
            Source::GaussianBump { width, center, amplitude } => {
                if !(*width > 0.0 && width.is_finite() && amplitude.is_finite()) {
                    return Err(Error::config("gaussian source needs a positive width"));
                }
                if let Some(c) = center {
                    if c.len() != dim || c.iter().any(|v| !v.is_finite()) {
                        return Err(Error::config("gaussian source center has the wrong dimension"));
                    }
                }
                Ok(())
            }
            Source::CosineProduct { amplitude, frequency } if !(amplitude.is_finite() && frequency.is_finite()) => {
                Err(Error::config("cosine source parameters must be finite"))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Source::Constant { value } => *value,
            Source::GaussianBump { amplitude, center, width } => {
                let r2: f64 = match center {
                    Some(c) => x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum(),
                    None => x.iter().map(|a| a * a).sum(),
                };
                amplitude * (-r2 / (width * width)).exp()
            }
            Source::CosineProduct { amplitude, frequency } => {
                amplitude * x.iter().map(|&v| (frequency * PI * v / 2.0).cos()).product::<f64>()
            }
        }
    }

    /// 1D antiderivative `F(x) = ∫_{lo}^x f`.
    pub fn antiderivative_1d(&self, lo: f64, x: f64) -> f64 {
        let prim = |t: f64| match self {
            Source::Constant { value } => value * t,
            Source::GaussianBump { amplitude, center, width } => {
                let c = center.as_ref().map_or(0.0, |c| c[0]);
                amplitude * width * PI.sqrt() / 2.0 * libm::erf((t - c) / width)
            }
            Source::CosineProduct { amplitude, frequency } => {
                let k = frequency * PI / 2.0;
                if k == 0.0 {
                    amplitude * t
                } else {
                    amplitude * (k * t).sin() / k
                }
            }
        };
        prim(x) - prim(lo)
    }

    pub fn scaled(&self, c: f64) -> Source {
        match self.clone() {
            Source::Constant { value } => Source::Constant { value: c * value },
            Source::GaussianBump { amplitude, center, width } => Source::GaussianBump {
                amplitude: c * amplitude,
                center,
                width,
            },
            Source::CosineProduct { amplitude, frequency } => Source::CosineProduct {
                amplitude: c * amplitude,
                frequency,
            },
        }
    }
}
