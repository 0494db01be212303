//! Nonnegative, spherically symmetric pair potentials.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Pair potential `U(|x|)` with values in `[0, +inf]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairPotential {
    #[default]
    Zero,
    /// `u0 exp(-r^2 / range^2)`.
    Gaussian { u0: f64, range: f64 },
    /// `+inf` for `r < radius`, zero outside.
    HardCore { radius: f64 },
    /// Linear interpolation through `(radii[i], values[i])`; zero beyond the last radius.
    Tabulated { radii: Vec<f64>, values: Vec<f64> },
}


/// Surface area of the unit sphere in `R^d`.
pub(crate) fn unit_sphere_area(dim: usize) -> f64 {
    let h = dim as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

impl PairPotential {
    pub fn gaussian(u0: f64, range: f64) -> Result<Self> {
        let p = PairPotential::Gaussian { u0, range };
        p.validate()?;
        Ok(p)
    }

    pub fn hard_core(radius: f64) -> Result<Self> {
        let p = PairPotential::HardCore { radius };
        p.validate()?;
        Ok(p)
    }

    pub fn tabulated(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let p = PairPotential::Tabulated { radii, values };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match self {
            PairPotential::Zero => Ok(()),
            PairPotential::Gaussian { u0, range } => {
                if !(u0.is_finite() && *u0 >= 0.0) {
                    return bad(format!("gaussian strength must be finite and nonnegative, got {u0}"));
                }
                if !(range.is_finite() && *range > 0.0) {
                    return bad(format!("gaussian range must be positive, got {range}"));
                }
                Ok(())
            }
            PairPotential::HardCore { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad(format!("hard-core radius must be positive, got {radius}"));
                }
                Ok(())
            }
            PairPotential::Tabulated { radii, values } => {
                if radii.len() < 2 || radii.len() != values.len() {
                    return bad("tabulated potential needs at least two (radius, value) pairs".into());
                }
                if !(radii[0].is_finite() && radii[0] >= 0.0) || radii.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
                    return bad("tabulated radii must be finite, nonnegative and strictly increasing".into());
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return bad("tabulated values must be finite and nonnegative".into());
                }
                Ok(())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PairPotential::Zero => true,
            PairPotential::Gaussian { u0, .. } => *u0 == 0.0,
            PairPotential::HardCore { .. } => false,
            PairPotential::Tabulated { values, .. } => values.iter().all(|&v| v == 0.0),
        }
    }

    /// `U` at squared distance `r2`.
    #[inline]
    pub fn value_r2(&self, r2: f64) -> f64 {
        match self {
            PairPotential::Zero => 0.0,
            PairPotential::Gaussian { u0, range } => u0 * (-r2 / (range * range)).exp(),
            PairPotential::HardCore { radius } => {
                if r2 < radius * radius {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            PairPotential::Tabulated { radii, values } => interpolate(radii, values, r2.sqrt()),
        }
    }

    /// `U` at distance `r`.
    pub fn value(&self, r: f64) -> f64 {
        self.value_r2(r * r)
    }

    /// `int_{R^d} U` in closed form; `None` when it diverges.
    pub fn integral(&self, dim: usize) -> Option<f64> {
        match self {
            PairPotential::Zero => Some(0.0),
            PairPotential::Gaussian { u0, range } => {
                Some(u0 * (std::f64::consts::PI * range * range).powf(dim as f64 / 2.0))
            }
            PairPotential::HardCore { .. } => None,
            PairPotential::Tabulated { radii, values } => {
                // Exact integral of r^(d-1) (a + b r) on each segment.
                let d = dim as f64;
                let mut total = 0.0;
                if radii[0] > 0.0 {
                    total += values[0] * radii[0].powf(d) / d;
                }
                for i in 0..radii.len() - 1 {
                    let (r0, r1) = (radii[i], radii[i + 1]);
                    let b = (values[i + 1] - values[i]) / (r1 - r0);
                    let a = values[i] - b * r0;
                    total += a * (r1.powf(d) - r0.powf(d)) / d + b * (r1.powf(d + 1.0) - r0.powf(d + 1.0)) / (d + 1.0);
                }
                Some(unit_sphere_area(dim) * total)
            }
        }
    }

    /// `int_{R^d} U` by radial double-exponential quadrature; `None` when it diverges.
    pub fn integral_numeric(&self, dim: usize) -> Option<f64> {
        let d = dim as f64;
        let radial = |lo: f64, hi: f64| {
            let f = |r: f64| r.powf(d - 1.0) * self.value(r);
            quadrature::double_exponential::integrate(f, lo, hi, 1e-14).integral
        };
        let total = match self {
            PairPotential::Zero => 0.0,
            PairPotential::Gaussian { range, .. } => radial(0.0, 9.0 * range),
            PairPotential::HardCore { .. } => return None,
            PairPotential::Tabulated { radii, .. } => {
                let mut t = if radii[0] > 0.0 { radial(0.0, radii[0]) } else { 0.0 };
                for w in radii.windows(2) {
                    t += radial(w[0], w[1]);
                }
                t
            }
        };
        Some(unit_sphere_area(dim) * total)
    }

    /// Distance beyond which `U` vanishes identically, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            PairPotential::Zero => Some(0.0),
            PairPotential::Gaussian { .. } => None,
            PairPotential::HardCore { radius } => Some(*radius),
            PairPotential::Tabulated { radii, .. } => radii.last().copied(),
        }
    }
}

fn interpolate(radii: &[f64], values: &[f64], r: f64) -> f64 {
    let last = radii.len() - 1;
    if r >= radii[last] {
        return 0.0;
    }
    if r <= radii[0] {
        return values[0];
    }
    let i = radii.partition_point(|&x| x <= r) - 1;
    let t = (r - radii[i]) / (radii[i + 1] - radii[i]);
    values[i] + t * (values[i + 1] - values[i])
}
