//! Periodic simulation box and thermodynamic parameters.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};

/// A `dim`-dimensional cube of side `side` with periodic boundary conditions.
///
/// An infinite side describes free space: there are no periodic images and
/// the minimum-image rule is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationBox {
    dim: usize,
    side: f64,
}

impl SimulationBox {
    pub fn new(dim: usize, side: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        ensure_positive("box side", side)?;
        Ok(Self { dim, side })
    }

    /// Free space in `dim` dimensions.
    pub fn free(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        Ok(Self { dim, side: f64::INFINITY })
    }

    /// Cube holding `n` particles at density `rho`, i.e. `side = (n / rho)^(1/d)`.
    pub fn with_density(dim: usize, n: usize, rho: f64) -> Result<Self> {
        ensure_positive("density", rho)?;
        if n == 0 {
            return Err(Error::InvalidArgument("particle number must be positive".into()));
        }
        Self::new(dim, (n as f64 / rho).powf(1.0 / dim as f64))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn side(&self) -> f64 {
        self.side
    }

    #[inline]
    pub fn is_periodic(&self) -> bool {
        self.side.is_finite()
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    /// Reduces one coordinate difference into `(-L/2, L/2]`.
    #[inline]
    pub fn min_image_1d(&self, dx: f64) -> f64 {
        if !self.is_periodic() {
            return dx;
        }
        let l = self.side;
        let r = dx - l * (dx / l).round();
        // `round` sends exact half-periods to either side; pin them to +L/2.
        if r <= -0.5 * l {
            r + l
        } else {
            r
        }
    }

    /// Minimum-image displacement `a - b`, written into `out`.
    pub fn min_image(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
            *o = self.min_image_1d(x - y);
        }
    }

    /// Squared minimum-image distance between `a` and `b`.
    #[inline]
    pub fn distance2(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| {
                let d = self.min_image_1d(x - y);
                d * d
            })
            .sum()
    }

    /// Maps a coordinate into `[0, L)`.
    #[inline]
    pub fn wrap_1d(&self, x: f64) -> f64 {
        if !self.is_periodic() {
            return x;
        }
        let w = x - self.side * (x / self.side).floor();
        if w >= self.side {
            0.0
        } else {
            w
        }
    }

    /// Integer image index of a coordinate, so that `x = wrap(x) + L * image(x)`.
    #[inline]
    pub fn image_1d(&self, x: f64) -> i64 {
        if !self.is_periodic() {
            return 0;
        }
        (x / self.side).floor() as i64
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, box dimension is {}",
                x.len(),
                self.dim
            )));
        }
        for &c in x {
            ensure_finite("coordinate", c)?;
        }
        Ok(())
    }
}

/// Which ensemble variable accompanies the inverse temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleVariable {
    Density(f64),
    ChemicalPotential(f64),
}

/// Inverse temperature together with exactly one of density or chemical potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoParams {
    beta: f64,
    variable: EnsembleVariable,
}

impl ThermoParams {
    pub fn canonical(beta: f64, rho: f64) -> Result<Self> {
        ensure_positive("beta", beta)?;
        ensure_positive("density", rho)?;
        Ok(Self { beta, variable: EnsembleVariable::Density(rho) })
    }

    pub fn grand(beta: f64, mu: f64) -> Result<Self> {
        ensure_positive("beta", beta)?;
        ensure_finite("mu", mu)?;
        Ok(Self { beta, variable: EnsembleVariable::ChemicalPotential(mu) })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn variable(&self) -> EnsembleVariable {
        self.variable
    }

    pub fn density(&self) -> Option<f64> {
        match self.variable {
            EnsembleVariable::Density(rho) => Some(rho),
            EnsembleVariable::ChemicalPotential(_) => None,
        }
    }

    pub fn mu(&self) -> Option<f64> {
        match self.variable {
            EnsembleVariable::ChemicalPotential(mu) => Some(mu),
            EnsembleVariable::Density(_) => None,
        }
    }
}
