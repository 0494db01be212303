//! Infinite-volume grand-canonical thermodynamics of the ideal Bose gas.
//!
//! With `lambda = -beta mu`:
//! `p = (4 pi beta)^(-d/2) sum_n e^(-lambda n) n^(-d/2 - 1)` (this is `ln Z / V`),
//! `rho = (4 pi beta)^(-d/2) sum_n e^(-lambda n) n^(-d/2)`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::series::bose_series;

fn prefactor(beta: f64, dim: usize) -> f64 {
    (4.0 * std::f64::consts::PI * beta).powf(-(dim as f64) / 2.0)
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    Ok(())
}

fn check_mu_nonpositive(mu: f64) -> Result<()> {
    ensure_finite("mu", mu)?;
    if mu > 0.0 {
        return Err(Error::Domain(format!("chemical potential must not be positive, got {mu}")));
    }
    Ok(())
}

fn check_mu_negative(mu: f64) -> Result<()> {
    ensure_finite("mu", mu)?;
    if mu >= 0.0 {
        return Err(Error::Domain(format!("chemical potential must be negative, got {mu}")));
    }
    Ok(())
}

/// Pressure `p(beta, mu)` in units where it equals `ln Z / V`.
pub fn pressure(beta: f64, mu: f64, dim: usize) -> Result<f64> {
    ensure_positive("beta", beta)?;
    check_dim(dim)?;
    check_mu_nonpositive(mu)?;
    Ok(prefactor(beta, dim) * bose_series(dim as f64 / 2.0 + 1.0, -beta * mu))
}

/// Density `rho(beta, mu)`; `+inf` at `mu = 0` when `d <= 2`.
pub fn density(beta: f64, mu: f64, dim: usize) -> Result<f64> {
    ensure_positive("beta", beta)?;
    check_dim(dim)?;
    check_mu_nonpositive(mu)?;
    Ok(prefactor(beta, dim) * bose_series(dim as f64 / 2.0, -beta * mu))
}

/// `rho(beta, 0)`, finite only for `d >= 3`.
pub fn critical_density(beta: f64, dim: usize) -> Result<f64> {
    density(beta, 0.0, dim)
}

/// Chemical potential `mu*(rho) <= 0` solving `rho(beta, mu*) = rho`; zero at and above `rho_c`.
pub fn solve_mu(beta: f64, rho: f64, dim: usize) -> Result<f64> {
    ensure_positive("beta", beta)?;
    ensure_positive("density", rho)?;
    check_dim(dim)?;
    if rho >= critical_density(beta, dim)? {
        return Ok(0.0);
    }
    let pre = prefactor(beta, dim);
    let s = dim as f64 / 2.0;
    // Bisection in ln(lambda): density is decreasing in lambda = -beta mu.
    let above = |lambda: f64| pre * bose_series(s, lambda) > rho;
    let mut hi = 1.0f64;
    while above(hi) {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    while !above(lo) {
        lo /= 2.0;
        if lo < 1e-300 {
            return Ok(-lo / beta);
        }
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if above(mid.exp()) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(-(0.5 * (a + b)).exp() / beta)
}

/// Free energy density `f(beta, rho) = sup_{mu <= 0} [rho mu - p(beta, mu) / beta]`.
pub fn free_energy(beta: f64, rho: f64, dim: usize) -> Result<f64> {
    let mu = solve_mu(beta, rho, dim)?;
    Ok(rho * mu - pressure(beta, mu, dim)? / beta)
}

/// Density of particles in cycles of length `n`: `e^(beta mu n) (4 pi n beta)^(-d/2)`.
pub fn grand_cycle_density(n: usize, beta: f64, mu: f64, dim: usize) -> Result<f64> {
    ensure_positive("beta", beta)?;
    check_dim(dim)?;
    check_mu_negative(mu)?;
    if n == 0 {
        return Err(Error::Domain("cycle length must be at least 1".into()));
    }
    let n = n as f64;
    Ok((beta * mu * n).exp() * prefactor(n * beta, dim))
}

/// `sum_n e^(beta mu n) (4 pi n beta)^(-d/2) e^(-x^2 / 4 n beta)`, an upper bound on `sigma_mu(x)`.
pub fn sigma_upper_bound(x: &[f64], beta: f64, mu: f64, dim: usize) -> Result<f64> {
    ensure_positive("beta", beta)?;
    check_dim(dim)?;
    check_mu_negative(mu)?;
    if x.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "point has {} coordinates, dimension is {dim}",
            x.len()
        )));
    }
    for &c in x {
        ensure_finite("coordinate", c)?;
    }
    let r2: f64 = x.iter().map(|c| c * c).sum();
    if r2 == 0.0 {
        return density(beta, mu, dim);
    }
    let lambda = -beta * mu;
    let half_d = dim as f64 / 2.0;
    let log_term = |n: f64| -lambda * n - r2 / (4.0 * n * beta) - half_d * (4.0 * std::f64::consts::PI * n * beta).ln();
    // Terms rise until about n = |x| / (2 sqrt(beta lambda)) and decay geometrically after.
    let peak = (r2.sqrt() / (2.0 * (beta * lambda).sqrt())).max(1.0);
    let mut total = 0.0;
    let mut n = 1.0f64;
    loop {
        let t = log_term(n).exp();
        total += t;
        if n > peak && (t <= 1e-17 * total || t == 0.0) {
            break;
        }
        n += 1.0;
    }
    Ok(total)
}

/// Grand-canonical state point of the ideal gas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrandThermo {
    beta: f64,
    mu: f64,
    dim: usize,
}

impl GrandThermo {
    pub fn new(beta: f64, mu: f64, dim: usize) -> Result<Self> {
        ensure_positive("beta", beta)?;
        check_dim(dim)?;
        check_mu_nonpositive(mu)?;
        Ok(Self { beta, mu, dim })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pressure(&self) -> f64 {
        prefactor(self.beta, self.dim) * bose_series(self.dim as f64 / 2.0 + 1.0, -self.beta * self.mu)
    }

    pub fn density(&self) -> f64 {
        prefactor(self.beta, self.dim) * bose_series(self.dim as f64 / 2.0, -self.beta * self.mu)
    }

    pub fn critical_density(&self) -> f64 {
        prefactor(self.beta, self.dim) * bose_series(self.dim as f64 / 2.0, 0.0)
    }
}
