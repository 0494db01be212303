//! Exact canonical ensemble of the ideal Bose gas in a periodic box.
//!
//! The partition functions obey `N Y(N) = sum_{n=1}^N C_n Y(N-n)` with the
//! single-cycle weight `C_n = V (4 pi n beta)^(-d/2) sum_z exp(-L^2 z^2 / 4 n beta)`,
//! which by Poisson summation equals `sum_k exp(-n beta k^2)` over the dual lattice.
//!
//! `Y(N)` overflows doubles for a few hundred particles, so every entry is kept
//! as `mantissa * e^exponent` with an integer exponent. Ratios `Y(N-i)/Y(N)`
//! then carry relative error of a few ulp regardless of `N`, which a plain
//! `ln Y` representation cannot offer once `|ln Y|` reaches the thousands.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::geometry::SimulationBox;
use crate::heat_kernel::{log_heat_kernel, theta_coefficient_unchecked};

/// Largest exponent gap kept in sums; `e^-745` underflows anyway.
const MAX_GAP: usize = 745;

/// `mantissa * e^exponent`, mantissa in `[1, e)` or exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Scaled {
    mantissa: f64,
    exponent: i64,
}

impl Scaled {
    const ONE: Scaled = Scaled { mantissa: 1.0, exponent: 0 };

    fn from_ln(ln: f64) -> Self {
        let k = ln.floor();
        Self { mantissa: (ln - k).exp(), exponent: k as i64 }.normalized()
    }

    fn normalized(self) -> Self {
        if self.mantissa == 0.0 {
            return Self { mantissa: 0.0, exponent: 0 };
        }
        let k = self.mantissa.ln().floor();
        let mut out = Self { mantissa: self.mantissa * (-k).exp(), exponent: self.exponent + k as i64 };
        // Guard the boundaries against rounding in ln/exp.
        if out.mantissa >= std::f64::consts::E {
            out.mantissa /= std::f64::consts::E;
            out.exponent += 1;
        } else if out.mantissa < 1.0 {
            out.mantissa *= std::f64::consts::E;
            out.exponent -= 1;
        }
        out
    }

    fn ln(self) -> f64 {
        self.exponent as f64 + self.mantissa.ln()
    }
}

/// Exact `e^-k` for integer gaps, so no `exp` call sits in the recursion loop.
fn gap_table() -> Vec<f64> {
    (0..=MAX_GAP).map(|k| (-(k as f64)).exp()).collect()
}

/// Canonical partition functions `Y(0..=N)` and single-cycle weights `C_1..=C_N`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanonicalEnsembleTable {
    #[serde(rename = "box")]
    bx: SimulationBox,
    beta: f64,
    n_particles: usize,
    cycle_weights: Vec<Scaled>,
    partition: Vec<Scaled>,
}

/// Cycle densities together with the finite-volume infinite-cycle estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSpectrumExact {
    /// `densities[n - 1]` is the density of particles in cycles of length `n`.
    pub densities: Vec<f64>,
    pub rho: f64,
    pub cutoff: usize,
    /// `rho - sum_{n <= cutoff} densities`, clamped to `[0, rho]`.
    pub rho_inf_estimate: f64,
    pub cutoff_clamped: bool,
}

/// Terms of the short-cycle / infinite-cycle split of `sigma(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub sigma: f64,
    /// `sum_{n <= cutoff} exp(-x^2 / 4 n beta) rho(n)`.
    pub short_cycles: f64,
    pub rho_inf_estimate: f64,
    pub residual: f64,
    pub cutoff: usize,
    pub cutoff_clamped: bool,
}

/// Smallest cutoff constant for which the large-cycle sandwich applies.
pub fn minimal_cutoff_constant() -> f64 {
    1.0 / (4.0 * std::f64::consts::PI)
}

impl CanonicalEnsembleTable {
    /// Builds `Y(0..=n)` for `n` free bosons in the periodic box `bx`.
    pub fn build(bx: SimulationBox, beta: f64, n: usize) -> Result<Self> {
        ensure_positive("beta", beta)?;
        if !bx.is_periodic() {
            return Err(Error::InvalidArgument("canonical tables need a finite box".into()));
        }
        let origin = vec![0.0; bx.dim()];
        let log_volume = bx.volume().ln();
        let mut cycle_weights = Vec::with_capacity(n + 1);
        cycle_weights.push(Scaled::ONE);
        for k in 1..=n {
            let ln_c = log_volume + log_heat_kernel(k as f64 * beta, &origin, &bx)?;
            cycle_weights.push(Scaled::from_ln(ln_c));
        }

        let gaps = gap_table();
        let c_mant: Vec<f64> = cycle_weights.iter().map(|s| s.mantissa).collect();
        let c_exp: Vec<i64> = cycle_weights.iter().map(|s| s.exponent).collect();
        let mut y_mant = Vec::with_capacity(n + 1);
        let mut y_exp = Vec::with_capacity(n + 1);
        y_mant.push(1.0);
        y_exp.push(0i64);
        for m in 1..=n {
            // Term k is C_k Y(m - k); reversing Y aligns both sequences.
            let reference = (1..=m).map(|k| c_exp[k] + y_exp[m - k]).max().unwrap_or(0);
            let mut sum = 0.0;
            for k in 1..=m {
                let gap = (reference - c_exp[k] - y_exp[m - k]) as usize;
                if gap <= MAX_GAP {
                    sum += c_mant[k] * y_mant[m - k] * gaps[gap];
                }
            }
            let y = Scaled { mantissa: sum / m as f64, exponent: reference }.normalized();
            y_mant.push(y.mantissa);
            y_exp.push(y.exponent);
        }
        let partition = y_mant
            .into_iter()
            .zip(y_exp)
            .map(|(mantissa, exponent)| Scaled { mantissa, exponent })
            .collect();

        Ok(Self { bx, beta, n_particles: n, cycle_weights, partition })
    }

    pub fn simulation_box(&self) -> &SimulationBox {
        &self.bx
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn volume(&self) -> f64 {
        self.bx.volume()
    }

    pub fn density(&self) -> f64 {
        self.n_particles as f64 / self.volume()
    }

    /// `ln Y(m)` for `0 <= m <= N`.
    pub fn log_y(&self, m: usize) -> f64 {
        self.partition[m].ln()
    }

    /// `ln Y(0..=N)`.
    pub fn log_y_values(&self) -> Vec<f64> {
        self.partition.iter().map(|s| s.ln()).collect()
    }

    /// `ln C_n` for `1 <= n <= N`.
    pub fn log_cycle_weight(&self, n: usize) -> f64 {
        self.cycle_weights[n].ln()
    }

    /// `Y(N - i) / Y(N)`; zero for `i > N`.
    pub fn ratio(&self, i: usize) -> f64 {
        self.ratio_between(self.n_particles.wrapping_sub(i), self.n_particles, i)
    }

    fn ratio_between(&self, num: usize, den: usize, i: usize) -> f64 {
        if i > self.n_particles {
            return 0.0;
        }
        let a = self.partition[num];
        let b = self.partition[den];
        let gap = a.exponent - b.exponent;
        if gap < -(MAX_GAP as i64) {
            return 0.0;
        }
        (a.mantissa / b.mantissa) * (gap as f64).exp()
    }

    /// `ln(Y(N - i) / Y(N))`; `-inf` for `i > N`.
    pub fn log_ratio(&self, i: usize) -> f64 {
        if i > self.n_particles {
            return f64::NEG_INFINITY;
        }
        let a = self.partition[self.n_particles - i];
        let b = self.partition[self.n_particles];
        (a.exponent - b.exponent) as f64 + (a.mantissa / b.mantissa).ln()
    }

    /// Largest relative violation of `N Y(N) = sum_n C_n Y(N - n)` over all table rows.
    pub fn recursion_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for m in 1..=self.n_particles {
            let top = self.partition[m];
            let mut sum = 0.0;
            for k in 1..=m {
                let c = self.cycle_weights[k];
                let y = self.partition[m - k];
                let gap = c.exponent + y.exponent - top.exponent;
                sum += c.mantissa * y.mantissa / top.mantissa * (gap as f64).exp();
            }
            worst = worst.max((sum / m as f64 - 1.0).abs());
        }
        worst
    }

    /// Density of particles in cycles of length `n`: `(C_n / V) Y(N - n) / Y(N)`.
    pub fn cycle_density(&self, n: usize) -> Result<f64> {
        if n == 0 || n > self.n_particles {
            return Err(Error::Domain(format!(
                "cycle length {n} outside 1..={}",
                self.n_particles
            )));
        }
        Ok(self.cycle_density_unchecked(n))
    }

    fn cycle_density_unchecked(&self, n: usize) -> f64 {
        let c = self.cycle_weights[n];
        let a = self.partition[self.n_particles - n];
        let b = self.partition[self.n_particles];
        let gap = c.exponent + a.exponent - b.exponent;
        c.mantissa * a.mantissa / b.mantissa * (gap as f64).exp() / self.volume()
    }

    /// Cycle densities for `n = 1..=N`.
    pub fn cycle_densities(&self) -> Vec<f64> {
        (1..=self.n_particles).map(|n| self.cycle_density_unchecked(n)).collect()
    }

    /// Probability that a given particle sits in a cycle of length `n`.
    pub fn cycle_probability(&self, n: usize) -> Result<f64> {
        Ok(self.cycle_density(n)? / self.density())
    }

    /// Cutoff `ceil(c L^2 / beta)` clamped to `N`; the flag reports clamping.
    pub fn cutoff(&self, c: f64) -> Result<(usize, bool)> {
        if !(c.is_finite() && c > minimal_cutoff_constant()) {
            return Err(Error::InvalidArgument(format!(
                "cutoff constant must exceed 1/(4 pi), got {c}"
            )));
        }
        let l = self.bx.side();
        let raw = (c * l * l / self.beta).ceil();
        if raw >= self.n_particles as f64 {
            Ok((self.n_particles, raw > self.n_particles as f64))
        } else {
            Ok((raw as usize, false))
        }
    }

    /// Densities plus `rho_inf_estimate = rho - sum_{n <= n_cut} rho(n)`.
    pub fn cycle_spectrum(&self, c: f64) -> Result<CycleSpectrumExact> {
        let (cutoff, cutoff_clamped) = self.cutoff(c)?;
        let densities = self.cycle_densities();
        let rho = self.density();
        let short: f64 = densities[..cutoff].iter().sum();
        let rho_inf_estimate = (rho - short).clamp(0.0, rho);
        Ok(CycleSpectrumExact { densities, rho, cutoff, rho_inf_estimate, cutoff_clamped })
    }

    /// Off-diagonal correlation `sigma(x) = sum_n c_n(x) rho(n)`.
    pub fn odlro_correlation(&self, x: &[f64]) -> Result<f64> {
        self.bx.check_point(x)?;
        Ok(self.odlro_unchecked(x))
    }

    fn odlro_unchecked(&self, x: &[f64]) -> f64 {
        (1..=self.n_particles)
            .map(|n| {
                theta_coefficient_unchecked(n, x, self.bx.side(), self.beta)
                    * self.cycle_density_unchecked(n)
            })
            .sum()
    }

    /// `sigma(x)` minus its short-cycle plus infinite-cycle approximation.
    pub fn verify_decomposition(&self, x: &[f64], c: f64) -> Result<Decomposition> {
        self.bx.check_point(x)?;
        let spectrum = self.cycle_spectrum(c)?;
        let mut r2 = 0.0;
        for &xi in x {
            let d = self.bx.min_image_1d(xi);
            r2 += d * d;
        }
        let short_cycles: f64 = spectrum.densities[..spectrum.cutoff]
            .iter()
            .enumerate()
            .map(|(i, rho_n)| (-r2 / (4.0 * (i + 1) as f64 * self.beta)).exp() * rho_n)
            .sum();
        let sigma = self.odlro_unchecked(x);
        Ok(Decomposition {
            sigma,
            short_cycles,
            rho_inf_estimate: spectrum.rho_inf_estimate,
            residual: sigma - short_cycles - spectrum.rho_inf_estimate,
            cutoff: spectrum.cutoff,
            cutoff_clamped: spectrum.cutoff_clamped,
        })
    }

    /// Mean occupation of the plane wave with wavevector `(2 pi / L) mode`.
    pub fn mode_occupation(&self, mode: &[i64]) -> Result<f64> {
        if mode.len() != self.bx.dim() {
            return Err(Error::InvalidArgument(format!(
                "mode has {} components, box dimension is {}",
                mode.len(),
                self.bx.dim()
            )));
        }
        let q = 2.0 * std::f64::consts::PI / self.bx.side();
        let k2: f64 = mode.iter().map(|&m| (q * m as f64).powi(2)).sum();
        Ok(self.occupation_for_k2(k2))
    }

    fn occupation_for_k2(&self, k2: f64) -> f64 {
        let mut total = 0.0;
        for i in 1..=self.n_particles {
            let r = self.ratio(i);
            let term = (-self.beta * i as f64 * k2).exp() * r;
            total += term;
            if k2 > 0.0 && term < 1e-18 * total {
                break;
            }
        }
        total
    }

    /// `Prob(n_0 >= i) = Y(N - i) / Y(N)`.
    pub fn zero_mode_tail(&self, i: usize) -> f64 {
        if i == 0 {
            return 1.0;
        }
        self.ratio(i)
    }

    /// Zero-mode occupation per volume, `<n_0> / V`.
    pub fn condensate_density(&self) -> f64 {
        self.occupation_for_k2(0.0) / self.volume()
    }

    /// `(1 / beta V) ln Prob(n_0 >= ceil(V a))`.
    pub fn large_deviation_rate(&self, a: f64) -> Result<f64> {
        ensure_positive("a", a)?;
        let i = self.large_deviation_index(a)?;
        Ok(self.log_ratio(i) / (self.beta * self.volume()))
    }

    /// `ceil(V a)`, the zero-mode threshold used by [`Self::large_deviation_rate`].
    pub fn large_deviation_index(&self, a: f64) -> Result<usize> {
        let raw = (self.volume() * a).ceil();
        if raw > self.n_particles as f64 {
            return Err(Error::Domain(format!(
                "V a = {} exceeds the particle number {}",
                self.volume() * a,
                self.n_particles
            )));
        }
        Ok(raw as usize)
    }
}

/// Same as [`CanonicalEnsembleTable::build`].
pub fn build_table(bx: SimulationBox, beta: f64, n: usize) -> Result<CanonicalEnsembleTable> {
    CanonicalEnsembleTable::build(bx, beta, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(dim: usize, side: f64, beta: f64, n: usize) -> CanonicalEnsembleTable {
        CanonicalEnsembleTable::build(SimulationBox::new(dim, side).unwrap(), beta, n).unwrap()
    }

    #[test]
    fn scaled_roundtrip() {
        for &v in &[-800.3, -1.0, 0.0, 0.5, 1.0, 2.7, 1234.56] {
            let s = Scaled::from_ln(v);
            assert!((1.0..std::f64::consts::E).contains(&s.mantissa));
            assert!((s.ln() - v).abs() < 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn trivial_and_single_particle_tables() {
        let t0 = table(3, 4.0, 1.0, 0);
        assert_eq!(t0.log_y(0), 0.0);
        assert_eq!(t0.zero_mode_tail(0), 1.0);

        let t1 = table(3, 4.0, 1.0, 1);
        assert_eq!(t1.log_y(0), 0.0);
        assert!((t1.log_y(1) - t1.log_cycle_weight(1)).abs() < 1e-14);
        let v = t1.volume();
        assert!((t1.cycle_density(1).unwrap() - 1.0 / v).abs() < 1e-15 / v);
    }

    #[test]
    fn two_particles_match_cycle_types() {
        let t = table(3, 4.0, 1.0, 2);
        let c1 = t.log_cycle_weight(1).exp();
        let c2 = t.log_cycle_weight(2).exp();
        let y2 = (c1 * c1 + c2) / 2.0;
        assert!((t.log_y(2).exp() / y2 - 1.0).abs() < 1e-14);
        let rho1 = c1 / t.volume() * c1 / y2;
        assert!((t.cycle_density(1).unwrap() / rho1 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn domain_errors() {
        let t = table(1, 3.0, 0.5, 4);
        assert!(matches!(t.cycle_density(0), Err(Error::Domain(_))));
        assert!(matches!(t.cycle_density(5), Err(Error::Domain(_))));
        assert_eq!(t.zero_mode_tail(5), 0.0);
        assert!(t.large_deviation_rate(10.0).is_err());
        assert!(t.cycle_spectrum(0.01).is_err());
        assert!(t.mode_occupation(&[1, 0]).is_err());
        assert!(CanonicalEnsembleTable::build(SimulationBox::free(3).unwrap(), 1.0, 3).is_err());
    }

    #[test]
    fn recursion_and_sum_rule_hold() {
        for &(d, l, beta, n) in &[(1, 3.0, 0.5, 50), (2, 4.0, 1.0, 80), (3, 5.0, 1.0, 200)] {
            let t = table(d, l, beta, n);
            assert!(t.recursion_residual() < 1e-12);
            let total: f64 = t.cycle_densities().iter().sum();
            assert!((total / t.density() - 1.0).abs() < 1e-12);
            let sigma0 = t.odlro_correlation(&vec![0.0; d]).unwrap();
            assert!((sigma0 / t.density() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mode_tail_is_monotone() {
        let t = table(3, 6.0, 1.0, 60);
        let mut prev = 1.0;
        for i in 0..=60 {
            let p = t.zero_mode_tail(i);
            assert!(p <= prev * (1.0 + 1e-14) && p >= 0.0);
            prev = p;
        }
    }

    #[test]
    fn excited_modes_obey_bose_bound() {
        let t = table(3, 5.0, 1.0, 40);
        for mode in [[1, 0, 0], [1, 1, 0], [2, 1, 1]] {
            let q = 2.0 * std::f64::consts::PI / 5.0;
            let k2: f64 = mode.iter().map(|&m| (q * m as f64).powi(2)).sum();
            let occ = t.mode_occupation(&mode).unwrap();
            assert!(occ <= 1.0 / ((t.beta() * k2).exp() - 1.0));
        }
    }

    #[test]
    fn low_temperature_fills_ground_state() {
        let t = table(3, 3.0, 50.0, 10);
        assert!((t.mode_occupation(&[0, 0, 0]).unwrap() - 10.0).abs() < 1e-6);
    }

    #[test]
    fn decomposition_at_origin_vanishes() {
        let t = table(3, 6.0, 1.0, 30);
        let dec = t.verify_decomposition(&[0.0; 3], 1.0).unwrap();
        assert!(dec.residual.abs() < 1e-12);
    }

    #[test]
    fn cutoff_clamps_to_particle_number() {
        let t = table(3, 6.0, 1.0, 10);
        let (cut, clamped) = t.cutoff(1.0).unwrap();
        assert_eq!(cut, 10);
        assert!(clamped);
    }
}
