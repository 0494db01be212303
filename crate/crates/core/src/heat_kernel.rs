//! Periodic Gaussian heat kernels, theta sums and discretized Brownian bridges.
//!
//! Units follow a kinetic operator `-Laplacian`: the free kernel
//! `g_t(x) = (4 pi t)^(-d/2) exp(-x^2 / 4t)` has variance `2t` per coordinate.
//! On the torus the kernel is the image sum over `x + L z`, `z` in `Z^d`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::geometry::SimulationBox;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Direct image sums switch to the Poisson-dual form beyond this many shells.
const MAX_DIRECT_SHELLS: usize = 50;

/// Relative size of the first neglected shell.
const SHELL_TOLERANCE: f64 = 1e-15;

/// `ln sum_{k in Z} exp(-a (k - b)^2)` for `a > 0`.
pub fn log_theta(a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0);
    let b0 = b - b.round();
    // Shell k contributes at most exp(-a (k - 1/2)^2) relative to the k = 0 term.
    let needed = (34.5 / a).sqrt() + 0.5;
    if needed > MAX_DIRECT_SHELLS as f64 {
        return log_theta_dual(a, b0);
    }
    // Factor out the largest term exp(-a b0^2).
    let mut sum = 1.0;
    let mut k = 1.0f64;
    loop {
        let shell = (-a * (k * k - 2.0 * k * b0)).exp() + (-a * (k * k + 2.0 * k * b0)).exp();
        sum += shell;
        if shell < SHELL_TOLERANCE * sum {
            break;
        }
        k += 1.0;
    }
    -a * b0 * b0 + sum.ln()
}

/// Poisson-resummed form: `sqrt(pi / a) sum_m exp(-pi^2 m^2 / a) cos(2 pi m b)`.
fn log_theta_dual(a: f64, b: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut sum = 1.0;
    let mut m = 1.0f64;
    loop {
        let damp = (-pi * pi * m * m / a).exp();
        if damp < 1e-18 {
            break;
        }
        sum += 2.0 * damp * (2.0 * pi * m * b).cos();
        m += 1.0;
    }
    0.5 * (pi / a).ln() + sum.ln()
}

/// `sum_{k in Z} exp(-a (k - b)^2)`.
pub fn theta_sum(a: f64, b: f64) -> f64 {
    log_theta(a, b).exp()
}

/// Gaussian-integral bracket `(sqrt(pi/a) - 1, sqrt(pi/a) + 1)` for the theta sum.
///
/// Holds for every real `b` because `exp(-a (s - b)^2)` is unimodal.
pub fn integral_sandwich(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidArgument(format!("sandwich needs a > 0, got {a}")));
    }
    ensure_finite("b", b)?;
    let integral = (std::f64::consts::PI / a).sqrt();
    Ok((integral - 1.0, integral + 1.0))
}

/// Log of the one-dimensional periodic kernel at displacement `x`.
fn log_kernel_1d(t: f64, x: f64, side: f64) -> f64 {
    let norm = -0.5 * (FOUR_PI * t).ln();
    if side.is_finite() {
        norm + log_theta(side * side / (4.0 * t), -x / side)
    } else {
        norm - x * x / (4.0 * t)
    }
}

/// `ln g_t(x)` summed over periodic images.
pub fn log_heat_kernel(t: f64, x: &[f64], bx: &SimulationBox) -> Result<f64> {
    ensure_positive("time", t)?;
    bx.check_point(x)?;
    Ok(x.iter().map(|&xi| log_kernel_1d(t, xi, bx.side())).sum())
}

/// Periodic heat kernel `(4 pi t)^(-d/2) sum_z exp(-(x + L z)^2 / 4t)`.
pub fn heat_kernel(t: f64, x: &[f64], bx: &SimulationBox) -> Result<f64> {
    log_heat_kernel(t, x, bx).map(f64::exp)
}

/// Unchecked log kernel for hot loops; coordinates must be finite and `t > 0`.
#[inline]
pub(crate) fn log_heat_kernel_unchecked(t: f64, x: &[f64], side: f64) -> f64 {
    x.iter().map(|&xi| log_kernel_1d(t, xi, side)).sum()
}

/// Finite-volume ideal-gas coefficient `c_n(x)`: ratio of the image sums at
/// `x` and at the origin for a winding-`n` loop at inverse temperature `beta`.
///
/// In free space this reduces to `exp(-x^2 / 4 n beta)`.
pub fn theta_coefficient(n: usize, x: &[f64], bx: &SimulationBox, beta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("winding number must be at least 1".into()));
    }
    ensure_positive("beta", beta)?;
    bx.check_point(x)?;
    Ok(theta_coefficient_unchecked(n, x, bx.side(), beta))
}

pub(crate) fn theta_coefficient_unchecked(n: usize, x: &[f64], side: f64, beta: f64) -> f64 {
    let t = n as f64 * beta;
    if !side.is_finite() {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        return (-r2 / (4.0 * t)).exp();
    }
    let a = side * side / (4.0 * t);
    let origin = log_theta(a, 0.0);
    x.iter().map(|&xi| log_theta(a, xi / side) - origin).sum::<f64>().exp()
}

/// Bounds on `c_n(x)` valid once `sqrt(4 pi n beta) > L`.
pub fn theta_coefficient_bounds(n: usize, bx: &SimulationBox, beta: f64) -> Option<(f64, f64)> {
    let w = (FOUR_PI * n as f64 * beta).sqrt();
    let l = bx.side();
    if !(w > l) {
        return None;
    }
    let d = bx.dim() as i32;
    Some((((w - l) / (w + l)).powi(d), ((w + l) / (w - l)).powi(d)))
}

/// A Brownian path on a uniform time grid, winding `winding` times around
/// imaginary time with `beads_per_leg` links per leg.
///
/// Coordinates are stored unwrapped. `wraps` records the torus image of the
/// end point relative to the start point; for a closed loop it is the
/// spatial winding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedPath {
    dim: usize,
    winding: usize,
    beads_per_leg: usize,
    time_step: f64,
    beads: Vec<f64>,
    wraps: Vec<i64>,
}

impl DiscretizedPath {
    /// Wraps unwrapped coordinates; `wraps` is derived from the end points.
    pub(crate) fn from_beads(
        winding: usize,
        beads_per_leg: usize,
        time_step: f64,
        beads: Vec<f64>,
        bx: &SimulationBox,
    ) -> Self {
        let dim = bx.dim();
        let n = beads.len() / dim;
        let wraps = (0..dim)
            .map(|c| bx.image_1d(beads[(n - 1) * dim + c]) - bx.image_1d(beads[c]))
            .collect();
        Self { dim, winding, beads_per_leg, time_step, beads, wraps }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn winding(&self) -> usize {
        self.winding
    }

    pub fn beads_per_leg(&self) -> usize {
        self.beads_per_leg
    }

    pub fn time_step(&self) -> f64 {
        self.time_step
    }

    pub fn total_time(&self) -> f64 {
        self.time_step * (self.n_beads() - 1) as f64
    }

    pub fn n_beads(&self) -> usize {
        self.beads.len() / self.dim
    }

    pub fn bead(&self, i: usize) -> &[f64] {
        &self.beads[i * self.dim..(i + 1) * self.dim]
    }

    pub fn start(&self) -> &[f64] {
        self.bead(0)
    }

    pub fn end(&self) -> &[f64] {
        self.bead(self.n_beads() - 1)
    }

    pub fn wraps(&self) -> &[i64] {
        &self.wraps
    }

    /// Flat unwrapped coordinates, bead-major.
    pub fn coordinates(&self) -> &[f64] {
        &self.beads
    }
}

/// Brownian bridge of duration `t` from `x` to `y` with `m` links.
pub fn sample_bridge<R: Rng + ?Sized>(
    t: f64,
    x: &[f64],
    y: &[f64],
    m: usize,
    bx: &SimulationBox,
    rng: &mut R,
) -> Result<DiscretizedPath> {
    sample_bridge_winding(1, t, x, y, m, bx, rng)
}

/// Bridge of duration `winding * beta` with `winding * m` links of length `beta / m`.
///
/// On the torus the end point is `y + L z`, with the image `z` drawn with
/// probability proportional to `exp(-(y + L z - x)^2 / 4 winding beta)`.
pub fn sample_bridge_winding<R: Rng + ?Sized>(
    winding: usize,
    beta: f64,
    x: &[f64],
    y: &[f64],
    m: usize,
    bx: &SimulationBox,
    rng: &mut R,
) -> Result<DiscretizedPath> {
    if winding == 0 || m == 0 {
        return Err(Error::InvalidArgument("winding and bead count must be positive".into()));
    }
    ensure_positive("beta", beta)?;
    bx.check_point(x)?;
    bx.check_point(y)?;
    let dim = bx.dim();
    let total = winding as f64 * beta;
    let links = winding * m;

    let images: Vec<i64> = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| sample_image(total, xi, yi, bx.side(), rng))
        .collect();
    let end: Vec<f64> = y
        .iter()
        .zip(&images)
        .map(|(&yi, &z)| if bx.is_periodic() { yi + bx.side() * z as f64 } else { yi })
        .collect();

    let mut beads = vec![0.0; (links + 1) * dim];
    beads[..dim].copy_from_slice(x);
    beads[links * dim..].copy_from_slice(&end);
    fill_levy(&mut beads, dim, beta / m as f64, rng);

    let start_image: Vec<i64> = x.iter().map(|&v| bx.image_1d(v)).collect();
    let wraps = end
        .iter()
        .zip(&start_image)
        .map(|(&e, &s)| bx.image_1d(e) - s)
        .collect();

    Ok(DiscretizedPath { dim, winding, beads_per_leg: m, time_step: beta / m as f64, beads, wraps })
}

/// Lévy construction: resample every interior bead of a flat `(links+1) x dim`
/// buffer whose first and last beads are fixed.
pub(crate) fn fill_levy<R: Rng + ?Sized>(beads: &mut [f64], dim: usize, dt: f64, rng: &mut R) {
    let links = beads.len() / dim - 1;
    if links < 2 {
        return;
    }
    let (head, tail) = beads.split_at_mut(links * dim);
    let end = &tail[..dim];
    for j in 1..links {
        let remaining = (links - j + 1) as f64 * dt;
        let frac = dt / remaining;
        let sd = (2.0 * dt * (remaining - dt) / remaining).sqrt();
        for c in 0..dim {
            let prev = head[(j - 1) * dim + c];
            let mean = prev + (end[c] - prev) * frac;
            let z: f64 = StandardNormal.sample(rng);
            head[j * dim + c] = mean + sd * z;
        }
    }
}

/// Draws the image index `z` of a bridge end point for one coordinate.
pub(crate) fn sample_image<R: Rng + ?Sized>(t: f64, x: f64, y: f64, side: f64, rng: &mut R) -> i64 {
    if !side.is_finite() {
        return 0;
    }
    // Weight of z is exp(-(y + L z - x)^2 / 4t): a discrete Gaussian centred at (x - y)/L.
    let center = (x - y) / side;
    let width = (2.0 * t).sqrt() / side;
    let span = 10.0 * width + 2.0;
    let lo = (center - span).floor() as i64;
    let hi = (center + span).ceil() as i64;
    let scale = 4.0 * t / (side * side);
    let log_w = |z: i64| -(z as f64 - center).powi(2) / scale;
    let best = center.round() as i64;
    let top = log_w(best);
    let total: f64 = (lo..=hi).map(|z| (log_w(z) - top).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for z in lo..=hi {
        u -= (log_w(z) - top).exp();
        if u <= 0.0 {
            return z;
        }
    }
    hi
}

/// Joins paths end to start. Junction beads must coincide on the torus;
/// each later path is translated by the lattice vector that makes them equal.
pub fn concatenate(paths: &[DiscretizedPath], bx: &SimulationBox) -> Result<DiscretizedPath> {
    let first = paths
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
    let dim = first.dim;
    let dt = first.time_step;
    let mut beads = first.beads.clone();
    let mut wraps = first.wraps.clone();
    let mut winding = first.winding;
    let tol = 1e-9 * if bx.is_periodic() { bx.side().max(1.0) } else { 1.0 };

    for (idx, p) in paths.iter().enumerate().skip(1) {
        if p.dim != dim || p.beads_per_leg != first.beads_per_leg || (p.time_step - dt).abs() > 1e-12 * dt {
            return Err(Error::Contract(format!("path {idx} has an incompatible time grid")));
        }
        let prev_end = beads[beads.len() - dim..].to_vec();
        let mut shift = vec![0.0; dim];
        for c in 0..dim {
            let gap = prev_end[c] - p.start()[c];
            let residual = bx.min_image_1d(gap);
            if residual.abs() > tol {
                return Err(Error::Contract(format!(
                    "path {idx} starts at a different point than path {} ends",
                    idx - 1
                )));
            }
            shift[c] = gap - residual;
        }
        for bead in p.beads.chunks(dim).skip(1) {
            beads.extend(bead.iter().zip(&shift).map(|(v, s)| v + s));
        }
        for (w, &z) in wraps.iter_mut().zip(&p.wraps) {
            *w += z;
        }
        winding += p.winding;
    }

    // Recompute from coordinates so that lattice shifts are accounted for.
    if bx.is_periodic() {
        let start = &beads[..dim];
        let end = &beads[beads.len() - dim..];
        for c in 0..dim {
            wraps[c] = bx.image_1d(end[c]) - bx.image_1d(start[c]);
        }
    }

    Ok(DiscretizedPath { dim, winding, beads_per_leg: first.beads_per_leg, time_step: dt, beads, wraps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn direct_theta(a: f64, b: f64) -> f64 {
        (-400..=400).map(|k| (-a * (k as f64 - b).powi(2)).exp()).sum()
    }

    #[test]
    fn free_kernel_at_origin() {
        let bx = SimulationBox::free(1).unwrap();
        let g = heat_kernel(0.25, &[0.0], &bx).unwrap();
        assert!((g - std::f64::consts::PI.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn large_time_kernel_is_uniform() {
        let bx = SimulationBox::new(1, 1.0).unwrap();
        let g = heat_kernel(100.0, &[0.3], &bx).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dual_and_direct_forms_agree() {
        for &a in &[0.02, 0.05, 0.1, 0.5] {
            for &b in &[0.0, 0.13, 0.5, -0.31] {
                let direct = direct_theta(a, b).ln();
                assert!((log_theta_dual(a, b) - direct).abs() < 1e-13, "a={a} b={b}");
                assert!((log_theta(a, b) - direct).abs() < 1e-13, "a={a} b={b}");
            }
        }
    }

    #[test]
    fn kernel_rejects_bad_input() {
        let bx = SimulationBox::new(2, 3.0).unwrap();
        assert!(heat_kernel(0.0, &[0.0, 0.0], &bx).is_err());
        assert!(heat_kernel(f64::NAN, &[0.0, 0.0], &bx).is_err());
        assert!(heat_kernel(1.0, &[f64::INFINITY, 0.0], &bx).is_err());
        assert!(heat_kernel(1.0, &[0.0], &bx).is_err());
    }

    #[test]
    fn kernel_integrates_to_one() {
        let bx = SimulationBox::new(2, 2.0).unwrap();
        for &t in &[0.05, 0.3, 2.0] {
            let grid = 200;
            let h = bx.side() / grid as f64;
            let mut total = 0.0;
            for i in 0..grid {
                for j in 0..grid {
                    let x = [i as f64 * h, j as f64 * h];
                    total += heat_kernel(t, &x, &bx).unwrap();
                }
            }
            // Periodic trapezoid rule is spectrally accurate.
            assert!((total * h * h - 1.0).abs() < 1e-8, "t={t}: {}", total * h * h);
        }
    }

    #[test]
    fn theta_coefficient_limits() {
        let beta = 0.7;
        let x = [0.9, -0.4, 0.2];
        let free = SimulationBox::free(3).unwrap();
        let want = (-(0.81f64 + 0.16 + 0.04) / (4.0 * 3.0 * beta)).exp();
        assert!((theta_coefficient(3, &x, &free, beta).unwrap() - want).abs() < 1e-15);
        let big = SimulationBox::new(3, 60.0).unwrap();
        assert!((theta_coefficient(3, &x, &big, beta).unwrap() - want).abs() < 1e-12);
        let small = SimulationBox::new(3, 4.0).unwrap();
        assert_eq!(theta_coefficient(5, &[0.0; 3], &small, beta).unwrap(), 1.0);
        assert!(theta_coefficient(0, &x, &small, beta).is_err());
    }

    #[test]
    fn theta_coefficient_respects_sandwich_in_cutoff_regime() {
        let bx = SimulationBox::new(3, 5.0).unwrap();
        let beta = 1.0;
        for n in 2..200 {
            if let Some((lo, hi)) = theta_coefficient_bounds(n, &bx, beta) {
                let c = theta_coefficient(n, &[2.5, 1.0, -0.7], &bx, beta).unwrap();
                assert!(lo <= c && c <= hi, "n={n}: {lo} <= {c} <= {hi}");
            }
        }
    }

    #[test]
    fn sandwich_examples() {
        let (lo, hi) = integral_sandwich(std::f64::consts::PI, 0.3).unwrap();
        assert!((lo - 0.0).abs() < 1e-15 && (hi - 2.0).abs() < 1e-15);
        let s = direct_theta(0.01, 0.0);
        let (lo, hi) = integral_sandwich(0.01, 0.0).unwrap();
        assert!(lo < s && s < hi && (s - 17.7245).abs() < 1e-3);
        let s = direct_theta(100.0, 0.5);
        let (lo, hi) = integral_sandwich(100.0, 0.5).unwrap();
        assert!(lo < s && s < hi);
        assert!(integral_sandwich(0.0, 0.0).is_err());
        assert!(integral_sandwich(-1.0, 0.0).is_err());
    }

    #[test]
    fn single_link_bridge_is_endpoints() {
        let bx = SimulationBox::new(2, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_bridge(0.5, &[1.0, 2.0], &[1.5, 2.5], 1, &bx, &mut rng).unwrap();
        assert_eq!(p.n_beads(), 2);
        assert_eq!(p.start(), &[1.0, 2.0]);
        let e = p.end();
        assert!((bx.min_image_1d(e[0] - 1.5)).abs() < 1e-12);
        assert!((bx.min_image_1d(e[1] - 2.5)).abs() < 1e-12);
    }

    #[test]
    fn bridge_grid_and_bead_count() {
        let bx = SimulationBox::new(3, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = sample_bridge_winding(3, 0.8, &[0.0; 3], &[1.0, 1.0, 1.0], 8, &bx, &mut rng).unwrap();
        assert_eq!(p.n_beads(), 3 * 8 + 1);
        assert_eq!(p.time_step(), 0.8 / 8.0);
        assert!((p.total_time() - 2.4).abs() < 1e-12);
    }

    #[test]
    fn concatenation_contract() {
        let bx = SimulationBox::new(2, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = [0.5, 0.5];
        let y = [2.0, 1.0];
        let a = sample_bridge(1.0, &x, &y, 4, &bx, &mut rng).unwrap();
        assert_eq!(concatenate(std::slice::from_ref(&a), &bx).unwrap(), a);

        let b = sample_bridge(1.0, &y, &x, 4, &bx, &mut rng).unwrap();
        let loop_path = concatenate(&[a.clone(), b], &bx).unwrap();
        assert_eq!(loop_path.winding(), 2);
        assert_eq!(loop_path.n_beads(), 9);
        for c in 0..2 {
            assert!(bx.min_image_1d(loop_path.end()[c] - x[c]).abs() < 1e-12);
            assert!(bx.min_image_1d(loop_path.bead(4)[c] - y[c]).abs() < 1e-12);
        }

        let c = sample_bridge(1.0, &[1.0, 0.1], &x, 4, &bx, &mut rng).unwrap();
        assert!(matches!(concatenate(&[a, c], &bx), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn sandwich_brackets_direct_sum(a in 0.005f64..50.0, b in -3.0f64..3.0) {
            let s = direct_theta(a, b);
            let (lo, hi) = integral_sandwich(a, b).unwrap();
            prop_assert!(lo <= s && s <= hi);
        }

        #[test]
        fn kernel_symmetric(t in 0.01f64..5.0, x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let bx = SimulationBox::new(2, 2.5).unwrap();
            let g1 = heat_kernel(t, &[x, y], &bx).unwrap();
            let g2 = heat_kernel(t, &[-x, -y], &bx).unwrap();
            prop_assert!(g1 > 0.0);
            prop_assert!(((g1 - g2) / g1).abs() < 1e-13);
        }

        #[test]
        fn theta_coefficient_periodic_and_positive(
            n in 1usize..400, x in -2.0f64..2.0, z in -3i64..3, side in 1.0f64..8.0, beta in 0.1f64..3.0
        ) {
            let bx = SimulationBox::new(1, side).unwrap();
            let c1 = theta_coefficient(n, &[x], &bx, beta).unwrap();
            let c2 = theta_coefficient(n, &[x + side * z as f64], &bx, beta).unwrap();
            prop_assert!(c1 > 0.0 && c1.is_finite());
            prop_assert!((c1 - c2).abs() < 1e-10 * c1.max(1e-300));
        }
    }
}
