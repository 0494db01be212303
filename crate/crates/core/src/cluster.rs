//! Kotecky-Preiss convergence criterion and pair-order cluster terms.
//!
//! Polymers are closed Brownian loops `omega` of winding `n` in free space,
//! weighted by `nu(d omega) = (e^(beta mu n) / n) dx W_xx^(n beta)(d omega)`.
//! The criterion uses `a(omega) = -beta mu n`. Two loops interact through the
//! time-aligned action `beta U(omega, omega') = (beta / M) sum_s sum_{i, j} U(omega(i, s) - omega'(j, s))`,
//! discretized with `M` beads per leg exactly as in the path sampler.
//!
//! Spatial integrals fix one loop at the origin (translation invariance) and
//! draw the base point of the other from a Gaussian wide enough to cover both.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::geometry::SimulationBox;
use crate::heat_kernel::{log_heat_kernel, sample_bridge_winding, DiscretizedPath};
use crate::ideal_grand::critical_density;
use crate::pimc::PairPotential;
use crate::series::zeta;

/// Relative tail of the winding series left out of [`winding_weights`].
pub const WINDING_TAIL: f64 = 1e-12;

/// Relative Monte Carlo error above which an estimate is flagged.
pub const HIGH_VARIANCE: f64 = 0.1;

const CHUNK: usize = 256;

/// `nu`-mass of the loops of winding `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindingClassWeight {
    pub n: usize,
    /// `(e^(beta mu n) / n) g_(n beta)(0)`, the mass per unit volume.
    pub per_volume: f64,
    /// `per_volume * V`; `None` in free space.
    pub total: Option<f64>,
}

/// Winding weights for `n = 1, 2, ...` up to a relative tail below [`WINDING_TAIL`].
pub fn winding_weights(beta: f64, mu: f64, bx: &SimulationBox) -> Result<Vec<WindingClassWeight>> {
    ensure_positive("beta", beta)?;
    check_mu(mu)?;
    let origin = vec![0.0; bx.dim()];
    let volume = bx.is_periodic().then(|| bx.volume());
    let fugacity = (beta * mu).exp();
    let mut out: Vec<WindingClassWeight> = Vec::new();
    let mut sum = 0.0;
    for n in 1.. {
        let g = log_heat_kernel(n as f64 * beta, &origin, bx)?.exp();
        let per_volume = (beta * mu * n as f64).exp() / n as f64 * g;
        sum += per_volume;
        out.push(WindingClassWeight { n, per_volume, total: volume.map(|v| v * per_volume) });
        // g decreases with time, so the remaining terms are dominated by a geometric series.
        let next = (n + 1) as f64;
        let g_next = log_heat_kernel(next * beta, &origin, bx)?.exp();
        let tail = g_next * (beta * mu * next).exp() / (next * (1.0 - fugacity));
        if tail < WINDING_TAIL * sum {
            break;
        }
    }
    Ok(out)
}

fn check_mu(mu: f64) -> Result<()> {
    ensure_finite("mu", mu)?;
    if mu >= 0.0 {
        return Err(Error::Domain(format!("the cluster expansion needs mu < 0, got {mu}")));
    }
    Ok(())
}

/// How `int U` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralRoute {
    Analytic,
    Quadrature,
}

/// Outcome of the criterion `(4 pi beta)^(-d/2) (int U) sum_n n^(-d/2) <= -mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpCondition {
    pub lhs: f64,
    pub minus_mu: f64,
    pub holds: bool,
    /// The winding series `sum_n n^(-d/2)` diverges (`d <= 2`).
    pub divergent: bool,
    /// `int U` is finite; false for hard cores, where the criterion does not apply.
    pub integrable: bool,
    pub potential_integral: Option<f64>,
    /// Largest `mu` at which the criterion holds, `-lhs`.
    pub threshold_mu: Option<f64>,
}

/// Evaluates the criterion, taking `int U` in closed form when available.
pub fn kp_condition(beta: f64, mu: f64, potential: &PairPotential, dim: usize) -> Result<KpCondition> {
    let route = if potential.integral(dim).is_some() { IntegralRoute::Analytic } else { IntegralRoute::Quadrature };
    kp_condition_via(beta, mu, potential, dim, route)
}

pub fn kp_condition_via(
    beta: f64,
    mu: f64,
    potential: &PairPotential,
    dim: usize,
    route: IntegralRoute,
) -> Result<KpCondition> {
    ensure_positive("beta", beta)?;
    check_mu(mu)?;
    potential.validate()?;
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let integral = match route {
        IntegralRoute::Analytic => potential.integral(dim),
        IntegralRoute::Quadrature => potential.integral_numeric(dim),
    };
    let mut out = KpCondition {
        lhs: f64::INFINITY,
        minus_mu: -mu,
        holds: false,
        divergent: false,
        integrable: integral.is_some(),
        potential_integral: integral,
        threshold_mu: None,
    };
    let Some(integral) = integral else {
        return Ok(out);
    };
    if integral == 0.0 {
        // Every term of the series vanishes, whatever the dimension.
        out.lhs = 0.0;
    } else if dim <= 2 {
        out.divergent = true;
        return Ok(out);
    } else {
        out.lhs = critical_density(beta, dim)? * integral;
    }
    out.holds = out.lhs <= -mu;
    out.threshold_mu = Some(-out.lhs);
    Ok(out)
}

/// Bead count and Monte Carlo budget for the sampled cluster integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSampling {
    pub beads: usize,
    pub samples: usize,
    pub seed: u64,
}

impl ClusterSampling {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { beads: 16, samples, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.beads == 0 || self.samples < 2 {
            return Err(Error::InvalidArgument("need at least one bead and two samples".into()));
        }
        Ok(())
    }
}

/// Length over which `U` decays.
fn potential_scale(potential: &PairPotential) -> f64 {
    match potential {
        PairPotential::Zero => 0.0,
        PairPotential::Gaussian { range, .. } => 3.0 * range,
        PairPotential::HardCore { radius } => *radius,
        PairPotential::Tabulated { radii, .. } => radii[radii.len() - 1],
    }
}

/// `beta U(omega, omega')` with `M` beads per leg.
fn pair_action(a: &DiscretizedPath, b: &DiscretizedPath, potential: &PairPotential, beta: f64) -> f64 {
    let m = a.beads_per_leg();
    let dim = a.dim();
    let mut total = 0.0;
    for s in 0..m {
        for i in 0..a.winding() {
            let x = a.bead(i * m + s);
            for j in 0..b.winding() {
                let y = b.bead(j * m + s);
                let r2: f64 = (0..dim).map(|c| (x[c] - y[c]).powi(2)).sum();
                total += potential.value_r2(r2);
                if total.is_infinite() {
                    return total;
                }
            }
        }
    }
    total * beta / m as f64
}

/// Centre and mean squared radius per coordinate of a loop.
fn loop_extent(path: &DiscretizedPath) -> (Vec<f64>, f64) {
    let dim = path.dim();
    let count = path.n_beads() - 1;
    let mut centre = vec![0.0; dim];
    for i in 0..count {
        for (c, v) in centre.iter_mut().zip(path.bead(i)) {
            *c += v / count as f64;
        }
    }
    let spread = (0..count)
        .map(|i| path.bead(i).iter().zip(&centre).map(|(v, c)| (v - c).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (count * dim) as f64;
    (centre, spread)
}

/// Gaussian proposal for the base point of a loop of winding `n` meeting `fixed`.
struct BasePoint {
    centre: Vec<f64>,
    normal: Normal<f64>,
    log_norm: f64,
}

impl BasePoint {
    fn new(fixed: &DiscretizedPath, n: usize, beta: f64, scale: f64) -> Self {
        let (centre, spread) = loop_extent(fixed);
        let var = 4.0 * (spread + 0.5 * n as f64 * beta + scale * scale) + 1e-12;
        let dim = centre.len() as f64;
        Self {
            centre,
            normal: Normal::new(0.0, var.sqrt()).expect("positive variance"),
            log_norm: -0.5 * dim * (2.0 * std::f64::consts::PI * var).ln(),
        }
    }

    /// A point and `1 / q(point)`.
    fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, f64) {
        let mut r2 = 0.0;
        let x: Vec<f64> = self
            .centre
            .iter()
            .map(|c| {
                let z = self.normal.sample(rng);
                r2 += z * z;
                c + z
            })
            .collect();
        let var = self.normal.std_dev().powi(2);
        (x, (0.5 * r2 / var - self.log_norm).exp())
    }
}

/// Mean and standard error from running sums.
fn mean_error(sum: f64, sum2: f64, k: usize) -> (f64, f64) {
    let k = k as f64;
    let mean = sum / k;
    let var = ((sum2 - k * mean * mean) / (k - 1.0)).max(0.0);
    (mean, (var / k).sqrt())
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64 + 1);
    rng
}

/// Sums of `f` and `f^2` for each of `K` estimators over `samples` draws, in seeded chunks.
fn chunked_sums<const K: usize, F>(samples: usize, seed: u64, draw: F) -> Result<[(f64, f64); K]>
where
    F: Fn(&mut ChaCha8Rng) -> Result<[f64; K]> + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Result<[(f64, f64); K]>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let mut acc = [(0.0, 0.0); K];
            for _ in c * CHUNK..samples.min((c + 1) * CHUNK) {
                let v = draw(&mut rng)?;
                for (a, x) in acc.iter_mut().zip(v) {
                    a.0 += x;
                    a.1 += x * x;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = [(0.0, 0.0); K];
    for p in parts {
        for (t, x) in total.iter_mut().zip(p?) {
            t.0 += x.0;
            t.1 += x.1;
        }
    }
    Ok(total)
}

/// Windings of the partner loop above this are never sampled in [`kp_integral_check`].
const MAX_PARTNER_WINDING: usize = 100_000;

/// Largest sampled partner winding: the linear tail beyond it is at most 1% of the total.
fn partner_cutoff(dim: usize) -> usize {
    let h = dim as f64 / 2.0;
    let total = zeta(h);
    // sum_{k > K} k^(-h) <= K^(1 - h) / (h - 1)
    let k = (0.01 * total * (h - 1.0)).powf(1.0 / (1.0 - h)).ceil();
    (k as usize).clamp(1, MAX_PARTNER_WINDING)
}

/// Result of [`kp_integral_check`] for one sampled loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpIntegralCheck {
    pub winding: usize,
    /// `-beta mu n`, the value the integral must not exceed.
    pub limit: f64,
    /// Closed form of the linearized integral, `n beta lhs`; independent of the loop.
    pub certified_bound: f64,
    /// Whether `certified_bound <= limit`.
    pub certified: bool,
    /// Sampled linearized integral for this loop; its mean is `certified_bound`.
    pub linear_estimate: f64,
    pub linear_error: f64,
    /// Sampled `int [1 - e^(-beta U(omega, omega'))] e^(a(omega')) d nu(omega')`.
    ///
    /// Partner windings above `partner_cutoff` enter through their linearized
    /// value, so this errs upwards by at most `tail`.
    pub sharp_estimate: f64,
    pub sharp_error: f64,
    /// Linearized contribution of the unsampled partner windings.
    pub tail: f64,
    pub partner_cutoff: usize,
    /// Relative error of the sharp estimate exceeds [`HIGH_VARIANCE`].
    pub high_variance: bool,
}

/// Samples a winding-`n` loop at the origin and estimates its Kotecky-Preiss integral.
///
/// With `a = -beta mu n'` the fugacity cancels. Partner windings `n' <= K` are
/// drawn with probability proportional to `n'^(-d/2)`, the profile of their
/// linearized contributions; larger windings are added in closed form.
pub fn kp_integral_check(
    beta: f64,
    mu: f64,
    potential: &PairPotential,
    dim: usize,
    winding: usize,
    sampling: ClusterSampling,
) -> Result<KpIntegralCheck> {
    let condition = kp_condition(beta, mu, potential, dim)?;
    if !condition.integrable {
        return Err(Error::Domain("the criterion needs an integrable potential".into()));
    }
    if winding == 0 {
        return Err(Error::InvalidArgument("winding must be positive".into()));
    }
    sampling.validate()?;
    let n = winding as f64;
    let limit = -beta * mu * n;
    let certified_bound = n * beta * condition.lhs;
    let mut out = KpIntegralCheck {
        winding,
        limit,
        certified_bound,
        certified: certified_bound <= limit,
        linear_estimate: 0.0,
        linear_error: 0.0,
        sharp_estimate: 0.0,
        sharp_error: 0.0,
        tail: 0.0,
        partner_cutoff: 0,
        high_variance: false,
    };
    if potential.is_zero() {
        return Ok(out);
    }
    if condition.divergent {
        return Err(Error::Domain(format!("the linearized integral diverges in {dim} dimensions")));
    }

    let h = dim as f64 / 2.0;
    let cutoff = partner_cutoff(dim);
    let profile: Vec<f64> = (1..=cutoff).map(|k| (k as f64).powf(-h)).collect();
    let head: f64 = profile.iter().sum();
    let windings = WeightedIndex::new(&profile).map_err(|e| Error::Domain(e.to_string()))?;
    let prefactor = (4.0 * std::f64::consts::PI * beta).powf(-h);
    let integral = condition.potential_integral.unwrap_or(0.0);
    out.tail = n * beta * integral * prefactor * (zeta(h) - head).max(0.0);
    out.partner_cutoff = cutoff;

    let free = SimulationBox::free(dim)?;
    let origin = vec![0.0; dim];
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let omega = sample_bridge_winding(winding, beta, &origin, &origin, sampling.beads, &free, &mut rng)?;
    let scale = potential_scale(potential);

    let [lin, sharp] = chunked_sums(sampling.samples, sampling.seed, |rng| {
        let k = windings.sample(rng) + 1;
        let proposal = BasePoint::new(&omega, k, beta, scale);
        let (x, inv_q) = proposal.draw(rng);
        let other = sample_bridge_winding(k, beta, &x, &x, sampling.beads, &free, rng)?;
        let u = pair_action(&omega, &other, potential, beta);
        // (1/k) g_(k beta)(0) over the proposal probability k^(-d/2) / head.
        let w = prefactor * head / k as f64 * inv_q;
        Ok([w * u, w * -(-u).exp_m1()])
    })?;
    let (lin_mean, lin_err) = mean_error(lin.0, lin.1, sampling.samples);
    let (sharp_mean, sharp_err) = mean_error(sharp.0, sharp.1, sampling.samples);
    out.linear_estimate = lin_mean + out.tail;
    out.linear_error = lin_err;
    out.sharp_estimate = sharp_mean + out.tail;
    out.sharp_error = sharp_err;
    out.high_variance = sharp_err > HIGH_VARIANCE * sharp_mean;
    if out.high_variance {
        log::warn!("Kotecky-Preiss integral has relative error {:.3}", sharp_err / sharp_mean);
    }
    Ok(out)
}

/// Pair-order truncation of `ln Z / V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedLogZ {
    pub k_max: usize,
    /// `sum_n` of the per-volume winding weights; the ideal-gas `ln Z / V`.
    pub first_order: f64,
    /// `(1/2) int int [e^(-beta U(omega, omega')) - 1] d nu d nu` per volume.
    pub second_order: f64,
    pub second_order_error: f64,
    pub total: f64,
    pub kp_holds: bool,
}

/// Cluster series for `ln Z / V` through order `k_max <= 2`.
pub fn truncated_log_z(
    beta: f64,
    mu: f64,
    potential: &PairPotential,
    dim: usize,
    k_max: usize,
    sampling: ClusterSampling,
) -> Result<TruncatedLogZ> {
    if k_max > 2 {
        return Err(Error::Unsupported(format!("cluster terms beyond pair order requested (k_max = {k_max})")));
    }
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be 1 or 2".into()));
    }
    potential.validate()?;
    let free = SimulationBox::free(dim)?;
    let weights = winding_weights(beta, mu, &free)?;
    let first_order: f64 = weights.iter().map(|w| w.per_volume).sum();
    let kp_holds = kp_condition(beta, mu, potential, dim)?.holds;
    if !kp_holds {
        log::warn!("Kotecky-Preiss criterion fails at beta = {beta}, mu = {mu}; the series may diverge");
    }
    let mut out = TruncatedLogZ {
        k_max,
        first_order,
        second_order: 0.0,
        second_order_error: 0.0,
        total: first_order,
        kp_holds,
    };
    if k_max == 1 || potential.is_zero() {
        return Ok(out);
    }
    sampling.validate()?;

    let index = WeightedIndex::new(weights.iter().map(|w| w.per_volume))
        .map_err(|e| Error::Domain(format!("winding weights: {e}")))?;
    let origin = vec![0.0; dim];
    let scale = potential_scale(potential);
    let [ursell] = chunked_sums(sampling.samples, sampling.seed, |rng| {
        let n = weights[index.sample(rng)].n;
        let k = weights[index.sample(rng)].n;
        let omega = sample_bridge_winding(n, beta, &origin, &origin, sampling.beads, &free, rng)?;
        let proposal = BasePoint::new(&omega, k, beta, scale);
        let (x, inv_q) = proposal.draw(rng);
        let other = sample_bridge_winding(k, beta, &x, &x, sampling.beads, &free, rng)?;
        let u = pair_action(&omega, &other, potential, beta);
        Ok([(-u).exp_m1() * inv_q])
    })?;
    let (mean, error) = mean_error(ursell.0, ursell.1, sampling.samples);
    let factor = 0.5 * first_order * first_order;
    out.second_order = factor * mean;
    out.second_order_error = factor * error;
    out.total = first_order + out.second_order;
    Ok(out)
}

/// Certified bracket for `Z(mu; omega) / Z(mu)` with `omega` of winding `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioBracket {
    pub winding: usize,
    /// Bound `-beta mu n` on the exponent.
    pub exponent_bound: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `[e^(beta mu n), 1]` when the criterion holds, `[1, 1]` without interaction, `None` otherwise.
pub fn ratio_bound(
    beta: f64,
    mu: f64,
    potential: &PairPotential,
    dim: usize,
    winding: usize,
) -> Result<Option<RatioBracket>> {
    if winding == 0 {
        return Err(Error::InvalidArgument("winding must be positive".into()));
    }
    let condition = kp_condition(beta, mu, potential, dim)?;
    if !condition.holds {
        return Ok(None);
    }
    let exponent_bound = -beta * mu * winding as f64;
    let lower = if potential.is_zero() { 1.0 } else { (-exponent_bound).exp() };
    Ok(Some(RatioBracket { winding, exponent_bound, lower, upper: 1.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ideal_grand::pressure;

    #[test]
    fn winding_weights_sum_to_pressure() {
        let free = SimulationBox::free(3).unwrap();
        for mu in [-3.0, -0.5, -0.01] {
            let w = winding_weights(1.0, mu, &free).unwrap();
            let s: f64 = w.iter().map(|c| c.per_volume).sum();
            let p = pressure(1.0, mu, 3).unwrap();
            assert!((s - p).abs() < 1e-11 * p, "mu = {mu}: {s} vs {p}");
            assert!(w.iter().all(|c| c.per_volume > 0.0 && c.total.is_none()));
        }
    }

    #[test]
    fn finite_box_weights_scale_with_volume() {
        let bx = SimulationBox::new(3, 4.0).unwrap();
        let w = winding_weights(1.0, -0.3, &bx).unwrap();
        for c in &w {
            assert!((c.total.unwrap() - 64.0 * c.per_volume).abs() < 1e-12 * c.total.unwrap());
        }
    }

    #[test]
    fn gaussian_threshold() {
        let pot = PairPotential::gaussian(1.0, 1.0).unwrap();
        let c = kp_condition(1.0, -1.0, &pot, 3).unwrap();
        let expected = zeta(1.5) / 8.0;
        assert!((c.lhs - expected).abs() < 1e-12);
        assert!(c.holds);
        assert!(!kp_condition(1.0, -0.3, &pot, 3).unwrap().holds);
        let q = kp_condition_via(1.0, -1.0, &pot, 3, IntegralRoute::Quadrature).unwrap();
        assert!((q.lhs - c.lhs).abs() < 1e-8 * c.lhs);
    }

    #[test]
    fn low_dimensions_and_hard_cores() {
        let pot = PairPotential::gaussian(1.0, 1.0).unwrap();
        let c = kp_condition(1.0, -1.0, &pot, 2).unwrap();
        assert!(c.divergent && !c.holds);
        let h = kp_condition(1.0, -1.0, &PairPotential::hard_core(0.5).unwrap(), 3).unwrap();
        assert!(!h.integrable && !h.holds);
        assert!(kp_integral_check(1.0, -1.0, &PairPotential::hard_core(0.5).unwrap(), 3, 1, ClusterSampling::new(10, 0))
            .is_err());
        assert!(matches!(kp_condition(1.0, 0.0, &pot, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_potential_collapses() {
        let z = PairPotential::Zero;
        let c = kp_condition(1.0, -0.01, &z, 3).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.holds);
        let k = kp_integral_check(1.0, -0.01, &z, 3, 2, ClusterSampling::new(10, 0)).unwrap();
        assert_eq!(k.sharp_estimate, 0.0);
        assert!(k.certified);
        let r = ratio_bound(1.0, -0.5, &z, 3, 3).unwrap().unwrap();
        assert_eq!((r.lower, r.upper), (1.0, 1.0));
    }

    #[test]
    fn refuses_higher_orders() {
        let s = ClusterSampling::new(10, 0);
        assert!(matches!(truncated_log_z(1.0, -1.0, &PairPotential::Zero, 3, 3, s), Err(Error::Unsupported(_))));
    }

    #[test]
    fn ratio_bracket_arithmetic() {
        let pot = PairPotential::gaussian(0.1, 1.0).unwrap();
        let r = ratio_bound(1.0, -1.0, &pot, 3, 1).unwrap().unwrap();
        assert!((r.lower - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(r.upper, 1.0);
        assert!(ratio_bound(1.0, -1e-3, &pot, 3, 1).unwrap().is_none());
    }
}
