//! Direct evaluation of the canonical path integral for very small `N`.
//!
//! `Y(N) = (1/N!) sum_pi prod_cycles C_len * E[exp(-S)]`, the expectation being
//! over independent closed periodic bridges, one per cycle, with uniformly
//! distributed base points. The expectation depends on the permutation only
//! through its cycle type, so each type is sampled once and weighted by its
//! multiplicity among the enumerated permutations.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::potential::PairPotential;
use crate::error::{ensure_positive, Error, Result};
use crate::geometry::SimulationBox;
use crate::heat_kernel::{log_heat_kernel, sample_bridge_winding};

/// Largest particle number accepted; `8! = 40320` permutations.
pub const MAX_PARTICLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub log_y: f64,
    /// Standard error of `Y(N)` relative to its value.
    pub y_relative_error: f64,
    /// `densities[n - 1]` estimates the density in cycles of length `n`.
    pub densities: Vec<f64>,
    pub density_errors: Vec<f64>,
    pub permutations: usize,
    /// True when no sampling was needed (zero potential).
    pub exact: bool,
}

fn heap_permute(k: usize, p: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        visit(p);
        return;
    }
    for i in 0..k - 1 {
        heap_permute(k - 1, p, visit);
        if k % 2 == 0 {
            p.swap(i, k - 1);
        } else {
            p.swap(0, k - 1);
        }
    }
    heap_permute(k - 1, p, visit);
}

fn cycle_type(p: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; p.len()];
    let mut lengths = Vec::new();
    for s in 0..p.len() {
        let mut len = 0;
        let mut j = s;
        while !seen[j] {
            seen[j] = true;
            j = p[j];
            len += 1;
        }
        if len > 0 {
            lengths.push(len);
        }
    }
    lengths.sort_unstable_by(|a, b| b.cmp(a));
    lengths
}

/// One sample of `exp(-S)` for independent closed loops with the given windings.
fn sample_boltzmann<R: Rng + ?Sized>(
    lengths: &[usize],
    bx: &SimulationBox,
    beta: f64,
    beads: usize,
    potential: &PairPotential,
    rng: &mut R,
) -> Result<f64> {
    let dim = bx.dim();
    let mut legs: Vec<Vec<f64>> = Vec::new();
    for &len in lengths {
        let base: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * bx.side()).collect();
        let path = sample_bridge_winding(len, beta, &base, &base, beads, bx, rng)?;
        for leg in 0..len {
            legs.push(path.coordinates()[leg * beads * dim..(leg + 1) * beads * dim].to_vec());
        }
    }
    let mut s = 0.0;
    for t in 0..beads {
        for a in 0..legs.len() {
            for b in a + 1..legs.len() {
                let r2 = bx.distance2(&legs[a][t * dim..(t + 1) * dim], &legs[b][t * dim..(t + 1) * dim]);
                s += potential.value_r2(r2);
            }
        }
    }
    Ok((-s * beta / beads as f64).exp())
}

/// Enumerates all `N!` permutations and estimates `Y(N)` and the cycle densities.
pub fn brute_force_small(
    bx: SimulationBox,
    beta: f64,
    n_particles: usize,
    beads: usize,
    potential: &PairPotential,
    mc_samples: usize,
    seed: u64,
) -> Result<BruteForceResult> {
    if n_particles > MAX_PARTICLES {
        return Err(Error::Unsupported(format!(
            "brute force is limited to {MAX_PARTICLES} particles, got {n_particles}"
        )));
    }
    if n_particles == 0 || beads == 0 {
        return Err(Error::InvalidArgument("particle and bead counts must be positive".into()));
    }
    ensure_positive("beta", beta)?;
    potential.validate()?;
    if !bx.is_periodic() {
        return Err(Error::InvalidArgument("brute force needs a finite box".into()));
    }
    let exact = potential.is_zero();
    if !exact && mc_samples < 2 {
        return Err(Error::InvalidArgument("need at least two Monte Carlo samples".into()));
    }

    let mut types: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    let mut perm: Vec<usize> = (0..n_particles).collect();
    let mut count = 0usize;
    heap_permute(n_particles, &mut perm, &mut |p| {
        *types.entry(cycle_type(p)).or_insert(0) += 1;
        count += 1;
    });

    let origin = vec![0.0; bx.dim()];
    let log_v = bx.volume().ln();
    let log_c: Vec<f64> = (0..=n_particles)
        .map(|k| if k == 0 { 0.0 } else { log_v + log_heat_kernel(k as f64 * beta, &origin, &bx).unwrap_or(f64::NAN) })
        .collect();
    let log_factorial: f64 = (1..=n_particles).map(|k| (k as f64).ln()).sum();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Per cycle type: log of (multiplicity * prod C / N!), mean and variance of the mean of exp(-S).
    let mut rows = Vec::with_capacity(types.len());
    for (lengths, &mult) in &types {
        let log_w = (mult as f64).ln() + lengths.iter().map(|&l| log_c[l]).sum::<f64>() - log_factorial;
        let (mean, var_mean) = if exact {
            (1.0, 0.0)
        } else {
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for _ in 0..mc_samples {
                let x = sample_boltzmann(lengths, &bx, beta, beads, potential, &mut rng)?;
                sum += x;
                sum2 += x * x;
            }
            let k = mc_samples as f64;
            let mean = sum / k;
            let var = ((sum2 - k * mean * mean) / (k - 1.0)).max(0.0);
            (mean, var / k)
        };
        rows.push((lengths.clone(), log_w, mean, var_mean));
    }

    let top = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = rows.iter().map(|r| (r.1 - top).exp()).collect();
    let y: f64 = rows.iter().zip(&scaled).map(|(r, c)| c * r.2).sum();
    let var_y: f64 = rows.iter().zip(&scaled).map(|(r, c)| c * c * r.3).sum();

    let v = bx.volume();
    let mut densities = vec![0.0; n_particles];
    let mut weights_in = vec![vec![0.0; rows.len()]; n_particles];
    for (t, r) in rows.iter().enumerate() {
        for &l in &r.0 {
            weights_in[l - 1][t] += l as f64;
        }
    }
    for n in 0..n_particles {
        densities[n] = rows.iter().zip(&scaled).enumerate().map(|(t, (r, c))| c * r.2 * weights_in[n][t]).sum::<f64>()
            / (y * v);
    }
    let density_errors = (0..n_particles)
        .map(|n| {
            rows.iter()
                .zip(&scaled)
                .enumerate()
                .map(|(t, (r, c))| {
                    let grad = c * (weights_in[n][t] / v - densities[n]) / y;
                    grad * grad * r.3
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();

    Ok(BruteForceResult {
        log_y: top + y.ln(),
        y_relative_error: var_y.sqrt() / y,
        densities,
        density_errors,
        permutations: count,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_types_of_s4() {
        let mut types: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
        let mut p: Vec<usize> = (0..4).collect();
        heap_permute(4, &mut p, &mut |q| *types.entry(cycle_type(q)).or_insert(0) += 1);
        assert_eq!(types[&vec![1, 1, 1, 1]], 1);
        assert_eq!(types[&vec![2, 1, 1]], 6);
        assert_eq!(types[&vec![2, 2]], 3);
        assert_eq!(types[&vec![3, 1]], 8);
        assert_eq!(types[&vec![4]], 6);
    }

    #[test]
    fn refuses_large_systems() {
        let bx = SimulationBox::new(3, 4.0).unwrap();
        assert!(matches!(
            brute_force_small(bx, 1.0, 9, 4, &PairPotential::Zero, 10, 0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn single_particle_ignores_potential() {
        let bx = SimulationBox::new(3, 4.0).unwrap();
        let pot = PairPotential::gaussian(5.0, 1.0).unwrap();
        let r = brute_force_small(bx, 1.0, 1, 8, &pot, 50, 3).unwrap();
        let c1 = bx.volume() * crate::heat_kernel::heat_kernel(1.0, &[0.0; 3], &bx).unwrap();
        assert!((r.log_y - c1.ln()).abs() < 1e-14);
        assert_eq!(r.y_relative_error, 0.0);
    }
}
