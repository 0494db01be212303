//! Blocked accumulation of cycle-length statistics and open-sector visits.
//!
//! Every block is tagged with `(chain, index)`; merged histograms keep their
//! blocks sorted by tag, so merging is associative and order-independent.
//! Errors come from the delete-one-block jackknife.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

/// Sums collected over one block of measurement sweeps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub sweeps: u64,
    /// Number of closed configurations measured.
    pub closed_samples: u64,
    /// `particles_in[n - 1]` sums `n * (number of n-cycles)` over closed samples.
    pub particles_in: Vec<u64>,
    pub open_samples: u64,
    /// Sum of `1 / C` over open samples, `C` being the open-sector weight in force.
    pub open_weighted: f64,
    /// `open_lengths[n - 1]` counts open samples whose open chain has winding `n`.
    pub open_lengths: Vec<u64>,
}

impl BlockRecord {
    pub fn new(n_particles: usize) -> Self {
        Self {
            particles_in: vec![0; n_particles],
            open_lengths: vec![0; n_particles],
            ..Self::default()
        }
    }

    /// Adds one closed configuration given its cycle lengths.
    pub fn record_closed(&mut self, lengths: &[usize]) -> Result<()> {
        let n = self.particles_in.len();
        let total: usize = lengths.iter().sum();
        if total != n || lengths.contains(&0) {
            return Err(Error::Contract(format!("cycle lengths sum to {total}, expected {n}")));
        }
        for &l in lengths {
            self.particles_in[l - 1] += l as u64;
        }
        self.closed_samples += 1;
        Ok(())
    }

    /// Adds one open configuration whose open chain has winding `length`.
    pub fn record_open(&mut self, length: usize, weight: f64) {
        self.open_samples += 1;
        self.open_weighted += 1.0 / weight;
        self.open_lengths[length - 1] += 1;
    }

    fn add(&mut self, other: &BlockRecord) {
        self.sweeps += other.sweeps;
        self.closed_samples += other.closed_samples;
        self.open_samples += other.open_samples;
        self.open_weighted += other.open_weighted;
        for (a, b) in self.particles_in.iter_mut().zip(&other.particles_in) {
            *a += b;
        }
        for (a, b) in self.open_lengths.iter_mut().zip(&other.open_lengths) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedBlock {
    pub chain: u64,
    pub index: u64,
    pub record: BlockRecord,
}

/// Sampled cycle densities with blocked errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleHistogram {
    n_particles: usize,
    volume: f64,
    blocks: Vec<TaggedBlock>,
}

/// Goodness of fit of sampled densities against reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    /// Inclusive cycle-length ranges of the merged bins.
    pub bins: Vec<(usize, usize)>,
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
    /// Hotelling `T^2` over all bins but the last, which the sum rule fixes.
    pub statistic: f64,
    pub dof: usize,
    pub blocks: usize,
    pub p_value: f64,
}

/// Open-sector estimate of the off-diagonal correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenEstimate {
    pub sigma: f64,
    pub error: f64,
    /// Fraction of measured configurations that were open.
    pub open_fraction: f64,
}

impl CycleHistogram {
    pub fn new(n_particles: usize, volume: f64) -> Self {
        Self { n_particles, volume, blocks: Vec::new() }
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn blocks(&self) -> &[TaggedBlock] {
        &self.blocks
    }

    pub fn push(&mut self, chain: u64, index: u64, record: BlockRecord) -> Result<()> {
        if record.particles_in.len() != self.n_particles {
            return Err(Error::Contract("block has the wrong particle number".into()));
        }
        let key = (chain, index);
        match self.blocks.binary_search_by(|b| (b.chain, b.index).cmp(&key)) {
            Ok(_) => Err(Error::Contract(format!("duplicate block {key:?}"))),
            Err(pos) => {
                self.blocks.insert(pos, TaggedBlock { chain, index, record });
                Ok(())
            }
        }
    }

    /// Union of the blocks of both histograms.
    pub fn merge(&mut self, other: &CycleHistogram) -> Result<()> {
        if other.n_particles != self.n_particles || other.volume != self.volume {
            return Err(Error::Contract("cannot merge histograms of different systems".into()));
        }
        for b in &other.blocks {
            self.push(b.chain, b.index, b.record.clone())?;
        }
        Ok(())
    }

    fn total(&self) -> BlockRecord {
        let mut t = BlockRecord::new(self.n_particles);
        for b in &self.blocks {
            t.add(&b.record);
        }
        t
    }

    pub fn closed_samples(&self) -> u64 {
        self.blocks.iter().map(|b| b.record.closed_samples).sum()
    }

    pub fn open_samples(&self) -> u64 {
        self.blocks.iter().map(|b| b.record.open_samples).sum()
    }

    /// Number of sampled `n`-cycles, summed over configurations, for `n = 1..=N`.
    pub fn cycle_counts(&self) -> Vec<u64> {
        self.total()
            .particles_in
            .iter()
            .enumerate()
            .map(|(i, &p)| p / (i as u64 + 1))
            .collect()
    }

    fn densities_of(&self, r: &BlockRecord) -> Vec<f64> {
        let norm = 1.0 / (r.closed_samples as f64 * self.volume);
        r.particles_in.iter().map(|&p| p as f64 * norm).collect()
    }

    /// Sampled `rho(n)` for `n = 1..=N`.
    pub fn densities(&self) -> Vec<f64> {
        self.densities_of(&self.total())
    }

    /// Leave-one-block-out replicas of an estimator.
    fn jackknife<F>(&self, estimator: F) -> Vec<Vec<f64>>
    where
        F: Fn(&BlockRecord) -> Vec<f64>,
    {
        let total = self.total();
        self.blocks
            .iter()
            .map(|b| {
                let mut rest = total.clone();
                rest.sweeps -= b.record.sweeps;
                rest.closed_samples -= b.record.closed_samples;
                rest.open_samples -= b.record.open_samples;
                rest.open_weighted -= b.record.open_weighted;
                for (a, x) in rest.particles_in.iter_mut().zip(&b.record.particles_in) {
                    *a -= x;
                }
                for (a, x) in rest.open_lengths.iter_mut().zip(&b.record.open_lengths) {
                    *a -= x;
                }
                estimator(&rest)
            })
            .collect()
    }

    fn jackknife_covariance(replicas: &[Vec<f64>]) -> DMatrix<f64> {
        let b = replicas.len();
        let k = replicas.first().map_or(0, Vec::len);
        let mean: Vec<f64> = (0..k).map(|i| replicas.iter().map(|r| r[i]).sum::<f64>() / b as f64).collect();
        let mut cov = DMatrix::zeros(k, k);
        for r in replicas {
            for i in 0..k {
                for j in 0..k {
                    cov[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]);
                }
            }
        }
        cov * ((b as f64 - 1.0) / b as f64)
    }

    /// Jackknife standard errors of [`Self::densities`].
    pub fn density_errors(&self) -> Vec<f64> {
        if self.blocks.len() < 2 {
            return vec![f64::NAN; self.n_particles];
        }
        let replicas = self.jackknife(|r| self.densities_of(r));
        let cov = Self::jackknife_covariance(&replicas);
        (0..self.n_particles).map(|i| cov[(i, i)].sqrt()).collect()
    }

    /// Particle-weighted mean cycle length `sum_n n rho(n) / rho` with its error.
    pub fn mean_cycle_length(&self) -> (f64, f64) {
        let f = |r: &BlockRecord| {
            let total: f64 = r.particles_in.iter().map(|&p| p as f64).sum();
            let weighted: f64 = r.particles_in.iter().enumerate().map(|(i, &p)| (i + 1) as f64 * p as f64).sum();
            vec![weighted / total]
        };
        let value = f(&self.total())[0];
        if self.blocks.len() < 2 {
            return (value, f64::NAN);
        }
        let cov = Self::jackknife_covariance(&self.jackknife(f));
        (value, cov[(0, 0)].sqrt())
    }

    /// Hotelling test of the sampled densities against `expected[n - 1]`.
    ///
    /// Consecutive lengths are merged until each bin holds at least 1% of the
    /// total expected density; the remainder joins the last bin.
    pub fn compare_with(&self, expected: &[f64]) -> Result<ChiSquareReport> {
        if expected.len() != self.n_particles {
            return Err(Error::InvalidArgument("reference has the wrong length".into()));
        }
        let rho: f64 = expected.iter().sum();
        let mut bins: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        let mut mass = 0.0;
        for (i, &e) in expected.iter().enumerate() {
            mass += e;
            if mass >= 0.01 * rho {
                bins.push((start + 1, i + 1));
                start = i + 1;
                mass = 0.0;
            }
        }
        if start < expected.len() {
            match bins.last_mut() {
                Some(last) => last.1 = expected.len(),
                None => bins.push((1, expected.len())),
            }
        }
        let binned = |v: &[f64]| -> Vec<f64> { bins.iter().map(|&(a, b)| v[a - 1..b].iter().sum()).collect() };
        let observed = binned(&self.densities());
        let reference = binned(expected);
        let k = bins.len() - 1;
        let b = self.blocks.len();
        if k == 0 {
            return Ok(ChiSquareReport { bins, observed, expected: reference, statistic: 0.0, dof: 0, blocks: b, p_value: 1.0 });
        }
        if b <= k + 1 {
            return Err(Error::InvalidArgument(format!("{b} blocks are too few for {k} degrees of freedom")));
        }
        let replicas = self.jackknife(|r| {
            let d = binned(&self.densities_of(r));
            d[..k].to_vec()
        });
        let cov = Self::jackknife_covariance(&replicas);
        let resid = DVector::from_iterator(k, (0..k).map(|i| observed[i] - reference[i]));
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Domain("sample covariance is singular".into()))?;
        let t2 = resid.dot(&chol.solve(&resid));
        let (kf, bf) = (k as f64, b as f64);
        let f = (bf - kf) / (kf * (bf - 1.0)) * t2;
        let dist = FisherSnedecor::new(kf, bf - kf).map_err(|e| Error::Domain(e.to_string()))?;
        Ok(ChiSquareReport {
            bins,
            observed,
            expected: reference,
            statistic: t2,
            dof: k,
            blocks: b,
            p_value: dist.sf(f),
        })
    }

    /// `sigma = (1 / V) (sum of 1/C over open samples) / (closed samples)`, with jackknife error.
    pub fn open_estimate(&self) -> Option<OpenEstimate> {
        let total = self.total();
        if total.closed_samples == 0 {
            return None;
        }
        let f = |r: &BlockRecord| vec![r.open_weighted / (r.closed_samples as f64 * self.volume)];
        let sigma = f(&total)[0];
        let error = if self.blocks.len() >= 2 {
            Self::jackknife_covariance(&self.jackknife(f))[(0, 0)].sqrt()
        } else {
            f64::NAN
        };
        let open_fraction = total.open_samples as f64 / (total.open_samples + total.closed_samples) as f64;
        Some(OpenEstimate { sigma, error, open_fraction })
    }

    /// Distribution of the open chain's winding over open samples.
    pub fn open_winding_counts(&self) -> Vec<u64> {
        self.total().open_lengths
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(n: usize, configs: &[&[usize]]) -> BlockRecord {
        let mut b = BlockRecord::new(n);
        for c in configs {
            b.record_closed(c).unwrap();
        }
        b.sweeps = configs.len() as u64;
        b
    }

    #[test]
    fn rejects_inconsistent_configurations() {
        let mut b = BlockRecord::new(4);
        assert!(b.record_closed(&[2, 1]).is_err());
        assert!(b.record_closed(&[2, 2, 0]).is_err());
        b.record_closed(&[3, 1]).unwrap();
        assert_eq!(b.particles_in, vec![1, 0, 3, 0]);
    }

    #[test]
    fn merge_is_order_independent() {
        let blocks = [block(3, &[&[1, 1, 1], &[2, 1]]), block(3, &[&[3]]), block(3, &[&[2, 1], &[3]])];
        let mut a = CycleHistogram::new(3, 2.0);
        a.push(0, 0, blocks[0].clone()).unwrap();
        a.push(1, 0, blocks[1].clone()).unwrap();
        let mut b = CycleHistogram::new(3, 2.0);
        b.push(1, 1, blocks[2].clone()).unwrap();
        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        assert_eq!(ab, ba);
        assert!(ab.merge(&a).is_err());
        let d = ab.densities();
        assert!((d.iter().sum::<f64>() - 1.5).abs() < 1e-15);
        assert_eq!(ab.cycle_counts(), vec![5, 2, 2]);
    }

    #[test]
    fn jackknife_of_independent_blocks() {
        // Each block holds a single configuration, so jackknife errors equal the naive standard error.
        let configs: [&[usize]; 6] = [&[1, 1], &[2], &[2], &[1, 1], &[2], &[2]];
        let mut h = CycleHistogram::new(2, 1.0);
        for (i, c) in configs.iter().enumerate() {
            h.push(0, i as u64, block(2, &[c])).unwrap();
        }
        let x: Vec<f64> = configs.iter().map(|c| if c.len() == 2 { 2.0 } else { 0.0 }).collect();
        let mean = x.iter().sum::<f64>() / 6.0;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((h.densities()[0] - mean).abs() < 1e-15);
        assert!((h.density_errors()[0] - (var / 6.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn open_estimate_normalization() {
        let mut b = BlockRecord::new(2);
        b.record_closed(&[1, 1]).unwrap();
        b.record_closed(&[2]).unwrap();
        b.record_open(1, 0.5);
        let mut h = CycleHistogram::new(2, 4.0);
        h.push(0, 0, b).unwrap();
        let est = h.open_estimate().unwrap();
        assert!((est.sigma - 2.0 / (2.0 * 4.0)).abs() < 1e-15);
        assert!((est.open_fraction - 1.0 / 3.0).abs() < 1e-15);
    }
}
