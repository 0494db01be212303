//! Multi-chain canonical sampler with blocked measurements and checkpoints.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::histogram::{BlockRecord, CycleHistogram, OpenEstimate};
use super::moves::{metropolis_sweep, AcceptanceStats, MoveMix};
use super::potential::PairPotential;
use super::state::PathEnsembleState;
use crate::error::{ensure_positive, Error, Result};
use crate::geometry::SimulationBox;

const CHECKPOINT_VERSION: u32 = 1;

/// Equilibration sweeps between open-sector weight updates.
const TUNE_INTERVAL: u64 = 50;

/// Swap acceptance below this over equilibration triggers a non-ergodicity warning.
pub const NON_ERGODIC_RATE: f64 = 1e-4;

/// Open-sector residence below this triggers a poor-overlap warning.
pub const POOR_OVERLAP_FRACTION: f64 = 1e-3;

fn default_block_sweeps() -> u64 {
    50
}

fn one() -> u64 {
    1
}

fn yes() -> bool {
    true
}

/// Sweep counts; one sweep is `N` move attempts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub equilibration_sweeps: u64,
    pub measurement_sweeps: u64,
    #[serde(default = "default_block_sweeps")]
    pub block_sweeps: u64,
    #[serde(default = "one")]
    pub chains: u64,
    /// Measure every this many sweeps.
    #[serde(default = "one")]
    pub measure_every: u64,
}

impl Schedule {
    pub fn new(equilibration_sweeps: u64, measurement_sweeps: u64) -> Self {
        Self { equilibration_sweeps, measurement_sweeps, block_sweeps: 50, chains: 1, measure_every: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.measurement_sweeps == 0 || self.block_sweeps == 0 || self.chains == 0 || self.measure_every == 0 {
            return Err(Error::InvalidArgument(
                "measurement sweeps, block length, chain count and measurement stride must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Open offset `x` for the off-diagonal estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenSectorConfig {
    pub shift: Vec<f64>,
    /// Starting weight of open configurations; defaults to `1 / N`.
    #[serde(default)]
    pub initial_weight: Option<f64>,
    /// Adapt the weight during equilibration towards equal residence.
    #[serde(default = "yes")]
    pub tune: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PimcConfig {
    pub dim: usize,
    pub n_particles: usize,
    pub side: f64,
    pub beta: f64,
    /// Beads per leg `M`; the time step is `beta / M`.
    pub beads: usize,
    #[serde(default)]
    pub potential: PairPotential,
    pub schedule: Schedule,
    #[serde(default)]
    pub moves: MoveMix,
    pub seed: u64,
    #[serde(default)]
    pub open: Option<OpenSectorConfig>,
}

impl PimcConfig {
    /// Cubic box sized so that `N / V = rho`, default moves, 16 beads per leg.
    pub fn with_density(dim: usize, n_particles: usize, rho: f64, beta: f64, schedule: Schedule, seed: u64) -> Result<Self> {
        let bx = SimulationBox::with_density(dim, n_particles, rho)?;
        Ok(Self {
            dim,
            n_particles,
            side: bx.side(),
            beta,
            beads: 16,
            potential: PairPotential::Zero,
            schedule,
            moves: MoveMix::default(),
            seed,
            open: None,
        })
    }

    pub fn simulation_box(&self) -> Result<SimulationBox> {
        SimulationBox::new(self.dim, self.side)
    }

    pub fn validate(&self) -> Result<()> {
        let bx = self.simulation_box()?;
        ensure_positive("beta", self.beta)?;
        if self.n_particles == 0 || self.beads == 0 {
            return Err(Error::InvalidArgument("particle and bead counts must be positive".into()));
        }
        self.potential.validate()?;
        self.schedule.validate()?;
        self.moves.validate()?;
        if let Some(open) = &self.open {
            bx.check_point(&open.shift)?;
            if let Some(w) = open.initial_weight {
                ensure_positive("open-sector weight", w)?;
            }
            if self.moves.open <= 0.0 {
                return Err(Error::InvalidArgument("open sector configured without open moves".into()));
            }
        } else if self.moves.open > 0.0 {
            return Err(Error::InvalidArgument("open moves requested without an open offset".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn total_sweeps(&self) -> u64 {
        self.schedule.equilibration_sweeps + self.schedule.measurement_sweeps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Chain {
    index: u64,
    rng: ChaCha8Rng,
    state: PathEnsembleState,
    sweeps_done: u64,
    equilibration: AcceptanceStats,
    measurement: AcceptanceStats,
    current: BlockRecord,
    blocks_done: u64,
    histogram: CycleHistogram,
    tune_open: u64,
    tune_closed: u64,
}

impl Chain {
    fn new(config: &PimcConfig, index: u64) -> Result<Self> {
        let bx = config.simulation_box()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(index);
        let mut state = PathEnsembleState::new(bx, config.beta, config.n_particles, config.beads, &config.potential)?;
        if let Some(open) = &config.open {
            let w = open.initial_weight.unwrap_or(1.0 / config.n_particles as f64);
            state.enable_open_sector(open.shift.clone(), w)?;
        }
        Ok(Self {
            index,
            rng,
            state,
            sweeps_done: 0,
            equilibration: AcceptanceStats::default(),
            measurement: AcceptanceStats::default(),
            current: BlockRecord::new(config.n_particles),
            blocks_done: 0,
            histogram: CycleHistogram::new(config.n_particles, bx.volume()),
            tune_open: 0,
            tune_closed: 0,
        })
    }

    fn advance(&mut self, config: &PimcConfig, sweeps: u64) -> Result<()> {
        let eq = config.schedule.equilibration_sweeps;
        let end = config.total_sweeps().min(self.sweeps_done.saturating_add(sweeps));
        let tune = config.open.as_ref().is_some_and(|o| o.tune);
        while self.sweeps_done < end {
            let equilibrating = self.sweeps_done < eq;
            let stats = if equilibrating { &mut self.equilibration } else { &mut self.measurement };
            metropolis_sweep(&mut self.state, &config.potential, &config.moves, &mut self.rng, stats);
            self.sweeps_done += 1;
            if equilibrating {
                if tune {
                    self.tune_open_weight();
                }
                continue;
            }
            let k = self.sweeps_done - eq;
            if k % config.schedule.measure_every == 0 {
                self.measure()?;
            }
            self.current.sweeps += 1;
            if self.current.sweeps == config.schedule.block_sweeps {
                let full = std::mem::replace(&mut self.current, BlockRecord::new(config.n_particles));
                self.histogram.push(self.index, self.blocks_done, full)?;
                self.blocks_done += 1;
            }
        }
        Ok(())
    }

    fn tune_open_weight(&mut self) {
        if self.state.is_open() {
            self.tune_open += 1;
        } else {
            self.tune_closed += 1;
        }
        if self.tune_open + self.tune_closed == TUNE_INTERVAL {
            let ratio = (self.tune_closed as f64 + 1.0) / (self.tune_open as f64 + 1.0);
            let w = self.state.open_sector().map_or(1.0, |o| o.weight);
            self.state.set_open_weight(w * ratio.sqrt().clamp(0.1, 10.0));
            self.tune_open = 0;
            self.tune_closed = 0;
        }
    }

    fn measure(&mut self) -> Result<()> {
        match self.state.marked() {
            None => self.current.record_closed(&self.state.measure_cycles()),
            Some(p) => {
                let w = self.state.open_sector().map_or(1.0, |o| o.weight);
                self.current.record_open(self.state.cycle_length_of(p), w);
                Ok(())
            }
        }
    }
}

/// Serialized sampler: config hash, per-chain RNG, paths, and accumulated blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    chains: Vec<Chain>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PimcWarning {
    /// Permutation swaps were almost never accepted during equilibration.
    NonErgodic { swap_rate: f64 },
    /// The open sector was rarely visited, so the off-diagonal estimate is unreliable.
    PoorOverlap { open_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PimcResult {
    pub histogram: CycleHistogram,
    pub equilibration_acceptance: AcceptanceStats,
    pub acceptance: AcceptanceStats,
    pub open: Option<OpenEstimate>,
    /// Final open-sector weight of each chain; empty without an open sector.
    pub open_weights: Vec<f64>,
    pub warnings: Vec<PimcWarning>,
    pub final_states: Vec<PathEnsembleState>,
}

/// Independent chains advanced in parallel, one RNG stream per chain.
#[derive(Debug, Clone)]
pub struct PimcRunner {
    config: PimcConfig,
    chains: Vec<Chain>,
}

impl PimcRunner {
    pub fn new(config: PimcConfig) -> Result<Self> {
        config.validate()?;
        let chains = (0..config.schedule.chains)
            .map(|i| Chain::new(&config, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, chains })
    }

    pub fn resume(config: PimcConfig, checkpoint: Checkpoint) -> Result<Self> {
        config.validate()?;
        if checkpoint.version != CHECKPOINT_VERSION {
            return Err(Error::Contract(format!("unsupported checkpoint version {}", checkpoint.version)));
        }
        if checkpoint.config_hash != config.hash() {
            return Err(Error::Contract("checkpoint was written for a different configuration".into()));
        }
        if checkpoint.chains.len() as u64 != config.schedule.chains {
            return Err(Error::Contract("checkpoint chain count does not match".into()));
        }
        Ok(Self { config, chains: checkpoint.chains })
    }

    pub fn config(&self) -> &PimcConfig {
        &self.config
    }

    pub fn total_sweeps(&self) -> u64 {
        self.config.total_sweeps()
    }

    /// Sweeps completed by the slowest chain.
    pub fn sweeps_done(&self) -> u64 {
        self.chains.iter().map(|c| c.sweeps_done).min().unwrap_or(0)
    }

    pub fn is_finished(&self) -> bool {
        self.sweeps_done() >= self.total_sweeps()
    }

    /// Advances every chain by up to `sweeps` sweeps.
    pub fn advance(&mut self, sweeps: u64) -> Result<()> {
        let config = &self.config;
        self.chains.par_iter_mut().try_for_each(|c| c.advance(config, sweeps))
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        self.advance(u64::MAX)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { version: CHECKPOINT_VERSION, config_hash: self.config.hash(), chains: self.chains.clone() }
    }

    /// Merged statistics so far; a partially filled block is included.
    pub fn result(&self) -> Result<PimcResult> {
        let bx = self.config.simulation_box()?;
        let mut histogram = CycleHistogram::new(self.config.n_particles, bx.volume());
        let mut equilibration_acceptance = AcceptanceStats::default();
        let mut acceptance = AcceptanceStats::default();
        for c in &self.chains {
            histogram.merge(&c.histogram)?;
            if c.current.sweeps > 0 {
                histogram.push(c.index, c.blocks_done, c.current.clone())?;
            }
            equilibration_acceptance.merge(&c.equilibration);
            acceptance.merge(&c.measurement);
        }
        let mut warnings = Vec::new();
        if self.config.n_particles > 1 && self.config.schedule.equilibration_sweeps > 0 {
            let swap = equilibration_acceptance.swap;
            let rate = if swap.attempted == 0 { 0.0 } else { swap.rate() };
            if rate < NON_ERGODIC_RATE {
                log::warn!("permutation swaps accepted at rate {rate:.3e} during equilibration");
                warnings.push(PimcWarning::NonErgodic { swap_rate: rate });
            }
        }
        let open = if self.config.open.is_some() { histogram.open_estimate() } else { None };
        if self.config.open.is_some() {
            let fraction = open.map_or(0.0, |o| o.open_fraction);
            if fraction < POOR_OVERLAP_FRACTION {
                log::warn!("open sector visited in only {fraction:.3e} of samples");
                warnings.push(PimcWarning::PoorOverlap { open_fraction: fraction });
            }
        }
        log::info!(
            "acceptance: block {:.3}, swap {:.3}, regrow {:.3}, translate {:.3}",
            acceptance.block.rate(),
            acceptance.swap.rate(),
            acceptance.regrow.rate(),
            acceptance.translate.rate()
        );
        Ok(PimcResult {
            histogram,
            equilibration_acceptance,
            acceptance,
            open,
            open_weights: self
                .chains
                .iter()
                .filter_map(|c| c.state.open_sector().map(|o| o.weight))
                .collect(),
            warnings,
            final_states: self.chains.iter().map(|c| c.state.clone()).collect(),
        })
    }
}

/// Runs the full schedule and returns blocked cycle densities.
pub fn run_canonical_pimc(config: PimcConfig) -> Result<PimcResult> {
    let mut runner = PimcRunner::new(config)?;
    runner.run_to_end()?;
    runner.result()
}

/// Samples the ensemble extended by one open trajectory ending at offset `x` and estimates `sigma(x)`.
///
/// Open moves get weight 0.2 unless the config already sets one.
pub fn open_cycle_estimator(mut config: PimcConfig, x: &[f64]) -> Result<PimcResult> {
    config.simulation_box()?.check_point(x)?;
    let (initial_weight, tune) = match &config.open {
        Some(o) => (o.initial_weight, o.tune),
        None => (None, true),
    };
    config.open = Some(OpenSectorConfig { shift: x.to_vec(), initial_weight, tune });
    if config.moves.open <= 0.0 {
        config.moves.open = 0.2;
    }
    run_canonical_pimc(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> PimcConfig {
        let mut c = PimcConfig::with_density(2, 4, 0.3, 1.0, Schedule::new(20, 60), 42).unwrap();
        c.beads = 4;
        c.schedule.block_sweeps = 10;
        c.schedule.chains = 2;
        c.potential = PairPotential::gaussian(0.5, 0.7).unwrap();
        c
    }

    #[test]
    fn seed_determinism() {
        let a = run_canonical_pimc(small_config()).unwrap();
        let b = run_canonical_pimc(small_config()).unwrap();
        assert_eq!(a, b);
        let mut other = small_config();
        other.seed = 43;
        let c = run_canonical_pimc(other).unwrap();
        assert_ne!(a.histogram, c.histogram);
    }

    #[test]
    fn checkpoint_resume_is_bit_identical() {
        let mut whole = PimcRunner::new(small_config()).unwrap();
        whole.run_to_end().unwrap();

        let mut first = PimcRunner::new(small_config()).unwrap();
        first.advance(37).unwrap();
        let json = serde_json::to_string(&first.checkpoint()).unwrap();
        let restored: Checkpoint = serde_json::from_str(&json).unwrap();
        let mut second = PimcRunner::resume(small_config(), restored).unwrap();
        second.run_to_end().unwrap();
        assert_eq!(whole.result().unwrap(), second.result().unwrap());

        let mut changed = small_config();
        changed.beta = 2.0;
        assert!(PimcRunner::resume(changed, first.checkpoint()).is_err());
    }

    #[test]
    fn every_configuration_is_recorded() {
        let r = run_canonical_pimc(small_config()).unwrap();
        assert_eq!(r.histogram.closed_samples(), 2 * 60);
        assert_eq!(r.histogram.blocks().len(), 12);
        let total: f64 = r.histogram.densities().iter().sum();
        assert!((total - 0.3).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = small_config();
        c.moves.open = 0.1;
        assert!(PimcRunner::new(c).is_err());
        let mut c = small_config();
        c.schedule.measurement_sweeps = 0;
        assert!(PimcRunner::new(c).is_err());
        let json = r#"{"dim":3,"n_particles":2,"side":4.0,"beta":1.0,"beads":4,"schedule":{"equilibration_sweeps":1,"measurement_sweeps":1},"seed":1,"bogus":0}"#;
        assert!(serde_json::from_str::<PimcConfig>(json).is_err());
    }
}
