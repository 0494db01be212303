//! Path-integral Monte Carlo for bosons with a pair potential.
//!
//! Paths are discretized with `M` beads per leg and the primitive action
//! `(beta / M) sum_s sum_{i<j} U(x_i(s) - x_j(s))`. Kinetic weights are sampled
//! exactly by Brownian bridges, so the ideal gas is exact at every `M`.

pub mod brute_force;
pub mod histogram;
pub mod moves;
pub mod potential;
pub mod sampler;
pub mod state;

pub use brute_force::{brute_force_small, BruteForceResult};
pub use histogram::{BlockRecord, ChiSquareReport, CycleHistogram, OpenEstimate};
pub use moves::{metropolis_sweep, AcceptanceStats, MoveCounter, MoveMix};
pub use potential::PairPotential;
pub use sampler::{
    open_cycle_estimator, run_canonical_pimc, Checkpoint, OpenSectorConfig, PimcConfig, PimcResult, PimcRunner,
    PimcWarning, Schedule,
};
pub use state::{OpenSector, PathEnsembleState};

/// Cycle lengths of `state`'s permutation in non-increasing order.
pub fn measure_cycles(state: &PathEnsembleState) -> Vec<usize> {
    state.measure_cycles()
}

/// Interaction action of `state` recomputed from scratch.
pub fn interaction_action(state: &PathEnsembleState, potential: &PairPotential) -> f64 {
    state.interaction_action(potential)
}
