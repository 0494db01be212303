//! Metropolis-Hastings moves on [`PathEnsembleState`].
//!
//! All bridge proposals are drawn from the free heat kernel, so acceptance
//! involves only the interaction action and, when a link changes its end
//! point, the ratio of periodic kernels `g_beta` over the old and new legs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::potential::PairPotential;
use super::state::PathEnsembleState;
use crate::heat_kernel::{fill_levy, log_heat_kernel_unchecked, sample_image};

/// Relative frequencies of the move types and their step parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoveMix {
    /// Bead-block bridge resampling.
    pub block: f64,
    /// Permutation swap with regrowth of the two affected legs.
    pub swap: f64,
    /// Rigid translation of a whole cycle.
    pub translate: f64,
    /// Insertion or removal of the open offset.
    pub open: f64,
    /// Largest block length in links; 0 means one full leg.
    pub max_block_links: usize,
    /// Half-width of the translation step; 0 picks `min(sqrt(2 beta), L/2)`.
    pub translate_step: f64,
}

impl Default for MoveMix {
    fn default() -> Self {
        Self { block: 0.6, swap: 0.3, translate: 0.1, open: 0.0, max_block_links: 0, translate_step: 0.0 }
    }
}

impl MoveMix {
    pub fn validate(&self) -> crate::Result<()> {
        let w = [self.block, self.swap, self.translate, self.open];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(crate::Error::InvalidArgument("move weights must be nonnegative with a positive sum".into()));
        }
        if !(self.translate_step.is_finite() && self.translate_step >= 0.0) {
            return Err(crate::Error::InvalidArgument("translation step must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounter {
    pub attempted: u64,
    pub accepted: u64,
}

impl MoveCounter {
    pub fn rate(&self) -> f64 {
        if self.attempted == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }

    fn record(&mut self, accepted: bool) {
        self.attempted += 1;
        self.accepted += accepted as u64;
    }

    fn merge(&mut self, other: &MoveCounter) {
        self.attempted += other.attempted;
        self.accepted += other.accepted;
    }
}

/// Attempt and acceptance counts per move type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub block: MoveCounter,
    /// Swaps between two distinct legs; these change the permutation.
    pub swap: MoveCounter,
    /// Swap proposals with `i = j`, i.e. pure leg regrowth.
    pub regrow: MoveCounter,
    pub translate: MoveCounter,
    pub insert: MoveCounter,
    pub remove: MoveCounter,
}

impl AcceptanceStats {
    pub fn merge(&mut self, other: &AcceptanceStats) {
        self.block.merge(&other.block);
        self.swap.merge(&other.swap);
        self.regrow.merge(&other.regrow);
        self.translate.merge(&other.translate);
        self.insert.merge(&other.insert);
        self.remove.merge(&other.remove);
    }
}

fn probability(log_ratio: f64) -> f64 {
    if log_ratio >= 0.0 {
        1.0
    } else if log_ratio.is_nan() {
        0.0
    } else {
        log_ratio.exp()
    }
}

/// Acceptance of a bridge resampling or translation with action change `delta_action`.
pub fn block_acceptance(delta_action: f64) -> f64 {
    probability(-delta_action)
}

/// Acceptance of a two-leg swap given `ln g_beta` of the new and old leg displacements.
pub fn swap_acceptance(log_g_new: [f64; 2], log_g_old: [f64; 2], delta_action: f64) -> f64 {
    probability(log_g_new[0] + log_g_new[1] - log_g_old[0] - log_g_old[1] - delta_action)
}

/// Acceptance of opening the link into a uniformly chosen particle out of `n`.
pub fn insert_acceptance(n: usize, weight: f64, log_g_open: f64, log_g_closed: f64, delta_action: f64) -> f64 {
    probability((n as f64 * weight).ln() + log_g_open - log_g_closed - delta_action)
}

/// Acceptance of closing the open link; the reverse of [`insert_acceptance`].
pub fn remove_acceptance(n: usize, weight: f64, log_g_open: f64, log_g_closed: f64, delta_action: f64) -> f64 {
    probability(-(n as f64 * weight).ln() + log_g_closed - log_g_open - delta_action)
}

fn accept<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    p >= 1.0 || rng.random::<f64>() < p
}

/// A regrown leg: beads `1..M`, the new junction image and `ln g_beta` of the new end-to-end displacement.
struct Regrowth {
    beads: Vec<f64>,
    image: Vec<i64>,
    log_g: f64,
}

/// `ln g_beta` of the displacement from bead 0 of `leg` to bead 0 of `next` plus `shift`.
fn leg_log_kernel(state: &PathEnsembleState, leg: usize, next: usize, shift: Option<&[f64]>) -> f64 {
    let dim = state.dim();
    let a = state.bead(leg, 0);
    let b = state.bead(next, 0);
    let delta: Vec<f64> = (0..dim).map(|c| b[c] + shift.map_or(0.0, |s| s[c]) - a[c]).collect();
    log_heat_kernel_unchecked(state.beta(), &delta, state.simulation_box().side())
}

/// Samples a fresh leg from bead 0 of `leg` to bead 0 of `next` plus `shift`, over time `beta`.
fn regrow_leg<R: Rng + ?Sized>(
    state: &PathEnsembleState,
    leg: usize,
    next: usize,
    shift: Option<&[f64]>,
    rng: &mut R,
) -> Regrowth {
    let dim = state.dim();
    let m = state.beads_per_leg();
    let side = state.simulation_box().side();
    let beta = state.beta();
    let start = state.bead(leg, 0);
    let end: Vec<f64> = (0..dim).map(|c| state.bead(next, 0)[c] + shift.map_or(0.0, |s| s[c])).collect();
    let image: Vec<i64> = (0..dim).map(|c| sample_image(beta, start[c], end[c], side, rng)).collect();
    let mut buf = vec![0.0; (m + 1) * dim];
    buf[..dim].copy_from_slice(start);
    for c in 0..dim {
        buf[m * dim + c] = end[c] + side * image[c] as f64;
    }
    fill_levy(&mut buf, dim, state.time_step(), rng);
    let delta: Vec<f64> = (0..dim).map(|c| end[c] - start[c]).collect();
    Regrowth {
        beads: buf[dim..m * dim].to_vec(),
        image,
        log_g: log_heat_kernel_unchecked(beta, &delta, side),
    }
}

fn leg_changes(leg: usize, m: usize, out: &mut Vec<(usize, usize)>) {
    out.extend((1..m).map(|s| (leg, s)));
}

fn set_image(state: &mut PathEnsembleState, leg: usize, image: &[i64]) {
    let dim = state.dim();
    state.images[leg * dim..(leg + 1) * dim].copy_from_slice(image);
}

/// Resamples a block of consecutive beads along a cycle, possibly across leg junctions.
pub(super) fn block_move<R: Rng + ?Sized>(
    state: &mut PathEnsembleState,
    potential: &PairPotential,
    max_links: usize,
    rng: &mut R,
    stats: &mut AcceptanceStats,
) {
    let m = state.beads_per_leg();
    if m < 2 {
        return;
    }
    let dim = state.dim();
    let side = state.simulation_box().side();
    let top = if max_links == 0 { m } else { max_links.clamp(2, m) };
    let links = rng.random_range(2..=top);
    let mut leg = rng.random_range(0..state.n_particles());
    let mut slice = rng.random_range(0..m);

    let mut buf = vec![0.0; (links + 1) * dim];
    let mut offsets = vec![0.0; (links + 1) * dim];
    let mut changes = Vec::with_capacity(links - 1);
    buf[..dim].copy_from_slice(state.bead(leg, slice));
    let mut offset = vec![0.0; dim];
    for t in 1..=links {
        if slice + 1 < m {
            slice += 1;
        } else {
            let next = state.permutation[leg];
            let shift = state.shift_into(next);
            for c in 0..dim {
                offset[c] += side * state.image(leg)[c] as f64 + shift.map_or(0.0, |s| s[c]);
            }
            leg = next;
            slice = 0;
        }
        let bead = state.bead(leg, slice);
        for c in 0..dim {
            buf[t * dim + c] = bead[c] + offset[c];
        }
        offsets[t * dim..(t + 1) * dim].copy_from_slice(&offset);
        if t < links {
            changes.push((leg, slice));
        }
    }
    fill_levy(&mut buf, dim, state.time_step(), rng);
    let new_pos: Vec<f64> = (dim..links * dim).map(|k| buf[k] - offsets[k]).collect();
    let delta = state.delta_action(potential, &changes, &new_pos);
    let ok = accept(block_acceptance(delta), rng);
    if ok {
        state.apply_changes(&changes, &new_pos, delta);
    }
    stats.block.record(ok);
}

/// Picks an ordered pair `(i, j)`; for `i != j` exchanges their successors and regrows both legs.
pub(super) fn swap_move<R: Rng + ?Sized>(
    state: &mut PathEnsembleState,
    potential: &PairPotential,
    rng: &mut R,
    stats: &mut AcceptanceStats,
) {
    let n = state.n_particles();
    let m = state.beads_per_leg();
    let i = rng.random_range(0..n);
    let j = rng.random_range(0..n);
    let mut changes = Vec::with_capacity(2 * m);
    if i == j {
        let next = state.permutation[i];
        let shift = state.shift_into(next).map(<[f64]>::to_vec);
        let g = regrow_leg(state, i, next, shift.as_deref(), rng);
        leg_changes(i, m, &mut changes);
        let delta = state.delta_action(potential, &changes, &g.beads);
        let ok = accept(block_acceptance(delta), rng);
        if ok {
            state.apply_changes(&changes, &g.beads, delta);
            set_image(state, i, &g.image);
        }
        stats.regrow.record(ok);
        return;
    }

    let (next_i, next_j) = (state.permutation[j], state.permutation[i]);
    let shift_i = state.shift_into(next_i).map(<[f64]>::to_vec);
    let shift_j = state.shift_into(next_j).map(<[f64]>::to_vec);
    let old_i = leg_log_kernel(state, i, next_j, shift_j.as_deref());
    let old_j = leg_log_kernel(state, j, next_i, shift_i.as_deref());
    let gi = regrow_leg(state, i, next_i, shift_i.as_deref(), rng);
    let gj = regrow_leg(state, j, next_j, shift_j.as_deref(), rng);
    leg_changes(i, m, &mut changes);
    leg_changes(j, m, &mut changes);
    let mut new_pos = gi.beads;
    new_pos.extend_from_slice(&gj.beads);
    let delta = state.delta_action(potential, &changes, &new_pos);
    let ok = accept(swap_acceptance([gi.log_g, gj.log_g], [old_i, old_j], delta), rng);
    if ok {
        state.apply_changes(&changes, &new_pos, delta);
        set_image(state, i, &gi.image);
        set_image(state, j, &gj.image);
        state.permutation[i] = next_i;
        state.permutation[j] = next_j;
        state.inverse[next_i] = i;
        state.inverse[next_j] = j;
    }
    stats.swap.record(ok);
}

/// Rigid translation of the cycle through a random leg.
pub(super) fn translate_move<R: Rng + ?Sized>(
    state: &mut PathEnsembleState,
    potential: &PairPotential,
    step: f64,
    rng: &mut R,
    stats: &mut AcceptanceStats,
) {
    let dim = state.dim();
    let m = state.beads_per_leg();
    let first = rng.random_range(0..state.n_particles());
    let shift: Vec<f64> = (0..dim).map(|_| step * (2.0 * rng.random::<f64>() - 1.0)).collect();
    let mut changes = Vec::new();
    let mut new_pos = Vec::new();
    let mut leg = first;
    loop {
        for s in 0..m {
            changes.push((leg, s));
            new_pos.extend(state.bead(leg, s).iter().zip(&shift).map(|(x, d)| x + d));
        }
        leg = state.permutation[leg];
        if leg == first {
            break;
        }
    }
    let delta = state.delta_action(potential, &changes, &new_pos);
    let ok = accept(block_acceptance(delta), rng);
    if ok {
        state.apply_changes(&changes, &new_pos, delta);
    }
    stats.translate.record(ok);
}

/// Opens the link into a random particle, or closes the open one.
pub(super) fn open_move<R: Rng + ?Sized>(
    state: &mut PathEnsembleState,
    potential: &PairPotential,
    rng: &mut R,
    stats: &mut AcceptanceStats,
) {
    let Some(sector) = state.open.clone() else {
        return;
    };
    let n = state.n_particles();
    let m = state.beads_per_leg();
    let mut changes = Vec::with_capacity(m);
    match state.marked {
        None => {
            let p = rng.random_range(0..n);
            let q = state.inverse[p];
            let closed = leg_log_kernel(state, q, p, None);
            let g = regrow_leg(state, q, p, Some(&sector.shift), rng);
            leg_changes(q, m, &mut changes);
            let delta = state.delta_action(potential, &changes, &g.beads);
            let ok = accept(insert_acceptance(n, sector.weight, g.log_g, closed, delta), rng);
            if ok {
                state.apply_changes(&changes, &g.beads, delta);
                set_image(state, q, &g.image);
                state.marked = Some(p);
            }
            stats.insert.record(ok);
        }
        Some(p) => {
            let q = state.inverse[p];
            let open = leg_log_kernel(state, q, p, Some(&sector.shift));
            let g = regrow_leg(state, q, p, None, rng);
            leg_changes(q, m, &mut changes);
            let delta = state.delta_action(potential, &changes, &g.beads);
            let ok = accept(remove_acceptance(n, sector.weight, open, g.log_g, delta), rng);
            if ok {
                state.apply_changes(&changes, &g.beads, delta);
                set_image(state, q, &g.image);
                state.marked = None;
            }
            stats.remove.record(ok);
        }
    }
}

/// `N` move attempts, each type drawn with probability proportional to its weight in `mix`.
///
/// Rejected moves leave the state bit-identical.
pub fn metropolis_sweep<R: Rng + ?Sized>(
    state: &mut PathEnsembleState,
    potential: &PairPotential,
    mix: &MoveMix,
    rng: &mut R,
    stats: &mut AcceptanceStats,
) {
    let open_weight = if state.open.is_some() { mix.open } else { 0.0 };
    let total = mix.block + mix.swap + mix.translate + open_weight;
    let step = if mix.translate_step > 0.0 {
        mix.translate_step
    } else {
        (2.0 * state.beta()).sqrt().min(0.5 * state.simulation_box().side())
    };
    for _ in 0..state.n_particles() {
        let u = rng.random::<f64>() * total;
        if u < mix.block {
            block_move(state, potential, mix.max_block_links, rng, stats);
        } else if u < mix.block + mix.swap {
            swap_move(state, potential, rng, stats);
        } else if u < mix.block + mix.swap + mix.translate {
            translate_move(state, potential, step, rng, stats);
        } else {
            open_move(state, potential, rng, stats);
        }
    }
    debug_assert!(
        state.check_invariants(potential).is_ok(),
        "{:?}",
        state.check_invariants(potential)
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SimulationBox;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn acceptance_formulas() {
        assert_eq!(block_acceptance(-1.0), 1.0);
        assert!((block_acceptance(2.0) - (-2.0f64).exp()).abs() < 1e-16);
        assert_eq!(block_acceptance(f64::INFINITY), 0.0);
        let p = swap_acceptance([-1.0, -2.0], [-1.5, -1.0], 0.25);
        assert!((p - (-0.75f64).exp()).abs() < 1e-15);
        let a = insert_acceptance(4, 0.01, -2.0, -1.0, 0.0);
        let b = remove_acceptance(4, 0.01, -2.0, -1.0, 0.0);
        assert!((a - 0.04 * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(b, 1.0);
    }

    #[test]
    fn sweeps_keep_invariants() {
        let pot = PairPotential::gaussian(1.0, 0.5).unwrap();
        let bx = SimulationBox::new(3, 3.0).unwrap();
        let mut state = PathEnsembleState::new(bx, 1.0, 6, 4, &pot).unwrap();
        state.enable_open_sector(vec![0.7, 0.0, 0.2], 0.1).unwrap();
        let mix = MoveMix { open: 0.2, ..MoveMix::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut stats = AcceptanceStats::default();
        for _ in 0..300 {
            metropolis_sweep(&mut state, &pot, &mix, &mut rng, &mut stats);
            state.check_invariants(&pot).unwrap();
            assert_eq!(state.measure_cycles().iter().sum::<usize>(), 6);
        }
        assert!(stats.block.accepted > 0 && stats.swap.accepted > 0 && stats.translate.accepted > 0);
        assert!(stats.insert.accepted > 0 && stats.remove.accepted > 0);
    }

    #[test]
    fn hard_core_overlap_is_never_accepted() {
        let pot = PairPotential::hard_core(0.8).unwrap();
        let bx = SimulationBox::new(2, 4.0).unwrap();
        let mut state = PathEnsembleState::new(bx, 1.0, 4, 4, &pot).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut stats = AcceptanceStats::default();
        for _ in 0..200 {
            metropolis_sweep(&mut state, &pot, &MoveMix::default(), &mut rng, &mut stats);
            assert!(state.action().is_finite());
            for s in 0..4 {
                for i in 0..4 {
                    for j in i + 1..4 {
                        assert!(bx.distance2(state.bead(i, s), state.bead(j, s)) >= 0.64);
                    }
                }
            }
        }
    }

    #[test]
    fn rejected_moves_leave_state_untouched() {
        let pot = PairPotential::gaussian(3.0, 0.6).unwrap();
        let bx = SimulationBox::new(2, 3.0).unwrap();
        let mut state = PathEnsembleState::new(bx, 1.0, 5, 4, &pot).unwrap();
        state.enable_open_sector(vec![0.5, 0.5], 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut stats = AcceptanceStats::default();
        let accepted = |s: &AcceptanceStats| {
            s.block.accepted + s.swap.accepted + s.regrow.accepted + s.translate.accepted + s.insert.accepted + s.remove.accepted
        };
        let mut rejections = 0;
        for k in 0..2000 {
            let before = state.clone();
            let count = accepted(&stats);
            match k % 4 {
                0 => block_move(&mut state, &pot, 0, &mut rng, &mut stats),
                1 => swap_move(&mut state, &pot, &mut rng, &mut stats),
                2 => translate_move(&mut state, &pot, 1.0, &mut rng, &mut stats),
                _ => open_move(&mut state, &pot, &mut rng, &mut stats),
            }
            if accepted(&stats) == count {
                assert_eq!(state, before);
                rejections += 1;
            }
        }
        assert!(rejections > 100);
    }
}
