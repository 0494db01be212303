//! Discretized paths of `N` particles stitched into cycles by a permutation.
//!
//! Leg `j` holds beads `0..M` at times `s * beta / M`, stored unwrapped with
//! bead 0 inside the box. The link leaving the last bead of leg `j` ends at
//! bead 0 of leg `perm[j]` translated by `L * images[j]`; in the open sector
//! the link into the marked particle is further shifted by the open offset.

use serde::{Deserialize, Serialize};

use super::potential::PairPotential;
use crate::error::{Error, Result};
use crate::geometry::SimulationBox;
use crate::heat_kernel::DiscretizedPath;

/// Extended-ensemble data: the open offset `x` and the weight `C` of open configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSector {
    pub shift: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsembleState {
    #[serde(rename = "box")]
    pub(super) bx: SimulationBox,
    pub(super) beta: f64,
    pub(super) n_particles: usize,
    pub(super) beads_per_leg: usize,
    pub(super) beads: Vec<f64>,
    pub(super) images: Vec<i64>,
    pub(super) permutation: Vec<usize>,
    pub(super) inverse: Vec<usize>,
    pub(super) open: Option<OpenSector>,
    pub(super) marked: Option<usize>,
    pub(super) action: f64,
}

impl PathEnsembleState {
    /// Particles on a simple cubic lattice, every path collapsed to its site, identity permutation.
    pub fn new(
        bx: SimulationBox,
        beta: f64,
        n_particles: usize,
        beads_per_leg: usize,
        potential: &PairPotential,
    ) -> Result<Self> {
        if !bx.is_periodic() {
            return Err(Error::InvalidArgument("path sampling needs a finite box".into()));
        }
        if n_particles == 0 || beads_per_leg == 0 {
            return Err(Error::InvalidArgument("particle and bead counts must be positive".into()));
        }
        let dim = bx.dim();
        let per_side = (n_particles as f64).powf(1.0 / dim as f64).ceil() as usize;
        let per_side = if per_side.pow(dim as u32) < n_particles { per_side + 1 } else { per_side };
        let spacing = bx.side() / per_side as f64;
        let mut beads = Vec::with_capacity(n_particles * beads_per_leg * dim);
        for p in 0..n_particles {
            let mut rest = p;
            let mut site = vec![0.0; dim];
            for c in site.iter_mut() {
                *c = (rest % per_side) as f64 * spacing + 0.5 * spacing;
                rest /= per_side;
            }
            for _ in 0..beads_per_leg {
                beads.extend_from_slice(&site);
            }
        }
        let identity: Vec<usize> = (0..n_particles).collect();
        Self::from_parts(bx, beta, beads_per_leg, beads, vec![0; n_particles * dim], identity, potential)
    }

    /// State from explicit bead coordinates (`N * M * d`, leg-major), junction images and permutation.
    pub fn from_parts(
        bx: SimulationBox,
        beta: f64,
        beads_per_leg: usize,
        beads: Vec<f64>,
        images: Vec<i64>,
        permutation: Vec<usize>,
        potential: &PairPotential,
    ) -> Result<Self> {
        crate::error::ensure_positive("beta", beta)?;
        potential.validate()?;
        let dim = bx.dim();
        let n = permutation.len();
        if n == 0 || beads_per_leg == 0 || beads.len() != n * beads_per_leg * dim || images.len() != n * dim {
            return Err(Error::InvalidArgument("inconsistent state dimensions".into()));
        }
        if beads.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("bead coordinates must be finite".into()));
        }
        let mut inverse = vec![usize::MAX; n];
        for (j, &p) in permutation.iter().enumerate() {
            if p >= n || inverse[p] != usize::MAX {
                return Err(Error::InvalidArgument("permutation is not a bijection".into()));
            }
            inverse[p] = j;
        }
        let mut state = Self {
            bx,
            beta,
            n_particles: n,
            beads_per_leg,
            beads,
            images,
            permutation,
            inverse,
            open: None,
            marked: None,
            action: 0.0,
        };
        for j in 0..n {
            state.canonicalize_leg(j);
        }
        state.action = state.interaction_action(potential);
        if !state.action.is_finite() {
            return Err(Error::Domain("configuration has infinite interaction action".into()));
        }
        Ok(state)
    }

    pub fn simulation_box(&self) -> &SimulationBox {
        &self.bx
    }

    pub fn dim(&self) -> usize {
        self.bx.dim()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn beads_per_leg(&self) -> usize {
        self.beads_per_leg
    }

    pub fn time_step(&self) -> f64 {
        self.beta / self.beads_per_leg as f64
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Cached interaction action.
    pub fn action(&self) -> f64 {
        self.action
    }

    #[inline]
    pub(super) fn offset(&self, leg: usize, slice: usize) -> usize {
        (leg * self.beads_per_leg + slice) * self.bx.dim()
    }

    /// Unwrapped coordinates of bead `slice` of leg `leg`.
    #[inline]
    pub fn bead(&self, leg: usize, slice: usize) -> &[f64] {
        let o = self.offset(leg, slice);
        &self.beads[o..o + self.bx.dim()]
    }

    /// Junction image of leg `leg`.
    pub fn image(&self, leg: usize) -> &[i64] {
        let d = self.bx.dim();
        &self.images[leg * d..(leg + 1) * d]
    }

    /// Allows open configurations with offset `shift` and relative weight `weight`.
    pub fn enable_open_sector(&mut self, shift: Vec<f64>, weight: f64) -> Result<()> {
        self.bx.check_point(&shift)?;
        crate::error::ensure_positive("open-sector weight", weight)?;
        if self.marked.is_some() {
            return Err(Error::Contract("cannot reconfigure an open state".into()));
        }
        self.open = Some(OpenSector { shift, weight });
        Ok(())
    }

    pub fn open_sector(&self) -> Option<&OpenSector> {
        self.open.as_ref()
    }

    pub(super) fn set_open_weight(&mut self, weight: f64) {
        if let Some(o) = self.open.as_mut() {
            o.weight = weight;
        }
    }

    /// Marked particle whose incoming link carries the open offset.
    pub fn marked(&self) -> Option<usize> {
        self.marked
    }

    pub fn is_open(&self) -> bool {
        self.marked.is_some()
    }

    /// Extra displacement on links that end at `particle`.
    #[inline]
    pub(super) fn shift_into(&self, particle: usize) -> Option<&[f64]> {
        if self.marked == Some(particle) {
            self.open.as_ref().map(|o| o.shift.as_slice())
        } else {
            None
        }
    }

    /// Where the last link of leg `leg` ends, given junction image `image` and successor `next`.
    pub(super) fn target_with(&self, next: usize, image: &[i64], out: &mut [f64]) {
        let l = self.bx.side();
        let start = self.bead(next, 0);
        let shift = self.shift_into(next);
        for c in 0..self.bx.dim() {
            out[c] = start[c] + l * image[c] as f64 + shift.map_or(0.0, |s| s[c]);
        }
    }

    /// End point of the last link of leg `leg`.
    pub fn link_target(&self, leg: usize, out: &mut [f64]) {
        self.target_with(self.permutation[leg], self.image(leg), out)
    }

    /// Moves bead 0 of `leg` back into the box, compensating in the junction images.
    pub(super) fn canonicalize_leg(&mut self, leg: usize) {
        let dim = self.bx.dim();
        let l = self.bx.side();
        let m = self.beads_per_leg;
        let prev = self.inverse[leg];
        for c in 0..dim {
            let mut shift = 0i64;
            loop {
                // `[0, L]` is closed so that rounding cannot make this oscillate.
                let x0 = self.beads[self.offset(leg, 0) + c];
                if (0.0..=l).contains(&x0) {
                    break;
                }
                let k = (x0 / l).floor() as i64;
                let k = if x0 < 0.0 { k.min(-1) } else { k.max(1) };
                for s in 0..m {
                    let o = self.offset(leg, s) + c;
                    self.beads[o] -= l * k as f64;
                }
                shift += k;
            }
            if shift != 0 {
                self.images[leg * dim + c] -= shift;
                self.images[prev * dim + c] += shift;
            }
        }
    }

    /// Permutation cycles, each starting at its smallest leg, ordered by that leg.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n_particles];
        let mut out = Vec::new();
        for start in 0..self.n_particles {
            if seen[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                cycle.push(j);
                j = self.permutation[j];
            }
            out.push(cycle);
        }
        out
    }

    /// Length of the cycle containing `leg`.
    pub fn cycle_length_of(&self, leg: usize) -> usize {
        let mut len = 1;
        let mut j = self.permutation[leg];
        while j != leg {
            j = self.permutation[j];
            len += 1;
        }
        len
    }

    /// Cycle lengths in non-increasing order; they sum to `N`.
    pub fn measure_cycles(&self) -> Vec<usize> {
        let mut lengths: Vec<usize> = self.cycles().iter().map(Vec::len).collect();
        lengths.sort_unstable_by(|a, b| b.cmp(a));
        lengths
    }

    /// The closed trajectory of a cycle as one unwrapped path of `n M + 1` beads.
    pub fn cycle_path(&self, cycle: &[usize]) -> DiscretizedPath {
        let dim = self.bx.dim();
        let m = self.beads_per_leg;
        let mut beads = Vec::with_capacity((cycle.len() * m + 1) * dim);
        let mut offset = vec![0.0; dim];
        let mut target = vec![0.0; dim];
        for &leg in cycle {
            for s in 0..m {
                beads.extend(self.bead(leg, s).iter().zip(&offset).map(|(x, o)| x + o));
            }
            self.link_target(leg, &mut target);
            let next0 = self.bead(self.permutation[leg], 0);
            for c in 0..dim {
                offset[c] += target[c] - next0[c];
            }
        }
        let first = self.bead(cycle[0], 0);
        beads.extend(first.iter().zip(&offset).map(|(x, o)| x + o));
        DiscretizedPath::from_beads(cycle.len(), m, self.time_step(), beads, &self.bx)
    }

    /// Interaction action summed slice by slice over particle pairs.
    pub fn interaction_action(&self, potential: &PairPotential) -> f64 {
        if potential.is_zero() {
            return 0.0;
        }
        let mut total = 0.0;
        for s in 0..self.beads_per_leg {
            for i in 0..self.n_particles {
                for j in i + 1..self.n_particles {
                    total += potential.value_r2(self.bx.distance2(self.bead(i, s), self.bead(j, s)));
                }
            }
        }
        self.time_step() * total
    }

    /// Interaction action as self-terms of each closed trajectory plus pair terms between trajectories.
    pub fn interaction_action_by_cycles(&self, potential: &PairPotential) -> f64 {
        let m = self.beads_per_leg;
        let paths: Vec<DiscretizedPath> = self.cycles().iter().map(|c| self.cycle_path(c)).collect();
        let u = |a: &[f64], b: &[f64]| potential.value_r2(self.bx.distance2(a, b));
        let mut total = 0.0;
        for (k, w) in paths.iter().enumerate() {
            // Legs i < j of the same trajectory, at equal times modulo beta.
            for i in 0..w.winding() {
                for j in i + 1..w.winding() {
                    for s in 0..m {
                        total += u(w.bead(i * m + s), w.bead(j * m + s));
                    }
                }
            }
            for w2 in &paths[k + 1..] {
                for i in 0..w.winding() {
                    for j in 0..w2.winding() {
                        for s in 0..m {
                            total += u(w.bead(i * m + s), w2.bead(j * m + s));
                        }
                    }
                }
            }
        }
        self.time_step() * total
    }

    /// Action change when bead `(leg, slice)` of each entry of `changes` moves to the matching row of `new_pos`.
    pub(super) fn delta_action(
        &self,
        potential: &PairPotential,
        changes: &[(usize, usize)],
        new_pos: &[f64],
    ) -> f64 {
        if potential.is_zero() || changes.is_empty() {
            return 0.0;
        }
        let dim = self.bx.dim();
        let mut order: Vec<usize> = (0..changes.len()).collect();
        order.sort_by_key(|&k| (changes[k].1, changes[k].0));
        let u = |a: &[f64], b: &[f64]| potential.value_r2(self.bx.distance2(a, b));
        let mut delta = 0.0;
        let mut start = 0;
        while start < order.len() {
            let slice = changes[order[start]].1;
            let mut end = start;
            while end < order.len() && changes[order[end]].1 == slice {
                end += 1;
            }
            let group = &order[start..end];
            let moved = |leg: usize| group.iter().any(|&g| changes[g].0 == leg);
            let (mut old, mut new) = (0.0, 0.0);
            for (gi, &g) in group.iter().enumerate() {
                let leg = changes[g].0;
                let x_old = self.bead(leg, slice);
                let x_new = &new_pos[g * dim..(g + 1) * dim];
                for k in 0..self.n_particles {
                    if moved(k) {
                        continue;
                    }
                    let y = self.bead(k, slice);
                    old += u(x_old, y);
                    new += u(x_new, y);
                }
                for &h in &group[gi + 1..] {
                    old += u(x_old, self.bead(changes[h].0, slice));
                    new += u(x_new, &new_pos[h * dim..(h + 1) * dim]);
                }
            }
            if new == f64::INFINITY {
                return f64::INFINITY;
            }
            delta += new - old;
            start = end;
        }
        self.time_step() * delta
    }

    /// Writes accepted bead positions, re-canonicalizes touched legs and updates the action.
    pub(super) fn apply_changes(&mut self, changes: &[(usize, usize)], new_pos: &[f64], delta: f64) {
        let dim = self.bx.dim();
        for (k, &(leg, slice)) in changes.iter().enumerate() {
            let o = self.offset(leg, slice);
            self.beads[o..o + dim].copy_from_slice(&new_pos[k * dim..(k + 1) * dim]);
        }
        for &(leg, slice) in changes {
            if slice == 0 {
                self.canonicalize_leg(leg);
            }
        }
        self.action += delta;
    }

    /// Structural checks plus action-cache coherence to relative `1e-9`.
    pub fn check_invariants(&self, potential: &PairPotential) -> Result<()> {
        let n = self.n_particles;
        for j in 0..n {
            if self.permutation[j] >= n || self.inverse[self.permutation[j]] != j {
                return Err(Error::Contract("permutation and inverse disagree".into()));
            }
            for &x in self.bead(j, 0) {
                if !(0.0..=self.bx.side()).contains(&x) {
                    return Err(Error::Contract(format!("bead 0 of leg {j} left the box")));
                }
            }
        }
        if let Some(p) = self.marked {
            if p >= n || self.open.is_none() {
                return Err(Error::Contract("open sector without a valid marked particle".into()));
            }
        }
        // Each leg must end where its successor begins, up to lattice vectors and the open shift.
        let dim = self.bx.dim();
        let mut target = vec![0.0; dim];
        for j in 0..n {
            self.link_target(j, &mut target);
            let next = self.permutation[j];
            let shift = self.shift_into(next);
            for c in 0..dim {
                let gap = target[c] - self.bead(next, 0)[c] - shift.map_or(0.0, |s| s[c]);
                if self.bx.min_image_1d(gap).abs() > 1e-9 * self.bx.side() {
                    return Err(Error::Contract(format!("leg {j} is not stitched to leg {next}")));
                }
            }
        }
        let fresh = self.interaction_action(potential);
        if (fresh - self.action).abs() > 1e-9 * fresh.abs().max(1.0) {
            return Err(Error::Contract(format!(
                "cached action {} differs from recomputed {fresh}",
                self.action
            )));
        }
        Ok(())
    }

    /// Sum over links of `ln g_tau` (free Gaussian, explicit images); the kinetic part of the path weight.
    pub fn log_kinetic_weight(&self) -> f64 {
        let dim = self.bx.dim();
        let tau = self.time_step();
        let norm = -0.5 * dim as f64 * (4.0 * std::f64::consts::PI * tau).ln();
        let mut target = vec![0.0; dim];
        let mut total = 0.0;
        for j in 0..self.n_particles {
            for s in 0..self.beads_per_leg {
                let a = self.bead(j, s);
                let b: &[f64] = if s + 1 < self.beads_per_leg {
                    self.bead(j, s + 1)
                } else {
                    self.link_target(j, &mut target);
                    &target
                };
                let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                total += norm - r2 / (4.0 * tau);
            }
        }
        total
    }
}
