//! Finite toy version of the sampler: N = 2 particles, M = 2 beads per leg, on a
//! ring of K sites. Kinetic factors are a discrete periodic Gaussian `k_tau` and
//! its self-convolution `k_beta`, so bridge proposals are exact heat baths just
//! like the continuous Levy construction. Acceptances come from the library.

use std::collections::HashMap;

use bosecycles::pimc::moves::{block_acceptance, insert_acceptance, remove_acceptance, swap_acceptance};
use bosecycles::pimc::PairPotential;

pub const K: usize = 4;
pub const N: usize = 2;
pub const M: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Config {
    pub x: [[usize; M]; N],
    pub perm: [usize; N],
    pub marked: Option<usize>,
}

pub struct Toy {
    spacing: f64,
    tau: f64,
    shift: usize,
    weight: f64,
    potential: PairPotential,
    k_tau: [f64; K],
    k_beta: [f64; K],
    pub states: Vec<Config>,
    index: HashMap<Config, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyMove {
    Block,
    Swap,
    Translate,
    Open,
}

pub type Row = Vec<(usize, f64)>;

fn wrap(v: isize) -> usize {
    v.rem_euclid(K as isize) as usize
}

impl Toy {
    pub fn new(beta: f64, spacing: f64, shift: usize, weight: f64, potential: PairPotential) -> Self {
        let tau = beta / M as f64;
        let mut k_tau = [0.0; K];
        for (d, k) in k_tau.iter_mut().enumerate() {
            *k = (-20..=20)
                .map(|z: isize| {
                    let r = spacing * (d as isize + z * K as isize) as f64;
                    (-r * r / (4.0 * tau)).exp()
                })
                .sum();
        }
        let mut k_beta = [0.0; K];
        for (d, k) in k_beta.iter_mut().enumerate() {
            *k = (0..K).map(|y| k_tau[y] * k_tau[wrap(d as isize - y as isize)]).sum();
        }
        let mut states = Vec::new();
        for code in 0..K.pow((N * M) as u32) {
            let mut c = code;
            let mut x = [[0; M]; N];
            for leg in x.iter_mut() {
                for b in leg.iter_mut() {
                    *b = c % K;
                    c /= K;
                }
            }
            for perm in [[0, 1], [1, 0]] {
                for marked in [None, Some(0), Some(1)] {
                    states.push(Config { x, perm, marked });
                }
            }
        }
        let index = states.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        Self { spacing, tau, shift, weight, potential, k_tau, k_beta, states, index }
    }

    fn kt(&self, from: usize, to: usize) -> f64 {
        self.k_tau[wrap(to as isize - from as isize)]
    }

    fn log_kb(&self, from: usize, to: usize) -> f64 {
        self.k_beta[wrap(to as isize - from as isize)].ln()
    }

    fn shift_into(&self, c: &Config, particle: usize) -> usize {
        if c.marked == Some(particle) {
            self.shift
        } else {
            0
        }
    }

    /// End point of the leg ending in `next`, in ring coordinates.
    fn target(&self, c: &Config, next: usize) -> usize {
        (c.x[next][0] + self.shift_into(c, next)) % K
    }

    pub fn action(&self, c: &Config) -> f64 {
        (0..M)
            .map(|s| {
                let d = wrap(c.x[0][s] as isize - c.x[1][s] as isize);
                let r = self.spacing * d.min(K - d) as f64;
                self.tau * self.potential.value(r)
            })
            .sum()
    }

    /// Unnormalized target weight.
    pub fn weight(&self, c: &Config) -> f64 {
        let mut w = (-self.action(c)).exp();
        for j in 0..N {
            w *= self.kt(c.x[j][0], c.x[j][1]) * self.kt(c.x[j][1], self.target(c, c.perm[j]));
        }
        if c.marked.is_some() {
            w *= self.weight;
        }
        w
    }

    /// Distribution of the middle bead of a leg bridging `from` to `to`.
    fn bridge(&self, from: usize, to: usize) -> Vec<(usize, f64)> {
        let norm = self.k_beta[wrap(to as isize - from as isize)];
        (0..K).map(|y| (y, self.kt(from, y) * self.kt(y, to) / norm)).collect()
    }

    fn push(&self, out: &mut HashMap<usize, f64>, from: &Config, to: Config, proposal: f64, acceptance: f64) {
        let acc = acceptance.min(1.0);
        *out.entry(self.index[&to]).or_insert(0.0) += proposal * acc;
        *out.entry(self.index[from]).or_insert(0.0) += proposal * (1.0 - acc);
    }

    fn block_row(&self, c: &Config, out: &mut HashMap<usize, f64>) {
        let p0 = 1.0 / (N * M) as f64;
        for leg in 0..N {
            for slice in 0..M {
                // Two links starting at (leg, slice): the middle bead is the next one along the cycle.
                let (mid_leg, mid_slice, from, to, offset) = if slice == 0 {
                    (leg, 1, c.x[leg][0], self.target(c, c.perm[leg]), 0)
                } else {
                    let next = c.perm[leg];
                    let s = self.shift_into(c, next);
                    (next, 0, c.x[leg][1], (c.x[next][1] + s) % K, s)
                };
                for (y, q) in self.bridge(from, to) {
                    let mut n = *c;
                    n.x[mid_leg][mid_slice] = wrap(y as isize - offset as isize);
                    let acc = block_acceptance(self.action(&n) - self.action(c));
                    self.push(out, c, n, p0 * q, acc);
                }
            }
        }
    }

    fn swap_row(&self, c: &Config, out: &mut HashMap<usize, f64>) {
        let p0 = 1.0 / (N * N) as f64;
        for i in 0..N {
            for j in 0..N {
                if i == j {
                    let to = self.target(c, c.perm[i]);
                    for (y, q) in self.bridge(c.x[i][0], to) {
                        let mut n = *c;
                        n.x[i][1] = y;
                        self.push(out, c, n, p0 * q, block_acceptance(self.action(&n) - self.action(c)));
                    }
                    continue;
                }
                let (next_i, next_j) = (c.perm[j], c.perm[i]);
                let old = [
                    self.log_kb(c.x[i][0], self.target(c, next_j)),
                    self.log_kb(c.x[j][0], self.target(c, next_i)),
                ];
                let (to_i, to_j) = (self.target(c, next_i), self.target(c, next_j));
                let new = [self.log_kb(c.x[i][0], to_i), self.log_kb(c.x[j][0], to_j)];
                for (yi, qi) in self.bridge(c.x[i][0], to_i) {
                    for (yj, qj) in self.bridge(c.x[j][0], to_j) {
                        let mut n = *c;
                        n.x[i][1] = yi;
                        n.x[j][1] = yj;
                        n.perm[i] = next_i;
                        n.perm[j] = next_j;
                        let acc = swap_acceptance(new, old, self.action(&n) - self.action(c));
                        self.push(out, c, n, p0 * qi * qj, acc);
                    }
                }
            }
        }
    }

    fn translate_row(&self, c: &Config, out: &mut HashMap<usize, f64>) {
        for first in 0..N {
            for step in [1, K - 1] {
                let mut n = *c;
                let mut leg = first;
                loop {
                    for s in 0..M {
                        n.x[leg][s] = (c.x[leg][s] + step) % K;
                    }
                    leg = c.perm[leg];
                    if leg == first {
                        break;
                    }
                }
                let acc = block_acceptance(self.action(&n) - self.action(c));
                self.push(out, c, n, 0.5 / N as f64, acc);
            }
        }
    }

    fn open_row(&self, c: &Config, out: &mut HashMap<usize, f64>) {
        let inverse = |p: usize| c.perm.iter().position(|&v| v == p).unwrap();
        match c.marked {
            None => {
                for p in 0..N {
                    let q = inverse(p);
                    let closed = self.log_kb(c.x[q][0], c.x[p][0]);
                    let to = (c.x[p][0] + self.shift) % K;
                    let open = self.log_kb(c.x[q][0], to);
                    for (y, b) in self.bridge(c.x[q][0], to) {
                        let mut n = *c;
                        n.x[q][1] = y;
                        n.marked = Some(p);
                        let acc = insert_acceptance(N, self.weight, open, closed, self.action(&n) - self.action(c));
                        self.push(out, c, n, b / N as f64, acc);
                    }
                }
            }
            Some(p) => {
                let q = inverse(p);
                let open = self.log_kb(c.x[q][0], (c.x[p][0] + self.shift) % K);
                let closed = self.log_kb(c.x[q][0], c.x[p][0]);
                for (y, b) in self.bridge(c.x[q][0], c.x[p][0]) {
                    let mut n = *c;
                    n.x[q][1] = y;
                    n.marked = None;
                    let acc = remove_acceptance(N, self.weight, open, closed, self.action(&n) - self.action(c));
                    self.push(out, c, n, b, acc);
                }
            }
        }
    }

    /// Transition probabilities out of `c` for a mixture of move types.
    pub fn row(&self, c: &Config, mix: &[(ToyMove, f64)]) -> Row {
        let total: f64 = mix.iter().map(|m| m.1).sum();
        let mut row = HashMap::new();
        for &(kind, w) in mix {
            let mut part = HashMap::new();
            match kind {
                ToyMove::Block => self.block_row(c, &mut part),
                ToyMove::Swap => self.swap_row(c, &mut part),
                ToyMove::Translate => self.translate_row(c, &mut part),
                ToyMove::Open => self.open_row(c, &mut part),
            }
            for (k, p) in part {
                *row.entry(k).or_insert(0.0) += p * w / total;
            }
        }
        let mut row: Row = row.into_iter().collect();
        row.sort_by_key(|e| e.0);
        row
    }

    pub fn matrix(&self, mix: &[(ToyMove, f64)]) -> Vec<Row> {
        self.states.iter().map(|c| self.row(c, mix)).collect()
    }

    /// Normalized target distribution over the enumerated states.
    pub fn distribution(&self) -> Vec<f64> {
        let w: Vec<f64> = self.states.iter().map(|c| self.weight(c)).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BalanceReport {
    /// Largest `|pi(a) P(a, b) - pi(b) P(b, a)|`.
    pub detailed: f64,
    /// Largest `|sum_a pi(a) P(a, b) - pi(b)| / pi_max`.
    pub stationary: f64,
    /// Largest deviation of a row sum from one.
    pub row_sum: f64,
}

pub fn balance(pi: &[f64], p: &[Row]) -> BalanceReport {
    let lookup: Vec<HashMap<usize, f64>> = p.iter().map(|r| r.iter().copied().collect()).collect();
    let mut detailed: f64 = 0.0;
    let mut flow = vec![0.0; pi.len()];
    let mut row_sum: f64 = 0.0;
    for (a, row) in p.iter().enumerate() {
        row_sum = row_sum.max((row.iter().map(|e| e.1).sum::<f64>() - 1.0).abs());
        for &(b, pab) in row {
            flow[b] += pi[a] * pab;
            let pba = lookup[b].get(&a).copied().unwrap_or(0.0);
            detailed = detailed.max((pi[a] * pab - pi[b] * pba).abs());
        }
    }
    let top = pi.iter().copied().fold(0.0, f64::max);
    let stationary = flow.iter().zip(pi).map(|(f, q)| (f - q).abs()).fold(0.0, f64::max) / top;
    BalanceReport { detailed, stationary, row_sum }
}
