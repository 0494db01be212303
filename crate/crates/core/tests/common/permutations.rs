//! Canonical ideal gas by summing over every permutation of S_N.

/// `C_n` as a sum over the dual lattice: `(sum_m exp(-n beta (2 pi m / L)^2))^d`.
pub fn momentum_cycle_weight(n: usize, beta: f64, side: f64, dim: usize) -> f64 {
    let q = 2.0 * std::f64::consts::PI / side;
    let mut s = 0.0;
    for m in -200i64..=200 {
        s += (-(n as f64) * beta * (q * m as f64).powi(2)).exp();
    }
    s.powi(dim as i32)
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    heap(n, &mut p, &mut out);
    out
}

fn heap(k: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(p.clone());
        return;
    }
    for i in 0..k - 1 {
        heap(k - 1, p, out);
        if k % 2 == 0 {
            p.swap(i, k - 1);
        } else {
            p.swap(0, k - 1);
        }
    }
    heap(k - 1, p, out);
}

pub fn cycle_lengths(p: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; p.len()];
    let mut lengths = Vec::new();
    for start in 0..p.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut j = start;
        while !seen[j] {
            seen[j] = true;
            j = p[j];
            len += 1;
        }
        lengths.push(len);
    }
    lengths
}

pub struct Enumeration {
    pub y: f64,
    /// Expected number of particles in cycles of each length, index = length.
    pub particles_in: Vec<f64>,
}

pub fn enumerate(n: usize, beta: f64, side: f64, dim: usize) -> Enumeration {
    let c: Vec<f64> = (0..=n).map(|k| if k == 0 { 1.0 } else { momentum_cycle_weight(k, beta, side, dim) }).collect();
    let mut total = 0.0;
    let mut particles_in = vec![0.0; n + 1];
    let mut count = 0usize;
    for p in permutations(n) {
        count += 1;
        let lengths = cycle_lengths(&p);
        let w: f64 = lengths.iter().map(|&l| c[l]).product();
        total += w;
        for &l in &lengths {
            particles_in[l] += w * l as f64;
        }
    }
    let factorial: usize = (1..=n).product();
    assert_eq!(count, factorial);
    for v in &mut particles_in {
        *v /= total;
    }
    Enumeration { y: total / factorial as f64, particles_in }
}
