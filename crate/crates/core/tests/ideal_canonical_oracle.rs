//! Exact canonical quantities against brute-force sums over permutations.

use bosecycles::ideal_canonical::CanonicalEnsembleTable;
use bosecycles::SimulationBox;

mod common;

use common::permutations::enumerate;

#[test]
fn six_particles_in_three_dimensions() {
    let (n, beta, side, dim) = (6, 1.0, 5.0, 3);
    let bx = SimulationBox::new(dim, side).unwrap();
    let table = CanonicalEnsembleTable::build(bx, beta, n).unwrap();
    let oracle = enumerate(n, beta, side, dim);
    assert!((table.log_y(n).exp() / oracle.y - 1.0).abs() < 1e-12);
    for len in 1..=n {
        let got = table.cycle_density(len).unwrap() * bx.volume();
        let want = oracle.particles_in[len];
        assert!(((got - want) / want).abs() < 1e-12, "n={len}: {got} vs {want}");
    }
}

#[test]
fn every_prefix_matches_enumeration() {
    for &(beta, side, dim) in &[(0.3, 2.0, 1), (2.0, 3.0, 2), (1.0, 1.5, 3)] {
        let table = CanonicalEnsembleTable::build(SimulationBox::new(dim, side).unwrap(), beta, 7).unwrap();
        for m in 1..=7 {
            let oracle = enumerate(m, beta, side, dim);
            assert!((table.log_y(m) - oracle.y.ln()).abs() < 1e-12 * (1.0 + oracle.y.ln().abs()));
        }
    }
}

#[test]
fn tables_are_deterministic() {
    let bx = SimulationBox::new(3, 7.0).unwrap();
    let a = CanonicalEnsembleTable::build(bx, 1.0, 300).unwrap();
    let b = CanonicalEnsembleTable::build(bx, 1.0, 300).unwrap();
    assert_eq!(a.log_y_values(), b.log_y_values());
    assert_eq!(a.cycle_densities(), b.cycle_densities());
}

#[test]
fn sum_rule_at_ten_thousand_particles() {
    let bx = SimulationBox::with_density(3, 10_000, 0.0586).unwrap();
    let table = CanonicalEnsembleTable::build(bx, 1.0, 10_000).unwrap();
    let total: f64 = table.cycle_densities().iter().sum();
    assert!((total / table.density() - 1.0).abs() < 1e-12);
    let sigma0 = table.odlro_correlation(&[0.0; 3]).unwrap();
    assert!((sigma0 / table.density() - 1.0).abs() < 1e-12);
}
