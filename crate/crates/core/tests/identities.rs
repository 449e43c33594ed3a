mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use triad_core::dynamics::{
    deterministic_rhs, difference_identity_residual, energy, galerkin_oracle_rhs, helicity,
    lu_salt_coincidence_residual, triad_mode_set, GALERKIN_TO_TRIAD,
};
use triad_core::helical::{cross, verify_basis_identities, IDENTITY_TOL};
use triad_core::{Complex3, TriadGeometry};

const TOL: f64 = 1e-12;

fn close(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= TOL
}

fn close3(a: &Complex3, b: &Complex3) -> bool {
    (*a - *b).max_abs() <= TOL
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn triple_product_is_cyclic(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let (a, b, c) = (random_complex3(&mut rng, 1.0), random_complex3(&mut rng, 1.0), random_complex3(&mut rng, 1.0));
        let abc = a.dot(&cross(&b, &c));
        prop_assert!(close(abc, b.dot(&cross(&c, &a))));
        prop_assert!(close(abc, c.dot(&cross(&a, &b))));
    }

    #[test]
    fn bac_cab(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let (a, b, c) = (random_complex3(&mut rng, 1.0), random_complex3(&mut rng, 1.0), random_complex3(&mut rng, 1.0));
        let lhs = cross(&a, &cross(&b, &c));
        let rhs = b * a.dot(&c) - c * a.dot(&b);
        prop_assert!(close3(&lhs, &rhs));
    }

    #[test]
    fn lagrange_identity(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let [a, b, c, d] = [(); 4].map(|_| random_complex3(&mut rng, 1.0));
        let lhs = cross(&a, &b).dot(&cross(&c, &d));
        let rhs = a.dot(&c) * b.dot(&d) - a.dot(&d) * b.dot(&c);
        prop_assert!(close(lhs, rhs));
    }

    #[test]
    fn self_cross_vanishes(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let a = random_complex3(&mut rng, 1.0);
        prop_assert!(cross(&a, &a).max_abs() <= TOL);
    }

    #[test]
    fn random_triads_satisfy_basis_identities(seed in any::<u64>()) {
        let geom = random_triad(&mut seeded(seed));
        let report = verify_basis_identities(&geom);
        prop_assert!(report.max_residual() <= IDENTITY_TOL, "{report:?}");
    }

    #[test]
    fn interaction_constant_is_scale_invariant(seed in any::<u64>(), m in 2i64..6) {
        let geom = random_triad(&mut seeded(seed));
        let big = geom.scaled(m).unwrap();
        prop_assert!((big.g - geom.g).norm() <= TOL * geom.g.norm().max(1.0));
    }

    #[test]
    fn lu_salt_terms_vanish(seed in any::<u64>()) {
        let geom = random_triad(&mut seeded(seed));
        prop_assert!(lu_salt_coincidence_residual(&geom) <= TOL);
    }

    #[test]
    fn difference_identity(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let geom = random_triad(&mut rng);
        let a = random_complex3(&mut rng, 1.0);
        let b = random_real3(&mut rng, 1.0);
        prop_assert!(difference_identity_residual(&a, &b, &geom) <= TOL);
    }

    #[test]
    fn drift_conserves_energy_and_helicity_instantaneously(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let geom = random_triad(&mut rng);
        let a = random_complex3(&mut rng, 1.0);
        let f = deterministic_rhs(&a, &geom);
        // dE/dt = 2 Re(a*·f), dH/dt = 2 Re((Da)*·f)
        let de = 2.0 * a.conj().dot(&f).re;
        let dh = 2.0 * a.scale_diag(&geom.d_diag).conj().dot(&f).re;
        let scale = geom.g.norm() * geom.d_diag.iter().fold(1.0f64, |m, d| m.max(d.abs())).powi(2);
        prop_assert!(de.abs() <= TOL * scale, "dE/dt = {de}");
        prop_assert!(dh.abs() <= TOL * scale, "dH/dt = {dh}");
        prop_assert!(energy(&a).is_finite() && helicity(&a, &geom).is_finite());
    }
}

/// Max relative mismatch between the triad drift and the brute-force
/// Galerkin sum over `n` random states.
fn oracle_mismatch(geom: &TriadGeometry, n: usize, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let a = random_complex3(&mut rng, 1.0);
        let coeffs = triad_mode_set(&a, geom);
        let drift = deterministic_rhs(&a, geom);
        for (j, k) in geom.wavevectors().into_iter().enumerate() {
            let oracle = galerkin_oracle_rhs(&coeffs, k, geom.parities[j], geom.gamma).unwrap();
            let err = (GALERKIN_TO_TRIAD * oracle - drift[j]).norm() / (1.0 + drift[j].norm());
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn galerkin_oracle_on_reference_triad() {
    let worst = oracle_mismatch(&TriadGeometry::reference(), 100, 11);
    assert!(worst <= TOL, "mismatch {worst:e}");
}

#[test]
fn galerkin_oracle_on_random_triads() {
    let mut rng = seeded(12);
    for i in 0..10 {
        let geom = random_isolated_triad(&mut rng);
        let worst = oracle_mismatch(&geom, 100, 100 + i);
        assert!(worst <= TOL, "triad {:?}: mismatch {worst:e}", geom.wavevectors());
    }
}
