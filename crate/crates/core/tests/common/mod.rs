#![allow(dead_code)]

pub mod cli;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triad_core::helical::DEFAULT_GAMMA;
use triad_core::{build_triad, Complex3, Parity, TriadGeometry, WaveVector};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex3<R: Rng>(rng: &mut R, scale: f64) -> Complex3 {
    Complex3(std::array::from_fn(|_| {
        Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
    }))
}

pub fn random_real3<R: Rng>(rng: &mut R, scale: f64) -> [f64; 3] {
    std::array::from_fn(|_| rng.gen_range(-scale..scale))
}

fn random_wavevector<R: Rng>(rng: &mut R) -> WaveVector {
    WaveVector(std::array::from_fn(|_| rng.gen_range(-3..=3)))
}

fn random_parity<R: Rng>(rng: &mut R) -> Parity {
    if rng.gen_bool(0.5) {
        Parity::Plus
    } else {
        Parity::Minus
    }
}

/// True when the only closing pairs for each member of `{±k, ±p, ±q}`
/// are the triad's own, so the six-mode Galerkin sum has no extra terms.
pub fn is_isolated(geom: &TriadGeometry) -> bool {
    let base = geom.wavevectors();
    let set: Vec<WaveVector> = base.iter().flat_map(|&v| [v, -v]).collect();
    for (i, a) in set.iter().enumerate() {
        if set[i + 1..].contains(a) {
            return false;
        }
    }
    for target in &set {
        let pairs = set
            .iter()
            .flat_map(|p| set.iter().map(move |q| (*p, *q)))
            .filter(|(p, q)| (*p + *q + *target).is_zero())
            .count();
        if pairs != 2 {
            return false;
        }
    }
    true
}

/// A random valid triad with small integer wavevectors and default Γ.
pub fn random_triad<R: Rng>(rng: &mut R) -> TriadGeometry {
    loop {
        let k = random_wavevector(rng);
        let p = random_wavevector(rng);
        let q = -(k + p);
        let parities = [random_parity(rng), random_parity(rng), random_parity(rng)];
        if let Ok(geom) = build_triad(k, p, q, parities, DEFAULT_GAMMA) {
            return geom;
        }
    }
}

pub fn random_isolated_triad<R: Rng>(rng: &mut R) -> TriadGeometry {
    loop {
        let geom = random_triad(rng);
        if is_isolated(&geom) {
            return geom;
        }
    }
}

pub fn a0() -> Complex3 {
    Complex3::from_real([1.0 / 3f64.sqrt(); 3])
}

pub fn full_noise() -> [f64; 3] {
    [0.1, 0.05, 0.01]
}

/// Least-squares slope of `log2(err)` against `log2(dt)`.
pub fn observed_order(dts: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.log2()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
