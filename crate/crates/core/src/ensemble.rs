//! Particle ensembles: initialisation, parallel propagation, modal energies
//! and pointwise-in-time moment statistics.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::{energy, helicity};
use crate::error::{Error, Result};
use crate::helical::Complex3;
use crate::integrator::{brownian_increments, exact_steps, integrate_stream, StochasticTriad, Trajectory};
use crate::rng::{self, Purpose};

/// Initial perturbation used by every filtering experiment.
pub fn default_spread() -> f64 {
    1.0 / 600f64.sqrt()
}

/// `(|a_k|², |a_p|², |a_q|²)`.
pub fn modal_energies(a: &Complex3) -> [f64; 3] {
    a.0.map(|z| z.norm_sqr())
}

/// Weighted particle cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub particles: Vec<Complex3>,
    pub weights: Vec<f64>,
    /// Root ancestor (index in the initial ensemble) of each particle.
    pub ancestors: Vec<usize>,
    /// Stable identity used to key each particle's noise stream.
    pub ids: Vec<u64>,
    pub diverged: Vec<bool>,
    pub t: f64,
}

impl Ensemble {
    /// Uniformly weighted ensemble with identity lineage.
    pub fn from_particles(particles: Vec<Complex3>, t: f64) -> Result<Ensemble> {
        let n = particles.len();
        if n == 0 {
            return Err(Error::InvalidArgument("ensemble needs at least one particle".into()));
        }
        Ok(Ensemble {
            particles,
            weights: vec![1.0 / n as f64; n],
            ancestors: (0..n).collect(),
            ids: (0..n as u64).collect(),
            diverged: vec![false; n],
            t,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn modal_energies(&self) -> Vec<[f64; 3]> {
        self.particles.iter().map(modal_energies).collect()
    }

    pub fn diverged_count(&self) -> usize {
        self.diverged.iter().filter(|&&d| d).count()
    }

    /// Reorders every per-particle field by `order` (new slot i takes old slot `order[i]`).
    pub fn permuted(&self, order: &[usize]) -> Ensemble {
        Ensemble {
            particles: order.iter().map(|&i| self.particles[i]).collect(),
            weights: order.iter().map(|&i| self.weights[i]).collect(),
            ancestors: order.iter().map(|&i| self.ancestors[i]).collect(),
            ids: order.iter().map(|&i| self.ids[i]).collect(),
            diverged: order.iter().map(|&i| self.diverged[i]).collect(),
            t: self.t,
        }
    }
}

/// `n` particles at `a0` plus independent `N(0, spread²)` perturbations of
/// the real and imaginary part of every amplitude. `a0` itself is not
/// inserted.
pub fn init_ensemble(a0: Complex3, n: usize, spread_std: f64, seed: u64) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(spread_std >= 0.0) {
        return Err(Error::InvalidArgument(format!("spread_std must be >= 0, got {spread_std}")));
    }
    let particles = (0..n)
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::InitialSpread, i as u64, 0);
            let mut draw = || spread_std * rng.sample::<f64, _>(StandardNormal);
            let re = [draw(), draw(), draw()];
            let im = [draw(), draw(), draw()];
            a0 + Complex3::from_parts(re, im)
        })
        .collect();
    Ensemble::from_particles(particles, 0.0)
}

/// Advances every particle by `duration` with its own Brownian stream keyed
/// by `(master_seed, particle id, window)`. Weights and lineage are kept.
/// Particles that blow up keep their last finite state and are flagged.
pub fn propagate_ensemble(
    ensemble: &Ensemble,
    model: &StochasticTriad<'_>,
    dt: f64,
    duration: f64,
    master_seed: u64,
    window: u64,
) -> Result<Ensemble> {
    let n_steps = exact_steps(duration, dt)?;
    let moved: Vec<(Complex3, bool)> = ensemble
        .particles
        .par_iter()
        .zip(ensemble.ids.par_iter())
        .zip(ensemble.diverged.par_iter())
        .map(|((a, &id), &dead)| {
            if dead {
                return (*a, true);
            }
            let rng = rng::stream(master_seed, Purpose::Brownian, id, window);
            model.advance(*a, dt, brownian_increments(rng, dt).take(n_steps))
        })
        .collect();
    let mut out = ensemble.clone();
    for (slot, (a, dead)) in moved.into_iter().enumerate() {
        out.particles[slot] = a;
        out.diverged[slot] = dead;
    }
    out.t = ensemble.t + n_steps as f64 * dt;
    Ok(out)
}

/// Per-component sample moments. Entries are `None` where undefined
/// (too few samples, or zero variance for skew and kurtosis).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Moments {
    pub count: usize,
    pub mean: [f64; 3],
    /// Sample standard deviation (divisor n − 1).
    pub std: [Option<f64>; 3],
    /// `m₃ / m₂^{3/2}` with biased central moments.
    pub skew: [Option<f64>; 3],
    /// Excess kurtosis `m₄ / m₂² − 3`.
    pub kurtosis: [Option<f64>; 3],
}

fn finish_moments(n: usize, mean: [f64; 3], m2: [f64; 3], m3: [f64; 3], m4: [f64; 3]) -> Moments {
    let mut out = Moments {
        count: n,
        mean,
        ..Default::default()
    };
    if n == 0 {
        out.mean = [f64::NAN; 3];
        return out;
    }
    let nf = n as f64;
    for j in 0..3 {
        if n < 2 {
            continue;
        }
        out.std[j] = Some((m2[j] / (nf - 1.0)).max(0.0).sqrt());
        let var = m2[j] / nf;
        // Zero spread relative to the mean's magnitude counts as degenerate.
        let degenerate = var <= (f64::EPSILON * mean[j]).powi(2) || var == 0.0;
        if degenerate {
            continue;
        }
        out.skew[j] = Some((m3[j] / nf) / var.powf(1.5));
        if n >= 4 {
            out.kurtosis[j] = Some((m4[j] / nf) / (var * var) - 3.0);
        }
    }
    out
}

/// Two-pass moment estimator over a batch of samples.
pub fn ensemble_moments(samples: &[[f64; 3]]) -> Moments {
    let n = samples.len();
    let mut mean = [0.0; 3];
    for s in samples {
        for j in 0..3 {
            mean[j] += s[j];
        }
    }
    if n > 0 {
        mean = mean.map(|m| m / n as f64);
    }
    let (mut m2, mut m3, mut m4) = ([0.0; 3], [0.0; 3], [0.0; 3]);
    for s in samples {
        for j in 0..3 {
            let d = s[j] - mean[j];
            let d2 = d * d;
            m2[j] += d2;
            m3[j] += d2 * d;
            m4[j] += d2 * d2;
        }
    }
    finish_moments(n, mean, m2, m3, m4)
}

/// Streaming central-moment accumulator (single-pass updates up to the
/// fourth moment). Fed in a fixed order it is deterministic.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MomentAccumulator {
    n: usize,
    mean: [f64; 3],
    m2: [f64; 3],
    m3: [f64; 3],
    m4: [f64; 3],
}

impl MomentAccumulator {
    pub fn push(&mut self, x: [f64; 3]) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        for j in 0..3 {
            let delta = x[j] - self.mean[j];
            let delta_n = delta / n;
            let delta_n2 = delta_n * delta_n;
            let term1 = delta * delta_n * n1;
            self.mean[j] += delta_n;
            self.m4[j] += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2[j]
                - 4.0 * delta_n * self.m3[j];
            self.m3[j] += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2[j];
            self.m2[j] += term1;
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn moments(&self) -> Moments {
        finish_moments(self.n, self.mean, self.m2, self.m3, self.m4)
    }
}

/// Moments of the modal energies at each recorded time, plus ensemble means
/// of total energy and helicity and the number of realisations that had
/// diverged by then.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub moments: Vec<Moments>,
    pub mean_energy: Vec<f64>,
    pub mean_helicity: Vec<f64>,
    pub diverged: Vec<usize>,
}

impl MomentSeries {
    pub fn mean_series(&self, mode: usize) -> Vec<f64> {
        self.moments.iter().map(|m| m.mean[mode]).collect()
    }
}

/// Result of running many independent realisations from one initial state.
#[derive(Clone, Debug)]
pub struct RealisationSet {
    pub stats: MomentSeries,
    /// The first `keep` trajectories, for plotting.
    pub kept: Vec<Trajectory>,
    pub diverged_total: usize,
}

/// Runs `n` realisations from `a0`, realisation `i` driven by the Brownian
/// stream `(seed, i)`. Statistics are folded in realisation order, so the
/// result does not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn run_realisations(
    a0: Complex3,
    model: &StochasticTriad<'_>,
    dt: f64,
    t_final: f64,
    record_stride: usize,
    n: usize,
    keep: usize,
    seed: u64,
) -> Result<RealisationSet> {
    const CHUNK: usize = 64;
    let n_steps = crate::integrator::steps_for(t_final, dt);
    let n_records = n_steps / record_stride + 1;
    let times: Vec<f64> = (0..n_records).map(|r| (r * record_stride) as f64 * dt).collect();
    let mut acc = vec![MomentAccumulator::default(); n_records];
    let mut energy_sum = vec![0.0; n_records];
    let mut helicity_sum = vec![0.0; n_records];
    let mut diverged = vec![0usize; n_records];
    let mut kept = Vec::new();
    let mut diverged_total = 0;

    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let chunk: Vec<Result<Trajectory>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let rng = rng::stream(seed, Purpose::Brownian, i as u64, 0);
                integrate_stream(a0, model, dt, t_final, brownian_increments(rng, dt), record_stride)
            })
            .collect();
        for (offset, traj) in chunk.into_iter().enumerate() {
            let traj = traj?;
            for (r, a) in traj.states.iter().enumerate() {
                acc[r].push(modal_energies(a));
                energy_sum[r] += energy(a);
                helicity_sum[r] += helicity(a, model.geom);
            }
            if traj.diverged {
                diverged_total += 1;
                for d in diverged.iter_mut().skip(traj.states.len()) {
                    *d += 1;
                }
            }
            if start + offset < keep {
                kept.push(traj);
            }
        }
        start = end;
    }

    let moments: Vec<Moments> = acc.iter().map(|a| a.moments()).collect();
    let mean_energy = acc.iter().zip(&energy_sum).map(|(a, s)| s / a.count() as f64).collect();
    let mean_helicity = acc.iter().zip(&helicity_sum).map(|(a, s)| s / a.count() as f64).collect();
    Ok(RealisationSet {
        stats: MomentSeries {
            times,
            moments,
            mean_energy,
            mean_helicity,
            diverged,
        },
        kept,
        diverged_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ModelKind, NoiseAmplitude};
    use crate::helical::TriadGeometry;
    use num_complex::Complex64;

    fn a0() -> Complex3 {
        Complex3::from_real([1.0 / 3f64.sqrt(); 3])
    }

    #[test]
    fn modal_energy_cases() {
        let e = modal_energies(&a0());
        for x in e {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(modal_energies(&Complex3::ZERO), [0.0; 3]);
        let a = Complex3::new(Complex64::new(0.0, 1.0), Complex64::new(1.0, 1.0), Complex64::default());
        assert_eq!(modal_energies(&a), [1.0, 2.0, 0.0]);
    }

    #[test]
    fn single_unperturbed_particle() {
        let e = init_ensemble(a0(), 1, 0.0, 3).unwrap();
        assert_eq!(e.particles, vec![a0()]);
        assert_eq!(e.weights, vec![1.0]);
    }

    #[test]
    fn init_rejects_bad_arguments() {
        assert!(init_ensemble(a0(), 0, 0.1, 3).is_err());
        assert!(init_ensemble(a0(), 3, -0.1, 3).is_err());
    }

    #[test]
    fn init_spread_statistics() {
        let spread = default_spread();
        let e = init_ensemble(a0(), 25, spread, 11).unwrap();
        assert_eq!(e, init_ensemble(a0(), 25, spread, 11).unwrap());
        assert!(!e.particles.contains(&a0()));
        for j in 0..3 {
            for part in [|z: Complex64| z.re, |z: Complex64| z.im] {
                let xs: Vec<f64> = e.particles.iter().map(|a| part(a[j] - a0()[j])).collect();
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
                assert!((sd / spread - 1.0).abs() <= 0.4, "sd {sd}");
            }
        }
    }

    #[test]
    fn zero_duration_is_identity() {
        let geom = TriadGeometry::reference();
        let model = StochasticTriad::new(&geom, ModelKind::Hst, NoiseAmplitude::real([0.1, 0.05, 0.01]));
        let e = init_ensemble(a0(), 5, 0.05, 1).unwrap();
        let moved = propagate_ensemble(&e, &model, 0.0005, 0.0, 9, 0).unwrap();
        assert_eq!(moved, e);
    }

    #[test]
    fn duration_must_be_a_multiple_of_dt() {
        let geom = TriadGeometry::reference();
        let model = StochasticTriad::deterministic(&geom);
        let e = init_ensemble(a0(), 2, 0.05, 1).unwrap();
        assert!(matches!(
            propagate_ensemble(&e, &model, 0.0005, 0.00075, 9, 0),
            Err(Error::NotMultiple { .. })
        ));
    }

    #[test]
    fn noise_free_models_agree() {
        let geom = TriadGeometry::reference();
        let e = init_ensemble(a0(), 4, 0.05, 1).unwrap();
        let hst = StochasticTriad::new(&geom, ModelKind::Hst, NoiseAmplitude::zero());
        let est = StochasticTriad::new(&geom, ModelKind::Est, NoiseAmplitude::zero());
        let a = propagate_ensemble(&e, &hst, 0.0005, 1.0, 9, 0).unwrap();
        let b = propagate_ensemble(&e, &est, 0.0005, 1.0, 9, 0).unwrap();
        for (x, y) in a.particles.iter().zip(&b.particles) {
            assert!((*x - *y).max_abs() <= 1e-12);
        }
        assert_eq!(a.weights, e.weights);
        assert!((a.t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn propagation_commutes_with_particle_order() {
        let geom = TriadGeometry::reference();
        let model = StochasticTriad::new(&geom, ModelKind::Est, NoiseAmplitude::real([0.1, 0.05, 0.01]));
        let e = init_ensemble(a0(), 6, 0.05, 1).unwrap();
        let order = [4, 2, 0, 5, 1, 3];
        let direct = propagate_ensemble(&e, &model, 0.0005, 0.5, 17, 3).unwrap();
        let shuffled = propagate_ensemble(&e.permuted(&order), &model, 0.0005, 0.5, 17, 3).unwrap();
        for (slot, &orig) in order.iter().enumerate() {
            assert_eq!(shuffled.particles[slot], direct.particles[orig]);
        }
    }

    #[test]
    fn constant_samples_have_undefined_shape() {
        let m = ensemble_moments(&[[2.0, -1.0, 0.5]; 10]);
        assert_eq!(m.mean, [2.0, -1.0, 0.5]);
        assert_eq!(m.std, [Some(0.0); 3]);
        assert_eq!(m.skew, [None; 3]);
        assert_eq!(m.kurtosis, [None; 3]);
    }

    #[test]
    fn two_point_sample() {
        let m = ensemble_moments(&[[0.0; 3], [2.0; 3]]);
        assert_eq!(m.mean, [1.0; 3]);
        for j in 0..3 {
            assert!((m.std[j].unwrap() - 2f64.sqrt()).abs() < 1e-15);
            assert_eq!(m.skew[j], Some(0.0));
            assert_eq!(m.kurtosis[j], None);
        }
    }

    #[test]
    fn accumulator_matches_batch() {
        let samples: Vec<[f64; 3]> = (0..200)
            .map(|i| {
                let x = i as f64;
                [(x * 0.37).sin(), (x * 0.11).cos().powi(3), (x * 0.05).exp() * 1e-3]
            })
            .collect();
        let mut acc = MomentAccumulator::default();
        samples.iter().for_each(|s| acc.push(*s));
        let (a, b) = (acc.moments(), ensemble_moments(&samples));
        for j in 0..3 {
            assert!((a.mean[j] - b.mean[j]).abs() < 1e-12);
            assert!((a.std[j].unwrap() - b.std[j].unwrap()).abs() < 1e-12);
            assert!((a.skew[j].unwrap() - b.skew[j].unwrap()).abs() < 1e-9);
            assert!((a.kurtosis[j].unwrap() - b.kurtosis[j].unwrap()).abs() < 1e-9);
        }
    }
}
