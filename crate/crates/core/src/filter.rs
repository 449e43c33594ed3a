//! Sequential importance resampling (SIR) particle filter for twin
//! experiments on the triad: the truth is the deterministic model, the
//! observations are noisy modal energies, and the particles move under a
//! deterministic, HST or EST transition kernel.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::{is_diverged, ModelKind, NoiseAmplitude};
use crate::ensemble::{init_ensemble, modal_energies, Ensemble};
use crate::error::{Error, Result};
use crate::helical::{Complex3, TriadGeometry};
use crate::integrator::{brownian_increments, exact_steps, Compensated, StochasticTriad};
use crate::rng::{self, Purpose};

/// Observation error variances `(0.005², 0.05², 0.05²)`.
pub const DEFAULT_OBS_COV: [f64; 3] = [0.005 * 0.005, 0.05 * 0.05, 0.05 * 0.05];

/// Noisy modal-energy measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub z: [f64; 3],
    pub t: f64,
    pub cov_diag: [f64; 3],
}

/// `z = modal_energies(truth) + η`, `η ~ N(0, diag(cov_diag))`.
pub fn observe<R: Rng + ?Sized>(truth: &Complex3, cov_diag: [f64; 3], t: f64, rng: &mut R) -> Observation {
    let h = modal_energies(truth);
    let mut z = [0.0; 3];
    for j in 0..3 {
        let eta: f64 = rng.sample(StandardNormal);
        z[j] = h[j] + cov_diag[j].sqrt() * eta;
    }
    Observation { z, t, cov_diag }
}

/// Gaussian log-likelihood of a particle up to an additive constant.
pub fn log_likelihood(a: &Complex3, obs: &Observation) -> f64 {
    let h = modal_energies(a);
    -0.5 * (0..3)
        .map(|j| (h[j] - obs.z[j]).powi(2) / obs.cov_diag[j])
        .sum::<f64>()
}

/// Posterior weights: prior weights times the Gaussian likelihood of each
/// particle's modal energies, normalised to one. Accumulated in log space
/// with the maximum subtracted. Diverged particles get weight zero.
pub fn likelihood_weights(ensemble: &Ensemble, obs: &Observation) -> Result<Vec<f64>> {
    let logs: Vec<f64> = ensemble
        .particles
        .iter()
        .zip(&ensemble.weights)
        .zip(&ensemble.diverged)
        .map(|((a, &w), &dead)| {
            if dead || w <= 0.0 || is_diverged(a) {
                f64::NEG_INFINITY
            } else {
                w.ln() + log_likelihood(a, obs)
            }
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degeneracy { t: obs.t });
    }
    let unnorm: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Degeneracy { t: obs.t });
    }
    Ok(unnorm.into_iter().map(|w| w / total).collect())
}

/// Effective sample size `1 / Σ w²` of normalised weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Draws `n` particles with replacement, probability proportional to
/// weight. The result is uniformly weighted; lineage follows the sources
/// and every slot gets a fresh noise identity.
pub fn multinomial_resample<R: Rng + ?Sized>(ensemble: &Ensemble, rng: &mut R) -> Result<Ensemble> {
    let n = ensemble.len();
    let picker = WeightedIndex::new(&ensemble.weights)
        .map_err(|e| Error::InvalidArgument(format!("cannot resample: {e}")))?;
    let sources: Vec<usize> = (0..n).map(|_| picker.sample(rng)).collect();
    Ok(Ensemble {
        particles: sources.iter().map(|&s| ensemble.particles[s]).collect(),
        weights: vec![1.0 / n as f64; n],
        ancestors: sources.iter().map(|&s| ensemble.ancestors[s]).collect(),
        ids: (0..n as u64).collect(),
        diverged: sources.iter().map(|&s| ensemble.diverged[s]).collect(),
        t: ensemble.t,
    })
}

/// Number of distinct root ancestors still present.
pub fn unique_count(ensemble: &Ensemble) -> usize {
    let mut roots = ensemble.ancestors.clone();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

/// Per-mode `(bias, rmse)` of the equally weighted ensemble modal energies
/// against the target vector.
pub fn bias_and_rmse_against(ensemble: &Ensemble, target: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let n = ensemble.len() as f64;
    let mut bias = [0.0; 3];
    let mut sq = [0.0; 3];
    for a in &ensemble.particles {
        let h = modal_energies(a);
        for j in 0..3 {
            let d = h[j] - target[j];
            bias[j] += d;
            sq[j] += d * d;
        }
    }
    (bias.map(|b| b / n), sq.map(|s| (s / n).sqrt()))
}

pub fn bias_and_rmse(ensemble: &Ensemble, obs: &Observation) -> ([f64; 3], [f64; 3]) {
    bias_and_rmse_against(ensemble, &obs.z)
}

/// Everything needed to run one twin experiment.
#[derive(Clone, Debug)]
pub struct TwinSetup {
    pub geom: TriadGeometry,
    pub kernel: ModelKind,
    pub b: NoiseAmplitude,
    pub a0: Complex3,
    pub dt: f64,
    pub t_final: f64,
    pub da_interval: f64,
    pub n_particles: usize,
    pub spread_std: f64,
    pub obs_cov: [f64; 3],
    /// Keys the observation noise.
    pub observation_seed: u64,
    /// Keys the initial spread, the particle noise and the resampling draws.
    pub ensemble_seed: u64,
    /// Record the ensemble envelope every this many steps (None: only at
    /// assimilation times).
    pub track_stride: Option<usize>,
}

/// One assimilation time, measured on the forecast ensemble before
/// weighting (ESS before resampling, unique count after).
#[derive(Clone, Debug, PartialEq)]
pub struct AssimilationRecord {
    pub step: usize,
    pub t: f64,
    pub z: [f64; 3],
    pub truth: [f64; 3],
    pub bias: [f64; 3],
    pub rmse: [f64; 3],
    pub bias_truth: [f64; 3],
    pub rmse_truth: [f64; 3],
    pub ess: f64,
    pub unique_count: usize,
    pub ensemble_mean: [f64; 3],
    pub envelope_min: [f64; 3],
    pub envelope_max: [f64; 3],
    pub diverged: usize,
}

/// Ensemble envelope of the modal energies between assimilation times.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeSample {
    pub t: f64,
    pub truth: [f64; 3],
    pub mean: [f64; 3],
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub enum FilterOutcome {
    Completed,
    /// Zero total likelihood at `t`; diagnostics stop there.
    Degenerate { t: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterDiagnostics {
    pub records: Vec<AssimilationRecord>,
    pub track: Vec<EnvelopeSample>,
    pub outcome: FilterOutcome,
}

impl FilterDiagnostics {
    pub fn is_degenerate(&self) -> bool {
        matches!(self.outcome, FilterOutcome::Degenerate { .. })
    }
}

/// Forecast ensemble and observation at one assimilation time, handed to
/// observers before the weighting step.
pub struct ForecastView<'a> {
    pub step: usize,
    pub ensemble: &'a Ensemble,
    pub observation: &'a Observation,
}

fn envelope(samples: impl Iterator<Item = [f64; 3]>) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for h in samples {
        n += 1;
        for j in 0..3 {
            min[j] = min[j].min(h[j]);
            max[j] = max[j].max(h[j]);
            sum[j] += h[j];
        }
    }
    (sum.map(|s| s / n as f64), min, max)
}

/// Propagates the ensemble over one window, optionally returning each
/// particle's modal energies every `stride` steps.
fn propagate_window(
    ensemble: &Ensemble,
    model: &StochasticTriad<'_>,
    dt: f64,
    n_steps: usize,
    seed: u64,
    window: u64,
    stride: Option<usize>,
) -> (Ensemble, Vec<Vec<[f64; 3]>>) {
    let moved: Vec<(Complex3, bool, Vec<[f64; 3]>)> = ensemble
        .particles
        .par_iter()
        .zip(ensemble.ids.par_iter())
        .zip(ensemble.diverged.par_iter())
        .map(|((a0, &id), &dead)| {
            let mut state = Compensated::new(a0);
            let mut samples = Vec::new();
            let mut dead = dead;
            let rng = rng::stream(seed, Purpose::Brownian, id, window);
            for (i, dw) in brownian_increments(rng, dt).take(n_steps).enumerate() {
                if !dead && !model.step_compensated(&mut state, dt, dw) {
                    dead = true;
                }
                if let Some(s) = stride {
                    if (i + 1) % s == 0 {
                        samples.push(modal_energies(&state.state()));
                    }
                }
                if dead && stride.is_none() {
                    break;
                }
            }
            (state.state(), dead, samples)
        })
        .collect();
    let mut out = ensemble.clone();
    let mut tracks = Vec::with_capacity(moved.len());
    for (slot, (a, dead, samples)) in moved.into_iter().enumerate() {
        out.particles[slot] = a;
        out.diverged[slot] = dead;
        tracks.push(samples);
    }
    out.t = ensemble.t + n_steps as f64 * dt;
    (out, tracks)
}

/// Runs the twin experiment, calling `observer` with the forecast ensemble
/// at each assimilation time.
pub fn run_twin_with<F>(setup: &TwinSetup, mut observer: F) -> Result<FilterDiagnostics>
where
    F: FnMut(&ForecastView<'_>),
{
    let window_steps = exact_steps(setup.da_interval, setup.dt)?;
    if window_steps == 0 {
        return Err(Error::InvalidArgument("DA interval must be positive".into()));
    }
    if setup.obs_cov.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::InvalidArgument("observation variances must be positive".into()));
    }
    let n_windows = (setup.t_final / setup.da_interval + 1e-9).floor() as usize;
    let model = StochasticTriad::new(&setup.geom, setup.kernel, setup.b);
    let truth_model = StochasticTriad::deterministic(&setup.geom);

    let mut ensemble = init_ensemble(setup.a0, setup.n_particles, setup.spread_std, setup.ensemble_seed)?;
    let mut truth_state = Compensated::new(&setup.a0);
    let mut records = Vec::with_capacity(n_windows);
    let mut track = Vec::new();

    if let Some(stride) = setup.track_stride {
        let (mean, min, max) = envelope(ensemble.particles.iter().map(modal_energies));
        track.push(EnvelopeSample { t: 0.0, truth: modal_energies(&setup.a0), mean, min, max });
        if stride == 0 {
            return Err(Error::InvalidArgument("track stride must be at least 1".into()));
        }
    }

    for window in 0..n_windows {
        let step = window + 1;
        let t0 = ensemble.t;
        let (forecast, tracks) = propagate_window(
            &ensemble,
            &model,
            setup.dt,
            window_steps,
            setup.ensemble_seed,
            window as u64,
            setup.track_stride,
        );
        let advance_truth = |state: &mut Compensated, n: usize| {
            for _ in 0..n {
                truth_model.step_compensated(state, setup.dt, 0.0);
            }
        };
        let mut done = 0;
        if let Some(stride) = setup.track_stride {
            for sub in 0..tracks[0].len() {
                advance_truth(&mut truth_state, stride);
                done += stride;
                let (mean, min, max) = envelope(tracks.iter().map(|p| p[sub]));
                track.push(EnvelopeSample {
                    t: t0 + done as f64 * setup.dt,
                    truth: modal_energies(&truth_state.state()),
                    mean,
                    min,
                    max,
                });
            }
        }
        advance_truth(&mut truth_state, window_steps - done);
        let truth = truth_state.state();
        let t = forecast.t;
        let mut obs_rng = rng::stream(setup.observation_seed, Purpose::Observation, step as u64, 0);
        let obs = observe(&truth, setup.obs_cov, t, &mut obs_rng);
        observer(&ForecastView {
            step,
            ensemble: &forecast,
            observation: &obs,
        });

        let truth_h = modal_energies(&truth);
        let (bias, rmse) = bias_and_rmse(&forecast, &obs);
        let (bias_truth, rmse_truth) = bias_and_rmse_against(&forecast, &truth_h);
        let (ensemble_mean, envelope_min, envelope_max) =
            envelope(forecast.particles.iter().map(modal_energies));
        let diverged = forecast.diverged_count();

        let weights = match likelihood_weights(&forecast, &obs) {
            Ok(w) => w,
            Err(Error::Degeneracy { t }) => {
                return Ok(FilterDiagnostics {
                    records,
                    track,
                    outcome: FilterOutcome::Degenerate { t },
                })
            }
            Err(e) => return Err(e),
        };
        let weighted = Ensemble { weights, ..forecast };
        let ess_value = ess(&weighted.weights);
        let mut resample_rng = rng::stream(setup.ensemble_seed, Purpose::Resample, step as u64, 0);
        ensemble = multinomial_resample(&weighted, &mut resample_rng)?;

        records.push(AssimilationRecord {
            step,
            t,
            z: obs.z,
            truth: truth_h,
            bias,
            rmse,
            bias_truth,
            rmse_truth,
            ess: ess_value,
            unique_count: unique_count(&ensemble),
            ensemble_mean,
            envelope_min,
            envelope_max,
            diverged,
        });
    }

    Ok(FilterDiagnostics {
        records,
        track,
        outcome: FilterOutcome::Completed,
    })
}

pub fn run_twin_experiment(setup: &TwinSetup) -> Result<FilterDiagnostics> {
    run_twin_with(setup, |_| {})
}
