//! Brownian increments and the stochastic SSPRK3 stepper.
//!
//! One scalar Brownian path drives all three modes, and the same increment
//! `ΔW` enters every stage:
//!
//! ```text
//! q1 = a + F(a)Δt + G(a)ΔW
//! q2 = ¾a + ¼(q1 + F(q1)Δt + G(q1)ΔW)
//! a' = ⅓a + ⅔(q2 + F(q2)Δt + G(q2)ΔW)
//! ```
//!
//! No Itô/Stratonovich correction is added; the scheme is the discrete model.
//!
//! The step is evaluated in increment form, `a' = a + (k1 + k2 + 4 k3)/6`
//! with `q1 = a + k1` and `q2 = a + (k1 + k2)/4`, which is algebraically the
//! same. Long runs add the update to the state with Kahan summation: without
//! it the rounding of `a + δ` accumulates to ~1e-10 relative energy drift over
//! 3·10⁵ steps, larger than the scheme's own truncation error at Δt = 0.0005.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{
    energy, helicity, is_diverged, ModelKind, NoiseAmplitude,
};
use crate::error::{Error, Result};
use crate::helical::{Complex3, TriadGeometry};
use crate::rng::{self, Purpose};

pub const DEFAULT_DT: f64 = 0.0005;
pub const DEFAULT_RECORD_STRIDE: usize = 100;

/// Scalar Brownian increments `ΔW ~ N(0, dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    pub seed: u64,
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl NoisePath {
    /// Pairwise sums: the same Brownian path sampled at `2 dt`.
    pub fn coarsened(&self) -> NoisePath {
        NoisePath {
            seed: self.seed,
            dt: 2.0 * self.dt,
            increments: self.increments.chunks_exact(2).map(|c| c[0] + c[1]).collect(),
        }
    }
}

/// Infinite stream of `N(0, dt)` draws from `rng`.
pub fn brownian_increments<R: Rng>(mut rng: R, dt: f64) -> impl Iterator<Item = f64> {
    let scale = dt.sqrt();
    std::iter::repeat_with(move || scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn generate_noise_path(seed: u64, n_steps: usize, dt: f64) -> NoisePath {
    let rng = rng::stream(seed, Purpose::Brownian, 0, 0);
    NoisePath {
        seed,
        dt,
        increments: brownian_increments(rng, dt).take(n_steps).collect(),
    }
}

/// Number of steps of size `dt` needed to reach `duration` (`⌈duration/dt⌉`,
/// with a small allowance for roundoff in the quotient).
pub fn steps_for(duration: f64, dt: f64) -> usize {
    let ratio = duration / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Exact step count for `duration`, failing unless it is a multiple of `dt`.
pub fn exact_steps(duration: f64, dt: f64) -> Result<usize> {
    let ratio = duration / dt;
    let nearest = ratio.round();
    if duration < 0.0 || (ratio - nearest).abs() > 1e-9 * nearest.max(1.0) {
        return Err(Error::NotMultiple { duration, dt });
    }
    Ok(nearest as usize)
}

/// `(re₀, im₀, re₁, im₁, re₂, im₂)`.
type Split = [f64; 6];

#[inline(always)]
fn split(a: &Complex3) -> Split {
    [a[0].re, a[0].im, a[1].re, a[1].im, a[2].re, a[2].im]
}

/// A model instance: geometry, kind and noise amplitude.
#[derive(Clone, Copy, Debug)]
pub struct StochasticTriad<'a> {
    pub geom: &'a TriadGeometry,
    pub kind: ModelKind,
    pub b: NoiseAmplitude,
}

impl<'a> StochasticTriad<'a> {
    pub fn new(geom: &'a TriadGeometry, kind: ModelKind, b: NoiseAmplitude) -> Self {
        StochasticTriad { geom, kind, b }
    }

    pub fn deterministic(geom: &'a TriadGeometry) -> Self {
        StochasticTriad::new(geom, ModelKind::Deterministic, NoiseAmplitude::zero())
    }

    /// `drift·dt + diffusion·dW` in split real form, folded into one cross
    /// product `g (v × w)` since dt and dW are real:
    ///
    /// ```text
    /// det: v = a*,              w = D a* dt
    /// HST: v = (a dt + b dW)*,  w = D a*
    /// EST: v = a*,              w = D (a dt + b dW)*
    /// ```
    ///
    /// Written on plain `f64`s because this is the innermost loop of every
    /// experiment; the `Complex3` version compiles to noticeably slower code.
    #[inline(always)]
    fn increment(&self, a: &Split, dt: f64, dw: f64) -> Split {
        let d = &self.geom.d_diag;
        let b = &self.b.0 .0;
        // Conjugate of a.
        let (ar, ai) = ([a[0], a[2], a[4]], [-a[1], -a[3], -a[5]]);
        let (vr, vi, wr, wi);
        match self.kind {
            ModelKind::Deterministic => {
                (vr, vi) = (ar, ai);
                wr = [d[0] * ar[0] * dt, d[1] * ar[1] * dt, d[2] * ar[2] * dt];
                wi = [d[0] * ai[0] * dt, d[1] * ai[1] * dt, d[2] * ai[2] * dt];
            }
            ModelKind::Hst => {
                vr = std::array::from_fn(|j| ar[j] * dt + b[j].re * dw);
                vi = std::array::from_fn(|j| ai[j] * dt - b[j].im * dw);
                wr = [d[0] * ar[0], d[1] * ar[1], d[2] * ar[2]];
                wi = [d[0] * ai[0], d[1] * ai[1], d[2] * ai[2]];
            }
            ModelKind::Est => {
                (vr, vi) = (ar, ai);
                wr = std::array::from_fn(|j| d[j] * (ar[j] * dt + b[j].re * dw));
                wi = std::array::from_fn(|j| d[j] * (ai[j] * dt - b[j].im * dw));
            }
        }
        let (gr, gi) = (self.geom.g.re, self.geom.g.im);
        let mut out = [0.0; 6];
        for (n, (i, j)) in [(1, 2), (2, 0), (0, 1)].into_iter().enumerate() {
            let cr = vr[i] * wr[j] - vi[i] * wi[j] - (vr[j] * wr[i] - vi[j] * wi[i]);
            let ci = vr[i] * wi[j] + vi[i] * wr[j] - (vr[j] * wi[i] + vi[j] * wr[i]);
            out[2 * n] = cr * gr - ci * gi;
            out[2 * n + 1] = cr * gi + ci * gr;
        }
        out
    }

    /// `a' − a` for one SSPRK3 step.
    #[inline(always)]
    fn delta(&self, a: &Split, dt: f64, dw: f64) -> Split {
        let k1 = self.increment(a, dt, dw);
        let q1: Split = std::array::from_fn(|i| a[i] + k1[i]);
        let k2 = self.increment(&q1, dt, dw);
        let q2: Split = std::array::from_fn(|i| a[i] + 0.25 * (k1[i] + k2[i]));
        let k3 = self.increment(&q2, dt, dw);
        std::array::from_fn(|i| (k1[i] + k2[i] + 4.0 * k3[i]) * (1.0 / 6.0))
    }

    #[inline]
    pub fn step(&self, a: &Complex3, dt: f64, dw: f64) -> Complex3 {
        let a0 = split(a);
        let d = self.delta(&a0, dt, dw);
        unsplit(&std::array::from_fn(|i| a0[i] + d[i]))
    }

    /// One step with compensated summation. On blow-up `state` is left at
    /// its last finite value and `false` is returned.
    #[inline]
    pub fn step_compensated(&self, state: &mut Compensated, dt: f64, dw: f64) -> bool {
        let d = self.delta(&state.a, dt, dw);
        let mut next = *state;
        for i in 0..6 {
            let y = d[i] - next.carry[i];
            let t = next.a[i] + y;
            next.carry[i] = (t - next.a[i]) - y;
            next.a[i] = t;
        }
        if is_diverged(&next.state()) {
            return false;
        }
        *state = next;
        true
    }

    /// Advances `a` through `increments`, stopping early on blow-up.
    /// Returns the final state (last finite one on divergence) and whether
    /// the run diverged.
    pub fn advance<I>(&self, a: Complex3, dt: f64, increments: I) -> (Complex3, bool)
    where
        I: IntoIterator<Item = f64>,
    {
        let mut state = Compensated::new(&a);
        for dw in increments {
            if !self.step_compensated(&mut state, dt, dw) {
                return (state.state(), true);
            }
        }
        (state.state(), false)
    }
}

#[inline(always)]
fn unsplit(s: &Split) -> Complex3 {
    Complex3::from_parts([s[0], s[2], s[4]], [s[1], s[3], s[5]])
}

/// A state together with the low-order bits lost so far when adding the
/// per-step updates to it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Compensated {
    a: Split,
    carry: Split,
}

impl Compensated {
    pub fn new(a: &Complex3) -> Self {
        Compensated {
            a: split(a),
            carry: [0.0; 6],
        }
    }

    pub fn state(&self) -> Complex3 {
        unsplit(&self.a)
    }
}

/// One SSPRK3 step of the chosen model.
pub fn ssprk3_step(
    a: &Complex3,
    geom: &TriadGeometry,
    model: ModelKind,
    b: &NoiseAmplitude,
    dt: f64,
    dw: f64,
) -> Complex3 {
    StochasticTriad::new(geom, model, *b).step(a, dt, dw)
}

/// Recorded path of one realisation.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Complex3>,
    pub energy: Vec<f64>,
    pub helicity: Vec<f64>,
    /// Last state reached (the last finite one if the run diverged).
    pub final_state: Complex3,
    pub final_time: f64,
    pub diverged: bool,
}

impl Trajectory {
    fn start(a0: Complex3, geom: &TriadGeometry) -> Self {
        Trajectory {
            times: vec![0.0],
            states: vec![a0],
            energy: vec![energy(&a0)],
            helicity: vec![helicity(&a0, geom)],
            final_state: a0,
            final_time: 0.0,
            diverged: false,
        }
    }

    fn push(&mut self, t: f64, a: Complex3, geom: &TriadGeometry) {
        self.times.push(t);
        self.states.push(a);
        self.energy.push(energy(&a));
        self.helicity.push(helicity(&a, geom));
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Integrates from `t = 0` to `t_final` recording every `record_stride`-th
/// state. Consumes `⌈t_final/dt⌉` increments from `increments`.
pub fn integrate_stream<I>(
    a0: Complex3,
    model: &StochasticTriad<'_>,
    dt: f64,
    t_final: f64,
    increments: I,
    record_stride: usize,
) -> Result<Trajectory>
where
    I: IntoIterator<Item = f64>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if record_stride == 0 {
        return Err(Error::InvalidArgument("record_stride must be at least 1".into()));
    }
    let n_steps = steps_for(t_final, dt);
    let mut traj = Trajectory::start(a0, model.geom);
    let mut state = Compensated::new(&a0);
    let mut taken = 0usize;
    for dw in increments.into_iter().take(n_steps) {
        if !model.step_compensated(&mut state, dt, dw) {
            traj.diverged = true;
            break;
        }
        taken += 1;
        if taken.is_multiple_of(record_stride) {
            traj.push(taken as f64 * dt, state.state(), model.geom);
        }
    }
    let a = state.state();
    if !traj.diverged && taken < n_steps {
        return Err(Error::InsufficientNoise {
            have: taken,
            need: n_steps,
        });
    }
    traj.final_state = a;
    traj.final_time = taken as f64 * dt;
    Ok(traj)
}

/// Integrates one realisation driven by a stored noise path.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    a0: Complex3,
    geom: &TriadGeometry,
    model: ModelKind,
    b: &NoiseAmplitude,
    dt: f64,
    t_final: f64,
    noise: &NoisePath,
    record_stride: usize,
) -> Result<Trajectory> {
    let need = steps_for(t_final, dt);
    if noise.increments.len() < need {
        return Err(Error::InsufficientNoise {
            have: noise.increments.len(),
            need,
        });
    }
    let triad = StochasticTriad::new(geom, model, *b);
    integrate_stream(a0, &triad, dt, t_final, noise.increments.iter().copied(), record_stride)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{deterministic_rhs, diffusion};

    fn a0() -> Complex3 {
        Complex3::from_real([1.0 / 3f64.sqrt(); 3])
    }

    #[test]
    fn empty_noise_path() {
        assert!(generate_noise_path(7, 0, 0.0005).increments.is_empty());
    }

    #[test]
    fn noise_path_is_deterministic_and_has_the_right_moments() {
        let n = 100_000;
        let dt = 0.0005;
        let path = generate_noise_path(7, n, dt);
        assert_eq!(path, generate_noise_path(7, n, dt));
        let mean = path.increments.iter().sum::<f64>() / n as f64;
        let var = path.increments.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 4.0 * (dt / n as f64).sqrt(), "mean {mean}");
        assert!((var / dt - 1.0).abs() <= 0.05, "var {var}");
    }

    #[test]
    fn zero_noise_step_equals_deterministic_step() {
        let geom = crate::helical::TriadGeometry::reference();
        let det = ssprk3_step(&a0(), &geom, ModelKind::Deterministic, &NoiseAmplitude::zero(), 0.01, 0.0);
        for model in [ModelKind::Hst, ModelKind::Est] {
            let got = ssprk3_step(&a0(), &geom, model, &NoiseAmplitude::zero(), 0.01, 0.37);
            assert!((got - det).max_abs() < 1e-16);
        }
    }

    #[test]
    fn step_matches_hand_rolled_stages() {
        let geom = crate::helical::TriadGeometry::reference();
        let b = NoiseAmplitude::real([0.1, 0.05, 0.01]);
        let (dt, dw) = (0.0005, 0.013);
        for model in [ModelKind::Hst, ModelKind::Est] {
            let f = |x: &Complex3| deterministic_rhs(x, &geom) * dt + diffusion(model, x, &b, &geom) * dw;
            let a = a0();
            let q1 = a + f(&a);
            let q2 = a * 0.75 + (q1 + f(&q1)) * 0.25;
            let want = a * (1.0 / 3.0) + (q2 + f(&q2)) * (2.0 / 3.0);
            let got = ssprk3_step(&a, &geom, model, &b, dt, dw);
            assert!((got - want).max_abs() < 1e-15, "{model}");
        }
    }

    #[test]
    fn zero_horizon_records_only_the_start() {
        let geom = crate::helical::TriadGeometry::reference();
        let noise = generate_noise_path(1, 0, 0.0005);
        let traj = integrate(a0(), &geom, ModelKind::Hst, &NoiseAmplitude::zero(), 0.0005, 0.0, &noise, 10).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.states[0], a0());
        assert_eq!(traj.final_state, a0());
    }

    #[test]
    fn short_noise_path_is_an_error() {
        let geom = crate::helical::TriadGeometry::reference();
        let noise = generate_noise_path(1, 10, 0.0005);
        let err = integrate(a0(), &geom, ModelKind::Hst, &NoiseAmplitude::zero(), 0.0005, 1.0, &noise, 10);
        assert!(matches!(err, Err(Error::InsufficientNoise { have: 10, need: 2000 })));
    }

    #[test]
    fn recording_is_uniform() {
        let geom = crate::helical::TriadGeometry::reference();
        let noise = generate_noise_path(1, 2000, 0.0005);
        let traj = integrate(a0(), &geom, ModelKind::Est, &NoiseAmplitude::real([0.1, 0.05, 0.01]), 0.0005, 1.0, &noise, 100).unwrap();
        assert_eq!(traj.len(), 21);
        assert_eq!(traj.energy.len(), traj.len());
        assert_eq!(traj.helicity.len(), traj.len());
        for w in traj.times.windows(2) {
            assert!((w[1] - w[0] - 0.05).abs() < 1e-12);
        }
        assert!((traj.final_time - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_steps_rejects_fractions() {
        assert_eq!(exact_steps(10.0, 0.0005).unwrap(), 20_000);
        assert!(exact_steps(10.0003, 0.0005).is_err());
        assert_eq!(steps_for(150.0, 0.0005), 300_000);
    }
}
