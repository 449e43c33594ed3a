//! Noise-amplitude grid sweep scored by ensemble CRPS and rank histograms.

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::{ModelKind, NoiseAmplitude};
use crate::ensemble::modal_energies;
use crate::error::{Error, Result};
use crate::filter::{run_twin_with, FilterOutcome, TwinSetup};
use crate::output::{num, Csv};
use crate::rng::{self, Purpose};

/// CRPS estimator. `Standard` divides the spread term by `2M²`; `Fair`
/// divides it by `2M(M−1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CrpsEstimator {
    #[default]
    Standard,
    Fair,
}

/// `Σᵢ Σⱼ |xᵢ − xⱼ|`, summed directly so identical members contribute
/// exactly zero.
fn pairwise_abs_sum(members: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (i, x) in members.iter().enumerate() {
        for y in &members[i + 1..] {
            sum += (x - y).abs();
        }
    }
    2.0 * sum
}

fn mean_abs_error(members: &[f64], y: f64) -> f64 {
    members.iter().map(|x| (x - y).abs()).sum::<f64>() / members.len() as f64
}

/// `(1/M) Σ|Xᵢ − y| − (1/(2M²)) ΣᵢΣⱼ|Xᵢ − Xⱼ|`.
pub fn crps_ensemble(members: &[f64], y: f64) -> f64 {
    assert!(!members.is_empty(), "CRPS needs at least one member");
    let m = members.len() as f64;
    mean_abs_error(members, y) - pairwise_abs_sum(members) / (2.0 * m * m)
}

/// Unbiased variant; equals the standard estimator's first term for M = 1.
pub fn crps_fair(members: &[f64], y: f64) -> f64 {
    assert!(!members.is_empty(), "CRPS needs at least one member");
    let m = members.len() as f64;
    if members.len() == 1 {
        return mean_abs_error(members, y);
    }
    mean_abs_error(members, y) - pairwise_abs_sum(members) / (2.0 * m * (m - 1.0))
}

pub fn crps_with(estimator: CrpsEstimator, members: &[f64], y: f64) -> f64 {
    match estimator {
        CrpsEstimator::Standard => crps_ensemble(members, y),
        CrpsEstimator::Fair => crps_fair(members, y),
    }
}

/// Number of members strictly below `y`, plus a uniform draw over the
/// members tied with it.
pub fn rank_of_observation<R: Rng + ?Sized>(members: &[f64], y: f64, rng: &mut R) -> usize {
    assert!(!members.is_empty(), "rank needs at least one member");
    let below = members.iter().filter(|&&x| x < y).count();
    let ties = members.iter().filter(|&&x| x == y).count();
    if ties == 0 {
        below
    } else {
        below + rng.gen_range(0..=ties)
    }
}

/// Per-mode amplitude sets whose Cartesian product is swept.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseGrid {
    pub b_k: Vec<f64>,
    pub b_p: Vec<f64>,
    pub b_q: Vec<f64>,
}

impl NoiseGrid {
    pub fn standard() -> NoiseGrid {
        NoiseGrid {
            b_k: vec![0.05, 0.1, 0.2, 0.5],
            b_p: vec![0.025, 0.05, 0.1, 0.2],
            b_q: vec![0.01, 0.02, 0.04, 0.1],
        }
    }

    /// All combinations, `b_k` slowest and `b_q` fastest.
    pub fn cells(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.b_k.len() * self.b_p.len() * self.b_q.len());
        for &k in &self.b_k {
            for &p in &self.b_p {
                for &q in &self.b_q {
                    out.push([k, p, q]);
                }
            }
        }
        out
    }
}

/// Sweep settings. `base` supplies geometry, horizon, ensemble size and
/// observation setup; its kernel, noise and seeds are overridden per cell.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub base: TwinSetup,
    pub models: Vec<ModelKind>,
    pub estimator: CrpsEstimator,
    pub seed: u64,
}

/// Scores for one `(b, model)` run.
#[derive(Clone, Debug, PartialEq)]
pub struct CellScore {
    pub b: [f64; 3],
    pub model: ModelKind,
    /// Mean CRPS per mode over assimilation times; `inf` for degenerate runs.
    pub crps: [f64; 3],
    pub crps_mean: f64,
    /// Rank-histogram counts per mode, `n_particles + 1` bins each.
    pub ranks: [Vec<u64>; 3],
    pub events: usize,
    /// The ensemble reduced to a single lineage at some point.
    pub collapsed: bool,
    /// Particles that tripped the blow-up threshold over the run.
    pub diverged_particles: usize,
    /// Time of zero total likelihood, if it happened.
    pub degenerate_at: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<CellScore>,
    pub n_bins: usize,
}

impl ScoreTable {
    /// Overall mean CRPS per grid cell (averaged over models), sorted best
    /// first. Ties keep grid order.
    pub fn ranking(&self) -> Vec<([f64; 3], f64)> {
        let mut cells: Vec<([f64; 3], f64, usize)> = Vec::new();
        for row in &self.rows {
            match cells.iter_mut().find(|(b, _, _)| *b == row.b) {
                Some((_, sum, n)) => {
                    *sum += row.crps_mean;
                    *n += 1;
                }
                None => cells.push((row.b, row.crps_mean, 1)),
            }
        }
        let mut out: Vec<([f64; 3], f64)> = cells.into_iter().map(|(b, s, n)| (b, s / n as f64)).collect();
        out.sort_by(|x, y| x.1.total_cmp(&y.1));
        out
    }

    pub fn overall_mean(&self, b: [f64; 3]) -> Option<f64> {
        self.ranking().into_iter().find(|(c, _)| *c == b).map(|(_, s)| s)
    }

    /// Zero-based position of `b` in [`ranking`](Self::ranking).
    pub fn rank_of(&self, b: [f64; 3]) -> Option<usize> {
        self.ranking().iter().position(|(c, _)| *c == b)
    }

    pub fn get(&self, b: [f64; 3], model: ModelKind) -> Option<&CellScore> {
        self.rows.iter().find(|r| r.b == b && r.model == model)
    }

    pub fn scores_csv(&self) -> String {
        let mut csv = Csv::new(
            "triad-da.scores.v1",
            &["b_k", "b_p", "b_q", "model", "crps_k", "crps_p", "crps_q", "crps_mean"],
        );
        for r in &self.rows {
            csv.row([
                num(r.b[0]),
                num(r.b[1]),
                num(r.b[2]),
                r.model.label().to_string(),
                num(r.crps[0]),
                num(r.crps[1]),
                num(r.crps[2]),
                num(r.crps_mean),
            ]);
        }
        csv.into_string()
    }

    pub fn flags_csv(&self) -> String {
        let mut csv = Csv::new(
            "triad-da.score_flags.v1",
            &["b_k", "b_p", "b_q", "model", "events", "collapsed", "diverged_particles", "degenerate_at"],
        );
        for r in &self.rows {
            csv.row([
                num(r.b[0]),
                num(r.b[1]),
                num(r.b[2]),
                r.model.label().to_string(),
                r.events.to_string(),
                r.collapsed.to_string(),
                r.diverged_particles.to_string(),
                r.degenerate_at.map(num).unwrap_or_else(|| "NA".into()),
            ]);
        }
        csv.into_string()
    }

    pub fn rank_histogram_csv(&self) -> String {
        let mut header: Vec<String> = ["b_k", "b_p", "b_q", "model", "mode"].iter().map(|s| s.to_string()).collect();
        header.extend((0..self.n_bins).map(|i| format!("bin_{i}")));
        let mut csv = Csv::new("triad-da.rank_histogram.v1", &header);
        for r in &self.rows {
            for (mode, counts) in ["k", "p", "q"].iter().zip(&r.ranks) {
                let mut fields = vec![num(r.b[0]), num(r.b[1]), num(r.b[2]), r.model.label().to_string(), mode.to_string()];
                fields.extend(counts.iter().map(|c| c.to_string()));
                csv.row(fields);
            }
        }
        csv.into_string()
    }
}

/// Runs one filtering experiment and scores its forecasts.
pub fn score_cell(setup: &TwinSetup, estimator: CrpsEstimator) -> Result<CellScore> {
    let n_bins = setup.n_particles + 1;
    let mut sums = [0.0; 3];
    let mut ranks: [Vec<u64>; 3] = std::array::from_fn(|_| vec![0; n_bins]);
    let mut events = 0usize;
    let mut members: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(setup.n_particles));
    let diag = run_twin_with(setup, |view| {
        for m in members.iter_mut() {
            m.clear();
        }
        for a in &view.ensemble.particles {
            let h = modal_energies(a);
            for j in 0..3 {
                members[j].push(h[j]);
            }
        }
        for j in 0..3 {
            let y = view.observation.z[j];
            sums[j] += crps_with(estimator, &members[j], y);
            let mut tie_rng = rng::stream(setup.ensemble_seed, Purpose::RankTies, view.step as u64, j as u64);
            ranks[j][rank_of_observation(&members[j], y, &mut tie_rng)] += 1;
        }
        events += 1;
    })?;
    let degenerate_at = match diag.outcome {
        FilterOutcome::Degenerate { t } => Some(t),
        FilterOutcome::Completed => None,
    };
    let crps = if degenerate_at.is_some() || events == 0 {
        [f64::INFINITY; 3]
    } else {
        sums.map(|s| s / events as f64)
    };
    Ok(CellScore {
        b: setup.b.real_parts(),
        model: setup.kernel,
        crps,
        crps_mean: crps.iter().sum::<f64>() / 3.0,
        ranks,
        events,
        collapsed: diag.records.iter().any(|r| r.unique_count == 1),
        diverged_particles: diag.records.iter().map(|r| r.diverged).sum(),
        degenerate_at,
    })
}

/// Scores every `(b, model)` pair of the grid. Observations are shared by
/// all cells (keyed by the master seed); each cell gets its own derived
/// seed for the particle noise, used by both models.
pub fn grid_sweep(grid: &NoiseGrid, cfg: &SweepConfig) -> Result<ScoreTable> {
    let cells = grid.cells();
    if cells.is_empty() || cfg.models.is_empty() {
        return Err(Error::InvalidArgument("empty calibration grid".into()));
    }
    let jobs: Vec<(usize, [f64; 3], ModelKind)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, &b)| cfg.models.iter().map(move |&m| (i, b, m)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, b, model)| {
            let setup = TwinSetup {
                kernel: model,
                b: NoiseAmplitude::real(b),
                observation_seed: cfg.seed,
                ensemble_seed: rng::derive_seed(cfg.seed, i as u64),
                track_stride: None,
                ..cfg.base.clone()
            };
            score_cell(&setup, cfg.estimator)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable {
        rows,
        n_bins: cfg.base.n_particles + 1,
    })
}
