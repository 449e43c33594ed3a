//! The five experiment commands. Each writes its CSV and SVG artifacts plus
//! a `MANIFEST.json` into the output directory; outputs are a pure function
//! of the configuration (worker count included, which changes nothing).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::calibration::grid_sweep;
use crate::config::ExperimentConfig;
use crate::dynamics::{energy, helicity};
use crate::ensemble::{modal_energies, run_realisations, MomentSeries};
use crate::error::{Error, Result};
use crate::filter::{run_twin_experiment, AssimilationRecord, FilterDiagnostics, FilterOutcome};
use crate::integrator::{brownian_increments, integrate_stream, StochasticTriad};
use crate::output::{num, opt, Csv};
use crate::rng::{self, Purpose};
use crate::svg::{Chart, Series, PALETTE};

const MODES: [&str; 3] = ["k", "p", "q"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Ensemble,
    Filter,
    Calibrate,
    Repeat,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ensemble => "ensemble",
            Command::Filter => "filter",
            Command::Calibrate => "calibrate",
            Command::Repeat => "repeat",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Command> {
        [Command::Simulate, Command::Ensemble, Command::Filter, Command::Calibrate, Command::Repeat]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown command `{s}`")))
    }
}

/// How a command finished. Numerical failures still leave their outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Status {
    Success,
    /// A single trajectory crossed the blow-up threshold at `t`.
    Diverged { t: f64 },
    /// The filter lost all likelihood mass at `t`.
    Degenerate { t: f64 },
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Diverged { .. } => 3,
            Status::Degenerate { .. } => 4,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Status::Success => "ok",
            Status::Diverged { .. } => "diverged",
            Status::Degenerate { .. } => "degenerate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub status: Status,
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
}

/// Output directory plus the artifacts written so far.
struct Sink {
    dir: PathBuf,
    artifacts: Vec<(String, String)>,
}

impl Sink {
    fn new(dir: &Path) -> Result<Sink> {
        fs::create_dir_all(dir)?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.artifacts.push((name.to_string(), hex_sha256(contents.as_bytes())));
        Ok(())
    }

    fn manifest(&self, cmd: Command, cfg: &ExperimentConfig, status: &str) -> Result<()> {
        let artifacts: Vec<serde_json::Value> = self
            .artifacts
            .iter()
            .map(|(f, h)| json!({ "file": f, "sha256": h }))
            .collect();
        let doc = json!({
            "command": cmd.name(),
            "status": status,
            "seed": cfg.seed,
            "model": cfg.model.label(),
            "config_sha256": hex_sha256(cfg.canonical().as_bytes()),
            "version": env!("CARGO_PKG_VERSION"),
            "artifacts": artifacts,
        });
        let text = serde_json::to_string_pretty(&doc).expect("manifest serialises") + "\n";
        fs::write(self.dir.join("MANIFEST.json"), text)?;
        Ok(())
    }
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `cmd` inside a pool of `cfg.workers` threads (or rayon's default),
/// writing into `cfg.resolved_out_dir()`. The manifest is written even when
/// the command fails part way.
pub fn run_command(cmd: Command, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let dir = cfg.resolved_out_dir();
    let mut sink = Sink::new(&dir)?;
    let work = |sink: &mut Sink| -> Result<Status> {
        sink.write("config.resolved.toml", &cfg.canonical())?;
        match cmd {
            Command::Simulate => cmd_simulate(cfg, sink),
            Command::Ensemble => cmd_ensemble(cfg, sink),
            Command::Filter => cmd_filter(cfg, sink),
            Command::Calibrate => cmd_calibrate(cfg, sink),
            Command::Repeat => repeat_runs(cfg, sink),
        }
    };
    let result = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {n} workers: {e}")))?
            .install(|| work(&mut sink)),
        None => work(&mut sink),
    };
    match result {
        Ok(status) => {
            sink.manifest(cmd, cfg, status.label())?;
            Ok(Report {
                status,
                out_dir: dir,
                artifacts: sink.artifacts.into_iter().map(|(f, _)| f).collect(),
            })
        }
        Err(e) => {
            sink.manifest(cmd, cfg, "error")?;
            Err(e)
        }
    }
}

fn mode_columns(prefix: &str) -> Vec<String> {
    MODES.iter().map(|m| format!("{prefix}_{m}")).collect()
}

fn nums(xs: &[f64]) -> impl Iterator<Item = String> + '_ {
    xs.iter().map(|x| num(*x))
}

fn cmd_simulate(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Status> {
    let geom = cfg.geometry()?;
    let model = StochasticTriad::new(&geom, cfg.model, cfg.noise());
    let rng = rng::stream(cfg.seed, Purpose::Brownian, 0, 0);
    let traj = integrate_stream(
        cfg.initial_state(),
        &model,
        cfg.dt,
        cfg.t_final,
        brownian_increments(rng, cfg.dt),
        cfg.record_stride,
    )?;

    let mut header = vec!["t".to_string()];
    for m in MODES {
        header.push(format!("re_{m}"));
        header.push(format!("im_{m}"));
    }
    header.extend(mode_columns("energy"));
    header.extend(["E".to_string(), "H".to_string()]);
    let mut csv = Csv::new("triad-da.trajectory.v1", &header);
    let mut modal: [Vec<f64>; 3] = Default::default();
    for (i, a) in traj.states.iter().enumerate() {
        let h = modal_energies(a);
        let mut row = vec![num(traj.times[i])];
        for j in 0..3 {
            row.push(num(a[j].re));
            row.push(num(a[j].im));
            modal[j].push(h[j]);
        }
        row.extend(nums(&h));
        row.push(num(traj.energy[i]));
        row.push(num(traj.helicity[i]));
        csv.row(row);
    }
    sink.write("trajectory.csv", csv.as_str())?;

    let mut chart = Chart::new(format!("{} triad", cfg.model.label()), "t", "energy / helicity");
    for j in 0..3 {
        chart.push(Series::new(format!("|a_{}|²", MODES[j]), traj.times.clone(), modal[j].clone(), PALETTE[j]));
    }
    chart.push(Series::new("E", traj.times.clone(), traj.energy.clone(), PALETTE[3]));
    chart.push(Series::new("H", traj.times.clone(), traj.helicity.clone(), PALETTE[4]).dashed());
    sink.write("trajectory.svg", &chart.render())?;

    Ok(if traj.diverged {
        Status::Diverged { t: traj.final_time }
    } else {
        Status::Success
    })
}

fn moments_csv(stats: &MomentSeries) -> Csv {
    let mut header = vec!["t".to_string()];
    for stat in ["mean", "std", "skew", "kurtosis"] {
        header.extend(mode_columns(stat));
    }
    header.extend(["mean_E", "mean_H", "diverged", "count"].map(String::from));
    let mut csv = Csv::new("triad-da.moments.v1", &header);
    for (i, m) in stats.moments.iter().enumerate() {
        let mut row = vec![num(stats.times[i])];
        row.extend(nums(&m.mean));
        row.extend(m.std.iter().map(|x| opt(*x)));
        row.extend(m.skew.iter().map(|x| opt(*x)));
        row.extend(m.kurtosis.iter().map(|x| opt(*x)));
        row.push(num(stats.mean_energy[i]));
        row.push(num(stats.mean_helicity[i]));
        row.push(stats.diverged[i].to_string());
        row.push(m.count.to_string());
        csv.row(row);
    }
    csv
}

fn cmd_ensemble(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Status> {
    let geom = cfg.geometry()?;
    let model = StochasticTriad::new(&geom, cfg.model, cfg.noise());
    let set = run_realisations(
        cfg.initial_state(),
        &model,
        cfg.dt,
        cfg.t_final,
        cfg.record_stride,
        cfg.n_realisations,
        cfg.n_plot,
        cfg.seed,
    )?;

    let mut header = vec!["realisation".to_string(), "t".to_string()];
    header.extend(mode_columns("energy"));
    header.extend(["E".to_string(), "H".to_string()]);
    let mut csv = Csv::new("triad-da.realisations.v1", &header);
    for (r, traj) in set.kept.iter().enumerate() {
        for (i, a) in traj.states.iter().enumerate() {
            let mut row = vec![r.to_string(), num(traj.times[i])];
            row.extend(nums(&modal_energies(a)));
            row.push(num(energy(a)));
            row.push(num(helicity(a, &geom)));
            csv.row(row);
        }
    }
    sink.write("realisations.csv", csv.as_str())?;
    sink.write("moments.csv", moments_csv(&set.stats).as_str())?;

    let times = &set.stats.times;
    for j in 0..3 {
        let mut chart = Chart::new(format!("mode {} energy, {} realisations", MODES[j], cfg.n_realisations), "t", "energy");
        for traj in &set.kept {
            let ys = traj.states.iter().map(|a| modal_energies(a)[j]).collect();
            chart.push(Series::new("", traj.times.clone(), ys, PALETTE[5]).thin());
        }
        chart.push(Series::new("mean", times.clone(), set.stats.mean_series(j), PALETTE[j]));
        sink.write(&format!("realisations_{}.svg", MODES[j]), &chart.render())?;
    }
    let stat_series = |f: &dyn Fn(usize, usize) -> f64, title: &str, name: &str| -> Chart {
        let mut chart = Chart::new(title, "t", name);
        for j in 0..3 {
            let ys = (0..times.len()).map(|i| f(i, j)).collect();
            chart.push(Series::new(format!("mode {}", MODES[j]), times.clone(), ys, PALETTE[j]));
        }
        chart
    };
    let m = &set.stats.moments;
    let nan = f64::NAN;
    let charts = [
        ("moments_mean.svg", stat_series(&|i, j| m[i].mean[j], "ensemble mean", "mean")),
        ("moments_std.svg", stat_series(&|i, j| m[i].std[j].unwrap_or(nan), "standard deviation", "std")),
        ("moments_skew.svg", stat_series(&|i, j| m[i].skew[j].unwrap_or(nan), "skew", "skew")),
        ("moments_kurtosis.svg", stat_series(&|i, j| m[i].kurtosis[j].unwrap_or(nan), "excess kurtosis", "kurtosis")),
    ];
    for (name, chart) in charts {
        sink.write(name, &chart.render())?;
    }
    Ok(Status::Success)
}

fn diagnostics_csv(records: &[AssimilationRecord]) -> Csv {
    let mut header = vec!["step".to_string(), "t".to_string()];
    header.extend(mode_columns("bias"));
    header.extend(mode_columns("rmse"));
    header.extend(["ess".to_string(), "unique".to_string()]);
    for c in ["z", "truth", "mean", "min", "max", "bias_truth", "rmse_truth"] {
        header.extend(mode_columns(c));
    }
    header.push("diverged".to_string());
    let mut csv = Csv::new("triad-da.filter_diagnostics.v1", &header);
    for r in records {
        let mut row = vec![r.step.to_string(), num(r.t)];
        row.extend(nums(&r.bias));
        row.extend(nums(&r.rmse));
        row.push(num(r.ess));
        row.push(r.unique_count.to_string());
        for v in [&r.z, &r.truth, &r.ensemble_mean, &r.envelope_min, &r.envelope_max, &r.bias_truth, &r.rmse_truth] {
            row.extend(nums(v));
        }
        row.push(r.diverged.to_string());
        csv.row(row);
    }
    csv
}

fn write_filter_outputs(sink: &mut Sink, prefix: &str, label: &str, diag: &FilterDiagnostics) -> Result<()> {
    sink.write(&format!("{prefix}diagnostics.csv"), diagnostics_csv(&diag.records).as_str())?;

    let mut header = vec!["t".to_string()];
    for c in ["truth", "mean", "min", "max"] {
        header.extend(mode_columns(c));
    }
    let mut csv = Csv::new("triad-da.envelope.v1", &header);
    for s in &diag.track {
        let mut row = vec![num(s.t)];
        for v in [&s.truth, &s.mean, &s.min, &s.max] {
            row.extend(nums(v));
        }
        csv.row(row);
    }
    sink.write(&format!("{prefix}envelope.csv"), csv.as_str())?;

    let tt: Vec<f64> = diag.track.iter().map(|s| s.t).collect();
    for j in 0..3 {
        let pick = |f: &dyn Fn(&crate::filter::EnvelopeSample) -> [f64; 3]| -> Vec<f64> {
            diag.track.iter().map(|s| f(s)[j]).collect()
        };
        let mut chart = Chart::new(format!("{label}: mode {} energy", MODES[j]), "t", "energy");
        chart.push(Series::new("ensemble min", tt.clone(), pick(&|s| s.min), PALETTE[5]).dashed());
        chart.push(Series::new("ensemble max", tt.clone(), pick(&|s| s.max), PALETTE[5]).dashed());
        chart.push(Series::new("ensemble mean", tt.clone(), pick(&|s| s.mean), PALETTE[0]));
        chart.push(Series::new("truth", tt.clone(), pick(&|s| s.truth), PALETTE[1]));
        let obs_t: Vec<f64> = diag.records.iter().map(|r| r.t).collect();
        let obs: Vec<f64> = diag.records.iter().map(|r| r.z[j]).collect();
        let mut dots = Series::new("observation", obs_t, obs, PALETTE[2]);
        dots.width = 0.8;
        chart.push(dots);
        sink.write(&format!("{prefix}envelope_{}.svg", MODES[j]), &chart.render())?;
    }

    let t: Vec<f64> = diag.records.iter().map(|r| r.t).collect();
    for (name, f) in [
        ("bias", (|r: &AssimilationRecord| r.bias) as fn(&AssimilationRecord) -> [f64; 3]),
        ("rmse", |r: &AssimilationRecord| r.rmse),
    ] {
        let mut chart = Chart::new(format!("{label}: {name}"), "t", name);
        for j in 0..3 {
            let ys = diag.records.iter().map(|r| f(r)[j]).collect();
            chart.push(Series::new(format!("mode {}", MODES[j]), t.clone(), ys, PALETTE[j]));
        }
        sink.write(&format!("{prefix}{name}.svg"), &chart.render())?;
    }
    let mut chart = Chart::new(format!("{label}: ESS and unique particles"), "t", "count");
    chart.push(Series::new("ESS", t.clone(), diag.records.iter().map(|r| r.ess).collect(), PALETTE[0]));
    chart.push(Series::new(
        "unique",
        t,
        diag.records.iter().map(|r| r.unique_count as f64).collect(),
        PALETTE[1],
    ));
    sink.write(&format!("{prefix}ess.svg"), &chart.render())?;
    Ok(())
}

fn filter_status(diag: &FilterDiagnostics) -> Status {
    match diag.outcome {
        FilterOutcome::Completed => Status::Success,
        FilterOutcome::Degenerate { t } => Status::Degenerate { t },
    }
}

fn cmd_filter(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Status> {
    let diag = run_twin_experiment(&cfg.twin_setup(cfg.seed)?)?;
    write_filter_outputs(sink, "", &format!("{} filter", cfg.model.label()), &diag)?;
    Ok(filter_status(&diag))
}

fn cmd_calibrate(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Status> {
    let table = grid_sweep(&cfg.grid, &cfg.sweep_config()?)?;
    sink.write("scores.csv", &table.scores_csv())?;
    sink.write("score_flags.csv", &table.flags_csv())?;
    sink.write("rank_histograms.csv", &table.rank_histogram_csv())?;
    let mut csv = Csv::new("triad-da.ranking.v1", &["rank", "b_k", "b_p", "b_q", "crps_overall"]);
    for (i, (b, score)) in table.ranking().iter().enumerate() {
        csv.row([(i + 1).to_string(), num(b[0]), num(b[1]), num(b[2]), num(*score)]);
    }
    sink.write("ranking.csv", csv.as_str())?;
    Ok(Status::Success)
}

/// Seed of run `r`: the master seed for run 0 (so it matches `filter`),
/// derived seeds after that.
pub fn run_seed(master: u64, r: usize) -> u64 {
    if r == 0 {
        master
    } else {
        rng::derive_seed(master, r as u64)
    }
}

fn repeat_runs(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Status> {
    let mut runs = Vec::with_capacity(cfg.n_runs);
    let mut status = Status::Success;
    for r in 0..cfg.n_runs {
        let diag = run_twin_experiment(&cfg.twin_setup(run_seed(cfg.seed, r))?)?;
        sink.write(&format!("runs/run_{r:03}_diagnostics.csv"), diagnostics_csv(&diag.records).as_str())?;
        if let (Status::Success, Status::Degenerate { .. }) = (status, filter_status(&diag)) {
            status = filter_status(&diag);
        }
        runs.push(diag);
    }

    let n_steps = runs.iter().map(|d| d.records.len()).max().unwrap_or(0);
    let mut header = vec!["step".to_string(), "t".to_string(), "runs".to_string()];
    for c in ["bias_mean", "bias_min", "bias_max", "rmse_mean", "rmse_min", "rmse_max", "ensemble_mean"] {
        header.extend(mode_columns(c));
    }
    let mut csv = Csv::new("triad-da.repeat_aggregate.v1", &header);
    let mut t_axis = Vec::new();
    let mut bias_mean: [Vec<f64>; 3] = Default::default();
    let mut bias_min: [Vec<f64>; 3] = Default::default();
    let mut bias_max: [Vec<f64>; 3] = Default::default();
    for step in 0..n_steps {
        let recs: Vec<&AssimilationRecord> = runs.iter().filter_map(|d| d.records.get(step)).collect();
        let n = recs.len() as f64;
        let stat = |f: &dyn Fn(&AssimilationRecord) -> f64| -> (f64, f64, f64) {
            let xs: Vec<f64> = recs.iter().map(|r| f(r)).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean, min, max)
        };
        let mut row = vec![recs[0].step.to_string(), num(recs[0].t), recs.len().to_string()];
        let mut cols: [[String; 3]; 7] = Default::default();
        for j in 0..3 {
            let (bm, bl, bh) = stat(&|r| r.bias[j]);
            let (rm, rl, rh) = stat(&|r| r.rmse[j]);
            let (em, _, _) = stat(&|r| r.ensemble_mean[j]);
            for (c, v) in [bm, bl, bh, rm, rl, rh, em].into_iter().enumerate() {
                cols[c][j] = num(v);
            }
            bias_mean[j].push(bm);
            bias_min[j].push(bl);
            bias_max[j].push(bh);
        }
        for c in cols {
            row.extend(c);
        }
        csv.row(row);
        t_axis.push(recs[0].t);
    }
    sink.write("aggregate.csv", csv.as_str())?;

    for j in 0..3 {
        let mut chart = Chart::new(
            format!("{}: mode {} bias over {} runs", cfg.model.label(), MODES[j], cfg.n_runs),
            "t",
            "bias",
        );
        chart.push(Series::new("min", t_axis.clone(), bias_min[j].clone(), PALETTE[5]).dashed());
        chart.push(Series::new("max", t_axis.clone(), bias_max[j].clone(), PALETTE[5]).dashed());
        chart.push(Series::new("mean", t_axis.clone(), bias_mean[j].clone(), PALETTE[j]));
        if let Some(first) = runs.first() {
            let ys = first.records.iter().map(|r| r.bias[j]).collect();
            let xs = first.records.iter().map(|r| r.t).collect();
            chart.push(Series::new("run 0", xs, ys, PALETTE[3]));
        }
        sink.write(&format!("aggregate_bias_{}.svg", MODES[j]), &chart.render())?;
    }
    Ok(status)
}
