//! Experiment configuration: flat dotted keys in a TOML file.
//!
//! ```toml
//! triad.k = "1,0,0"
//! model = "est"
//! noise.b = [0.1, 0.05, 0.01]
//! filter.n_particles = 100
//! ```
//!
//! Vectors may be written as comma-separated strings or arrays. Every key
//! is optional; an empty file is the reference configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use toml::Value;

use crate::calibration::{CrpsEstimator, NoiseGrid, SweepConfig};
use crate::dynamics::{ModelKind, NoiseAmplitude};
use crate::ensemble::default_spread;
use crate::error::{Error, Result};
use crate::filter::{TwinSetup, DEFAULT_OBS_COV};
use crate::helical::{build_triad, Complex3, Parity, TriadGeometry, WaveVector, DEFAULT_GAMMA};
use crate::integrator::{exact_steps, DEFAULT_DT, DEFAULT_RECORD_STRIDE};

/// Default output directory when neither `--out`, `output.dir` nor the
/// environment variable is set.
pub const DEFAULT_OUT_DIR: &str = "triad-da-out";
pub const OUT_DIR_ENV: &str = "TRIAD_DA_OUT";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub k: WaveVector,
    pub p: WaveVector,
    pub q: WaveVector,
    pub parities: [Parity; 3],
    pub gamma: [f64; 3],
    pub model: ModelKind,
    pub b: [f64; 3],
    pub b_imag: [f64; 3],
    pub a0: [f64; 3],
    pub a0_imag: [f64; 3],
    pub dt: f64,
    pub t_final: f64,
    pub record_stride: usize,
    pub da_interval: f64,
    pub n_particles: usize,
    pub spread_std: f64,
    pub obs_cov: [f64; 3],
    pub seed: u64,
    pub n_realisations: usize,
    /// Realisations kept in full for the ensemble plots.
    pub n_plot: usize,
    pub n_runs: usize,
    pub grid: NoiseGrid,
    pub calibrate_t_final: f64,
    pub calibrate_n_particles: usize,
    pub calibrate_models: Vec<ModelKind>,
    pub crps_estimator: CrpsEstimator,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let r = 1.0 / 3f64.sqrt();
        ExperimentConfig {
            k: WaveVector::new(1, 0, 0),
            p: WaveVector::new(0, -1, 1),
            q: WaveVector::new(-1, 1, -1),
            parities: [Parity::Plus, Parity::Minus, Parity::Minus],
            gamma: DEFAULT_GAMMA,
            model: ModelKind::Deterministic,
            b: [0.1, 0.05, 0.01],
            b_imag: [0.0; 3],
            a0: [r; 3],
            a0_imag: [0.0; 3],
            dt: DEFAULT_DT,
            t_final: 150.0,
            record_stride: DEFAULT_RECORD_STRIDE,
            da_interval: 10.0,
            n_particles: 100,
            spread_std: default_spread(),
            obs_cov: DEFAULT_OBS_COV,
            seed: 0,
            n_realisations: 20,
            n_plot: 20,
            n_runs: 10,
            grid: NoiseGrid::standard(),
            calibrate_t_final: 1400.0,
            calibrate_n_particles: 15,
            calibrate_models: vec![ModelKind::Est, ModelKind::Hst],
            crps_estimator: CrpsEstimator::Standard,
            out_dir: None,
            workers: None,
        }
    }
}

fn type_err(key: &str, want: &str, v: &Value) -> Error {
    Error::config(key, format!("expected {want}, found {v}"))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        Value::String(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::config(key, format!("malformed number {s:?}"))),
        other => Err(type_err(key, "a number", other)),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    let x = match v {
        Value::Integer(i) => *i,
        Value::String(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::config(key, format!("malformed integer {s:?}")))?,
        other => return Err(type_err(key, "a non-negative integer", other)),
    };
    usize::try_from(x).map_err(|_| Error::config(key, format!("{x} is negative")))
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    as_usize(key, v).map(|x| x as u64)
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| type_err(key, "a string", v))
}

/// Items of a comma-separated string or an array.
fn items(key: &str, v: &Value) -> Result<Vec<Value>> {
    match v {
        Value::Array(a) => Ok(a.clone()),
        Value::String(s) => Ok(s
            .split(',')
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .map(|t| Value::String(t.to_string()))
            .collect()),
        other => Err(type_err(key, "a list", other)),
    }
}

fn f64_list(key: &str, v: &Value) -> Result<Vec<f64>> {
    items(key, v)?.iter().map(|x| as_f64(key, x)).collect()
}

fn f64_3(key: &str, v: &Value) -> Result<[f64; 3]> {
    let xs = f64_list(key, v)?;
    xs.try_into()
        .map_err(|xs: Vec<f64>| Error::config(key, format!("expected 3 components, found {}", xs.len())))
}

fn i64_3(key: &str, v: &Value) -> Result<[i64; 3]> {
    let xs: Vec<i64> = items(key, v)?
        .iter()
        .map(|x| match x {
            Value::Integer(i) => Ok(*i),
            Value::String(s) => s
                .parse()
                .map_err(|_| Error::config(key, format!("malformed integer {s:?}"))),
            other => Err(type_err(key, "an integer", other)),
        })
        .collect::<Result<_>>()?;
    xs.try_into()
        .map_err(|xs: Vec<i64>| Error::config(key, format!("expected 3 components, found {}", xs.len())))
}

fn parities(key: &str, v: &Value) -> Result<[Parity; 3]> {
    let ps: Vec<Parity> = items(key, v)?
        .iter()
        .map(|x| {
            let s = match x {
                Value::Integer(i) => *i,
                Value::String(s) => match s.as_str() {
                    "+" | "+1" | "1" => 1,
                    "-" | "-1" => -1,
                    _ => 0,
                },
                _ => 0,
            };
            Parity::from_sign(s).ok_or_else(|| Error::config(key, format!("parity must be +1 or -1, found {x}")))
        })
        .collect::<Result<_>>()?;
    ps.try_into()
        .map_err(|ps: Vec<Parity>| Error::config(key, format!("expected 3 parities, found {}", ps.len())))
}

fn models(key: &str, v: &Value) -> Result<Vec<ModelKind>> {
    items(key, v)?
        .iter()
        .map(|x| {
            as_str(key, x)?
                .parse()
                .map_err(|e: Error| Error::config(key, e))
        })
        .collect()
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Parses and validates configuration text.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
    let mut flat = BTreeMap::new();
    flatten("", &table, &mut flat);

    let mut c = ExperimentConfig::default();
    for (key, v) in &flat {
        let key = key.as_str();
        match key {
            "triad.k" => c.k = WaveVector(i64_3(key, v)?),
            "triad.p" => c.p = WaveVector(i64_3(key, v)?),
            "triad.q" => c.q = WaveVector(i64_3(key, v)?),
            "triad.parities" => c.parities = parities(key, v)?,
            "triad.gamma" => c.gamma = f64_3(key, v)?,
            "model" => c.model = as_str(key, v)?.parse().map_err(|e: Error| Error::config(key, e))?,
            "noise.b" => c.b = f64_3(key, v)?,
            "noise.b_imag" => c.b_imag = f64_3(key, v)?,
            "init.a0" => c.a0 = f64_3(key, v)?,
            "init.a0_imag" => c.a0_imag = f64_3(key, v)?,
            "time.dt" => c.dt = as_f64(key, v)?,
            "time.t_final" => c.t_final = as_f64(key, v)?,
            "time.record_stride" => c.record_stride = as_usize(key, v)?,
            "filter.da_interval" => c.da_interval = as_f64(key, v)?,
            "filter.n_particles" => c.n_particles = as_usize(key, v)?,
            "filter.spread_std" => c.spread_std = as_f64(key, v)?,
            "filter.obs_cov" => c.obs_cov = f64_3(key, v)?,
            "seed" => c.seed = as_u64(key, v)?,
            "ensemble.n_realisations" => c.n_realisations = as_usize(key, v)?,
            "ensemble.n_plot" => c.n_plot = as_usize(key, v)?,
            "repeat.n_runs" => c.n_runs = as_usize(key, v)?,
            "calibrate.b_k" => c.grid.b_k = f64_list(key, v)?,
            "calibrate.b_p" => c.grid.b_p = f64_list(key, v)?,
            "calibrate.b_q" => c.grid.b_q = f64_list(key, v)?,
            "calibrate.t_final" => c.calibrate_t_final = as_f64(key, v)?,
            "calibrate.n_particles" => c.calibrate_n_particles = as_usize(key, v)?,
            "calibrate.models" => c.calibrate_models = models(key, v)?,
            "calibrate.crps" => {
                c.crps_estimator = match as_str(key, v)? {
                    "standard" => CrpsEstimator::Standard,
                    "fair" => CrpsEstimator::Fair,
                    other => return Err(Error::config(key, format!("unknown estimator {other:?} (standard|fair)"))),
                }
            }
            "output.dir" => c.out_dir = Some(PathBuf::from(as_str(key, v)?)),
            "workers" => c.workers = Some(as_usize(key, v)?),
            _ => return Err(Error::config(key, "unknown key")),
        }
    }
    c.validate()?;
    Ok(c)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

fn positive(key: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive and finite, found {x}")))
    }
}

fn multiple_of_dt(key: &str, duration: f64, dt: f64) -> Result<()> {
    exact_steps(duration, dt)
        .map(|_| ())
        .map_err(|_| Error::config(key, format!("{duration} is not a multiple of dt = {dt}")))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        positive("time.dt", self.dt)?;
        positive("time.t_final", self.t_final)?;
        positive("filter.da_interval", self.da_interval)?;
        multiple_of_dt("filter.da_interval", self.da_interval, self.dt)?;
        positive("calibrate.t_final", self.calibrate_t_final)?;
        if self.record_stride == 0 {
            return Err(Error::config("time.record_stride", "must be at least 1"));
        }
        if self.n_particles == 0 {
            return Err(Error::config("filter.n_particles", "must be at least 1"));
        }
        if self.calibrate_n_particles == 0 {
            return Err(Error::config("calibrate.n_particles", "must be at least 1"));
        }
        if !(self.spread_std >= 0.0 && self.spread_std.is_finite()) {
            return Err(Error::config("filter.spread_std", "must be non-negative and finite"));
        }
        for (j, c) in self.obs_cov.iter().enumerate() {
            positive(&format!("filter.obs_cov[{j}]"), *c)?;
        }
        let finite = |key: &str, xs: &[f64]| -> Result<()> {
            if xs.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::config(key, "components must be finite"))
            }
        };
        finite("noise.b", &self.b)?;
        finite("noise.b_imag", &self.b_imag)?;
        finite("init.a0", &self.a0)?;
        finite("init.a0_imag", &self.a0_imag)?;
        finite("calibrate.b_k", &self.grid.b_k)?;
        finite("calibrate.b_p", &self.grid.b_p)?;
        finite("calibrate.b_q", &self.grid.b_q)?;
        if self.calibrate_models.is_empty() {
            return Err(Error::config("calibrate.models", "must name at least one model"));
        }
        if self.n_realisations == 0 {
            return Err(Error::config("ensemble.n_realisations", "must be at least 1"));
        }
        if self.n_runs == 0 {
            return Err(Error::config("repeat.n_runs", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        self.geometry().map_err(|e| Error::config("triad", e))?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<TriadGeometry> {
        build_triad(self.k, self.p, self.q, self.parities, self.gamma)
    }

    pub fn noise(&self) -> NoiseAmplitude {
        NoiseAmplitude(Complex3::from_parts(self.b, self.b_imag))
    }

    pub fn initial_state(&self) -> Complex3 {
        Complex3::from_parts(self.a0, self.a0_imag)
    }

    /// Filter setup for the main twin experiment; observation and particle
    /// streams both keyed by `seed`.
    pub fn twin_setup(&self, seed: u64) -> Result<TwinSetup> {
        Ok(TwinSetup {
            geom: self.geometry()?,
            kernel: self.model,
            b: self.noise(),
            a0: self.initial_state(),
            dt: self.dt,
            t_final: self.t_final,
            da_interval: self.da_interval,
            n_particles: self.n_particles,
            spread_std: self.spread_std,
            obs_cov: self.obs_cov,
            observation_seed: seed,
            ensemble_seed: seed,
            track_stride: Some(self.record_stride),
        })
    }

    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let mut base = self.twin_setup(self.seed)?;
        base.t_final = self.calibrate_t_final;
        base.n_particles = self.calibrate_n_particles;
        base.track_stride = None;
        Ok(SweepConfig {
            base,
            models: self.calibrate_models.clone(),
            estimator: self.crps_estimator,
            seed: self.seed,
        })
    }

    /// Output directory: explicit setting, else the environment variable,
    /// else [`DEFAULT_OUT_DIR`].
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    /// Every setting that affects results, as config text that parses back
    /// to the same values. Output location and worker count are left out.
    pub fn canonical(&self) -> String {
        fn list<T: ToString>(xs: &[T]) -> String {
            let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
            format!("\"{}\"", parts.join(","))
        }
        fn float(x: f64) -> String {
            // Debug formatting round-trips and always carries a decimal point.
            format!("{x:?}")
        }
        fn floats(xs: &[f64]) -> String {
            let parts: Vec<String> = xs.iter().map(|x| float(*x)).collect();
            format!("[{}]", parts.join(", "))
        }
        let models: Vec<&str> = self.calibrate_models.iter().map(|m| m.label()).collect();
        let lines = [
            format!("triad.k = {}", list(&self.k.0)),
            format!("triad.p = {}", list(&self.p.0)),
            format!("triad.q = {}", list(&self.q.0)),
            format!("triad.parities = {}", list(&self.parities.map(|p| p.as_i8()))),
            format!("triad.gamma = {}", floats(&self.gamma)),
            format!("model = \"{}\"", self.model.label()),
            format!("noise.b = {}", floats(&self.b)),
            format!("noise.b_imag = {}", floats(&self.b_imag)),
            format!("init.a0 = {}", floats(&self.a0)),
            format!("init.a0_imag = {}", floats(&self.a0_imag)),
            format!("time.dt = {}", float(self.dt)),
            format!("time.t_final = {}", float(self.t_final)),
            format!("time.record_stride = {}", self.record_stride),
            format!("filter.da_interval = {}", float(self.da_interval)),
            format!("filter.n_particles = {}", self.n_particles),
            format!("filter.spread_std = {}", float(self.spread_std)),
            format!("filter.obs_cov = {}", floats(&self.obs_cov)),
            format!("seed = {}", self.seed),
            format!("ensemble.n_realisations = {}", self.n_realisations),
            format!("ensemble.n_plot = {}", self.n_plot),
            format!("repeat.n_runs = {}", self.n_runs),
            format!("calibrate.b_k = {}", floats(&self.grid.b_k)),
            format!("calibrate.b_p = {}", floats(&self.grid.b_p)),
            format!("calibrate.b_q = {}", floats(&self.grid.b_q)),
            format!("calibrate.t_final = {}", float(self.calibrate_t_final)),
            format!("calibrate.n_particles = {}", self.calibrate_n_particles),
            format!("calibrate.models = {}", list(&models)),
            format!(
                "calibrate.crps = \"{}\"",
                match self.crps_estimator {
                    CrpsEstimator::Standard => "standard",
                    CrpsEstimator::Fair => "fair",
                }
            ),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}
