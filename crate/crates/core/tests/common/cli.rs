use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

pub const BIN: &str = env!("CARGO_BIN_EXE_triad-da");

/// Small configurations that run in well under a second.
pub const QUICK_FILTER: &str = "time.t_final = 30.0\nfilter.n_particles = 20\nmodel = \"est\"\n";
pub const QUICK_ENSEMBLE: &str = "time.t_final = 5.0\nensemble.n_realisations = 8\nensemble.n_plot = 3\nmodel = \"hst\"\n";
pub const QUICK_CALIBRATE: &str = "calibrate.t_final = 20.0\ncalibrate.n_particles = 5\ncalibrate.b_k = [0.1]\ncalibrate.b_p = [0.05, 0.025]\ncalibrate.b_q = [0.01]\n";
pub const QUICK_REPEAT: &str = "time.t_final = 20.0\nfilter.n_particles = 10\nrepeat.n_runs = 3\n";
pub const QUICK_SIMULATE: &str = "time.t_final = 5.0\nmodel = \"hst\"\n";

pub struct Outcome {
    pub code: i32,
    pub stderr: String,
}

/// Writes `config` into `dir/config.toml` and runs `triad-da <cmd>` on it
/// with output into `dir/out`, plus any extra arguments.
pub fn run(dir: &Path, cmd: &str, config: &str, extra: &[&str]) -> Outcome {
    fs::create_dir_all(dir).unwrap();
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config).unwrap();
    let out = Command::new(BIN)
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .env_remove("TRIAD_DA_OUT")
        .output()
        .expect("binary runs");
    Outcome {
        code: out.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Every file under `root`, keyed by relative path.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Names of the files that differ between two output trees (including
/// files present in only one).
pub fn tree_diff(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Vec<String> {
    let mut names: Vec<&String> = a.keys().chain(b.keys()).collect();
    names.sort();
    names.dedup();
    names
        .into_iter()
        .filter(|n| a.get(*n) != b.get(*n))
        .cloned()
        .collect()
}
