#![allow(dead_code)]

use magdirac_lab::config::ExperimentConfig;

/// Small free massive run that exercises every analysis in a few seconds.
pub const FREE: &str = r#"
name = "free"
mass = 1.0

[field]
kind = "zero"

[grid]
N = 8
L = 12.0

[datum]
kind = "gaussian"
sigma = 1.5
spinor = [[1.0, 0.0], [0.0, 0.3], [0.2, 0.0], [0.0, 0.0]]

[propagator]
method = "krylov"
tol = 1e-12

[time]
T = 0.6
tau = 0.05

[multiplier]
radii = [3.0, 4.0]

[analyses]
virial = true
theta = true
smoothing = true
horizons = [0.3, 0.6]
hardy = true
strichartz = [[inf, 2.0], [4.0, 3.0]]
"#;

pub fn free() -> ExperimentConfig {
    ExperimentConfig::from_toml(FREE).unwrap()
}

pub fn with(edit: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut c = free();
    edit(&mut c);
    c
}

pub fn csv_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}
