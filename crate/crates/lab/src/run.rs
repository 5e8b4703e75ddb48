//! The experiment pipeline: constants, propagation, analyses, persistence.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use magdirac::field::{
    admissibility_check, compute_constants, constants_csv_row, field_geometry, Admissibility, FieldConstants, FieldSpec, QuadSettings,
    CONSTANTS_CSV_HEADER,
};
use magdirac::multiplier::{make_multiplier, optimal_m};
use magdirac::propagator::{assemble_dense_with_cap, evolve_dense, evolve_krylov, trajectory_csv, Trajectory};
use magdirac::quadrature::SphereRule;
use magdirac::virial::*;

use crate::config::{ExperimentConfig, MSpec, MethodConfig};
use crate::error::{LabError, Result};
use crate::manifest::{sha256_hex, FileEntry, Fingerprint, RunManifest, CONFIG_FILE, MANIFEST_FILE};

/// Report files of a run, in write order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Reports {
    pub files: Vec<(String, String)>,
    pub summary: Vec<(String, String)>,
    pub constants: Vec<(String, String)>,
}

impl Reports {
    fn file(&mut self, name: String, body: String) {
        self.files.push((name, body));
    }

    fn stat(&mut self, key: String, value: impl ToString) {
        self.summary.push((key, value.to_string()));
    }

    fn num(&mut self, key: String, value: f64) {
        self.summary.push((key, num(value)));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_str())
    }
}

/// Shortest round-trip form, with an exponent for very small or large values.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn tag(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// Field constants and the admissibility verdict.
#[derive(Clone, Debug)]
pub struct FieldCheck {
    pub field_id: String,
    pub constants: FieldConstants,
    pub admissibility: Admissibility,
}

impl FieldCheck {
    pub fn csv(&self) -> String {
        format!(
            "{CONSTANTS_CSV_HEADER}\n{}\n",
            constants_csv_row(&self.field_id, &self.constants, &self.admissibility)
        )
    }
}

pub fn check_field(field: &FieldSpec, mass: f64) -> Result<FieldCheck> {
    let geom = field_geometry(field);
    let constants = compute_constants(field, &geom, &QuadSettings::default()).map_err(|e| LabError::at("field", e))?;
    let admissibility = admissibility_check(&constants, mass, false);
    Ok(FieldCheck {
        field_id: field.id(),
        constants,
        admissibility,
    })
}

/// Runs every stage in memory without touching the disk.
pub fn compute_reports(cfg: &ExperimentConfig) -> Result<Reports> {
    let prep = cfg.prepare()?;
    let mut out = Reports::default();

    let fc = check_field(&prep.field, cfg.mass)?;
    out.file("constants.csv".into(), fc.csv());
    let FieldCheck {
        field_id,
        constants: c,
        admissibility: adm,
    } = fc;
    let m = match cfg.multiplier.m {
        MSpec::Explicit(v) => v,
        MSpec::Mode(_) => {
            if !(c.c1.is_finite() && c.c2.is_finite()) {
                return Err(LabError::validation(
                    "multiplier.M",
                    "optimal M needs finite C1 and C2 for this field",
                ));
            }
            optimal_m(c.c1, c.c2)
        }
    };
    for (k, v) in [
        ("field_id", field_id.clone()),
        ("C0", num(c.c0)),
        ("C1", num(c.c1)),
        ("C2", num(c.c2)),
        ("B2_sup", num(c.b2_sup)),
        ("decay_sum", num(c.decay_sum)),
        ("verdict", adm.verdict.to_string()),
        ("margin", num(adm.margin)),
        ("M", num(m)),
    ] {
        out.constants.push((k.into(), v));
    }
    for (i, r) in adm.reasons.iter().enumerate() {
        out.constants.push((format!("reason{i}"), r.clone()));
    }
    if c.c1.is_finite() && c.c2.is_finite() {
        let q = quadratic_form_check(m, c.c1, c.c2, 101);
        out.file(
            "quadratic_form.csv".into(),
            format!("{QUADRATIC_FORM_CSV_HEADER}\n{}\n", quadratic_form_csv_row(&q)),
        );
        out.num("quadratic_form.min".into(), q.min);
    }

    let traj = propagate(cfg, &prep)?;
    let (dn, de) = traj.drift();
    out.stat("propagation.method".into(), traj.method);
    out.stat("propagation.samples".into(), traj.len());
    out.num("propagation.norm_drift".into(), dn);
    out.num("propagation.energy_drift".into(), de);
    out.file("trajectory.csv".into(), trajectory_csv(&traj));

    let a = &cfg.analyses;
    let rule = SphereRule::with_level(cfg.multiplier.sphere_level);
    for &r in &cfg.multiplier.radii {
        if a.virial {
            let phi = make_multiplier(r, m, 0.0).map_err(|e| LabError::at("multiplier", e))?;
            let rep = virial_terms(&traj, &phi, &rule)?;
            out.num(format!("virial.R{}.max_residual", tag(r)), rep.max_residual);
            out.num(format!("virial.R{}.radial_form_gap", tag(r)), rep.radial_form_gap);
            if let Some(w) = &rep.warning {
                out.stat(format!("virial.R{}.warning", tag(r)), w);
            }
            out.file(format!("virial_R{}.csv", tag(r)), virial_csv(&rep));
            if c.c0 < 0.25 {
                let b = rhs_bound_check(&traj, &phi, &c)?;
                out.num(format!("rhs_bound.R{}.margin", tag(r)), b.margin);
                out.num(format!("rhs_bound.R{}.printed_margin", tag(r)), b.printed_margin);
                out.file(format!("rhs_bound_R{}.csv", tag(r)), rhs_bound_csv(&b));
            }
        }
        if a.theta {
            let s = if cfg.multiplier.smoothing > 0.0 { cfg.multiplier.smoothing } else { 2.0 * prep.grid.h() };
            let phi = make_multiplier(r, m, s).map_err(|e| LabError::at("multiplier", e))?;
            let th = theta_functionals(&traj, &phi.samples(prep.grid))?;
            let e1 = centered_difference_error(&th.times, &th.theta, &th.theta_dot)?;
            let e2 = centered_difference_error(&th.times, &th.theta_dot, &th.theta_ddot)?;
            out.num(format!("theta.R{}.fd_error_theta", tag(r)), e1);
            out.num(format!("theta.R{}.fd_error_theta_dot", tag(r)), e2);
            out.file(format!("theta_R{}.csv", tag(r)), theta_csv(&th));
        }
    }
    if a.smoothing {
        let reps = smoothing_norms_at(&traj, &prep.horizons, &rule)?;
        for rep in &reps {
            out.num(format!("smoothing.T{}.ratio_l2", tag(rep.horizon)), rep.ratio_l2);
            out.num(format!("smoothing.T{}.ratio_energy", tag(rep.horizon)), rep.ratio_energy);
        }
        out.file("smoothing.csv".into(), smoothing_csv(&reps));
    }
    if a.hardy {
        let eps = match a.hardy_eps {
            Some(e) => e,
            None => hardy_epsilon(c.c0).map_err(|e| LabError::at("analyses.hardy", e))?,
        };
        let rep = hardy_check(&prep.datum, &prep.op, &c, eps).map_err(|e| LabError::at("analyses.hardy", e))?;
        out.num("hardy.eps".into(), rep.eps);
        out.num("hardy.margin".into(), rep.margin);
        out.num("hardy.identity_residual".into(), rep.identity_residual);
        out.stat("hardy.verdict".into(), if rep.holds { "pass" } else { "fail" });
        out.file("hardy.csv".into(), format!("{HARDY_CSV_HEADER}\n{}\n", hardy_csv_row("datum", &rep)));
    }
    if !a.strichartz.is_empty() {
        let mut body = format!("{STRICHARTZ_CSV_HEADER}\n");
        for &t in &prep.horizons {
            let sub = traj.truncated(t)?;
            for &[p, q] in &a.strichartz {
                let rep = strichartz_ratio(&sub, p, q).map_err(|e| LabError::at("analyses.strichartz", e))?;
                out.num(format!("strichartz.p{}_q{}.T{}.ratio", tag(p), tag(q), tag(t)), rep.ratio);
                body.push_str(&strichartz_csv_row(&rep));
                body.push('\n');
            }
        }
        out.file("strichartz.csv".into(), body);
    }
    for (name, body) in &out.files {
        if body.contains("NaN") {
            return Err(LabError::Numerical(format!("{name} contains NaN")));
        }
    }
    Ok(out)
}

fn propagate(cfg: &ExperimentConfig, prep: &crate::config::Prepared) -> Result<Trajectory> {
    Ok(match cfg.propagator.method {
        MethodConfig::Dense => {
            let p = assemble_dense_with_cap(&prep.op, cfg.propagator.dense_cap).map_err(|e| LabError::at("propagator", e))?;
            evolve_dense(&p, &prep.datum, &prep.times)?
        }
        MethodConfig::Krylov => evolve_krylov(&prep.op, &prep.datum, &prep.times, cfg.propagator.tol)?,
    })
}

/// Runs `cfg` and persists its reports under `out` atomically.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let reports = compute_reports(cfg)?;
    let config = cfg.to_toml();
    let mut manifest = RunManifest {
        name: cfg.name.clone(),
        seed: cfg.seed,
        config: config.clone(),
        constants: reports.constants.clone(),
        fingerprint: Fingerprint::current(),
        wall_clock_s: 0.0,
        summary: reports.summary.clone(),
        files: reports
            .files
            .iter()
            .map(|(n, b)| FileEntry {
                name: n.clone(),
                sha256: sha256_hex(b.as_bytes()),
            })
            .collect(),
    };
    manifest.wall_clock_s = start.elapsed().as_secs_f64();
    let mut files: Vec<(String, Vec<u8>)> = vec![(CONFIG_FILE.into(), config.into_bytes())];
    files.extend(reports.files.into_iter().map(|(n, b)| (n, b.into_bytes())));
    files.push((MANIFEST_FILE.into(), manifest.to_text().into_bytes()));
    persist(out, &files)?;
    Ok(manifest)
}

fn staging_dir(out: &Path) -> PathBuf {
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    out.with_file_name(format!(".{name}.staging-{}", std::process::id()))
}

/// Writes `files` into a sibling staging directory and renames it to `out`.
/// On failure the staging directory is removed and `out` is left untouched.
pub fn persist(out: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    if out.exists() {
        let empty = fs::read_dir(out).map(|mut d| d.next().is_none()).unwrap_or(false);
        if !empty {
            return Err(LabError::io(
                out,
                std::io::Error::new(std::io::ErrorKind::AlreadyExists, "output directory exists and is not empty"),
            ));
        }
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    let staging = staging_dir(out);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| LabError::io(&staging, e))?;
    }
    let result = (|| {
        fs::create_dir(&staging).map_err(|e| LabError::io(&staging, e))?;
        for (name, body) in files {
            let path = staging.join(name);
            fs::write(&path, body).map_err(|e| LabError::io(&path, e))?;
        }
        if out.exists() {
            fs::remove_dir(out).map_err(|e| LabError::io(out, e))?;
        }
        fs::rename(&staging, out).map_err(|e| LabError::io(out, e))
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}
