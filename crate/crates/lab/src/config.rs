//! Experiment configuration: a TOML document with a fixed schema.
//!
//! Unknown keys are rejected. Every check runs in [`ExperimentConfig::prepare`]
//! before any computation starts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use magdirac::field::{example_field, FieldKind, FieldSpec};
use magdirac::lattice::{Grid, OperatorHandle, SpinorField};
use magdirac::multiplier::make_multiplier;
use magdirac::propagator::{uniform_times, DENSE_CAP};
use magdirac::virial::{check_admissible, AdmissibleClass};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// Seed of the only random generator of a run (random data).
    #[serde(default)]
    pub seed: u64,
    pub mass: f64,
    pub field: FieldConfig,
    pub grid: GridConfig,
    pub datum: DatumConfig,
    pub propagator: PropagatorConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub multiplier: MultiplierConfig,
    #[serde(default)]
    pub analyses: AnalysesConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Multiply the lattice potential by the smooth cutoff near the box faces.
    #[serde(default = "yes")]
    pub cutoff: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(default)]
    pub center: [f64; 3],
}

/// A spinor given as four `[re, im]` pairs.
pub type SpinorSpec = [[f64; 2]; 4];

fn default_spinor() -> SpinorSpec {
    [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatumConfig {
    /// `e^{−|x−c−offset|²/(2σ²)} v`.
    Gaussian {
        sigma: f64,
        #[serde(default)]
        offset: [f64; 3],
        #[serde(default = "default_spinor")]
        spinor: SpinorSpec,
    },
    /// Lattice plane wave with integer mode numbers `k`.
    PlaneWave {
        k: [i64; 3],
        #[serde(default = "default_spinor")]
        spinor: SpinorSpec,
    },
    /// Gaussian envelope with a spinor drawn from the run seed.
    Random {
        sigma: f64,
        #[serde(default)]
        offset: [f64; 3],
    },
    /// Binary spinor file written by `SpinorField::write_binary`.
    File { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodConfig {
    Dense,
    Krylov,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorConfig {
    pub method: MethodConfig,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_cap")]
    pub dense_cap: usize,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_cap() -> usize {
    DENSE_CAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t_end: f64,
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MMode {
    Optimal,
}

/// `M` as a number or `"optimal"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MSpec {
    Explicit(f64),
    Mode(MMode),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierConfig {
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(rename = "M", default = "default_m")]
    pub m: MSpec,
    /// Mollifier width of the profile used by the Θ series; 0 means `2h`.
    #[serde(default)]
    pub smoothing: f64,
    #[serde(default = "default_sphere_level")]
    pub sphere_level: u32,
}

fn default_radii() -> Vec<f64> {
    vec![4.0]
}

fn default_m() -> MSpec {
    MSpec::Explicit(0.0)
}

fn default_sphere_level() -> u32 {
    2
}

impl Default for MultiplierConfig {
    fn default() -> Self {
        MultiplierConfig {
            radii: default_radii(),
            m: default_m(),
            smoothing: 0.0,
            sphere_level: default_sphere_level(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysesConfig {
    #[serde(default)]
    pub virial: bool,
    #[serde(default)]
    pub theta: bool,
    #[serde(default)]
    pub smoothing: bool,
    /// Horizons for the smoothing and Strichartz tables; empty means `[T]`.
    #[serde(default)]
    pub horizons: Vec<f64>,
    #[serde(default)]
    pub hardy: bool,
    /// Defaults to `1 − 4C₀`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardy_eps: Option<f64>,
    /// `(p, q)` pairs; `inf` is accepted for `p`.
    #[serde(default)]
    pub strichartz: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// Command-line overrides of the grid and time parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub n: Option<usize>,
    pub l: Option<f64>,
    pub t_end: Option<f64>,
    pub tau: Option<f64>,
}

/// Validated run inputs.
pub struct Prepared {
    pub grid: Grid,
    pub field: FieldSpec,
    pub op: OperatorHandle,
    pub datum: SpinorField,
    pub times: Vec<f64>,
    pub horizons: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            LabError::validation(key_from_message(&msg), msg)
        })
    }

    /// Loads a config file; a relative datum path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let DatumConfig::File { path: p } = &mut cfg.datum {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies command-line overrides. A new `T` drops the horizons past it.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(n) = o.n {
            self.grid.n = n;
        }
        if let Some(l) = o.l {
            self.grid.l = l;
        }
        if let Some(t) = o.t_end {
            self.time.t_end = t;
            self.analyses.horizons.retain(|&h| h <= t * (1.0 + 1e-12));
        }
        if let Some(t) = o.tau {
            self.time.tau = t;
        }
    }

    pub fn field_kind(&self) -> Result<FieldKind> {
        let kind = FieldKind::parse(&self.field.kind).map_err(|e| LabError::at("field.kind", e))?;
        if kind == FieldKind::Custom {
            return Err(LabError::validation("field.kind", "custom fields are library-only"));
        }
        Ok(kind)
    }

    pub fn field_spec(&self) -> Result<FieldSpec> {
        example_field(self.field_kind()?, &self.field.params).map_err(|e| LabError::at("field.params", e))
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = &self.grid;
        if g.n < 4 || g.n % 2 != 0 {
            return Err(LabError::validation("grid.N", format!("must be an even integer ≥ 4, got {}", g.n)));
        }
        if !(g.l > 0.0 && g.l.is_finite()) {
            return Err(LabError::validation("grid.L", format!("must be positive and finite, got {}", g.l)));
        }
        if g.center.iter().any(|c| !c.is_finite()) {
            return Err(LabError::validation("grid.center", "must be finite"));
        }
        Grid::new(g.n, g.l, g.center).map_err(|e| LabError::at("grid", e))
    }

    /// Checks every component and builds the operator, datum and time grid.
    pub fn prepare(&self) -> Result<Prepared> {
        let grid = self.grid()?;
        if !self.mass.is_finite() {
            return Err(LabError::validation("mass", "must be finite"));
        }
        let field = self.field_spec()?;
        let op = OperatorHandle::from_field(grid, &field, self.mass, self.field.cutoff)
            .map_err(|e| LabError::at("field.kind", e))?;

        let t = &self.time;
        if !(t.t_end > 0.0 && t.t_end.is_finite()) {
            return Err(LabError::validation("time.T", format!("must be positive and finite, got {}", t.t_end)));
        }
        if !(t.tau > 0.0 && t.tau <= t.t_end) {
            return Err(LabError::validation("time.tau", format!("must lie in (0, T], got {}", t.tau)));
        }
        if !is_multiple(t.t_end, t.tau) {
            return Err(LabError::validation("time.tau", format!("must divide T = {}", t.t_end)));
        }
        let times = uniform_times(t.t_end, t.tau).map_err(|e| LabError::at("time", e))?;

        let p = &self.propagator;
        if !(p.tol > 0.0 && p.tol < 1.0) {
            return Err(LabError::validation("propagator.tol", format!("must lie in (0, 1), got {}", p.tol)));
        }
        if p.method == MethodConfig::Dense && op.dim() > p.dense_cap {
            return Err(LabError::validation(
                "propagator.method",
                format!("dense dimension {} exceeds dense_cap {}", op.dim(), p.dense_cap),
            ));
        }

        let datum = self.datum(grid)?;

        let m = &self.multiplier;
        if m.radii.is_empty() && (self.analyses.virial || self.analyses.theta) {
            return Err(LabError::validation("multiplier.radii", "at least one radius is required"));
        }
        for &r in &m.radii {
            make_multiplier(r, 0.0, 0.0).map_err(|e| LabError::at("multiplier.radii", e))?;
        }
        if let MSpec::Explicit(v) = m.m {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LabError::validation("multiplier.M", format!("must be nonnegative, got {v}")));
            }
        }
        if !(m.smoothing >= 0.0 && m.smoothing.is_finite()) {
            return Err(LabError::validation("multiplier.smoothing", "must be nonnegative"));
        }
        if m.sphere_level > 5 {
            return Err(LabError::validation("multiplier.sphere_level", "must be at most 5"));
        }

        let a = &self.analyses;
        if a.virial && times.len() < 5 {
            return Err(LabError::validation("analyses.virial", "needs at least 5 time samples"));
        }
        if a.theta && times.len() < 3 {
            return Err(LabError::validation("analyses.theta", "needs at least 3 time samples"));
        }
        let horizons = if a.horizons.is_empty() { vec![t.t_end] } else { a.horizons.clone() };
        for &h in &horizons {
            if !(h > 0.0 && h <= t.t_end * (1.0 + 1e-12)) || !is_multiple(h, t.tau) {
                return Err(LabError::validation(
                    "analyses.horizons",
                    format!("{h} must be a positive multiple of tau not exceeding T"),
                ));
            }
        }
        if let Some(eps) = a.hardy_eps {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(LabError::validation("analyses.hardy_eps", format!("must lie in (0, 1), got {eps}")));
            }
        }
        let class = AdmissibleClass::for_mass(self.mass);
        for &[pp, qq] in &a.strichartz {
            check_admissible(pp, qq, class).map_err(|e| LabError::at("analyses.strichartz", e))?;
        }
        Ok(Prepared {
            grid,
            field,
            op,
            datum,
            times,
            horizons,
        })
    }

    fn datum(&self, grid: Grid) -> Result<SpinorField> {
        let spinor = |s: &SpinorSpec| s.map(|[re, im]| C::new(re, im));
        let check_sigma = |sigma: f64| {
            if sigma > 0.0 && sigma.is_finite() {
                Ok(())
            } else {
                Err(LabError::validation("datum.sigma", format!("must be positive, got {sigma}")))
            }
        };
        let shifted = |o: [f64; 3]| [grid.center[0] + o[0], grid.center[1] + o[1], grid.center[2] + o[2]];
        let f = match &self.datum {
            DatumConfig::Gaussian { sigma, offset, spinor: s } => {
                check_sigma(*sigma)?;
                SpinorField::gaussian(grid, shifted(*offset), *sigma, spinor(s))
            }
            DatumConfig::PlaneWave { k, spinor: s } => SpinorField::plane_wave(grid, *k, spinor(s)),
            DatumConfig::Random { sigma, offset } => {
                check_sigma(*sigma)?;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let v: [C; 4] = std::array::from_fn(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                SpinorField::gaussian(grid, shifted(*offset), *sigma, v)
            }
            DatumConfig::File { path } => {
                let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
                let f = SpinorField::read_binary(&mut bytes.as_slice()).map_err(|e| LabError::at("datum.path", e))?;
                if f.grid != grid {
                    return Err(LabError::validation(
                        "datum.path",
                        format!("file grid {} differs from the configured {}", f.grid, grid),
                    ));
                }
                f
            }
        };
        if !f.is_finite() {
            return Err(LabError::validation("datum", "contains non-finite values"));
        }
        if f.norm() == 0.0 {
            return Err(LabError::validation("datum", "is identically zero"));
        }
        Ok(f)
    }
}

fn is_multiple(t: f64, tau: f64) -> bool {
    let k = (t / tau).round();
    k >= 1.0 && (k * tau - t).abs() <= 1e-9 * t.abs().max(1.0)
}

/// Best-effort key extraction from a deserializer message.
fn key_from_message(msg: &str) -> String {
    for marker in ["unknown field `", "missing field `", "unknown variant `"] {
        if let Some(i) = msg.find(marker) {
            let rest = &msg[i + marker.len()..];
            if let Some(j) = rest.find('`') {
                return rest[..j].to_string();
            }
        }
    }
    "config".into()
}
