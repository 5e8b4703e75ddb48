//! Magnetic fields, gauge potentials and the field constants of the
//! smoothing theorem.
//!
//! A field is a sum of analytic components. The split `B = B₁ + B₂` is
//! declared by the constructor: decaying pieces go to `B₁`, bounded
//! non-decaying pieces (constant, radial) go to `B₂`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{cube_sphere_directions, trapezoid, PanelRule};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];
pub type VectorMap = Arc<dyn Fn(Vec3) -> Vec3 + Send + Sync>;
pub type Params = BTreeMap<String, f64>;

/// Shared divergence threshold for built-in and user fields.
pub const DIV_TOL: f64 = 1e-6;

#[inline]
pub fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
fn scale(s: f64, a: Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

/// Finite-difference step for field derivatives at `x`.
pub fn fd_step(x: Vec3) -> f64 {
    1e-4 * (1.0 + norm(x))
}

/// Central-difference Jacobian `J[i][j] = ∂_j F_i`.
pub fn fd_jacobian(f: &dyn Fn(Vec3) -> Vec3, x: Vec3, h: f64) -> Mat3 {
    let mut jac = [[0.0; 3]; 3];
    for j in 0..3 {
        let mut xp = x;
        let mut xm = x;
        xp[j] += h;
        xm[j] -= h;
        let (fp, fm) = (f(xp), f(xm));
        for i in 0..3 {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Central-difference curl.
pub fn fd_curl(f: &dyn Fn(Vec3) -> Vec3, x: Vec3, h: f64) -> Vec3 {
    let j = fd_jacobian(f, x, h);
    [j[2][1] - j[1][2], j[0][2] - j[2][0], j[1][0] - j[0][1]]
}

/// Central-difference divergence.
pub fn fd_divergence(f: &dyn Fn(Vec3) -> Vec3, x: Vec3, h: f64) -> f64 {
    let j = fd_jacobian(f, x, h);
    j[0][0] + j[1][1] + j[2][2]
}

/// Fixed sample set for divergence and round-trip checks: six radii times
/// the 26 cube directions, shifted off the symmetry axes.
pub fn field_sample_points() -> Vec<Vec3> {
    let shift = [0.013, -0.021, 0.017];
    let mut pts = Vec::new();
    for r in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
        for d in cube_sphere_directions(0) {
            pts.push(add(scale(r, d), shift));
        }
    }
    pts
}

/// Radial profile of a swirl potential `A = g(r)(−y, x, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SwirlProfile {
    /// `g = amp·(1 + r²)^{−(2+δ)/2}`.
    Algebraic { amp: f64, delta: f64 },
    /// `g = amp·exp(−r²/(2s²))`.
    Gaussian { amp: f64, s: f64 },
}

impl SwirlProfile {
    /// `(g, g′/r, (g′/r)′/r)`.
    fn eval(&self, r2: f64) -> (f64, f64, f64) {
        match *self {
            SwirlProfile::Algebraic { amp, delta } => {
                let base = 1.0 + r2;
                let g = amp * base.powf(-(2.0 + delta) / 2.0);
                let q = -amp * (2.0 + delta) * base.powf(-(4.0 + delta) / 2.0);
                let p = amp * (2.0 + delta) * (4.0 + delta) * base.powf(-(6.0 + delta) / 2.0);
                (g, q, p)
            }
            SwirlProfile::Gaussian { amp, s } => {
                let e = (-r2 / (2.0 * s * s)).exp();
                let s2 = s * s;
                (amp * e, -amp * e / s2, amp * e / (s2 * s2))
            }
        }
    }
}

/// One analytic summand of a field.
#[derive(Clone)]
pub enum Component {
    Constant(Vec3),
    /// `ω(x̂) x̂` with `ω(x̂) = w0 + w·x̂`.
    Radial { w0: f64, w: Vec3 },
    /// `curl(g(r)(−y, x, 0))`.
    Swirl(SwirlProfile),
    /// Arbitrary map; derivatives by central differences.
    Custom(VectorMap),
}

impl fmt::Debug for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Constant(b) => write!(f, "Constant({b:?})"),
            Component::Radial { w0, w } => write!(f, "Radial {{ w0: {w0}, w: {w:?} }}"),
            Component::Swirl(p) => write!(f, "Swirl({p:?})"),
            Component::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Component {
    pub fn eval(&self, x: Vec3) -> Vec3 {
        match self {
            Component::Constant(b) => *b,
            Component::Radial { w0, w } => {
                let r = norm(x);
                if r == 0.0 {
                    return [0.0; 3];
                }
                let u = scale(1.0 / r, x);
                scale(w0 + dot(*w, u), u)
            }
            Component::Swirl(p) => {
                let (g, q, _) = p.eval(dot(x, x));
                let rho2 = x[0] * x[0] + x[1] * x[1];
                [-q * x[2] * x[0], -q * x[2] * x[1], 2.0 * g + q * rho2]
            }
            Component::Custom(f) => f(x),
        }
    }

    /// `J[i][j] = ∂_j B_i`.
    pub fn jacobian(&self, x: Vec3) -> Mat3 {
        match self {
            Component::Constant(_) => [[0.0; 3]; 3],
            Component::Radial { w0, w } => {
                let r = norm(x);
                let u = scale(1.0 / r, x);
                let om = w0 + dot(*w, u);
                let wu = dot(*w, u);
                let mut jac = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        let dij = if i == j { 1.0 } else { 0.0 };
                        let d_om = (w[j] - wu * u[j]) / r;
                        jac[i][j] = d_om * u[i] + om * (dij - u[i] * u[j]) / r;
                    }
                }
                jac
            }
            Component::Swirl(prof) => {
                let (_, q, p) = prof.eval(dot(x, x));
                let rho2 = x[0] * x[0] + x[1] * x[1];
                let z = x[2];
                let mut jac = [[0.0; 3]; 3];
                for j in 0..3 {
                    let dz = if j == 2 { 1.0 } else { 0.0 };
                    for i in 0..2 {
                        let di = if i == j { 1.0 } else { 0.0 };
                        jac[i][j] = -p * x[j] * z * x[i] - q * (dz * x[i] + z * di);
                    }
                    let drho = if j < 2 { 2.0 * x[j] } else { 0.0 };
                    jac[2][j] = 2.0 * q * x[j] + p * x[j] * rho2 + q * drho;
                }
                jac
            }
            Component::Custom(f) => fd_jacobian(f.as_ref(), x, fd_step(x)),
        }
    }

    fn tangential(&self, x: Vec3) -> Vec3 {
        match self {
            // Parallel to x̂ by construction.
            Component::Radial { .. } => [0.0; 3],
            _ => cross(scale(1.0 / norm(x), x), self.eval(x)),
        }
    }

    fn radial_derivative(&self, x: Vec3) -> Vec3 {
        match self {
            Component::Constant(_) | Component::Radial { .. } => [0.0; 3],
            Component::Custom(f) => {
                let r = norm(x);
                let u = scale(1.0 / r, x);
                let h = fd_step(x).min(0.5 * r);
                let fp = f(add(x, scale(h, u)));
                let fm = f(add(x, scale(-h, u)));
                scale(0.5 / h, add(fp, scale(-1.0, fm)))
            }
            _ => {
                let jac = self.jacobian(x);
                let u = scale(1.0 / norm(x), x);
                [dot(jac[0], u), dot(jac[1], u), dot(jac[2], u)]
            }
        }
    }

    fn has_gauge(&self) -> bool {
        !matches!(self, Component::Radial { w0, w } if *w0 != 0.0 || *w != [0.0; 3])
    }
}

/// Built-in field families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldKind {
    Zero,
    Constant,
    RadialOmega,
    PerturbedEx2,
    Decaying,
    Custom,
}

impl FieldKind {
    pub fn name(&self) -> &'static str {
        match self {
            FieldKind::Zero => "zero",
            FieldKind::Constant => "constant",
            FieldKind::RadialOmega => "radial_omega",
            FieldKind::PerturbedEx2 => "perturbed_ex2",
            FieldKind::Decaying => "decaying",
            FieldKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "zero" => FieldKind::Zero,
            "constant" => FieldKind::Constant,
            "radial_omega" => FieldKind::RadialOmega,
            "perturbed_ex2" => FieldKind::PerturbedEx2,
            "decaying" => FieldKind::Decaying,
            _ => {
                return Err(Error::config(
                    "field.kind",
                    format!("unknown kind `{s}` (zero, constant, radial_omega, perturbed_ex2, decaying)"),
                ))
            }
        })
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Amplitude of the perturbation profile in `perturbed_ex2`. With this value
/// `|B_τ| ≤ 1/(r^{2−δ}+r^{2+δ})` and `|∂_rB| ≤ 1/(r^{3−δ}+r^{3+δ})` hold for
/// every `δ ∈ (0, 2]`.
pub const EX2_AMPLITUDE: f64 = 0.125;

/// A magnetic field with declared split and (when it exists) a gauge.
#[derive(Clone)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub params: Params,
    pub b1: Vec<Component>,
    pub b2: Vec<Component>,
    gauge: Option<VectorMap>,
}

impl fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSpec")
            .field("kind", &self.kind)
            .field("params", &self.params)
            .field("b1", &self.b1)
            .field("b2", &self.b2)
            .field("gauge", &self.gauge.is_some())
            .finish()
    }
}

fn take(params: &Params, key: &str, kind: FieldKind) -> Result<f64> {
    let v = params
        .get(key)
        .copied()
        .ok_or_else(|| Error::config(format!("field.params.{key}"), format!("required for `{kind}`")))?;
    if !v.is_finite() {
        return Err(Error::config(format!("field.params.{key}"), "must be finite"));
    }
    Ok(v)
}

fn take_or(params: &Params, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) if v.is_finite() => Ok(*v),
        Some(_) => Err(Error::config(format!("field.params.{key}"), "must be finite")),
    }
}

fn check_keys(params: &Params, allowed: &[&str]) -> Result<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::config(format!("field.params.{k}"), "unknown parameter")),
        None => Ok(()),
    }
}

fn radial_part(params: &Params) -> Result<Option<Component>> {
    let w0 = take_or(params, "omega", 0.0)?;
    let w = [
        take_or(params, "omega_x", 0.0)?,
        take_or(params, "omega_y", 0.0)?,
        take_or(params, "omega_z", 0.0)?,
    ];
    Ok((w0 != 0.0 || w != [0.0; 3]).then_some(Component::Radial { w0, w }))
}

const OMEGA_KEYS: [&str; 4] = ["omega", "omega_x", "omega_y", "omega_z"];

/// Builds one of the built-in fields.
///
/// | kind | keys |
/// |---|---|
/// | `zero` | none |
/// | `constant` | `b` (field along `e_z`) |
/// | `radial_omega` | `omega`, `omega_x`, `omega_y`, `omega_z` (`ω(x̂) = omega + (omega_x, omega_y, omega_z)·x̂`) |
/// | `perturbed_ex2` | `eps`, `delta ∈ (0, 2]`, optional radial `omega*` keys |
/// | `decaying` | `a` (peak field), `s > 0` (Gaussian width) |
pub fn example_field(kind: FieldKind, params: &Params) -> Result<FieldSpec> {
    let (b1, b2) = match kind {
        FieldKind::Zero => {
            check_keys(params, &[])?;
            (vec![], vec![])
        }
        FieldKind::Constant => {
            check_keys(params, &["b"])?;
            let b = take(params, "b", kind)?;
            (vec![], vec![Component::Constant([0.0, 0.0, b])])
        }
        FieldKind::RadialOmega => {
            check_keys(params, &OMEGA_KEYS)?;
            if !OMEGA_KEYS.iter().any(|k| params.contains_key(*k)) {
                return Err(Error::config("field.params.omega", "required for `radial_omega`"));
            }
            (vec![], radial_part(params)?.into_iter().collect())
        }
        FieldKind::PerturbedEx2 => {
            let mut allowed = vec!["eps", "delta"];
            allowed.extend(OMEGA_KEYS);
            check_keys(params, &allowed)?;
            let eps = take(params, "eps", kind)?;
            let delta = take(params, "delta", kind)?;
            if !(delta > 0.0 && delta <= 2.0) {
                return Err(Error::config("field.params.delta", "must lie in (0, 2]"));
            }
            let swirl = Component::Swirl(SwirlProfile::Algebraic {
                amp: eps * EX2_AMPLITUDE,
                delta,
            });
            (vec![swirl], radial_part(params)?.into_iter().collect())
        }
        FieldKind::Decaying => {
            check_keys(params, &["a", "s"])?;
            let a = take(params, "a", kind)?;
            let s = take(params, "s", kind)?;
            if s <= 0.0 {
                return Err(Error::config("field.params.s", "must be positive"));
            }
            let swirl = Component::Swirl(SwirlProfile::Gaussian { amp: 0.5 * a, s });
            (vec![swirl], vec![])
        }
        FieldKind::Custom => {
            return Err(Error::config("field.kind", "use FieldSpec::custom for user maps"))
        }
    };
    FieldSpec::assemble(kind, params.clone(), b1, b2)
}

impl FieldSpec {
    fn assemble(kind: FieldKind, params: Params, b1: Vec<Component>, b2: Vec<Component>) -> Result<Self> {
        let mut spec = FieldSpec {
            kind,
            params,
            b1,
            b2,
            gauge: None,
        };
        if spec.b1.iter().chain(&spec.b2).all(Component::has_gauge) {
            let comps: Vec<Component> = spec.b1.iter().chain(&spec.b2).cloned().collect();
            let b: VectorMap = Arc::new(move |x| sum_components(&comps, x));
            spec.gauge = Some(poincare_gauge(&b)?);
        }
        Ok(spec)
    }

    /// A user field with explicit split. The gauge is built when `B` passes
    /// the divergence check and left empty otherwise.
    pub fn custom(b1: VectorMap, b2: VectorMap) -> Self {
        let b1 = vec![Component::Custom(b1)];
        let b2 = vec![Component::Custom(b2)];
        let comps: Vec<Component> = b1.iter().chain(&b2).cloned().collect();
        let b: VectorMap = Arc::new(move |x| sum_components(&comps, x));
        FieldSpec {
            kind: FieldKind::Custom,
            params: Params::new(),
            b1,
            b2,
            gauge: poincare_gauge(&b).ok(),
        }
    }

    pub fn b(&self, x: Vec3) -> Vec3 {
        add(self.b1(x), self.b2(x))
    }

    pub fn b1(&self, x: Vec3) -> Vec3 {
        sum_components(&self.b1, x)
    }

    pub fn b2(&self, x: Vec3) -> Vec3 {
        sum_components(&self.b2, x)
    }

    /// Gauge potential, `None` for fields that are not divergence free.
    pub fn a(&self, x: Vec3) -> Option<Vec3> {
        self.gauge.as_ref().map(|g| g(x))
    }

    pub fn gauge(&self) -> Option<&VectorMap> {
        self.gauge.as_ref()
    }

    pub fn b_map(&self) -> VectorMap {
        let comps: Vec<Component> = self.b1.iter().chain(&self.b2).cloned().collect();
        Arc::new(move |x| sum_components(&comps, x))
    }

    /// `field.kind` plus parameters, e.g. `perturbed_ex2(delta=1,eps=0.01)`.
    pub fn id(&self) -> String {
        let ps: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}({})", self.kind, ps.join(";"))
    }

    fn components(&self) -> impl Iterator<Item = &Component> {
        self.b1.iter().chain(&self.b2)
    }
}

fn sum_components(comps: &[Component], x: Vec3) -> Vec3 {
    comps.iter().fold([0.0; 3], |acc, c| add(acc, c.eval(x)))
}

/// Geometric panels used by the gauge line integral.
const GAUGE_LEVELS: u32 = 24;
const GAUGE_ORDER: usize = 16;

/// Poincaré gauge `A(x) = ∫₀¹ s B(sx) × x ds` by composite Gauss–Legendre
/// quadrature on geometric panels in `s`.
///
/// Rejects `B` whose central-difference divergence exceeds [`DIV_TOL`] on
/// [`field_sample_points`].
pub fn poincare_gauge(b: &VectorMap) -> Result<VectorMap> {
    let residual = field_sample_points()
        .into_iter()
        .map(|x| fd_divergence(b.as_ref(), x, fd_step(x)).abs())
        .fold(0.0, f64::max);
    if !(residual <= DIV_TOL) {
        return Err(Error::NonSolenoidal { residual });
    }
    let rule = PanelRule::new(GAUGE_ORDER);
    let b = b.clone();
    Ok(Arc::new(move |x: Vec3| {
        let v: V3 = rule.integrate_unit_geometric(GAUGE_LEVELS, |s| {
            V3(scale(s, cross(b(scale(s, x)), x)))
        });
        v.0
    }))
}

#[derive(Clone, Copy, Default)]
struct V3(Vec3);

impl std::ops::AddAssign for V3 {
    fn add_assign(&mut self, o: V3) {
        self.0 = add(self.0, o.0);
    }
}

impl std::ops::Mul<f64> for V3 {
    type Output = V3;
    fn mul(self, s: f64) -> V3 {
        V3(scale(s, self.0))
    }
}

/// Tangential component, radial derivative and Jacobian of a field.
#[derive(Clone, Debug)]
pub struct FieldGeometry {
    spec: FieldSpec,
}

pub fn field_geometry(spec: &FieldSpec) -> FieldGeometry {
    FieldGeometry { spec: spec.clone() }
}

fn nonzero(x: Vec3) -> Result<()> {
    if norm(x) == 0.0 {
        Err(Error::ExcludedPoint)
    } else {
        Ok(())
    }
}

impl FieldGeometry {
    /// `B_τ = x̂ ∧ B`.
    pub fn b_tau(&self, x: Vec3) -> Result<Vec3> {
        nonzero(x)?;
        Ok(self
            .spec
            .components()
            .fold([0.0; 3], |acc, c| add(acc, c.tangential(x))))
    }

    /// `∂_rB = (x̂·∇)B`.
    pub fn d_r_b(&self, x: Vec3) -> Result<Vec3> {
        nonzero(x)?;
        Ok(self
            .spec
            .components()
            .fold([0.0; 3], |acc, c| add(acc, c.radial_derivative(x))))
    }

    /// `DB[i][j] = ∂_j B_i`.
    pub fn db(&self, x: Vec3) -> Result<Mat3> {
        nonzero(x)?;
        let mut out = [[0.0; 3]; 3];
        for c in self.spec.components() {
            let j = c.jacobian(x);
            for i in 0..3 {
                for k in 0..3 {
                    out[i][k] += j[i][k];
                }
            }
        }
        Ok(out)
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }
}

/// Truncation window and designs for [`compute_constants`].
#[derive(Clone, Debug, PartialEq)]
pub struct QuadSettings {
    pub r_min: f64,
    pub r_max: f64,
    /// Log-grid density; the default gives 2000 shells on `[1e-3, 1e3]`.
    pub shells_per_decade: f64,
    /// Cube-sphere design level for shell suprema (0 → 26 directions).
    pub angular_level: u32,
    pub j_min: i32,
    pub j_max: i32,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings {
            r_min: 1e-3,
            r_max: 1e3,
            shells_per_decade: 2000.0 / 6.0,
            angular_level: 0,
            j_min: -10,
            j_max: 10,
        }
    }
}

impl QuadSettings {
    fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0) {
            return Err(Error::InvalidQuadrature(format!("r_min must be positive, got {}", self.r_min)));
        }
        if !(self.r_max > self.r_min) || !self.r_max.is_finite() {
            return Err(Error::InvalidQuadrature(format!(
                "r_max must be finite and exceed r_min, got {}",
                self.r_max
            )));
        }
        if !(self.shells_per_decade >= 1.0) {
            return Err(Error::InvalidQuadrature("shells_per_decade must be at least 1".into()));
        }
        if self.j_min > self.j_max {
            return Err(Error::InvalidQuadrature("j_min exceeds j_max".into()));
        }
        Ok(())
    }

    fn step(&self) -> f64 {
        std::f64::consts::LN_10 / self.shells_per_decade
    }

    /// Anchored log-grid index range covering `[lo, hi]`.
    fn index_range(&self, lo: f64, hi: f64) -> (i64, i64) {
        let d = self.step();
        ((lo.ln() / d).floor() as i64, (hi.ln() / d).ceil() as i64)
    }
}

/// Partial values above this are treated as divergent.
pub const DIVERGENCE_CAP: f64 = 1e6;
/// Relative growth under window doubling treated as divergent.
pub const DIVERGENCE_REL: f64 = 1e-2;

/// Window values of the constants without the divergence flag.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Truncated {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub b2_sup: f64,
    pub decay_sum: f64,
}

/// The field constants with their truncation metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub b2_sup: f64,
    pub decay_sum: f64,
    /// Plain values on the window, before the divergence flag. These are
    /// monotone under window enlargement.
    pub truncated: Truncated,
    /// Effective (grid-snapped) radial window.
    pub r_min: f64,
    pub r_max: f64,
    pub shells: usize,
    pub directions: usize,
    pub j_min: i32,
    pub j_max: i32,
}

impl FieldConstants {
    pub fn zero() -> Self {
        FieldConstants {
            c0: 0.0,
            c1: 0.0,
            c2: 0.0,
            b2_sup: 0.0,
            decay_sum: 0.0,
            truncated: Truncated::default(),
            r_min: 0.0,
            r_max: 0.0,
            shells: 0,
            directions: 0,
            j_min: 0,
            j_max: 0,
        }
    }

    /// Constants with the given values and empty metadata.
    pub fn from_values(c0: f64, c1: f64, c2: f64, b2_sup: f64) -> Self {
        FieldConstants {
            c0,
            c1,
            c2,
            b2_sup,
            ..Self::zero()
        }
    }
}

struct ShellSamples {
    r: Vec<f64>,
    tau2: Vec<f64>,
    dr: Vec<f64>,
    c0: Vec<f64>,
    b2: Vec<f64>,
}

fn shell_samples(spec: &FieldSpec, geom: &FieldGeometry, dirs: &[Vec3], k0: i64, k1: i64, d: f64) -> Result<ShellSamples> {
    let n = (k1 - k0 + 1) as usize;
    let mut s = ShellSamples {
        r: Vec::with_capacity(n),
        tau2: Vec::with_capacity(n),
        dr: Vec::with_capacity(n),
        c0: Vec::with_capacity(n),
        b2: Vec::with_capacity(n),
    };
    for k in k0..=k1 {
        let r = (k as f64 * d).exp();
        let (mut t, mut dr, mut c0, mut b2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for &u in dirs {
            let x = scale(r, u);
            t = t.max(norm(geom.b_tau(x)?));
            dr = dr.max(norm(geom.d_r_b(x)?));
            c0 = c0.max(r * r * norm(spec.b1(x)));
            b2 = b2.max(norm(spec.b2(x)));
        }
        s.r.push(r);
        s.tau2.push(t * t);
        s.dr.push(dr);
        s.c0.push(c0);
        s.b2.push(b2);
    }
    Ok(s)
}

fn flag(value: f64, enlarged: f64) -> f64 {
    if !value.is_finite() || !enlarged.is_finite() || value > DIVERGENCE_CAP || enlarged > DIVERGENCE_CAP {
        return f64::INFINITY;
    }
    if enlarged - value > DIVERGENCE_REL * value.max(1e-300) && enlarged - value > 1e-14 {
        return f64::INFINITY;
    }
    value
}

/// Computes `C₀, C₁, C₂, sup|B₂|` and the dyadic decay sum of `|A|`.
///
/// Radial integrals use the trapezoid rule on the anchored log grid
/// `r_k = e^{kΔ}`, so enlarging the window only adds nonnegative terms. Each
/// value is recomputed on the window doubled at both ends (one extra dyadic
/// shell for the decay sum); growth beyond [`DIVERGENCE_REL`] or a value
/// above [`DIVERGENCE_CAP`] is reported as `+∞`.
pub fn compute_constants(spec: &FieldSpec, geom: &FieldGeometry, quad: &QuadSettings) -> Result<FieldConstants> {
    quad.validate()?;
    let dirs = cube_sphere_directions(quad.angular_level);
    let d = quad.step();
    let (k0, k1) = quad.index_range(quad.r_min, quad.r_max);
    let (e0, e1) = quad.index_range(0.5 * quad.r_min, 2.0 * quad.r_max);
    let all = shell_samples(spec, geom, &dirs, e0, e1, d)?;
    let inner = ((k0 - e0) as usize)..=((k1 - e0) as usize);

    let c1_sq = |range: std::ops::RangeInclusive<usize>| {
        let r = &all.r[range.clone()];
        let y: Vec<f64> = range.clone().map(|i| all.r[i].powi(3) * all.tau2[i]).collect();
        trapezoid(r, &y).sqrt()
    };
    let c2 = |range: std::ops::RangeInclusive<usize>| {
        let r = &all.r[range.clone()];
        let y: Vec<f64> = range.clone().map(|i| all.r[i].powi(2) * all.dr[i]).collect();
        trapezoid(r, &y)
    };
    let sup = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let full = 0..=all.r.len() - 1;

    let decay = |j0: i32, j1: i32| -> f64 {
        let Some(gauge) = spec.gauge() else {
            return f64::INFINITY;
        };
        (j0..=j1)
            .map(|j| {
                let lo = 2f64.powi(j);
                let m = (0..=8)
                    .flat_map(|i| {
                        let r = lo * 2f64.powf(i as f64 / 8.0);
                        dirs.iter().map(move |&u| norm(gauge(scale(r, u))))
                    })
                    .fold(0.0, f64::max);
                lo * m
            })
            .sum()
    };

    let truncated = Truncated {
        c0: sup(&all.c0[inner.clone()]),
        c1: c1_sq(inner.clone()),
        c2: c2(inner.clone()),
        b2_sup: sup(&all.b2[inner.clone()]),
        decay_sum: decay(quad.j_min, quad.j_max),
    };
    Ok(FieldConstants {
        c0: flag(truncated.c0, sup(&all.c0)),
        c1: flag(truncated.c1, c1_sq(full.clone())),
        c2: flag(truncated.c2, c2(full)),
        b2_sup: flag(truncated.b2_sup, sup(&all.b2)),
        decay_sum: flag(truncated.decay_sum, decay(quad.j_min - 1, quad.j_max + 1)),
        truncated,
        r_min: (k0 as f64 * d).exp(),
        r_max: (k1 as f64 * d).exp(),
        shells: (k1 - k0 + 1) as usize,
        directions: dirs.len(),
        j_min: quad.j_min,
        j_max: quad.j_max,
    })
}

/// Outcome of the admissibility test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    PassStrict,
    Fail,
}

impl Verdict {
    pub fn passed(self) -> bool {
        !matches!(self, Verdict::Fail)
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::PassStrict => "pass_strict",
            Verdict::Fail => "fail",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Admissibility {
    pub verdict: Verdict,
    /// `1 − (C₁² + 3C₂ + C₁√(C₁² + 6C₂))`.
    pub margin: f64,
    pub reasons: Vec<String>,
}

/// Left side of the smallness condition on `C₁, C₂`.
pub fn condition_lhs(c1: f64, c2: f64) -> f64 {
    c1 * c1 + 3.0 * c2 + c1 * (c1 * c1 + 6.0 * c2).sqrt()
}

/// Checks `C₀ < 1/4`, the `C₁/C₂` condition and the massless rule.
///
/// The verdict is `pass_strict` when the condition holds strictly, `pass`
/// when it holds with equality and `strict` is off, `fail` otherwise.
pub fn admissibility_check(c: &FieldConstants, m: f64, strict: bool) -> Admissibility {
    let mut reasons = Vec::new();
    for (name, v) in [("C0", c.c0), ("C1", c.c1), ("C2", c.c2), ("B2_sup", c.b2_sup)] {
        if !v.is_finite() {
            reasons.push(format!("{name} is infinite"));
        }
    }
    if !(c.c0 < 0.25) {
        reasons.push(format!("C0 = {} violates C0 < 1/4", c.c0));
    }
    let lhs = condition_lhs(c.c1, c.c2);
    let margin = 1.0 - lhs;
    let strict_ok = lhs < 1.0;
    if !(lhs <= 1.0) || (strict && !strict_ok) {
        reasons.push(format!("C1^2 + 3 C2 + C1 sqrt(C1^2 + 6 C2) = {lhs} exceeds 1"));
    }
    if m == 0.0 && c.b2_sup > 0.0 {
        reasons.push(format!("massless case requires B2 = 0, sup|B2| = {}", c.b2_sup));
    }
    let verdict = if !reasons.is_empty() {
        Verdict::Fail
    } else if strict_ok {
        Verdict::PassStrict
    } else {
        Verdict::Pass
    };
    Admissibility {
        verdict,
        margin,
        reasons,
    }
}

/// CSV header for [`constants_csv_row`].
pub const CONSTANTS_CSV_HEADER: &str = "field_id,C0,C1,C2,B2_sup,decay_sum,verdict,margin,r_min,r_max,shells,directions,j_min,j_max";

pub fn constants_csv_row(id: &str, c: &FieldConstants, adm: &Admissibility) -> String {
    format!(
        "{id},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        c.c0, c.c1, c.c2, c.b2_sup, c.decay_sum, adm.verdict, adm.margin, c.r_min, c.r_max, c.shells, c.directions, c.j_min, c.j_max
    )
}
