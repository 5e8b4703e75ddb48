//! Built-in verification suite.

use std::fmt;
use std::time::{Duration, Instant};

use magdirac::algebra::{algebra_self_test, build_dirac_basis, clifford_random_check, literal_wedge_spin, spin_operator, MatrixVector};
use magdirac::battery::{battery_data, battery_operators, sampled_c0, trig_multiplier, DATA_ORDER};
use magdirac::field::{admissibility_check, FieldConstants};
use magdirac::lattice::{commutator_identity_residual, square_identity_residual, Grid, OperatorHandle, SpinorField};
use magdirac::multiplier::{make_multiplier, optimal_m};
use magdirac::propagator::{assemble_dense, evolve_dense, evolve_krylov, uniform_times};
use magdirac::quadrature::SphereRule;
use magdirac::virial::{hardy_check, hardy_epsilon, quadratic_form_check, virial_terms};
use num_complex::Complex64 as C;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};

/// Soft budget of the full level.
pub const FULL_BUDGET: Duration = Duration::from_secs(15 * 60);

const CLIFFORD_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

impl std::str::FromStr for Level {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            _ => Err(LabError::validation("level", format!("expected `fast` or `full`, got `{s}`"))),
        }
    }
}

/// Fault injection for mutation testing of the suite.
#[derive(Clone, Copy, Debug, Default)]
pub struct Hooks {
    /// Use `S = −Σ/2` in place of the library's spin operator.
    pub flip_spin: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {:<28} {:.3e} (tol {:.1e})", self.name, self.value, self.tolerance)?;
        if !self.detail.is_empty() {
            write!(f, "  {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Summary {
    pub level: Level,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn below(name: &'static str, value: f64, tolerance: f64, detail: impl Into<String>) -> Check {
    Check {
        name,
        value,
        tolerance,
        passed: value < tolerance,
        detail: detail.into(),
    }
}

pub fn verify_suite(level: Level, hooks: Hooks) -> Result<Summary> {
    let start = Instant::now();
    let basis = build_dirac_basis();
    let spin = if hooks.flip_spin { literal_wedge_spin(&basis) } else { spin_operator(&basis) };
    let mut checks = vec![
        below("algebra_identities", algebra_self_test(&basis, &spin).max_residual(), 1e-12, ""),
        below(
            "clifford_product_check",
            clifford_random_check(&basis, &spin, 100, &mut ChaCha8Rng::seed_from_u64(CLIFFORD_SEED)),
            1e-12,
            "100 random triples",
        ),
        multiplier_profile()?,
    ];
    checks.extend(quadratic_form_checks());
    checks.push(square_identity(&spin)?);
    checks.push(commutators(&spin)?);
    checks.push(radial_spin_form(&spin)?);
    if level == Level::Full {
        checks.push(virial_oracle()?);
        checks.push(hardy_battery(&spin)?);
        checks.extend(propagators()?);
    }
    let elapsed = start.elapsed();
    let mut warnings = vec![];
    if level == Level::Full && elapsed > FULL_BUDGET {
        warnings.push(format!(
            "full suite took {:.0} s, over the {} s budget",
            elapsed.as_secs_f64(),
            FULL_BUDGET.as_secs()
        ));
    }
    Ok(Summary {
        level,
        checks,
        elapsed,
        warnings,
    })
}

fn multiplier_profile() -> Result<Check> {
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    for m in [0.0, 0.3] {
        let phi = make_multiplier(4.0, m, 0.0)?;
        for r in [0.5, 1.5, 2.5, 3.5, 5.0, 7.0, 11.0] {
            let fd1 = (phi.phi_exact(r + h) - phi.phi_exact(r - h)) / (2.0 * h);
            let fd2 = (phi.d1_exact(r + h) - phi.d1_exact(r - h)) / (2.0 * h);
            let lap = phi.d2_exact(r) + 2.0 * phi.d1_exact(r) / r;
            worst = worst
                .max((fd1 - phi.d1_exact(r)).abs())
                .max((fd2 - phi.d2_exact(r)).abs())
                .max((lap - phi.lap_exact(r)).abs());
        }
        let (a, b) = (4.0 - 1e-12, 4.0 + 1e-12);
        worst = worst
            .max((phi.phi_exact(a) - phi.phi_exact(b)).abs())
            .max((phi.d1_exact(a) - phi.d1_exact(b)).abs());
    }
    Ok(below("multiplier_profile", worst, 1e-6, "derivatives, Laplacian, C¹ at R"))
}

fn quadratic_form_checks() -> Vec<Check> {
    let mut worst: f64 = 0.0;
    for (c1, c2) in [(0.0, 0.0), (0.1, 0.05), (0.2, 0.1), (0.05, 0.2)] {
        let adm = admissibility_check(&FieldConstants::from_values(0.0, c1, c2, 0.0), 1.0, false);
        if adm.verdict.passed() {
            worst = worst.max(0.0 - quadratic_form_check(optimal_m(c1, c2), c1, c2, 101).min);
        }
    }
    let fail = quadratic_form_check(optimal_m(1.0, 0.0), 1.0, 0.0, 101).min;
    vec![
        below("quadratic_form_positive", worst, 1e-12, "optimal M on admissible constants"),
        Check {
            name: "quadratic_form_fail_case",
            value: fail,
            tolerance: 0.0,
            passed: fail < 0.0,
            detail: "C1=1, C2=0 must go negative".into(),
        },
    ]
}

fn battery(n: usize, m: f64, spin: &MatrixVector) -> Result<(Grid, Vec<(&'static str, OperatorHandle)>, Vec<(&'static str, SpinorField)>)> {
    let g = Grid::centered(n, 16.0)?;
    let ops = battery_operators(g, m)?
        .into_iter()
        .map(|(name, op)| (name, op.with_spin(*spin)))
        .collect();
    Ok((g, ops, battery_data(g, DATA_ORDER)))
}

fn square_identity(spin: &MatrixVector) -> Result<Check> {
    let (_, ops, data) = battery(16, 0.7, spin)?;
    let mut worst = (0.0, "");
    for (name, op) in &ops {
        for (_, u) in &data {
            let r = square_identity_residual(u, op)?;
            if r > worst.0 {
                worst = (r, name);
            }
        }
    }
    Ok(below("square_identity", worst.0, 1e-8, format!("N=16 battery, worst {}", worst.1)))
}

fn commutators(spin: &MatrixVector) -> Result<Check> {
    let (g, ops, data) = battery(20, 0.7, spin)?;
    let phi = trig_multiplier(g);
    let mut worst: f64 = 0.0;
    for (_, op) in &ops {
        for (_, u) in &data {
            let r = commutator_identity_residual(u, op, &phi)?;
            worst = worst.max(r.first).max(r.spin);
            if op.b_sup() == 0.0 {
                worst = worst.max(r.double);
            }
        }
    }
    Ok(below("commutator_identities", worst, 1e-10, "N=20 battery, band-limited multiplier"))
}

fn radial_spin_form(spin: &MatrixVector) -> Result<Check> {
    let (g, ops, data) = battery(16, 0.7, spin)?;
    let phi = make_multiplier(4.0, 0.1, 2.0 * g.h())?.samples(g);
    let mut worst: f64 = 0.0;
    for (_, op) in &ops {
        for (_, u) in &data {
            worst = worst.max(commutator_identity_residual(u, op, &phi)?.radial_form);
        }
    }
    Ok(below("radial_spin_form", worst, 1e-12, "N=16 battery, mollified multiplier"))
}

fn gaussian(g: Grid, sigma: f64) -> SpinorField {
    let v = [C::new(1.0, 0.0), C::new(0.0, 0.3), C::new(0.2, 0.0), C::new(0.0, 0.0)];
    SpinorField::gaussian(g, g.center, sigma, v)
}

fn virial_oracle() -> Result<Check> {
    let g = Grid::centered(8, 12.0)?;
    let op = OperatorHandle::free(g, 1.0)?;
    let p = assemble_dense(&op)?;
    let tr = evolve_dense(&p, &gaussian(g, 1.5), &uniform_times(1.0, 1e-2)?)?;
    let rep = virial_terms(&tr, &make_multiplier(4.0, 0.0, 0.0)?, &SphereRule::with_level(2))?;
    Ok(below("virial_dense_oracle", rep.max_residual, 5e-3, "N=8 free massive, T=1, tau=1e-2"))
}

fn hardy_battery(spin: &MatrixVector) -> Result<Check> {
    let (_, ops, data) = battery(16, 0.8, spin)?;
    let mut worst: f64 = 0.0;
    let mut failed = vec![];
    for (name, op) in &ops {
        let c0 = sampled_c0(op);
        let constants = FieldConstants::from_values(c0, 0.0, 0.0, 0.0);
        for (_, f) in &data {
            let eps = hardy_epsilon(c0).unwrap_or(0.5);
            let r = hardy_check(f, op, &constants, eps)?;
            worst = worst.max(r.identity_residual);
            if c0 < 0.25 && !(r.holds && r.margin >= 0.0) {
                failed.push(*name);
            }
        }
    }
    let mut c = below("hardy_battery", worst, 1e-8, "identity residual; inequality on C0 < 1/4");
    if !failed.is_empty() {
        c.passed = false;
        c.detail = format!("inequality fails on {}", failed.join(", "));
    }
    Ok(c)
}

fn propagators() -> Result<Vec<Check>> {
    let g = Grid::centered(8, 12.0)?;
    let ops = battery_operators(g, 0.5)?;
    let times = uniform_times(2.0, 0.25)?;
    let mut diff: f64 = 0.0;
    for (_, op) in &ops {
        let p = assemble_dense(op)?;
        for (_, f) in battery_data(g, 1) {
            let d = evolve_dense(&p, &f, &times)?;
            let k = evolve_krylov(op, &f, &times, 1e-9)?;
            diff = diff.max(d.max_discrepancy(&k)?);
        }
    }
    let (_, f) = battery_data(g, 1).remove(2);
    let tr = evolve_krylov(&ops[0].1, &f, &uniform_times(10.0, 0.5)?, 1e-9)?;
    let (dn, de) = tr.drift();
    Ok(vec![
        below("dense_krylov_agreement", diff, 1e-7, "N=8 battery"),
        below("norm_energy_drift", dn.max(de), 1e-7, "Krylov, T=10"),
    ])
}
