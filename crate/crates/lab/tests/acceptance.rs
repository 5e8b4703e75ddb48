//! Acceptance report: one PASS/FAIL line per criterion on stderr.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use magdirac::algebra::{algebra_self_test, build_dirac_basis, clifford_random_check, spin_operator};
use magdirac::battery::{battery_data, battery_operators, sampled_c0, DATA_ORDER};
use magdirac::field::*;
use magdirac::lattice::{commutator_identity_residual, square_identity_residual, CommutatorResiduals, Grid, OperatorHandle, SpinorField};
use magdirac::multiplier::{make_multiplier, optimal_m};
use magdirac::propagator::{assemble_dense, evolve_dense, evolve_krylov, uniform_times, DensePropagator, Trajectory};
use magdirac::quadrature::SphereRule;
use magdirac::virial::*;
use magdirac_lab::config::ExperimentConfig;
use magdirac_lab::run::run_experiment;
use num_complex::Complex64 as C;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CLIFFORD_TOL: f64 = 1e-12;
const SQUARE_TOL: f64 = 1e-8;
const ALIASING_GAP: f64 = 10.0;
const COMMUTATOR_TOL: f64 = 1e-6;
const VIRIAL_TOL: f64 = 5e-3;
const ORDER_RATIO: (f64, f64) = (3.0, 5.0);
const THETA_TOL: f64 = 1e-4;
const HARDY_IDENTITY_TOL: f64 = 1e-8;
const FORM_TOL: f64 = 1e-12;
const MARGIN_MIN: f64 = 0.9;
const RADIAL_TOL: f64 = 1e-10;
const PROPAGATOR_TOL: f64 = 1e-7;
const DRIFT_TOL: f64 = 1e-7;
const PLATEAU_SHRINK: f64 = 2.0;
const ENERGY_RATIO_TOL: f64 = 1e-7;
const WAVE_RATIO_SPREAD: f64 = 0.2;

const SPINOR: [C; 4] = [
    C { re: 1.0, im: 0.0 },
    C { re: 0.0, im: 0.3 },
    C { re: 0.2, im: 0.0 },
    C { re: 0.0, im: 0.0 },
];

fn report(id: u32, title: &str, pass: bool, detail: &str, elapsed: Duration) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "acceptance [{status}] {id:>2} {title}: {detail} ({:.1} s)",
        elapsed.as_secs_f64()
    );
}

fn gaussian(g: Grid, sigma: f64) -> SpinorField {
    SpinorField::gaussian(g, g.center, sigma, SPINOR)
}

fn oracle_grid() -> Grid {
    Grid::centered(8, 12.0).unwrap()
}

#[test]
fn criterion_01_algebraic_exactness() {
    let t = Instant::now();
    let basis = build_dirac_basis();
    let spin = spin_operator(&basis);
    let algebra = algebra_self_test(&basis, &spin).max_residual();
    let clifford = clifford_random_check(&basis, &spin, 100, &mut ChaCha8Rng::seed_from_u64(1));
    let elapsed = t.elapsed();
    let pass = algebra < CLIFFORD_TOL && clifford < CLIFFORD_TOL && elapsed < Duration::from_secs(1);
    report(
        1,
        "algebraic exactness",
        pass,
        &format!("basis identities {algebra:.1e}, clifford over 100 triples {clifford:.1e} (tol {CLIFFORD_TOL:.0e}, < 1 s)"),
        elapsed,
    );
    assert!(pass);
}

fn worst_square(n: usize) -> f64 {
    let g = Grid::centered(n, 16.0).unwrap();
    let mut worst: f64 = 0.0;
    for (_, op) in battery_operators(g, 0.7).unwrap() {
        for (_, u) in battery_data(g, DATA_ORDER) {
            worst = worst.max(square_identity_residual(&u, &op).unwrap());
        }
    }
    worst
}

#[test]
fn criterion_02_squared_operator_identity() {
    let t = Instant::now();
    let fine = worst_square(16);
    let coarse = worst_square(8);
    let elapsed = t.elapsed();
    let pass = fine < SQUARE_TOL && coarse >= ALIASING_GAP * fine && elapsed < Duration::from_secs(120);
    report(
        2,
        "squared-operator identity",
        pass,
        &format!(
            "3x3 battery max residual {fine:.1e} at N=16 (tol {SQUARE_TOL:.0e}), {coarse:.1e} at N=8, gap {:.1e}x (need {ALIASING_GAP}x)",
            coarse / fine
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_03_commutator_identities() {
    let t = Instant::now();
    let g = Grid::centered(16, 16.0).unwrap();
    let phi = make_multiplier(4.0, 0.1, 2.0 * g.h()).unwrap().samples(g);
    let mut w = CommutatorResiduals::default();
    for (_, op) in battery_operators(g, 0.7).unwrap() {
        for (_, u) in battery_data(g, DATA_ORDER) {
            let r = commutator_identity_residual(&u, &op, &phi).unwrap();
            w.first = w.first.max(r.first);
            w.spin = w.spin.max(r.spin);
            w.double = w.double.max(r.double);
            w.radial_form = w.radial_form.max(r.radial_form);
        }
    }
    let elapsed = t.elapsed();
    let worst = w.first.max(w.spin).max(w.double).max(w.radial_form);
    let pass = worst < COMMUTATOR_TOL && elapsed < Duration::from_secs(120);
    report(
        3,
        "commutator identities",
        pass,
        &format!(
            "N=16 battery, mollified R=4 M=0.1: first {:.1e}, spin {:.1e}, double {:.1e}, radial form {:.1e} (tol {COMMUTATOR_TOL:.0e})",
            w.first, w.spin, w.double, w.radial_form
        ),
        elapsed,
    );
    assert!(pass);
}

fn free_massive_dense() -> DensePropagator {
    assemble_dense(&OperatorHandle::free(oracle_grid(), 1.0).unwrap()).unwrap()
}

#[test]
fn criterion_04_virial_identity() {
    let t = Instant::now();
    let p = free_massive_dense();
    let f = gaussian(oracle_grid(), 1.5);
    let phi = make_multiplier(4.0, 0.0, 0.0).unwrap();
    let residual = |tau: f64| {
        let tr = evolve_dense(&p, &f, &uniform_times(1.0, tau).unwrap()).unwrap();
        virial_terms(&tr, &phi, &SphereRule::with_level(2)).unwrap().max_residual
    };
    let (coarse, fine) = (residual(1e-2), residual(5e-3));
    let ratio = coarse / fine;
    let elapsed = t.elapsed();
    let pass = coarse < VIRIAL_TOL
        && (ORDER_RATIO.0..=ORDER_RATIO.1).contains(&ratio)
        && elapsed < Duration::from_secs(600);
    report(
        4,
        "virial identity",
        pass,
        &format!(
            "dense N=8 free m=1, T=1: residual {coarse:.2e} at tau=1e-2 (tol {VIRIAL_TOL:.0e}), {fine:.2e} at tau=5e-3, ratio {ratio:.2} (need [{}, {}])",
            ORDER_RATIO.0, ORDER_RATIO.1
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_05_theta_calculus() {
    let t = Instant::now();
    let g = oracle_grid();
    let (_, op) = battery_operators(g, 0.5).unwrap().remove(1);
    let p = assemble_dense(&op).unwrap();
    let f = gaussian(g, 1.5);
    let phi = make_multiplier(3.0, 0.1, 2.0 * g.h()).unwrap().samples(g);
    let errors = |tau: f64| {
        let tr = evolve_dense(&p, &f, &uniform_times(10.0 * tau, tau).unwrap()).unwrap();
        let th = theta_functionals(&tr, &phi).unwrap();
        (
            centered_difference_error(&th.times, &th.theta, &th.theta_dot).unwrap(),
            centered_difference_error(&th.times, &th.theta_dot, &th.theta_ddot).unwrap(),
        )
    };
    let (a1, b1) = errors(2e-3);
    let (a2, b2) = errors(1e-3);
    let (ra, rb) = (a1 / a2, b1 / b2);
    let order = |r: f64| (ORDER_RATIO.0..=ORDER_RATIO.1).contains(&r);
    let pass = a2 < THETA_TOL && b2 < THETA_TOL && order(ra) && order(rb);
    report(
        5,
        "theta calculus",
        pass,
        &format!(
            "dense N=8 battery field, tau=1e-3: FD(Theta) {a2:.1e}, FD(Theta') {b2:.1e} (tol {THETA_TOL:.0e}); halving ratios {ra:.2}, {rb:.2}"
        ),
        t.elapsed(),
    );
    assert!(pass);
}

#[test]
fn criterion_06_hardy() {
    let t = Instant::now();
    let g = Grid::centered(16, 16.0).unwrap();
    let mut identity: f64 = 0.0;
    let mut min_margin = f64::INFINITY;
    let mut all_hold = true;
    for (_, op) in battery_operators(g, 0.8).unwrap() {
        let c0 = sampled_c0(&op);
        let constants = FieldConstants::from_values(c0, 0.0, 0.0, 0.0);
        for (_, f) in battery_data(g, DATA_ORDER) {
            let eps = hardy_epsilon(c0).unwrap_or(0.5);
            let r = hardy_check(&f, &op, &constants, eps).unwrap();
            identity = identity.max(r.identity_residual);
            if c0 < 0.25 {
                all_hold &= r.holds && r.margin >= 0.0;
                min_margin = min_margin.min(r.margin);
            }
        }
    }
    let pass = identity < HARDY_IDENTITY_TOL && all_hold;
    report(
        6,
        "Hardy inequality",
        pass,
        &format!("identity residual {identity:.1e} (tol {HARDY_IDENTITY_TOL:.0e}); inequality holds on C0 < 1/4 members, min margin {min_margin:.2e}"),
        t.elapsed(),
    );
    assert!(pass);
}

#[test]
fn criterion_07_quadratic_form() {
    let t = Instant::now();
    let mut worst = f64::INFINITY;
    let mut admissible = 0;
    for i in 0..=20 {
        for j in 0..=20 {
            let (c1, c2) = (0.5 * i as f64 / 20.0, 0.35 * j as f64 / 20.0);
            let adm = admissibility_check(&FieldConstants::from_values(0.0, c1, c2, 0.0), 1.0, false);
            if adm.verdict.passed() {
                admissible += 1;
                worst = worst.min(quadratic_form_check(optimal_m(c1, c2), c1, c2, 101).min);
            }
        }
    }
    let fail = quadratic_form_check(optimal_m(1.0, 0.0), 1.0, 0.0, 101).min;
    let pass = worst >= -FORM_TOL && fail < 0.0;
    report(
        7,
        "quadratic-form positivity",
        pass,
        &format!("min {worst:.1e} over {admissible} admissible (C1, C2) with optimal M (floor -{FORM_TOL:.0e}); C1=1, C2=0 gives {fail:.2e}"),
        t.elapsed(),
    );
    assert!(pass);
}

fn params(kv: &[(&str, f64)]) -> Params {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn constants(spec: &FieldSpec) -> FieldConstants {
    compute_constants(spec, &field_geometry(spec), &QuadSettings::default()).unwrap()
}

#[test]
fn criterion_08_field_constants() {
    let t = Instant::now();
    let ex2 = example_field(FieldKind::PerturbedEx2, &params(&[("eps", 0.01), ("delta", 1.0)])).unwrap();
    let adm = admissibility_check(&constants(&ex2), 1.0, false);
    let constant = constants(&example_field(FieldKind::Constant, &params(&[("b", 0.5)])).unwrap());
    let radial = example_field(FieldKind::RadialOmega, &params(&[("omega", 0.7)])).unwrap();
    let geom = field_geometry(&radial);
    let pointwise = field_sample_points()
        .into_iter()
        .map(|x| norm(geom.b_tau(x).unwrap()).max(norm(geom.d_r_b(x).unwrap())))
        .fold(0.0, f64::max);
    let rc = constants(&radial);
    let pass = adm.verdict.passed()
        && adm.margin > MARGIN_MIN
        && constant.c1 == f64::INFINITY
        && pointwise < RADIAL_TOL
        && rc.c1.abs() < RADIAL_TOL
        && rc.c2.abs() < RADIAL_TOL;
    report(
        8,
        "field constants",
        pass,
        &format!(
            "perturbed_ex2 eps=0.01 delta=1: {} margin {:.4} (need > {MARGIN_MIN}); constant C1 = {}; radial |B_tau|,|d_r B| {pointwise:.1e}, C1 {:.1e}, C2 {:.1e} (tol {RADIAL_TOL:.0e})",
            adm.verdict, adm.margin, constant.c1, rc.c1, rc.c2
        ),
        t.elapsed(),
    );
    assert!(pass);
}

#[test]
fn criterion_09_propagator_cross_validation() {
    let t = Instant::now();
    let g = oracle_grid();
    let ops = battery_operators(g, 0.5).unwrap();
    let times = uniform_times(2.0, 0.25).unwrap();
    let mut diff: f64 = 0.0;
    for (_, op) in &ops {
        let p = assemble_dense(op).unwrap();
        for (_, f) in battery_data(g, 1) {
            let d = evolve_dense(&p, &f, &times).unwrap();
            let k = evolve_krylov(op, &f, &times, 1e-9).unwrap();
            diff = diff.max(d.max_discrepancy(&k).unwrap());
        }
    }
    let mut drift: f64 = 0.0;
    for (_, op) in &ops {
        for (_, f) in battery_data(g, 1) {
            let (dn, de) = evolve_krylov(op, &f, &uniform_times(10.0, 0.5).unwrap(), 1e-9).unwrap().drift();
            drift = drift.max(dn).max(de);
        }
    }
    let pass = diff < PROPAGATOR_TOL && drift < DRIFT_TOL;
    report(
        9,
        "propagator cross-validation",
        pass,
        &format!("N=8 battery dense vs Krylov {diff:.1e} (tol {PROPAGATOR_TOL:.0e}); norm and energy drift over T=10 {drift:.1e} (tol {DRIFT_TOL:.0e})"),
        t.elapsed(),
    );
    assert!(pass);
}

const HORIZONS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

/// Massless flow of a narrow Gaussian on the `N = 18`, `L = 12` box.
fn smoothing_flow(field: Option<&FieldSpec>) -> Trajectory {
    let g = Grid::centered(18, 12.0).unwrap();
    let op = match field {
        Some(spec) => OperatorHandle::from_field(g, spec, 0.0, true).unwrap(),
        None => OperatorHandle::free(g, 0.0).unwrap(),
    };
    evolve_krylov(&op, &gaussian(g, 0.4), &uniform_times(8.0, 0.1).unwrap(), 1e-9).unwrap()
}

fn plateau(ratios: &[f64]) -> bool {
    let inc: Vec<f64> = ratios.windows(2).map(|w| w[1] - w[0]).collect();
    inc.iter().all(|d| *d >= 0.0) && inc.windows(2).all(|w| w[1] * PLATEAU_SHRINK <= w[0])
}

#[test]
fn criterion_10_smoothing_surrogate() {
    let t = Instant::now();
    let ex2 = example_field(FieldKind::PerturbedEx2, &params(&[("eps", 0.01), ("delta", 1.0)])).unwrap();
    let mut pass = true;
    let mut details = vec![];
    let mut radii = vec![];
    for (label, field) in [("free", None), ("perturbed_ex2", Some(&ex2))] {
        let tr = smoothing_flow(field);
        let reps = smoothing_norms_at(&tr, &HORIZONS, &SphereRule::with_level(2)).unwrap();
        let ratios: Vec<f64> = reps.iter().map(|r| r.ratio_l2).collect();
        pass &= plateau(&ratios);
        radii = reps[0].radii.clone();
        details.push(format!(
            "{label} {}",
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join("/")
        ));
    }
    report(
        10,
        "smoothing surrogate",
        pass,
        &format!(
            "sup_R X(T)/|f|^2 at T=1/2/4/8: {}; R in {{{}}}; increments must shrink {PLATEAU_SHRINK}x per doubling",
            details.join("; "),
            radii.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
        ),
        t.elapsed(),
    );
    assert!(pass);
}

#[test]
fn criterion_11_strichartz_surrogate() {
    let t = Instant::now();
    let tr = smoothing_flow(None);
    let energy = strichartz_ratio(&tr, f64::INFINITY, 2.0).unwrap().ratio;
    let w4 = strichartz_ratio(&tr.truncated(4.0).unwrap(), 4.0, 4.0).unwrap().ratio;
    let w8 = strichartz_ratio(&tr, 4.0, 4.0).unwrap().ratio;
    let spread = (w8 - w4).abs() / w4;
    let schrodinger = check_admissible(4.0, 4.0, AdmissibleClass::Schrodinger).unwrap_err().to_string();
    let wave = check_admissible(3.0, 3.0, AdmissibleClass::Wave).unwrap_err().to_string();
    let endpoint = check_admissible(2.0, f64::INFINITY, AdmissibleClass::Wave).unwrap_err().to_string();
    let cited = schrodinger.contains("2/p + 3/q") && wave.contains("2/p + 2/q") && endpoint.contains("2 < p");
    let pass = (energy - 1.0).abs() < ENERGY_RATIO_TOL && spread < WAVE_RATIO_SPREAD && cited;
    report(
        11,
        "Strichartz surrogate",
        pass,
        &format!(
            "(inf,2) ratio {energy:.12} (tol {ENERGY_RATIO_TOL:.0e}); (4,4) ratio {w4:.4} at T=4, {w8:.4} at T=8, change {:.1}% (need < {:.0}%); inadmissible pairs cite their relation: {cited}",
            100.0 * spread,
            100.0 * WAVE_RATIO_SPREAD
        ),
        t.elapsed(),
    );
    assert!(pass);
}

#[test]
fn criterion_12_determinism() {
    let t = Instant::now();
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/free_massive.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    run_experiment(&cfg, &first).unwrap();
    // The second run starts from the resolved config echoed by the first.
    let echoed = ExperimentConfig::load(&first.join("config.toml")).unwrap();
    let second = dir.path().join("second");
    run_experiment(&echoed, &second).unwrap();
    let csvs = |d: &std::path::Path| -> BTreeMap<String, Vec<u8>> {
        std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
            .collect()
    };
    let (a, b) = (csvs(&first), csvs(&second));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    let pass = !a.is_empty() && a.len() == b.len() && differing.is_empty();
    report(
        12,
        "determinism",
        pass,
        &format!("{} CSVs from two runs of the same config, {} differ", a.len(), differing.len()),
        t.elapsed(),
    );
    assert!(pass, "{differing:?}");
}
