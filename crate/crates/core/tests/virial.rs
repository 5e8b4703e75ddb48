use std::f64::consts::PI;

use magdirac::battery::{battery_data, battery_operators, sampled_c0, DATA_ORDER};
use magdirac::field::{admissibility_check, FieldConstants};
use magdirac::lattice::{Grid, MultiplierSamples, OperatorHandle, SpinorField};
use magdirac::multiplier::{make_multiplier, optimal_m};
use magdirac::propagator::*;
use magdirac::quadrature::SphereRule;
use magdirac::virial::*;
use magdirac::Error;
use num_complex::Complex64 as C;
use proptest::prelude::*;

const SPINOR: [C; 4] = [
    C { re: 1.0, im: 0.0 },
    C { re: 0.0, im: 0.3 },
    C { re: 0.2, im: 0.0 },
    C { re: 0.0, im: 0.0 },
];

fn centered_gaussian(g: Grid, sigma: f64) -> SpinorField {
    SpinorField::gaussian(g, g.center, sigma, SPINOR)
}

// Θ calculus --------------------------------------------------------------

fn theta_errors(tau: f64) -> (f64, f64) {
    let g = Grid::centered(6, 9.0).unwrap();
    let (_, op) = battery_operators(g, 0.5).unwrap().remove(1);
    let p = assemble_dense(&op).unwrap();
    let f = centered_gaussian(g, 1.2);
    let tr = evolve_dense(&p, &f, &uniform_times(10.0 * tau, tau).unwrap()).unwrap();
    let phi = make_multiplier(2.0, 0.1, 2.0 * g.h()).unwrap().samples(g);
    let th = theta_functionals(&tr, &phi).unwrap();
    (
        centered_difference_error(&th.times, &th.theta, &th.theta_dot).unwrap(),
        centered_difference_error(&th.times, &th.theta_dot, &th.theta_ddot).unwrap(),
    )
}

#[test]
fn theta_derivatives_match_centered_differences_to_second_order() {
    let (a1, b1) = theta_errors(2e-3);
    let (a2, b2) = theta_errors(1e-3);
    assert!(a2 < 1e-4 && b2 < 1e-4, "{a2} {b2}");
    assert!((3.0..=5.0).contains(&(a1 / a2)), "{a1} {a2}");
    assert!((3.0..=5.0).contains(&(b1 / b2)), "{b1} {b2}");
}

#[test]
fn constant_multiplier_gives_energy_and_zero_rate() {
    let g = Grid::centered(8, 12.0).unwrap();
    let (_, op) = battery_operators(g, 0.4).unwrap().remove(0);
    let f = centered_gaussian(g, 1.5);
    let tr = evolve_krylov(&op, &f, &[0.0, 0.3, 0.6], 1e-10).unwrap();
    let th = theta_functionals(&tr, &MultiplierSamples::constant(g, 1.0)).unwrap();
    for (n, u) in tr.states.iter().enumerate() {
        let hu = magdirac::lattice::dirac_apply(u, &op).unwrap().norm_sqr();
        let want = tr.dstates[n].norm_sqr() + hu;
        assert!((th.theta[n] - want).abs() < 1e-10 * want);
        assert!(th.theta_dot[n].abs() < 1e-10 * want);
        assert!(th.theta_ddot[n].abs() < 1e-10 * want);
    }
}

// Virial identity ---------------------------------------------------------

fn free_massive_virial(tau: f64) -> VirialReport {
    let g = Grid::centered(8, 12.0).unwrap();
    let op = OperatorHandle::free(g, 1.0).unwrap();
    let f = centered_gaussian(g, 1.5);
    let tr = evolve_krylov(&op, &f, &uniform_times(1.0, tau).unwrap(), 1e-12).unwrap();
    let phi = make_multiplier(4.0, 0.0, 0.0).unwrap();
    virial_terms(&tr, &phi, &SphereRule::with_level(2)).unwrap()
}

#[test]
fn free_massive_virial_residual_is_small() {
    let rep = free_massive_virial(1e-2);
    assert!(rep.max_residual < 5e-3, "{}", rep.max_residual);
    assert!(rep.b_tau.iter().chain(&rep.spin_db).all(|v| *v == 0.0));
    assert!(rep.warning.is_none());
    assert!(rep.momentum_rate[..2].iter().all(Option::is_none));
    assert!(rep.residual[2..rep.times.len() - 2].iter().all(Option::is_some));
}

#[test]
fn virial_warns_when_sphere_reaches_the_box_edge() {
    let g = Grid::centered(8, 8.0).unwrap();
    let op = OperatorHandle::free(g, 1.0).unwrap();
    let tr = evolve_krylov(&op, &centered_gaussian(g, 1.0), &uniform_times(0.4, 0.1).unwrap(), 1e-10).unwrap();
    let rep = virial_terms(&tr, &make_multiplier(3.5, 0.0, 0.0).unwrap(), &SphereRule::with_level(1)).unwrap();
    assert!(rep.warning.is_some());
    let short = evolve_krylov(&op, &centered_gaussian(g, 1.0), &[0.0, 0.1, 0.2], 1e-10).unwrap();
    assert!(matches!(
        virial_terms(&short, &make_multiplier(2.0, 0.0, 0.0).unwrap(), &SphereRule::with_level(1)),
        Err(Error::ShortTrajectory { .. })
    ));
}

#[test]
fn radial_spin_term_matches_full_jacobian_form() {
    let g = Grid::centered(12, 12.0).unwrap();
    let (_, op) = battery_operators(g, 0.5).unwrap().remove(1);
    let (_, f) = battery_data(g, 2).remove(1);
    let tr = evolve_krylov(&op, &f, &uniform_times(0.5, 0.1).unwrap(), 1e-10).unwrap();
    let rep = virial_terms(&tr, &make_multiplier(3.0, 0.2, 0.0).unwrap(), &SphereRule::with_level(1)).unwrap();
    assert!(rep.spin_db.iter().any(|v| v.abs() > 1e-6));
    assert!(rep.radial_form_gap < 1e-6, "{}", rep.radial_form_gap);
}

#[test]
fn sphere_integral_of_constant_is_area() {
    let g = Grid::centered(8, 8.0).unwrap();
    let u = SpinorField::plane_wave(g, [0, 0, 0], [C::new(2.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)]);
    let v = sphere_integral(&u, 1.5, &SphereRule::with_level(2));
    assert!((v - 4.0 * 4.0 * PI * 1.5 * 1.5).abs() < 1e-10);
}

// Smoothing norms ---------------------------------------------------------

#[test]
fn smoothing_norms_of_zero_vanish() {
    let g = Grid::centered(8, 8.0).unwrap();
    let op = OperatorHandle::free(g, 0.0).unwrap();
    let tr = evolve_krylov(&op, &SpinorField::zeros(g), &[0.0, 0.5, 1.0], 1e-10).unwrap();
    let r = smoothing_norms(&tr, &SphereRule::with_level(1)).unwrap();
    assert!(r.x_norm.iter().chain(&r.y_norm).chain(&r.grad_x_norm).all(|v| *v == 0.0));
    assert_eq!((r.tangential, r.ratio_l2, r.ratio_energy), (0.0, 0.0, 0.0));
}

#[test]
fn y_norm_is_dominated_by_the_shell_of_the_datum() {
    let g = Grid::centered(16, 16.0).unwrap();
    let op = OperatorHandle::free(g, 1.0).unwrap();
    let f = SpinorField::from_fn(g, |x| {
        let r = x.iter().zip(g.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let e = (-(r - 4.0).powi(2) / (2.0 * 0.4 * 0.4)).exp();
        [C::new(e, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)]
    });
    let tr = evolve_krylov(&op, &f, &[0.0, 0.01, 0.02], 1e-10).unwrap();
    let r = smoothing_norms(&tr, &SphereRule::with_level(2)).unwrap();
    assert_eq!(r.radii, vec![1.0, 2.0, 4.0]);
    let j = r.y_norm.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(j, 2);
    assert!(r.y_norm[2] > 100.0 * r.y_norm[1]);
}

#[test]
fn smoothing_ratio_is_nondecreasing_in_the_horizon() {
    let g = Grid::centered(12, 12.0).unwrap();
    let op = OperatorHandle::free(g, 0.0).unwrap();
    let tr = evolve_krylov(&op, &centered_gaussian(g, 0.8), &uniform_times(4.0, 0.1).unwrap(), 1e-9).unwrap();
    let reps = smoothing_norms_at(&tr, &[1.0, 2.0, 4.0], &SphereRule::with_level(1)).unwrap();
    for w in reps.windows(2) {
        assert!(w[1].ratio_l2 >= w[0].ratio_l2);
        for (a, b) in w[0].x_norm.iter().zip(&w[1].x_norm) {
            assert!(b >= a);
        }
    }
    assert!(smoothing_norms_at(&tr, &[1.05], &SphereRule::with_level(1)).is_err());
}

// Hardy inequality --------------------------------------------------------

#[test]
fn free_hardy_matches_closed_form_energy() {
    let g = Grid::centered(16, 16.0).unwrap();
    let op = OperatorHandle::free(g, 1.0).unwrap();
    let sigma = 1.5;
    let f = centered_gaussian(g, sigma);
    let r = hardy_check(&f, &op, &FieldConstants::zero(), 0.5).unwrap();
    // ∫|∇g|² = 3/(2σ²)∫g² for a Gaussian of width σ.
    let want = 3.0 / (2.0 * sigma * sigma) * f.norm_sqr();
    assert!((r.gradient - want).abs() < 1e-6 * want, "{} {want}", r.gradient);
    assert!((r.rhs - (r.mass_term + r.gradient)).abs() < 1e-10 * r.rhs);
    assert!(r.holds && r.margin > 0.0);
    assert!(r.identity_residual < 1e-12);
}

#[test]
fn hardy_on_battery() {
    let g = Grid::centered(16, 16.0).unwrap();
    for (name, op) in battery_operators(g, 0.8).unwrap() {
        let c0 = sampled_c0(&op);
        let constants = FieldConstants::from_values(c0, 0.0, 0.0, 0.0);
        for (_, f) in battery_data(g, DATA_ORDER) {
            let eps = hardy_epsilon(c0).unwrap_or(0.5);
            let r = hardy_check(&f, &op, &constants, eps).unwrap();
            assert!(r.identity_residual < 1e-8, "{name} {}", r.identity_residual);
            assert!(r.magnetic_hardy_margin > 0.0, "{name}");
            if c0 < 0.25 {
                assert!(r.holds && r.margin >= 0.0, "{name} {r:?}");
            }
        }
    }
}

#[test]
fn hardy_far_from_origin_has_wide_margin() {
    let g = Grid::centered(16, 16.0).unwrap();
    let op = OperatorHandle::free(g, 0.0).unwrap();
    let c = g.center;
    let f = SpinorField::gaussian(g, [c[0] + 5.0, c[1], c[2]], 0.7, SPINOR);
    let r = hardy_check(&f, &op, &FieldConstants::zero(), 1e-3).unwrap();
    assert!(0.25 * r.weighted < 0.1 * r.gradient);
    assert!(r.holds);
}

#[test]
fn hardy_rejects_bad_inputs() {
    let g = Grid::centered(8, 8.0).unwrap();
    let op = OperatorHandle::free(g, 0.0).unwrap();
    let f = centered_gaussian(g, 1.0);
    let z = FieldConstants::zero();
    assert!(matches!(hardy_check(&f, &op, &z, 0.0), Err(Error::InvalidEpsilon(_))));
    assert!(matches!(hardy_check(&f, &op, &z, 1.0), Err(Error::InvalidEpsilon(_))));
    assert_eq!(hardy_epsilon(0.0).unwrap(), HARDY_EPS_MAX);
    assert_eq!(hardy_epsilon(0.125).unwrap(), 0.5);
    assert!(hardy_epsilon(0.25).is_err());
    let bounded = FieldConstants::from_values(0.0, 0.0, 0.0, 0.5);
    assert!(matches!(hardy_check(&f, &op, &bounded, 0.5), Err(Error::MasslessWithBoundedField(_))));
}

// Positivity algebra ------------------------------------------------------

#[test]
fn quadratic_form_examples() {
    let r = quadratic_form_check(0.7, 0.0, 0.0, 21);
    assert_eq!(r.min, 0.0);
    assert!(r.nonnegative);
    let m = optimal_m(0.1, 0.1);
    let r = quadratic_form_check(m, 0.1, 0.1, 101);
    assert!(r.discriminant <= 1e-15 && r.min >= -1e-12 && r.nonnegative);
    let r = quadratic_form_check(0.5, 1.0, 0.0, 11);
    assert!((quadratic_form(0.5, 1.0, 0.0, 1.0, 1.0) + 0.5).abs() < 1e-15);
    assert!(r.min < 0.0 && !r.nonnegative);
}

proptest! {
    #[test]
    fn optimal_multiplier_makes_the_form_nonnegative(c1 in 0.0f64..0.5, c2 in 0.0f64..0.35) {
        let c = FieldConstants::from_values(0.0, c1, c2, 0.0);
        prop_assume!(admissibility_check(&c, 1.0, false).verdict.passed());
        prop_assume!(c1 > 0.0 || c2 > 0.0);
        let m = optimal_m(c1, c2);
        let r = quadratic_form_check(m, c1, c2, 41);
        prop_assert!(r.min >= -1e-12, "{r:?}");
        prop_assert!(r.nonnegative);
    }
}

// Strichartz --------------------------------------------------------------

#[test]
fn admissibility_relations_are_cited() {
    assert!(check_admissible(4.0, 3.0, AdmissibleClass::Schrodinger).is_ok());
    assert!(check_admissible(f64::INFINITY, 2.0, AdmissibleClass::Wave).is_ok());
    let e = check_admissible(4.0, 4.0, AdmissibleClass::Schrodinger).unwrap_err().to_string();
    assert!(e.contains("2/p + 3/q = 1.25 ≠ 3/2"), "{e}");
    let e = check_admissible(3.0, 3.0, AdmissibleClass::Wave).unwrap_err().to_string();
    assert!(e.contains("2/p + 2/q"), "{e}");
    let e = check_admissible(2.0, f64::INFINITY, AdmissibleClass::Wave).unwrap_err().to_string();
    assert!(e.contains("2 < p"), "{e}");
}

#[test]
fn strichartz_ratios_on_the_free_flow() {
    let g = Grid::centered(12, 12.0).unwrap();
    let op = OperatorHandle::free(g, 0.0).unwrap();
    let tr = evolve_krylov(&op, &centered_gaussian(g, 0.6), &uniform_times(2.0, 0.1).unwrap(), 1e-10).unwrap();
    let r = strichartz_ratio(&tr, f64::INFINITY, 2.0).unwrap();
    assert_eq!(r.s, 0.0);
    assert!((r.ratio - 1.0).abs() < 1e-9, "{}", r.ratio);
    let r = strichartz_ratio(&tr, 4.0, 4.0).unwrap();
    assert_eq!(r.s, -0.5);
    assert!(r.ratio > 0.0 && r.ratio.is_finite());
    assert!(matches!(strichartz_ratio(&tr, 4.0, 3.0), Err(Error::Inadmissible { .. })));

    let massive = OperatorHandle::free(g, 1.0).unwrap();
    let tr = evolve_krylov(&massive, &centered_gaussian(g, 0.6), &[0.0, 0.5, 1.0], 1e-10).unwrap();
    assert!(strichartz_ratio(&tr, 4.0, 3.0).is_ok());
    assert!(strichartz_ratio(&tr, 4.0, 4.0).is_err());
}

// Momentum bound ----------------------------------------------------------

#[test]
fn momentum_bound_constants_and_margin() {
    let g = Grid::centered(12, 12.0).unwrap();
    let op = OperatorHandle::free(g, 1.0).unwrap();
    let f = centered_gaussian(g, 1.2);
    let times = uniform_times(1.0, 0.25).unwrap();
    let tr = evolve_krylov(&op, &f, &times, 1e-10).unwrap();
    let m = 0.2;
    let phi = make_multiplier(3.0, m, 0.0).unwrap();
    let r = rhs_bound_check(&tr, &phi, &FieldConstants::zero()).unwrap();
    assert_eq!(r.eps, 1.0);
    assert!((r.printed_constant - (1.5 + (m + 0.5) + 2.0 * (1.0 + 2.0 * m))).abs() < 1e-15);
    assert!(r.margin >= 0.0 && r.young_margin >= 0.0, "{r:?}");

    let scaled = evolve_krylov(&op, &f.scaled(C::new(3.0, 0.0)), &times, 1e-10).unwrap();
    let s = rhs_bound_check(&scaled, &phi, &FieldConstants::zero()).unwrap();
    for (a, b) in r.momentum.iter().zip(&s.momentum) {
        assert!((9.0 * a - b).abs() <= 1e-9 * b.abs().max(1e-300));
    }
    assert!((9.0 * r.margin - s.margin).abs() <= 1e-9 * s.margin.abs());

    let zero = evolve_krylov(&op, &SpinorField::zeros(g), &[0.0, 0.5], 1e-10).unwrap();
    let z = rhs_bound_check(&zero, &phi, &FieldConstants::zero()).unwrap();
    assert!(z.momentum.iter().chain(&z.chain).all(|v| *v == 0.0));

    let bad = FieldConstants::from_values(0.3, 0.0, 0.0, 0.0);
    assert!(matches!(rhs_bound_check(&tr, &phi, &bad), Err(Error::HardyConstant(_))));
}

#[test]
fn momentum_bound_on_battery() {
    let g = Grid::centered(16, 16.0).unwrap();
    for (name, op) in battery_operators(g, 0.8).unwrap() {
        let c0 = sampled_c0(&op);
        if c0 >= 0.25 {
            continue;
        }
        let (_, f) = battery_data(g, DATA_ORDER).remove(2);
        let tr = evolve_krylov(&op, &f, &[0.0, 0.5, 1.0], 1e-10).unwrap();
        let phi = make_multiplier(4.0, 0.1, 0.0).unwrap();
        let r = rhs_bound_check(&tr, &phi, &FieldConstants::from_values(c0, 0.0, 0.0, 0.0)).unwrap();
        assert!(r.margin >= 0.0, "{name} {r:?}");
    }
}
