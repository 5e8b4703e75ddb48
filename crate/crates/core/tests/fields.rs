use magdirac::field::*;

fn params(kv: &[(&str, f64)]) -> Params {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn constants(spec: &FieldSpec) -> FieldConstants {
    compute_constants(spec, &field_geometry(spec), &QuadSettings::default()).unwrap()
}

#[test]
fn weak_perturbed_field_is_admissible_with_wide_margin() {
    let spec = example_field(FieldKind::PerturbedEx2, &params(&[("eps", 0.01), ("delta", 1.0)])).unwrap();
    let c = constants(&spec);
    let adm = admissibility_check(&c, 1.0, true);
    assert_eq!(adm.verdict, Verdict::PassStrict, "{:?}", adm.reasons);
    assert!(adm.margin > 0.9, "{}", adm.margin);
    assert!(c.decay_sum.is_finite());
}

#[test]
fn constant_field_has_infinite_c1() {
    let spec = example_field(FieldKind::Constant, &params(&[("b", 0.5)])).unwrap();
    let c = constants(&spec);
    assert_eq!(c.c1, f64::INFINITY);
    let adm = admissibility_check(&c, 1.0, false);
    assert_eq!(adm.verdict, Verdict::Fail);
    assert!(adm.reasons.iter().any(|r| r.contains("C1 is infinite")));
}

#[test]
fn radial_field_contributes_nothing_to_c1_and_c2() {
    let spec = example_field(FieldKind::RadialOmega, &params(&[("omega", 0.7)])).unwrap();
    let geom = field_geometry(&spec);
    for x in field_sample_points() {
        let t = geom.b_tau(x).unwrap();
        let d = geom.d_r_b(x).unwrap();
        assert!(norm(t) < 1e-10 && norm(d) < 1e-10, "{x:?}");
    }
    let c = constants(&spec);
    assert!(c.c1.abs() < 1e-10 && c.c2.abs() < 1e-10, "{c:?}");
}
