use varibc_core::fixtures::{load_fixture, von_mises_truss_force, von_mises_truss_zero_crossing, FIXTURE_NAMES};
use varibc_core::problems::{f_in, f_p};
use varibc_core::Error;

#[test]
fn every_fixture_regenerates_its_expectations() {
    for name in FIXTURE_NAMES {
        let f = load_fixture(name).unwrap();
        assert!(!f.expected.is_empty(), "{name}");
        let got = f.recompute().unwrap();
        for e in &f.expected {
            let (_, v) = got.iter().find(|(n, _)| *n == e.name).unwrap();
            assert!(
                (v - e.value).abs() <= e.tolerance,
                "{name}/{}: {v} vs {} ({})",
                e.name,
                e.value,
                e.provenance
            );
        }
    }
}

#[test]
fn unknown_fixture_is_an_error() {
    assert!(matches!(load_fixture("nope"), Err(Error::UnknownFixture(_))));
}

#[test]
fn one_triangle_moves_rigidly_against_its_support() {
    // A single stiff triangle on one support spring translates rigidly, so
    // the load intensities are the spring force along the input direction.
    let f = load_fixture("one_triangle_spring").unwrap();
    let inst = f.instance().unwrap();
    let ev = inst.evaluate(&f.design, false).unwrap();
    // each node carries k_s / 3 per direction, so the whole triangle k_s
    let p = &inst.spec.params;
    let c = inst.mesh.centroid(0);
    let d = (c[0] - f.design.supports[0][0]).hypot(c[1] - f.design.supports[0][1]);
    let k_total = p.g_s / p.t_s * inst.mesh.area(0) * (-(p.b.ln()) * (d / p.r).powf(2.0 * p.p_exp)).exp();
    assert!((ev.fields.k_s[0] - k_total).abs() <= 1e-12 * k_total);
    let theta = f.design.theta;
    for (m, s) in ev.paths[0].states.iter().enumerate() {
        let d = (m + 1) as f64 / inst.spec.solver.steps as f64 * inst.spec.u_in;
        for node in 0..3 {
            assert!((s.u[2 * node] - d * theta.cos()).abs() <= 1e-9 * d);
            assert!((s.u[2 * node + 1] - d * theta.sin()).abs() <= 1e-9 * d);
        }
        let force = k_total * d;
        assert!((s.lambda[0] - force * theta.cos()).abs() <= 1e-6 * force);
        assert!((s.lambda[1] - force * theta.sin()).abs() <= 1e-6 * force);
        assert!((f_in(s.lambda, theta) - force).abs() <= 1e-6 * force);
        assert!(f_p(s.lambda, theta).abs() <= 1e-6 * force);
    }
}

#[test]
fn toy_arch_load_curve_has_limit_point_and_sign_change() {
    let f = load_fixture("toy_arch").unwrap();
    let inst = f.instance().unwrap();
    let ev = inst.evaluate(&f.design, false).unwrap();
    // downward push: the input force is -lambda_y
    let curve: Vec<(f64, f64)> = ev.paths[0]
        .trace
        .iter()
        .map(|t| (t.fraction * inst.spec.u_in, -t.lambda_y))
        .collect();
    let first_max = (0..curve.len() - 1)
        .find(|&i| curve[i + 1].1 < curve[i].1)
        .expect("force keeps rising");
    assert!(curve[first_max].1 > 0.0);
    let cross = (first_max..curve.len() - 1)
        .find(|&i| curve[i].1 > 0.0 && curve[i + 1].1 <= 0.0)
        .expect("no negative region after the limit point");

    // the pin-jointed truss reaches zero force in the flat state w = rise
    let rise = inst.spec.load[1];
    let zero = von_mises_truss_zero_crossing(rise);
    assert!(von_mises_truss_force(0.05, rise, 0.5 * zero) > 0.0);
    assert!(von_mises_truss_force(0.05, rise, 1.5 * zero) < 0.0);
    let slack = 0.1 * rise;
    assert!(
        curve[cross].0 - slack <= zero && zero <= curve[cross + 1].0 + slack,
        "crossing in [{}, {}], truss {zero}",
        curve[cross].0,
        curve[cross + 1].0
    );
}
