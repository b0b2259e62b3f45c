//! Acceptance checks. Each test prints one `PASS`/`FAIL` line for its criterion; tolerances
//! are fixed below.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use nalgebra::Matrix5;
use normalflat::expr::parse_expr;
use normalflat::families::{
    build_light_family, build_notld_family, build_phi_family, build_product_family, Family, NotldInput,
    PhiFamilyInput, Source,
};
use normalflat::frames::{compatibility_defect, CoefficientSet};
use normalflat::gcr::{
    curvature_defect, detect_parallel_normal, minors_norm, normal_flatness_defect, residuals, second_form_norm,
    Tolerances, Variant, Verdict,
};
use normalflat::grid::{GridSpec, RealField};
use normalflat::integrator::{auto_frame0, integrate_frame, reconstruct_coefficients, IntegrateOptions};
use normalflat::riccati::{solve_riccati, OneForm, RiccatiForms, RiccatiOptions};
use normalflat::spaceform::{ambient_inner, ambient_signature, CaseId, CaseSpec};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const ORACLE_TOL: f64 = 1e-12;
const TORUS_TOL: f64 = 1e-6;
const ORDER_GAIN: f64 = 8.0;
const CONSTANCY_MIN: f64 = 0.5;
const DESK_TOL: f64 = 1e-10;
const WITNESS_MIN: f64 = 1e-2;
const SWAP_TOL: f64 = 1e-8;
const RESIDUAL_CONSTANT: f64 = 10.0;
const CONSISTENCY_CONSTANT: f64 = 10.0;
const NULL_TOL: f64 = 1e-10;

fn line(n: u32, what: &str, pass: bool, detail: String) {
    println!("criterion {n} [{what}]: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn r0() -> CaseSpec {
    CaseSpec::new(CaseId::R, 0.0)
}

fn src(s: &str) -> Source {
    Source::parse(s).unwrap()
}

fn square(a: f64, b: f64, n: usize) -> GridSpec {
    GridSpec::spanning((a, b), (a, b), n, n).unwrap()
}

#[test]
fn criterion_1_oracle_residuals() {
    let start = Instant::now();
    let fam = build_product_family(square(0.0, 1.0, 64), 1.0, 1.0).unwrap();
    let gcr = residuals(&fam.coeffs, &r0()).max_abs();
    let compat = compatibility_defect(&fam.coeffs, &r0()).max_abs();
    let secs = start.elapsed().as_secs_f64();
    let pass = gcr <= ORACLE_TOL && compat <= ORACLE_TOL && secs < 1.0;
    line(1, "flat torus residuals", pass, format!("gcr {gcr:.2e}, compatibility {compat:.2e}, {secs:.3} s"));
}

fn torus_error(n: usize) -> f64 {
    let spec = square(0.0, FRAC_PI_2, n);
    let fam = build_product_family(spec, 1.0, 1.0).unwrap();
    let mut frame0 = Matrix5::zeros();
    for (r, c) in [(1, 0), (3, 1), (0, 2), (2, 3), (0, 4), (2, 4)] {
        frame0[(r, c)] = 1.0;
    }
    let (field, _) = integrate_frame(&fam.coeffs, &r0(), &frame0, IntegrateOptions::default()).unwrap();
    let mesh = field.mesh();
    let mut worst: f64 = 0.0;
    for (k, p) in mesh.points.iter().enumerate() {
        let (u, v) = spec.point(k);
        for (a, x) in [u.cos(), u.sin(), v.cos(), v.sin()].iter().enumerate() {
            worst = worst.max((p[a] - x).abs());
        }
    }
    worst
}

#[test]
fn criterion_2_frame_reconstruction() {
    // 64 points per side; 127 points halves the step.
    let e64 = torus_error(64);
    let e127 = torus_error(127);
    let pass = e64 <= TORUS_TOL && e64 >= ORDER_GAIN * e127;
    line(2, "flat torus immersion", pass, format!("error {e64:.2e}, halved-step error {e127:.2e}, gain {:.1}", e64 / e127));
}

#[test]
fn criterion_3_parallel_normal_logic() {
    let spec = square(0.0, 1.0, 65);
    let detect = |c: &CoefficientSet| detect_parallel_normal(c, &r0(), Variant::Auto, Tolerances::default_for(c)).unwrap();

    // Round sphere in a hyperplane: β ≡ 0, μ ≡ 0, K ≠ L0.
    let mut sphere = CoefficientSet::zeros(spec);
    sphere.lambda = RealField::from_fn(spec, |u, v| (2.0 / (1.0 + u * u + v * v)).ln());
    sphere.alpha1 = sphere.lambda.map(|l| -l.exp());
    sphere.alpha3 = sphere.alpha1.clone();
    let sphere_gcr = residuals(&sphere, &r0()).max_abs();
    let sphere_tol = Tolerances::default_for(&sphere).residual;
    let hyper = detect(&sphere);
    // Cylinder in a hyperplane: β ≡ 0, μ ≡ 0, K ≡ L0.
    let mut cylinder = CoefficientSet::zeros(spec);
    cylinder.alpha1 = RealField::constant(spec, -1.0);
    let cyl = detect(&cylinder);

    let torus = build_product_family(spec, 1.0, 1.0).unwrap();
    let tor = detect(&torus.coeffs);
    let minors = minors_norm(&torus.coeffs);

    let input = PhiFamilyInput { lambda: src("0"), phi: src("u"), theta: src("pi/4"), xi: parse_expr("s").unwrap() };
    let phi = build_phi_family(spec, &input, &r0()).unwrap();
    let ph = detect(&phi.coeffs);

    let pass = sphere_gcr <= sphere_tol
        && hyper.verdict == Verdict::ParallelExists
        && cyl.verdict == Verdict::ParallelExists
        && tor.verdict == Verdict::None
        && (minors.min() - 1.0).abs() < 1e-12
        && (minors.max() - 1.0).abs() < 1e-12
        && ph.ld.satisfied
        && ph.constancy_defect >= CONSTANCY_MIN
        && ph.verdict == Verdict::None;
    line(
        3,
        "parallel normal detection",
        pass,
        format!(
            "sphere {} (gcr {sphere_gcr:.1e}), cylinder {}, torus {} (minors {:.3}), phi {} (dependent {}, constancy {:.3})",
            hyper.verdict.as_str(),
            cyl.verdict.as_str(),
            tor.verdict.as_str(),
            minors.min(),
            ph.verdict.as_str(),
            ph.ld.satisfied,
            ph.constancy_defect
        ),
    );
}

#[test]
fn criterion_4_phi_family() {
    let spec = square(0.0, 1.0, 64);
    let input = PhiFamilyInput { lambda: src("0"), phi: src("u"), theta: src("pi/4"), xi: parse_expr("s").unwrap() };
    let fam = build_phi_family(spec, &input, &r0()).unwrap();
    let tol = 10.0 * spec.h() * spec.h() * fam.coeffs.scale().max(1.0);
    let gcr = residuals(&fam.coeffs, &r0()).max_abs();
    let gauss_side = curvature_defect(&fam.coeffs, &r0()).max_abs();
    let pass = gcr <= tol && gauss_side <= tol;
    line(4, "phi family", pass, format!("gcr {gcr:.2e}, gauss quadratic side {gauss_side:.2e}, tol {tol:.2e}"));
}

fn nt_input(eps: i8, delta: i8) -> NotldInput {
    let rho = 0.5f64;
    let f_plus = if eps == 1 {
        "u + (u^2 - v^2)/10".to_string()
    } else {
        let b = f64::from(delta) * rho.cosh() * 0.15 / rho.sinh();
        format!("u + 0.1*u^2 + {b:?}*u*v + 0.05*v^2")
    };
    let mut input = NotldInput::new(src("0"), src("-1 + sin(u*v)/5"));
    input.f_plus = Some(src(&f_plus));
    input.link_angle = Some(Source::constant(rho));
    input
}

fn lt_input() -> NotldInput {
    let tr = 0.25f64.tanh();
    let f = format!("i*((u + {tr:?}*v) + 0.2*(u + {tr:?}*v)^2 + i*(0.5*({tr:?}*u + v) + 0.1*sin({tr:?}*u + v)))");
    let mut input = NotldInput::new(src("0"), src("0.2 + 0.1*sin(u*v)"));
    input.f = Some(src(&f));
    input
}

fn r_wave_input() -> NotldInput {
    let mut input = NotldInput::new(src("0"), src("-0.4 + sin(u*v)/5"));
    input.f_plus = Some(src("u + 0.3*sin(u+v)"));
    input.f_minus = Some(src("v + 0.3*sin(u+v)"));
    input
}

#[test]
fn criterion_5_notld_desk_instance() {
    let spec = square(0.1, 0.5, 33);
    let mut desk = NotldInput::new(src("0"), src("0.3"));
    desk.f_minus = Some(src("u"));
    desk.link_angle = Some(src("0.7"));
    let fam = build_notld_family(spec, &desk, &r0()).unwrap();
    let c = &fam.certificate;
    let m = |k: &str| c.metric(k).unwrap();
    let desk_ok = m("gcr_max") <= DESK_TOL
        && m("flatness") <= DESK_TOL
        && m("k_minus_l0") <= DESK_TOL
        && m("witness_min") >= WITNESS_MIN
        && m("abc_identity") <= DESK_TOL;

    let mut identities = vec![("R desk", m("abc_identity"))];
    let r = build_notld_family(spec, &r_wave_input(), &r0()).unwrap();
    identities.push(("R wave", r.certificate.metric("abc_identity").unwrap()));
    for (eps, delta) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
        let case = CaseSpec::with_signs(CaseId::NT, 0.0, eps, delta).unwrap();
        let f = build_notld_family(spec, &nt_input(eps, delta), &case).unwrap();
        identities.push(("NT", f.certificate.metric("abc_identity").unwrap()));
    }
    let lt = build_notld_family(spec, &lt_input(), &CaseSpec::new(CaseId::LT, 0.0)).unwrap();
    identities.push(("LT", lt.certificate.metric("abc_identity").unwrap()));
    let worst = identities.iter().map(|(_, x)| *x).fold(0.0, f64::max);
    let pass = desk_ok && worst <= DESK_TOL;
    line(
        5,
        "notld desk instance",
        pass,
        format!(
            "gcr {:.1e}, flatness {:.1e}, K-L0 {:.1e}, witness {:.3}, worst A/B/C identity {worst:.1e} over {} inputs",
            m("gcr_max"),
            m("flatness"),
            m("k_minus_l0"),
            m("witness_min"),
            identities.len()
        ),
    );
}

fn constant_forms(spec: GridSpec, k: [[f64; 2]; 3]) -> RiccatiForms {
    let omega = k.map(|[p, q]| OneForm { u: RealField::constant(spec, p), v: RealField::constant(spec, q) });
    RiccatiForms::from_forms(omega, r0()).unwrap()
}

#[test]
fn criterion_6_riccati_solver() {
    let small = square(0.0, 1.0, 17);
    let zero = solve_riccati(&constant_forms(small, [[0.0; 2]; 3]), 0.3, RiccatiOptions::default()).unwrap();
    let zero_ok = zero.t.values().iter().all(|&t| t == 0.3) && zero.path_defect == 0.0;

    let lin = solve_riccati(&constant_forms(small, [[1.0, 0.0], [0.0; 2], [0.0; 2]]), 0.0, RiccatiOptions::default()).unwrap();
    let lin_err = (0..small.len()).map(|k| (lin.t.get(k) - small.point(k).0).abs()).fold(0.0, f64::max);

    // Ω ≡ 0 instance: ω₀ = ω₂ = p du + q dv, ω₁ = 0, solved by t = tan(pu + qv + c).
    let fine = square(0.0, 1.0, 129);
    let (p, q, c) = (0.3, 0.2, 0.2f64);
    let sol = solve_riccati(&constant_forms(fine, [[p, q], [0.0; 2], [p, q]]), c.tan(), RiccatiOptions::default()).unwrap();
    let h = fine.h();
    let exact_err = (0..fine.len())
        .map(|k| {
            let (u, v) = fine.point(k);
            (sol.t.get(k) - (p * u + q * v + c).tan()).abs()
        })
        .fold(0.0, f64::max);
    let pass = zero_ok
        && lin_err < 1e-13
        && sol.path_defect <= SWAP_TOL
        && sol.residual <= RESIDUAL_CONSTANT * h * h
        && exact_err < 1e-9;
    line(
        6,
        "riccati solver",
        pass,
        format!(
            "zero forms ok {zero_ok}, linear error {lin_err:.1e}, swap defect {:.1e} at h = 1/128, residual {:.1e}",
            sol.path_defect, sol.residual
        ),
    );
}

/// Largest mismatch of the gauge invariants after integrating and reconstructing, relative to
/// `10 h² (1 + scale)`.
fn round_trip_ratio(fam: &Family) -> f64 {
    let case = fam.case;
    let c0 = &fam.coeffs;
    let spec = *c0.spec();
    let frame0 = auto_frame0(c0, &case);
    let (field, _) = integrate_frame(c0, &case, &frame0, IntegrateOptions::default()).unwrap();
    let (c, _) = reconstruct_coefficients(&field.mesh(), &case, None).unwrap();
    let diff = |a: &RealField, b: &RealField| a.zip_with(b, |x, y| x - y).unwrap().max_abs();
    let tol = 10.0 * spec.h() * spec.h() * (1.0 + c0.scale());
    [
        diff(&c.lambda, &c0.lambda),
        diff(&curvature_defect(&c, &case), &curvature_defect(c0, &case)),
        normal_flatness_defect(&c).max_abs(),
        diff(&minors_norm(&c), &minors_norm(c0)),
        diff(&second_form_norm(&c, &case), &second_form_norm(c0, &case)),
    ]
    .iter()
    .fold(0.0, |m, x| m.max(x / tol))
}

#[test]
fn criterion_7_round_trip() {
    let start = Instant::now();
    let unit = square(0.0, 1.0, 64);
    let small = square(0.1, 0.5, 64);
    let mut families: Vec<(&str, Family)> = Vec::new();
    families.push(("product", build_product_family(unit, 1.0, 1.0).unwrap()));
    let phi = PhiFamilyInput { lambda: src("0"), phi: src("u"), theta: src("pi/4"), xi: parse_expr("s").unwrap() };
    families.push(("phi", build_phi_family(unit, &phi, &r0()).unwrap()));
    let curved = PhiFamilyInput {
        lambda: src("0"),
        phi: src("atan(v/u)"),
        theta: src("1 + 0.2*u*v"),
        xi: parse_expr("s^2").unwrap(),
    };
    let off_axis = GridSpec::spanning((1.0, 1.5), (0.2, 0.7), 64, 64).unwrap();
    families.push(("phi curved", build_phi_family(off_axis, &curved, &r0()).unwrap()));
    families.push(("notld R", build_notld_family(small, &r_wave_input(), &r0()).unwrap()));
    families.push(("notld NS", build_notld_family(small, &r_wave_input(), &CaseSpec::new(CaseId::NS, 0.0)).unwrap()));
    for (eps, delta) in [(1, 1), (-1, -1)] {
        let case = CaseSpec::with_signs(CaseId::NT, 0.0, eps, delta).unwrap();
        families.push(("notld NT", build_notld_family(small, &nt_input(eps, delta), &case).unwrap()));
    }
    let mut ls = NotldInput::new(src("0"), src("0.2"));
    ls.f = Some(src("(u+v) + 0.2*(u+v)^2 + i*(0.5*(u-v) + 0.1*sin(u-v))"));
    families.push(("notld LS", build_notld_family(small, &ls, &CaseSpec::new(CaseId::LS, 0.0)).unwrap()));
    families.push(("notld LT", build_notld_family(small, &lt_input(), &CaseSpec::new(CaseId::LT, 0.0)).unwrap()));
    families.push(("light", build_light_family(small, &src("u^3/6 + u*v^2/4 + sin(v)"), &src("0.3*u - 0.2*v^2"), 1).unwrap()));

    let ratios: Vec<(&str, f64)> = families.iter().map(|(n, f)| (*n, round_trip_ratio(f))).collect();
    let worst = ratios.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1.0 && secs < 60.0;
    let names: Vec<String> = ratios.iter().map(|(n, r)| format!("{n} {r:.1e}")).collect();
    line(7, "round trip", pass, format!("worst mismatch/tol {worst:.2e}, {secs:.1} s; {}", names.join(", ")));
}

/// Smooth coefficients from low-order trigonometric terms with random amplitudes and phases.
fn random_coefficients(spec: GridSpec, c: &[f64]) -> CoefficientSet {
    let fields: Vec<RealField> = (0..9)
        .map(|f| {
            let k = &c[6 * f..6 * f + 6];
            let amp = if f == 0 { 0.3 } else { 1.0 };
            RealField::from_fn(spec, |u, v| {
                amp * (k[0] + k[1] * (u + k[2]).sin() + k[3] * (2.0 * v + k[4]).cos() + k[5] * u * v)
            })
        })
        .collect();
    CoefficientSet::from_fields(fields.try_into().unwrap()).unwrap()
}

#[test]
fn criterion_8_module_consistency() {
    let spec = square(0.0, 1.0, 33);
    let worst = std::cell::Cell::new(0.0f64);
    let count = std::cell::Cell::new(0usize);
    let strategy = (0usize..5, prop::sample::select(vec![-1.0, 0.0, 1.0]), prop::collection::vec(-1.0f64..1.0, 54));
    let mut runner = TestRunner::new(Config { cases: 50, failure_persistence: None, ..Config::default() });
    let outcome = runner.run(&strategy, |(case_index, l0, c)| {
        let case = CaseSpec::new(CaseId::ALL[case_index], l0);
        let coeffs = random_coefficients(spec, &c);
        let gcr = residuals(&coeffs, &case).max_abs();
        let compat = compatibility_defect(&coeffs, &case).max_abs();
        let ratio = (gcr / compat).max(compat / gcr);
        worst.set(worst.get().max(ratio));
        count.set(count.get() + 1);
        prop_assert!(ratio <= CONSISTENCY_CONSTANT, "ratio {ratio} for {case:?}");
        Ok(())
    });
    let pass = outcome.is_ok() && count.get() >= 50;
    line(
        8,
        "frames vs gcr consistency",
        pass,
        format!("{} random sets, largest ratio {:.2}, bound {CONSISTENCY_CONSTANT}", count.get(), worst.get()),
    );
}

#[test]
fn criterion_9_light_like_detection() {
    let spec = square(0.1, 0.5, 65);
    let mut worst_null: f64 = 0.0;
    let mut worst_parallel: f64 = 0.0;
    let mut parallel_tol: f64 = 0.0;
    let mut verdicts = Vec::new();
    for eps in [1i8, -1] {
        let fam = build_light_family(spec, &src("u^3/6 + u*v^2/4 + sin(v)"), &src("0.3*u - 0.2*v^2"), eps).unwrap();
        let case = fam.case;
        let rep = detect_parallel_normal(&fam.coeffs, &case, Variant::Auto, Tolerances::default_for(&fam.coeffs)).unwrap();
        verdicts.push((rep.ld.variant, rep.verdict));
        let Some(field) = rep.field else {
            worst_null = f64::INFINITY;
            continue;
        };
        let (frames, _) =
            integrate_frame(&fam.coeffs, &case, &auto_frame0(&fam.coeffs, &case), IntegrateOptions::default()).unwrap();
        let sig = ambient_signature(&case);
        // ξ = c₁N₁ + c₂N₂ in ambient coordinates along the integrated frame.
        let xi: Vec<RealField> = (0..sig.dim)
            .map(|r| {
                RealField::from_index(spec, |k| {
                    let m = &frames.frames[k];
                    field.c1.get(k) * m[(r, 2)] + field.c2.get(k) * m[(r, 3)]
                })
            })
            .collect();
        let at = |f: &[RealField], k: usize| f.iter().map(|x| x.get(k)).collect::<Vec<f64>>();
        let (xu, xv): (Vec<RealField>, Vec<RealField>) = xi.iter().map(|x| (x.diff_u4(), x.diff_v4())).unzip();
        for k in 0..spec.len() {
            let e2 = (2.0 * fam.coeffs.lambda.get(k)).exp();
            let x = at(&xi, k);
            worst_null = worst_null.max(ambient_inner(&x, &x, &sig).unwrap().abs() / e2);
            // A parallel field has tangential derivatives only.
            let m = &frames.frames[k];
            for d in [at(&xu, k), at(&xv, k)] {
                for c in [2, 3] {
                    let n: Vec<f64> = (0..sig.dim).map(|r| m[(r, c)]).collect();
                    worst_parallel = worst_parallel.max(ambient_inner(&d, &n, &sig).unwrap().abs() / e2);
                }
            }
        }
        parallel_tol = parallel_tol.max(10.0 * spec.h() * spec.h() * (1.0 + fam.coeffs.scale()));
    }
    let pass = verdicts.iter().all(|(v, d)| *v == Variant::Light && *d == Verdict::ParallelExists)
        && worst_null <= NULL_TOL
        && worst_parallel <= parallel_tol;
    line(
        9,
        "light-like detection",
        pass,
        format!(
            "verdicts {verdicts:?}, max |<xi,xi>| e^(-2 lambda) {worst_null:.1e}, normal part of d(xi) {worst_parallel:.1e} (tol {parallel_tol:.1e})"
        ),
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flat_torus_residuals_vanish_for_any_window(a in -3.0f64..3.0, w in 0.2f64..2.0) {
        let fam = build_product_family(square(a, a + w, 16), 1.0, 1.0).unwrap();
        prop_assert!(residuals(&fam.coeffs, &r0()).max_abs() <= ORACLE_TOL);
        prop_assert!((minors_norm(&fam.coeffs).max() - 1.0).abs() < 1e-12);
    }
}
