use normalflat::expr::parse_expr;
use normalflat::families::Source;
use normalflat::grid::{GridSpec, RealField};
use normalflat::riccati::{
    obstruction_verdict, solve_riccati, Obstruction, OneForm, RiccatiForms, RiccatiOptions,
};
use normalflat::spaceform::{CaseId, CaseSpec};
use normalflat::Error;
use proptest::prelude::*;

fn constant_forms(spec: GridSpec, k: [[f64; 2]; 3], case: CaseSpec) -> RiccatiForms {
    let omega = k.map(|[p, q]| OneForm { u: RealField::constant(spec, p), v: RealField::constant(spec, q) });
    RiccatiForms::from_forms(omega, case).unwrap()
}

#[test]
fn zero_forms_keep_initial_value() {
    let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 9, 9).unwrap();
    let forms = constant_forms(spec, [[0.0; 2]; 3], CaseSpec::new(CaseId::R, 0.0));
    let sol = solve_riccati(&forms, 0.3, RiccatiOptions::default()).unwrap();
    assert!(sol.t.values().iter().all(|&t| t == 0.3));
    assert_eq!(sol.path_defect, 0.0);
    assert_eq!(sol.obstruction.verdict, Obstruction::IdenticallyZero);
}

#[test]
fn linear_case_is_exact() {
    let spec = GridSpec::spanning((0.5, 1.5), (0.0, 1.0), 11, 11).unwrap();
    let forms = constant_forms(spec, [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]], CaseSpec::new(CaseId::R, 0.0));
    let sol = solve_riccati(&forms, 0.0, RiccatiOptions::default()).unwrap();
    for k in 0..spec.len() {
        let (u, _) = spec.point(k);
        assert!((sol.t.get(k) - (u - 0.5)).abs() < 1e-13);
    }
    assert!(sol.path_defect < 1e-13);
}

#[test]
fn integrable_tangent_solution() {
    // ω₀ = ω₂ = p du + q dv, ω₁ = 0: every Ω vanishes and t = tan(pu + qv + c).
    let (p, q, c) = (0.3, 0.2, 0.2f64);
    let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 129, 129).unwrap();
    let forms = constant_forms(spec, [[p, q], [0.0, 0.0], [p, q]], CaseSpec::new(CaseId::R, 0.0));
    assert_eq!(obstruction_verdict(&forms).verdict, Obstruction::IdenticallyZero);
    let sol = solve_riccati(&forms, c.tan(), RiccatiOptions::default()).unwrap();
    assert!(sol.path_defect <= 1e-8, "{}", sol.path_defect);
    for k in 0..spec.len() {
        let (u, v) = spec.point(k);
        assert!((sol.t.get(k) - (p * u + q * v + c).tan()).abs() < 1e-9);
    }
    let h = spec.h();
    assert!(sol.residual <= 10.0 * h * h, "{}", sol.residual);
}

#[test]
fn blow_up_is_reported() {
    let spec = GridSpec::spanning((0.0, 3.0), (0.0, 1.0), 31, 5).unwrap();
    let forms = constant_forms(spec, [[1.0, 0.0], [0.0, 0.0], [1.0, 0.0]], CaseSpec::new(CaseId::R, 0.0));
    let r = solve_riccati(&forms, 0.0, RiccatiOptions::default());
    assert!(matches!(r, Err(Error::BlowUp { u, .. }) if u > 1.5 && u < 1.8), "{r:?}");
}

#[test]
fn hyperbolic_range_is_enforced() {
    let spec = GridSpec::spanning((0.0, 2.0), (0.0, 1.0), 21, 5).unwrap();
    let forms = constant_forms(spec, [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]], CaseSpec::new(CaseId::NT, 0.0));
    assert!(matches!(solve_riccati(&forms, 0.5, RiccatiOptions::default()), Err(Error::Range { .. })));
    assert!(matches!(solve_riccati(&forms, 0.0, RiccatiOptions::default()), Err(Error::Range { .. })));
}

#[test]
fn linear_minus_potential_without_xi_has_zero_forms() {
    let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 9, 9).unwrap();
    let forms = RiccatiForms::build(spec, &Source::parse("u").unwrap(), &parse_expr("0").unwrap(), &CaseSpec::new(CaseId::R, 0.0)).unwrap();
    assert_eq!(forms.scale(), 0.0);
    assert_eq!(obstruction_verdict(&forms).verdict, Obstruction::IdenticallyZero);
}

#[test]
fn constant_xi_gives_nontrivial_obstruction() {
    let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 17, 17).unwrap();
    let forms = RiccatiForms::build(spec, &Source::parse("u").unwrap(), &parse_expr("1").unwrap(), &CaseSpec::new(CaseId::R, 0.0)).unwrap();
    let rep = obstruction_verdict(&forms);
    assert_eq!(rep.verdict, Obstruction::Nontrivial);
    assert!((rep.norms[0] - 1.0).abs() < 1e-12, "{:?}", rep.norms);
}

#[test]
fn degenerate_minus_potential() {
    let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 9, 9).unwrap();
    let r = RiccatiForms::build(spec, &Source::parse("u + v").unwrap(), &parse_expr("0").unwrap(), &CaseSpec::new(CaseId::NT, 0.0));
    assert!(matches!(r, Err(Error::Degenerate(_))));
}

#[test]
fn obstruction_converges_under_refinement() {
    let f = Source::parse("u + v^2/2 + 0.1*sin(u*v)").unwrap();
    let xi = parse_expr("s").unwrap();
    let case = CaseSpec::new(CaseId::R, 0.0);
    let at = |n: usize| {
        let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), n, n).unwrap();
        let forms = RiccatiForms::build(spec, &f, &xi, &case).unwrap();
        let (i, j) = ((n - 1) / 2, (n - 1) / 4);
        forms.big_omega.iter().map(|w| w.at(i, j)).collect::<Vec<_>>()
    };
    let (a, b, c) = (at(17), at(33), at(65));
    for l in 0..3 {
        let (e1, e2) = ((a[l] - c[l]).abs(), (b[l] - c[l]).abs());
        assert!(e1 > 3.0 * e2 || e1 < 1e-12, "component {l}: {e1} {e2}");
    }
}

/// Partner gradient for the linked potential and its rotation-angle derivative.
fn link(case: &CaseSpec, a: f64, fu: f64, fv: f64) -> ([f64; 2], [f64; 2]) {
    match case.case_id {
        CaseId::NT => {
            let d = f64::from(case.delta);
            let (ch, sh) = (a.cosh(), a.sinh());
            let (x, y) = (d * ch * fu - sh * fv, sh * fu - d * ch * fv);
            let (dx, dy) = (d * sh * fu - ch * fv, ch * fu - d * sh * fv);
            if case.eps > 0 { ([x, y], [dx, dy]) } else { ([y, x], [dy, dx]) }
        }
        _ => {
            let (c, s) = (a.cos(), a.sin());
            ([-s * fu + c * fv, c * fu + s * fv], [-c * fu - s * fv, -s * fu + c * fv])
        }
    }
}

/// Residuals of the curl-free and Jacobian conditions when the angle has gradient `(au, av)`.
fn defining_system(case: &CaseSpec, a: f64, au: f64, av: f64, d: [f64; 5], xi: f64) -> [f64; 2] {
    let [fu, fv, fuu, fuv, fvv] = d;
    let (p, dp) = link(case, a, fu, fv);
    // The link is linear in (f_u, f_v), so ∂_u and ∂_v act on its input directly.
    let pu_v = dp[0] * av + link(case, a, fuv, fvv).0[0];
    let pv_u = dp[1] * au + link(case, a, fuu, fuv).0[1];
    let jacobian = p[0] * av - p[1] * au - xi * (p[0] * fv - p[1] * fu);
    [pu_v - pv_u, jacobian]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forms_solve_the_defining_system(
        a in -0.6f64..0.6, b in -0.6f64..0.6, c in 0.5f64..1.5, e in -0.5f64..0.5,
        xi0 in -1.0f64..1.0, xi1 in -1.0f64..1.0, t_abs in 0.1f64..0.8, t_neg: bool,
        which in 0usize..5,
    ) {
        let case = match which {
            0 => CaseSpec::new(CaseId::R, 0.0),
            1 => CaseSpec::with_signs(CaseId::NT, 0.0, 1, 1).unwrap(),
            2 => CaseSpec::with_signs(CaseId::NT, 0.0, 1, -1).unwrap(),
            3 => CaseSpec::with_signs(CaseId::NT, 0.0, -1, 1).unwrap(),
            _ => CaseSpec::with_signs(CaseId::NT, 0.0, -1, -1).unwrap(),
        };
        // f₋ = c u + e v + a u²/2 + b u v + ... sampled at the origin node.
        let src = format!("{c:?}*u + {e:?}*v + {a:?}*u^2/2 + {b:?}*u*v + {a:?}*{b:?}*v^2");
        let xi = parse_expr(&format!("{xi0:?} + {xi1:?}*s")).unwrap();
        let spec = GridSpec::spanning((0.0, 0.1), (0.0, 0.1), 5, 5).unwrap();
        let forms = RiccatiForms::build(spec, &Source::parse(&src).unwrap(), &xi, &case).unwrap();
        let d = [c, e, a, b, 2.0 * a * b];
        let nt = case.case_id == CaseId::NT;
        // ρ = 0 is excluded in the hyperbolic case, where the system degenerates.
        let t = if t_neg { -t_abs } else { t_abs };
        let angle = if nt { t.atanh() } else { t.atan() };
        // dt = ω₀ + tω₁ + t²ω₂ and dψ = dt/(1 + t²), dρ = dt/(1 - t²).
        let factor = if nt { 1.0 / (1.0 - t * t) } else { 1.0 / (1.0 + t * t) };
        let slope = |dir: usize| {
            let w = |l: usize| if dir == 0 { forms.omega[l].u.get(0) } else { forms.omega[l].v.get(0) };
            factor * (w(0) + t * w(1) + t * t * w(2))
        };
        let r = defining_system(&case, angle, slope(0), slope(1), d, xi0);
        prop_assert!(r[0].abs() < 1e-10 && r[1].abs() < 1e-10, "{:?} {:?}", case, r);
    }

    #[test]
    fn wedge_is_antisymmetric(p in -2.0f64..2.0, q in -2.0f64..2.0, r in -2.0f64..2.0, s in -2.0f64..2.0) {
        let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 5, 5).unwrap();
        let a = OneForm { u: RealField::from_fn(spec, |u, v| p + q * u * v), v: RealField::constant(spec, r) };
        let b = OneForm { u: RealField::constant(spec, s), v: RealField::from_fn(spec, |u, _| q - u) };
        prop_assert_eq!(a.wedge(&a).max_abs(), 0.0);
        let ab = a.wedge(&b);
        let ba = b.wedge(&a);
        prop_assert!(ab.zip_with(&ba, |x, y| x + y).unwrap().max_abs() == 0.0);
    }
}
