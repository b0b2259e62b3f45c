use nalgebra::{DMatrix, Matrix5};
use normalflat::families::build_product_family;
use normalflat::frames::CoefficientSet;
use normalflat::gcr::{curvature_defect, minors_norm, normal_flatness_defect, second_form_norm};
use normalflat::grid::{GridSpec, RealField};
use normalflat::integrator::{
    auto_frame0, export_mesh, integrate_frame, mesh_from_csv, mesh_to_csv, mesh_to_obj,
    reconstruct_coefficients, IntegrateOptions, MeshFormat, SurfaceMesh,
};
use normalflat::spaceform::{CaseId, CaseSpec};
use normalflat::Error;
use std::f64::consts::FRAC_PI_2;

fn r0() -> CaseSpec {
    CaseSpec::new(CaseId::R, 0.0)
}

/// Exact frame of `(cos u, sin u, cos v, sin v)` at the origin.
fn torus_frame0() -> Matrix5<f64> {
    let mut m = Matrix5::zeros();
    m[(1, 0)] = 1.0;
    m[(3, 1)] = 1.0;
    m[(0, 2)] = 1.0;
    m[(2, 3)] = 1.0;
    m[(0, 4)] = 1.0;
    m[(2, 4)] = 1.0;
    m
}

fn torus_error(n: usize) -> f64 {
    let spec = GridSpec::spanning((0.0, FRAC_PI_2), (0.0, FRAC_PI_2), n, n).unwrap();
    let fam = build_product_family(spec, 1.0, 1.0).unwrap();
    let (field, report) = integrate_frame(&fam.coeffs, &r0(), &torus_frame0(), IntegrateOptions::default()).unwrap();
    assert!(report.warning.is_none());
    let mesh = field.mesh();
    let mut worst: f64 = 0.0;
    for (k, p) in mesh.points.iter().enumerate() {
        let (u, v) = spec.point(k);
        let exact = [u.cos(), u.sin(), v.cos(), v.sin()];
        for a in 0..4 {
            worst = worst.max((p[a] - exact[a]).abs());
        }
    }
    worst
}

#[test]
fn zero_coefficients_give_the_plane() {
    let spec = GridSpec::spanning((0.0, 1.0), (0.0, 2.0), 9, 17).unwrap();
    let coeffs = CoefficientSet::zeros(spec);
    let frame0 = Matrix5::from_diagonal(&[1.0, 1.0, 1.0, 1.0, 0.0].into());
    let (field, report) = integrate_frame(&coeffs, &r0(), &frame0, IntegrateOptions::default()).unwrap();
    for k in 0..spec.len() {
        let (u, v) = spec.point(k);
        let (i, j) = spec.coords(k);
        let m = field.at(i, j);
        assert!((m[(0, 4)] - u).abs() < 1e-14 && (m[(1, 4)] - v).abs() < 1e-14);
        assert_eq!(m.fixed_columns::<4>(0), frame0.fixed_columns::<4>(0));
    }
    assert!(report.gram_drift < 1e-14);
}

#[test]
fn flat_torus_matches_closed_form() {
    let coarse = torus_error(33);
    let fine = torus_error(65);
    assert!(fine <= 1e-6, "{fine}");
    assert!(coarse >= 8.0 * fine, "{coarse} vs {fine}");
}

#[test]
fn totally_geodesic_sphere() {
    let case = CaseSpec::new(CaseId::R, 1.0);
    let spec = GridSpec::spanning((-1.0, 1.0), (-1.0, 1.0), 129, 129).unwrap();
    let mut coeffs = CoefficientSet::zeros(spec);
    coeffs.lambda = RealField::from_fn(spec, |u, v| (2.0 / (1.0 + u * u + v * v)).ln());
    let frame0 = auto_frame0(&coeffs, &case);
    let opts = IntegrateOptions { path_diagnostic: true, ..Default::default() };
    let (field, report) = integrate_frame(&coeffs, &case, &frame0, opts).unwrap();
    assert!(report.quadric_drift <= 1e-6, "{}", report.quadric_drift);
    assert!(report.path_defect.unwrap() <= 1e-6);
    let pts = field.mesh().points;
    let m = DMatrix::from_fn(pts.len(), 5, |r, c| pts[r][c]);
    let sv = m.svd(false, false).singular_values;
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    assert!(s[3] / s[0] <= 1e-6, "{s:?}");
}

#[test]
fn incompatible_coefficients_drift_more() {
    let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 33, 33).unwrap();
    let drift = |r: f64| {
        let mut coeffs = CoefficientSet::zeros(spec);
        coeffs.alpha2 = RealField::constant(spec, r);
        coeffs.beta1 = RealField::from_fn(spec, |u, _| r * u);
        let frame0 = auto_frame0(&coeffs, &r0());
        let (_, rep) = integrate_frame(&coeffs, &r0(), &frame0, IntegrateOptions { path_diagnostic: true, ..Default::default() }).unwrap();
        assert!(rep.warning.is_some());
        rep.path_defect.unwrap()
    };
    let (a, b) = (drift(0.25), drift(0.5));
    assert!(a > 1e-3 && b >= 1.9 * a, "{a} {b}");
}

#[test]
fn bad_initial_frame_is_rejected() {
    let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 5, 5).unwrap();
    let coeffs = CoefficientSet::zeros(spec);
    let frame0 = Matrix5::from_diagonal(&[1.0, 2.0, 1.0, 1.0, 0.0].into());
    assert!(matches!(integrate_frame(&coeffs, &r0(), &frame0, IntegrateOptions::default()), Err(Error::Config(_))));
}

#[test]
fn quadric_projection_is_exact() {
    let case = CaseSpec::new(CaseId::R, 1.0);
    let spec = GridSpec::spanning((-0.5, 0.5), (-0.5, 0.5), 9, 9).unwrap();
    let mut coeffs = CoefficientSet::zeros(spec);
    coeffs.lambda = RealField::from_fn(spec, |u, v| (2.0 / (1.0 + u * u + v * v)).ln());
    let frame0 = auto_frame0(&coeffs, &case);
    let opts = IntegrateOptions { project_quadric: true, ..Default::default() };
    let (_, report) = integrate_frame(&coeffs, &case, &frame0, opts).unwrap();
    assert!(report.quadric_drift < 1e-14);
}

#[test]
fn plane_mesh_reconstructs_to_zero() {
    let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 9, 9).unwrap();
    let mesh = SurfaceMesh::from_fn(spec, 4, |u, v| vec![u, v, 0.0, 0.0]).unwrap();
    let (c, rep) = reconstruct_coefficients(&mesh, &r0(), None).unwrap();
    assert!(c.scale() < 1e-12, "{}", c.scale());
    assert!(rep.conformality_defect < 1e-14);
}

#[test]
fn flat_torus_mesh_invariants() {
    let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 65, 65).unwrap();
    let mesh = SurfaceMesh::from_fn(spec, 4, |u, v| vec![u.cos(), u.sin(), v.cos(), v.sin()]).unwrap();
    let (c, _) = reconstruct_coefficients(&mesh, &r0(), None).unwrap();
    let h2 = spec.h() * spec.h();
    let minors = minors_norm(&c);
    assert!(minors.values().iter().all(|m| (m - 1.0).abs() <= 10.0 * h2), "{}", minors.max());
    assert!(curvature_defect(&c, &r0()).max_abs() <= 10.0 * h2);
    assert!(normal_flatness_defect(&c).max_abs() <= 10.0 * h2);
    assert!(c.lambda.max_abs() <= 10.0 * h2);
}

#[test]
fn round_trip_product_family() {
    let spec = GridSpec::spanning((0.2, 1.2), (0.1, 1.1), 65, 65).unwrap();
    let fam = build_product_family(spec, 1.5, 1.5).unwrap();
    let frame0 = auto_frame0(&fam.coeffs, &r0());
    let (field, _) = integrate_frame(&fam.coeffs, &r0(), &frame0, IntegrateOptions::default()).unwrap();
    let (c, _) = reconstruct_coefficients(&field.mesh(), &r0(), None).unwrap();
    let tol = 10.0 * spec.h() * spec.h() * (1.0 + fam.coeffs.scale());
    let diff = |a: &RealField, b: &RealField| a.zip_with(b, |x, y| x - y).unwrap().max_abs();
    assert!(diff(&c.lambda, &fam.coeffs.lambda) <= tol);
    assert!(diff(&minors_norm(&c), &minors_norm(&fam.coeffs)) <= tol);
    assert!(diff(&second_form_norm(&c, &r0()), &second_form_norm(&fam.coeffs, &r0())) <= tol);
    assert!(normal_flatness_defect(&c).max_abs() <= tol);
}

#[test]
fn reconstruct_rejects_wrong_signature() {
    let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 5, 5).unwrap();
    let mesh = SurfaceMesh::from_fn(spec, 4, |u, v| vec![u, v, 0.0, 0.0]).unwrap();
    let nt = CaseSpec::new(CaseId::NT, 0.0);
    assert!(matches!(reconstruct_coefficients(&mesh, &nt, None), Err(Error::Signature(_))));
    let sphere = CaseSpec::new(CaseId::R, 1.0);
    assert!(matches!(reconstruct_coefficients(&mesh, &sphere, None), Err(Error::Signature(_))));
}

#[test]
fn reconstruct_rejects_non_conformal_mesh() {
    let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 9, 9).unwrap();
    let mesh = SurfaceMesh::from_fn(spec, 4, |u, v| vec![2.0 * u, v, 0.0, 0.0]).unwrap();
    assert!(matches!(reconstruct_coefficients(&mesh, &r0(), None), Err(Error::NotConformal(_))));
}

#[test]
fn obj_of_small_plane() {
    let spec = GridSpec { u0: 0.0, v0: 0.0, du: 1.0, dv: 1.0, nu: 2, nv: 2 };
    let mesh = SurfaceMesh::from_fn(spec, 4, |u, v| vec![u, v, 0.0, 0.0]).unwrap();
    let obj = mesh_to_obj(&mesh, [0, 1, 2]).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 4);
    let faces: Vec<&str> = obj.lines().filter(|l| l.starts_with("f ")).collect();
    assert_eq!(faces, vec!["f 1 2 4 3"]);
    assert!(mesh_to_obj(&mesh, [0, 1, 4]).is_err());
}

#[test]
fn torus_obj_vertex_count() {
    let spec = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 7, 5).unwrap();
    let mesh = SurfaceMesh::from_fn(spec, 4, |u, v| vec![u.cos(), u.sin(), v.cos(), v.sin()]).unwrap();
    let obj = mesh_to_obj(&mesh, [0, 1, 2]).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 35);
    assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 24);
}

#[test]
fn csv_round_trips_exactly() {
    let spec = GridSpec::spanning((0.1, 0.9), (-0.3, 0.4), 6, 5).unwrap();
    let mesh = SurfaceMesh::from_fn(spec, 5, |u, v| vec![u.exp(), v.sin() / 3.0, 1e-17 * u, -v, 0.1 + u * v]).unwrap();
    let back = mesh_from_csv(&mesh_to_csv(&mesh)).unwrap();
    assert_eq!(back.points, mesh.points);
    assert_eq!(back.dim, 5);
    assert_eq!((back.spec.nu, back.spec.nv), (6, 5));
    assert!((back.spec.du - spec.du).abs() < 1e-15);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    export_mesh(&mesh, MeshFormat::Csv, [0, 1, 2], &path).unwrap();
    let loaded = mesh_from_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(loaded.points, mesh.points);
}
