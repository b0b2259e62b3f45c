use std::collections::BTreeMap;

use normalflat::families::build_product_family;
use normalflat::grid::{ComplexField, FieldGrid, FieldKind, GridSpec, RealField};
use normalflat::integrator::SurfaceMesh;
use normalflat::io::{
    coefficients_from_file, coefficients_to_file, mesh_from_file, mesh_to_file, FamilyDescriptor, FieldFile,
    MetricSummary, Report,
};
use normalflat::spaceform::{CaseId, CaseSpec};
use normalflat::Error;
use num_complex::Complex64;
use proptest::prelude::*;

fn spec() -> GridSpec {
    GridSpec::spanning((0.0, 1.0), (-1.0, 1.0), 6, 5).unwrap()
}

#[test]
fn field_file_layout() {
    let mut file = FieldFile::new(spec(), FieldKind::Complex);
    file.insert("z", FieldGrid::Complex(ComplexField::from_fn(spec(), Complex64::new))).unwrap();
    let json: serde_json::Value = serde_json::from_str(&file.to_json().unwrap()).unwrap();
    assert_eq!(json["kind"], "complex");
    assert_eq!(json["nu"], 6);
    assert_eq!(json["dv"], 0.5);
    let z = json["fields"]["z"].as_array().unwrap();
    assert_eq!(z.len(), 60);
    // Second sample is (u, v) = (0.2, −1): interleaved as re, im.
    assert_eq!((z[2].as_f64().unwrap(), z[3].as_f64().unwrap()), (0.2, -1.0));
}

#[test]
fn real_file_rejects_complex_field() {
    let mut file = FieldFile::new(spec(), FieldKind::Real);
    let z = FieldGrid::Complex(ComplexField::zeros(spec()));
    assert!(matches!(file.insert("z", z), Err(Error::Config(_))));
    let other = GridSpec::spanning((0.0, 1.0), (0.0, 1.0), 5, 5).unwrap();
    assert!(matches!(file.insert("w", FieldGrid::Real(RealField::zeros(other))), Err(Error::Shape(_))));
}

#[test]
fn malformed_files_are_rejected() {
    let bad_len = r#"{"u0":0,"v0":0,"du":0.1,"dv":0.1,"nu":5,"nv":5,"kind":"real","fields":{"a":[1,2]}}"#;
    assert!(matches!(FieldFile::from_json(bad_len), Err(Error::Config(_))));
    let odd = r#"{"u0":0,"v0":0,"du":0.1,"dv":0.1,"nu":5,"nv":5,"kind":"complex","fields":{"a":[1]}}"#;
    assert!(matches!(FieldFile::from_json(odd), Err(Error::Config(_))));
    let small = r#"{"u0":0,"v0":0,"du":0.1,"dv":0.1,"nu":2,"nv":5,"kind":"real","fields":{}}"#;
    assert!(matches!(FieldFile::from_json(small), Err(Error::Grid(_))));
    assert!(matches!(FieldFile::from_json("{"), Err(Error::Json(_))));
}

#[test]
fn coefficient_file_round_trip() {
    let fam = build_product_family(spec(), 1.0, 1.0).unwrap();
    let file = coefficients_to_file(&fam.coeffs);
    assert_eq!(file.fields.len(), 9);
    let back = coefficients_from_file(&FieldFile::from_json(&file.to_json().unwrap()).unwrap()).unwrap();
    assert_eq!(back, fam.coeffs);
    let mut missing = file.clone();
    missing.fields.remove("mu2");
    assert!(matches!(coefficients_from_file(&missing), Err(Error::Config(_))));
}

#[test]
fn mesh_file_round_trip() {
    let mesh = SurfaceMesh::from_fn(spec(), 5, |u, v| vec![u, v, u * v, 1.0, -u]).unwrap();
    let back = mesh_from_file(&FieldFile::from_json(&mesh_to_file(&mesh).to_json().unwrap()).unwrap()).unwrap();
    assert_eq!(back, mesh);
}

#[test]
fn descriptor_builds_families() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = FieldFile::new(spec(), FieldKind::Real);
    file.insert("fm", FieldGrid::Real(RealField::from_fn(spec(), |u, _| u))).unwrap();
    file.save(&dir.path().join("fm.json")).unwrap();
    let desc = r#"{
        "family": "notld", "case": {"case": "R", "l0": 0.0},
        "grid": {"u": [0.0, 1.0], "v": [-1.0, 1.0], "nu": 6, "nv": 5},
        "params": {"f_minus": {"file": "fm.json", "field": "fm"}, "link_angle": 0.7, "angle": "0.3"}
    }"#;
    let path = dir.path().join("d.json");
    std::fs::write(&path, desc).unwrap();
    let (d, base) = FamilyDescriptor::load(&path).unwrap();
    let fam = d.build(None, None, &base).unwrap();
    assert!(fam.certificate.passed, "{:?}", fam.certificate);

    let product: FamilyDescriptor =
        serde_json::from_str(r#"{"grid": {"u0": 0, "v0": 0, "du": 0.1, "dv": 0.1, "nu": 5, "nv": 5}, "params": {"r": 2.0}}"#).unwrap();
    let fam = product.build(Some("product"), None, &base).unwrap();
    assert!((fam.coeffs.lambda.get(0) - 2f64.ln()).abs() < 1e-15);
    assert!(matches!(product.build(Some("sphere"), None, &base), Err(Error::Config(_))));
    assert!(matches!(product.build(Some("notld"), None, &base), Err(Error::Config(_))));
}

#[test]
fn report_schema_is_stable() {
    let mut r = Report::new(CaseSpec::new(CaseId::NT, 0.0), spec());
    r.metric("b", MetricSummary::scalar(1.0));
    r.metric("a", MetricSummary { max: 2.0, mean: 0.5 });
    r.verdict("verdict", "none");
    let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["case", "grid", "metrics", "tool_version", "verdicts"]);
    assert_eq!(v["case"]["case"], "NT");
    assert_eq!(v["metrics"]["a"]["mean"], 0.5);
    assert_eq!(r.to_json().unwrap(), r.clone().to_json().unwrap());
    let text = r.to_json().unwrap();
    assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
}

proptest! {
    #[test]
    fn field_file_round_trips_bit_exactly(bits in proptest::collection::vec(any::<u64>(), 60)) {
        let vals: Vec<f64> = bits.iter().map(|b| f64::from_bits(*b)).map(|x| if x.is_finite() { x } else { 0.0 }).collect();
        let mut file = FieldFile::new(spec(), FieldKind::Complex);
        let z = ComplexField::from_index(spec(), |k| Complex64::new(vals[k], vals[59 - k]));
        file.insert("z", FieldGrid::Complex(z)).unwrap();
        file.insert("r", FieldGrid::Real(RealField::from_index(spec(), |k| vals[(k * 7) % 60]))).unwrap();
        let back = FieldFile::from_json(&file.to_json().unwrap()).unwrap();
        let same = |a: &FieldGrid, b: &FieldGrid| {
            let (a, b) = (a.to_complex(), b.to_complex());
            a.values().iter().zip(b.values()).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
        };
        prop_assert_eq!(back.spec, file.spec);
        let names: BTreeMap<_, _> = file.fields.iter().collect();
        for (name, f) in names {
            prop_assert!(same(f, &back.fields[name]));
        }
    }
}
