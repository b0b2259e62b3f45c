//! File formats: the shared JSON field file, coefficient and mesh files, family descriptors
//! and run reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::expr::parse_expr;
use crate::families::{
    build_light_family, build_notld_family, build_phi_family, build_product_family, Family, NotldInput,
    PhiFamilyInput, Source,
};
use crate::frames::{CoefficientSet, COEFFICIENT_NAMES};
use crate::grid::{ComplexField, FieldGrid, FieldKind, GridSpec, RealField};
use crate::integrator::SurfaceMesh;
use crate::spaceform::{CaseId, CaseSpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Named fields on one grid, all real or all complex.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub spec: GridSpec,
    pub kind: FieldKind,
    pub fields: BTreeMap<String, FieldGrid>,
}

#[derive(Serialize, Deserialize)]
struct RawFieldFile {
    u0: f64,
    v0: f64,
    du: f64,
    dv: f64,
    nu: usize,
    nv: usize,
    kind: FieldKind,
    fields: BTreeMap<String, Vec<f64>>,
}

impl FieldFile {
    pub fn new(spec: GridSpec, kind: FieldKind) -> Self {
        Self { spec, kind, fields: BTreeMap::new() }
    }

    /// Adds a field; a real field added to a complex file is promoted.
    pub fn insert(&mut self, name: &str, field: FieldGrid) -> Result<()> {
        self.spec
            .ensure_same(field.spec())
            .map_err(|_| Error::Shape(format!("field '{name}' is on a different grid")))?;
        let field = match (self.kind, field) {
            (FieldKind::Complex, f) => FieldGrid::Complex(f.to_complex()),
            (FieldKind::Real, FieldGrid::Real(f)) => FieldGrid::Real(f),
            (FieldKind::Real, FieldGrid::Complex(_)) => {
                return Err(Error::Config(format!("complex field '{name}' in a real field file")))
            }
        };
        self.fields.insert(name.to_string(), field);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&FieldGrid> {
        self.fields
            .get(name)
            .ok_or_else(|| Error::Config(format!("field file has no field '{name}'")))
    }

    pub fn real(&self, name: &str) -> Result<&RealField> {
        self.get(name)?
            .as_real()
            .ok_or_else(|| Error::Config(format!("field '{name}' is complex, a real field is needed")))
    }

    pub fn to_json(&self) -> Result<String> {
        let fields = self
            .fields
            .iter()
            .map(|(name, f)| {
                let flat = match f {
                    FieldGrid::Real(r) => r.values().to_vec(),
                    FieldGrid::Complex(c) => c.values().iter().flat_map(|z| [z.re, z.im]).collect(),
                };
                (name.clone(), flat)
            })
            .collect();
        let s = &self.spec;
        let raw = RawFieldFile { u0: s.u0, v0: s.v0, du: s.du, dv: s.dv, nu: s.nu, nv: s.nv, kind: self.kind, fields };
        Ok(serde_json::to_string(&raw)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawFieldFile = serde_json::from_str(text)?;
        let spec = GridSpec::new(raw.u0, raw.v0, raw.du, raw.dv, raw.nu, raw.nv)?;
        let mut out = Self::new(spec, raw.kind);
        for (name, flat) in raw.fields {
            let field = match raw.kind {
                FieldKind::Real => FieldGrid::Real(
                    RealField::new(spec, flat).map_err(|e| Error::Config(format!("field '{name}': {e}")))?,
                ),
                FieldKind::Complex => {
                    if flat.len() % 2 != 0 {
                        return Err(Error::Config(format!("complex field '{name}' has an odd value count")));
                    }
                    let values = flat.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
                    FieldGrid::Complex(
                        ComplexField::new(spec, values).map_err(|e| Error::Config(format!("field '{name}': {e}")))?,
                    )
                }
            };
            out.fields.insert(name, field);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Coefficient set as a real field file with the names of [`COEFFICIENT_NAMES`].
pub fn coefficients_to_file(coeffs: &CoefficientSet) -> FieldFile {
    let mut file = FieldFile::new(*coeffs.spec(), FieldKind::Real);
    for (name, f) in coeffs.named() {
        file.fields.insert(name.to_string(), FieldGrid::Real(f.clone()));
    }
    file
}

pub fn coefficients_from_file(file: &FieldFile) -> Result<CoefficientSet> {
    let mut fields = Vec::with_capacity(9);
    for name in COEFFICIENT_NAMES {
        fields.push(file.real(name)?.clone());
    }
    let fields: [RealField; 9] = fields.try_into().expect("nine coefficient names");
    CoefficientSet::from_fields(fields)
}

/// Mesh as a real field file with fields `x1, …, xd`.
pub fn mesh_to_file(mesh: &SurfaceMesh) -> FieldFile {
    let mut file = FieldFile::new(mesh.spec, FieldKind::Real);
    for a in 0..mesh.dim {
        file.fields.insert(format!("x{}", a + 1), FieldGrid::Real(mesh.coordinate(a)));
    }
    file
}

pub fn mesh_from_file(file: &FieldFile) -> Result<SurfaceMesh> {
    let dim = (1..=5).take_while(|a| file.fields.contains_key(&format!("x{a}"))).count();
    if dim < 3 {
        return Err(Error::Config("mesh file needs coordinate fields x1, x2, x3, …".into()));
    }
    let coords: Vec<&RealField> = (1..=dim).map(|a| file.real(&format!("x{a}"))).collect::<Result<_>>()?;
    let points = (0..file.spec.len())
        .map(|k| std::array::from_fn(|a| if a < dim { coords[a].get(k) } else { 0.0 }))
        .collect();
    Ok(SurfaceMesh { spec: file.spec, dim, points })
}

/// Grid given either by its fields or by the box it spans.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum GridDescriptor {
    Spec { u0: f64, v0: f64, du: f64, dv: f64, nu: usize, nv: usize },
    Span { u: (f64, f64), v: (f64, f64), nu: usize, nv: usize },
}

impl GridDescriptor {
    pub fn spec(&self) -> Result<GridSpec> {
        match *self {
            GridDescriptor::Spec { u0, v0, du, dv, nu, nv } => GridSpec::new(u0, v0, du, dv, nu, nv),
            GridDescriptor::Span { u, v, nu, nv } => GridSpec::spanning(u, v, nu, nv),
        }
    }
}

/// `{"family", "case", "grid", "params"}`; `family` and `case` may instead come from the caller.
#[derive(Debug, Clone, Deserialize)]
pub struct FamilyDescriptor {
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub case: Option<CaseSpec>,
    pub grid: GridDescriptor,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

impl FamilyDescriptor {
    /// Reads a descriptor; relative field-file references resolve against its directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let desc: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((desc, base))
    }

    /// Builds the family. `family` and `case` override the descriptor's own entries.
    pub fn build(&self, family: Option<&str>, case: Option<CaseSpec>, base: &Path) -> Result<Family> {
        let family = family
            .or(self.family.as_deref())
            .ok_or_else(|| Error::Config("no family given".into()))?;
        let case = case.or(self.case);
        let spec = self.grid.spec()?;
        let p = Params { map: &self.params, base, spec };
        match family {
            "product" => {
                let r = p.number_or("r", 1.0)?;
                build_product_family(spec, p.number_or("r1", r)?, p.number_or("r2", r)?)
            }
            "phi" => {
                let case = case.unwrap_or(CaseSpec::new(CaseId::R, 0.0));
                let input = PhiFamilyInput {
                    lambda: p.source_or("lambda", "0")?,
                    phi: p.source("phi")?,
                    theta: p.source("theta")?,
                    xi: parse_expr(&p.string_or("xi", "0")?)?,
                };
                build_phi_family(spec, &input, &case)
            }
            "notld" => {
                let case = case.ok_or_else(|| Error::Config("the notld family needs a case".into()))?;
                let mut input = NotldInput::new(p.source_or("lambda", "0")?, p.source("angle")?);
                input.f_plus = p.optional_source("f_plus")?;
                input.f_minus = p.optional_source("f_minus")?;
                input.f = p.optional_source("f")?;
                input.link_angle = p.optional_source("link_angle")?;
                input.eps_prime = p.number_or("eps_prime", 1.0)? as i8;
                input.gamma0 = p.number_or("gamma0", 0.0)?;
                build_notld_family(spec, &input, &case)
            }
            "light" => {
                let eps = p.number_or("eps", f64::from(case.map_or(1, |c| c.eps)))? as i8;
                build_light_family(spec, &p.source("phi")?, &p.source_or("gamma", "0")?, eps)
            }
            other => Err(Error::Config(format!("unknown family '{other}' (expected product, phi, notld or light)"))),
        }
    }
}

struct Params<'a> {
    map: &'a BTreeMap<String, Value>,
    base: &'a Path,
    spec: GridSpec,
}

impl Params<'_> {
    fn number_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| Error::Config(format!("parameter '{key}' must be a number"))),
        }
    }

    fn string_or(&self, key: &str, default: &str) -> Result<String> {
        match self.map.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(_) => Err(Error::Config(format!("parameter '{key}' must be an expression string"))),
        }
    }

    fn source(&self, key: &str) -> Result<Source> {
        self.optional_source(key)?
            .ok_or_else(|| Error::Config(format!("missing parameter '{key}'")))
    }

    fn source_or(&self, key: &str, default: &str) -> Result<Source> {
        match self.optional_source(key)? {
            Some(s) => Ok(s),
            None => Source::parse(default),
        }
    }

    fn optional_source(&self, key: &str) -> Result<Option<Source>> {
        self.map.get(key).map(|v| source_from_value(v, self.base, &self.spec)).transpose()
    }
}

/// A number, an expression string, or `{"file": path, "field": name}`.
pub fn source_from_value(value: &Value, base: &Path, spec: &GridSpec) -> Result<Source> {
    match value {
        Value::Number(n) => Ok(Source::constant(n.as_f64().unwrap_or(f64::NAN))),
        Value::String(s) => Source::parse(s),
        Value::Object(m) => {
            let file = m
                .get("file")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Config("field reference needs a \"file\" entry".into()))?;
            let name = m
                .get("field")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Config("field reference needs a \"field\" entry".into()))?;
            let loaded = FieldFile::load(&base.join(file))?;
            spec.ensure_same(&loaded.spec)
                .map_err(|_| Error::Config(format!("grid of '{file}' differs from the descriptor grid")))?;
            Ok(Source::Field(loaded.get(name)?.clone()))
        }
        _ => Err(Error::Config(format!("cannot read a field from {value}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub max: f64,
    pub mean: f64,
}

impl MetricSummary {
    pub fn of(field: &RealField) -> Self {
        Self { max: field.max_abs(), mean: field.mean_abs() }
    }

    pub fn scalar(x: f64) -> Self {
        Self { max: x, mean: x }
    }
}

/// Deterministic JSON run report.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool_version: &'static str,
    pub case: CaseSpec,
    pub grid: GridSpec,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub verdicts: BTreeMap<String, Value>,
}

impl Report {
    pub fn new(case: CaseSpec, grid: GridSpec) -> Self {
        Self { tool_version: TOOL_VERSION, case, grid, metrics: BTreeMap::new(), verdicts: BTreeMap::new() }
    }

    pub fn metric(&mut self, name: &str, summary: MetricSummary) {
        self.metrics.insert(name.to_string(), summary);
    }

    pub fn verdict(&mut self, name: &str, value: impl Into<Value>) {
        self.verdicts.insert(name.to_string(), value.into());
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
