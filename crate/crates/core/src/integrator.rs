//! Integration of the frame system into an immersion, and recovery of coefficients from
//! a sampled immersion.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix5};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frames::{compatibility_defect, connection_at, CoefficientSet, LambdaGradient};
use crate::gcr::default_tolerance;
use crate::grid::{GridSpec, RealField};
use crate::spaceform::{ambient_signature, column_axes, AmbientSignature, CaseSpec};

/// Sampled moving frame. Column `c` of each matrix is `(T₁, T₂, N₁, N₂, F)[c]` in ambient
/// coordinates; rows beyond the ambient dimension are zero.
#[derive(Debug, Clone)]
pub struct FrameField {
    pub spec: GridSpec,
    pub case: CaseSpec,
    pub frames: Vec<Matrix5<f64>>,
}

impl FrameField {
    pub fn signature(&self) -> AmbientSignature {
        ambient_signature(&self.case)
    }

    pub fn at(&self, i: usize, j: usize) -> &Matrix5<f64> {
        &self.frames[self.spec.index(i, j)]
    }

    pub fn mesh(&self) -> SurfaceMesh {
        let dim = self.signature().dim;
        SurfaceMesh {
            spec: self.spec,
            dim,
            points: self.frames.iter().map(|m| column_array(m, 4)).collect(),
        }
    }
}

fn column_array(m: &Matrix5<f64>, c: usize) -> [f64; 5] {
    std::array::from_fn(|r| m[(r, c)])
}

/// Grid of ambient positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub spec: GridSpec,
    pub dim: usize,
    /// Coordinates padded to length 5.
    pub points: Vec<[f64; 5]>,
}

impl SurfaceMesh {
    pub fn from_fn(spec: GridSpec, dim: usize, f: impl Fn(f64, f64) -> Vec<f64>) -> Result<Self> {
        let mut points = Vec::with_capacity(spec.len());
        for k in 0..spec.len() {
            let (u, v) = spec.point(k);
            let x = f(u, v);
            if x.len() != dim {
                return Err(Error::Shape(format!("point of length {} in dimension {dim}", x.len())));
            }
            let mut p = [0.0; 5];
            p[..dim].copy_from_slice(&x);
            points.push(p);
        }
        Ok(Self { spec, dim, points })
    }

    /// Coordinate `a` as a field.
    pub fn coordinate(&self, a: usize) -> RealField {
        RealField::from_index(self.spec, |k| self.points[k][a])
    }
}

/// Frame-integration diagnostics.
#[derive(Debug, Clone, Default)]
pub struct DriftReport {
    /// Largest relative deviation of the frame Gram matrix from its prescribed form.
    pub gram_drift: f64,
    /// `max |⟨F, F⟩ − 1/L0|` (zero when `L0 = 0`).
    pub quadric_drift: f64,
    /// Largest compatibility defect of the input coefficients.
    pub compatibility_max: f64,
    /// Set when the coefficients fail the compatibility test at the default tolerance.
    pub warning: Option<String>,
    /// `max |Φ_row-first − Φ_column-first|`, when requested.
    pub path_defect: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IntegrateOptions {
    /// Rescale `F` onto the quadric after integration (`L0 ≠ 0` only).
    pub project_quadric: bool,
    /// Also integrate columns first and report the difference.
    pub path_diagnostic: bool,
}

/// Prescribed Gram diagonal `(g₁e^{2λ}, g₂e^{2λ}, n₁e^{2λ}, n₂e^{2λ}, 1/L0)`.
fn gram_target(case: &CaseSpec, lambda: f64) -> [f64; 5] {
    let s = case.conventions().frame_signs();
    let e = (2.0 * lambda).exp();
    let f = if case.l0 != 0.0 { 1.0 / case.l0 } else { 0.0 };
    [s[0] * e, s[1] * e, s[2] * e, s[3] * e, f]
}

/// Relative deviation of `Φᵀ η Φ` from the prescribed Gram matrix.
pub fn gram_defect(frame: &Matrix5<f64>, case: &CaseSpec, lambda: f64) -> f64 {
    let eta = Matrix5::from_diagonal(&ambient_signature(case).padded().into());
    let g = frame.transpose() * eta * frame;
    let target = gram_target(case, lambda);
    let n = if case.l0 != 0.0 { 5 } else { 4 };
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let want = if a == b { target[a] } else { 0.0 };
            let scale = (target[a].abs() * target[b].abs()).sqrt();
            worst = worst.max((g[(a, b)] - want).abs() / scale);
        }
    }
    worst
}

/// Canonical initial frame: ambient axes matching each column's causal type, scaled by
/// `e^{λ}` at the base point; `F` on the quadric (or at the origin when `L0 = 0`).
pub fn auto_frame0(coeffs: &CoefficientSet, case: &CaseSpec) -> Matrix5<f64> {
    let scale = coeffs.lambda.get(0).exp();
    let axes = column_axes(case);
    let mut m = Matrix5::zeros();
    for (c, axis) in axes.iter().enumerate().take(4) {
        if let Some(a) = axis {
            m[(*a, c)] = scale;
        }
    }
    if case.l0 != 0.0 {
        if let Some(a) = axes[4] {
            m[(a, 4)] = 1.0 / case.l0.abs().sqrt();
        }
    }
    m
}

fn rk4_step(
    phi: &Matrix5<f64>,
    a0: &Matrix5<f64>,
    am: &Matrix5<f64>,
    a1: &Matrix5<f64>,
    h: f64,
) -> Matrix5<f64> {
    let k1 = phi * a0;
    let k2 = (phi + k1 * (0.5 * h)) * am;
    let k3 = (phi + k2 * (0.5 * h)) * am;
    let k4 = (phi + k3 * h) * a1;
    phi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

struct Connection {
    s: Vec<Matrix5<f64>>,
    t: Vec<Matrix5<f64>>,
    s_mid: Vec<Matrix5<f64>>,
    t_mid: Vec<Matrix5<f64>>,
}

impl Connection {
    fn build(coeffs: &CoefficientSet, case: &CaseSpec) -> Self {
        let spec = *coeffs.spec();
        let grad = LambdaGradient::fourth_order(coeffs);
        let at = |p| connection_at(case.case_id, case.l0, &p);
        let (s, t): (Vec<_>, Vec<_>) =
            (0..spec.len()).into_par_iter().map(|k| at(coeffs.point(&grad, k))).unzip();
        // Midpoints of every u-cell and every v-cell, each indexed like its lower node.
        let s_mid = (0..spec.len())
            .into_par_iter()
            .map(|k| {
                let (i, j) = spec.coords(k);
                if i + 1 < spec.nu { at(coeffs.point_mid_u(&grad, i, j)).0 } else { Matrix5::zeros() }
            })
            .collect();
        let t_mid = (0..spec.len())
            .into_par_iter()
            .map(|k| {
                let (i, j) = spec.coords(k);
                if j + 1 < spec.nv { at(coeffs.point_mid_v(&grad, i, j)).1 } else { Matrix5::zeros() }
            })
            .collect();
        Self { s, t, s_mid, t_mid }
    }
}

fn check_finite(m: &Matrix5<f64>, spec: &GridSpec, k: usize) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        let (u, v) = spec.point(k);
        Err(Error::Overflow { u, v })
    }
}

fn propagate(spec: &GridSpec, conn: &Connection, frame0: Matrix5<f64>, rows_first: bool) -> Result<Vec<Matrix5<f64>>> {
    let mut out = vec![Matrix5::zeros(); spec.len()];
    out[0] = frame0;
    if rows_first {
        for i in 1..spec.nu {
            let (a, b) = (spec.index(i - 1, 0), spec.index(i, 0));
            out[b] = rk4_step(&out[a], &conn.s[a], &conn.s_mid[a], &conn.s[b], spec.du);
            check_finite(&out[b], spec, b)?;
        }
        let columns: Vec<Vec<Matrix5<f64>>> = (0..spec.nu)
            .into_par_iter()
            .map(|i| {
                let mut col = vec![out[i]];
                for j in 1..spec.nv {
                    let (a, b) = (spec.index(i, j - 1), spec.index(i, j));
                    let next = rk4_step(&col[j - 1], &conn.t[a], &conn.t_mid[a], &conn.t[b], spec.dv);
                    check_finite(&next, spec, b)?;
                    col.push(next);
                }
                Ok(col)
            })
            .collect::<Result<_>>()?;
        for (i, col) in columns.into_iter().enumerate() {
            for (j, m) in col.into_iter().enumerate() {
                out[spec.index(i, j)] = m;
            }
        }
    } else {
        for j in 1..spec.nv {
            let (a, b) = (spec.index(0, j - 1), spec.index(0, j));
            out[b] = rk4_step(&out[a], &conn.t[a], &conn.t_mid[a], &conn.t[b], spec.dv);
            check_finite(&out[b], spec, b)?;
        }
        let rows: Vec<Vec<Matrix5<f64>>> = (0..spec.nv)
            .into_par_iter()
            .map(|j| {
                let mut row = vec![out[spec.index(0, j)]];
                for i in 1..spec.nu {
                    let (a, b) = (spec.index(i - 1, j), spec.index(i, j));
                    let next = rk4_step(&row[i - 1], &conn.s[a], &conn.s_mid[a], &conn.s[b], spec.du);
                    check_finite(&next, spec, b)?;
                    row.push(next);
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        for (j, row) in rows.into_iter().enumerate() {
            for (i, m) in row.into_iter().enumerate() {
                out[spec.index(i, j)] = m;
            }
        }
    }
    Ok(out)
}

/// Integrates `∂_u Φ = ΦS`, `∂_v Φ = ΦT` with classical fourth-order Runge–Kutta steps,
/// first along the base row and then up every column.
pub fn integrate_frame(
    coeffs: &CoefficientSet,
    case: &CaseSpec,
    frame0: &Matrix5<f64>,
    options: IntegrateOptions,
) -> Result<(FrameField, DriftReport)> {
    let spec = *coeffs.spec();
    let initial = gram_defect(frame0, case, coeffs.lambda.get(0));
    if initial > 1e-10 {
        return Err(Error::Config(format!(
            "initial frame violates the Gram conditions by {initial:.3e}"
        )));
    }
    let compat = compatibility_defect(coeffs, case).max_abs();
    let tol = default_tolerance(&spec, coeffs.scale());
    let warning = (compat > tol).then(|| {
        format!("coefficients fail the compatibility test: defect {compat:.3e} > {tol:.3e}")
    });

    let conn = Connection::build(coeffs, case);
    let mut frames = propagate(&spec, &conn, *frame0, true)?;
    let path_defect = if options.path_diagnostic {
        let other = propagate(&spec, &conn, *frame0, false)?;
        Some(
            frames
                .iter()
                .zip(&other)
                .map(|(a, b)| (a - b).abs().max())
                .fold(0.0, f64::max),
        )
    } else {
        None
    };

    let sig = ambient_signature(case);
    if options.project_quadric && case.l0 != 0.0 {
        for m in frames.iter_mut() {
            project_quadric(m, &sig, case.l0);
        }
    }

    let gram_drift = frames
        .par_iter()
        .enumerate()
        .map(|(k, m)| gram_defect(m, case, coeffs.lambda.get(k)))
        .reduce(|| 0.0, f64::max);
    let quadric_drift = if case.l0 != 0.0 {
        frames
            .iter()
            .map(|m| (inner5(&column_array(m, 4), &column_array(m, 4), &sig) - 1.0 / case.l0).abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let report = DriftReport { gram_drift, quadric_drift, compatibility_max: compat, warning, path_defect };
    Ok((FrameField { spec, case: *case, frames }, report))
}

fn inner5(x: &[f64; 5], y: &[f64; 5], sig: &AmbientSignature) -> f64 {
    let s = sig.padded();
    (0..5).map(|a| s[a] * x[a] * y[a]).sum()
}

/// Rescales the position column onto `⟨F, F⟩ = 1/L0` when its sign allows.
pub fn project_quadric(frame: &mut Matrix5<f64>, sig: &AmbientSignature, l0: f64) {
    let f = column_array(frame, 4);
    let q = inner5(&f, &f, sig);
    let ratio = (1.0 / l0) / q;
    if ratio > 0.0 && ratio.is_finite() {
        let c = ratio.sqrt();
        for r in 0..5 {
            frame[(r, 4)] *= c;
        }
    }
}

/// Diagnostics from coefficient recovery.
#[derive(Debug, Clone)]
pub struct GaugeReport {
    /// `max (|g₁⟨T₁,T₁⟩ − g₂⟨T₂,T₂⟩| + 2|⟨T₁,T₂⟩|) / (|⟨T₁,T₁⟩| + |⟨T₂,T₂⟩|)`.
    pub conformality_defect: f64,
    pub conformality_tol: f64,
    /// Normals chosen at the base point.
    pub base_normals: [Vec<f64>; 2],
}

/// Recovers coefficients from a sampled conformal immersion with fourth-order differences.
/// Normals are fixed at the base point by Gram–Schmidt against the ambient axes and carried
/// continuously across the grid.
pub fn reconstruct_coefficients(
    mesh: &SurfaceMesh,
    case: &CaseSpec,
    conformality_tol: Option<f64>,
) -> Result<(CoefficientSet, GaugeReport)> {
    let spec = mesh.spec;
    spec.validate()?;
    let sig = ambient_signature(case);
    if mesh.dim != sig.dim {
        return Err(Error::Signature(format!(
            "mesh lives in dimension {} but case {} with L0 = {} needs {}",
            mesh.dim, case.case_id, case.l0, sig.dim
        )));
    }
    let dim = sig.dim;
    let conv = case.conventions();
    let eta = DVector::from_vec(sig.signs.clone());
    let ip = |x: &DVector<f64>, y: &DVector<f64>| x.component_mul(&eta).dot(y);

    let coords: Vec<RealField> = (0..dim).map(|a| mesh.coordinate(a)).collect();
    let per = |f: &dyn Fn(&RealField) -> RealField| -> Vec<RealField> { coords.iter().map(f).collect() };
    let t1 = per(&|c| c.diff_u4());
    let t2 = per(&|c| c.diff_v4());
    let fuu: Vec<RealField> = t1.iter().map(|f| f.diff_u4()).collect();
    let fuv: Vec<RealField> = t1.iter().map(|f| f.diff_v4()).collect();
    let fvv: Vec<RealField> = t2.iter().map(|f| f.diff_v4()).collect();
    let vec_at = |fs: &[RealField], k: usize| DVector::from_iterator(dim, fs.iter().map(|f| f.get(k)));
    let pos_at = |k: usize| DVector::from_iterator(dim, mesh.points[k][..dim].iter().copied());

    let mut lambda = vec![0.0; spec.len()];
    let mut worst: f64 = 0.0;
    let mut curvature_scale: f64 = 0.0;
    for (k, lam) in lambda.iter_mut().enumerate() {
        let (a, b) = (vec_at(&t1, k), vec_at(&t2, k));
        let (g11, g22, g12) = (ip(&a, &a), ip(&b, &b), ip(&a, &b));
        if g11 * conv.g_signs[0] <= 0.0 || g22 * conv.g_signs[1] <= 0.0 {
            let (u, v) = spec.point(k);
            return Err(Error::Signature(format!(
                "tangent causal type at ({u}, {v}) does not match case {}: ⟨T₁,T₁⟩ = {g11:.3e}, ⟨T₂,T₂⟩ = {g22:.3e}",
                case.case_id
            )));
        }
        let denom = g11.abs() + g22.abs();
        worst = worst.max(((conv.g_signs[0] * g11 - conv.g_signs[1] * g22).abs() + 2.0 * g12.abs()) / denom);
        *lam = 0.5 * g11.abs().ln();
        let second = vec_at(&fuu, k).norm() + vec_at(&fuv, k).norm() + vec_at(&fvv, k).norm();
        curvature_scale = curvature_scale.max(second / lam.exp());
    }
    let tol = conformality_tol
        .unwrap_or_else(|| (10.0 * spec.h() * spec.h() * (1.0 + curvature_scale * curvature_scale)).max(1e-12));
    if worst > tol {
        return Err(Error::NotConformal(format!("relative defect {worst:.3e} exceeds {tol:.3e}")));
    }

    // Normal frame: base point from the axes, then continuation row-first.
    let mut n1: Vec<DVector<f64>> = vec![DVector::zeros(dim); spec.len()];
    let mut n2: Vec<DVector<f64>> = vec![DVector::zeros(dim); spec.len()];
    let tangent_basis = |k: usize| {
        let mut cols = vec![vec_at(&t1, k), vec_at(&t2, k)];
        if case.l0 != 0.0 {
            cols.push(pos_at(k));
        }
        cols
    };
    let axes: Vec<DVector<f64>> = (0..dim).map(|a| DVector::from_fn(dim, |r, _| if r == a { 1.0 } else { 0.0 })).collect();
    let choose = |basis: &[DVector<f64>], candidates: &[DVector<f64>], sign: f64, scale: f64| -> Option<DVector<f64>> {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for w in candidates {
            let p = project_out(basis, w, &ip)?;
            let q = ip(&p, &p);
            if q * sign > 0.0 && best.as_ref().is_none_or(|(b, _)| q.abs() > *b) {
                best = Some((q.abs(), p));
            }
        }
        best.map(|(q, p)| p * (scale / q.sqrt()))
    };
    let fill = |k: usize, c1: &[DVector<f64>], c2: &[DVector<f64>]| -> Result<(DVector<f64>, DVector<f64>)> {
        let scale = lambda[k].exp();
        let mut basis = tangent_basis(k);
        let a = choose(&basis, c1, conv.n_signs[0], scale);
        let a = a.ok_or_else(|| Error::Signature(format!("no normal of sign {} at index {k}", conv.n_signs[0])))?;
        basis.push(a.clone());
        let b = choose(&basis, c2, conv.n_signs[1], scale);
        let b = b.ok_or_else(|| Error::Signature(format!("no normal of sign {} at index {k}", conv.n_signs[1])))?;
        Ok((a, b))
    };
    let (a, b) = fill(0, &axes, &axes)?;
    n1[0] = a;
    n2[0] = b;
    for i in 1..spec.nu {
        let (a, b) = fill(i, &[n1[i - 1].clone()], &[n2[i - 1].clone()])?;
        n1[i] = a;
        n2[i] = b;
    }
    for j in 1..spec.nv {
        for i in 0..spec.nu {
            let (p, k) = (spec.index(i, j - 1), spec.index(i, j));
            let (a, b) = fill(k, &[n1[p].clone()], &[n2[p].clone()])?;
            n1[k] = a;
            n2[k] = b;
        }
    }

    let n1_fields: Vec<RealField> = (0..dim).map(|a| RealField::from_index(spec, |k| n1[k][a])).collect();
    let n1u: Vec<RealField> = n1_fields.iter().map(|f| f.diff_u4()).collect();
    let n1v: Vec<RealField> = n1_fields.iter().map(|f| f.diff_v4()).collect();

    let mut out: Vec<[f64; 9]> = vec![[0.0; 9]; spec.len()];
    for (k, row) in out.iter_mut().enumerate() {
        let e2 = (2.0 * lambda[k]).exp();
        let d = [vec_at(&fuu, k), vec_at(&fuv, k), vec_at(&fvv, k)];
        row[0] = lambda[k];
        for c in 0..3 {
            row[1 + c] = ip(&d[c], &n1[k]) / (conv.n_signs[0] * e2);
            row[4 + c] = ip(&d[c], &n2[k]) / (conv.n_signs[1] * e2);
        }
        row[7] = ip(&vec_at(&n1u, k), &n2[k]) / (conv.n_signs[1] * e2);
        row[8] = ip(&vec_at(&n1v, k), &n2[k]) / (conv.n_signs[1] * e2);
    }
    let fields = std::array::from_fn(|c| RealField::from_index(spec, |k| out[k][c]));
    let coeffs = CoefficientSet::from_fields(fields)?;
    let report = GaugeReport {
        conformality_defect: worst,
        conformality_tol: tol,
        base_normals: [n1[0].iter().copied().collect(), n2[0].iter().copied().collect()],
    };
    Ok((coeffs, report))
}

/// Component of `w` orthogonal to `span(basis)` in the ambient metric.
fn project_out(
    basis: &[DVector<f64>],
    w: &DVector<f64>,
    ip: &dyn Fn(&DVector<f64>, &DVector<f64>) -> f64,
) -> Option<DVector<f64>> {
    let n = basis.len();
    let gram = DMatrix::from_fn(n, n, |a, b| ip(&basis[a], &basis[b]));
    let rhs = DVector::from_fn(n, |a, _| ip(&basis[a], w));
    let coef = gram.lu().solve(&rhs)?;
    let mut p = w.clone();
    for (a, c) in coef.iter().enumerate() {
        p -= &basis[a] * *c;
    }
    Some(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Csv,
    Obj,
}

/// CSV with header `i,j,u,v,x1,…,xd`; numbers use shortest round-trip formatting.
pub fn mesh_to_csv(mesh: &SurfaceMesh) -> String {
    let mut s = String::from("i,j,u,v");
    for a in 1..=mesh.dim {
        let _ = write!(s, ",x{a}");
    }
    s.push('\n');
    for (k, p) in mesh.points.iter().enumerate() {
        let (i, j) = mesh.spec.coords(k);
        let _ = write!(s, "{i},{j},{},{}", mesh.spec.u(i), mesh.spec.v(j));
        for x in &p[..mesh.dim] {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
    }
    s
}

/// Parses [`mesh_to_csv`] output. The grid step is recovered from the coordinates.
pub fn mesh_from_csv(text: &str) -> Result<SurfaceMesh> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty mesh csv".into()))?;
    let dim = header.split(',').count().checked_sub(4).filter(|d| *d > 0)
        .ok_or_else(|| Error::Config("mesh csv header needs i,j,u,v,x1…".into()))?;
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != dim + 4 {
            return Err(Error::Config(format!("mesh csv line {}: expected {} cells", n + 2, dim + 4)));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("mesh csv line {}: bad number '{s}'", n + 2)));
        let idx = |s: &str| s.trim().parse::<usize>().map_err(|_| Error::Config(format!("mesh csv line {}: bad index '{s}'", n + 2)));
        let mut p = [0.0; 5];
        for a in 0..dim {
            p[a] = num(cells[4 + a])?;
        }
        rows.push((idx(cells[0])?, idx(cells[1])?, num(cells[2])?, num(cells[3])?, p));
    }
    let nu = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
    let nv = rows.iter().map(|r| r.1).max().map_or(0, |m| m + 1);
    if nu < 2 || nv < 2 || rows.len() != nu * nv {
        return Err(Error::Config("mesh csv does not describe a full rectangular grid".into()));
    }
    let find = |i: usize, j: usize| rows.iter().find(|r| r.0 == i && r.1 == j).map(|r| (r.2, r.3));
    let (u0, v0) = find(0, 0).ok_or_else(|| Error::Config("mesh csv lacks (0, 0)".into()))?;
    let du = (find(nu - 1, 0).map_or(u0, |p| p.0) - u0) / (nu - 1) as f64;
    let dv = (find(0, nv - 1).map_or(v0, |p| p.1) - v0) / (nv - 1) as f64;
    let spec = GridSpec { u0, v0, du, dv, nu, nv };
    let mut points = vec![[0.0; 5]; nu * nv];
    for r in &rows {
        points[spec.index(r.0, r.1)] = r.4;
    }
    Ok(SurfaceMesh { spec, dim, points })
}

/// Wavefront OBJ: vertices are the coordinates on `axes` (0-based), faces are grid quads.
pub fn mesh_to_obj(mesh: &SurfaceMesh, axes: [usize; 3]) -> Result<String> {
    if axes.iter().any(|&a| a >= mesh.dim) {
        return Err(Error::Config(format!("projection axes {axes:?} outside dimension {}", mesh.dim)));
    }
    let mut s = String::new();
    for p in &mesh.points {
        let _ = writeln!(s, "v {} {} {}", p[axes[0]], p[axes[1]], p[axes[2]]);
    }
    let spec = &mesh.spec;
    for j in 0..spec.nv - 1 {
        for i in 0..spec.nu - 1 {
            let k = |i, j| spec.index(i, j) + 1;
            let _ = writeln!(s, "f {} {} {} {}", k(i, j), k(i + 1, j), k(i + 1, j + 1), k(i, j + 1));
        }
    }
    Ok(s)
}

pub fn export_mesh(mesh: &SurfaceMesh, format: MeshFormat, axes: [usize; 3], path: &Path) -> Result<()> {
    let text = match format {
        MeshFormat::Csv => mesh_to_csv(mesh),
        MeshFormat::Obj => mesh_to_obj(mesh, axes)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}
