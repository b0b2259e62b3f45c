//! The over-determined Riccati-type system `dt = ω₀ + tω₁ + t²ω₂` for the angle variable
//! of the not-linearly-dependent construction, and its integrability obstruction.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{Expr, ExprJet};
use crate::families::Source;
use crate::gcr::{default_tolerance, env_tolerance};
use crate::grid::{GridSpec, RealField};
use crate::spaceform::{CaseId, CaseSpec};

/// `p du + q dv`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneForm {
    pub u: RealField,
    pub v: RealField,
}

impl OneForm {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { u: RealField::zeros(spec), v: RealField::zeros(spec) }
    }

    /// Coefficient of `du ∧ dv` in `dω`.
    pub fn exterior(&self) -> RealField {
        let qu = self.v.diff_u();
        let pv = self.u.diff_v();
        qu.zip_with(&pv, |a, b| a - b).expect("shared grid")
    }

    /// Coefficient of `du ∧ dv` in `self ∧ other`.
    pub fn wedge(&self, other: &OneForm) -> RealField {
        RealField::from_index(*self.u.spec(), |k| {
            self.u.get(k) * other.v.get(k) - self.v.get(k) * other.u.get(k)
        })
    }
}

/// Closed-form generator of the forms, used for exact midpoint values.
#[derive(Debug, Clone)]
struct ExactForms {
    f_minus: ExprJet,
    xi: Expr,
}

/// Forms `ω₀, ω₁, ω₂` and the obstruction 2-forms `Ω₀, Ω₁, Ω₂` (as `du ∧ dv` coefficients).
#[derive(Debug, Clone)]
pub struct RiccatiForms {
    pub spec: GridSpec,
    pub case: CaseSpec,
    pub omega: [OneForm; 3],
    pub big_omega: [RealField; 3],
    exact: Option<ExactForms>,
}

/// Vectors `(a, b, c)` at a point from `f₋` derivatives and `ξ̃(f₋)`, already reordered into
/// `(ω₀, ω₁, ω₂)` for the active case.
fn form_vectors(case: &CaseSpec, d: [f64; 5], xi: f64) -> Result<[[f64; 2]; 3]> {
    let [fu, fv, fuu, fuv, fvv] = d;
    let mv = |m: [[f64; 2]; 2], x: [f64; 2]| [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]];
    let add = |x: [f64; 2], y: [f64; 2]| [x[0] + y[0], x[1] + y[1]];
    let sc = |s: f64, x: [f64; 2]| [s * x[0], s * x[1]];
    match case.case_id {
        CaseId::R | CaseId::NS => {
            let b = fu * fu + fv * fv;
            if b.abs() <= f64::MIN_POSITIVE {
                return Err(Error::Degenerate("(f₋)_u² + (f₋)_v² vanishes".into()));
            }
            let p = [[fu, fv], [-fv, fu]];
            let q = [[fv, -fu], [fu, fv]];
            let x = [xi * (fu * fu - fv * fv), -fuu + fvv];
            let y = [xi * fu * fv, -fuv];
            let a = sc(1.0 / b, mv(p, x));
            let bb = sc(1.0 / b, add(sc(2.0, mv(p, y)), mv(q, x)));
            let c = sc(2.0 / b, mv(q, y));
            Ok([a, bb, c])
        }
        CaseId::NT => {
            let eps = f64::from(case.eps);
            let dl = f64::from(case.delta);
            let b = eps * (fu * fu - fv * fv);
            if b.abs() <= f64::MIN_POSITIVE {
                return Err(Error::Degenerate("(f₋)_u² − (f₋)_v² vanishes".into()));
            }
            let x = [fuv, -xi * fu * fv];
            let y = [-fuu - fvv, xi * (fu * fu + fv * fv)];
            let a = sc(2.0 / b, mv([[dl * fu, fv], [-dl * fv, -fu]], x));
            let bb = sc(
                1.0 / b,
                add(mv([[fu, dl * fv], [-fv, -dl * fu]], y), sc(2.0, mv([[-fv, -dl * fu], [fu, dl * fv]], x))),
            );
            let c = sc(1.0 / b, mv([[-dl * fv, -fu], [dl * fu, fv]], y));
            Ok(if case.eps > 0 { [a, bb, c] } else { [c, bb, a] })
        }
        other => Err(Error::NotApplicable(format!("the Riccati system is set up for R, NS and NT, not {other}"))),
    }
}

impl RiccatiForms {
    /// Assembles the forms from `f₋` and the one-variable function `ξ̃(s)`. For NT the
    /// orderings of `ε = ±1` and the sign `δ` come from `case`.
    pub fn build(spec: GridSpec, f_minus: &Source, xi: &Expr, case: &CaseSpec) -> Result<Self> {
        spec.validate()?;
        case.validate()?;
        let jets = f_minus.sample(&spec)?;
        let vals: Vec<[[f64; 2]; 3]> = (0..spec.len())
            .into_par_iter()
            .map(|k| {
                let d = [jets.fu[k].re, jets.fv[k].re, jets.fuu[k].re, jets.fuv[k].re, jets.fvv[k].re];
                let x = xi.eval(&[("s", jets.f[k].re)])?;
                form_vectors(case, d, x).map_err(|e| match e {
                    Error::Degenerate(m) => {
                        let (u, v) = spec.point(k);
                        Error::Degenerate(format!("{m} at ({u}, {v})"))
                    }
                    e => e,
                })
            })
            .collect::<Result<_>>()?;
        let omega = std::array::from_fn(|l| OneForm {
            u: RealField::from_index(spec, |k| vals[k][l][0]),
            v: RealField::from_index(spec, |k| vals[k][l][1]),
        });
        let exact = match f_minus {
            Source::Expr(jet) => Some(ExactForms { f_minus: jet.clone(), xi: xi.clone() }),
            Source::Field(_) => None,
        };
        let mut forms = Self::from_forms(omega, *case)?;
        forms.exact = exact;
        Ok(forms)
    }

    /// Wraps given forms; midpoint values are interpolated.
    pub fn from_forms(omega: [OneForm; 3], case: CaseSpec) -> Result<Self> {
        let spec = *omega[0].u.spec();
        for w in &omega {
            spec.ensure_same(w.u.spec())?;
            spec.ensure_same(w.v.spec())?;
        }
        let sum = |a: RealField, b: RealField| a.zip_with(&b, |x, y| x + y).expect("shared grid");
        let twice = |a: RealField| a.map(|x| 2.0 * x);
        let big_omega = [
            sum(omega[0].exterior(), omega[0].wedge(&omega[1])),
            sum(omega[1].exterior(), twice(omega[0].wedge(&omega[2]))),
            sum(omega[2].exterior(), twice(omega[1].wedge(&omega[2]))),
        ];
        Ok(Self { spec, case, omega, big_omega, exact: None })
    }

    /// Largest coefficient magnitude over the three forms.
    pub fn scale(&self) -> f64 {
        self.omega.iter().map(|w| w.u.max_abs().max(w.v.max_abs())).fold(0.0, f64::max)
    }

    fn exact_at(&self, u: f64, v: f64) -> Option<Result<[[f64; 2]; 3]>> {
        let ex = self.exact.as_ref()?;
        let j = &ex.f_minus;
        let eval = |e: &Expr| e.eval_uv(u, v);
        Some((|| {
            let d = [eval(&j.du)?, eval(&j.dv)?, eval(&j.duu)?, eval(&j.duv)?, eval(&j.dvv)?];
            let x = ex.xi.eval(&[("s", eval(&j.value)?)])?;
            form_vectors(&self.case, d, x)
        })())
    }

    /// `(ω₀, ω₁, ω₂)` component along `du` (`dir = 0`) or `dv` (`dir = 1`) halfway across
    /// the cell starting at `(i, j)`.
    fn midpoint(&self, dir: usize, i: usize, j: usize) -> Result<[f64; 3]> {
        let s = &self.spec;
        let (u, v) = if dir == 0 { (s.u(i) + 0.5 * s.du, s.v(j)) } else { (s.u(i), s.v(j) + 0.5 * s.dv) };
        if let Some(vals) = self.exact_at(u, v) {
            let vals = vals?;
            return Ok([vals[0][dir], vals[1][dir], vals[2][dir]]);
        }
        Ok(std::array::from_fn(|l| {
            let f = if dir == 0 { &self.omega[l].u } else { &self.omega[l].v };
            if dir == 0 { f.mid_u(i, j) } else { f.mid_v(i, j) }
        }))
    }

    fn node(&self, dir: usize, k: usize) -> [f64; 3] {
        std::array::from_fn(|l| if dir == 0 { self.omega[l].u.get(k) } else { self.omega[l].v.get(k) })
    }
}

/// Whether the obstruction forms vanish.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Obstruction {
    IdenticallyZero,
    Nontrivial,
}

impl Obstruction {
    pub fn as_str(self) -> &'static str {
        match self {
            Obstruction::IdenticallyZero => "identically-zero",
            Obstruction::Nontrivial => "nontrivial",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstructionReport {
    pub verdict: Obstruction,
    pub norms: [f64; 3],
    pub tol: f64,
}

fn forms_tolerance(forms: &RiccatiForms) -> f64 {
    env_tolerance().unwrap_or_else(|| {
        let s = forms.scale();
        default_tolerance(&forms.spec, s + s * s)
    })
}

pub fn obstruction_verdict(forms: &RiccatiForms) -> ObstructionReport {
    let tol = forms_tolerance(forms);
    let norms = std::array::from_fn(|l| forms.big_omega[l].max_abs());
    let verdict = if norms.iter().all(|n| *n <= tol) { Obstruction::IdenticallyZero } else { Obstruction::Nontrivial };
    ObstructionReport { verdict, norms, tol }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiOptions {
    /// Largest admissible `|t|` before declaring blow-up.
    pub bound: f64,
    /// Distance kept from the endpoints of `(−1, 1)` and from `0` (NT only).
    pub margin: f64,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self { bound: 1e6, margin: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub t: RealField,
    /// `max |t_row-first − t_column-first|`.
    pub path_defect: f64,
    /// Largest residual of `dt − (ω₀ + tω₁ + t²ω₂)` with finite-difference derivatives.
    pub residual: f64,
    pub obstruction: ObstructionReport,
}

fn check_value(t: f64, forms: &RiccatiForms, k: usize, opts: &RiccatiOptions) -> Result<()> {
    let (u, v) = forms.spec.point(k);
    if !t.is_finite() || t.abs() > opts.bound {
        return Err(Error::BlowUp { u, v, bound: opts.bound });
    }
    if forms.case.case_id == CaseId::NT && (t.abs() >= 1.0 - opts.margin || t.abs() <= opts.margin) {
        return Err(Error::Range { u, v, t });
    }
    Ok(())
}

fn rk4(t: f64, c0: [f64; 3], cm: [f64; 3], c1: [f64; 3], h: f64) -> f64 {
    let f = |c: [f64; 3], t: f64| c[0] + t * c[1] + t * t * c[2];
    let k1 = f(c0, t);
    let k2 = f(cm, t + 0.5 * h * k1);
    let k3 = f(cm, t + 0.5 * h * k2);
    let k4 = f(c1, t + h * k3);
    t + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn sweep(forms: &RiccatiForms, t0: f64, rows_first: bool, opts: &RiccatiOptions) -> Result<Vec<f64>> {
    let s = forms.spec;
    let (first, second) = if rows_first { (0, 1) } else { (1, 0) };
    let steps = [s.du, s.dv];
    let counts = [s.nu, s.nv];
    let idx = |dir: usize, along: usize, across: usize| if dir == 0 { s.index(along, across) } else { s.index(across, along) };
    let step = |dir: usize, along: usize, across: usize, t: f64| -> Result<f64> {
        let (a, b) = (idx(dir, along - 1, across), idx(dir, along, across));
        let (i, j) = s.coords(a);
        let mid = forms.midpoint(dir, i, j)?;
        let next = rk4(t, forms.node(dir, a), mid, forms.node(dir, b), steps[dir]);
        check_value(next, forms, b, opts)?;
        Ok(next)
    };
    let mut out = vec![0.0; s.len()];
    check_value(t0, forms, 0, opts)?;
    out[0] = t0;
    for n in 1..counts[first] {
        out[idx(first, n, 0)] = step(first, n, 0, out[idx(first, n - 1, 0)])?;
    }
    let lines: Vec<Vec<f64>> = (0..counts[first])
        .into_par_iter()
        .map(|m| {
            let mut line = vec![out[idx(first, m, 0)]];
            for n in 1..counts[second] {
                line.push(step(second, n, m, line[n - 1])?);
            }
            Ok(line)
        })
        .collect::<Result<_>>()?;
    for (m, line) in lines.into_iter().enumerate() {
        for (n, t) in line.into_iter().enumerate() {
            out[idx(second, n, m)] = t;
        }
    }
    Ok(out)
}

/// Integrates the system with fourth-order Runge–Kutta steps along the base row and then up
/// every column, and repeats in the transposed order to measure path dependence.
pub fn solve_riccati(forms: &RiccatiForms, t0: f64, opts: RiccatiOptions) -> Result<RiccatiSolution> {
    if !t0.is_finite() {
        return Err(Error::Config("t0 must be finite".into()));
    }
    let rows = sweep(forms, t0, true, &opts)?;
    let cols = sweep(forms, t0, false, &opts)?;
    let path_defect = rows.iter().zip(&cols).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let t = RealField::new(forms.spec, rows)?;
    let residual = equation_residual(forms, &t);
    Ok(RiccatiSolution { t, path_defect, residual, obstruction: obstruction_verdict(forms) })
}

/// `max |∂t − (ω₀ + tω₁ + t²ω₂)|` over both directions.
pub fn equation_residual(forms: &RiccatiForms, t: &RealField) -> f64 {
    let (tu, tv) = (t.diff_u(), t.diff_v());
    let mut worst: f64 = 0.0;
    for k in 0..forms.spec.len() {
        let x = t.get(k);
        for (dir, d) in [(0, tu.get(k)), (1, tv.get(k))] {
            let c = forms.node(dir, k);
            worst = worst.max((d - (c[0] + x * c[1] + x * x * c[2])).abs());
        }
    }
    worst
}
