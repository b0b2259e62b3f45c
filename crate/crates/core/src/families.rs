//! Explicit coefficient families: the product of two circles, the φ-family (linearly
//! dependent, flat normal connection), a light-like family in the neutral time-like case,
//! and the not-linearly-dependent pipelines for every case. Each constructor checks its own
//! output against the structure equations and returns the result as a [`Certificate`].

use std::collections::BTreeMap;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr, ExprJet};
use crate::frames::CoefficientSet;
use crate::gcr::{
    curvature_defect, default_tolerance, env_tolerance, minors_norm, normal_flatness_defect,
    residuals,
};
use crate::grid::{ComplexField, FieldGrid, GridSpec, RealField};
use crate::spaceform::{CaseId, CaseSpec};

type C = Complex64;

/// Value and first partials of a (possibly complex) function of `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dual {
    v: C,
    du: C,
    dv: C,
}

impl Dual {
    fn new(v: C, du: C, dv: C) -> Self {
        Self { v, du, dv }
    }

    fn constant(v: C) -> Self {
        Self::new(v, C::new(0.0, 0.0), C::new(0.0, 0.0))
    }

    fn real(v: f64) -> Self {
        Self::constant(C::new(v, 0.0))
    }

    fn chain(self, f: C, df: C) -> Self {
        Self::new(f, df * self.du, df * self.dv)
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }

    fn tan(self) -> Self {
        let t = self.v.tan();
        self.chain(t, C::new(1.0, 0.0) + t * t)
    }

    fn sqrt_with(self, root: C) -> Self {
        self.chain(root, C::new(0.5, 0.0) / root)
    }

    fn conj(self) -> Self {
        Self::new(self.v.conj(), self.du.conj(), self.dv.conj())
    }

    fn re(self) -> Self {
        Self::new(C::new(self.v.re, 0.0), C::new(self.du.re, 0.0), C::new(self.dv.re, 0.0))
    }

    fn im(self) -> Self {
        Self::new(C::new(self.v.im, 0.0), C::new(self.du.im, 0.0), C::new(self.dv.im, 0.0))
    }

    fn scale(self, c: C) -> Self {
        Self::new(self.v * c, self.du * c, self.dv * c)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.du + o.du, self.dv + o.dv)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.du - o.du, self.dv - o.dv)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.du * o.v + self.v * o.du, self.dv * o.v + self.v * o.dv)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let q = self.v / o.v;
        Dual::new(q, (self.du - q * o.du) / o.v, (self.dv - q * o.dv) / o.v)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.du, -self.dv)
    }
}

/// Sampled value and partial derivatives through second order.
#[derive(Debug, Clone)]
pub struct Jets {
    pub spec: GridSpec,
    pub f: Vec<C>,
    pub fu: Vec<C>,
    pub fv: Vec<C>,
    pub fuu: Vec<C>,
    pub fuv: Vec<C>,
    pub fvv: Vec<C>,
}

impl Jets {
    fn value(&self, k: usize) -> Dual {
        Dual::new(self.f[k], self.fu[k], self.fv[k])
    }

    fn grad_u(&self, k: usize) -> Dual {
        Dual::new(self.fu[k], self.fuu[k], self.fuv[k])
    }

    fn grad_v(&self, k: usize) -> Dual {
        Dual::new(self.fv[k], self.fuv[k], self.fvv[k])
    }

    fn is_real(&self) -> bool {
        [&self.f, &self.fu, &self.fv].iter().all(|xs| xs.iter().all(|z| z.im == 0.0))
    }

    fn magnitude(&self) -> f64 {
        [&self.f, &self.fu, &self.fv, &self.fuu, &self.fuv, &self.fvv]
            .iter()
            .flat_map(|xs| xs.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }

    fn from_fields(f: ComplexField) -> Self {
        let spec = *f.spec();
        let fu = f.diff_u();
        let fv = f.diff_v();
        let fuu = f.diff_uu();
        let fvv = f.diff_vv();
        let fuv = fu.diff_v();
        Self {
            spec,
            f: f.into_values(),
            fu: fu.into_values(),
            fv: fv.into_values(),
            fuu: fuu.into_values(),
            fuv: fuv.into_values(),
            fvv: fvv.into_values(),
        }
    }
}

/// A closed-form expression in `u`, `v` (derivatives taken symbolically) or sampled values
/// (derivatives by finite differences).
#[derive(Debug, Clone)]
pub enum Source {
    Expr(ExprJet),
    Field(FieldGrid),
}

impl Source {
    pub fn parse(src: &str) -> Result<Self> {
        Ok(Source::Expr(ExprJet::parse(src)?))
    }

    pub fn constant(c: f64) -> Self {
        Source::Expr(ExprJet::new(parse_expr(&format!("{c:?}")).expect("numeric literal parses")))
    }

    pub fn sample(&self, spec: &GridSpec) -> Result<Jets> {
        match self {
            Source::Expr(jet) => {
                let eval = |e: &Expr| -> Result<Vec<C>> {
                    (0..spec.len())
                        .into_par_iter()
                        .map(|k| {
                            let (u, v) = spec.point(k);
                            e.eval_complex(&[("u", C::new(u, 0.0)), ("v", C::new(v, 0.0))])
                        })
                        .collect()
                };
                Ok(Jets {
                    spec: *spec,
                    f: eval(&jet.value)?,
                    fu: eval(&jet.du)?,
                    fv: eval(&jet.dv)?,
                    fuu: eval(&jet.duu)?,
                    fuv: eval(&jet.duv)?,
                    fvv: eval(&jet.dvv)?,
                })
            }
            Source::Field(field) => {
                spec.ensure_same(field.spec())?;
                Ok(Jets::from_fields(field.to_complex()))
            }
        }
    }

    fn sample_real(&self, spec: &GridSpec, what: &str) -> Result<Jets> {
        let jets = self.sample(spec)?;
        if !jets.is_real() {
            return Err(Error::Config(format!("'{what}' must be real-valued")));
        }
        Ok(jets)
    }
}

/// Self-check of a constructed coefficient set.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub tol: f64,
    /// Named maxima (or minima, for names ending in `_min`) of diagnostic quantities.
    pub metrics: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    /// Structure equations, flatness and `K ≡ L0` all hold within `tol`.
    pub passed: bool,
}

impl Certificate {
    /// Checks structure-equation residuals, `K − L0`, normal flatness and the dependence minors.
    pub fn evaluate(coeffs: &CoefficientSet, case: &CaseSpec, tol: Option<f64>) -> Self {
        let tol = tol
            .or_else(env_tolerance)
            .unwrap_or_else(|| default_tolerance(coeffs.spec(), coeffs.scale()));
        let res = residuals(coeffs, case);
        let mut metrics = BTreeMap::new();
        metrics.insert("gauss".into(), res.gauss.max_abs());
        metrics.insert("codazzi".into(), res.codazzi.iter().map(|f| f.max_abs()).fold(0.0, f64::max));
        metrics.insert("ricci".into(), res.ricci.max_abs());
        metrics.insert("gcr_max".into(), res.max_abs());
        metrics.insert("k_minus_l0".into(), curvature_defect(coeffs, case).max_abs());
        metrics.insert("flatness".into(), normal_flatness_defect(coeffs).max_abs());
        let minors = minors_norm(coeffs);
        metrics.insert("minors_max".into(), minors.max());
        metrics.insert("minors_min".into(), minors.min());
        let passed = ["gcr_max", "k_minus_l0", "flatness"].iter().all(|m| metrics[*m] <= tol);
        let mut flags = BTreeMap::new();
        flags.insert("k_pm_zero".into(), k_pm_vanish(coeffs, tol));
        Self { tol, metrics, flags, passed }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// `k± ≡ 0` exactly when `β₁, β₂, α₂, α₃` all vanish.
pub fn k_pm_vanish(coeffs: &CoefficientSet, tol: f64) -> bool {
    [&coeffs.beta1, &coeffs.beta2, &coeffs.alpha2, &coeffs.alpha3]
        .iter()
        .all(|f| f.max_abs() <= tol)
}

/// A constructed coefficient set with its certificate and intermediate fields.
#[derive(Debug, Clone)]
pub struct Family {
    pub case: CaseSpec,
    pub coeffs: CoefficientSet,
    pub certificate: Certificate,
    pub extras: BTreeMap<String, FieldGrid>,
}

fn real_field(spec: GridSpec, values: &[C]) -> RealField {
    RealField::from_index(spec, |k| values[k].re)
}

fn complex_field(spec: GridSpec, values: &[C]) -> ComplexField {
    ComplexField::from_index(spec, |k| values[k])
}

/// Product of two circles of radius `r` in Euclidean 4-space, parametrized by angles.
pub fn build_product_family(spec: GridSpec, r1: f64, r2: f64) -> Result<Family> {
    spec.validate()?;
    if !(r1 > 0.0 && r2 > 0.0) {
        return Err(Error::Domain(format!("radii must be positive, got {r1} and {r2}")));
    }
    if (r1 - r2).abs() > 1e-12 * r1.max(r2) {
        return Err(Error::Domain(format!(
            "radii {r1} and {r2} differ; angle coordinates are isothermal only for equal radii"
        )));
    }
    let lambda = r1.ln();
    let coeffs = CoefficientSet::from_fns(spec, |_, _| [lambda, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0])?;
    let case = CaseSpec::new(CaseId::R, 0.0);
    let certificate = Certificate::evaluate(&coeffs, &case, None);
    Ok(Family { case, coeffs, certificate, extras: BTreeMap::new() })
}

/// Inputs of the φ-family.
#[derive(Debug, Clone)]
pub struct PhiFamilyInput {
    /// Conformal factor; must satisfy `λ_uu + λ_vv + L0 e^{2λ} = 0`.
    pub lambda: Source,
    pub phi: Source,
    pub theta: Source,
    /// Function of one variable `s`.
    pub xi: Expr,
}

/// `φ_v² φ_uu − 2φ_u φ_v φ_uv + φ_u² φ_vv + (φ_u² + φ_v²)(φ_u λ_u + φ_v λ_v)` and a scale
/// for its tolerance.
fn phi_equation(phi: &Jets, lambda: &Jets, k: usize) -> (f64, f64) {
    let (pu, pv) = (phi.fu[k].re, phi.fv[k].re);
    let terms = [
        pv * pv * phi.fuu[k].re,
        -2.0 * pu * pv * phi.fuv[k].re,
        pu * pu * phi.fvv[k].re,
        (pu * pu + pv * pv) * (pu * lambda.fu[k].re + pv * lambda.fv[k].re),
    ];
    (terms.iter().sum(), terms.iter().map(|t| t.abs()).fold(0.0, f64::max))
}

fn liouville_residual(lambda: &Jets, l0: f64, spec: &GridSpec) -> Result<()> {
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..spec.len() {
        let (a, b) = (lambda.fuu[k].re, lambda.fvv[k].re);
        let c = l0 * (2.0 * lambda.f[k].re).exp();
        worst = worst.max((a + b + c).abs());
        scale = scale.max(a.abs().max(b.abs()).max(c.abs()));
    }
    let tol = default_tolerance(spec, scale);
    if worst > tol {
        return Err(Error::Residual { what: "λ_uu + λ_vv + L0 e^{2λ}".into(), residual: worst, tol });
    }
    Ok(())
}

/// `α = sin θ (φ_u², φ_u φ_v, φ_v²)/|∇φ|`, `β = −cot θ · α`, `μ = ∇γ` with `γ = −θ + ξ(φ)`.
pub fn build_phi_family(spec: GridSpec, input: &PhiFamilyInput, case: &CaseSpec) -> Result<Family> {
    spec.validate()?;
    case.validate()?;
    if !matches!(case.case_id, CaseId::R | CaseId::NS) {
        return Err(Error::NotApplicable(format!("the φ-family is defined for R and NS, not {}", case.case_id)));
    }
    let lambda = input.lambda.sample_real(&spec, "lambda")?;
    let phi = input.phi.sample_real(&spec, "phi")?;
    let theta = input.theta.sample_real(&spec, "theta")?;
    liouville_residual(&lambda, case.l0, &spec)?;

    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..spec.len() {
        let (r, s) = phi_equation(&phi, &lambda, k);
        worst = worst.max(r.abs());
        scale = scale.max(s);
        let g2 = phi.fu[k].re.powi(2) + phi.fv[k].re.powi(2);
        if g2 <= 0.0 {
            let (u, v) = spec.point(k);
            return Err(Error::Degenerate(format!("∇φ vanishes at ({u}, {v})")));
        }
        if theta.f[k].re.sin().abs() < 1e-12 {
            let (u, v) = spec.point(k);
            return Err(Error::Domain(format!("sin θ = 0 at ({u}, {v})")));
        }
    }
    let tol = default_tolerance(&spec, scale);
    if worst > tol {
        return Err(Error::Residual { what: "φ equation".into(), residual: worst, tol });
    }

    let dxi = input.xi.diff("s");
    let mut rows = Vec::with_capacity(spec.len());
    let mut gamma = Vec::with_capacity(spec.len());
    for k in 0..spec.len() {
        let (pu, pv) = (phi.fu[k].re, phi.fv[k].re);
        let th = theta.f[k].re;
        let p = phi.f[k].re;
        let norm = (pu * pu + pv * pv).sqrt();
        let a = [pu * pu, pu * pv, pv * pv].map(|x| th.sin() * x / norm);
        let b = a.map(|x| -th.cos() / th.sin() * x);
        let xi_p = input.xi.eval(&[("s", p)])?;
        let dxi_p = dxi.eval(&[("s", p)])?;
        let mu = [
            -theta.fu[k].re + dxi_p * pu,
            -theta.fv[k].re + dxi_p * pv,
        ];
        gamma.push(C::new(-th + xi_p, 0.0));
        rows.push([lambda.f[k].re, a[0], a[1], a[2], b[0], b[1], b[2], mu[0], mu[1]]);
    }
    let coeffs = coefficients_from_rows(spec, &rows)?;
    let certificate = Certificate::evaluate(&coeffs, case, None);
    let mut extras = BTreeMap::new();
    extras.insert("gamma".into(), real_field(spec, &gamma).into());
    extras.insert("theta".into(), real_field(spec, &theta.f).into());
    Ok(Family { case: *case, coeffs, certificate, extras })
}

fn coefficients_from_rows(spec: GridSpec, rows: &[[f64; 9]]) -> Result<CoefficientSet> {
    CoefficientSet::from_fields(std::array::from_fn(|c| RealField::from_index(spec, |k| rows[k][c])))
}

/// Light-like family in the neutral time-like case: `λ = 0`, `L0 = 0`,
/// `α = e^{εγ}(φ_uu, φ_uv, φ_vv)`, `β = −εα`, `μ = ∇γ`.
pub fn build_light_family(spec: GridSpec, phi: &Source, gamma: &Source, eps: i8) -> Result<Family> {
    spec.validate()?;
    if eps.abs() != 1 {
        return Err(Error::Config(format!("eps must be ±1, got {eps}")));
    }
    let e = f64::from(eps);
    let phi = phi.sample_real(&spec, "phi")?;
    let gamma = gamma.sample_real(&spec, "gamma")?;
    let rows: Vec<[f64; 9]> = (0..spec.len())
        .map(|k| {
            let w = (e * gamma.f[k].re).exp();
            let a = [phi.fuu[k].re, phi.fuv[k].re, phi.fvv[k].re].map(|x| w * x);
            [0.0, a[0], a[1], a[2], -e * a[0], -e * a[1], -e * a[2], gamma.fu[k].re, gamma.fv[k].re]
        })
        .collect();
    let coeffs = coefficients_from_rows(spec, &rows)?;
    let case = CaseSpec::with_signs(CaseId::NT, 0.0, eps, 1)?;
    let certificate = Certificate::evaluate(&coeffs, &case, None);
    let mut extras = BTreeMap::new();
    extras.insert("gamma".into(), real_field(spec, &gamma.f).into());
    Ok(Family { case, coeffs, certificate, extras })
}

/// Which potential of a linked pair is supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Known {
    Plus,
    Minus,
}

/// The partner potential produced by [`angle_link`].
#[derive(Debug, Clone)]
pub struct AngleLink {
    /// Path-integrated partner, zero at the base point.
    pub potential: FieldGrid,
    pub jets: Jets,
    /// `max |∂_v p_u − ∂_u p_v|` of the candidate gradient.
    pub curl_defect: f64,
    pub tol: f64,
}

/// 2×2 link matrix `M(a)` and its derivative in `a`, acting on `(g_u, g_v)` of the known
/// potential to give the partner gradient.
fn link_matrix(case: &CaseSpec, known: Known, a: f64) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let (c, s) = (a.cos(), a.sin());
    let (ch, sh) = (a.cosh(), a.sinh());
    let d = f64::from(case.delta);
    let mul = |x: [[f64; 2]; 2], y: [[f64; 2]; 2]| -> [[f64; 2]; 2] {
        std::array::from_fn(|r| std::array::from_fn(|q| x[r][0] * y[0][q] + x[r][1] * y[1][q]))
    };
    let swap = [[0.0, 1.0], [1.0, 0.0]];
    let flip = [[1.0, 0.0], [0.0, -1.0]];
    let turn = [[0.0, 1.0], [-1.0, 0.0]];
    let rot = |sgn: f64| ([[c, -sgn * s], [sgn * s, c]], [[-s, -sgn * c], [sgn * c, -s]]);
    let hyp = |sgn: f64| ([[d * ch, sgn * sh], [sgn * sh, d * ch]], [[d * sh, sgn * ch], [sgn * ch, d * sh]]);
    let both = |left: [[f64; 2]; 2], (m, dm): ([[f64; 2]; 2], [[f64; 2]; 2]), right: [[f64; 2]; 2]| {
        (mul(mul(left, m), right), mul(mul(left, dm), right))
    };
    let id = [[1.0, 0.0], [0.0, 1.0]];
    match (case.case_id, known) {
        // ∇f₋ = R(ψ)(f₊_v, f₊_u); the conjugate relation in LS has the same shape.
        (CaseId::R | CaseId::NS | CaseId::LS, Known::Plus) => both(id, rot(1.0), swap),
        (CaseId::R | CaseId::NS | CaseId::LS, Known::Minus) => both(swap, rot(-1.0), id),
        (CaseId::NT, Known::Plus) if case.eps > 0 => both(id, hyp(1.0), flip),
        (CaseId::NT, Known::Minus) if case.eps > 0 => both(flip, hyp(-1.0), id),
        (CaseId::NT, Known::Plus) => both(id, hyp(1.0), turn),
        (CaseId::NT, Known::Minus) => both([[0.0, -1.0], [1.0, 0.0]], hyp(-1.0), id),
        (CaseId::LT, Known::Plus) => both(id, hyp(1.0), flip),
        (CaseId::LT, Known::Minus) => both(flip, hyp(-1.0), id),
    }
}

/// Builds the partner potential from a known one and a rotation (Riemannian-type normal
/// plane) or para-rotation (Lorentzian-type) angle, then path-integrates it. For LS and LT
/// the partner is the candidate complex conjugate of `f`.
pub fn angle_link(
    spec: GridSpec,
    known: &Source,
    which: Known,
    angle: &Source,
    case: &CaseSpec,
) -> Result<AngleLink> {
    spec.validate()?;
    let g = known.sample(&spec)?;
    let a = angle.sample_real(&spec, "angle")?;
    if matches!(case.case_id, CaseId::R | CaseId::NS | CaseId::NT) && !g.is_real() {
        return Err(Error::Config(format!("potentials are real in case {}", case.case_id)));
    }
    let n = spec.len();
    let mut jets = Jets {
        spec,
        f: vec![C::new(0.0, 0.0); n],
        fu: Vec::with_capacity(n),
        fv: Vec::with_capacity(n),
        fuu: Vec::with_capacity(n),
        fuv: Vec::with_capacity(n),
        fvv: Vec::with_capacity(n),
    };
    let mut curl: f64 = 0.0;
    for k in 0..n {
        let (m, dm) = link_matrix(case, which, a.f[k].re);
        let apply = |m: &[[f64; 2]; 2], x: C, y: C| [x * m[0][0] + y * m[0][1], x * m[1][0] + y * m[1][1]];
        let p = apply(&m, g.fu[k], g.fv[k]);
        // ∂_u and ∂_v of the partner gradient.
        let pu_u = apply(&dm, g.fu[k], g.fv[k]);
        let pu = apply(&m, g.fuu[k], g.fuv[k]);
        let pv = apply(&m, g.fuv[k], g.fvv[k]);
        let du = [pu_u[0] * a.fu[k].re + pu[0], pu_u[1] * a.fu[k].re + pu[1]];
        let dv = [pu_u[0] * a.fv[k].re + pv[0], pu_u[1] * a.fv[k].re + pv[1]];
        curl = curl.max((dv[0] - du[1]).norm());
        jets.fu.push(p[0]);
        jets.fv.push(p[1]);
        jets.fuu.push(du[0]);
        jets.fuv.push((dv[0] + du[1]) * 0.5);
        jets.fvv.push(dv[1]);
    }
    let tol = env_tolerance().unwrap_or_else(|| default_tolerance(&spec, g.magnitude().max(a.magnitude())));
    if curl > tol {
        return Err(Error::NonIntegrable { what: "linked gradient".into(), defect: curl, tol });
    }
    let pu = complex_field(spec, &jets.fu);
    let pv = complex_field(spec, &jets.fv);
    let potential = ComplexField::integrate_gradient(&pu, &pv)?;
    jets.f = potential.values().to_vec();
    let potential = if g.is_real() { FieldGrid::Real(potential.re()) } else { FieldGrid::Complex(potential) };
    Ok(AngleLink { potential, jets, curl_defect: curl, tol })
}

/// Inputs of the not-linearly-dependent construction.
///
/// Cases R, NS and NT take real potentials `f₊`, `f₋` (one may be replaced by `link_angle`,
/// the ψ or ρ of [`angle_link`]) and `angle` = θ₋ (R, NS) or t₋ (NT). Cases LS and LT take a
/// complex `f` and `angle` = the real parameter of `k` (t for LS, φ for LT).
#[derive(Debug, Clone)]
pub struct NotldInput {
    pub lambda: Source,
    pub f_plus: Option<Source>,
    pub f_minus: Option<Source>,
    pub f: Option<Source>,
    pub link_angle: Option<Source>,
    pub angle: Source,
    /// Sign choice in `k₋ = (1 + ε′e^{2t₋})/(1 − ε′e^{2t₋})` (NT).
    pub eps_prime: i8,
    /// Value of `γ` at the base point.
    pub gamma0: f64,
}

impl NotldInput {
    pub fn new(lambda: Source, angle: Source) -> Self {
        Self { lambda, f_plus: None, f_minus: None, f: None, link_angle: None, angle, eps_prime: 1, gamma0: 0.0 }
    }
}

struct Pointwise {
    alpha: [f64; 3],
    beta: [f64; 3],
    mu: [f64; 2],
    gamma_imag: f64,
    witness: f64,
    k_minus: C,
    k_plus: C,
    identities: Vec<(&'static str, f64)>,
}

fn at(spec: &GridSpec, k: usize) -> (f64, f64) {
    spec.point(k)
}

fn jac(f: Dual, g: Dual) -> C {
    f.du * g.dv - f.dv * g.du
}

/// `A, B, C, A′` and `f₊_u, f₊_v, f₋_u, f₋_v` as duals.
fn real_abc(case: CaseId, p: &Jets, m: &Jets, k: usize) -> ([Dual; 4], [Dual; 4]) {
    let (pu, pv, mu, mv) = (p.grad_u(k), p.grad_v(k), m.grad_u(k), m.grad_v(k));
    let a = pv * mu + mv * pu;
    let ap = pv * mu - mv * pu;
    let (b, c) = if case == CaseId::NT {
        (pu * pu - pv * pv, pu * mu + pv * mv)
    } else {
        (pu * pu + pv * pv, pu * mu - pv * mv)
    };
    ([a, b, c, ap], [pu, pv, mu, mv])
}

fn check_nondegenerate(spec: &GridSpec, k: usize, a: f64, ap: f64, b: f64) -> Result<()> {
    let floor = 1e-10 * b.abs().max(1e-300);
    if a.abs() <= floor || ap.abs() <= floor {
        let (u, v) = at(spec, k);
        return Err(Error::Degenerate(format!("A = {a:.3e}, A′ = {ap:.3e} at ({u}, {v})")));
    }
    Ok(())
}

fn real_pointwise(
    case: &CaseSpec,
    p: &Jets,
    m: &Jets,
    angle: &Jets,
    lambda: &Jets,
    eps_prime: f64,
    k: usize,
) -> Result<(Pointwise, f64)> {
    let spec = &p.spec;
    let nt = case.case_id == CaseId::NT;
    let ([a, b, c, ap], [pu, pv, mu, mv]) = real_abc(case.case_id, p, m, k);
    let fp = p.value(k);
    let fm = m.value(k);
    let th = angle.value(k);
    let lam = lambda.value(k);
    check_nondegenerate(spec, k, a.v.re, ap.v.re, b.v.re)?;
    if b.v.re.abs() <= 1e-14 {
        let (u, v) = at(spec, k);
        return Err(Error::Degenerate(format!("B = 0 at ({u}, {v})")));
    }
    let one = Dual::real(1.0);
    let (km, kp) = if nt {
        let e = (th.scale(C::new(2.0, 0.0))).exp().scale(C::new(eps_prime, 0.0));
        let km = (one + e) / (one - e);
        (km, (c * km + a) / (a * km + c))
    } else {
        let km = th.tan();
        (km, (c * km - a) / (a * km + c))
    };
    let denom = (a * km + c).v.re;
    let (kmv, kpv) = (km.v.re, kp.v.re);
    if nt && ((kmv.abs() - 1.0).abs() < 1e-12 || (kpv.abs() - 1.0).abs() < 1e-12) {
        let (u, v) = at(spec, k);
        return Err(Error::Excluded(format!("|k±| = 1 at ({u}, {v})")));
    }
    if denom.abs() < 1e-14 || !kpv.is_finite() {
        let (u, v) = at(spec, k);
        return Err(Error::Excluded(format!("A k₋ + C = 0 at ({u}, {v})")));
    }
    let sigma = -(denom * b.v.re).signum();
    let root = |x: f64| if nt { (x * x - 1.0).abs().sqrt() } else { (1.0 + x * x).sqrt() };
    let (rp, rm) = (root(kpv), root(kmv));
    let (fpu, fpv, fmu, fmv) = (pu.v.re, pv.v.re, mu.v.re, mv.v.re);
    let xp = sigma * fpv / rp;
    let yp = sigma * fpu / rp;
    let xm = -fmv / rm;
    let ym = fmu / rm;
    let (wm, zm, wp, zp) = if nt {
        (kmv * ym, kmv * xm, kpv * yp, kpv * xp)
    } else {
        (-kpv * yp, kpv * xp, -kmv * ym, kmv * xm)
    };
    let alpha = [(yp - ym) / 2.0, (xp + xm) / 2.0, (zp - zm) / 2.0];
    let beta = [(wp - wm) / 2.0, (yp + ym) / 2.0, (xp - xm) / 2.0];

    // γ-gradient.
    let ca = c / a;
    let ratio = jac(fp, ca) / jac(fp, fm);
    let (av, bv, apv) = (a.v.re, b.v.re, ap.v.re);
    let (lu, lv) = (lam.du.re, lam.dv.re);
    let mu_field = if nt {
        let eps = (bv / (fmu * fmu - fmv * fmv)).signum();
        let fac = av * av / (eps * bv * bv) * ratio.re;
        [
            th.du.re + fac * fmu - (2.0 * fpu * fmu * lu - av * lv) / apv,
            th.dv.re + fac * fmv - (av * lu - 2.0 * fpv * fmv * lv) / apv,
        ]
    } else {
        let fac = av * av / (bv * bv) * ratio.re;
        [
            -th.du.re - fac * fmu - (2.0 * fpu * fmu * lu + av * lv) / apv,
            -th.dv.re - fac * fmv - (av * lu + 2.0 * fpv * fmv * lv) / apv,
        ]
    };

    let mut identities = vec![("sum_identity", ((wp + wm) - (xp + xm)).abs().max(((yp + ym) - (zp + zm)).abs()))];
    let scale = 1f64.max(bv * bv);
    if nt {
        let eps = (bv / (fmu * fmu - fmv * fmv)).signum();
        identities.push(("abc_identity", (av * av - c.v.re.powi(2) + eps * bv * bv).abs() / scale));
    } else {
        identities.push(("abc_identity", (av * av + c.v.re.powi(2) - bv * bv).abs() / scale));
        let rhs = bv * bv * (1.0 + kmv * kmv) / (denom * denom);
        identities.push(("kplus_identity", ((1.0 + kpv * kpv) - rhs).abs() / (1.0 + kpv * kpv)));
    }
    let witness = xp * xp * ym * ym - xm * xm * yp * yp;
    Ok((
        Pointwise {
            alpha,
            beta,
            mu: mu_field,
            gamma_imag: 0.0,
            witness,
            k_minus: km.v,
            k_plus: kp.v,
            identities,
        },
        sigma,
    ))
}

/// First pass of the complex cases: `A, B, C, A′` and `k` with its gradient.
struct ComplexStage {
    a: Dual,
    b: Dual,
    c: Dual,
    ap: Dual,
    fu: Dual,
    fv: Dual,
    k: Dual,
    radicand: C,
}

fn complex_stage(case: CaseId, f: &Jets, t: &Jets, k: usize) -> Result<ComplexStage> {
    let spec = &f.spec;
    let (fu, fv) = (f.grad_u(k), f.grad_v(k));
    let cross = fu * fv.conj();
    let a = cross.re().scale(C::new(2.0, 0.0));
    let ap = cross.im().scale(C::new(2.0, 0.0));
    let (nu, nv) = ((fu * fu.conj()).re(), (fv * fv.conj()).re());
    let lt = case == CaseId::LT;
    let (b, c) = if lt { (fu * fu - fv * fv, nu + nv) } else { (fu * fu + fv * fv, nu - nv) };
    check_nondegenerate(spec, k, a.v.re, ap.v.re, b.v.norm())?;
    let one = Dual::real(1.0);
    let i = C::new(0.0, 1.0);
    let tt = t.value(k);
    let kk = if lt {
        if b.v.re >= 0.0 {
            let (u, v) = at(spec, k);
            return Err(Error::Branch(format!("LT potentials need f_u² − f_v² < 0; got {:.3e} at ({u}, {v})", b.v.re)));
        }
        let q = (c + a) / (c - a);
        let root = q.sqrt_with(q.v.sqrt());
        let w = root * (tt.scale(i)).exp();
        ((one + w) / (one - w)).scale(i)
    } else {
        let ac = a + c.scale(i);
        let modulus = (ac * ac.conj()).re();
        let modulus = modulus.sqrt_with(modulus.v.sqrt());
        let w = (ac / modulus).scale(i) * tt.scale(C::new(2.0, 0.0)).exp();
        (one + w) / (one - w)
    };
    let radicand = if lt { kk.v * kk.v + 1.0 } else { kk.v * kk.v - 1.0 };
    if radicand.norm() < 1e-12 || !kk.v.is_finite() {
        let (u, v) = at(spec, k);
        let excluded = if lt { "±i" } else { "±1" };
        return Err(Error::Excluded(format!("k = {excluded} at ({u}, {v})")));
    }
    Ok(ComplexStage { a, b, c, ap, fu, fv, k: kk, radicand })
}

fn complex_pointwise(case: CaseId, s: &ComplexStage, root: C, lambda: &Jets, k: usize) -> Pointwise {
    let lt = case == CaseId::LT;
    let i = C::new(0.0, 1.0);
    let (fu, fv) = (s.fu.v, s.fv.v);
    let kk = s.k.v;
    let x = i * fv / root;
    let y = fu / root;
    let w = if lt { -kk * y } else { kk * y };
    let z = kk * x;
    let (alpha, beta) = if lt {
        ([-y.im, x.re, -z.im], [w.im, y.re, x.im])
    } else {
        ([-y.im, x.re, z.im], [-w.im, y.re, x.im])
    };
    let ca = s.c / s.a;
    let jac1 = s.fu.v.conj() * ca.dv - s.fv.v.conj() * ca.du;
    let jac2 = fu * fv.conj() - fv * fu.conj();
    let (a, b, ap) = (s.a.v.re, s.b.v, s.ap.v.re);
    let (lu, lv) = (lambda.fu[k].re, lambda.fv[k].re);
    let (nu, nv) = (fu.norm_sqr(), fv.norm_sqr());
    let g = if lt {
        let fac = -i * a * a / (b * b) * jac1 / jac2;
        let kd = -(kk * kk + 1.0);
        [
            s.k.du / kd + fac * fu - (2.0 * nu * lu - a * lv) / ap,
            s.k.dv / kd + fac * fv - (a * lu - 2.0 * nv * lv) / ap,
        ]
    } else {
        let fac = i * a * a / (b * b) * jac1 / jac2;
        let kd = kk * kk - 1.0;
        [
            s.k.du / kd + fac * fu - (2.0 * nu * lu + a * lv) / ap,
            s.k.dv / kd + fac * fv - (a * lu + 2.0 * nv * lv) / ap,
        ]
    };
    let mut identities = vec![
        ("sum_identity", ((w + w.conj()) - (x + x.conj())).norm().max(((y + y.conj()) - (z + z.conj())).norm())),
        ("b_imag", b.im.abs()),
    ];
    let constraint = if lt {
        fu.re * fu.im - fv.re * fv.im
    } else {
        fu.re * fu.im + fv.re * fv.im
    };
    identities.push(("potential_constraint", constraint.abs()));
    if lt {
        let c = s.c.v.re;
        identities.push(("abc_identity", (c * c - a * a - b.re * b.re).abs() / 1f64.max(b.norm_sqr())));
    }
    let witness = (x * x * y.conj() * y.conj() - x.conj() * x.conj() * y * y).norm();
    Pointwise {
        alpha,
        beta,
        mu: [g[0].re, g[1].re],
        gamma_imag: g[0].im.abs().max(g[1].im.abs()),
        witness,
        k_minus: kk,
        k_plus: kk.conj(),
        identities,
    }
}

/// Chooses the sign of each principal square root so that it varies continuously from the
/// base point, sweeping the first row and then every column.
fn track_branch(spec: &GridSpec, roots: &mut [C]) {
    for i in 1..spec.nu {
        let prev = roots[i - 1];
        if (roots[i] + prev).norm() < (roots[i] - prev).norm() {
            roots[i] = -roots[i];
        }
    }
    for j in 1..spec.nv {
        for i in 0..spec.nu {
            let prev = roots[spec.index(i, j - 1)];
            let k = spec.index(i, j);
            if (roots[k] + prev).norm() < (roots[k] - prev).norm() {
                roots[k] = -roots[k];
            }
        }
    }
}

/// Runs the not-linearly-dependent construction for the given case.
pub fn build_notld_family(spec: GridSpec, input: &NotldInput, case: &CaseSpec) -> Result<Family> {
    spec.validate()?;
    case.validate()?;
    if input.eps_prime.abs() != 1 {
        return Err(Error::Config(format!("eps_prime must be ±1, got {}", input.eps_prime)));
    }
    let lambda = input.lambda.sample_real(&spec, "lambda")?;
    liouville_residual(&lambda, case.l0, &spec)?;
    let angle = input.angle.sample_real(&spec, "angle")?;
    let mut extras = BTreeMap::new();
    let n = spec.len();

    let points: Vec<Pointwise> = match case.case_id {
        CaseId::R | CaseId::NS | CaseId::NT => {
            let (p, m) = real_potentials(spec, input, case, &mut extras)?;
            let results: Vec<(Pointwise, f64)> = (0..n)
                .into_par_iter()
                .map(|k| real_pointwise(case, &p, &m, &angle, &lambda, f64::from(input.eps_prime), k))
                .collect::<Result<_>>()?;
            let sigma0 = results[0].1;
            if let Some(k) = results.iter().position(|r| r.1 != sigma0) {
                let (u, v) = spec.point(k);
                return Err(Error::Branch(format!(
                    "sign of (A k₋ + C)B changes between the base point and ({u}, {v})"
                )));
            }
            results.into_iter().map(|r| r.0).collect()
        }
        CaseId::LS | CaseId::LT => {
            let src = input.f.as_ref().ok_or_else(|| {
                Error::Config(format!("case {} needs the complex potential 'f'", case.case_id))
            })?;
            let f = src.sample(&spec)?;
            let stages: Vec<ComplexStage> = (0..n)
                .into_par_iter()
                .map(|k| complex_stage(case.case_id, &f, &angle, k))
                .collect::<Result<_>>()?;
            let mut roots: Vec<C> = stages.iter().map(|s| s.radicand.sqrt()).collect();
            track_branch(&spec, &mut roots);
            extras.insert("f".into(), complex_field(spec, &f.f).into());
            (0..n)
                .into_par_iter()
                .map(|k| complex_pointwise(case.case_id, &stages[k], roots[k], &lambda, k))
                .collect()
        }
    };

    let rows: Vec<[f64; 9]> = points
        .iter()
        .enumerate()
        .map(|(k, p)| {
            [lambda.f[k].re, p.alpha[0], p.alpha[1], p.alpha[2], p.beta[0], p.beta[1], p.beta[2], p.mu[0], p.mu[1]]
        })
        .collect();
    let coeffs = coefficients_from_rows(spec, &rows)?;
    let mut certificate = Certificate::evaluate(&coeffs, case, None);
    let witness_min = points.iter().map(|p| p.witness.abs()).fold(f64::INFINITY, f64::min);
    certificate.metrics.insert("witness_min".into(), witness_min);
    certificate.metrics.insert("gamma_imag".into(), points.iter().map(|p| p.gamma_imag).fold(0.0, f64::max));
    for (name, _) in &points[0].identities {
        let worst = points
            .iter()
            .map(|p| p.identities.iter().find(|x| x.0 == *name).map_or(0.0, |x| x.1))
            .fold(0.0, f64::max);
        certificate.metrics.insert((*name).into(), worst);
    }

    let mu1 = coeffs.mu1.clone();
    let mu2 = coeffs.mu2.clone();
    let gamma = RealField::integrate_gradient(&mu1, &mu2)?.map(|g| g + input.gamma0);
    extras.insert("gamma".into(), gamma.into());
    let km: Vec<C> = points.iter().map(|p| p.k_minus).collect();
    let kp: Vec<C> = points.iter().map(|p| p.k_plus).collect();
    if matches!(case.case_id, CaseId::LS | CaseId::LT) {
        extras.insert("k".into(), complex_field(spec, &km).into());
    } else {
        extras.insert("k_minus".into(), real_field(spec, &km).into());
        extras.insert("k_plus".into(), real_field(spec, &kp).into());
    }
    Ok(Family { case: *case, coeffs, certificate, extras })
}

fn real_potentials(
    spec: GridSpec,
    input: &NotldInput,
    case: &CaseSpec,
    extras: &mut BTreeMap<String, FieldGrid>,
) -> Result<(Jets, Jets)> {
    let linked = |known: &Source, which: Known| -> Result<AngleLink> {
        let angle = input.link_angle.as_ref().ok_or_else(|| {
            Error::Config("one of f_plus, f_minus is missing and no link angle was given".into())
        })?;
        angle_link(spec, known, which, angle, case)
    };
    let (p, m) = match (&input.f_plus, &input.f_minus) {
        (Some(p), Some(m)) => (p.sample_real(&spec, "f_plus")?, m.sample_real(&spec, "f_minus")?),
        (Some(p), None) => {
            let link = linked(p, Known::Plus)?;
            extras.insert("f_minus".into(), link.potential.clone());
            (p.sample_real(&spec, "f_plus")?, link.jets)
        }
        (None, Some(m)) => {
            let link = linked(m, Known::Minus)?;
            extras.insert("f_plus".into(), link.potential.clone());
            (link.jets, m.sample_real(&spec, "f_minus")?)
        }
        (None, None) => return Err(Error::Config("case needs f_plus or f_minus".into())),
    };
    Ok((p, m))
}
