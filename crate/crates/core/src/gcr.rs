//! Gauss, Codazzi and Ricci residuals, curvature and normal-flatness diagnostics, the
//! linearly dependent condition and detection of parallel normal vector fields.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frames::{CoefficientSet, PointCoeffs};
use crate::grid::{GridSpec, RealField};
use crate::spaceform::{CaseId, CaseSpec};

/// Environment variable overriding the default tolerance.
pub const TOL_ENV: &str = "NORMALFLAT_TOL";

/// Pass thresholds for residual and constancy tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub residual: f64,
    pub constancy: f64,
}

impl Tolerances {
    pub fn uniform(tol: f64) -> Self {
        Self { residual: tol, constancy: tol }
    }

    /// `10 h² (1 + max |coefficient|)`, or the value of `NORMALFLAT_TOL` when set.
    pub fn default_for(coeffs: &CoefficientSet) -> Self {
        if let Some(t) = env_tolerance() {
            return Self::uniform(t);
        }
        Self::uniform(default_tolerance(coeffs.spec(), coeffs.scale()))
    }
}

pub fn default_tolerance(spec: &GridSpec, scale: f64) -> f64 {
    10.0 * spec.h() * spec.h() * (1.0 + scale)
}

pub fn env_tolerance() -> Option<f64> {
    std::env::var(TOL_ENV).ok()?.trim().parse().ok().filter(|t: &f64| t.is_finite() && *t > 0.0)
}

/// Pointwise residuals of the structure equations (left side minus right side).
#[derive(Debug, Clone)]
pub struct GcrResiduals {
    pub gauss: RealField,
    pub codazzi: [RealField; 4],
    pub ricci: RealField,
}

impl GcrResiduals {
    pub fn max_abs(&self) -> f64 {
        self.all().iter().map(|f| f.max_abs()).fold(0.0, f64::max)
    }

    pub fn all(&self) -> [&RealField; 6] {
        [&self.gauss, &self.codazzi[0], &self.codazzi[1], &self.codazzi[2], &self.codazzi[3], &self.ricci]
    }
}

/// Right sides `[Gauss, Codazzi 1–4, Ricci]` of the structure equations at one point.
/// The Gauss entry is the quadratic form in `(α, β)`.
pub fn structure_rhs(case: CaseId, p: &PointCoeffs) -> [f64; 6] {
    let (lu, lv) = (p.lambda_u, p.lambda_v);
    let [a1, a2, a3] = p.alpha;
    let [b1, b2, b3] = p.beta;
    let [m1, m2] = p.mu;
    match case {
        CaseId::R | CaseId::NS => {
            let sign = if case == CaseId::R { 1.0 } else { -1.0 };
            [
                sign * (-a1 * a3 - b1 * b3 + a2 * a2 + b2 * b2),
                a2 * lu + a3 * lv - b2 * m1 + b1 * m2,
                -a1 * lu - a2 * lv - b3 * m1 + b2 * m2,
                b2 * lu + b3 * lv + a2 * m1 - a1 * m2,
                -b1 * lu - b2 * lv + a3 * m1 - a2 * m2,
                sign * (a1 * b2 - a2 * b1 + a2 * b3 - a3 * b2),
            ]
        }
        CaseId::NT => [
            a1 * a3 - b1 * b3 - a2 * a2 + b2 * b2,
            a2 * lu - a3 * lv + b2 * m1 - b1 * m2,
            a1 * lu - a2 * lv + b3 * m1 - b2 * m2,
            b2 * lu - b3 * lv + a2 * m1 - a1 * m2,
            b1 * lu - b2 * lv + a3 * m1 - a2 * m2,
            a1 * b2 - a2 * b1 - a2 * b3 + a3 * b2,
        ],
        CaseId::LS => [
            -a1 * a3 + b1 * b3 + a2 * a2 - b2 * b2,
            a2 * lu + a3 * lv + b2 * m1 - b1 * m2,
            -a1 * lu - a2 * lv + b3 * m1 - b2 * m2,
            b2 * lu + b3 * lv + a2 * m1 - a1 * m2,
            -b1 * lu - b2 * lv + a3 * m1 - a2 * m2,
            a1 * b2 - a2 * b1 + a2 * b3 - a3 * b2,
        ],
        CaseId::LT => [
            a1 * a3 + b1 * b3 - a2 * a2 - b2 * b2,
            a2 * lu - a3 * lv - b2 * m1 + b1 * m2,
            a1 * lu - a2 * lv - b3 * m1 + b2 * m2,
            b2 * lu - b3 * lv + a2 * m1 - a1 * m2,
            b1 * lu - b2 * lv + a3 * m1 - a2 * m2,
            a1 * b2 - a2 * b1 - a2 * b3 + a3 * b2,
        ],
    }
}

/// Quadratic side of the Gauss equation at one point.
pub fn gauss_quadratic(case: CaseId, alpha: [f64; 3], beta: [f64; 3]) -> f64 {
    structure_rhs(case, &PointCoeffs { alpha, beta, ..Default::default() })[0]
}

/// Derivative fields every residual needs.
struct Jets {
    lu: RealField,
    lv: RealField,
    luu: RealField,
    lvv: RealField,
    lhs: [RealField; 5],
}

impl Jets {
    fn of(c: &CoefficientSet) -> Self {
        let dv = |f: &RealField| f.diff_v();
        let du = |f: &RealField| f.diff_u();
        let diff = |a: RealField, b: RealField| a.zip_with(&b, |x, y| x - y).expect("shared grid");
        Self {
            lu: c.lambda.diff_u(),
            lv: c.lambda.diff_v(),
            luu: c.lambda.diff_uu(),
            lvv: c.lambda.diff_vv(),
            lhs: [
                diff(dv(&c.alpha1), du(&c.alpha2)),
                diff(dv(&c.alpha2), du(&c.alpha3)),
                diff(dv(&c.beta1), du(&c.beta2)),
                diff(dv(&c.beta2), du(&c.beta3)),
                diff(dv(&c.mu1), du(&c.mu2)),
            ],
        }
    }

    fn point(&self, c: &CoefficientSet, k: usize) -> PointCoeffs {
        PointCoeffs {
            lambda: c.lambda.get(k),
            lambda_u: self.lu.get(k),
            lambda_v: self.lv.get(k),
            alpha: [c.alpha1.get(k), c.alpha2.get(k), c.alpha3.get(k)],
            beta: [c.beta1.get(k), c.beta2.get(k), c.beta3.get(k)],
            mu: [c.mu1.get(k), c.mu2.get(k)],
        }
    }

    fn gauss_lhs(&self, c: &CoefficientSet, case: &CaseSpec, k: usize) -> f64 {
        let lap = if case.case_id.is_timelike() {
            self.luu.get(k) - self.lvv.get(k)
        } else {
            self.luu.get(k) + self.lvv.get(k)
        };
        lap + case.l0 * (2.0 * c.lambda.get(k)).exp()
    }
}

/// All six residuals at once.
pub fn residuals(coeffs: &CoefficientSet, case: &CaseSpec) -> GcrResiduals {
    let spec = *coeffs.spec();
    let jets = Jets::of(coeffs);
    let rows: Vec<[f64; 6]> = (0..spec.len())
        .map(|k| {
            let rhs = structure_rhs(case.case_id, &jets.point(coeffs, k));
            let mut r = [0.0; 6];
            r[0] = jets.gauss_lhs(coeffs, case, k) - rhs[0];
            for e in 0..5 {
                r[e + 1] = jets.lhs[e].get(k) - rhs[e + 1];
            }
            r
        })
        .collect();
    let col = |c: usize| RealField::from_index(spec, |k| rows[k][c]);
    GcrResiduals { gauss: col(0), codazzi: [col(1), col(2), col(3), col(4)], ricci: col(5) }
}

pub fn gauss_residual(coeffs: &CoefficientSet, case: &CaseSpec) -> RealField {
    residuals(coeffs, case).gauss
}

pub fn codazzi_residual(coeffs: &CoefficientSet, case: &CaseSpec) -> [RealField; 4] {
    residuals(coeffs, case).codazzi
}

pub fn ricci_residual(coeffs: &CoefficientSet, case: &CaseSpec) -> RealField {
    residuals(coeffs, case).ricci
}

/// `(μ₁)_v − (μ₂)_u`; zero exactly when the normal connection is flat.
pub fn normal_flatness_defect(coeffs: &CoefficientSet) -> RealField {
    RealField::curl(&coeffs.mu1, &coeffs.mu2).expect("coefficients share a grid")
}

/// `K − L0` from the quadratic side of the Gauss equation: `−e^{−2λ} Q(α, β)`.
pub fn curvature_defect(coeffs: &CoefficientSet, case: &CaseSpec) -> RealField {
    let spec = *coeffs.spec();
    RealField::from_index(spec, |k| {
        let alpha = [coeffs.alpha1.get(k), coeffs.alpha2.get(k), coeffs.alpha3.get(k)];
        let beta = [coeffs.beta1.get(k), coeffs.beta2.get(k), coeffs.beta3.get(k)];
        -(-2.0 * coeffs.lambda.get(k)).exp() * gauss_quadratic(case.case_id, alpha, beta)
    })
}

/// `K − L0` from the conformal factor alone: `−e^{−2λ}(Δλ + L0 e^{2λ})`, with the
/// wave operator in place of the Laplacian for time-like surfaces.
pub fn intrinsic_curvature_defect(coeffs: &CoefficientSet, case: &CaseSpec) -> RealField {
    let jets = Jets::of(coeffs);
    RealField::from_index(*coeffs.spec(), |k| {
        -(-2.0 * coeffs.lambda.get(k)).exp() * jets.gauss_lhs(coeffs, case, k)
    })
}

/// Potential `γ` with `γ_u = μ₁`, `γ_v = μ₂`, vanishing at the base point.
pub fn gamma_potential(coeffs: &CoefficientSet, tol: f64) -> Result<RealField> {
    let defect = normal_flatness_defect(coeffs).max_abs();
    if defect > tol {
        return Err(Error::NonIntegrable { what: "normal connection (μ₁, μ₂)".into(), defect, tol });
    }
    RealField::integrate_gradient(&coeffs.mu1, &coeffs.mu2)
}

/// `Σ n-sign-weighted` squared norm of the second fundamental form relative to `e^{2λ}`.
pub fn second_form_norm(coeffs: &CoefficientSet, case: &CaseSpec) -> RealField {
    let conv = case.conventions();
    let g12 = conv.g_signs[0] * conv.g_signs[1];
    let [n1, n2] = conv.n_signs;
    RealField::from_index(*coeffs.spec(), |k| {
        let a = [coeffs.alpha1.get(k), coeffs.alpha2.get(k), coeffs.alpha3.get(k)];
        let b = [coeffs.beta1.get(k), coeffs.beta2.get(k), coeffs.beta3.get(k)];
        n1 * (a[0] * a[0] + 2.0 * g12 * a[1] * a[1] + a[2] * a[2])
            + n2 * (b[0] * b[0] + 2.0 * g12 * b[1] * b[1] + b[2] * b[2])
    })
}

/// The three 2×2 minors of the matrix with rows `α` and `β`.
pub fn minors(alpha: [f64; 3], beta: [f64; 3]) -> [f64; 3] {
    [
        alpha[0] * beta[1] - alpha[1] * beta[0],
        alpha[0] * beta[2] - alpha[2] * beta[0],
        alpha[1] * beta[2] - alpha[2] * beta[1],
    ]
}

/// Euclidean norm of the minors per point; vanishes exactly when `α ∥ β`.
pub fn minors_norm(coeffs: &CoefficientSet) -> RealField {
    RealField::from_index(*coeffs.spec(), |k| {
        let (a, b) = rows_at(coeffs, k);
        let m = minors(a, b);
        (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt()
    })
}

fn rows_at(c: &CoefficientSet, k: usize) -> ([f64; 3], [f64; 3]) {
    (
        [c.alpha1.get(k), c.alpha2.get(k), c.alpha3.get(k)],
        [c.beta1.get(k), c.beta2.get(k), c.beta3.get(k)],
    )
}

/// Form of the linearly dependent condition being tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Pick from the case and the data.
    Auto,
    /// `cos θ α + sin θ β = 0` (Riemannian normal plane).
    Rotation,
    /// `cosh t α + sinh t β = 0`.
    Space,
    /// `sinh t α + cosh t β = 0`.
    Time,
    /// `α + ε β = 0`.
    Light,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Variant::Auto),
            "rotation" | "generic" => Ok(Variant::Rotation),
            "space" => Ok(Variant::Space),
            "time" => Ok(Variant::Time),
            "light" => Ok(Variant::Light),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

/// Outcome of testing the linearly dependent condition.
#[derive(Debug, Clone)]
pub struct DependenceReport {
    pub variant: Variant,
    /// Minors norm, or `|α + εβ|` for the light-like variant.
    pub defect: RealField,
    /// `θ` or `t`, continuous across the grid; zero for the light-like variant.
    pub angle: RealField,
    /// Sign `ε` of the light-like variant.
    pub eps: Option<i8>,
    /// Grid points where both rows vanish.
    pub degenerate_points: usize,
    /// Grid points where the hyperbolic angle could not be solved for.
    pub unsolvable_points: usize,
    pub satisfied: bool,
}

/// Tests whether `α` and `β` are dependent in the form `variant` asks for.
pub fn dependence_report(
    coeffs: &CoefficientSet,
    case: &CaseSpec,
    variant: Variant,
    tol: f64,
) -> Result<DependenceReport> {
    let spec = *coeffs.spec();
    let hyperbolic = case.case_id.has_lorentzian_normal();
    let variant = match variant {
        Variant::Auto => auto_variant(coeffs, case, tol),
        Variant::Rotation if hyperbolic => {
            return Err(Error::NotApplicable(format!("case {} has a Lorentzian normal plane", case.case_id)))
        }
        Variant::Space | Variant::Time | Variant::Light if !hyperbolic => {
            return Err(Error::NotApplicable(format!("case {} has a definite normal plane", case.case_id)))
        }
        v => v,
    };
    let minors_defect = minors_norm(coeffs);

    if variant == Variant::Light {
        let light = |eps: f64| {
            RealField::from_index(spec, |k| {
                let (a, b) = rows_at(coeffs, k);
                (0..3).map(|c| (a[c] + eps * b[c]).powi(2)).sum::<f64>().sqrt()
            })
        };
        let (plus, minus) = (light(1.0), light(-1.0));
        let (eps, defect) = if plus.max_abs() <= minus.max_abs() { (1, plus) } else { (-1, minus) };
        let satisfied = defect.max_abs() <= tol;
        let degenerate_points = count_degenerate(coeffs, tol);
        return Ok(DependenceReport {
            variant,
            defect,
            angle: RealField::zeros(spec),
            eps: Some(eps),
            degenerate_points,
            unsolvable_points: 0,
            satisfied,
        });
    }

    let mut raw = vec![f64::NAN; spec.len()];
    let mut degenerate_points = 0;
    let mut unsolvable_points = 0;
    for (k, slot) in raw.iter_mut().enumerate() {
        let (a, b) = rows_at(coeffs, k);
        let j = (0..3)
            .max_by(|&x, &y| (a[x].hypot(b[x])).total_cmp(&a[y].hypot(b[y])))
            .unwrap_or(0);
        let (aj, bj) = (a[j], b[j]);
        if aj.hypot(bj) <= tol {
            degenerate_points += 1;
            continue;
        }
        *slot = match variant {
            Variant::Rotation => {
                let mut th = (-aj).atan2(bj);
                while th > std::f64::consts::FRAC_PI_2 {
                    th -= std::f64::consts::PI;
                }
                while th <= -std::f64::consts::FRAC_PI_2 {
                    th += std::f64::consts::PI;
                }
                th
            }
            Variant::Space if aj.abs() < bj.abs() => (-aj / bj).atanh(),
            Variant::Time if bj.abs() < aj.abs() => (-bj / aj).atanh(),
            _ => {
                unsolvable_points += 1;
                f64::NAN
            }
        };
    }
    let angle = continuous_angle(spec, &raw, variant == Variant::Rotation);
    let satisfied = minors_defect.max_abs() <= tol
        && unsolvable_points == 0
        && degenerate_points < spec.len();
    Ok(DependenceReport {
        variant,
        defect: minors_defect,
        angle,
        eps: None,
        degenerate_points,
        unsolvable_points,
        satisfied,
    })
}

fn count_degenerate(coeffs: &CoefficientSet, tol: f64) -> usize {
    (0..coeffs.spec().len())
        .filter(|&k| {
            let (a, b) = rows_at(coeffs, k);
            a.iter().chain(&b).all(|x| x.abs() <= tol)
        })
        .count()
}

fn auto_variant(coeffs: &CoefficientSet, case: &CaseSpec, tol: f64) -> Variant {
    if !case.case_id.has_lorentzian_normal() {
        return Variant::Rotation;
    }
    let spec = *coeffs.spec();
    let light = |eps: f64| {
        (0..spec.len()).all(|k| {
            let (a, b) = rows_at(coeffs, k);
            (0..3).all(|c| (a[c] + eps * b[c]).abs() <= tol)
        })
    };
    if case.case_id == CaseId::NT && (light(1.0) || light(-1.0)) && count_degenerate(coeffs, tol) < spec.len() {
        return Variant::Light;
    }
    let (mut space, mut time) = (0usize, 0usize);
    for k in 0..spec.len() {
        let (a, b) = rows_at(coeffs, k);
        let na: f64 = a.iter().map(|x| x * x).sum();
        let nb: f64 = b.iter().map(|x| x * x).sum();
        if na < nb {
            space += 1;
        } else if nb < na {
            time += 1;
        }
    }
    if space >= time {
        Variant::Space
    } else {
        Variant::Time
    }
}

/// Sweeps the base row then every column, replacing undefined samples by their
/// predecessor and, for angles defined mod π, choosing the representative nearest the
/// predecessor.
fn continuous_angle(spec: GridSpec, raw: &[f64], modulo_pi: bool) -> RealField {
    let mut out = vec![0.0; spec.len()];
    let fallback = raw.iter().copied().find(|x| x.is_finite()).unwrap_or(0.0);
    let pick = |prev: f64, x: f64| {
        if !x.is_finite() {
            return prev;
        }
        if modulo_pi {
            x + ((prev - x) / std::f64::consts::PI).round() * std::f64::consts::PI
        } else {
            x
        }
    };
    out[0] = if raw[0].is_finite() { raw[0] } else { fallback };
    for i in 1..spec.nu {
        out[i] = pick(out[i - 1], raw[i]);
    }
    for j in 1..spec.nv {
        for i in 0..spec.nu {
            let k = spec.index(i, j);
            out[k] = pick(out[spec.index(i, j - 1)], raw[k]);
        }
    }
    RealField::from_index(spec, |k| out[k])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ParallelExists,
    None,
    Degenerate,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::ParallelExists => "parallel-exists",
            Verdict::None => "none",
            Verdict::Degenerate => "degenerate",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

/// A normal field `c₁ N₁ + c₂ N₂`.
#[derive(Debug, Clone)]
pub struct NormalField {
    pub c1: RealField,
    pub c2: RealField,
}

#[derive(Debug, Clone)]
pub struct ParallelNormalReport {
    pub ld: DependenceReport,
    pub gamma: RealField,
    /// Spread (max − min) of `γ + θ` (rotation) or `γ − t` (hyperbolic); zero for light-like.
    pub constancy_defect: f64,
    /// `max |K − L0|` from the Gauss quadratic side.
    pub k_defect: f64,
    /// Whether `K ≡ L0` within tolerance.
    pub k_equals_l0: bool,
    pub verdict: Verdict,
    /// Direction of the parallel field when one exists.
    pub field: Option<NormalField>,
    pub reason: String,
}

/// Decides whether a parallel normal vector field exists.
///
/// The normal connection must be flat. When `K − L0` has no zeros the dependence condition
/// alone decides; when `K ≡ L0` the angle must also combine with `γ` into a constant.
pub fn detect_parallel_normal(
    coeffs: &CoefficientSet,
    case: &CaseSpec,
    variant: Variant,
    tol: Tolerances,
) -> Result<ParallelNormalReport> {
    let spec = *coeffs.spec();
    let gamma = gamma_potential(coeffs, tol.residual)?;
    let ld = dependence_report(coeffs, case, variant, tol.residual)?;
    let kdef = curvature_defect(coeffs, case);
    let k_defect = kdef.max_abs();
    let k_equals_l0 = k_defect <= tol.residual;
    let k_nowhere_l0 = kdef.values().iter().all(|x| x.abs() > tol.residual);

    let combined = match ld.variant {
        Variant::Rotation => gamma.zip_with(&ld.angle, |g, a| g + a)?,
        Variant::Space | Variant::Time => gamma.zip_with(&ld.angle, |g, a| g - a)?,
        _ => RealField::zeros(spec),
    };
    let constancy_defect = combined.max() - combined.min();

    let field = ld.satisfied.then(|| normal_field(coeffs, &ld, &gamma));
    let all_degenerate = ld.degenerate_points == spec.len();

    let (verdict, reason) = if all_degenerate {
        (Verdict::Degenerate, "second fundamental form vanishes everywhere".to_string())
    } else if !ld.satisfied {
        (Verdict::None, "second fundamental form is not linearly dependent".to_string())
    } else if ld.variant == Variant::Light {
        if k_equals_l0 {
            (Verdict::ParallelExists, "light-like dependence with K ≡ L0".to_string())
        } else {
            (Verdict::Indeterminate, "light-like dependence requires K ≡ L0".to_string())
        }
    } else if k_equals_l0 {
        if constancy_defect <= tol.constancy {
            (Verdict::ParallelExists, "K ≡ L0 and the normal angle is parallel".to_string())
        } else {
            (Verdict::None, format!("K ≡ L0 but the normal angle drifts by {constancy_defect:.3e}"))
        }
    } else if k_nowhere_l0 {
        (Verdict::ParallelExists, "K ≠ L0 and the second fundamental form is dependent".to_string())
    } else {
        (Verdict::Indeterminate, "K − L0 vanishes on part of the grid only".to_string())
    };
    let field = if verdict == Verdict::ParallelExists { field } else { None };
    Ok(ParallelNormalReport { ld, gamma, constancy_defect, k_defect, k_equals_l0, verdict, field, reason })
}

fn normal_field(coeffs: &CoefficientSet, ld: &DependenceReport, gamma: &RealField) -> NormalField {
    let spec = *coeffs.spec();
    let lam = &coeffs.lambda;
    let comp = |f: &dyn Fn(usize) -> f64| RealField::from_index(spec, f);
    match ld.variant {
        Variant::Light => {
            let eps = f64::from(ld.eps.unwrap_or(1));
            let scale = |k: usize| (-lam.get(k) + eps * gamma.get(k)).exp();
            NormalField { c1: comp(&|k| scale(k)), c2: comp(&|k| -eps * scale(k)) }
        }
        Variant::Space => NormalField {
            c1: comp(&|k| (-lam.get(k)).exp() * ld.angle.get(k).cosh()),
            c2: comp(&|k| (-lam.get(k)).exp() * ld.angle.get(k).sinh()),
        },
        Variant::Time => NormalField {
            c1: comp(&|k| (-lam.get(k)).exp() * ld.angle.get(k).sinh()),
            c2: comp(&|k| (-lam.get(k)).exp() * ld.angle.get(k).cosh()),
        },
        _ => NormalField {
            c1: comp(&|k| (-lam.get(k)).exp() * ld.angle.get(k).cos()),
            c2: comp(&|k| (-lam.get(k)).exp() * ld.angle.get(k).sin()),
        },
    }
}
