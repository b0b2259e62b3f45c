//! Frame coefficients, the connection matrices `S`, `T` of `∂_u Φ = ΦS`, `∂_v Φ = ΦT`
//! for the frame `Φ = (T₁ T₂ N₁ N₂ F)`, and their integrability defect.

use nalgebra::Matrix5;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, RealField};
use crate::spaceform::{CaseId, CaseSpec};

/// Names of the nine coefficient fields, in storage order.
pub const COEFFICIENT_NAMES: [&str; 9] =
    ["lambda", "alpha1", "alpha2", "alpha3", "beta1", "beta2", "beta3", "mu1", "mu2"];

/// Conformal factor `λ`, second fundamental form components `αₖ` (along `N₁`) and `βₖ`
/// (along `N₂`), and normal connection forms `μₗ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub lambda: RealField,
    pub alpha1: RealField,
    pub alpha2: RealField,
    pub alpha3: RealField,
    pub beta1: RealField,
    pub beta2: RealField,
    pub beta3: RealField,
    pub mu1: RealField,
    pub mu2: RealField,
}

impl CoefficientSet {
    /// Builds from fields in [`COEFFICIENT_NAMES`] order, checking grids and finiteness.
    pub fn from_fields(fields: [RealField; 9]) -> Result<Self> {
        let spec = *fields[0].spec();
        for (name, f) in COEFFICIENT_NAMES.iter().zip(&fields) {
            spec.ensure_same(f.spec())
                .map_err(|_| Error::Shape(format!("coefficient '{name}' is on a different grid")))?;
            f.ensure_finite(name)?;
        }
        let [lambda, alpha1, alpha2, alpha3, beta1, beta2, beta3, mu1, mu2] = fields;
        Ok(Self { lambda, alpha1, alpha2, alpha3, beta1, beta2, beta3, mu1, mu2 })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        let z = RealField::zeros(spec);
        Self {
            lambda: z.clone(),
            alpha1: z.clone(),
            alpha2: z.clone(),
            alpha3: z.clone(),
            beta1: z.clone(),
            beta2: z.clone(),
            beta3: z.clone(),
            mu1: z.clone(),
            mu2: z,
        }
    }

    /// Samples closed-form coefficient functions of `(u, v)`.
    pub fn from_fns(spec: GridSpec, f: impl Fn(f64, f64) -> [f64; 9]) -> Result<Self> {
        let samples: Vec<[f64; 9]> = (0..spec.len()).map(|k| {
            let (u, v) = spec.point(k);
            f(u, v)
        }).collect();
        let fields = std::array::from_fn(|c| RealField::from_index(spec, |k| samples[k][c]));
        Self::from_fields(fields)
    }

    pub fn spec(&self) -> &GridSpec {
        self.lambda.spec()
    }

    pub fn fields(&self) -> [&RealField; 9] {
        [
            &self.lambda,
            &self.alpha1,
            &self.alpha2,
            &self.alpha3,
            &self.beta1,
            &self.beta2,
            &self.beta3,
            &self.mu1,
            &self.mu2,
        ]
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &RealField)> {
        COEFFICIENT_NAMES.into_iter().zip(self.fields())
    }

    pub fn alpha(&self) -> [&RealField; 3] {
        [&self.alpha1, &self.alpha2, &self.alpha3]
    }

    pub fn beta(&self) -> [&RealField; 3] {
        [&self.beta1, &self.beta2, &self.beta3]
    }

    /// Largest coefficient magnitude, used to scale tolerances.
    pub fn scale(&self) -> f64 {
        self.fields().iter().map(|f| f.max_abs()).fold(0.0, f64::max)
    }

    /// Pointwise values at flat index `k`, with `λ_u`, `λ_v` taken from `grad`.
    pub fn point(&self, grad: &LambdaGradient, k: usize) -> PointCoeffs {
        PointCoeffs {
            lambda: self.lambda.get(k),
            lambda_u: grad.u.get(k),
            lambda_v: grad.v.get(k),
            alpha: [self.alpha1.get(k), self.alpha2.get(k), self.alpha3.get(k)],
            beta: [self.beta1.get(k), self.beta2.get(k), self.beta3.get(k)],
            mu: [self.mu1.get(k), self.mu2.get(k)],
        }
    }

    /// Interpolated values halfway between `(i, j)` and `(i + 1, j)`.
    pub fn point_mid_u(&self, grad: &LambdaGradient, i: usize, j: usize) -> PointCoeffs {
        self.point_with(grad, |f| f.mid_u(i, j))
    }

    /// Interpolated values halfway between `(i, j)` and `(i, j + 1)`.
    pub fn point_mid_v(&self, grad: &LambdaGradient, i: usize, j: usize) -> PointCoeffs {
        self.point_with(grad, |f| f.mid_v(i, j))
    }

    fn point_with(&self, grad: &LambdaGradient, at: impl Fn(&RealField) -> f64) -> PointCoeffs {
        PointCoeffs {
            lambda: at(&self.lambda),
            lambda_u: at(&grad.u),
            lambda_v: at(&grad.v),
            alpha: [at(&self.alpha1), at(&self.alpha2), at(&self.alpha3)],
            beta: [at(&self.beta1), at(&self.beta2), at(&self.beta3)],
            mu: [at(&self.mu1), at(&self.mu2)],
        }
    }
}

/// Finite-difference gradient of `λ`.
#[derive(Debug, Clone)]
pub struct LambdaGradient {
    pub u: RealField,
    pub v: RealField,
}

impl LambdaGradient {
    pub fn of(coeffs: &CoefficientSet) -> Self {
        Self { u: coeffs.lambda.diff_u(), v: coeffs.lambda.diff_v() }
    }

    /// Fourth-order stencils, for frame integration.
    pub fn fourth_order(coeffs: &CoefficientSet) -> Self {
        Self { u: coeffs.lambda.diff_u4(), v: coeffs.lambda.diff_v4() }
    }
}

/// Coefficient values at a single point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointCoeffs {
    pub lambda: f64,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub mu: [f64; 2],
}

/// `(S, T)` at one point for the given case.
pub fn connection_at(case: CaseId, l0: f64, p: &PointCoeffs) -> (Matrix5<f64>, Matrix5<f64>) {
    let (lu, lv) = (p.lambda_u, p.lambda_v);
    let [a1, a2, a3] = p.alpha;
    let [b1, b2, b3] = p.beta;
    let [m1, m2] = p.mu;
    let e = l0 * (2.0 * p.lambda).exp();
    #[rustfmt::skip]
    let (s, t) = match case {
        CaseId::R => (
            [[ lu,  lv, -a1, -b1, 1.0],
             [-lv,  lu, -a2, -b2, 0.0],
             [ a1,  a2,  lu, -m1, 0.0],
             [ b1,  b2,  m1,  lu, 0.0],
             [ -e, 0.0, 0.0, 0.0, 0.0]],
            [[ lv, -lu, -a2, -b2, 0.0],
             [ lu,  lv, -a3, -b3, 1.0],
             [ a2,  a3,  lv, -m2, 0.0],
             [ b2,  b3,  m2,  lv, 0.0],
             [0.0,  -e, 0.0, 0.0, 0.0]],
        ),
        CaseId::NS => (
            [[ lu,  lv,  a1,  b1, 1.0],
             [-lv,  lu,  a2,  b2, 0.0],
             [ a1,  a2,  lu, -m1, 0.0],
             [ b1,  b2,  m1,  lu, 0.0],
             [ -e, 0.0, 0.0, 0.0, 0.0]],
            [[ lv, -lu,  a2,  b2, 0.0],
             [ lu,  lv,  a3,  b3, 1.0],
             [ a2,  a3,  lv, -m2, 0.0],
             [ b2,  b3,  m2,  lv, 0.0],
             [0.0,  -e, 0.0, 0.0, 0.0]],
        ),
        CaseId::NT => (
            [[ lu,  lv, -a1,  b1, 1.0],
             [ lv,  lu,  a2, -b2, 0.0],
             [ a1,  a2,  lu,  m1, 0.0],
             [ b1,  b2,  m1,  lu, 0.0],
             [ -e, 0.0, 0.0, 0.0, 0.0]],
            [[ lv,  lu, -a2,  b2, 0.0],
             [ lu,  lv,  a3, -b3, 1.0],
             [ a2,  a3,  lv,  m2, 0.0],
             [ b2,  b3,  m2,  lv, 0.0],
             [0.0,   e, 0.0, 0.0, 0.0]],
        ),
        CaseId::LS => (
            [[ lu,  lv, -a1,  b1, 1.0],
             [-lv,  lu, -a2,  b2, 0.0],
             [ a1,  a2,  lu,  m1, 0.0],
             [ b1,  b2,  m1,  lu, 0.0],
             [ -e, 0.0, 0.0, 0.0, 0.0]],
            [[ lv, -lu, -a2,  b2, 0.0],
             [ lu,  lv, -a3,  b3, 1.0],
             [ a2,  a3,  lv,  m2, 0.0],
             [ b2,  b3,  m2,  lv, 0.0],
             [0.0,  -e, 0.0, 0.0, 0.0]],
        ),
        CaseId::LT => (
            [[ lu,  lv, -a1, -b1, 1.0],
             [ lv,  lu,  a2,  b2, 0.0],
             [ a1,  a2,  lu, -m1, 0.0],
             [ b1,  b2,  m1,  lu, 0.0],
             [ -e, 0.0, 0.0, 0.0, 0.0]],
            [[ lv,  lu, -a2, -b2, 0.0],
             [ lu,  lv,  a3,  b3, 1.0],
             [ a2,  a3,  lv, -m2, 0.0],
             [ b2,  b3,  m2,  lv, 0.0],
             [0.0,   e, 0.0, 0.0, 0.0]],
        ),
    };
    (from_rows(&s), from_rows(&t))
}

fn from_rows(rows: &[[f64; 5]; 5]) -> Matrix5<f64> {
    Matrix5::from_fn(|r, c| rows[r][c])
}

/// `S` and `T` at every grid point.
#[derive(Debug, Clone)]
pub struct ConnectionMatrices {
    pub spec: GridSpec,
    pub s: Vec<Matrix5<f64>>,
    pub t: Vec<Matrix5<f64>>,
}

impl ConnectionMatrices {
    /// Entry `(r, c)` of `S` as a field.
    pub fn s_entry(&self, r: usize, c: usize) -> RealField {
        RealField::from_index(self.spec, |k| self.s[k][(r, c)])
    }

    pub fn t_entry(&self, r: usize, c: usize) -> RealField {
        RealField::from_index(self.spec, |k| self.t[k][(r, c)])
    }
}

pub fn assemble_connection(coeffs: &CoefficientSet, case: &CaseSpec) -> ConnectionMatrices {
    let spec = *coeffs.spec();
    let grad = LambdaGradient::of(coeffs);
    let (s, t) = (0..spec.len())
        .into_par_iter()
        .map(|k| connection_at(case.case_id, case.l0, &coeffs.point(&grad, k)))
        .unzip();
    ConnectionMatrices { spec, s, t }
}

/// Entrywise `∂_v S − ∂_u T − (ST − TS)` at every point.
pub fn compatibility_matrices(coeffs: &CoefficientSet, case: &CaseSpec) -> Vec<Matrix5<f64>> {
    let conn = assemble_connection(coeffs, case);
    let mut out: Vec<Matrix5<f64>> = conn
        .s
        .par_iter()
        .zip(&conn.t)
        .map(|(s, t)| -(s * t - t * s))
        .collect();
    for r in 0..5 {
        for c in 0..5 {
            let sv = conn.s_entry(r, c).diff_v();
            let tu = conn.t_entry(r, c).diff_u();
            for (k, m) in out.iter_mut().enumerate() {
                m[(r, c)] += sv.get(k) - tu.get(k);
            }
        }
    }
    out
}

/// Frobenius norm of the integrability defect per point.
pub fn compatibility_defect(coeffs: &CoefficientSet, case: &CaseSpec) -> RealField {
    let m = compatibility_matrices(coeffs, case);
    RealField::from_index(*coeffs.spec(), |k| m[k].norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_has_only_position_columns() {
        let p = PointCoeffs::default();
        let (s, t) = connection_at(CaseId::R, 0.0, &p);
        let nonzero = |m: &Matrix5<f64>| m.iter().filter(|x| **x != 0.0).count();
        assert_eq!(nonzero(&s), 1);
        assert_eq!(s[(0, 4)], 1.0);
        assert_eq!(nonzero(&t), 1);
        assert_eq!(t[(1, 4)], 1.0);
    }

    #[test]
    fn position_column_is_shared_by_all_cases() {
        let p = PointCoeffs { lambda: 0.3, lambda_u: 0.1, lambda_v: -0.2, alpha: [1.0, 2.0, 3.0], beta: [4.0, 5.0, 6.0], mu: [7.0, 8.0] };
        for case in CaseId::ALL {
            let (s, t) = connection_at(case, 1.5, &p);
            assert_eq!(s.column(4).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
            assert_eq!(t.column(4).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        }
    }
}
