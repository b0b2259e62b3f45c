//! Uniform rectangular (u, v) grids, sampled fields and their finite-difference calculus.
//!
//! Values are stored row-major with `u` varying fastest: the sample at `(u_i, v_j)`
//! lives at index `j * nu + i`.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placement and resolution of a rectangular sample grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub u0: f64,
    pub v0: f64,
    pub du: f64,
    pub dv: f64,
    pub nu: usize,
    pub nv: usize,
}

impl GridSpec {
    /// Smallest admissible point count per axis; the one-sided boundary stencils need it.
    pub const MIN_POINTS: usize = 5;

    pub fn new(u0: f64, v0: f64, du: f64, dv: f64, nu: usize, nv: usize) -> Result<Self> {
        let spec = Self { u0, v0, du, dv, nu, nv };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid with `nu × nv` points spanning the closed box `[u_min, u_max] × [v_min, v_max]`.
    pub fn spanning(u: (f64, f64), v: (f64, f64), nu: usize, nv: usize) -> Result<Self> {
        if nu < 2 || nv < 2 {
            return Err(Error::Grid(format!("need at least 2 points per axis, got {nu}×{nv}")));
        }
        let du = (u.1 - u.0) / (nu - 1) as f64;
        let dv = (v.1 - v.0) / (nv - 1) as f64;
        Self::new(u.0, v.0, du, dv, nu, nv)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u0.is_finite() && self.v0.is_finite()) {
            return Err(Error::Grid("origin must be finite".into()));
        }
        if !(self.du.is_finite() && self.du > 0.0 && self.dv.is_finite() && self.dv > 0.0) {
            return Err(Error::Grid(format!(
                "steps must be positive, got du = {}, dv = {}",
                self.du, self.dv
            )));
        }
        if self.nu < Self::MIN_POINTS || self.nv < Self::MIN_POINTS {
            return Err(Error::Grid(format!(
                "need at least {} points per axis, got {}×{}",
                Self::MIN_POINTS,
                self.nu,
                self.nv
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nu * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nu + i
    }

    /// Inverse of [`GridSpec::index`].
    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nu, k / self.nu)
    }

    #[inline]
    pub fn u(&self, i: usize) -> f64 {
        self.u0 + i as f64 * self.du
    }

    #[inline]
    pub fn v(&self, j: usize) -> f64 {
        self.v0 + j as f64 * self.dv
    }

    /// Coordinates of flat index `k`.
    #[inline]
    pub fn point(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.coords(k);
        (self.u(i), self.v(j))
    }

    /// The coarser of the two steps.
    pub fn h(&self) -> f64 {
        self.du.max(self.dv)
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Shape(format!("grid mismatch: {self:?} vs {other:?}")))
        }
    }
}

/// Numbers a field may hold: `f64` or `Complex64`.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn is_finite_value(&self) -> bool;
    fn magnitude(&self) -> f64;
    fn to_complex(self) -> Complex64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn to_complex(self) -> Complex64 {
        self
    }
}

/// A function sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    spec: GridSpec,
    values: Vec<T>,
}

pub type RealField = Field<f64>;
pub type ComplexField = Field<Complex64>;

impl<T: Scalar> Field<T> {
    /// Checked constructor: the length must match the grid and every entry must be finite.
    pub fn new(spec: GridSpec, values: Vec<T>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "expected {} values for a {}×{} grid, got {}",
                spec.len(),
                spec.nu,
                spec.nv,
                values.len()
            )));
        }
        let field = Self { spec, values };
        field.ensure_finite("field")?;
        Ok(field)
    }

    /// Samples `f(u, v)` at every grid point. Finiteness is not checked here.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> T) -> Self {
        let values = (0..spec.len())
            .map(|k| {
                let (u, v) = spec.point(k);
                f(u, v)
            })
            .collect();
        Self { spec, values }
    }

    /// Builds a field from a function of the flat index.
    pub fn from_index(spec: GridSpec, f: impl Fn(usize) -> T) -> Self {
        Self { spec, values: (0..spec.len()).map(f).collect() }
    }

    pub fn constant(spec: GridSpec, c: T) -> Self {
        Self { spec, values: vec![c; spec.len()] }
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, T::zero())
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[self.spec.index(i, j)]
    }

    #[inline]
    pub fn get(&self, k: usize) -> T {
        self.values[k]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Scalar::is_finite_value)
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Field<U> {
        Field { spec: self.spec, values: self.values.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_with<U: Scalar, V: Scalar>(
        &self,
        other: &Field<U>,
        f: impl Fn(T, U) -> V,
    ) -> Result<Field<V>> {
        self.spec.ensure_same(&other.spec)?;
        Ok(Field {
            spec: self.spec,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(Scalar::magnitude).fold(0.0, f64::max)
    }

    pub fn mean_abs(&self) -> f64 {
        self.values.iter().map(Scalar::magnitude).sum::<f64>() / self.values.len() as f64
    }

    /// First derivative in `u`: central in the interior, one-sided second order at the edges.
    pub fn diff_u(&self) -> Self {
        self.along_u(first_derivative)
    }

    /// First derivative in `v`, same stencils as [`Field::diff_u`].
    pub fn diff_v(&self) -> Self {
        self.along_v(first_derivative)
    }

    /// Fourth-order first derivative in `u` (five-point stencils, one-sided at the edges).
    pub fn diff_u4(&self) -> Self {
        self.along_u(first_derivative4)
    }

    /// Fourth-order first derivative in `v`.
    pub fn diff_v4(&self) -> Self {
        self.along_v(first_derivative4)
    }

    fn along_u(&self, d: fn(&[T], f64, &mut [T])) -> Self {
        let s = self.spec;
        let mut out = vec![T::zero(); s.len()];
        for j in 0..s.nv {
            let row = &self.values[j * s.nu..(j + 1) * s.nu];
            d(row, s.du, &mut out[j * s.nu..(j + 1) * s.nu]);
        }
        Self { spec: s, values: out }
    }

    fn along_v(&self, d: fn(&[T], f64, &mut [T])) -> Self {
        let s = self.spec;
        let mut out = vec![T::zero(); s.len()];
        for i in 0..s.nu {
            let col: Vec<T> = (0..s.nv).map(|j| self.at(i, j)).collect();
            let mut buf = vec![T::zero(); s.nv];
            d(&col, s.dv, &mut buf);
            for (j, x) in buf.into_iter().enumerate() {
                out[s.index(i, j)] = x;
            }
        }
        Self { spec: s, values: out }
    }

    pub fn diff_uu(&self) -> Self {
        let s = self.spec;
        let mut out = vec![T::zero(); s.len()];
        for j in 0..s.nv {
            let row = &self.values[j * s.nu..(j + 1) * s.nu];
            let d = second_derivative(row, s.du);
            out[j * s.nu..(j + 1) * s.nu].copy_from_slice(&d);
        }
        Self { spec: s, values: out }
    }

    pub fn diff_vv(&self) -> Self {
        let s = self.spec;
        let mut out = vec![T::zero(); s.len()];
        for i in 0..s.nu {
            let col: Vec<T> = (0..s.nv).map(|j| self.at(i, j)).collect();
            for (j, x) in second_derivative(&col, s.dv).into_iter().enumerate() {
                out[s.index(i, j)] = x;
            }
        }
        Self { spec: s, values: out }
    }

    pub fn diff_uv(&self) -> Self {
        self.diff_u().diff_v()
    }

    /// Value halfway between `(u_i, v_j)` and `(u_{i+1}, v_j)` by four-point cubic interpolation.
    pub fn mid_u(&self, i: usize, j: usize) -> T {
        let s = &self.spec;
        cubic_midpoint(i, s.nu, |k| self.at(k, j))
    }

    /// Value halfway between `(u_i, v_j)` and `(u_i, v_{j+1})`.
    pub fn mid_v(&self, i: usize, j: usize) -> T {
        let s = &self.spec;
        cubic_midpoint(j, s.nv, |k| self.at(i, k))
    }

    /// Path-integrates the gradient `(pu, pv)` with the trapezoidal rule: along the first row,
    /// then up every column. The potential vanishes at the base point.
    pub fn integrate_gradient(pu: &Self, pv: &Self) -> Result<Self> {
        pu.spec.ensure_same(&pv.spec)?;
        let s = pu.spec;
        let mut out = vec![T::zero(); s.len()];
        for i in 1..s.nu {
            out[i] = out[i - 1] + (pu.at(i - 1, 0) + pu.at(i, 0)) * (0.5 * s.du);
        }
        for j in 1..s.nv {
            for i in 0..s.nu {
                out[s.index(i, j)] =
                    out[s.index(i, j - 1)] + (pv.at(i, j - 1) + pv.at(i, j)) * (0.5 * s.dv);
            }
        }
        Ok(Self { spec: s, values: out })
    }

    /// `∂_v pu − ∂_u pv`; vanishes (up to truncation) exactly when `(pu, pv)` is a gradient.
    pub fn curl(pu: &Self, pv: &Self) -> Result<Self> {
        pu.spec.ensure_same(&pv.spec)?;
        let a = pu.diff_v();
        let b = pv.diff_u();
        a.zip_with(&b, |x, y| x - y)
    }
}

impl Field<f64> {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_complex(&self) -> Field<Complex64> {
        self.map(|x| Complex64::new(x, 0.0))
    }
}

impl Field<Complex64> {
    pub fn re(&self) -> Field<f64> {
        self.map(|z| z.re)
    }

    pub fn im(&self) -> Field<f64> {
        self.map(|z| z.im)
    }
}

fn first_derivative<T: Scalar>(f: &[T], h: f64, out: &mut [T]) {
    let n = f.len();
    let inv = 1.0 / (2.0 * h);
    out[0] = (f[0] * -3.0 + f[1] * 4.0 - f[2]) * inv;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) * inv;
    }
    out[n - 1] = (f[n - 1] * 3.0 - f[n - 2] * 4.0 + f[n - 3]) * inv;
}

fn first_derivative4<T: Scalar>(f: &[T], h: f64, out: &mut [T]) {
    let n = f.len();
    let inv = 1.0 / (12.0 * h);
    let fwd = |k: usize, o: &[f64; 5]| (0..5).fold(T::zero(), |acc, m| acc + f[k + m] * o[m]);
    let bwd = |k: usize, o: &[f64; 5]| (0..5).fold(T::zero(), |acc, m| acc + f[k - m] * (-o[m]));
    out[0] = fwd(0, &[-25.0, 48.0, -36.0, 16.0, -3.0]) * inv;
    out[1] = fwd(0, &[-3.0, -10.0, 18.0, -6.0, 1.0]) * inv;
    for i in 2..n - 2 {
        out[i] = (f[i - 2] - f[i - 1] * 8.0 + f[i + 1] * 8.0 - f[i + 2]) * inv;
    }
    out[n - 1] = bwd(n - 1, &[-25.0, 48.0, -36.0, 16.0, -3.0]) * inv;
    out[n - 2] = bwd(n - 1, &[-3.0, -10.0, 18.0, -6.0, 1.0]) * inv;
}

fn second_derivative<T: Scalar>(f: &[T], h: f64) -> Vec<T> {
    let n = f.len();
    let inv = 1.0 / (h * h);
    let mut out = vec![T::zero(); n];
    out[0] = (f[0] * 2.0 - f[1] * 5.0 + f[2] * 4.0 - f[3]) * inv;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i] * 2.0 + f[i - 1]) * inv;
    }
    out[n - 1] = (f[n - 1] * 2.0 - f[n - 2] * 5.0 + f[n - 3] * 4.0 - f[n - 4]) * inv;
    out
}

/// Four-point Lagrange interpolation at the midpoint of cell `[k, k+1]` of a line of `n` samples.
fn cubic_midpoint<T: Scalar>(k: usize, n: usize, f: impl Fn(usize) -> T) -> T {
    debug_assert!(k + 1 < n);
    if k == 0 {
        f(0) * 0.3125 + f(1) * 0.9375 - f(2) * 0.3125 + f(3) * 0.0625
    } else if k + 2 >= n {
        f(n - 1) * 0.3125 + f(n - 2) * 0.9375 - f(n - 3) * 0.3125 + f(n - 4) * 0.0625
    } else {
        (f(k) + f(k + 1)) * 0.5625 - (f(k - 1) + f(k + 2)) * 0.0625
    }
}

/// Real-or-complex field, the unit of exchange for files and generic pointwise maps.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldGrid {
    Real(RealField),
    Complex(ComplexField),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Real,
    Complex,
}

impl FieldGrid {
    pub fn spec(&self) -> &GridSpec {
        match self {
            FieldGrid::Real(f) => f.spec(),
            FieldGrid::Complex(f) => f.spec(),
        }
    }

    pub fn kind(&self) -> FieldKind {
        match self {
            FieldGrid::Real(_) => FieldKind::Real,
            FieldGrid::Complex(_) => FieldKind::Complex,
        }
    }

    pub fn to_complex(&self) -> ComplexField {
        match self {
            FieldGrid::Real(f) => f.to_complex(),
            FieldGrid::Complex(f) => f.clone(),
        }
    }

    pub fn as_real(&self) -> Option<&RealField> {
        match self {
            FieldGrid::Real(f) => Some(f),
            FieldGrid::Complex(_) => None,
        }
    }

    pub fn diff_u(&self) -> Self {
        match self {
            FieldGrid::Real(f) => FieldGrid::Real(f.diff_u()),
            FieldGrid::Complex(f) => FieldGrid::Complex(f.diff_u()),
        }
    }

    pub fn diff_v(&self) -> Self {
        match self {
            FieldGrid::Real(f) => FieldGrid::Real(f.diff_v()),
            FieldGrid::Complex(f) => FieldGrid::Complex(f.diff_v()),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            FieldGrid::Real(f) => f.max_abs(),
            FieldGrid::Complex(f) => f.max_abs(),
        }
    }
}

impl From<RealField> for FieldGrid {
    fn from(f: RealField) -> Self {
        FieldGrid::Real(f)
    }
}

impl From<ComplexField> for FieldGrid {
    fn from(f: ComplexField) -> Self {
        FieldGrid::Complex(f)
    }
}

/// Applies `f` pointwise across `fields`. The result is complex when any input is complex;
/// otherwise `f` sees real inputs (zero imaginary part) and the real part is kept.
pub fn field_map(fields: &[&FieldGrid], f: impl Fn(&[Complex64]) -> Complex64) -> Result<FieldGrid> {
    let first = fields
        .first()
        .ok_or_else(|| Error::Shape("field_map needs at least one field".into()))?;
    let spec = *first.spec();
    for g in fields {
        spec.ensure_same(g.spec())?;
    }
    let complex = fields.iter().any(|g| g.kind() == FieldKind::Complex);
    let inputs: Vec<ComplexField> = fields.iter().map(|g| g.to_complex()).collect();
    let mut args = vec![Complex64::new(0.0, 0.0); inputs.len()];
    let values: Vec<Complex64> = (0..spec.len())
        .map(|k| {
            for (a, g) in args.iter_mut().zip(&inputs) {
                *a = g.get(k);
            }
            f(&args)
        })
        .collect();
    let out = Field { spec, values };
    Ok(if complex { FieldGrid::Complex(out) } else { FieldGrid::Real(out.re()) })
}
