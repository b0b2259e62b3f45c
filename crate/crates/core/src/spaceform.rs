//! The five signature cases: ambient model space, causal types and normal-frame normalization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which combination of ambient signature and surface causal type is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseId {
    /// Surface in a Riemannian space form.
    R,
    /// Space-like surface in a neutral space form.
    NS,
    /// Time-like surface in a neutral space form.
    NT,
    /// Space-like surface in a Lorentzian space form.
    LS,
    /// Time-like surface in a Lorentzian space form.
    LT,
}

impl CaseId {
    pub const ALL: [CaseId; 5] = [CaseId::R, CaseId::NS, CaseId::NT, CaseId::LS, CaseId::LT];

    pub fn conventions(self) -> MetricConventions {
        let (g, n) = match self {
            CaseId::R => ([1.0, 1.0], [1.0, 1.0]),
            CaseId::NS => ([1.0, 1.0], [-1.0, -1.0]),
            CaseId::NT => ([1.0, -1.0], [1.0, -1.0]),
            CaseId::LS => ([1.0, 1.0], [1.0, -1.0]),
            CaseId::LT => ([1.0, -1.0], [1.0, 1.0]),
        };
        MetricConventions { g_signs: g, n_signs: n }
    }

    /// Time-like surfaces carry the metric `e^{2λ}(du² − dv²)`.
    pub fn is_timelike(self) -> bool {
        matches!(self, CaseId::NT | CaseId::LT)
    }

    /// Cases whose normal plane is Lorentzian, so normal directions rotate hyperbolically.
    pub fn has_lorentzian_normal(self) -> bool {
        matches!(self, CaseId::NT | CaseId::LS)
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CaseId::R => "R",
            CaseId::NS => "NS",
            CaseId::NT => "NT",
            CaseId::LS => "LS",
            CaseId::LT => "LT",
        };
        f.write_str(s)
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" => Ok(CaseId::R),
            "NS" => Ok(CaseId::NS),
            "NT" => Ok(CaseId::NT),
            "LS" => Ok(CaseId::LS),
            "LT" => Ok(CaseId::LT),
            other => Err(Error::Config(format!("unknown case '{other}' (expected R, NS, NT, LS or LT)"))),
        }
    }
}

/// Active case plus curvature and sign switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    #[serde(rename = "case")]
    pub case_id: CaseId,
    pub l0: f64,
    #[serde(default = "plus_one")]
    pub eps: i8,
    #[serde(default = "plus_one")]
    pub delta: i8,
}

fn plus_one() -> i8 {
    1
}

impl CaseSpec {
    pub fn new(case_id: CaseId, l0: f64) -> Self {
        Self { case_id, l0, eps: 1, delta: 1 }
    }

    pub fn with_signs(case_id: CaseId, l0: f64, eps: i8, delta: i8) -> Result<Self> {
        let spec = Self { case_id, l0, eps, delta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.l0.is_finite() {
            return Err(Error::Config("L0 must be finite".into()));
        }
        if self.eps.abs() != 1 || self.delta.abs() != 1 {
            return Err(Error::Config(format!("eps and delta must be ±1, got {} and {}", self.eps, self.delta)));
        }
        Ok(())
    }

    pub fn conventions(&self) -> MetricConventions {
        self.case_id.conventions()
    }

    pub fn signature(&self) -> AmbientSignature {
        ambient_signature(self)
    }
}

/// Signs `(du², dv²)` of the induced metric and `(⟨N₁,N₁⟩, ⟨N₂,N₂⟩)`, each relative to `e^{2λ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConventions {
    pub g_signs: [f64; 2],
    pub n_signs: [f64; 2],
}

impl MetricConventions {
    /// Signs of the first four frame columns `(T₁, T₂, N₁, N₂)`.
    pub fn frame_signs(&self) -> [f64; 4] {
        [self.g_signs[0], self.g_signs[1], self.n_signs[0], self.n_signs[1]]
    }
}

/// Diagonal metric of the flat ambient space, `+` entries first.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientSignature {
    pub dim: usize,
    pub signs: Vec<f64>,
}

impl AmbientSignature {
    /// Number of negative entries.
    pub fn index(&self) -> usize {
        self.signs.iter().filter(|&&s| s < 0.0).count()
    }

    /// The signs padded with zeros to length 5, so that 4-dimensional ambients can share
    /// 5-row storage.
    pub fn padded(&self) -> [f64; 5] {
        let mut out = [0.0; 5];
        out[..self.dim].copy_from_slice(&self.signs);
        out
    }
}

/// Model space for the case: `E⁴_k` when `L0 = 0`, otherwise the flat `E⁵_k` containing
/// the quadric `⟨x, x⟩ = 1/L0`.
pub fn ambient_signature(case: &CaseSpec) -> AmbientSignature {
    let mut signs: Vec<f64> = case.conventions().frame_signs().to_vec();
    if case.l0 != 0.0 {
        signs.push(case.l0.signum());
    }
    signs.sort_by(|a, b| b.total_cmp(a));
    AmbientSignature { dim: signs.len(), signs }
}

/// `Σ signs[i] x[i] y[i]`.
pub fn ambient_inner(x: &[f64], y: &[f64], sig: &AmbientSignature) -> Result<f64> {
    if x.len() != sig.dim || y.len() != sig.dim {
        return Err(Error::Shape(format!(
            "vectors of length {} and {} in a {}-dimensional ambient",
            x.len(),
            y.len(),
            sig.dim
        )));
    }
    Ok(x.iter().zip(y).zip(&sig.signs).map(|((a, b), s)| s * a * b).sum())
}

/// `⟨x, x⟩ − 1/L0`.
pub fn quadric_defect(point: &[f64], case: &CaseSpec) -> Result<f64> {
    if case.l0 == 0.0 {
        return Err(Error::NotApplicable("quadric defect needs L0 ≠ 0".into()));
    }
    let sig = ambient_signature(case);
    Ok(ambient_inner(point, point, &sig)? - 1.0 / case.l0)
}

/// Assigns each frame column `(T₁, T₂, N₁, N₂, F)` an ambient axis whose sign matches the
/// column's causal type. Used for canonical initial frames.
pub fn column_axes(case: &CaseSpec) -> [Option<usize>; 5] {
    let sig = ambient_signature(case);
    let mut used = vec![false; sig.dim];
    let mut out = [None; 5];
    let mut wanted: Vec<(usize, f64)> =
        case.conventions().frame_signs().iter().copied().enumerate().collect();
    if case.l0 != 0.0 {
        wanted.push((4, case.l0.signum()));
    }
    for (col, sign) in wanted {
        let axis = (0..sig.dim).find(|&a| !used[a] && sig.signs[a] == sign);
        if let Some(a) = axis {
            used[a] = true;
            out[col] = Some(a);
        }
    }
    out
}
