//! Closed-form spectra of `N = μHHᴴ`, `M = (I + νH_IH_Iᴴ)⁻¹` and `K = N·M`.
//!
//! - `N` and `Ñ = νH_IH_Iᴴ` follow Marčenko–Pastur laws scaled by `q̃ = Kμq` and
//!   `p̃ = Kνp`: eigenvalues are `q̃` (resp. `p̃`) times MP(β) (resp. MP(γ)) eigenvalues,
//!   so `η_N(x) = η_MP(q̃x, β)` and `Σ_N(x) = 1/(q̃(β+x))`.
//! - `M` has the inverse η-transform [`eta_inv_m`].
//! - Assuming `N` and `M` asymptotically free, `Σ_K = Σ_N·Σ_M`, which gives
//!   `η_K⁻¹(x) = η_M⁻¹(x) / (q̃(β+x-1))` ([`eta_inv_k`]).
//! - Densities come from the Stieltjes transform `S(z) = -η(-1/z)/z` just above the
//!   real axis ([`aepdf_k`], [`aepdf_m`]).

mod extraction;
mod residues;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::{cosine_space, Atom, SpectralDensity};
use crate::error::{domain, Error, Result};
use crate::transforms::{invert_eta, mp_atom, mp_density, mp_eta, mp_support, AspectRatio, InversionOptions};

pub use extraction::{aepdf_k, aepdf_m, aepdf_n_via_stieltjes, Extraction};
pub use residues::{
    contour_integral, eta_m_closed_form, eta_m_quadrature_oracle, eta_m_residue_form, eta_m_residue_sum,
    long_closed_form, poles_and_residues, PoleEntry, PoleTable, ResidueFormReport, VALIDATION_TOLERANCE,
};

/// Effective signal and interference scales `q̃ = Kμq`, `p̃ = Kνp` with aspect ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveScales {
    qtilde: f64,
    ptilde: f64,
    beta: AspectRatio,
    gamma: AspectRatio,
}

impl EffectiveScales {
    pub fn new(qtilde: f64, ptilde: f64, beta: AspectRatio, gamma: AspectRatio) -> Result<Self> {
        if !(qtilde.is_finite() && qtilde > 0.0) {
            return Err(domain(format!("q̃ must be positive and finite, got {qtilde}")));
        }
        if !(ptilde.is_finite() && ptilde >= 0.0) {
            return Err(domain(format!("p̃ must be nonnegative and finite, got {ptilde}")));
        }
        Ok(Self {
            qtilde,
            ptilde,
            beta,
            gamma,
        })
    }

    /// No interference (`p̃ = 0`); γ is then irrelevant and set to 1.
    pub fn interference_free(qtilde: f64, beta: AspectRatio) -> Result<Self> {
        Self::new(qtilde, 0.0, beta, AspectRatio::new(1.0)?)
    }

    pub fn qtilde(&self) -> f64 {
        self.qtilde
    }

    pub fn ptilde(&self) -> f64 {
        self.ptilde
    }

    pub fn beta(&self) -> AspectRatio {
        self.beta
    }

    pub fn gamma(&self) -> AspectRatio {
        self.gamma
    }

    pub fn has_interference(&self) -> bool {
        self.ptilde > 0.0
    }

    /// Same scales with another `q̃`.
    pub fn with_qtilde(&self, qtilde: f64) -> Result<Self> {
        Self::new(qtilde, self.ptilde, self.beta, self.gamma)
    }

    /// Same scales with another `p̃`.
    pub fn with_ptilde(&self, ptilde: f64) -> Result<Self> {
        Self::new(self.qtilde, ptilde, self.beta, self.gamma)
    }
}

/// Which matrix of the model a spectrum belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TargetMatrix {
    /// `μHHᴴ`
    N,
    /// `(I + νH_IH_Iᴴ)⁻¹`
    M,
    /// `μHHᴴ(I + νH_IH_Iᴴ)⁻¹`
    K,
}

impl fmt::Display for TargetMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::N => "N",
            Self::M => "M",
            Self::K => "K",
        };
        f.write_str(s)
    }
}

impl FromStr for TargetMatrix {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(Self::N),
            "M" | "m" => Ok(Self::M),
            "K" | "k" => Ok(Self::K),
            other => Err(domain(format!("unknown target matrix {other:?} (expected N, M or K)"))),
        }
    }
}

/// Evaluation grid for densities.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    /// `points` nodes over an automatically detected support bracket,
    /// clustered towards the bracket ends.
    Auto { points: usize },
    /// Caller-supplied nodes (strictly increasing, nonnegative).
    Explicit(Vec<f64>),
}

pub const DEFAULT_GRID_POINTS: usize = 2000;

impl Default for Grid {
    fn default() -> Self {
        Self::Auto {
            points: DEFAULT_GRID_POINTS,
        }
    }
}

impl Grid {
    pub(crate) fn validated(nodes: &[f64]) -> Result<()> {
        if nodes.len() < 2 {
            return Err(domain("a grid needs at least two points"));
        }
        if nodes.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(domain("grid points must be finite and nonnegative"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(domain("grid points must be strictly increasing"));
        }
        Ok(())
    }

    fn nodes_over(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        match self {
            Self::Auto { points } => {
                if *points < 2 {
                    return Err(domain("a grid needs at least two points"));
                }
                Ok(cosine_space(lo, hi, *points))
            }
            Self::Explicit(nodes) => {
                Self::validated(nodes)?;
                Ok(nodes.clone())
            }
        }
    }
}

/// S-transform of `N`: `1/(q̃(β+z))`.
pub fn s_transform_n(z: f64, scales: &EffectiveScales) -> Result<f64> {
    let d = scales.beta.value() + z;
    if d == 0.0 {
        return Err(Error::Pole(format!("Σ_N has a pole at z = -β = {z}")));
    }
    Ok(1.0 / (scales.qtilde * d))
}

/// S-transform of `Ñ`: `1/(p̃(γ+z))`.
pub fn s_transform_ntilde(z: f64, scales: &EffectiveScales) -> Result<f64> {
    if scales.ptilde == 0.0 {
        return Err(domain("Σ_Ñ is undefined without interference (p̃ = 0)"));
    }
    let d = scales.gamma.value() + z;
    if d == 0.0 {
        return Err(Error::Pole(format!("Σ_Ñ has a pole at z = -γ = {z}")));
    }
    Ok(1.0 / (scales.ptilde * d))
}

/// `1 + (x-γ)²p̃² + (2γ+2x)p̃`, the radicand of [`eta_inv_m`].
pub(crate) fn m_radicand(x: Complex64, scales: &EffectiveScales) -> Complex64 {
    let p = scales.ptilde;
    let g = scales.gamma.value();
    1.0 + (x - g) * (x - g) * (p * p) + (2.0 * g + 2.0 * x) * p
}

/// [`eta_inv_m`] with a caller-chosen square root of the radicand.
pub(crate) fn eta_inv_m_with_root(x: Complex64, root: Complex64, scales: &EffectiveScales) -> Complex64 {
    let p = scales.ptilde;
    let g = scales.gamma.value();
    -((x - 1.0) * (root + 1.0 + (g - x) * p)) / (2.0 * x)
}

/// Inverse η-transform of `M`,
/// `-(x-1)(√(1+(x-γ)²p̃²+(2γ+2x)p̃) + 1 + (γ-x)p̃) / (2x)`, principal square root.
pub fn eta_inv_m(x: Complex64, scales: &EffectiveScales) -> Result<Complex64> {
    if x == Complex64::new(0.0, 0.0) {
        return Err(Error::Pole("η_M⁻¹ has a pole at 0".into()));
    }
    Ok(eta_inv_m_with_root(x, m_radicand(x, scales).sqrt(), scales))
}

/// Inverse η-transform of `K`, `η_M⁻¹(x) / (q̃(β+x-1))`.
pub fn eta_inv_k(x: Complex64, scales: &EffectiveScales) -> Result<Complex64> {
    let d = scales.beta.value() + x - 1.0;
    if d == Complex64::new(0.0, 0.0) {
        return Err(Error::Pole(format!("η_K⁻¹ has a pole at x = 1-β = {}", x.re)));
    }
    Ok(eta_inv_m(x, scales)? / (scales.qtilde * d))
}

/// η-transform of `M`, obtained by inverting [`eta_inv_m`] on the physical branch.
///
/// Real `ψ ≥ 0` is solved on `(0, 1]` with bracketed Newton; other arguments off the
/// real axis are reached by continuation from `ψ → 0` (where `η = 1`). The negative
/// real axis carries the spectrum's branch cut and is rejected.
pub fn eta_m(psi: Complex64, scales: &EffectiveScales) -> Result<Complex64> {
    eta_physical(TargetMatrix::M, psi, scales)
}

/// η-transform of `K` by inverting [`eta_inv_k`]; see [`eta_m`] for the branch handling.
pub fn eta_k(psi: Complex64, scales: &EffectiveScales) -> Result<Complex64> {
    eta_physical(TargetMatrix::K, psi, scales)
}

fn eta_physical(target: TargetMatrix, psi: Complex64, scales: &EffectiveScales) -> Result<Complex64> {
    if !(psi.re.is_finite() && psi.im.is_finite()) {
        return Err(domain(format!("η argument must be finite, got {psi}")));
    }
    let branch = extraction::Branch::new(target, scales);
    if psi.im == 0.0 {
        if psi.re < 0.0 {
            return Err(domain(format!(
                "η on the negative real axis ({}) lies on the spectrum's branch cut",
                psi.re
            )));
        }
        return branch.eta_real(psi.re).map(|w| Complex64::new(w, 0.0));
    }
    if psi.im < 0.0 {
        return eta_physical(target, psi.conj(), scales).map(|w| w.conj());
    }
    let z = -1.0 / psi;
    branch.eta_at(z)
}

/// Closed-form density of `N`: eigenvalues are `q̃` times MP(β) eigenvalues.
///
/// Bulk `(1/q̃)·f_MP(x/q̃, β)` and atom `(1-β)⁺` at zero.
pub fn aepdf_n(scales: &EffectiveScales, grid: &Grid) -> Result<SpectralDensity> {
    let (a, b) = n_support(scales);
    let nodes = grid.nodes_over(a, b)?;
    let q = scales.qtilde;
    let beta = scales.beta;
    let bulk = nodes.iter().map(|&x| mp_density(x / q, beta) / q).collect();
    SpectralDensity::new(nodes, bulk, atoms_at(0.0, mp_atom(beta)))
}

/// Closed-form density of `M` by change of variables from `Ñ`:
/// `f_M(y) = y⁻²·f_Ñ((1-y)/y)`, plus an atom `(1-γ)⁺` at 1.
pub fn aepdf_m_change_of_variables(scales: &EffectiveScales, grid: &Grid) -> Result<SpectralDensity> {
    if !scales.has_interference() {
        return SpectralDensity::point_mass(1.0);
    }
    let (lo, hi) = m_support(scales);
    let nodes = grid.nodes_over(lo, hi)?;
    let p = scales.ptilde;
    let gamma = scales.gamma;
    let bulk = nodes
        .iter()
        .map(|&y| {
            if y <= 0.0 {
                0.0
            } else {
                let w = (1.0 - y) / y;
                mp_density(w / p, gamma) / p / (y * y)
            }
        })
        .collect();
    SpectralDensity::new(nodes, bulk, atoms_at(1.0, mp_atom(gamma)))
}

pub(crate) fn atoms_at(location: f64, mass: f64) -> Vec<Atom> {
    if mass > 0.0 {
        vec![Atom { location, mass }]
    } else {
        Vec::new()
    }
}

pub(crate) fn n_support(scales: &EffectiveScales) -> (f64, f64) {
    let (a, b) = mp_support(scales.beta);
    (scales.qtilde * a, scales.qtilde * b)
}

pub(crate) fn m_support(scales: &EffectiveScales) -> (f64, f64) {
    let (a, b) = mp_support(scales.gamma);
    let p = scales.ptilde;
    (1.0 / (1.0 + p * b), 1.0 / (1.0 + p * a))
}

/// Mean eigenvalue of `M`: `E[1/(1+λ_Ñ)] = η_MP(p̃, γ)`.
pub(crate) fn m_mean(scales: &EffectiveScales) -> f64 {
    mp_eta(scales.ptilde, scales.gamma).unwrap_or(1.0)
}

pub(crate) fn real_inversion(
    f: impl Fn(Complex64) -> Complex64,
    target: f64,
    seed: f64,
    bracket: (f64, f64),
) -> Result<f64> {
    let opts = InversionOptions::with_bracket(bracket.0, bracket.1);
    invert_eta(f, Complex64::new(target, 0.0), Complex64::new(seed, 0.0), &opts).map(|w| w.re)
}
