//! Densities of `N`, `M` and `K` from their inverse η-transforms.
//!
//! For each grid point `x`, `w = η(-1/z)` is followed along the vertical path
//! `z = x + iy` from far above the spectrum (where `η(s) ≈ 1 - s·E[λ]`) down to
//! `y = ε`. Each step is a Newton solve of `η⁻¹(w) = -1/z` seeded with the previous
//! root, and the square root inside `η_M⁻¹` takes whichever sign is closer to the
//! previous step's, so the physical sheet is kept all the way down. The density is
//! then `Im S(x+iε)/π` with one Richardson step, after removing known atoms.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    eta_inv_m_with_root, m_mean, m_radicand, m_support, n_support, real_inversion, EffectiveScales, Grid, TargetMatrix,
};
use crate::density::{Atom, SpectralDensity};
use crate::error::{Error, Result};
use crate::transforms::{invert_eta, mp_atom, richardson_density, InversionOptions};

const PATH_RATIO: f64 = 0.8;
const SCAN_POINTS: usize = 400;
const MAX_FLAGGED_FRACTION: f64 = 0.01;

/// A density extracted from a Stieltjes transform, with diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct Extraction {
    pub density: SpectralDensity,
    /// Grid indices where the inversion failed or left the physical sheet;
    /// their values are interpolated from neighbours.
    pub flagged: Vec<usize>,
    /// Distance above the real axis used for the Stieltjes evaluation.
    pub epsilon: f64,
    pub normalization_deviation: f64,
}

pub(crate) struct Branch<'a> {
    target: TargetMatrix,
    scales: &'a EffectiveScales,
}

fn closer_root(d: Complex64, reference: Complex64) -> Complex64 {
    let r = d.sqrt();
    if (r - reference).norm() <= (-r - reference).norm() {
        r
    } else {
        -r
    }
}

impl<'a> Branch<'a> {
    pub(crate) fn new(target: TargetMatrix, scales: &'a EffectiveScales) -> Self {
        Self { target, scales }
    }

    fn eta_inv(&self, w: Complex64, root_ref: Complex64) -> Complex64 {
        let s = self.scales;
        let beta = s.beta().value();
        let n_factor = |w: Complex64| s.qtilde() * (beta + w - 1.0);
        match self.target {
            TargetMatrix::N => (1.0 - w) / (w * n_factor(w)),
            TargetMatrix::M => eta_inv_m_with_root(w, closer_root(m_radicand(w, s), root_ref), s),
            TargetMatrix::K => eta_inv_m_with_root(w, closer_root(m_radicand(w, s), root_ref), s) / n_factor(w),
        }
    }

    fn first_moment(&self) -> f64 {
        let s = self.scales;
        let n_mean = s.qtilde() * s.beta().value();
        match self.target {
            TargetMatrix::N => n_mean,
            TargetMatrix::M => m_mean(s),
            TargetMatrix::K => n_mean * m_mean(s),
        }
    }

    /// Infimum of `η` on the positive axis: the mass at zero.
    fn eta_floor(&self) -> f64 {
        match self.target {
            TargetMatrix::M => 0.0,
            TargetMatrix::N | TargetMatrix::K => mp_atom(self.scales.beta()),
        }
    }

    /// An upper bound on the spectrum.
    fn upper_bound(&self) -> f64 {
        match self.target {
            TargetMatrix::N | TargetMatrix::K => n_support(self.scales).1,
            TargetMatrix::M => 1.0,
        }
    }

    pub(crate) fn atom(&self) -> Option<Atom> {
        let s = self.scales;
        let (location, mass) = match self.target {
            TargetMatrix::N | TargetMatrix::K => (0.0, mp_atom(s.beta())),
            TargetMatrix::M if s.has_interference() => (1.0, mp_atom(s.gamma())),
            TargetMatrix::M => (1.0, 1.0),
        };
        (mass > 0.0).then_some(Atom { location, mass })
    }

    /// `η(ψ)` for real `ψ ≥ 0`.
    pub(crate) fn eta_real(&self, psi: f64) -> Result<f64> {
        if psi == 0.0 {
            return Ok(1.0);
        }
        let lower = self.eta_floor();
        let span = 1.0 - lower;
        let seed = lower + span / (1.0 + psi * self.first_moment() / span);
        let root_ref = Complex64::new(1.0, 0.0);
        let bracket_lo = lower + 1e-15 * span.max(1e-300);
        real_inversion(|w| self.eta_inv(w, root_ref), psi, seed, (bracket_lo, 1.0))
    }

    /// `η(-1/z)` for `Im z > 0`.
    pub(crate) fn eta_at(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.track(z.re, &[z.im])?[0])
    }

    /// `w = η(-1/(x+iy))` at each `y` of `stops` (descending), by continuation
    /// from high above the real axis.
    fn track(&self, x: f64, stops: &[f64]) -> Result<Vec<Complex64>> {
        let top = stops[0];
        let y0 = (10.0 * (1.0 + x.abs() + self.upper_bound())).max(top);
        let mut path = Vec::new();
        let mut y = y0;
        while y > top {
            path.push(y);
            y *= PATH_RATIO;
        }
        let m1 = self.first_moment();
        let opts = InversionOptions::default();
        let s0 = -1.0 / Complex64::new(x, y0);
        let mut w = 1.0 - s0 * m1;
        let mut root_ref = m_radicand(Complex64::new(1.0, 0.0), self.scales).sqrt();
        let solve = |y: f64, w: &mut Complex64, root_ref: &mut Complex64| -> Result<()> {
            let target = -1.0 / Complex64::new(x, y);
            let r = *root_ref;
            *w = invert_eta(|v| self.eta_inv(v, r), target, *w, &opts)?;
            *root_ref = closer_root(m_radicand(*w, self.scales), r);
            Ok(())
        };
        for &y in &path {
            solve(y, &mut w, &mut root_ref)?;
        }
        let mut out = Vec::with_capacity(stops.len());
        for &y in stops {
            solve(y, &mut w, &mut root_ref)?;
            out.push(w);
        }
        Ok(out)
    }

    /// Stieltjes transform of the bulk at `x + iε` and `x + 2iε`.
    fn bulk_stieltjes(&self, x: f64, eps: f64) -> Result<(Complex64, Complex64)> {
        let ws = self.track(x, &[2.0 * eps, eps])?;
        let atom = self.atom();
        let s = |w: Complex64, y: f64| {
            let z = Complex64::new(x, y);
            let mut st = -w / z;
            if let Some(a) = atom {
                st -= a.mass / (a.location - z);
            }
            st
        };
        Ok((s(ws[1], eps), s(ws[0], 2.0 * eps)))
    }

    /// Bulk density at `x`, or `None` where the inversion failed or the result
    /// is unphysical.
    fn density_at(&self, x: f64, eps: f64) -> Option<f64> {
        let (s1, s2) = self.bulk_stieltjes(x, eps).ok()?;
        let slack = 1e-8 * (1.0 + s1.norm());
        if !(s1.im.is_finite() && s2.im.is_finite()) || s1.im < -slack || s2.im < -slack {
            return None;
        }
        Some(richardson_density(s1, s2))
    }

    fn extract(&self, nodes: Vec<f64>) -> Result<Extraction> {
        let span = nodes[nodes.len() - 1] - nodes[0];
        let eps = 1e-6 * span.max(1.0);
        let raw: Vec<Option<f64>> = nodes.par_iter().map(|&x| self.density_at(x, eps)).collect();
        let flagged: Vec<usize> = raw
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.is_none().then_some(i))
            .collect();
        if flagged.len() as f64 > MAX_FLAGGED_FRACTION * nodes.len() as f64 {
            return Err(Error::Validation(format!(
                "density extraction for {} failed at {} of {} grid points",
                self.target,
                flagged.len(),
                nodes.len()
            )));
        }
        let bulk = fill_gaps(&nodes, &raw);
        let atoms = self.atom().into_iter().collect();
        let density = SpectralDensity::new(nodes, bulk, atoms)?;
        let normalization_deviation = density.normalization_deviation();
        Ok(Extraction {
            density,
            flagged,
            epsilon: eps,
            normalization_deviation,
        })
    }

    /// Bracket of the bulk by a coarse scan of the extracted density over
    /// `[0, upper_bound]`, padded by one scan step on each side.
    fn scan_support(&self) -> (f64, f64) {
        let hi = self.upper_bound();
        let step = hi / SCAN_POINTS as f64;
        let xs: Vec<f64> = (0..SCAN_POINTS).map(|i| (i as f64 + 0.5) * step).collect();
        let eps = 1e-6 * hi.max(1.0);
        let values: Vec<f64> = xs.par_iter().map(|&x| self.density_at(x, eps).unwrap_or(0.0)).collect();
        let peak = values.iter().cloned().fold(0.0, f64::max);
        let threshold = (1e-8 * peak).max(1e-12);
        let first = values.iter().position(|v| *v > threshold);
        let last = values.iter().rposition(|v| *v > threshold);
        match (first, last) {
            (Some(a), Some(b)) => ((xs[a] - step).max(0.0), (xs[b] + step).min(hi)),
            _ => (0.0, hi),
        }
    }
}

/// Replaces missing samples by linear interpolation between the nearest valid neighbours.
fn fill_gaps(nodes: &[f64], raw: &[Option<f64>]) -> Vec<f64> {
    (0..raw.len())
        .map(|i| {
            if let Some(v) = raw[i] {
                return v;
            }
            let left = (0..i).rev().find_map(|j| raw[j].map(|v| (nodes[j], v)));
            let right = ((i + 1)..raw.len()).find_map(|j| raw[j].map(|v| (nodes[j], v)));
            match (left, right) {
                (Some((x0, v0)), Some((x1, v1))) => v0 + (v1 - v0) * (nodes[i] - x0) / (x1 - x0),
                (Some((_, v)), None) | (None, Some((_, v))) => v,
                (None, None) => 0.0,
            }
        })
        .collect()
}

/// Density of `K = N·M` from its inverse η-transform.
///
/// The automatic grid covers the bulk found by a coarse scan over `[0, q̃(1+√β)²]`.
/// The atom `(1-β)⁺` at zero is reported separately.
pub fn aepdf_k(scales: &EffectiveScales, grid: &Grid) -> Result<Extraction> {
    let branch = Branch::new(TargetMatrix::K, scales);
    let nodes = match grid {
        Grid::Auto { .. } => {
            let (lo, hi) = branch.scan_support();
            grid.nodes_over(lo, hi)?
        }
        Grid::Explicit(_) => grid.nodes_over(0.0, 0.0)?,
    };
    branch.extract(nodes)
}

/// Density of `M` from its inverse η-transform.
///
/// Without interference `M = I`, returned as a unit atom at 1.
pub fn aepdf_m(scales: &EffectiveScales, grid: &Grid) -> Result<Extraction> {
    if !scales.has_interference() {
        return Ok(Extraction {
            density: SpectralDensity::point_mass(1.0)?,
            flagged: Vec::new(),
            epsilon: 0.0,
            normalization_deviation: 0.0,
        });
    }
    let (lo, hi) = m_support(scales);
    Branch::new(TargetMatrix::M, scales).extract(grid.nodes_over(lo, hi)?)
}

/// Density of `N` through the same Stieltjes pipeline, for checking it against
/// the closed form.
pub fn aepdf_n_via_stieltjes(scales: &EffectiveScales, grid: &Grid) -> Result<Extraction> {
    let (lo, hi) = n_support(scales);
    Branch::new(TargetMatrix::N, scales).extract(grid.nodes_over(lo, hi)?)
}
