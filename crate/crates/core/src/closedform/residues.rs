//! Contour-integral evaluation of `η_M` and its cross-checks.
//!
//! `η_M(ψ) = ∫ (w+1)/(1+ψ+w) dF_Ñ(w)`; substituting `w = p̃(1+γ+2√γ cos ω)` and
//! `ζ = e^{iω}` turns the bulk part into `(γ/4πi)∮ g(ζ)dζ` over the unit circle with
//! poles at 0 (double), `-√γ`, `-1/√γ` and the reciprocal pair `ζ₄`, `ζ₅`.
//! The tabulated residues `ρ₀..ρ₅` are closed-form expressions in `ψ`, `p̃`, `γ`;
//! the long closed form is the expression they add up to.
//!
//! Numerically (see the tests):
//! - the tabulated `ρ₂` is the residue at `-1/√γ` and the tabulated `ρ₅` the residue at
//!   the root inside the unit disk, so `ρ₂,₃` and `ρ₄,₅` are each labelled swapped;
//! - `ρ₁ = 1/√γ` is the `ζ⁻²` Laurent coefficient at the origin, not a residue;
//! - `-(γ/2)(ρ₀+ρ₂+ρ₅)` equals `η_M` for every γ ≠ 1, including γ < 1 where the
//!   raw contour integral misses the atom at 1;
//! - the long closed form equals `p̃·η_M` (so it gives `p̃` at ψ = 0).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use super::EffectiveScales;
use crate::error::{domain, Result};
use crate::quadrature::{integrate, Tolerance};
use crate::transforms::{mp_atom, mp_density, mp_support};

/// Agreement required between a formula and the quadrature oracle.
pub const VALIDATION_TOLERANCE: f64 = 1e-6;

const CONTOUR_NODES: usize = 4096;
const CONFLUENCE: f64 = 1e-9;

fn require_interference(scales: &EffectiveScales) -> Result<()> {
    if scales.ptilde() > 0.0 {
        Ok(())
    } else {
        Err(domain("the contour form of η_M needs p̃ > 0"))
    }
}

fn require_psi(psi: f64) -> Result<()> {
    if psi.is_finite() && psi >= 0.0 {
        Ok(())
    } else {
        Err(domain(format!("ψ must be finite and ≥ 0, got {psi}")))
    }
}

/// `η_M(ψ)` by adaptive quadrature of `(w+1)/(1+ψ+w)` against the law of `Ñ`.
///
/// Bulk on `[p̃(1-√γ)², p̃(1+√γ)²]` to absolute tolerance 1e-10; the atom `(1-γ)⁺`
/// of `Ñ` at 0 contributes `(1-γ)⁺/(1+ψ)`.
pub fn eta_m_quadrature_oracle(psi: f64, scales: &EffectiveScales) -> Result<f64> {
    require_interference(scales)?;
    require_psi(psi)?;
    let p = scales.ptilde();
    let gamma = scales.gamma();
    let (a, b) = mp_support(gamma);
    let bulk = integrate(
        |w| (w + 1.0) / (1.0 + psi + w) * mp_density(w / p, gamma) / p,
        p * a,
        p * b,
        Tolerance::absolute(1e-10),
    );
    Ok(bulk.value + mp_atom(gamma) / (1.0 + psi))
}

struct Contour {
    psi: f64,
    p: f64,
    g: f64,
    sg: f64,
}

impl Contour {
    fn new(psi: f64, scales: &EffectiveScales) -> Self {
        let g = scales.gamma().value();
        Self {
            psi,
            p: scales.ptilde(),
            g,
            sg: g.sqrt(),
        }
    }

    fn numerator(&self, z: Complex64) -> Complex64 {
        let z2m1 = z * z - 1.0;
        ((1.0 + self.p * (1.0 + self.g)) * z + self.sg * self.p * (z * z + 1.0)) * z2m1 * z2m1
    }

    /// Denominator without the `ζ²` factor.
    fn reduced_denominator(&self, z: Complex64) -> Complex64 {
        let first = (1.0 + self.g) * z + self.sg * (z * z + 1.0);
        let second = z * (1.0 + self.psi + self.p * (1.0 + self.g)) + self.sg * self.p * (z * z + 1.0);
        first * second
    }

    fn denominator(&self, z: Complex64) -> Complex64 {
        z * z * self.reduced_denominator(z)
    }

    fn integrand(&self, z: Complex64) -> Complex64 {
        self.numerator(z) / self.denominator(z)
    }

    /// `ζ²·g(ζ)`, analytic at the origin.
    fn regular_part(&self, z: Complex64) -> Complex64 {
        self.numerator(z) / self.reduced_denominator(z)
    }

    fn c(&self) -> f64 {
        (1.0 + self.g) * self.p + 1.0 + self.psi
    }

    fn delta(&self) -> f64 {
        let (g, p, s) = (self.g, self.p, 1.0 + self.psi);
        (g - 1.0) * (g - 1.0) * p * p + 2.0 * s * (1.0 + g) * p + s * s
    }

    fn poles(&self) -> [Complex64; 6] {
        let c = self.c();
        let root = self.delta().sqrt();
        let denom = 2.0 * self.p * self.sg;
        // -c + √Δ = -4γp̃²/(c + √Δ), which avoids cancellation for small p̃.
        let z4 = -4.0 * self.g * self.p * self.p / (c + root) / denom;
        let z5 = (-c - root) / denom;
        let re = |x: f64| Complex64::new(x, 0.0);
        [
            re(0.0),
            re(0.0),
            re((-(1.0 + self.g) + (1.0 - self.g)) / (2.0 * self.sg)),
            re((-(1.0 + self.g) - (1.0 - self.g)) / (2.0 * self.sg)),
            re(z4),
            re(z5),
        ]
    }

    fn tabulated_residues(&self) -> [f64; 6] {
        let (g, p, psi) = (self.g, self.p, self.psi);
        let c = self.c();
        let delta = self.delta();
        let root = delta.sqrt();
        let rho0 = -(p + p * g + psi) / (p * g);
        let rho1 = 1.0 / self.sg;
        let rho23 = (g - 1.0) / (g + psi * g);
        let rho45 = (-c * root + delta) * psi / (p * g * (1.0 + psi) * (-root + c));
        [rho0, rho1, rho23, -rho23, rho45, -rho45]
    }

    fn simple_residue(&self, z: Complex64) -> Complex64 {
        let h = 1e-6 * z.norm().max(1.0);
        let d = (self.denominator(z + h) - self.denominator(z - h)) / (2.0 * h);
        self.numerator(z) / d
    }

    /// Residue at the double pole: derivative of `ζ²g(ζ)` at 0.
    fn origin_residue(&self) -> Complex64 {
        let h = Complex64::new(1e-5, 0.0);
        (self.regular_part(h) - self.regular_part(-h)) / (2.0 * h.re)
    }

    fn origin_leading(&self) -> Complex64 {
        self.regular_part(Complex64::new(0.0, 0.0))
    }
}

/// One pole of the contour integrand with its tabulated and numerical residues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoleEntry {
    pub index: usize,
    pub pole: Complex64,
    pub inside_unit_disk: bool,
    /// Tabulated `ρ_index`.
    pub tabulated_residue: Complex64,
    /// Residue of the integrand at `pole`. For index 1 this is the `ζ⁻²`
    /// Laurent coefficient at the origin, which is what the tabulated `ρ₁` is.
    pub numeric_residue: Complex64,
    /// Tabulated `ρ_index` agrees with the numerical residue at `ζ_index`.
    pub matches_nominal: bool,
    /// Tabulated `ρ_index` agrees with the numerical residue at the other root of
    /// the same quadratic (`ζ₂↔ζ₃`, `ζ₄↔ζ₅`).
    pub matches_partner: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoleTable {
    pub psi: f64,
    pub entries: Vec<PoleEntry>,
    /// Confluent poles or poles on the contour; residue formulas do not apply.
    pub degenerate: bool,
}

fn agrees(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= VALIDATION_TOLERANCE * (1.0 + b.norm())
}

/// The six poles `ζ₀..ζ₅` from the closed-form pole expressions and their residues.
pub fn poles_and_residues(psi: f64, scales: &EffectiveScales) -> Result<PoleTable> {
    require_interference(scales)?;
    require_psi(psi)?;
    let contour = Contour::new(psi, scales);
    let poles = contour.poles();
    let tabulated = contour.tabulated_residues();
    let numeric: [Complex64; 6] = [
        contour.origin_residue(),
        contour.origin_leading(),
        contour.simple_residue(poles[2]),
        contour.simple_residue(poles[3]),
        contour.simple_residue(poles[4]),
        contour.simple_residue(poles[5]),
    ];

    let mut degenerate = false;
    for i in 2..6 {
        if (poles[i].norm() - 1.0).abs() < CONFLUENCE {
            degenerate = true;
        }
        for j in (i + 1)..6 {
            if (poles[i] - poles[j]).norm() < CONFLUENCE * (1.0 + poles[i].norm()) {
                degenerate = true;
            }
        }
    }

    let entries = (0..6)
        .map(|i| {
            let rho = Complex64::new(tabulated[i], 0.0);
            let partner = match i {
                2..=5 => Some(i ^ 1),
                _ => None,
            };
            PoleEntry {
                index: i,
                pole: poles[i],
                inside_unit_disk: poles[i].norm() < 1.0,
                tabulated_residue: rho,
                numeric_residue: numeric[i],
                matches_nominal: !degenerate && agrees(rho, numeric[i]),
                matches_partner: !degenerate && partner.is_some_and(|j| agrees(rho, numeric[j])),
            }
        })
        .collect();
    Ok(PoleTable {
        psi,
        entries,
        degenerate,
    })
}

/// `-(γ/2)(ρ₀+ρ₂+ρ₅)` from the tabulated residues.
pub fn eta_m_residue_sum(psi: f64, scales: &EffectiveScales) -> Result<f64> {
    require_interference(scales)?;
    require_psi(psi)?;
    let rho = Contour::new(psi, scales).tabulated_residues();
    Ok(-0.5 * scales.gamma().value() * (rho[0] + rho[2] + rho[5]))
}

/// The long closed form for `η_M`, evaluated literally.
pub fn long_closed_form(psi: f64, scales: &EffectiveScales) -> Result<f64> {
    require_interference(scales)?;
    require_psi(psi)?;
    let p = scales.ptilde();
    let g = scales.gamma().value();
    let root = (p * p * (g - 1.0).powi(2) + 2.0 * (1.0 + psi) * (g + 1.0) * p + (1.0 + psi).powi(2)).sqrt();
    let numerator = -(psi * psi + (1.0 + (1.0 + g) * p) * psi + p) * root
        + psi.powi(3)
        + (2.0 + (2.0 + 2.0 * g) * p) * psi * psi
        + (1.0 + (1.0 + g * g) * p * p + (2.0 * g + 3.0) * p) * psi
        + (g + 1.0) * p * p
        + p;
    let denominator = (1.0 + psi) * (-root + psi + 1.0 + (g + 1.0) * p);
    Ok(numerator / denominator)
}

/// `(γ/4πi)∮_{|ζ|=1} g(ζ)dζ` by the trapezoidal rule on the unit circle.
///
/// This is the contour form as written, without the atom of `Ñ`. For γ > 1 it
/// comes out as `-η_M(ψ)`: the orientation flips in the `cos ω` substitution.
pub fn contour_integral(psi: f64, scales: &EffectiveScales) -> Result<f64> {
    require_interference(scales)?;
    require_psi(psi)?;
    let contour = Contour::new(psi, scales);
    let n = CONTOUR_NODES;
    let sum: Complex64 = (0..n)
        .map(|k| {
            let z = Complex64::from_polar(1.0, 2.0 * PI * (k as f64 + 0.5) / n as f64);
            // dζ = iζ dω
            contour.integrand(z) * z
        })
        .sum();
    // (γ/4πi)·i·(2π/n)·Σ g(ζ)ζ
    Ok(scales.gamma().value() / (4.0 * PI) * (2.0 * PI / n as f64) * sum.re)
}

/// Residue-sum `η_M`, or the quadrature oracle where the residue formulas break down.
pub fn eta_m_closed_form(psi: f64, scales: &EffectiveScales) -> Result<f64> {
    require_psi(psi)?;
    if !scales.has_interference() {
        return Ok(1.0 / (1.0 + psi));
    }
    if poles_and_residues(psi, scales)?.degenerate {
        return eta_m_quadrature_oracle(psi, scales);
    }
    eta_m_residue_sum(psi, scales)
}

/// Side-by-side evaluation of the contour-integral forms against the oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidueFormReport {
    pub psi: f64,
    pub ptilde: f64,
    pub gamma: f64,
    pub residue_sum: f64,
    pub long_closed_form: f64,
    pub oracle: f64,
    pub residue_sum_error: f64,
    pub long_closed_form_error: f64,
    pub residue_sum_valid: bool,
    pub long_closed_form_valid: bool,
    pub degenerate: bool,
    /// The value to use: the residue sum when valid, the oracle otherwise.
    pub value: f64,
}

/// Evaluates the residue sum and the long closed form and judges both
/// against [`eta_m_quadrature_oracle`] at [`VALIDATION_TOLERANCE`].
pub fn eta_m_residue_form(psi: f64, scales: &EffectiveScales) -> Result<ResidueFormReport> {
    let oracle = eta_m_quadrature_oracle(psi, scales)?;
    let residue_sum = eta_m_residue_sum(psi, scales)?;
    let long = long_closed_form(psi, scales)?;
    let degenerate = poles_and_residues(psi, scales)?.degenerate;
    let residue_sum_error = (residue_sum - oracle).abs();
    let long_closed_form_error = (long - oracle).abs();
    let residue_sum_valid = !degenerate && residue_sum_error <= VALIDATION_TOLERANCE;
    Ok(ResidueFormReport {
        psi,
        ptilde: scales.ptilde(),
        gamma: scales.gamma().value(),
        residue_sum,
        long_closed_form: long,
        oracle,
        residue_sum_error,
        long_closed_form_error,
        residue_sum_valid,
        long_closed_form_valid: long_closed_form_error <= VALIDATION_TOLERANCE,
        degenerate,
        value: if residue_sum_valid { residue_sum } else { oracle },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::eta_m;
    use crate::transforms::AspectRatio;

    fn scales(p: f64, g: f64) -> EffectiveScales {
        EffectiveScales::new(1.0, p, AspectRatio::new(1.0).unwrap(), AspectRatio::new(g).unwrap()).unwrap()
    }

    #[test]
    fn oracle_examples() {
        for (p, g) in [(1.0, 1.0), (3.0, 0.4), (0.5, 6.0)] {
            assert!((eta_m_quadrature_oracle(0.0, &scales(p, g)).unwrap() - 1.0).abs() < 1e-9);
        }
        let tiny = eta_m_quadrature_oracle(2.0, &scales(1.0, 1e-8)).unwrap();
        assert!((tiny - 1.0 / 3.0).abs() < 1e-6);
        let s = scales(1.0, 1.0);
        let inv = eta_m(Complex64::new(1.0, 0.0), &s).unwrap().re;
        assert!((eta_m_quadrature_oracle(1.0, &s).unwrap() - inv).abs() < 1e-8);
        assert!(eta_m_quadrature_oracle(1.0, &scales(0.0, 1.0)).is_err());
        assert!(eta_m_quadrature_oracle(-1.0, &s).is_err());
    }

    #[test]
    fn pole_locations() {
        let t = poles_and_residues(0.5, &scales(2.0, 4.0)).unwrap();
        assert_eq!(t.entries[2].pole.re, -2.0);
        assert_eq!(t.entries[3].pole.re, -0.5);
        assert_eq!(t.entries[0].pole, t.entries[1].pole);
        for (psi, p, g) in [(0.5, 2.0, 4.0), (3.0, 0.1, 0.3), (0.0, 7.0, 1.5)] {
            let t = poles_and_residues(psi, &scales(p, g)).unwrap();
            let z = |i: usize| t.entries[i].pole;
            assert!((z(2) * z(3) - 1.0).norm() < 1e-12);
            assert!((z(4) * z(5) - 1.0).norm() < 1e-12);
            assert!(t.entries[4].inside_unit_disk && !t.entries[5].inside_unit_disk);
        }
    }

    #[test]
    fn tabulated_residue_labels_are_swapped_within_pairs() {
        for (psi, p, g) in [(0.5, 2.0, 4.0), (3.0, 0.1, 0.3), (1.0, 1.0, 2.0)] {
            let t = poles_and_residues(psi, &scales(p, g)).unwrap();
            assert!(!t.degenerate);
            assert!(t.entries[0].matches_nominal, "{:?}", t.entries[0]);
            assert!(t.entries[1].matches_nominal, "{:?}", t.entries[1]);
            for e in &t.entries[2..] {
                assert!(e.matches_partner, "{e:?}");
                assert!(!e.matches_nominal, "{e:?}");
            }
        }
    }

    #[test]
    fn unit_gamma_is_degenerate() {
        let t = poles_and_residues(1.0, &scales(1.0, 1.0)).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.entries[2].tabulated_residue.re, 0.0);
        let r = eta_m_residue_form(1.0, &scales(1.0, 1.0)).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.value, r.oracle);
        // The residue sum itself still agrees with the oracle.
        assert!(r.residue_sum_error < 1e-6, "{r:?}");
    }

    #[test]
    fn residue_sum_matches_oracle() {
        for (p, g) in [(1.0, 2.0), (5.0, 10.0), (0.3, 0.25), (20.0, 0.8)] {
            for psi in [0.0, 0.3, 2.0, 40.0] {
                let r = eta_m_residue_form(psi, &scales(p, g)).unwrap();
                assert!(r.residue_sum_valid, "{r:?}");
            }
        }
    }

    #[test]
    fn long_closed_form_is_scaled_by_ptilde() {
        for (p, g, psi) in [(1.0, 2.0, 0.0), (3.0, 0.5, 0.0), (3.0, 0.5, 1.5), (0.2, 4.0, 7.0)] {
            let s = scales(p, g);
            let long = long_closed_form(psi, &s).unwrap();
            let oracle = eta_m_quadrature_oracle(psi, &s).unwrap();
            assert!((long - p * oracle).abs() < 1e-8 * (1.0 + p), "p̃={p} γ={g} ψ={psi}");
        }
        let r = eta_m_residue_form(0.0, &scales(3.0, 0.5)).unwrap();
        assert!(!r.long_closed_form_valid);
        let r = eta_m_residue_form(0.0, &scales(1.0, 2.0)).unwrap();
        assert!(r.long_closed_form_valid);
    }

    #[test]
    fn raw_contour_integral() {
        for (p, g, psi) in [(1.0, 2.0, 0.5), (4.0, 9.0, 3.0)] {
            let s = scales(p, g);
            let c = contour_integral(psi, &s).unwrap();
            let eta = eta_m_quadrature_oracle(psi, &s).unwrap();
            assert!((c + eta).abs() < 1e-9, "{c} vs {eta}");
        }
        // γ < 1: the bulk only, the atom (1-γ)/(1+ψ) is missing.
        let s = scales(2.0, 0.5);
        let c = contour_integral(1.0, &s).unwrap();
        let eta = eta_m_quadrature_oracle(1.0, &s).unwrap();
        assert!((-c - (eta - 0.5 / 2.0)).abs() < 1e-9, "{c} vs {eta}");
    }

    #[test]
    fn closed_form_shipping_rules() {
        assert_eq!(eta_m_closed_form(1.0, &scales(0.0, 2.0)).unwrap(), 0.5);
        let s = scales(2.0, 3.0);
        assert!((eta_m_closed_form(0.0, &s).unwrap() - 1.0).abs() < 1e-12);
    }
}
