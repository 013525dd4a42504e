//! Marčenko–Pastur law and the transform calculus the closed forms are built on.
//!
//! Conventions:
//!
//! - η-transform: `η(g) = ∫ 1/(1 + g·λ) dF(λ)`, so `η(0) = 1` and η decreases on `[0, ∞)`.
//! - S-transform (also written Σ-transform): `Σ(x) = -((x+1)/x)·η⁻¹(x+1)`.
//! - Stieltjes transform: `S(z) = ∫ dF(λ)/(λ - z) = -η(-1/z)/z`.
//!
//! The Marčenko–Pastur law here is the limiting spectrum of `(1/K)·G·Gᴴ` for a
//! `K × M` matrix `G` with i.i.d. unit-variance entries and `β = M/K`: bulk on
//! `[(1-√β)², (1+√β)²]`, mean `β`, and an atom `(1-β)⁺` at zero.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::SpectralDensity;
use crate::error::{domain, Error, Result};

/// Ratio of horizontal to vertical dimension of a channel matrix.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AspectRatio(f64);

impl AspectRatio {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(domain(format!("aspect ratio must be positive and finite, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for AspectRatio {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<AspectRatio> for f64 {
    fn from(r: AspectRatio) -> f64 {
        r.0
    }
}

/// Bulk support `[(1-√β)², (1+√β)²]`.
pub fn mp_support(beta: AspectRatio) -> (f64, f64) {
    let r = beta.0.sqrt();
    ((1.0 - r).powi(2), (1.0 + r).powi(2))
}

/// Continuous part of the Marčenko–Pastur density; the atom is [`mp_atom`].
pub fn mp_density(x: f64, beta: AspectRatio) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let (a, b) = mp_support(beta);
    let v = (x - a).max(0.0) * (b - x).max(0.0);
    v.sqrt() / (2.0 * PI * x)
}

/// Mass of the Marčenko–Pastur atom at zero, `(1-β)⁺`.
pub fn mp_atom(beta: AspectRatio) -> f64 {
    (1.0 - beta.0).max(0.0)
}

/// η-transform of the Marčenko–Pastur law for real `x ≥ 0`.
///
/// Uses `φ/(4x) = 4xβ / (√(1+xb) + √(1+xa))²`, which has no 0/0 at `x = 0`
/// and no cancellation for small `x`.
pub fn mp_eta(x: f64, beta: AspectRatio) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(domain(format!("η-transform argument must be ≥ 0, got {x}")));
    }
    if x.is_infinite() {
        return Ok(mp_atom(beta));
    }
    let (a, b) = mp_support(beta);
    let denom = (1.0 + x * b).sqrt() + (1.0 + x * a).sqrt();
    Ok(1.0 - 4.0 * x * beta.0 / (denom * denom))
}

/// Analytic continuation of [`mp_eta`] off the real axis.
///
/// For `Im s ≥ 0` the principal square roots are continuous, because `1 + s·a` and
/// `1 + s·b` stay in the closed upper half-plane; the lower half-plane follows by
/// conjugate symmetry.
pub fn mp_eta_complex(s: Complex64, beta: AspectRatio) -> Complex64 {
    if s.im < 0.0 {
        return mp_eta_complex(s.conj(), beta).conj();
    }
    let (a, b) = mp_support(beta);
    let denom = (1.0 + s * b).sqrt() + (1.0 + s * a).sqrt();
    1.0 - 4.0 * s * beta.0 / (denom * denom)
}

/// Inverse η-transform of the Marčenko–Pastur law, `(1-w) / (w·(β+w-1))`.
pub fn mp_eta_inv(w: Complex64, beta: AspectRatio) -> Complex64 {
    (1.0 - w) / (w * (beta.0 + w - 1.0))
}

/// S-transform of the Marčenko–Pastur law, `1/(β+z)`.
pub fn mp_s_transform(z: f64, beta: AspectRatio) -> Result<f64> {
    let d = beta.0 + z;
    if d == 0.0 {
        return Err(Error::Pole(format!("S-transform pole at z = -β = {z}")));
    }
    Ok(1.0 / d)
}

/// S-transform from an inverse η-transform: `Σ(x) = -((x+1)/x)·η⁻¹(x+1)`.
pub fn s_transform_from_eta_inv<F>(eta_inv: F, x: Complex64) -> Result<Complex64>
where
    F: Fn(Complex64) -> Complex64,
{
    if x == Complex64::new(0.0, 0.0) {
        return Err(Error::Pole("S-transform is undefined at 0".into()));
    }
    Ok(-((x + 1.0) / x) * eta_inv(x + 1.0))
}

/// η-transform of a (normalized) spectral density at `g ≥ 0`, atoms included exactly.
pub fn eta_from_density(d: &SpectralDensity, g: f64) -> Result<f64> {
    if g.is_nan() || g < 0.0 {
        return Err(domain(format!("η-transform argument must be ≥ 0, got {g}")));
    }
    d.validate_normalized(crate::density::SAMPLED_TOLERANCE)?;
    Ok(d.expectation(|x| 1.0 / (1.0 + g * x)))
}

/// Stieltjes transform from an η-transform: `S(z) = -η(-1/z)/z`.
pub fn stieltjes_from_eta<F>(eta: F, z: Complex64) -> Result<Complex64>
where
    F: Fn(Complex64) -> Complex64,
{
    if z == Complex64::new(0.0, 0.0) {
        return Err(domain("Stieltjes transform from η needs z ≠ 0"));
    }
    Ok(-eta(-1.0 / z) / z)
}

/// Density from Stieltjes values just above the real axis.
///
/// Takes `S(x + iε)` and `S(x + 2iε)` and applies one Richardson step,
/// `(1/π)·(2·Im S(x+iε) - Im S(x+2iε))`, cancelling the leading O(ε) term of
/// the smoothed density. Clamped at zero.
pub fn richardson_density(s_eps: Complex64, s_2eps: Complex64) -> f64 {
    ((2.0 * s_eps.im - s_2eps.im) / PI).max(0.0)
}

/// Density at `x` from a Stieltjes transform evaluated at `x + iε` and `x + 2iε`.
pub fn density_from_stieltjes<F>(stieltjes: F, x: f64, eps: f64) -> f64
where
    F: Fn(Complex64) -> Complex64,
{
    richardson_density(
        stieltjes(Complex64::new(x, eps)),
        stieltjes(Complex64::new(x, 2.0 * eps)),
    )
}

/// Options for [`invert_eta`].
#[derive(Debug, Clone, Copy)]
pub struct InversionOptions {
    /// Newton iterations allowed (damping halvings do not count).
    pub max_newton: usize,
    /// Bisection fallbacks allowed when a real bracket is supplied.
    pub max_bisections: usize,
    /// Acceptance: `|f(w) - target| ≤ tol·(1 + |target|)`.
    pub tol: f64,
    /// Real bracket containing the solution, for real targets.
    pub real_bracket: Option<(f64, f64)>,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            max_newton: 200,
            max_bisections: 20,
            tol: 1e-10,
            real_bracket: None,
        }
    }
}

impl InversionOptions {
    pub fn with_bracket(lo: f64, hi: f64) -> Self {
        Self {
            real_bracket: Some((lo, hi)),
            ..Self::default()
        }
    }
}

const MAX_HALVINGS: usize = 40;
const BISECTIONS_PER_FALLBACK: usize = 6;

/// Solves `eta_inv(w) = target` for `w` starting from `seed`.
///
/// Damped Newton with a central-difference derivative: a step is halved until
/// the residual decreases. With a real target and a real bracket, a stalled
/// Newton run (or a step leaving the bracket) falls back to a few bisection
/// steps and restarts from the bracket midpoint. Which solution is found is
/// decided by the seed; callers pick the physical branch by continuation.
pub fn invert_eta<F>(eta_inv: F, target: Complex64, seed: Complex64, opts: &InversionOptions) -> Result<Complex64>
where
    F: Fn(Complex64) -> Complex64,
{
    let scale = 1.0 + target.norm();
    let accept = opts.tol * scale;
    let residual = |w: Complex64| eta_inv(w) - target;

    let real_mode = target.im == 0.0 && seed.im == 0.0;
    let mut bracket = match (opts.real_bracket, real_mode) {
        (Some((lo, hi)), true) => RealBracket::new(&residual, lo, hi),
        _ => None,
    };

    let mut w = seed;
    let mut r = residual(w);
    let mut fallbacks = 0;
    let mut iterations = 0;

    loop {
        if r.norm() <= accept {
            // One polishing step when it helps.
            if let Some(step) = newton_step(&residual, w, r) {
                let wp = w - step;
                let rp = residual(wp);
                if rp.norm() < r.norm() {
                    return Ok(wp);
                }
            }
            return Ok(w);
        }
        if iterations >= opts.max_newton {
            return Err(Error::Convergence {
                last: w,
                residual: r.norm(),
                iterations,
            });
        }
        iterations += 1;

        let mut accepted = None;
        if r.norm().is_finite() {
            if let Some(step) = newton_step(&residual, w, r) {
                let mut lambda = 1.0;
                for _ in 0..MAX_HALVINGS {
                    let wn = w - step * lambda;
                    let inside = bracket.as_ref().is_none_or(|b| b.contains(wn.re));
                    if inside {
                        let rn = residual(wn);
                        if rn.norm().is_finite() && rn.norm() < r.norm() {
                            accepted = Some((wn, rn));
                            break;
                        }
                    }
                    lambda *= 0.5;
                }
            }
        }

        match accepted {
            Some((wn, rn)) => {
                w = wn;
                r = rn;
                if let Some(b) = bracket.as_mut() {
                    b.update(w.re, r.re);
                }
            }
            None => {
                let Some(b) = bracket.as_mut() else {
                    return Err(Error::Convergence {
                        last: w,
                        residual: r.norm(),
                        iterations,
                    });
                };
                if fallbacks >= opts.max_bisections {
                    return Err(Error::Convergence {
                        last: w,
                        residual: r.norm(),
                        iterations,
                    });
                }
                fallbacks += 1;
                for _ in 0..BISECTIONS_PER_FALLBACK {
                    let mid = b.midpoint();
                    b.update(mid, residual(Complex64::new(mid, 0.0)).re);
                }
                w = Complex64::new(b.midpoint(), 0.0);
                r = residual(w);
            }
        }
    }
}

fn newton_step<F>(residual: &F, w: Complex64, r: Complex64) -> Option<Complex64>
where
    F: Fn(Complex64) -> Complex64,
{
    let h = 1e-7 * w.norm().max(1e-3);
    let d = (residual(w + h) - residual(w - h)) / (2.0 * h);
    let step = r / d;
    (step.re.is_finite() && step.im.is_finite()).then_some(step)
}

struct RealBracket {
    lo: f64,
    hi: f64,
    sign_lo: f64,
}

impl RealBracket {
    fn new<F>(residual: &F, lo: f64, hi: f64) -> Option<Self>
    where
        F: Fn(Complex64) -> Complex64,
    {
        let flo = residual(Complex64::new(lo, 0.0)).re;
        let fhi = residual(Complex64::new(hi, 0.0)).re;
        if flo.is_finite() && fhi.is_finite() && flo.signum() != fhi.signum() {
            Some(Self {
                lo,
                hi,
                sign_lo: flo.signum(),
            })
        } else {
            None
        }
    }

    fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn update(&mut self, x: f64, fx: f64) {
        if !self.contains(x) || !fx.is_finite() {
            return;
        }
        if fx.signum() == self.sign_lo {
            self.lo = x;
        } else {
            self.hi = x;
        }
    }
}
