//! Asymptotic eigenvalue densities and ergodic capacity of multiantenna
//! Gaussian fading channels with cochannel interference.
//!
//! The received signal model is `y = H x + H_I x_I + z` with `H = Σ ⊙ G` and
//! `H_I = Σ_I ⊙ G_I`. Capacity per receive dimension is
//! `(1/K) E log det(I + μ H Hᴴ (I + ν H_I H_Iᴴ)⁻¹)`, i.e. the average of
//! `log(1 + λ)` over the spectrum of `K = N·M` with `N = μ H Hᴴ` and
//! `M = (I + ν H_I H_Iᴴ)⁻¹`.
//!
//! Modules:
//!
//! - [`transforms`]: Marčenko–Pastur law, η/S/Stieltjes transforms, numerical η inversion.
//! - [`closedform`]: spectra of `N`, `M` and `K` from the free-probability closed forms,
//!   plus the contour-integral (residue) evaluation of η for `M` and its quadrature oracle.
//! - [`scenarios`]: variance profiles, profile norms, link budgets, cellular layouts.
//! - [`montecarlo`]: finite-dimension channel simulation used as an oracle.
//! - [`capacity`]: capacity from a spectral density, closed-form capacity, cluster sweeps.

pub mod capacity;
pub mod closedform;
pub mod density;
pub mod error;
pub mod montecarlo;
pub mod quadrature;
pub mod scenarios;
pub mod transforms;

pub use density::{Atom, SpectralDensity};
pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}
