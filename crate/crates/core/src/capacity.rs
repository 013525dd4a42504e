//! Ergodic capacity per receive dimension, `C = ∫ log(1+x) dF_K(x)`, in nats.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::closedform::{aepdf_k, EffectiveScales, Grid};
use crate::density::SpectralDensity;
use crate::error::Result;
use crate::format_float;
use crate::montecarlo::{Binning, ChannelModel, MCReport};
use crate::quadrature::{integrate_with_breaks, Tolerance};
use crate::scenarios::{cellular_linear_profile, link_budget, CellularConfig, ChannelDims, PowerProfile};

/// Densities must integrate to one within this before a capacity is taken.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-2;
/// Absolute tolerance of the capacity quadrature.
pub const QUADRATURE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityResult {
    pub per_rx_dim_nats: f64,
    pub per_rx_dim_bits: f64,
    /// Scales the capacity was computed for, when it came from the closed forms.
    pub params_echo: Option<EffectiveScales>,
    pub quadrature_abs_err: f64,
}

impl CapacityResult {
    fn from_nats(nats: f64, params_echo: Option<EffectiveScales>, quadrature_abs_err: f64) -> Self {
        Self {
            per_rx_dim_nats: nats,
            per_rx_dim_bits: nats / LN_2,
            params_echo,
            quadrature_abs_err,
        }
    }
}

/// `∫ log(1+x)` against the bulk interpolant plus `Σ mass·log(1+location)` over atoms.
///
/// Every grid cell is its own quadrature panel, so the kinks of the
/// interpolant never sit inside a panel.
pub fn capacity_from_density(d: &SpectralDensity) -> Result<CapacityResult> {
    d.validate_normalized(NORMALIZATION_TOLERANCE)?;
    let (bulk, err) = if d.grid().len() >= 2 {
        let est = integrate_with_breaks(
            |x| x.ln_1p() * d.density_at(x),
            d.grid(),
            Tolerance::absolute(QUADRATURE_TOLERANCE),
        );
        (est.value, est.abs_err)
    } else {
        (0.0, 0.0)
    };
    let atoms: f64 = d.atoms().iter().map(|a| a.mass * a.location.ln_1p()).sum();
    Ok(CapacityResult::from_nats(bulk + atoms, None, err))
}

/// Closed-form capacity for effective scales, with the density it came from.
pub fn capacity_for_scales(scales: &EffectiveScales, grid: &Grid) -> Result<(CapacityResult, SpectralDensity)> {
    let extraction = aepdf_k(scales, grid)?;
    let mut result = capacity_from_density(&extraction.density)?;
    result.params_echo = Some(*scales);
    Ok((result, extraction.density))
}

/// Closed-form capacity for given dimensions and powers; zero without signal power.
pub fn capacity_closed_form(dims: &ChannelDims, powers: &PowerProfile) -> Result<CapacityResult> {
    match powers.scales(dims)? {
        None => Ok(CapacityResult::from_nats(0.0, None, 0.0)),
        Some(s) => capacity_for_scales(&s, &Grid::default()).map(|(c, _)| c),
    }
}

/// One cluster size of a cellular sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub cluster_size: usize,
    pub dims: ChannelDims,
    pub powers: PowerProfile,
    /// The cluster covers every cell, so there is no interference.
    pub interference_free: bool,
    pub closed_form: CapacityResult,
    pub mc: MCReport,
}

/// Closed-form and simulated capacity of the linear cellular layout for each
/// cluster size. Every point is simulated from the same master seed.
pub fn capacity_sweep(
    cfg: &CellularConfig,
    cluster_sizes: &[usize],
    iterations: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    cluster_sizes
        .iter()
        .map(|&size| {
            let cfg = CellularConfig {
                cluster_size: size,
                ..cfg.clone()
            };
            let scenario = cellular_linear_profile(&cfg)?;
            let (mu, nu) = link_budget(&cfg);
            let model = ChannelModel::new(mu, nu, scenario.sigma, scenario.sigma_i)?;
            let samples = model.simulate(iterations, seed)?;
            let report = MCReport::from_samples(&samples, Binning::FreedmanDiaconis)?;
            let (closed_form, report) = match model.scales()? {
                Some(s) => {
                    let (c, density) = capacity_for_scales(&s, &Grid::default())?;
                    (c, report.compare(&samples, &density, c.per_rx_dim_nats))
                }
                None => (CapacityResult::from_nats(0.0, None, 0.0), report),
            };
            Ok(SweepPoint {
                cluster_size: size,
                dims: *model.dims(),
                powers: *model.powers(),
                interference_free: model.dims().n == 0,
                closed_form,
                mc: report,
            })
        })
        .collect()
}

/// `cluster_size,capacity_nats,capacity_bits,mc_capacity,rel_err`.
pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("cluster_size,capacity_nats,capacity_bits,mc_capacity,rel_err\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.cluster_size,
            format_float(p.closed_form.per_rx_dim_nats),
            format_float(p.closed_form.per_rx_dim_bits),
            format_float(p.mc.capacity_nats_per_rx_dim),
            format_float(p.mc.capacity_rel_err.unwrap_or(f64::NAN)),
        ));
    }
    out
}
