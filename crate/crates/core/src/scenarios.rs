//! Variance profiles and power bookkeeping for the channel model.
//!
//! A variance profile `Σ` holds the amplitude path-loss coefficients `σ_ij`
//! (rows = receive dimensions, columns = transmit dimensions). The closed forms
//! only see the profiles through `q = ‖Σ‖²/(MK)` and `p = ‖Σ_I‖²/(NK)`, which
//! enter as `q̃ = Kμq` and `p̃ = Kνp`.

use serde::{Deserialize, Serialize};

use crate::closedform::EffectiveScales;
use crate::error::{domain, Error, Result};
use crate::format_float;
use crate::transforms::AspectRatio;

/// Matrix of nonnegative amplitude coefficients, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl VarianceProfile {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(domain(format!(
                "a profile needs at least one row and column, got {rows}×{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::Validation(format!(
                "{rows}×{cols} profile needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(domain("profile entries must be finite and nonnegative"));
        }
        Ok(Self { rows, cols, entries })
    }

    /// Builds a profile from `f(i, j)` with 0-based indices.
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let entries = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Self::new(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// `‖Σ‖²`, the sum of squared entries.
    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum()
    }

    /// CSV with a `rows,cols` header line, the dimensions, then one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("rows,cols\n{},{}\n", self.rows, self.cols);
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format_float(*v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let bad = |msg: &str| Error::Validation(format!("profile CSV: {msg}"));
        if lines.next() != Some("rows,cols") {
            return Err(bad("missing `rows,cols` header"));
        }
        let dims = lines.next().ok_or_else(|| bad("missing dimensions line"))?;
        let (r, c) = dims
            .split_once(',')
            .ok_or_else(|| bad("dimensions line must be `rows,cols`"))?;
        let rows: usize = r.trim().parse().map_err(|_| bad("bad row count"))?;
        let cols: usize = c.trim().parse().map_err(|_| bad("bad column count"))?;
        let mut entries = Vec::with_capacity(rows * cols);
        for (i, line) in lines.enumerate() {
            let values: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let values = values.map_err(|_| bad(&format!("unparsable number in data row {}", i + 1)))?;
            if values.len() != cols {
                return Err(Error::Shape {
                    expected: (rows, cols),
                    actual: (i + 1, values.len()),
                });
            }
            entries.extend(values);
        }
        if entries.len() != rows * cols {
            return Err(Error::Shape {
                expected: (rows, cols),
                actual: (entries.len() / cols.max(1), cols),
            });
        }
        Self::new(rows, cols, entries)
    }
}

/// All-ones `K×M` profile (identically distributed fading).
pub fn ones_profile(k: usize, m: usize) -> Result<VarianceProfile> {
    VarianceProfile::new(k, m, vec![1.0; k * m])
}

/// `K` identical rows equal to `sigma`: each transmitter's path loss is seen
/// equally by every receive antenna.
pub fn kron_profile(sigma: &[f64], k: usize) -> Result<VarianceProfile> {
    if sigma.is_empty() {
        return Err(domain("kron_profile needs a nonempty coefficient vector"));
    }
    VarianceProfile::from_fn(k, sigma.len(), |_, j| sigma[j])
}

/// `σ_ij = 1/√(1+|i-j|)`.
pub fn diminishing_profile(k: usize, m: usize) -> Result<VarianceProfile> {
    VarianceProfile::from_fn(k, m, |i, j| 1.0 / (1.0 + i.abs_diff(j) as f64).sqrt())
}

/// Receive, transmit and interferer dimensions with their aspect ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelDims {
    pub k: usize,
    pub m: usize,
    pub n: usize,
}

impl ChannelDims {
    /// `n = 0` describes a channel without interferers.
    pub fn new(k: usize, m: usize, n: usize) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(domain(format!("K and M must be positive, got K={k}, M={m}")));
        }
        Ok(Self { k, m, n })
    }

    /// `β = M/K`.
    pub fn beta(&self) -> AspectRatio {
        AspectRatio::new(self.m as f64 / self.k as f64).expect("positive by construction")
    }

    /// `γ = N/K`, absent without interferers.
    pub fn gamma(&self) -> Option<AspectRatio> {
        (self.n > 0).then(|| AspectRatio::new(self.n as f64 / self.k as f64).expect("positive"))
    }
}

/// Per-dimension powers and profile norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    /// Transmit SNR per transmit dimension (linear).
    pub mu: f64,
    /// Interference-to-noise ratio per interfering dimension (linear).
    pub nu: f64,
    /// `‖Σ‖²/(MK)`
    pub q: f64,
    /// `‖Σ_I‖²/(NK)`, zero without interferers.
    pub p: f64,
}

impl PowerProfile {
    pub fn new(mu: f64, nu: f64, q: f64, p: f64) -> Result<Self> {
        for (name, v) in [("μ", mu), ("ν", nu), ("q", q), ("p", p)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(domain(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        Ok(Self { mu, nu, q, p })
    }

    /// Binds powers to profiles, computing `q` and `p`.
    pub fn bind(
        mu: f64,
        nu: f64,
        sigma: &VarianceProfile,
        sigma_i: Option<&VarianceProfile>,
        dims: &ChannelDims,
    ) -> Result<Self> {
        let q = profile_norm_q(sigma, dims)?;
        let p = match sigma_i {
            Some(s) => profile_norm_p(s, dims)?,
            None if dims.n == 0 => 0.0,
            None => return Err(domain("N > 0 but no interference profile given")),
        };
        Self::new(mu, nu, q, p)
    }

    /// Powers that realise the effective scales `q̃`, `p̃` at these dimensions:
    /// `μ = q̃/(Kq)`, `ν = p̃/(Kp)`.
    pub fn for_effective_scales(
        qtilde: f64,
        ptilde: f64,
        sigma: &VarianceProfile,
        sigma_i: Option<&VarianceProfile>,
        dims: &ChannelDims,
    ) -> Result<Self> {
        let base = Self::bind(0.0, 0.0, sigma, sigma_i, dims)?;
        let k = dims.k as f64;
        let mu = if qtilde == 0.0 { 0.0 } else { qtilde / (k * base.q) };
        let nu = if ptilde == 0.0 { 0.0 } else { ptilde / (k * base.p) };
        Self::new(mu, nu, base.q, base.p)
    }

    /// `q̃ = Kμq`.
    pub fn qtilde(&self, dims: &ChannelDims) -> f64 {
        dims.k as f64 * self.mu * self.q
    }

    /// `p̃ = Kνp`.
    pub fn ptilde(&self, dims: &ChannelDims) -> f64 {
        dims.k as f64 * self.nu * self.p
    }

    /// Effective scales for the closed forms; `None` when `q̃ = 0` (no signal).
    pub fn scales(&self, dims: &ChannelDims) -> Result<Option<EffectiveScales>> {
        let qt = self.qtilde(dims);
        if qt == 0.0 {
            return Ok(None);
        }
        let pt = self.ptilde(dims);
        let s = match dims.gamma() {
            Some(gamma) if pt > 0.0 => EffectiveScales::new(qt, pt, dims.beta(), gamma)?,
            _ => EffectiveScales::interference_free(qt, dims.beta())?,
        };
        Ok(Some(s))
    }
}

fn normalized_norm(profile: &VarianceProfile, expected: (usize, usize)) -> Result<f64> {
    if profile.shape() != expected {
        return Err(Error::Shape {
            expected,
            actual: profile.shape(),
        });
    }
    Ok(profile.squared_norm() / (expected.0 * expected.1) as f64)
}

/// `q = ‖Σ‖²/(MK)`; `Σ` must be `K×M`.
pub fn profile_norm_q(sigma: &VarianceProfile, dims: &ChannelDims) -> Result<f64> {
    normalized_norm(sigma, (dims.k, dims.m))
}

/// `p = ‖Σ_I‖²/(NK)`; `Σ_I` must be `K×N`.
pub fn profile_norm_p(sigma_i: &VarianceProfile, dims: &ChannelDims) -> Result<f64> {
    normalized_norm(sigma_i, (dims.k, dims.n))
}

pub const DEFAULT_ALPHA_POINTS: usize = 64;

/// Quantiles of the pooled entries, `points` of them from minimum to maximum.
pub fn default_alpha_grid(profile: &VarianceProfile, points: usize) -> Vec<f64> {
    let mut pooled = profile.entries().to_vec();
    pooled.sort_by(f64::total_cmp);
    let last = pooled.len() - 1;
    let mut grid: Vec<f64> = (0..points.max(1))
        .map(|k| {
            let pos = if points <= 1 { last } else { k * last / (points - 1) };
            pooled[pos]
        })
        .collect();
    grid.dedup();
    grid
}

/// `max_α (max_i F_i(α) - min_i F_i(α))` with `F_i(α)` the fraction of row `i`
/// at or below `α`. Zero means every row has the same empirical distribution
/// at this resolution. Uses [`default_alpha_grid`] when `alpha_grid` is `None`.
pub fn row_regularity_deviation(profile: &VarianceProfile, alpha_grid: Option<&[f64]>) -> f64 {
    let default;
    let grid = match alpha_grid {
        Some(g) => g,
        None => {
            default = default_alpha_grid(profile, DEFAULT_ALPHA_POINTS);
            &default
        }
    };
    let cols = profile.cols() as f64;
    let mut sorted_rows: Vec<Vec<f64>> = (0..profile.rows()).map(|i| profile.row(i).to_vec()).collect();
    for r in &mut sorted_rows {
        r.sort_by(f64::total_cmp);
    }
    grid.iter()
        .map(|&alpha| {
            let (lo, hi) = sorted_rows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    let f = r.partition_point(|v| *v <= alpha) as f64 / cols;
                    (lo.min(f), hi.max(f))
                });
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Linear cellular array parameters. Defaults follow the reference uplink setup:
/// 1 km cells, 10 single-antenna users per cell, 50 cells, 200 mW users,
/// -169 dBm/Hz noise over 5 MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellularConfig {
    /// Cell radius `R`; cells are `2R` wide.
    pub cell_radius_m: f64,
    /// Reference distance `d₀`.
    pub ref_distance_m: f64,
    /// Path loss at the reference distance, as an attenuation in dB.
    pub ref_pathloss_db: f64,
    /// Path-loss exponent `n`.
    pub pathloss_exponent: f64,
    pub uts_per_cell: usize,
    /// Number of cooperating base stations (one per cell).
    pub cluster_size: usize,
    pub total_cells: usize,
    pub ut_tx_power_w: f64,
    pub noise_density_dbm_hz: f64,
    pub bandwidth_hz: f64,
}

impl Default for CellularConfig {
    fn default() -> Self {
        Self {
            cell_radius_m: 1000.0,
            ref_distance_m: 1.0,
            ref_pathloss_db: 34.5,
            pathloss_exponent: 3.5,
            uts_per_cell: 10,
            cluster_size: 1,
            total_cells: 50,
            ut_tx_power_w: 0.2,
            noise_density_dbm_hz: -169.0,
            bandwidth_hz: 5e6,
        }
    }
}

impl CellularConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cell_radius_m", self.cell_radius_m),
            ("ref_distance_m", self.ref_distance_m),
            ("pathloss_exponent", self.pathloss_exponent),
            ("ut_tx_power_w", self.ut_tx_power_w),
            ("bandwidth_hz", self.bandwidth_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.ref_pathloss_db.is_finite() || !self.noise_density_dbm_hz.is_finite() {
            return Err(domain("dB quantities must be finite"));
        }
        if self.uts_per_cell == 0 || self.cluster_size == 0 || self.total_cells == 0 {
            return Err(domain("uts_per_cell, cluster_size and total_cells must be positive"));
        }
        if self.cluster_size > self.total_cells {
            return Err(domain(format!(
                "cluster of {} cells does not fit in a {}-cell system",
                self.cluster_size, self.total_cells
            )));
        }
        Ok(())
    }

    /// Amplitude coefficient `√(10^(-P₀/10))·(1 + d/d₀)^(-n/2)` at distance `d`.
    pub fn amplitude(&self, distance_m: f64) -> f64 {
        let gain0 = 10f64.powf(-self.ref_pathloss_db / 10.0);
        gain0.sqrt() * (1.0 + distance_m / self.ref_distance_m).powf(-self.pathloss_exponent / 2.0)
    }

    /// Base station position of cell `c` (cell centre).
    pub fn bs_position(&self, cell: usize) -> f64 {
        (2 * cell + 1) as f64 * self.cell_radius_m
    }

    /// Position of user `j` of cell `c`: users evenly spaced across the cell,
    /// symmetric about its centre.
    pub fn ut_position(&self, cell: usize, j: usize) -> f64 {
        let width = 2.0 * self.cell_radius_m;
        width * cell as f64 + width / self.uts_per_cell as f64 * (j as f64 + 0.5)
    }

    /// First cell of the cluster, centred in the array.
    pub fn cluster_start(&self) -> usize {
        (self.total_cells - self.cluster_size) / 2
    }
}

/// Profiles and dimensions of a cellular layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CellularScenario {
    /// Cluster base stations × cluster users.
    pub sigma: VarianceProfile,
    /// Cluster base stations × all other users; `None` when the cluster spans the system.
    pub sigma_i: Option<VarianceProfile>,
    pub dims: ChannelDims,
}

/// Profiles for a linear array of single-antenna base stations whose cluster
/// cooperates, with every user outside the cluster acting as an interferer.
pub fn cellular_linear_profile(cfg: &CellularConfig) -> Result<CellularScenario> {
    cfg.validate()?;
    let start = cfg.cluster_start();
    let cluster = start..start + cfg.cluster_size;
    let u = cfg.uts_per_cell;
    let bs: Vec<f64> = cluster.clone().map(|c| cfg.bs_position(c)).collect();
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for c in 0..cfg.total_cells {
        for j in 0..u {
            let x = cfg.ut_position(c, j);
            if cluster.contains(&c) {
                inside.push(x);
            } else {
                outside.push(x);
            }
        }
    }
    let build =
        |uts: &[f64]| VarianceProfile::from_fn(bs.len(), uts.len(), |i, j| cfg.amplitude((bs[i] - uts[j]).abs()));
    let sigma = build(&inside)?;
    let sigma_i = if outside.is_empty() {
        None
    } else {
        Some(build(&outside)?)
    };
    let dims = ChannelDims::new(cfg.cluster_size, inside.len(), outside.len())?;
    Ok(CellularScenario { sigma, sigma_i, dims })
}

/// `μ = ν = P_T/(N₀B)` (linear).
pub fn link_budget(cfg: &CellularConfig) -> (f64, f64) {
    let noise_w = 10f64.powf((cfg.noise_density_dbm_hz - 30.0) / 10.0) * cfg.bandwidth_hz;
    let mu = cfg.ut_tx_power_w / noise_w;
    (mu, mu)
}
