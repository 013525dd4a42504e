use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use freecap_core::closedform::{Grid, TargetMatrix, DEFAULT_GRID_POINTS};
use freecap_core::density::linspace;
use freecap_core::scenarios::{CellularConfig, VarianceProfile};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "freecap",
    version,
    about = "Eigenvalue densities and ergodic capacity of MIMO channels with cochannel interference"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Marčenko–Pastur density, η-transform and S-transform on a grid.
    Mp(MpArgs),
    /// Closed-form eigenvalue density of N, M or K.
    Aepdf(AepdfArgs),
    /// Compare the closed forms against a Monte Carlo simulation.
    Verify(VerifyArgs),
    /// Capacity of the linear cellular uplink against the cluster size.
    Cellular(CellularArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MpArgs {
    /// Aspect ratio β > 0.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: f64,
    /// Uniform grid `lo:hi:points` on [0, ∞).
    #[arg(long)]
    pub grid: LinearGrid,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AepdfArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub gamma: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub qtilde: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub ptilde: f64,
    /// Matrix whose spectrum is computed; `all` writes one CSV per matrix.
    #[arg(long, value_enum, ignore_case = true, default_value = "K")]
    pub target: TargetArg,
    /// `auto`, `auto:points` or a uniform grid `lo:hi:points`.
    #[arg(long, default_value = "auto")]
    pub grid: DensityGrid,
    /// Output CSV. With `--target all` the matrix name is appended to the file stem.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum TargetArg {
    #[value(name = "N")]
    N,
    #[value(name = "M")]
    M,
    #[value(name = "K")]
    K,
    #[value(name = "all")]
    All,
}

impl TargetArg {
    pub fn targets(self) -> Vec<TargetMatrix> {
        match self {
            Self::N => vec![TargetMatrix::N],
            Self::M => vec![TargetMatrix::M],
            Self::K => vec![TargetMatrix::K],
            Self::All => vec![TargetMatrix::N, TargetMatrix::M, TargetMatrix::K],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    /// `σ_ij = 1/√(1+|i-j|)`.
    Diminishing,
    /// All entries one (i.i.d. fading).
    Ones,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Generated variance profiles for Σ and Σ_I.
    #[arg(long, value_enum, default_value = "diminishing")]
    pub profile: ProfileKind,
    /// Dimensions `K,M,N` of the generated profiles; `N = 0` means no interference.
    #[arg(long, default_value = "60,300,600")]
    pub dims: Dims,
    /// CSV file with Σ; replaces the generated profiles.
    #[arg(long, conflicts_with = "dims")]
    pub sigma: Option<PathBuf>,
    /// CSV file with Σ_I (requires `--sigma`).
    #[arg(long, requires = "sigma")]
    pub sigma_i: Option<PathBuf>,
    /// Effective signal scale q̃ (default 5 unless `--mu` is given).
    #[arg(long, conflicts_with_all = ["mu", "nu"], allow_hyphen_values = true)]
    pub qtilde: Option<f64>,
    /// Effective interference scale p̃ (default 10 unless `--mu` is given).
    #[arg(long, conflicts_with_all = ["mu", "nu"], allow_hyphen_values = true)]
    pub ptilde: Option<f64>,
    /// Signal SNR μ; powers then follow from the profile norms.
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Interference SNR ν (default 0).
    #[arg(long, requires = "mu", allow_hyphen_values = true)]
    pub nu: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    /// Master seed; drawn at random and recorded in the manifest if absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest accepted L1 distance between histogram and closed form.
    #[arg(long, default_value_t = 0.05)]
    pub l1_tol: f64,
    /// Largest accepted relative capacity error.
    #[arg(long, default_value_t = 0.05)]
    pub capacity_tol: f64,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
    /// Output JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Profiles read from `--sigma`/`--sigma-i`, kept so a manifest is self-contained.
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedded: Option<EmbeddedProfiles>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddedProfiles {
    pub sigma: VarianceProfile,
    pub sigma_i: Option<VarianceProfile>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CellularArgs {
    /// TOML file with cellular parameters; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "cell-radius", allow_hyphen_values = true)]
    pub cell_radius_m: Option<f64>,
    #[arg(long = "ref-distance", allow_hyphen_values = true)]
    pub ref_distance_m: Option<f64>,
    #[arg(long = "ref-pathloss-db", allow_hyphen_values = true)]
    pub ref_pathloss_db: Option<f64>,
    #[arg(long = "pathloss-exponent", allow_hyphen_values = true)]
    pub pathloss_exponent: Option<f64>,
    #[arg(long = "uts-per-cell")]
    pub uts_per_cell: Option<usize>,
    #[arg(long = "total-cells")]
    pub total_cells: Option<usize>,
    #[arg(long = "tx-power", allow_hyphen_values = true)]
    pub ut_tx_power_w: Option<f64>,
    #[arg(long = "noise-density", allow_hyphen_values = true)]
    pub noise_density_dbm_hz: Option<f64>,
    #[arg(long = "bandwidth", allow_hyphen_values = true)]
    pub bandwidth_hz: Option<f64>,
    /// Cluster sizes: a single size `c` or an inclusive range `first:last`.
    #[arg(long, visible_alias = "cluster", default_value = "1:10")]
    pub clusters: ClusterRange,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Parameters after merging the config file and the overrides.
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved: Option<CellularConfig>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
    /// Write the outputs here instead of the recorded path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `lo:hi:points`, uniformly spaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LinearGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl LinearGrid {
    pub fn nodes(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.points)
    }
}

impl FromStr for LinearGrid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, points] = parts.as_slice() else {
            return Err(format!("grid {s:?} is not of the form lo:hi:points"));
        };
        let lo: f64 = lo.trim().parse().map_err(|_| format!("bad grid start {lo:?}"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| format!("bad grid end {hi:?}"))?;
        let points: usize = points
            .trim()
            .parse()
            .map_err(|_| format!("bad grid point count {points:?}"))?;
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi <= lo {
            return Err(format!("grid needs 0 ≤ lo < hi, got {lo}:{hi}"));
        }
        if points < 2 {
            return Err(format!("grid needs at least 2 points, got {points}"));
        }
        Ok(Self { lo, hi, points })
    }
}

impl fmt::Display for LinearGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.points)
    }
}

impl TryFrom<String> for LinearGrid {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<LinearGrid> for String {
    fn from(g: LinearGrid) -> String {
        g.to_string()
    }
}

/// Density grid: automatic support detection or a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DensityGrid {
    Auto(usize),
    Linear(LinearGrid),
}

impl DensityGrid {
    pub fn to_grid(self) -> Grid {
        match self {
            Self::Auto(points) => Grid::Auto { points },
            Self::Linear(g) => Grid::Explicit(g.nodes()),
        }
    }
}

impl FromStr for DensityGrid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.strip_prefix("auto") {
            Some("") => Ok(Self::Auto(DEFAULT_GRID_POINTS)),
            Some(rest) => {
                let n = rest
                    .strip_prefix(':')
                    .and_then(|n| n.trim().parse::<usize>().ok())
                    .ok_or_else(|| format!("grid {s:?} is not of the form auto:points"))?;
                if n < 2 {
                    return Err(format!("grid needs at least 2 points, got {n}"));
                }
                Ok(Self::Auto(n))
            }
            None => s.parse().map(Self::Linear),
        }
    }
}

impl fmt::Display for DensityGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto(n) => write!(f, "auto:{n}"),
            Self::Linear(g) => g.fmt(f),
        }
    }
}

impl TryFrom<String> for DensityGrid {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<DensityGrid> for String {
    fn from(g: DensityGrid) -> String {
        g.to_string()
    }
}

/// `K,M,N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Dims {
    pub k: usize,
    pub m: usize,
    pub n: usize,
}

impl FromStr for Dims {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| format!("bad dimension {p:?}")))
            .collect::<Result<_, _>>()?;
        let [k, m, n] = parts.as_slice() else {
            return Err(format!("dims {s:?} is not of the form K,M,N"));
        };
        if *k == 0 || *m == 0 {
            return Err("K and M must be positive".into());
        }
        Ok(Self { k: *k, m: *m, n: *n })
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.k, self.m, self.n)
    }
}

impl TryFrom<String> for Dims {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Dims> for String {
    fn from(d: Dims) -> String {
        d.to_string()
    }
}

/// Inclusive range of cluster sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ClusterRange {
    pub first: usize,
    pub last: usize,
}

impl ClusterRange {
    pub fn sizes(&self) -> Vec<usize> {
        (self.first..=self.last).collect()
    }
}

impl FromStr for ClusterRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |p: &str| p.trim().parse::<usize>().map_err(|_| format!("bad cluster size {p:?}"));
        let (first, last) = match s.split_once(':') {
            Some((a, b)) => (parse(a)?, parse(b)?),
            None => {
                let c = parse(s)?;
                (c, c)
            }
        };
        if first == 0 || last < first {
            return Err(format!("cluster range {s:?} must satisfy 1 ≤ first ≤ last"));
        }
        Ok(Self { first, last })
    }
}

impl fmt::Display for ClusterRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.first, self.last)
    }
}

impl TryFrom<String> for ClusterRange {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<ClusterRange> for String {
    fn from(c: ClusterRange) -> String {
        c.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g: LinearGrid = "0:4:401".parse().unwrap();
        assert_eq!(g.nodes().len(), 401);
        assert_eq!(g.to_string().parse::<LinearGrid>().unwrap(), g);
        for bad in ["0:4", "4:0:10", "0:4:1", "a:4:10", "-1:4:10", "0:inf:10"] {
            assert!(bad.parse::<LinearGrid>().is_err(), "{bad}");
        }
        assert_eq!(
            "auto".parse::<DensityGrid>().unwrap(),
            DensityGrid::Auto(DEFAULT_GRID_POINTS)
        );
        assert_eq!("auto:50".parse::<DensityGrid>().unwrap(), DensityGrid::Auto(50));
        assert!("auto50".parse::<DensityGrid>().is_err());
    }

    #[test]
    fn clusters_and_dims() {
        assert_eq!("50".parse::<ClusterRange>().unwrap().sizes(), vec![50]);
        assert_eq!("1:3".parse::<ClusterRange>().unwrap().sizes(), vec![1, 2, 3]);
        assert!("3:1".parse::<ClusterRange>().is_err());
        assert!("0".parse::<ClusterRange>().is_err());
        assert_eq!("4,8,0".parse::<Dims>().unwrap(), Dims { k: 4, m: 8, n: 0 });
        assert!("4,8".parse::<Dims>().is_err());
    }
}
