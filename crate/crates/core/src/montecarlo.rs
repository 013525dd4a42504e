//! Finite-dimension simulation of the channel, used as an oracle for the closed forms.
//!
//! Each iteration draws `H = Σ ⊙ G` and `H_I = Σ_I ⊙ G_I` and records the spectra of
//! `N = μHHᴴ`, `M = (I + νH_IH_Iᴴ)⁻¹` and `K = NM`, plus the capacity per receive
//! dimension in two algebraically equal forms. `M` is built from the eigenpairs of
//! `νH_IH_Iᴴ`, and the spectrum of `K` is taken from the Hermitian `M^{1/2}NM^{1/2}`.
//!
//! Iteration `i` draws from a ChaCha8 stream `i` of the master seed, so runs are
//! reproducible regardless of how rayon schedules them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::closedform::{EffectiveScales, TargetMatrix};
use crate::density::{Atom, SpectralDensity};
use crate::error::{domain, Error, Result};
use crate::format_float;
use crate::scenarios::{ChannelDims, PowerProfile, VarianceProfile};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Relative asymmetry accepted by [`hermitian_eigenvalues`].
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;
/// Default residual tolerance `‖Av - λv‖ ≤ tol·‖A‖`.
pub const EIGEN_TOLERANCE: f64 = 1e-10;

/// i.i.d. `CN(0, 1)` entries: real and imaginary parts `N(0, ½)`.
pub fn sample_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    })
}

/// `Σ ⊙ G` with `G` from [`sample_gaussian`].
pub fn sample_channel<R: Rng + ?Sized>(sigma: &VarianceProfile, rng: &mut R) -> ComplexMatrix {
    let mut g = sample_gaussian(sigma.rows(), sigma.cols(), rng);
    for i in 0..sigma.rows() {
        for j in 0..sigma.cols() {
            g[(i, j)] *= sigma.get(i, j);
        }
    }
    g
}

fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Rejects inputs whose largest entry of `A - Aᴴ` exceeds
/// [`HERMITIAN_TOLERANCE`] times the largest entry of `A`, and checks every
/// eigenpair residual against `tol·‖A‖_F`.
pub fn hermitian_eigen(a: &ComplexMatrix, tol: f64) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !a.is_square() {
        return Err(Error::Shape {
            expected: (a.nrows(), a.nrows()),
            actual: a.shape(),
        });
    }
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    if a.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let scale = max_abs(a);
    let asym = max_abs(&(a - a.adjoint()));
    if asym > HERMITIAN_TOLERANCE * scale {
        return Err(Error::Eigen(format!(
            "matrix is not Hermitian (asymmetry {asym:e} vs scale {scale:e})"
        )));
    }
    let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h.clone());
    let norm = h.norm();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    for (c, &lambda) in values.iter().enumerate() {
        let v = vectors.column(c);
        let residual = (&h * v - v * Complex64::new(lambda, 0.0)).norm();
        if residual > tol * norm.max(f64::MIN_POSITIVE) {
            return Err(Error::Eigen(format!(
                "eigenpair {c} residual {residual:e} exceeds {tol:e}·‖A‖"
            )));
        }
    }
    Ok((values, vectors))
}

/// Ascending eigenvalues of a Hermitian matrix; see [`hermitian_eigen`].
pub fn hermitian_eigenvalues(a: &ComplexMatrix, tol: f64) -> Result<Vec<f64>> {
    hermitian_eigen(a, tol).map(|(v, _)| v)
}

fn gram(h: &ComplexMatrix, scale: f64) -> ComplexMatrix {
    (h * h.adjoint()) * Complex64::new(scale, 0.0)
}

/// `U·diag(f(λ))·Uᴴ`.
fn spectral_map(values: &[f64], vectors: &ComplexMatrix, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let d = DVector::from_iterator(values.len(), values.iter().map(|&l| Complex64::new(f(l), 0.0)));
    let scaled = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |r, c| vectors[(r, c)] * d[c]);
    scaled * vectors.adjoint()
}

/// Profiles, dimensions and powers of a simulated channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    dims: ChannelDims,
    powers: PowerProfile,
    sigma: VarianceProfile,
    sigma_i: Option<VarianceProfile>,
}

impl ChannelModel {
    /// Dimensions are read off the profiles: `Σ` is `K×M`, `Σ_I` is `K×N`.
    pub fn new(mu: f64, nu: f64, sigma: VarianceProfile, sigma_i: Option<VarianceProfile>) -> Result<Self> {
        let dims = Self::dims_of(&sigma, sigma_i.as_ref())?;
        let powers = PowerProfile::bind(mu, nu, &sigma, sigma_i.as_ref(), &dims)?;
        Ok(Self {
            dims,
            powers,
            sigma,
            sigma_i,
        })
    }

    /// Powers chosen so that the model has effective scales `q̃`, `p̃`.
    pub fn with_effective_scales(
        qtilde: f64,
        ptilde: f64,
        sigma: VarianceProfile,
        sigma_i: Option<VarianceProfile>,
    ) -> Result<Self> {
        let dims = Self::dims_of(&sigma, sigma_i.as_ref())?;
        let powers = PowerProfile::for_effective_scales(qtilde, ptilde, &sigma, sigma_i.as_ref(), &dims)?;
        Ok(Self {
            dims,
            powers,
            sigma,
            sigma_i,
        })
    }

    fn dims_of(sigma: &VarianceProfile, sigma_i: Option<&VarianceProfile>) -> Result<ChannelDims> {
        let n = match sigma_i {
            Some(s) if s.rows() != sigma.rows() => {
                return Err(Error::Shape {
                    expected: (sigma.rows(), s.cols()),
                    actual: s.shape(),
                })
            }
            Some(s) => s.cols(),
            None => 0,
        };
        ChannelDims::new(sigma.rows(), sigma.cols(), n)
    }

    pub fn dims(&self) -> &ChannelDims {
        &self.dims
    }

    pub fn powers(&self) -> &PowerProfile {
        &self.powers
    }

    pub fn sigma(&self) -> &VarianceProfile {
        &self.sigma
    }

    pub fn sigma_i(&self) -> Option<&VarianceProfile> {
        self.sigma_i.as_ref()
    }

    /// Effective scales of the closed forms; `None` without signal power.
    pub fn scales(&self) -> Result<Option<EffectiveScales>> {
        self.powers.scales(&self.dims)
    }

    fn realize(&self, rng: &mut ChaCha8Rng) -> Result<Realization> {
        let k = self.dims.k;
        let h = sample_channel(&self.sigma, rng);
        let n_mat = gram(&h, self.powers.mu);
        let ntilde = match &self.sigma_i {
            Some(s) => gram(&sample_channel(s, rng), self.powers.nu),
            None => DMatrix::zeros(k, k),
        };
        let n_eig = hermitian_eigenvalues(&n_mat, EIGEN_TOLERANCE)?;
        let (nt_eig, nt_vec) = hermitian_eigen(&ntilde, EIGEN_TOLERANCE)?;
        // Ñ is PSD; clip rounding below zero before mapping.
        let m_eig: Vec<f64> = nt_eig.iter().map(|&l| 1.0 / (1.0 + l.max(0.0))).collect();
        let m_half = spectral_map(&nt_eig, &nt_vec, |l| 1.0 / (1.0 + l.max(0.0)).sqrt());
        let k_mat = &m_half * &n_mat * &m_half;
        let k_eig = hermitian_eigenvalues(&k_mat, EIGEN_TOLERANCE)?;
        let kf = k as f64;
        let capacity = k_eig.iter().map(|&l| l.max(0.0).ln_1p()).sum::<f64>() / kf;
        let total = hermitian_eigenvalues(&(&n_mat + &ntilde), EIGEN_TOLERANCE)?;
        let logdet = |v: &[f64]| v.iter().map(|&l| l.max(0.0).ln_1p()).sum::<f64>();
        let capacity_alt = (logdet(&total) - logdet(&nt_eig)) / kf;
        let mut m_sorted = m_eig;
        m_sorted.sort_by(f64::total_cmp);
        Ok(Realization {
            n: n_eig,
            m: m_sorted,
            k: k_eig,
            capacity,
            capacity_alt,
        })
    }

    /// Runs `iterations` independent realizations from `seed`.
    ///
    /// Realization `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream
    /// `i`: first the entries of `G`, then those of `G_I`, row by row.
    pub fn simulate(&self, iterations: usize, seed: u64) -> Result<Samples> {
        if iterations == 0 {
            return Err(domain("at least one iteration is required"));
        }
        let runs: Vec<Realization> = (0..iterations)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                self.realize(&mut rng)
            })
            .collect::<Result<_>>()?;
        let mut out = Samples {
            n: Vec::new(),
            m: Vec::new(),
            k: Vec::new(),
            capacities: Vec::with_capacity(iterations),
            capacities_alt: Vec::with_capacity(iterations),
            seed,
        };
        for r in runs {
            out.n.extend(r.n);
            out.m.extend(r.m);
            out.k.extend(r.k);
            out.capacities.push(r.capacity);
            out.capacities_alt.push(r.capacity_alt);
        }
        Ok(out)
    }
}

struct Realization {
    n: Vec<f64>,
    m: Vec<f64>,
    k: Vec<f64>,
    capacity: f64,
    capacity_alt: f64,
}

/// Pooled eigenvalues and per-iteration capacities of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub n: Vec<f64>,
    pub m: Vec<f64>,
    pub k: Vec<f64>,
    /// `(1/K)·Σ log(1+λ_i(K))` per iteration, in nats.
    pub capacities: Vec<f64>,
    /// `(1/K)·[log det(I+N+Ñ) - log det(I+Ñ)]` per iteration.
    pub capacities_alt: Vec<f64>,
    pub seed: u64,
}

impl Samples {
    pub fn eigenvalues(&self, target: TargetMatrix) -> &[f64] {
        match target {
            TargetMatrix::N => &self.n,
            TargetMatrix::M => &self.m,
            TargetMatrix::K => &self.k,
        }
    }

    pub fn iterations(&self) -> usize {
        self.capacities.len()
    }

    pub fn mean_capacity(&self) -> f64 {
        mean(&self.capacities)
    }

    pub fn mean_capacity_alt(&self) -> f64 {
        mean(&self.capacities_alt)
    }

    /// Largest per-iteration `|C - C_alt| / (1 + |C|)`.
    pub fn max_identity_discrepancy(&self) -> f64 {
        self.capacities
            .iter()
            .zip(&self.capacities_alt)
            .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
            .fold(0.0, f64::max)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Empirical `η(g) = mean of 1/(1+gλ)`.
pub fn empirical_eta(eigenvalues: &[f64], g: f64) -> f64 {
    mean(&eigenvalues.iter().map(|&l| 1.0 / (1.0 + g * l)).collect::<Vec<_>>())
}

/// Where a target matrix can carry an atom.
pub fn atom_location(target: TargetMatrix) -> f64 {
    match target {
        TargetMatrix::M => 1.0,
        TargetMatrix::N | TargetMatrix::K => 0.0,
    }
}

/// Histogram bin selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binning {
    /// Width `2·IQR·n^{-1/3}` over the non-atomic samples.
    FreedmanDiaconis,
    Count(usize),
}

const MAX_BINS: usize = 10_000;
const ATOM_RATIO: f64 = 5.0;

/// Normalized histogram with separately reported atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Density per bin; `Σ density·width + Σ atom masses = 1`.
    pub density: Vec<f64>,
    pub atoms: Vec<Atom>,
    pub samples: usize,
}

impl Histogram {
    /// Bins `samples`. If the bin holding `atom_at` is more than five times as
    /// full as its neighbour, the samples numerically equal to `atom_at` are
    /// reported as an atom and removed from the bins.
    pub fn build(samples: &[f64], binning: Binning, atom_at: Option<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(domain("cannot build a histogram from no samples"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(domain("samples must be finite"));
        }
        let total = samples.len();
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let snap = 1e-8 * (1.0 + lo.abs().max(hi.abs()));
        let mut bulk: Vec<f64> = samples.to_vec();
        let mut atoms = Vec::new();
        if let Some(loc) = atom_at {
            let near = samples.iter().filter(|x| (**x - loc).abs() <= snap).count();
            if near > 0 {
                let first = Self::uniform(samples, binning, lo, hi)?;
                let bin = first.bin_of(loc);
                let count = |b: usize| first.density[b] * (first.edges[b + 1] - first.edges[b]);
                let neighbour = match bin {
                    Some(0) if first.density.len() > 1 => Some(1),
                    Some(b) if b > 0 => Some(b - 1),
                    _ => None,
                };
                let spike = match (bin, neighbour) {
                    (Some(b), Some(nb)) => count(b) > ATOM_RATIO * count(nb),
                    (Some(_), None) => true,
                    _ => false,
                };
                if spike {
                    bulk.retain(|x| (x - loc).abs() > snap);
                    atoms.push(Atom {
                        location: loc,
                        mass: near as f64 / total as f64,
                    });
                }
            }
        }
        if bulk.is_empty() {
            return Ok(Self {
                edges: Vec::new(),
                density: Vec::new(),
                atoms,
                samples: total,
            });
        }
        let (blo, bhi) = bulk
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let mut h = Self::uniform(&bulk, binning, blo, bhi)?;
        let bulk_fraction = bulk.len() as f64 / total as f64;
        for d in &mut h.density {
            *d *= bulk_fraction;
        }
        h.atoms = atoms;
        h.samples = total;
        Ok(h)
    }

    fn uniform(samples: &[f64], binning: Binning, lo: f64, hi: f64) -> Result<Self> {
        let bins = match binning {
            Binning::Count(0) => return Err(domain("bin count must be positive")),
            Binning::Count(b) => b,
            Binning::FreedmanDiaconis => freedman_diaconis_bins(samples, lo, hi),
        };
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &x in samples {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let edges: Vec<f64> = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + width * i as f64 })
            .collect();
        let n = samples.len() as f64;
        let density = counts.iter().map(|&c| c as f64 / (n * width)).collect();
        Ok(Self {
            edges,
            density,
            atoms: Vec::new(),
            samples: samples.len(),
        })
    }

    fn bin_of(&self, x: f64) -> Option<usize> {
        let n = self.density.len();
        if n == 0 || x < self.edges[0] || x > self.edges[n] {
            return None;
        }
        Some((self.edges.partition_point(|e| *e <= x).max(1) - 1).min(n - 1))
    }

    pub fn bins(&self) -> usize {
        self.density.len()
    }

    pub fn total_mass(&self) -> f64 {
        let bulk: f64 = self
            .density
            .iter()
            .enumerate()
            .map(|(i, d)| d * (self.edges[i + 1] - self.edges[i]))
            .sum();
        bulk + self.atoms.iter().map(|a| a.mass).sum::<f64>()
    }

    /// `bin_left,bin_right,density`; atoms follow as zero-width rows whose
    /// third column is the atom's mass.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,density\n");
        for (i, d) in self.density.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                format_float(self.edges[i]),
                format_float(self.edges[i + 1]),
                format_float(*d)
            ));
        }
        for a in &self.atoms {
            let x = format_float(a.location);
            out.push_str(&format!("{x},{x},{}\n", format_float(a.mass)));
        }
        out
    }

    /// L1 distance to a closed-form distribution: bin-probability differences of
    /// the bulks, plus the closed-form bulk mass outside the binned range, plus
    /// atom-mass differences.
    pub fn l1_distance(&self, closed: &SpectralDensity) -> f64 {
        let mut l1 = 0.0;
        let mut covered = 0.0;
        for (i, d) in self.density.iter().enumerate() {
            let (a, b) = (self.edges[i], self.edges[i + 1]);
            let p_cf = closed.bulk_cdf(b) - closed.bulk_cdf(a);
            covered += p_cf;
            l1 += (d * (b - a) - p_cf).abs();
        }
        l1 += (closed.bulk_mass() - covered).max(0.0);
        let mut locations: Vec<f64> = self.atoms.iter().chain(closed.atoms()).map(|a| a.location).collect();
        locations.sort_by(f64::total_cmp);
        locations.dedup();
        for loc in locations {
            let mass = |atoms: &[Atom]| atoms.iter().filter(|a| a.location == loc).map(|a| a.mass).sum::<f64>();
            l1 += (mass(&self.atoms) - mass(closed.atoms())).abs();
        }
        l1.min(2.0)
    }
}

fn freedman_diaconis_bins(samples: &[f64], lo: f64, hi: f64) -> usize {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let quantile = |p: f64| {
        let pos = p * (s.len() - 1) as f64;
        let i = pos.floor() as usize;
        let t = pos - i as f64;
        if i + 1 < s.len() {
            s[i] + t * (s[i + 1] - s[i])
        } else {
            s[i]
        }
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let width = 2.0 * iqr / (s.len() as f64).cbrt();
    if width.is_nan() || width <= 0.0 || hi <= lo {
        return 1;
    }
    (((hi - lo) / width).ceil() as usize).clamp(1, MAX_BINS)
}

/// Kolmogorov–Smirnov distance between the empirical distribution of `samples`
/// and `closed`, evaluated at the samples from both sides. Samples within
/// 1e-8 (relative) of a closed-form atom are taken to sit on it.
pub fn ks_distance(samples: &[f64], closed: &SpectralDensity) -> f64 {
    let scale = 1.0 + samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut s: Vec<f64> = samples
        .iter()
        .map(|&x| {
            closed
                .atoms()
                .iter()
                .find(|a| (x - a.location).abs() <= 1e-8 * scale)
                .map_or(x, |a| a.location)
        })
        .collect();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        let x = s[i];
        let mut j = i;
        while j < s.len() && s[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let upto = j as f64 / n;
        let at = closed
            .atoms()
            .iter()
            .filter(|a| a.location == x)
            .map(|a| a.mass)
            .sum::<f64>();
        let f = closed.cdf(x);
        worst = worst.max((upto - f).abs()).max((below - (f - at)).abs());
        i = j;
    }
    worst.min(1.0)
}

/// Simulation results, optionally compared with the closed forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCReport {
    /// Histogram of the eigenvalues of `K`.
    pub histogram: Histogram,
    pub capacity_nats_per_rx_dim: f64,
    /// Same average via `log det(I+N+Ñ) - log det(I+Ñ)`.
    pub capacity_alt_form: f64,
    /// Largest per-iteration relative gap between the two capacity forms.
    pub max_identity_discrepancy: f64,
    pub closed_form_capacity: Option<f64>,
    pub l1_distance: Option<f64>,
    pub ks_distance: Option<f64>,
    pub capacity_rel_err: Option<f64>,
    pub iterations: usize,
    pub rng_seed: u64,
}

impl MCReport {
    pub fn from_samples(samples: &Samples, binning: Binning) -> Result<Self> {
        let histogram = Histogram::build(&samples.k, binning, Some(0.0))?;
        Ok(Self {
            histogram,
            capacity_nats_per_rx_dim: samples.mean_capacity(),
            capacity_alt_form: samples.mean_capacity_alt(),
            max_identity_discrepancy: samples.max_identity_discrepancy(),
            closed_form_capacity: None,
            l1_distance: None,
            ks_distance: None,
            capacity_rel_err: None,
            iterations: samples.iterations(),
            rng_seed: samples.seed,
        })
    }

    /// Fills in the distances to a closed-form density of `K` and its capacity.
    pub fn compare(mut self, samples: &Samples, closed: &SpectralDensity, closed_capacity: f64) -> Self {
        self.l1_distance = Some(self.histogram.l1_distance(closed));
        self.ks_distance = Some(ks_distance(&samples.k, closed));
        self.closed_form_capacity = Some(closed_capacity);
        let mc = self.capacity_nats_per_rx_dim;
        self.capacity_rel_err = Some(if mc == 0.0 {
            closed_capacity.abs()
        } else {
            (closed_capacity - mc).abs() / mc.abs()
        });
        self
    }
}

/// Histogram of the pooled eigenvalues of `target` over `iterations` realizations.
pub fn empirical_density(
    model: &ChannelModel,
    target: TargetMatrix,
    iterations: usize,
    binning: Binning,
    seed: u64,
) -> Result<Histogram> {
    let samples = model.simulate(iterations, seed)?;
    Histogram::build(samples.eigenvalues(target), binning, Some(atom_location(target)))
}

/// Average capacity per receive dimension over `iterations` realizations.
pub fn empirical_capacity(model: &ChannelModel, iterations: usize, seed: u64) -> Result<MCReport> {
    let samples = model.simulate(iterations, seed)?;
    MCReport::from_samples(&samples, Binning::FreedmanDiaconis)
}
