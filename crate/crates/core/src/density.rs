use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format_float;

/// Default normalization tolerance for densities sampled on a grid.
pub const SAMPLED_TOLERANCE: f64 = 1e-3;

/// A point mass of a spectral distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Eigenvalue distribution: a continuous part sampled on a grid plus point masses.
///
/// The bulk is read as the piecewise-linear interpolant of the samples and is
/// zero outside the grid. Atoms are kept apart from the bulk and every
/// integral treats them exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralDensity {
    grid: Vec<f64>,
    bulk: Vec<f64>,
    atoms: Vec<Atom>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl SpectralDensity {
    pub fn new(grid: Vec<f64>, bulk: Vec<f64>, atoms: Vec<Atom>) -> Result<Self> {
        if grid.len() != bulk.len() {
            return Err(Error::Validation(format!(
                "grid has {} points but bulk has {}",
                grid.len(),
                bulk.len()
            )));
        }
        if grid.len() == 1 {
            return Err(Error::Validation("a bulk needs at least two grid points".into()));
        }
        if grid.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Validation("grid must be finite and nonnegative".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("grid must be strictly increasing".into()));
        }
        if bulk.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation("bulk values must be finite and nonnegative".into()));
        }
        for atom in &atoms {
            if !(atom.location.is_finite() && atom.location >= 0.0) {
                return Err(Error::Validation(format!("bad atom location {}", atom.location)));
            }
            if !(0.0..=1.0).contains(&atom.mass) {
                return Err(Error::Validation(format!("atom mass {} outside [0, 1]", atom.mass)));
            }
        }
        let cumulative = cumulative_trapezoid(&grid, &bulk);
        Ok(Self {
            grid,
            bulk,
            atoms,
            cumulative,
        })
    }

    /// All mass at one point.
    pub fn point_mass(location: f64) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), vec![Atom { location, mass: 1.0 }])
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn bulk(&self) -> &[f64] {
        &self.bulk
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Trapezoidal integral of the bulk.
    pub fn bulk_mass(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.bulk_mass() + self.atom_mass()
    }

    pub fn normalization_deviation(&self) -> f64 {
        (self.total_mass() - 1.0).abs()
    }

    pub fn validate_normalized(&self, tol: f64) -> Result<()> {
        let dev = self.normalization_deviation();
        if dev > tol {
            return Err(Error::Validation(format!(
                "total mass {} deviates from 1 by {dev:e} (tolerance {tol:e})",
                self.total_mass()
            )));
        }
        Ok(())
    }

    /// Interpolated bulk density at `x` (zero outside the grid).
    pub fn density_at(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((i, t)) => self.bulk[i] + t * (self.bulk[i + 1] - self.bulk[i]),
            None => 0.0,
        }
    }

    /// Cumulative distribution `P(λ ≤ x)`, bulk plus atoms.
    pub fn cdf(&self, x: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.location <= x).map(|a| a.mass).sum();
        atoms + self.bulk_cdf(x)
    }

    /// Integral of the bulk interpolant over `(-inf, x]`.
    pub fn bulk_cdf(&self, x: f64) -> f64 {
        let Some(&first) = self.grid.first() else {
            return 0.0;
        };
        if x <= first {
            return 0.0;
        }
        match self.locate(x) {
            Some((i, t)) => {
                let h = self.grid[i + 1] - self.grid[i];
                let (f0, f1) = (self.bulk[i], self.bulk[i + 1]);
                self.cumulative[i] + h * t * (f0 + 0.5 * t * (f1 - f0))
            }
            None => self.bulk_mass(),
        }
    }

    /// Trapezoidal integral of `g(x)·bulk(x)` plus the exact atom terms.
    pub fn expectation<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let bulk: f64 = self
            .grid
            .windows(2)
            .zip(self.bulk.windows(2))
            .map(|(x, f)| 0.5 * (x[1] - x[0]) * (g(x[0]) * f[0] + g(x[1]) * f[1]))
            .sum();
        bulk + self.atoms.iter().map(|a| a.mass * g(a.location)).sum::<f64>()
    }

    /// `kind,x,density`: one `bulk` row per grid node, then one `atom` row per
    /// point mass with the mass in the last column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,x,density\n");
        for (x, f) in self.grid.iter().zip(&self.bulk) {
            out.push_str(&format!("bulk,{},{}\n", format_float(*x), format_float(*f)));
        }
        for a in &self.atoms {
            out.push_str(&format!("atom,{},{}\n", format_float(a.location), format_float(a.mass)));
        }
        out
    }

    /// Cell index and fractional position of `x`, if `x` lies inside the grid.
    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let n = self.grid.len();
        if n < 2 || x < self.grid[0] || x > self.grid[n - 1] {
            return None;
        }
        let i = self.grid.partition_point(|g| *g <= x).clamp(1, n - 1) - 1;
        let t = (x - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        Some((i, t))
    }
}

fn cumulative_trapezoid(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    for i in 0..grid.len() {
        if i > 0 {
            acc += 0.5 * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// `n` points on `[lo, hi]`, spaced uniformly.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// `n` points on `[lo, hi]` clustered towards both ends (Chebyshev–Lobatto spacing).
pub fn cosine_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return linspace(lo, hi, n);
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut pts: Vec<f64> = (0..n)
        .map(|i| mid - half * (std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect();
    pts[0] = lo;
    pts[n - 1] = hi;
    // cos() rounding can produce ties next to the ends for very large n.
    pts.dedup_by(|b, a| *b <= *a);
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> SpectralDensity {
        // Density 2x on [0, 1].
        SpectralDensity::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 2.0], vec![]).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SpectralDensity::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![]).is_err());
        assert!(SpectralDensity::new(vec![0.0, 1.0], vec![1.0, -1.0], vec![]).is_err());
        assert!(SpectralDensity::new(vec![0.0, 1.0], vec![1.0], vec![]).is_err());
        let atom = Atom {
            location: 0.0,
            mass: 1.5,
        };
        assert!(SpectralDensity::new(vec![], vec![], vec![atom]).is_err());
    }

    #[test]
    fn masses_and_cdf() {
        let d = triangle();
        assert!((d.total_mass() - 1.0).abs() < 1e-15);
        assert!((d.cdf(0.5) - 0.25).abs() < 1e-15);
        assert!((d.cdf(0.25) - 0.0625).abs() < 1e-15);
        assert_eq!(d.cdf(-1.0), 0.0);
        assert_eq!(d.cdf(2.0), 1.0);
        assert!((d.density_at(0.75) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn atoms_are_exact() {
        let d = SpectralDensity::new(
            vec![1.0, 2.0],
            vec![0.5, 0.5],
            vec![Atom {
                location: 0.0,
                mass: 0.5,
            }],
        )
        .unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-15);
        assert_eq!(d.cdf(0.0), 0.5);
        assert!((d.expectation(|x| x) - 0.75).abs() < 1e-15);
        let p = SpectralDensity::point_mass(3.0).unwrap();
        assert_eq!(p.expectation(|x| x * x), 9.0);
        assert!(p.validate_normalized(1e-12).is_ok());
    }

    #[test]
    fn spacings() {
        let l = linspace(0.0, 4.0, 401);
        assert_eq!(l.len(), 401);
        assert_eq!(l[400], 4.0);
        assert!((l[100] - 1.0).abs() < 1e-15);
        let c = cosine_space(1.0, 3.0, 50);
        assert_eq!(c.len(), 50);
        assert_eq!((c[0], c[49]), (1.0, 3.0));
        assert!(c.windows(2).all(|w| w[1] > w[0]));
        assert!(c[1] - c[0] < c[25] - c[24]);
    }

    #[test]
    fn csv_rows() {
        let d = SpectralDensity::new(
            vec![0.0, 1.0],
            vec![0.5, 0.5],
            vec![Atom {
                location: 0.0,
                mass: 0.5,
            }],
        )
        .unwrap();
        let csv = d.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "kind,x,density");
        assert!(lines[3].starts_with("atom,"));
        let mass: f64 = lines[3].rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(mass, 0.5);
    }
}
