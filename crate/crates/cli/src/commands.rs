use std::fs;
use std::path::{Path, PathBuf};

use freecap_core::capacity::{capacity_from_density, capacity_sweep, sweep_to_csv};
use freecap_core::closedform::{aepdf_k, aepdf_m, aepdf_n, EffectiveScales, Grid, TargetMatrix};
use freecap_core::montecarlo::{atom_location, Binning, ChannelModel, Histogram, MCReport, Samples};
use freecap_core::scenarios::{
    diminishing_profile, ones_profile, CellularConfig, ChannelDims, PowerProfile, VarianceProfile,
};
use freecap_core::transforms::{mp_atom, mp_density, mp_eta, mp_s_transform, AspectRatio};
use freecap_core::{format_float, SpectralDensity};
use serde::Serialize;

use crate::args::{AepdfArgs, CellularArgs, EmbeddedProfiles, MpArgs, ProfileKind, ReplayArgs, VerifyArgs};
use crate::error::{usage, CliError, Result};
use crate::manifest::{write_file, RunManifest};

/// Whether the command succeeded; `false` only for a failed verification.
pub type Passed = bool;

pub fn mp(args: &MpArgs) -> Result<Passed> {
    let beta = AspectRatio::new(args.beta)?;
    let mut csv = String::from("kind,x,density,eta,s_transform\n");
    for x in args.grid.nodes() {
        csv.push_str(&format!(
            "bulk,{},{},{},{}\n",
            format_float(x),
            format_float(mp_density(x, beta)),
            format_float(mp_eta(x, beta)?),
            format_float(mp_s_transform(x, beta)?)
        ));
    }
    let atom = mp_atom(beta);
    if atom > 0.0 {
        csv.push_str(&format!("atom,{},{},,\n", format_float(0.0), format_float(atom)));
    }
    write_file(&args.out, &csv)?;
    let manifest = RunManifest::new("mp", args, None, vec![args.out.clone()]).write_beside(&args.out)?;
    println!(
        "β = {}: {} grid points, atom at 0 of mass {atom}",
        args.beta, args.grid.points
    );
    println!("wrote {} and {}", args.out.display(), manifest.display());
    Ok(true)
}

pub fn aepdf(args: &AepdfArgs) -> Result<Passed> {
    let scales = EffectiveScales::new(
        args.qtilde,
        args.ptilde,
        AspectRatio::new(args.beta)?,
        AspectRatio::new(args.gamma)?,
    )?;
    let grid = args.grid.to_grid();
    let targets = args.target.targets();
    let mut outputs = Vec::new();
    for target in &targets {
        let (density, flagged) = density_for(*target, &scales, &grid)?;
        let path = if targets.len() > 1 {
            suffixed(&args.out, &target.to_string())
        } else {
            args.out.clone()
        };
        write_file(&path, &density.to_csv())?;
        println!(
            "{target}: normalization deviation {:.3e}, {} grid points, {} atoms, {flagged} interpolated points -> {}",
            density.normalization_deviation(),
            density.grid().len(),
            density.atoms().len(),
            path.display()
        );
        outputs.push(path);
    }
    let manifest = RunManifest::new("aepdf", args, None, outputs).write_beside(&args.out)?;
    println!("manifest {}", manifest.display());
    Ok(true)
}

fn density_for(target: TargetMatrix, scales: &EffectiveScales, grid: &Grid) -> Result<(SpectralDensity, usize)> {
    Ok(match target {
        TargetMatrix::N => (aepdf_n(scales, grid)?, 0),
        TargetMatrix::M => {
            let e = aepdf_m(scales, grid)?;
            (e.density, e.flagged.len())
        }
        TargetMatrix::K => {
            let e = aepdf_k(scales, grid)?;
            (e.density, e.flagged.len())
        }
    })
}

/// `dir/run.csv` + `K` → `dir/run_K.csv`.
fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random();
        println!("no --seed given, drew {s}");
        s
    })
}

fn read_profile(path: &Path) -> Result<VarianceProfile> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    VarianceProfile::from_csv(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Serialize)]
struct L1ByTarget {
    n: f64,
    /// Absent without interference, where `M` is the identity.
    m: Option<f64>,
    k: f64,
}

#[derive(Debug, Serialize)]
struct Tolerances {
    l1: f64,
    capacity_rel_err: f64,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    pass: bool,
    scales: EffectiveScales,
    dims: ChannelDims,
    powers: PowerProfile,
    tolerances: Tolerances,
    l1_distance: L1ByTarget,
    report: MCReport,
}

fn histogram_l1(samples: &[f64], target: TargetMatrix, closed: &SpectralDensity) -> Result<f64> {
    let h = Histogram::build(samples, Binning::FreedmanDiaconis, Some(atom_location(target)))?;
    Ok(h.l1_distance(closed))
}

fn l1_by_target(samples: &Samples, scales: &EffectiveScales, grid: &Grid, k: &SpectralDensity) -> Result<L1ByTarget> {
    let n = aepdf_n(scales, grid)?;
    let m = if scales.has_interference() {
        let m = aepdf_m(scales, grid)?.density;
        Some(histogram_l1(&samples.m, TargetMatrix::M, &m)?)
    } else {
        None
    };
    Ok(L1ByTarget {
        n: histogram_l1(&samples.n, TargetMatrix::N, &n)?,
        m,
        k: histogram_l1(&samples.k, TargetMatrix::K, k)?,
    })
}

pub fn verify(args: &VerifyArgs) -> Result<Passed> {
    if args.iterations == 0 {
        return Err(usage("--iterations must be at least 1"));
    }
    if args.grid_points < 2 {
        return Err(usage("--grid-points must be at least 2"));
    }
    let mut args = args.clone();
    let (sigma, sigma_i) = match (&args.embedded, &args.sigma) {
        (Some(e), _) => (e.sigma.clone(), e.sigma_i.clone()),
        (None, Some(path)) => {
            let sigma = read_profile(path)?;
            let sigma_i = args.sigma_i.as_deref().map(read_profile).transpose()?;
            args.embedded = Some(EmbeddedProfiles {
                sigma: sigma.clone(),
                sigma_i: sigma_i.clone(),
            });
            (sigma, sigma_i)
        }
        (None, None) => {
            let make = match args.profile {
                ProfileKind::Diminishing => diminishing_profile,
                ProfileKind::Ones => ones_profile,
            };
            let d = args.dims;
            let sigma_i = if d.n > 0 { Some(make(d.k, d.n)?) } else { None };
            (make(d.k, d.m)?, sigma_i)
        }
    };
    let model = match args.mu {
        Some(mu) => ChannelModel::new(mu, args.nu.unwrap_or(0.0), sigma, sigma_i)?,
        None => ChannelModel::with_effective_scales(
            args.qtilde.unwrap_or(5.0),
            args.ptilde.unwrap_or(10.0),
            sigma,
            sigma_i,
        )?,
    };
    let scales = model
        .scales()?
        .ok_or_else(|| usage("the signal power is zero, so there is no spectrum to verify"))?;
    let seed = resolve_seed(args.seed);
    args.seed = Some(seed);

    let samples = model.simulate(args.iterations, seed)?;
    let grid = Grid::Auto {
        points: args.grid_points,
    };
    let k = aepdf_k(&scales, &grid)?.density;
    let capacity = capacity_from_density(&k)?;
    let report =
        MCReport::from_samples(&samples, Binning::FreedmanDiaconis)?.compare(&samples, &k, capacity.per_rx_dim_nats);
    let l1 = l1_by_target(&samples, &scales, &grid, &k)?;
    let rel_err = report.capacity_rel_err.unwrap_or(f64::INFINITY);
    let pass = [Some(l1.n), l1.m, Some(l1.k)]
        .iter()
        .flatten()
        .all(|d| *d <= args.l1_tol)
        && rel_err <= args.capacity_tol;

    let summary = VerifyReport {
        pass,
        scales,
        dims: *model.dims(),
        powers: *model.powers(),
        tolerances: Tolerances {
            l1: args.l1_tol,
            capacity_rel_err: args.capacity_tol,
        },
        l1_distance: l1,
        report,
    };
    let json = serde_json::to_string_pretty(&summary).expect("report serializes to JSON");
    write_file(&args.out, &json)?;
    let manifest = RunManifest::new("verify", &args, Some(seed), vec![args.out.clone()]).write_beside(&args.out)?;

    let d = summary.dims;
    println!(
        "K={} M={} N={}, q̃={:.6} p̃={:.6}, {} iterations, seed {seed}",
        d.k,
        d.m,
        d.n,
        scales.qtilde(),
        scales.ptilde(),
        args.iterations
    );
    let m = summary.l1_distance.m.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "L1 N={:.4} M={m} K={:.4} (tol {}); capacity closed {:.6} vs MC {:.6} nats, rel err {rel_err:.4} (tol {})",
        summary.l1_distance.n,
        summary.l1_distance.k,
        args.l1_tol,
        capacity.per_rx_dim_nats,
        summary.report.capacity_nats_per_rx_dim,
        args.capacity_tol
    );
    println!(
        "{}; wrote {} and {}",
        if pass { "PASS" } else { "FAIL" },
        args.out.display(),
        manifest.display()
    );
    Ok(pass)
}

fn load_config(path: &Path) -> Result<CellularConfig> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn resolve_config(args: &CellularArgs) -> Result<CellularConfig> {
    if let Some(cfg) = &args.resolved {
        return Ok(cfg.clone());
    }
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => CellularConfig::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field {
                cfg.$field = v;
            })*
        };
    }
    apply!(
        cell_radius_m,
        ref_distance_m,
        ref_pathloss_db,
        pathloss_exponent,
        uts_per_cell,
        total_cells,
        ut_tx_power_w,
        noise_density_dbm_hz,
        bandwidth_hz
    );
    Ok(cfg)
}

pub fn cellular(args: &CellularArgs) -> Result<Passed> {
    if args.iterations == 0 {
        return Err(usage("--iterations must be at least 1"));
    }
    let mut args = args.clone();
    let cfg = resolve_config(&args)?;
    let sizes = args.clusters.sizes();
    for &size in &sizes {
        if size > cfg.total_cells {
            return Err(usage(format!(
                "cluster size {size} exceeds the {} cells of the layout",
                cfg.total_cells
            )));
        }
        CellularConfig {
            cluster_size: size,
            ..cfg.clone()
        }
        .validate()?;
    }
    args.resolved = Some(cfg.clone());
    let seed = resolve_seed(args.seed);
    args.seed = Some(seed);

    let points = capacity_sweep(&cfg, &sizes, args.iterations, seed)?;
    write_file(&args.out, &sweep_to_csv(&points))?;
    let manifest = RunManifest::new("cellular", &args, Some(seed), vec![args.out.clone()]).write_beside(&args.out)?;

    println!("cluster  closed form [nats]  [bits]   Monte Carlo [nats]  rel err");
    for p in &points {
        println!(
            "{:>7}  {:>18.6}  {:>8.4}  {:>18.6}  {:>7.4}",
            p.cluster_size,
            p.closed_form.per_rx_dim_nats,
            p.closed_form.per_rx_dim_bits,
            p.mc.capacity_nats_per_rx_dim,
            p.mc.capacity_rel_err.unwrap_or(f64::NAN)
        );
        if p.interference_free {
            println!(
                "         cluster {} covers all {} cells: interference-free branch (p̃ = 0)",
                p.cluster_size, cfg.total_cells
            );
        }
    }
    println!("seed {seed}; wrote {} and {}", args.out.display(), manifest.display());
    Ok(true)
}

fn from_manifest<T: serde::de::DeserializeOwned>(manifest: &RunManifest, path: &Path) -> Result<T> {
    serde_json::from_value(manifest.args.clone()).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: format!("arguments of {:?}: {e}", manifest.command),
    })
}

pub fn replay(args: &ReplayArgs) -> Result<Passed> {
    let manifest = RunManifest::read(&args.manifest)?;
    if manifest.version != env!("CARGO_PKG_VERSION") {
        println!(
            "manifest written by version {}, replaying with {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    let path = args.manifest.as_path();
    match manifest.command.as_str() {
        "mp" => {
            let mut a: MpArgs = from_manifest(&manifest, path)?;
            a.out = args.out.clone().unwrap_or(a.out);
            mp(&a)
        }
        "aepdf" => {
            let mut a: AepdfArgs = from_manifest(&manifest, path)?;
            a.out = args.out.clone().unwrap_or(a.out);
            aepdf(&a)
        }
        "verify" => {
            let mut a: VerifyArgs = from_manifest(&manifest, path)?;
            a.out = args.out.clone().unwrap_or(a.out);
            verify(&a)
        }
        "cellular" => {
            let mut a: CellularArgs = from_manifest(&manifest, path)?;
            a.out = args.out.clone().unwrap_or(a.out);
            cellular(&a)
        }
        other => Err(CliError::Parse {
            path: path.to_path_buf(),
            message: format!("unknown command {other:?}"),
        }),
    }
}
