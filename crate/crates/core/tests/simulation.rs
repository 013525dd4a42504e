use freecap_core::capacity::{capacity_closed_form, capacity_for_scales};
use freecap_core::closedform::{aepdf_k, aepdf_n, EffectiveScales, Grid, TargetMatrix};
use freecap_core::montecarlo::{atom_location, sample_channel, Binning, ChannelModel, Histogram, MCReport};
use freecap_core::scenarios::{
    cellular_linear_profile, ones_profile, row_regularity_deviation, CellularConfig, ChannelDims, PowerProfile,
    VarianceProfile,
};
use freecap_core::transforms::AspectRatio;
use freecap_core::Complex64;
use nalgebra::{DMatrix, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_profile(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> VarianceProfile {
    let entries = (0..rows * cols).map(|_| rng.random_range(0.5..1.5)).collect();
    VarianceProfile::new(rows, cols, entries).unwrap()
}

fn l1(samples: &[f64], target: TargetMatrix, closed: &freecap_core::SpectralDensity) -> f64 {
    Histogram::build(samples, Binning::FreedmanDiaconis, Some(atom_location(target)))
        .unwrap()
        .l1_distance(closed)
}

/// Eigenvalues of the non-Hermitian product `N·M`, with `M` from an explicit
/// inverse, agree with the Hermitian route used by the simulator.
#[test]
fn product_spectrum_matches_general_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..5 {
        let sigma = random_profile(6, 8, &mut rng);
        let sigma_i = random_profile(6, 10, &mut rng);
        let (mu, nu) = (2.0, 3.0);
        let model = ChannelModel::new(mu, nu, sigma.clone(), Some(sigma_i.clone())).unwrap();
        let seed = 100 + trial;
        let samples = model.simulate(1, seed).unwrap();

        let mut draw = ChaCha8Rng::seed_from_u64(seed);
        draw.set_stream(0);
        let h = sample_channel(&sigma, &mut draw);
        let hi = sample_channel(&sigma_i, &mut draw);
        let n = (&h * h.adjoint()) * Complex64::new(mu, 0.0);
        let inner = DMatrix::<Complex64>::identity(6, 6) + (&hi * hi.adjoint()) * Complex64::new(nu, 0.0);
        let m = inner.try_inverse().unwrap();
        let eig = Schur::new(&n * &m).eigenvalues().unwrap();
        let mut general: Vec<Complex64> = eig.iter().copied().collect();
        general.sort_by(|a, b| a.re.total_cmp(&b.re));

        let scale = samples.k.iter().cloned().fold(1.0, f64::max);
        for (g, k) in general.iter().zip(&samples.k) {
            assert!(g.im.abs() <= 1e-9 * scale, "trial {trial}: {g}");
            assert!((g.re - k).abs() <= 1e-9 * scale, "trial {trial}: {} vs {k}", g.re);
        }
        let mut m_eig: Vec<f64> = Schur::new(m).eigenvalues().unwrap().iter().map(|z| z.re).collect();
        m_eig.sort_by(f64::total_cmp);
        for (a, b) in m_eig.iter().zip(&samples.m) {
            assert!((a - b).abs() <= 1e-9, "trial {trial}: {a} vs {b}");
        }
    }
}

#[test]
fn seeded_reports_are_identical() {
    let model = ChannelModel::with_effective_scales(
        2.0,
        1.0,
        ones_profile(10, 20).unwrap(),
        Some(ones_profile(10, 15).unwrap()),
    )
    .unwrap();
    let scales = model.scales().unwrap().unwrap();
    let (c, k) = capacity_for_scales(&scales, &Grid::Auto { points: 400 }).unwrap();
    let run = |seed| {
        let s = model.simulate(30, seed).unwrap();
        MCReport::from_samples(&s, Binning::FreedmanDiaconis)
            .unwrap()
            .compare(&s, &k, c.per_rx_dim_nats)
    };
    let (a, b) = (run(5), run(5));
    assert_eq!(a, b);
    assert_eq!(a.histogram.to_csv(), b.histogram.to_csv());
    assert_ne!(a, run(6));
}

#[test]
fn full_cluster_has_no_interferers() {
    let cfg = CellularConfig {
        cluster_size: 50,
        ..CellularConfig::default()
    };
    let scenario = cellular_linear_profile(&cfg).unwrap();
    assert!(scenario.sigma_i.is_none());
    assert_eq!(scenario.dims.n, 0);
    let powers = PowerProfile::bind(1e-3, 1e-3, &scenario.sigma, None, &scenario.dims).unwrap();
    let s = powers.scales(&scenario.dims).unwrap().unwrap();
    assert!(!s.has_interference());
}

#[test]
fn interference_free_capacity_matches_mp() {
    let k = 128;
    let model = ChannelModel::new(4.0 / k as f64, 0.0, ones_profile(k, k).unwrap(), None).unwrap();
    let scales = model.scales().unwrap().unwrap();
    assert!((scales.qtilde() - 4.0).abs() < 1e-12);
    let (closed, _) = capacity_for_scales(&scales, &Grid::default()).unwrap();
    let mc = model.simulate(10, 3).unwrap().mean_capacity();
    let rel = (closed.per_rx_dim_nats - mc).abs() / mc;
    assert!(rel <= 0.03, "closed {} vs MC {mc}", closed.per_rx_dim_nats);
}

#[test]
fn ones_histogram_matches_scaled_mp() {
    let k = 256;
    let model = ChannelModel::new(1.5 / k as f64, 0.0, ones_profile(k, k).unwrap(), None).unwrap();
    let scales = model.scales().unwrap().unwrap();
    let samples = model.simulate(20, 8).unwrap();
    let n = aepdf_n(&scales, &Grid::default()).unwrap();
    let d = l1(&samples.n, TargetMatrix::N, &n);
    assert!(d <= 0.05, "L1 = {d}");
}

#[test]
fn capacity_monotone_in_powers() {
    let dims = ChannelDims::new(4, 8, 12).unwrap();
    let ladder = [0.1, 0.3, 1.0, 3.0, 10.0];
    let cap = |mu: f64, nu: f64| {
        capacity_closed_form(&dims, &PowerProfile::new(mu, nu, 1.0, 0.7).unwrap())
            .unwrap()
            .per_rx_dim_nats
    };
    let by_mu: Vec<f64> = ladder.iter().map(|&mu| cap(mu, 1.0)).collect();
    assert!(by_mu.windows(2).all(|w| w[1] >= w[0]), "{by_mu:?}");
    let by_nu: Vec<f64> = ladder.iter().map(|&nu| cap(1.0, nu)).collect();
    assert!(by_nu.windows(2).all(|w| w[1] <= w[0]), "{by_nu:?}");
}

#[test]
fn cellular_row_regularity_improves_with_more_cells() {
    let deviation = |total_cells| {
        let cfg = CellularConfig {
            total_cells,
            cluster_size: 5,
            ..CellularConfig::default()
        };
        let s = cellular_linear_profile(&cfg).unwrap();
        row_regularity_deviation(&s.sigma_i.unwrap(), None)
    };
    let d: Vec<f64> = [10, 30, 50].into_iter().map(deviation).collect();
    assert!(d[1] < d[0] && d[2] < d[1], "{d:?}");
}

fn l1_by_dimension(iterations: usize) -> Vec<f64> {
    let scales =
        EffectiveScales::new(2.0, 1.0, AspectRatio::new(1.0).unwrap(), AspectRatio::new(2.0).unwrap()).unwrap();
    let k_density = aepdf_k(&scales, &Grid::default()).unwrap().density;
    [32, 64, 128, 256]
        .into_iter()
        .map(|k| {
            let model = ChannelModel::with_effective_scales(
                2.0,
                1.0,
                ones_profile(k, k).unwrap(),
                Some(ones_profile(k, 2 * k).unwrap()),
            )
            .unwrap();
            let samples = model.simulate(iterations, 21).unwrap();
            l1(&samples.k, TargetMatrix::K, &k_density)
        })
        .collect()
}

#[test]
fn larger_dimensions_approach_the_limit() {
    let d = l1_by_dimension(100);
    eprintln!("L1 by dimension 32/64/128/256 at 100 iterations: {d:?}");
    assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
}

/// Same check at 10³ iterations per size; about a quarter hour on one core.
#[test]
#[ignore = "long-running; run with --ignored"]
fn larger_dimensions_approach_the_limit_full() {
    let d = l1_by_dimension(1000);
    eprintln!("L1 by dimension 32/64/128/256 at 1000 iterations: {d:?}");
    assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
}
