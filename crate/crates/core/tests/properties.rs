use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use scaling_lab_core::diagnostics::{clt_report, psi_balance};
use scaling_lab_core::experiments::run_checks;
use scaling_lab_core::fbm::{fbm_covariance, CirculantFbm, FbmPath, GridSpec, HurstExponent};
use scaling_lab_core::gauss_moments::CovMatrix;
use scaling_lab_core::mh::{log_mh_ratio, run_chain, stationary_psi_samples, Algorithm, ChainConfig, ChainState};
use scaling_lab_core::seeding::rng_from_seed;
use scaling_lab_core::targets::{build_oscillatory, build_rwm_rough, MarginalTarget, OscParams, TargetKind};

proptest! {
    #[test]
    fn fbm_covariance_is_a_covariance(
        h in 0.05f64..0.95,
        xs in prop::collection::vec(-5.0f64..5.0, 1..8),
    ) {
        let hurst = HurstExponent::new(h).unwrap();
        let rows: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| xs.iter().map(|&y| fbm_covariance(x, y, hurst)).collect())
            .collect();
        for (i, &x) in xs.iter().enumerate() {
            prop_assert!((rows[i][i] - x.abs().powf(2.0 * h)).abs() < 1e-12);
        }
        prop_assert!(CovMatrix::from_rows(&rows).unwrap().check_psd().is_ok());
    }

    #[test]
    fn log_ratio_flips_sign(
        x in prop::collection::vec(-3.0f64..3.0, 1..6),
        dz in prop::collection::vec(-1.0f64..1.0, 6),
        sigma in 0.01f64..1.0,
        mala in any::<bool>(),
    ) {
        let (kind, algo) = if mala {
            (TargetKind::MalaOsc, Algorithm::Mala)
        } else {
            (TargetKind::RwmOsc, Algorithm::Rwm)
        };
        let t = build_oscillatory(kind, OscParams::new(0.9, 5.0).unwrap()).unwrap();
        let y: Vec<f64> = x.iter().zip(&dz).map(|(a, d)| a + d).collect();
        let sx = ChainState::new(x.clone(), &t, algo).unwrap();
        let sy = ChainState::new(y.clone(), &t, algo).unwrap();
        let f = log_mh_ratio(&sx, &y, sigma, &t, algo).unwrap();
        let b = log_mh_ratio(&sy, &x, sigma, &t, algo).unwrap();
        prop_assert!((f + b).abs() < 1e-10 * (1.0 + f.abs()));
    }
}

#[test]
fn increment_variance_over_path_replicas() {
    // Var(B_{x + s} - B_x) = |s|^{2H}
    let h = HurstExponent::new(0.3).unwrap();
    let grid = GridSpec::symmetric(2.0, 4001).unwrap();
    let gen = CirculantFbm::new(&grid, h).unwrap();
    let (x, s) = (0.37, 0.123);
    let reps = 20_000;
    let incs: Vec<f64> = (0..reps)
        .map(|r| {
            let p = gen.sample(r);
            p.eval(x + s).unwrap() - p.eval(x).unwrap()
        })
        .collect();
    let sq: Vec<f64> = incs.iter().map(|v| v * v).collect();
    let n = reps as f64;
    let mean = sq.iter().sum::<f64>() / n;
    let se = (sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    // linear interpolation between nodes slightly lowers the variance
    let exact = s.powf(0.6);
    assert!((mean - exact).abs() < 3.0 * se + 1e-3 * exact, "{mean} vs {exact} (se {se})");
}

#[test]
fn identity_suite_passes() {
    for r in run_checks(3).unwrap() {
        assert!(r.passed, "{}: {}", r.name, r.detail);
    }
}

#[test]
fn full_esjd_is_n_times_coordinate_esjd() {
    let t = build_oscillatory(TargetKind::RwmOsc, OscParams::new(0.25, 30.0).unwrap())
        .unwrap()
        .normalize_and_tabulate(20_001)
        .unwrap();
    let mut cfg = ChainConfig::new(Algorithm::Rwm, 20, 1.0, 1.0);
    cfg.steps = 200_000;
    cfg.seed = 4;
    let s = run_chain(&cfg, &t).unwrap().summary;
    let ratio = s.esjd_full / (cfg.dim as f64 * s.esjd_coord);
    assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    assert_eq!(s.acf[0], 1.0);
}

fn bm_target(seed: u64) -> MarginalTarget {
    let grid = GridSpec::symmetric(9.0, 20_001).unwrap();
    let h = HurstExponent::new(0.5).unwrap();
    let path: FbmPath = CirculantFbm::new(&grid, h).unwrap().sample(seed);
    build_rwm_rough(Arc::new(path)).normalize_and_tabulate(20_001).unwrap()
}

#[test]
fn detailed_balance_identities_on_rough_target() {
    let t = bm_target(8);
    let psi = stationary_psi_samples(&t, Algorithm::Rwm, 20, 0.05, 200_000, 2).unwrap();
    let pairs: Vec<[f64; 3]> = psi
        .iter()
        .map(|&p| {
            let w = p.exp();
            [w - 1.0, -p * w - p, p * p * w - p * p]
        })
        .collect();
    let n = pairs.len() as f64;
    for k in 0..3 {
        let m = pairs.iter().map(|v| v[k]).sum::<f64>() / n;
        let se = (pairs.iter().map(|v| (v[k] - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        assert!(m.abs() < 4.0 * se, "identity {k}: {m} (se {se})");
    }
}

#[test]
fn vanishing_step_gives_degenerate_psi() {
    let t = bm_target(9);
    let psi = stationary_psi_samples(&t, Algorithm::Rwm, 10, 1e-12, 2_000, 1).unwrap();
    assert!(clt_report(&psi).unwrap().var < 1e-10);
}

#[test]
fn balance_ratio_shrinks_with_dimension() {
    let t = bm_target(10);
    let ratios: Vec<f64> = [20.0, 320.0]
        .iter()
        .map(|n| psi_balance(&t, Algorithm::Rwm, 1.0 / n, 2_000_000, 6).unwrap().ratio.abs())
        .collect();
    assert!(ratios[1] < ratios[0], "{ratios:?}");
}

#[test]
fn table_sampler_matches_density_mass() {
    let t = bm_target(11);
    let mut rng = rng_from_seed(12);
    let n = 200_000;
    let below = (0..n).filter(|_| t.sample(&mut rng).unwrap() < 0.0).count() as f64 / n as f64;
    let table = t.table().unwrap();
    let zero = table.nodes().position(|x| x.abs() < 1e-12).unwrap();
    let p = table.cdf()[zero];
    assert!((below - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    let _ = rng.random::<f64>();
}
