//! Optimal acceptance rates and ESJD-speed sweeps.
//!
//! With `W(ell) = 2 ell^2 Phi(-ell^beta theta / 2)` and `a = ell^beta theta / 2`,
//! `W' = 0` reduces to `2 Phi(-a) = beta a phi(a)`, independently of `theta`.
//! The optimal acceptance rate is then `2 Phi(-a*)`.

use rayon::prelude::*;
use thiserror::Error;

use crate::diagnostics::RunSummary;
use crate::mh::{run_chain, Algorithm, ChainConfig, ChainError};
use crate::normal;
use crate::seeding::derive_seed;
use crate::targets::MarginalTarget;

#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("beta must be positive and finite, got {0}")]
    InvalidBeta(f64),
    #[error("could not bracket the optimal a for beta = {0}")]
    Bracket(f64),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalTuning {
    pub beta: f64,
    pub a_star: f64,
    pub acceptance_star: f64,
    /// `|2 Phi(-a*) - beta a* phi(a*)|`
    pub residual: f64,
    pub ell_star_given_theta: Option<f64>,
}

impl OptimalTuning {
    /// Fills in the maximizer `ell* = (2 a* / theta)^{1/beta}`.
    pub fn with_theta(mut self, theta: f64) -> Self {
        self.ell_star_given_theta = Some((2.0 * self.a_star / theta).powf(1.0 / self.beta));
        self
    }
}

pub fn stationarity_residual(a: f64, beta: f64) -> f64 {
    2.0 * normal::cdf(-a) - beta * a * normal::pdf(a)
}

/// Root of `a / R(a) = 2 / beta`, with `R` the Mills ratio; the left side
/// increases strictly from 0 to infinity, so the root is unique.
pub fn solve_optimal_a(beta: f64) -> Result<OptimalTuning, ScalingError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(ScalingError::InvalidBeta(beta));
    }
    let target = 2.0 / beta;
    let g = |a: f64| a / normal::mills_ratio(a) - target;
    let mut hi = 1.0;
    let mut expansions = 0;
    while g(hi) <= 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(ScalingError::Bracket(beta));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    Ok(OptimalTuning {
        beta,
        a_star: a,
        acceptance_star: 2.0 * normal::cdf(-a),
        residual: stationarity_residual(a, beta).abs(),
        ell_star_given_theta: None,
    })
}

/// `W(ell) = 2 ell^2 Phi(-ell^beta theta / 2)`
pub fn speed_w(ell: f64, beta: f64, theta: f64) -> f64 {
    2.0 * ell * ell * normal::cdf(-0.5 * ell.powf(beta) * theta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Figure1Row {
    pub hurst: f64,
    pub beta: f64,
    pub acceptance_star: f64,
}

/// `H = 0.01, 0.02, ..., 0.99`
pub fn default_h_grid() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

/// Optimal acceptance against `H`, with `beta = H` (RWM) or `2 + H` (MALA).
pub fn figure1_curve(algo: Algorithm, h_grid: &[f64]) -> Result<Vec<Figure1Row>, ScalingError> {
    h_grid
        .iter()
        .map(|&h| {
            if !(h > 0.0 && h <= 1.0) {
                return Err(ScalingError::Invalid(format!("H = {h} outside (0, 1]")));
            }
            let beta = match algo {
                Algorithm::Rwm => h,
                Algorithm::Mala => 2.0 + h,
            };
            Ok(Figure1Row {
                hurst: h,
                beta,
                acceptance_star: solve_optimal_a(beta)?.acceptance_star,
            })
        })
        .collect()
}

/// How `ell` enters the proposal variance `v n^{-1/beta}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleConvention {
    /// `v = ell^2`
    #[default]
    Ell2,
    /// `v = ell`
    Ell,
}

impl ScaleConvention {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ell2" => Some(ScaleConvention::Ell2),
            "ell" => Some(ScaleConvention::Ell),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScaleConvention::Ell2 => "ell2",
            ScaleConvention::Ell => "ell",
        }
    }

    /// Per-coordinate proposal standard deviation.
    pub fn sigma(self, ell: f64, dim: usize, beta: f64) -> f64 {
        let scale = match self {
            ScaleConvention::Ell2 => ell,
            ScaleConvention::Ell => ell.sqrt(),
        };
        scale * (dim as f64).powf(-0.5 / beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let se = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub ell: f64,
    pub replicas: usize,
    pub acceptance: MeanSe,
    pub esjd_coord: MeanSe,
    pub esjd_full: MeanSe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// One row per `(ell, replica)`, ordered by `ell` index then replica.
    pub rows: Vec<RunSummary>,
    pub points: Vec<SweepPoint>,
    /// Index into `points` of the largest mean per-coordinate ESJD.
    pub argmax_esjd_coord: usize,
    pub argmax_esjd_full: usize,
}

/// Runs `replicas` chains for each `ell`. Task `i` (in row order) is
/// seeded with `derive_seed(base.seed, i)`.
pub fn ell_sweep(
    base: &ChainConfig,
    target: &MarginalTarget,
    ells: &[f64],
    replicas: usize,
    convention: ScaleConvention,
) -> Result<SweepResult, ScalingError> {
    if ells.is_empty() || replicas == 0 {
        return Err(ScalingError::Invalid("empty sweep".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..ells.len())
        .flat_map(|i| (0..replicas).map(move |r| (i, r)))
        .collect();
    let rows = tasks
        .par_iter()
        .enumerate()
        .map(|(task, &(i, _))| {
            let mut cfg = base.clone();
            cfg.ell = ells[i];
            cfg.sigma_override = Some(convention.sigma(ells[i], cfg.dim, cfg.beta));
            cfg.seed = derive_seed(base.seed, task as u64);
            run_chain(&cfg, target).map(|o| o.summary)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let points: Vec<SweepPoint> = ells
        .iter()
        .enumerate()
        .map(|(i, &ell)| {
            let group = &rows[i * replicas..(i + 1) * replicas];
            SweepPoint {
                ell,
                replicas,
                acceptance: MeanSe::of(group.iter().map(|r| r.acceptance_rate)),
                esjd_coord: MeanSe::of(group.iter().map(|r| r.esjd_coord)),
                esjd_full: MeanSe::of(group.iter().map(|r| r.esjd_full)),
            }
        })
        .collect();
    let argmax = |f: fn(&SweepPoint) -> f64| {
        (0..points.len())
            .max_by(|&a, &b| f(&points[a]).total_cmp(&f(&points[b])))
            .unwrap_or(0)
    };
    Ok(SweepResult {
        argmax_esjd_coord: argmax(|p| p.esjd_coord.mean),
        argmax_esjd_full: argmax(|p| p.esjd_full.mean),
        rows,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn anchors() {
        let cases = [(1.0, 0.2338, 0.001), (3.0, 0.574, 0.001), (0.5, 0.07, 0.003), (0.25, 0.007, 0.001)];
        for (beta, acc, tol) in cases {
            let t = solve_optimal_a(beta).unwrap();
            assert!((t.acceptance_star - acc).abs() < tol, "beta={beta}: {t:?}");
            assert!(t.residual < 1e-10);
        }
        assert!(solve_optimal_a(0.0).is_err());
        assert!(solve_optimal_a(f64::NAN).is_err());
    }

    #[test]
    fn extreme_betas_solve() {
        for beta in [1e-3, 1e3] {
            let t = solve_optimal_a(beta).unwrap();
            assert!(t.residual < 1e-10 && t.a_star > 0.0 && t.acceptance_star < 1.0, "{t:?}");
        }
    }

    #[test]
    fn speed_limits() {
        let ell = 1e-6;
        assert!((speed_w(ell, 1.0, 2.0) / (ell * ell) - 1.0).abs() < 1e-5);
        assert!(speed_w(1e3, 1.0, 2.0) < 1e-100);
    }

    #[test]
    fn grid_argmax_recovers_optimum() {
        for (beta, theta) in [(1.0, 1.3), (0.5, 0.4), (3.0, 2.2)] {
            let opt = solve_optimal_a(beta).unwrap().with_theta(theta);
            let (lo, hi) = (1e-3f64, 1e3f64);
            let m = 10_000;
            let best = (0..m)
                .map(|k| lo * (hi / lo).powf(k as f64 / (m - 1) as f64))
                .max_by(|a, b| speed_w(*a, beta, theta).total_cmp(&speed_w(*b, beta, theta)))
                .unwrap();
            let acc = 2.0 * normal::cdf(-0.5 * best.powf(beta) * theta);
            assert!((acc - opt.acceptance_star).abs() < 1e-3);
            let ell_star = opt.ell_star_given_theta.unwrap();
            assert!((best / ell_star - 1.0).abs() < 2e-3);
        }
    }

    #[test]
    fn figure1_shape() {
        let rwm = figure1_curve(Algorithm::Rwm, &default_h_grid()).unwrap();
        assert_eq!(rwm.len(), 99);
        assert!(rwm.windows(2).all(|w| w[1].acceptance_star > w[0].acceptance_star));
        assert!((rwm[24].acceptance_star - 0.007).abs() < 0.001);
        assert!((rwm[98].acceptance_star - 0.234).abs() < 0.005);
        let mala = figure1_curve(Algorithm::Mala, &[1.0]).unwrap();
        assert!((mala[0].acceptance_star - 0.574).abs() < 0.001);
        assert!(figure1_curve(Algorithm::Rwm, &[1.5]).is_err());
    }

    #[test]
    fn conventions() {
        assert!((ScaleConvention::Ell2.sigma(2.0, 100, 1.0) - 0.2).abs() < 1e-15);
        assert!((ScaleConvention::Ell.sigma(4.0, 100, 1.0) - 0.2).abs() < 1e-15);
        assert_eq!(ScaleConvention::parse("ell"), Some(ScaleConvention::Ell));
    }

    #[test]
    fn single_ell_sweep_has_one_row() {
        let t = MarginalTarget::gaussian().normalize_and_tabulate(2001).unwrap();
        let mut base = ChainConfig::new(Algorithm::Rwm, 5, 1.0, 1.0);
        base.steps = 2_000;
        base.max_lag = 10;
        let s = ell_sweep(&base, &t, &[1.0], 1, ScaleConvention::Ell2).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.points.len(), 1);
        assert!(ell_sweep(&base, &t, &[], 1, ScaleConvention::Ell2).is_err());
    }

    proptest! {
        #[test]
        fn acceptance_increases_with_beta(b in 0.05f64..4.9, step in 1e-3f64..0.1) {
            let a = solve_optimal_a(b).unwrap();
            let c = solve_optimal_a(b + step).unwrap();
            prop_assert!(c.acceptance_star > a.acceptance_star);
            prop_assert!(a.residual < 1e-10);
        }
    }
}
