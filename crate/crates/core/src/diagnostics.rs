//! Run summaries, estimators and the closed-form limits they are compared
//! against.

use std::io::Write;

use libm::tgamma;
use rayon::prelude::*;
use thiserror::Error;

use crate::fbm::HurstExponent;
use crate::mh::{sample_pair_rho, Algorithm, ChainError};
use crate::normal;
use crate::quad::tanh_sinh;
use crate::seeding::{derive_seed, rng_from_seed};
use crate::targets::{MarginalTarget, TargetKind};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("trace of length {len} is shorter than 10 x max_lag = {}", 10 * max_lag)]
    ShortTrace { len: usize, max_lag: usize },
    #[error("sigma list spans {0:.3} decades; need at least 1.5")]
    NarrowSpan(f64),
    #[error("non-finite sample at position {0}")]
    NonFinite(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Decimal text with 13 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.12e}")
}

/// Aggregates of one chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub algo: Algorithm,
    pub kind: TargetKind,
    pub hurst: Option<f64>,
    pub c: Option<f64>,
    pub dim: usize,
    pub ell: f64,
    pub beta: f64,
    pub sigma: f64,
    pub seed: u64,
    pub steps: usize,
    pub burn_in: usize,
    pub acceptance_rate: f64,
    /// Mean of `min(1, e^Psi)` over recorded steps.
    pub mean_alpha: f64,
    /// `E[(Y_1 - X_1)^2 1{accept}]`
    pub esjd_coord: f64,
    /// `E[|Y - X|^2 1{accept}]`
    pub esjd_full: f64,
    pub psi_mean: f64,
    pub psi_var: f64,
    /// Proposals auto-rejected for leaving the domain.
    pub out_of_domain: usize,
    /// Coordinate-1 ACF for lags `0..=max_lag`; empty when the run is too short.
    pub acf: Vec<f64>,
}

impl RunSummary {
    pub const CSV_HEADER: &'static str =
        "algo,kind,H,c,n,ell,sigma,acceptance,esjd_coord,esjd_full,psi_mean,psi_var,seed,steps";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.algo.as_str(),
            self.kind,
            opt(self.hurst),
            opt(self.c),
            self.dim,
            fmt_real(self.ell),
            fmt_real(self.sigma),
            fmt_real(self.acceptance_rate),
            fmt_real(self.esjd_coord),
            fmt_real(self.esjd_full),
            fmt_real(self.psi_mean),
            fmt_real(self.psi_var),
            self.seed,
            self.steps
        )
    }
}

pub fn write_summaries<W: Write>(mut out: W, rows: &[RunSummary]) -> Result<(), DiagnosticsError> {
    writeln!(out, "{}", RunSummary::CSV_HEADER)?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Parameters of the limiting formulas for a given target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub hurst: HurstExponent,
    pub ell: f64,
    pub c: Option<f64>,
    pub phi_sq: Option<f64>,
}

impl TheoryParams {
    /// Limiting `Var(Psi)`: the MALA form when `phi_sq` is present.
    pub fn sigma2(&self) -> f64 {
        match self.phi_sq {
            Some(p) => sigma2_mala(self.hurst, self.ell, p),
            None => sigma2_rwm(self.hurst, self.ell),
        }
    }
}

/// `ell^{2H} 2^H Gamma(H + 1/2) / sqrt(pi)`, i.e. `ell^{2H} E|Z|^{2H}`.
pub fn sigma2_rwm(hurst: HurstExponent, ell: f64) -> f64 {
    let h = hurst.value();
    ell.powf(2.0 * h) * 2f64.powf(h) * tgamma(h + 0.5) / std::f64::consts::PI.sqrt()
}

/// `H / (2 + 7H + 7H^2 + 2H^3)`
pub fn mala_rational_factor(hurst: HurstExponent) -> f64 {
    let h = hurst.value();
    h / (2.0 + 7.0 * h + 7.0 * h * h + 2.0 * h * h * h)
}

pub fn sigma2_mala(hurst: HurstExponent, ell: f64, phi_sq: f64) -> f64 {
    let h = hurst.value();
    let gamma = 2f64.powf(1.0 + h) * tgamma(h + 2.5) / std::f64::consts::PI.sqrt();
    ell.powf(4.0 + 2.0 * h) * gamma * mala_rational_factor(hurst) * phi_sq
}

/// `int_0^1 int_0^1 |t - s|^{2H} (1 - 2t)(1 - 2s) ds dt` by nested
/// tanh-sinh, with the inner integral split at the diagonal.
pub fn mn_variance_kernel(hurst: HurstExponent) -> f64 {
    mn_kernel_oriented(hurst, false)
}

fn mn_kernel_oriented(hurst: HurstExponent, swapped: bool) -> f64 {
    let two_h = 2.0 * hurst.value();
    let tol = 1e-12;
    let kernel = |t: f64, s: f64| (t - s).abs().powf(two_h) * (1.0 - 2.0 * t) * (1.0 - 2.0 * s);
    let inner = |t: f64| {
        let f = |s: f64| if swapped { kernel(s, t) } else { kernel(t, s) };
        tanh_sinh(f, 0.0, t, tol) + tanh_sinh(f, t, 1.0, tol)
    };
    tanh_sinh(inner, 0.0, 1.0, tol)
}

/// `E[1 ^ exp(N(-s2/2, s2))] = 2 Phi(-sqrt(s2) / 2)`
pub fn limiting_acceptance(sigma2: f64) -> f64 {
    2.0 * normal::cdf(-0.5 * sigma2.max(0.0).sqrt())
}

/// Constant `theta` in `W(ell) = 2 ell^2 Phi(-ell^beta theta / 2)`: matching
/// the limiting acceptance `2 Phi(-sigma / 2)` gives `theta = sigma / ell^beta`.
pub fn theta_from_sigma2(sigma2: f64, ell: f64, beta: f64) -> f64 {
    sigma2.sqrt() / ell.powf(beta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CltReport {
    pub samples: usize,
    pub mean: f64,
    pub var: f64,
    pub mean_plus_half_var: f64,
    /// Kolmogorov-Smirnov distance of the standardized samples to `N(0, 1)`.
    pub ks_distance: f64,
}

pub const CLT_MIN_SAMPLES: usize = 1000;

pub fn clt_report(psi: &[f64]) -> Result<CltReport, DiagnosticsError> {
    if psi.len() < CLT_MIN_SAMPLES {
        return Err(DiagnosticsError::TooFewSamples {
            needed: CLT_MIN_SAMPLES,
            got: psi.len(),
        });
    }
    if let Some(i) = psi.iter().position(|v| !v.is_finite()) {
        return Err(DiagnosticsError::NonFinite(i));
    }
    let n = psi.len() as f64;
    let mean = psi.iter().sum::<f64>() / n;
    let var = psi.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let ks_distance = if var > 0.0 {
        let sd = var.sqrt();
        let mut z: Vec<f64> = psi.iter().map(|v| (v - mean) / sd).collect();
        z.sort_by(f64::total_cmp);
        ks_to_normal(&z)
    } else {
        1.0
    };
    Ok(CltReport {
        samples: psi.len(),
        mean,
        var,
        mean_plus_half_var: mean + 0.5 * var,
        ks_distance,
    })
}

/// KS distance between sorted samples and the standard normal CDF.
pub fn ks_to_normal(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal::cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `(E Psi + Var Psi / 2) / Var Psi` for `Psi` a sum of independent
/// stationary-pair log-ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiBalance {
    pub ratio: f64,
    pub std_error: f64,
    /// Per-coordinate variance of `rho`.
    pub rho_var: f64,
    pub samples: usize,
}

const BALANCE_BATCHES: usize = 64;

/// The ratio does not depend on the dimension: mean and variance of `Psi`
/// are both `n` times their per-coordinate values. Since `E[e^rho] = 1` in
/// stationarity, `mu + v / 2 = -E[e^rho - 1 - rho - rho^2 / 2] - mu^2 / 2`,
/// whose remainder term has far smaller variance than `rho + rho^2 / 2`.
/// The standard error comes from 64 batch ratios.
pub fn psi_balance(
    target: &MarginalTarget,
    algo: Algorithm,
    sigma: f64,
    samples: usize,
    seed: u64,
) -> Result<PsiBalance, DiagnosticsError> {
    if samples < BALANCE_BATCHES * CLT_MIN_SAMPLES {
        return Err(DiagnosticsError::TooFewSamples {
            needed: BALANCE_BATCHES * CLT_MIN_SAMPLES,
            got: samples,
        });
    }
    let per = samples / BALANCE_BATCHES;
    let batches: Vec<Result<[f64; 4], ChainError>> = (0..BALANCE_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from_seed(derive_seed(seed, b as u64));
            let mut acc = [0.0; 4];
            for _ in 0..per {
                if let Some(r) = sample_pair_rho(target, algo, sigma, &mut rng)? {
                    acc[0] += 1.0;
                    acc[1] += r;
                    acc[2] += r * r;
                    acc[3] += r.exp_m1() - r - 0.5 * r * r;
                }
            }
            Ok(acc)
        })
        .collect();
    let batches = batches.into_iter().collect::<Result<Vec<_>, _>>()?;
    let ratio_of = |a: &[f64; 4]| {
        let (m1, m2, rem) = (a[1] / a[0], a[2] / a[0], a[3] / a[0]);
        let var = m2 - m1 * m1;
        ((-rem - 0.5 * m1 * m1) / var, var)
    };
    let mut total = [0.0; 4];
    for b in &batches {
        for k in 0..4 {
            total[k] += b[k];
        }
    }
    let (ratio, rho_var) = ratio_of(&total);
    let parts: Vec<f64> = batches.iter().map(|b| ratio_of(b).0).collect();
    let nb = parts.len() as f64;
    let mean = parts.iter().sum::<f64>() / nb;
    let spread = parts.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (nb - 1.0);
    Ok(PsiBalance {
        ratio,
        std_error: (spread / nb).sqrt(),
        rho_var,
        samples: total[0] as usize,
    })
}

/// Log-log fit of `I(sigma) = E[rho(X, Y)^2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InDecayFit {
    pub sigmas: Vec<f64>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

pub const IN_MIN_SAMPLES: usize = 100_000;
const IN_CHUNK: usize = 4096;

/// Monte Carlo `E[rho^2]` with `X ~ pi` and `Y` proposed from `X` at each
/// `sigma`, followed by a least-squares slope of `log I` on `log sigma`.
pub fn estimate_in_decay(
    target: &MarginalTarget,
    algo: Algorithm,
    sigmas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<InDecayFit, DiagnosticsError> {
    if sigmas.len() < 2 || sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(DiagnosticsError::Invalid(
            "need at least two positive sigma values".into(),
        ));
    }
    let lo = sigmas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sigmas.iter().cloned().fold(0.0, f64::max);
    let span = (hi / lo).log10();
    if span < 1.5 - 1e-9 {
        return Err(DiagnosticsError::NarrowSpan(span));
    }
    if samples < IN_MIN_SAMPLES {
        return Err(DiagnosticsError::TooFewSamples {
            needed: IN_MIN_SAMPLES,
            got: samples,
        });
    }
    let mut means = Vec::with_capacity(sigmas.len());
    let mut std_errors = Vec::with_capacity(sigmas.len());
    for (k, &sigma) in sigmas.iter().enumerate() {
        let task_seed = derive_seed(seed, k as u64);
        let chunks = samples.div_ceil(IN_CHUNK);
        let parts: Vec<Result<(f64, f64, usize), ChainError>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = rng_from_seed(derive_seed(task_seed, c as u64));
                let len = IN_CHUNK.min(samples - c * IN_CHUNK);
                let (mut s1, mut s2, mut kept) = (0.0, 0.0, 0usize);
                for _ in 0..len {
                    if let Some(r) = sample_pair_rho(target, algo, sigma, &mut rng)? {
                        let q = r * r;
                        s1 += q;
                        s2 += q * q;
                        kept += 1;
                    }
                }
                Ok((s1, s2, kept))
            })
            .collect();
        let (mut s1, mut s2, mut kept) = (0.0, 0.0, 0usize);
        for p in parts {
            let (a, b, k) = p?;
            s1 += a;
            s2 += b;
            kept += k;
        }
        let n = kept as f64;
        let mean = s1 / n;
        let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
        means.push(mean);
        std_errors.push((var / n).sqrt());
    }
    let xs: Vec<f64> = sigmas.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok(InDecayFit {
        sigmas: sigmas.to_vec(),
        means,
        std_errors,
        slope,
        intercept,
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Acf {
    pub values: Vec<f64>,
    /// Set for a constant trace, where every lag is reported as 1.
    pub zero_variance: bool,
}

/// Biased sample autocorrelation for lags `0..=max_lag`.
pub fn autocorrelation(trace: &[f64], max_lag: usize) -> Result<Acf, DiagnosticsError> {
    if trace.len() < 10 * max_lag.max(1) {
        return Err(DiagnosticsError::ShortTrace {
            len: trace.len(),
            max_lag,
        });
    }
    let n = trace.len();
    let mean = trace.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = trace.iter().map(|v| v - mean).collect();
    let c0: f64 = centred.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 <= (f64::EPSILON * mean.abs().max(1.0)).powi(2) {
        return Ok(Acf {
            values: vec![1.0; max_lag + 1],
            zero_variance: true,
        });
    }
    let values = (0..=max_lag)
        .map(|k| {
            let ck: f64 = centred[..n - k]
                .iter()
                .zip(&centred[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64;
            ck / c0
        })
        .collect();
    Ok(Acf {
        values,
        zero_variance: false,
    })
}
