//! Product-target Random Walk Metropolis and MALA.
//!
//! The target on `R^n` is the product of one marginal. Per coordinate the
//! log-MH ratio is
//!
//! ```text
//! RWM:  rho = log xi(y) - log xi(x)
//! MALA: rho = V(y) - V(x) - (sigma z / 2)(V'(x) + V'(y)) - (sigma^2 / 8)(V'(y)^2 - V'(x)^2)
//! ```
//!
//! with `V = log xi` and `z = (y - x) / sigma` the realized displacement, and
//! `Psi` is the sum over coordinates. Proposals that leave the target domain
//! get `Psi = -inf` and are rejected.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::diagnostics::{autocorrelation, RunSummary};
use crate::seeding::{derive_seed, rng_from_seed};
use crate::targets::{MarginalTarget, TargetError};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid chain configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Target(#[from] TargetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Rwm,
    Mala,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Rwm => "rwm",
            Algorithm::Mala => "mala",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rwm" => Some(Algorithm::Rwm),
            "mala" => Some(Algorithm::Mala),
            _ => None,
        }
    }
}

/// How the chain is started.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitMode {
    /// Every coordinate drawn from the target's inverse-CDF table.
    StationaryTable,
    /// Every coordinate set to the given point.
    Point(f64),
    /// Standard normal start; stationarity relies on burn-in.
    BurnInOnly,
}

impl InitMode {
    pub fn label(&self) -> String {
        match self {
            InitMode::StationaryTable => "stationary_table".into(),
            InitMode::Point(x) => format!("point:{x}"),
            InitMode::BurnInOnly => "burn_in_only".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stationary_table" => Some(InitMode::StationaryTable),
            "burn_in_only" => Some(InitMode::BurnInOnly),
            _ => s.strip_prefix("point:")?.parse().ok().map(InitMode::Point),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub algo: Algorithm,
    pub dim: usize,
    pub ell: f64,
    /// Scaling exponent: proposal variance is `ell^2 n^{-1/beta}` unless overridden.
    pub beta: f64,
    /// Explicit per-coordinate proposal standard deviation.
    pub sigma_override: Option<f64>,
    /// Recorded iterations, run after `burn_in` discarded ones.
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub init: InitMode,
    /// Thinning factor of the exported trace.
    pub thin: usize,
    /// Largest ACF lag reported in the summary.
    pub max_lag: usize,
}

impl ChainConfig {
    pub fn new(algo: Algorithm, dim: usize, ell: f64, beta: f64) -> Self {
        Self {
            algo,
            dim,
            ell,
            beta,
            sigma_override: None,
            steps: 100_000,
            burn_in: 0,
            seed: 0,
            init: InitMode::StationaryTable,
            thin: 1,
            max_lag: 100,
        }
    }

    /// Per-coordinate proposal standard deviation `ell n^{-1/(2 beta)}`.
    pub fn sigma(&self) -> f64 {
        self.sigma_override
            .unwrap_or_else(|| self.ell * (self.dim as f64).powf(-0.5 / self.beta))
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        let bad = |m: String| Err(ChainError::Config(m));
        if self.dim == 0 {
            return bad("dimension must be at least 1".into());
        }
        if !(self.ell > 0.0) || !(self.beta > 0.0) {
            return bad(format!("need ell > 0 and beta > 0, got {} and {}", self.ell, self.beta));
        }
        if let Some(s) = self.sigma_override {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma override must be positive, got {s}"));
            }
        }
        if self.steps == 0 || self.steps <= self.burn_in {
            return bad(format!(
                "need steps > burn_in >= 0, got steps={} burn_in={}",
                self.steps, self.burn_in
            ));
        }
        if self.thin == 0 {
            return bad("thinning factor must be positive".into());
        }
        Ok(())
    }
}

/// Chain position with cached per-coordinate `log xi` and, for MALA, `V'`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    x: Vec<f64>,
    log_xi: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl ChainState {
    pub fn new(x: Vec<f64>, target: &MarginalTarget, algo: Algorithm) -> Result<Self, ChainError> {
        let log_xi = x
            .iter()
            .map(|&v| target.log_xi(v))
            .collect::<Result<Vec<_>, _>>()?;
        let grad = match algo {
            Algorithm::Rwm => None,
            Algorithm::Mala => Some(
                x.iter()
                    .map(|&v| target.v_prime(v))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        Ok(Self { x, log_xi, grad })
    }

    pub fn coordinates(&self) -> &[f64] {
        &self.x
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Largest discrepancy between the caches and fresh evaluations.
    pub fn cache_error(&self, target: &MarginalTarget) -> Result<f64, ChainError> {
        let mut worst = 0.0f64;
        for (i, &v) in self.x.iter().enumerate() {
            worst = worst.max((target.log_xi(v)? - self.log_xi[i]).abs());
            if let Some(g) = &self.grad {
                worst = worst.max((target.v_prime(v)? - g[i]).abs());
            }
        }
        Ok(worst)
    }
}

/// One MH transition as seen by the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub psi: f64,
    pub accepted: bool,
    pub proposal_sq_jump_coord1: f64,
    pub full_sq_jump: f64,
}

/// Row of the exported trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub coord1: f64,
    pub psi: f64,
    pub accepted: bool,
}

pub fn rwm_propose<R: Rng + ?Sized>(state: &ChainState, sigma: f64, rng: &mut R) -> Vec<f64> {
    state
        .x
        .iter()
        .map(|&x| x + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `y_i = x_i + (sigma^2 / 2) V'(x_i) + sigma * N(0, 1)`.
pub fn mala_propose<R: Rng + ?Sized>(
    state: &ChainState,
    sigma: f64,
    target: &MarginalTarget,
    rng: &mut R,
) -> Result<Vec<f64>, ChainError> {
    if !target.has_gradient() {
        return Err(ChainError::Config(format!(
            "MALA needs potential derivatives; {} target has none",
            target.kind()
        )));
    }
    let half_var = 0.5 * sigma * sigma;
    let mut out = Vec::with_capacity(state.dim());
    for (i, &x) in state.x.iter().enumerate() {
        let g = match &state.grad {
            Some(g) => g[i],
            None => target.v_prime(x)?,
        };
        out.push(x + half_var * g + sigma * rng.sample::<f64, _>(StandardNormal));
    }
    Ok(out)
}

pub fn rho_rwm(log_xi_x: f64, log_xi_y: f64) -> f64 {
    log_xi_y - log_xi_x
}

/// MALA per-coordinate log-ratio from potentials and gradients at both ends.
pub fn rho_mala(x: f64, y: f64, v_x: f64, v_y: f64, g_x: f64, g_y: f64, sigma: f64) -> f64 {
    let jump = y - x;
    (v_y - v_x) - 0.5 * jump * (g_x + g_y) - 0.125 * sigma * sigma * (g_y * g_y - g_x * g_x)
}

/// Proposal with its caches and summed log-ratio.
struct Evaluated {
    log_xi: Vec<f64>,
    grad: Vec<f64>,
    psi: f64,
}

fn evaluate(
    state: &ChainState,
    y: &[f64],
    sigma: f64,
    target: &MarginalTarget,
    algo: Algorithm,
    out: &mut Evaluated,
) -> Result<(), ChainError> {
    out.log_xi.clear();
    out.grad.clear();
    if y.iter().any(|&v| !target.contains(v)) {
        out.psi = f64::NEG_INFINITY;
        return Ok(());
    }
    let mut psi = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let ly = target.log_xi(yi)?;
        if !ly.is_finite() {
            return Err(TargetError::NonFinite(yi).into());
        }
        out.log_xi.push(ly);
        psi += match algo {
            Algorithm::Rwm => rho_rwm(state.log_xi[i], ly),
            Algorithm::Mala => {
                let gy = target.v_prime(yi)?;
                out.grad.push(gy);
                let gx = match &state.grad {
                    Some(g) => g[i],
                    None => target.v_prime(state.x[i])?,
                };
                rho_mala(state.x[i], yi, state.log_xi[i], ly, gx, gy, sigma)
            }
        };
    }
    out.psi = psi;
    Ok(())
}

/// Summed log-MH ratio `Psi` of moving from `state` to `proposal`.
pub fn log_mh_ratio(
    state: &ChainState,
    proposal: &[f64],
    sigma: f64,
    target: &MarginalTarget,
    algo: Algorithm,
) -> Result<f64, ChainError> {
    if proposal.len() != state.dim() {
        return Err(ChainError::Config("proposal dimension mismatch".into()));
    }
    if algo == Algorithm::Mala && !target.has_gradient() {
        return Err(ChainError::Config(format!(
            "MALA needs potential derivatives; {} target has none",
            target.kind()
        )));
    }
    let mut ev = Evaluated {
        log_xi: Vec::new(),
        grad: Vec::new(),
        psi: 0.0,
    };
    evaluate(state, proposal, sigma, target, algo, &mut ev)?;
    Ok(ev.psi)
}

/// Summary plus the exported trace of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub summary: RunSummary,
    pub trace: Vec<TraceRow>,
    /// First coordinate after every recorded step.
    pub coord1: Vec<f64>,
}

fn initial_point<R: Rng + ?Sized>(
    config: &ChainConfig,
    target: &MarginalTarget,
    rng: &mut R,
) -> Result<Vec<f64>, ChainError> {
    let n = config.dim;
    match config.init {
        InitMode::StationaryTable => (0..n)
            .map(|_| target.sample(rng).map_err(ChainError::from))
            .collect(),
        InitMode::Point(x) => {
            if !target.contains(x) {
                return Err(ChainError::Config(format!("start point {x} is outside the domain")));
            }
            Ok(vec![x; n])
        }
        InitMode::BurnInOnly => Ok((0..n)
            .map(|_| loop {
                let v: f64 = rng.sample(StandardNormal);
                if target.contains(v) {
                    break v;
                }
            })
            .collect()),
    }
}

/// Runs `burn_in` discarded and then `steps` recorded MH iterations.
pub fn run_chain(config: &ChainConfig, target: &MarginalTarget) -> Result<ChainOutput, ChainError> {
    let mut rng = rng_from_seed(config.seed);
    run_chain_with_rng(config, target, &mut rng)
}

pub fn run_chain_with_rng<R: Rng + ?Sized>(
    config: &ChainConfig,
    target: &MarginalTarget,
    rng: &mut R,
) -> Result<ChainOutput, ChainError> {
    config.validate()?;
    if config.algo == Algorithm::Mala && !target.has_gradient() {
        return Err(ChainError::Config(format!(
            "MALA needs potential derivatives; {} target has none",
            target.kind()
        )));
    }
    let sigma = config.sigma();
    let x0 = initial_point(config, target, rng)?;
    let mut state = ChainState::new(x0, target, config.algo)?;
    let mut y = vec![0.0; config.dim];
    let mut ev = Evaluated {
        log_xi: Vec::with_capacity(config.dim),
        grad: Vec::with_capacity(config.dim),
        psi: 0.0,
    };

    let mut acc = Accumulator::default();
    let mut coord1 = Vec::with_capacity(config.steps);
    let mut trace = Vec::with_capacity(config.steps / config.thin + 1);
    let half_var = 0.5 * sigma * sigma;

    for iter in 0..config.burn_in + config.steps {
        for (i, yi) in y.iter_mut().enumerate() {
            let drift = match &state.grad {
                Some(g) => half_var * g[i],
                None => 0.0,
            };
            *yi = state.x[i] + drift + sigma * rng.sample::<f64, _>(StandardNormal);
        }
        evaluate(&state, &y, sigma, target, config.algo, &mut ev)?;
        let u: f64 = rng.random();
        let accepted = ev.psi >= 0.0 || u < ev.psi.exp();
        let d1 = y[0] - state.x[0];
        let full: f64 = y.iter().zip(&state.x).map(|(a, b)| (a - b) * (a - b)).sum();
        let record = StepRecord {
            psi: ev.psi,
            accepted,
            proposal_sq_jump_coord1: d1 * d1,
            full_sq_jump: full,
        };
        if accepted {
            state.x.copy_from_slice(&y);
            state.log_xi.copy_from_slice(&ev.log_xi);
            if let Some(g) = state.grad.as_mut() {
                g.copy_from_slice(&ev.grad);
            }
        }
        if iter >= config.burn_in {
            let step = iter - config.burn_in;
            acc.push(&record);
            coord1.push(state.x[0]);
            if step % config.thin == 0 {
                trace.push(TraceRow {
                    step,
                    coord1: state.x[0],
                    psi: ev.psi,
                    accepted,
                });
            }
        }
    }

    let acf = if coord1.len() >= 10 * config.max_lag.max(1) {
        autocorrelation(&coord1, config.max_lag)
            .map(|a| a.values)
            .unwrap_or_default()
    } else {
        Vec::new()
    };
    let summary = acc.finish(config, target, sigma, acf);
    Ok(ChainOutput {
        summary,
        trace,
        coord1,
    })
}

#[derive(Default)]
struct Accumulator {
    count: usize,
    accepted: usize,
    out_of_domain: usize,
    alpha_sum: f64,
    esjd_coord: f64,
    esjd_full: f64,
    psi_n: usize,
    psi_mean: f64,
    psi_m2: f64,
}

impl Accumulator {
    fn push(&mut self, r: &StepRecord) {
        self.count += 1;
        self.alpha_sum += r.psi.min(0.0).exp();
        if r.accepted {
            self.accepted += 1;
            self.esjd_coord += r.proposal_sq_jump_coord1;
            self.esjd_full += r.full_sq_jump;
        }
        if r.psi.is_finite() {
            self.psi_n += 1;
            let delta = r.psi - self.psi_mean;
            self.psi_mean += delta / self.psi_n as f64;
            self.psi_m2 += delta * (r.psi - self.psi_mean);
        } else {
            self.out_of_domain += 1;
        }
    }

    fn finish(self, config: &ChainConfig, target: &MarginalTarget, sigma: f64, acf: Vec<f64>) -> RunSummary {
        let n = self.count as f64;
        RunSummary {
            algo: config.algo,
            kind: target.kind(),
            hurst: target.path().map(|p| p.hurst().value()),
            c: target.localisation().map(|p| p.c()),
            dim: config.dim,
            ell: config.ell,
            beta: config.beta,
            sigma,
            seed: config.seed,
            steps: config.steps,
            burn_in: config.burn_in,
            acceptance_rate: self.accepted as f64 / n,
            mean_alpha: self.alpha_sum / n,
            esjd_coord: self.esjd_coord / n,
            esjd_full: self.esjd_full / n,
            psi_mean: self.psi_mean,
            psi_var: if self.psi_n > 1 {
                self.psi_m2 / (self.psi_n - 1) as f64
            } else {
                0.0
            },
            out_of_domain: self.out_of_domain,
            acf,
        }
    }
}

/// Draws `X ~ pi` from the table and `Y ~ q(X, .)`, returning `rho(X, Y)`
/// or `None` when `Y` leaves the domain.
pub fn sample_pair_rho<R: Rng + ?Sized>(
    target: &MarginalTarget,
    algo: Algorithm,
    sigma: f64,
    rng: &mut R,
) -> Result<Option<f64>, ChainError> {
    let x = target.sample(rng)?;
    let lx = target.log_xi(x)?;
    let (gx, mean) = match algo {
        Algorithm::Rwm => (0.0, x),
        Algorithm::Mala => {
            let g = target.v_prime(x)?;
            (g, x + 0.5 * sigma * sigma * g)
        }
    };
    let y = mean + sigma * rng.sample::<f64, _>(StandardNormal);
    if !target.contains(y) {
        return Ok(None);
    }
    let ly = target.log_xi(y)?;
    Ok(Some(match algo {
        Algorithm::Rwm => rho_rwm(lx, ly),
        Algorithm::Mala => rho_mala(x, y, lx, ly, gx, target.v_prime(y)?, sigma),
    }))
}

const PSI_CHUNK: usize = 256;

/// `count` independent draws of `Psi(X, Y)` with `X ~ Pi_n` from the table
/// and `Y ~ Q_n(X, .)`. Chunks of 256 draws use seeds derived from `seed`,
/// so the output does not depend on the thread count.
pub fn stationary_psi_samples(
    target: &MarginalTarget,
    algo: Algorithm,
    dim: usize,
    sigma: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>, ChainError> {
    if !target.is_normalized() {
        return Err(TargetError::NotNormalized.into());
    }
    if algo == Algorithm::Mala && !target.has_gradient() {
        return Err(ChainError::Config("MALA needs potential derivatives".into()));
    }
    let chunks = count.div_ceil(PSI_CHUNK);
    let parts: Vec<Result<Vec<f64>, ChainError>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, c as u64));
            let len = PSI_CHUNK.min(count - c * PSI_CHUNK);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let mut psi = 0.0;
                for _ in 0..dim {
                    match sample_pair_rho(target, algo, sigma, &mut rng)? {
                        Some(r) => psi += r,
                        None => psi = f64::NEG_INFINITY,
                    }
                }
                out.push(psi);
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(count);
    for p in parts {
        all.extend(p?);
    }
    Ok(all)
}
