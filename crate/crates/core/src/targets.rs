//! One-dimensional marginal targets.
//!
//! Rough targets live on the span of their fBM grid and have log-density
//! `-inf` outside it. The MALA-rough potential is integrated exactly for the
//! piecewise-linear interpolant `g` of `B(x) * phi_c(x)` between grid nodes:
//!
//! ```text
//! I0(x) = int_0^x g(u) du          (cumulative trapezoid at the nodes)
//! K(x)  = int_0^x (x - u) g(u) du  (= x I0(x) - int_0^x u g(u) du)
//! log xi(x) = -x^2/2 + K(x) - ln(2 pi)/2,   V'(x) = -x + I0(x)
//! ```
//!
//! Inside a cell both are closed-form polynomials in the offset, so `V'` is
//! the exact derivative of `log xi` and MALA log-ratios see no
//! discretisation noise below the grid scale.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::fbm::{FbmError, FbmPath, HurstExponent};
use crate::normal::HALF_LN_2PI;
use crate::quad;

/// Default oscillatory domain half-width.
pub const DEFAULT_HALF_WIDTH: f64 = 9.0;

/// Default localisation constant for MALA-rough targets.
pub const DEFAULT_LOCALISATION_C: f64 = 0.1;

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("x = {x} lies outside the target domain [{min}, {max}]")]
    OutOfDomain { x: f64, min: f64, max: f64 },
    #[error("{0} target exposes no potential derivatives")]
    NoGradient(TargetKind),
    #[error("invalid target parameters: {0}")]
    InvalidParams(String),
    #[error("log-density is not finite at x = {0}")]
    NonFinite(f64),
    #[error("target has zero mass on its domain")]
    ZeroMass,
    #[error("target has not been normalized")]
    NotNormalized,
    #[error("operation requires a {expected} target, got {got}")]
    WrongKind { expected: TargetKind, got: TargetKind },
    #[error("table resolution {0} is below the minimum of 1000")]
    ResolutionTooSmall(usize),
    #[error(transparent)]
    Fbm(#[from] FbmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetKind {
    RwmRough,
    MalaRough,
    RwmOsc,
    MalaOsc,
    /// Standard normal control target.
    Gaussian,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::RwmRough => "rwm_rough",
            TargetKind::MalaRough => "mala_rough",
            TargetKind::RwmOsc => "rwm_osc",
            TargetKind::MalaOsc => "mala_osc",
            TargetKind::Gaussian => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "rwm_rough" => TargetKind::RwmRough,
            "mala_rough" => TargetKind::MalaRough,
            "rwm_osc" => TargetKind::RwmOsc,
            "mala_osc" => TargetKind::MalaOsc,
            "gaussian" => TargetKind::Gaussian,
            _ => return None,
        })
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters of the localisation `phi_c(x) = min(1, c^{3/(2H)} |x|^{-3})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalisationParams {
    c: f64,
    hurst: HurstExponent,
}

impl LocalisationParams {
    pub fn new(c: f64, hurst: HurstExponent) -> Result<Self, TargetError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(TargetError::InvalidParams(format!("need c > 0, got {c}")));
        }
        Ok(Self { c, hurst })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn hurst(&self) -> HurstExponent {
        self.hurst
    }

    /// `c^{1/(2H)}`, the radius below which `phi_c = 1`.
    pub fn plateau(&self) -> f64 {
        self.c.powf(0.5 / self.hurst.value())
    }
}

pub fn localisation(x: f64, params: &LocalisationParams) -> f64 {
    let ax = x.abs();
    if ax <= params.plateau() {
        return 1.0;
    }
    let scale = params.c.powf(1.5 / params.hurst.value());
    (scale / (ax * ax * ax)).min(1.0)
}

/// Oscillation amplitude `a` and frequency `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscParams {
    pub a: f64,
    pub b: f64,
}

impl OscParams {
    pub fn new(a: f64, b: f64) -> Result<Self, TargetError> {
        if b == 0.0 || !b.is_finite() || !a.is_finite() {
            return Err(TargetError::InvalidParams(format!(
                "need finite a and b != 0, got a={a} b={b}"
            )));
        }
        Ok(Self { a, b })
    }
}

#[derive(Debug)]
struct RoughIntegrals {
    params: LocalisationParams,
    /// `B * phi_c` at the nodes
    g: Vec<f64>,
    /// `I0` at the nodes
    i0: Vec<f64>,
    /// `K` at the nodes
    k: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Potential {
    Rough(Arc<FbmPath>),
    MalaRough(Arc<FbmPath>, Arc<RoughIntegrals>),
    Osc(OscParams),
    Gaussian,
}

/// Inverse-CDF table of a piecewise-linear density on uniform nodes.
#[derive(Debug, Clone)]
pub struct CdfTable {
    x_min: f64,
    spacing: f64,
    /// `exp(log_xi - shift)` at the nodes
    density: Vec<f64>,
    /// normalized cumulative mass at the nodes
    cdf: Vec<f64>,
    /// trapezoid mass of `density`
    mass: f64,
}

impl CdfTable {
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.density.len()).map(move |k| self.x_min + k as f64 * self.spacing)
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Normalized density at the table nodes.
    pub fn density(&self) -> impl Iterator<Item = f64> + '_ {
        self.density.iter().map(move |f| f / self.mass)
    }

    /// Quantile of the piecewise-linear density.
    pub fn quantile(&self, u: f64) -> f64 {
        let last = self.cdf.len() - 1;
        let k = self.cdf.partition_point(|&c| c <= u).clamp(1, last) - 1;
        let need = ((u - self.cdf[k]) * self.mass).max(0.0);
        let (f0, f1) = (self.density[k], self.density[k + 1]);
        let slope = 0.5 * (f1 - f0) / self.spacing;
        // solve f0 t + slope t^2 = need on [0, spacing]
        let disc = (f0 * f0 + 4.0 * slope * need).max(0.0);
        let denom = f0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * need / denom } else { 0.0 };
        self.x_min + k as f64 * self.spacing + t.clamp(0.0, self.spacing)
    }
}

/// Unnormalized 1-D target with optional potential derivatives.
#[derive(Debug, Clone)]
pub struct MarginalTarget {
    kind: TargetKind,
    domain: (f64, f64),
    potential: Potential,
    norm_const: Option<f64>,
    table: Option<Arc<CdfTable>>,
}

/// `log xi(x) = B(x) - x^2/2 - ln(2 pi)/2` on the path span.
pub fn build_rwm_rough(path: Arc<FbmPath>) -> MarginalTarget {
    let g = path.grid();
    MarginalTarget {
        kind: TargetKind::RwmRough,
        domain: (g.x_min(), g.x_max()),
        potential: Potential::Rough(path),
        norm_const: None,
        table: None,
    }
}

/// Twice-differentiable target whose second derivative is `-1 + B(x) phi_c(x)`.
pub fn build_mala_rough(path: Arc<FbmPath>, params: LocalisationParams) -> MarginalTarget {
    let grid = *path.grid();
    let h = grid.spacing();
    let n = grid.num_points();
    let zero = grid.zero_index();
    let g: Vec<f64> = grid
        .nodes()
        .zip(path.values())
        .map(|(x, b)| b * localisation(x, &params))
        .collect();
    let mut i0 = vec![0.0; n];
    let mut k = vec![0.0; n];
    for j in zero..n - 1 {
        let slope = (g[j + 1] - g[j]) / h;
        i0[j + 1] = i0[j] + 0.5 * h * (g[j] + g[j + 1]);
        k[j + 1] = k[j] + h * i0[j] + 0.5 * g[j] * h * h + slope * h * h * h / 6.0;
    }
    for j in (0..zero).rev() {
        let slope = (g[j + 1] - g[j]) / h;
        i0[j] = i0[j + 1] - 0.5 * h * (g[j] + g[j + 1]);
        k[j] = k[j + 1] - h * i0[j] - 0.5 * g[j] * h * h - slope * h * h * h / 6.0;
    }
    MarginalTarget {
        kind: TargetKind::MalaRough,
        domain: (grid.x_min(), grid.x_max()),
        potential: Potential::MalaRough(path, Arc::new(RoughIntegrals { params, g, i0, k })),
        norm_const: None,
        table: None,
    }
}

/// `rwm_osc`: `-x^2/2 + a cos(bx)`; `mala_osc`: `-x^2/2 - (a/b^2) cos(bx)`.
pub fn build_oscillatory(kind: TargetKind, params: OscParams) -> Result<MarginalTarget, TargetError> {
    if !matches!(kind, TargetKind::RwmOsc | TargetKind::MalaOsc) {
        return Err(TargetError::InvalidParams(format!(
            "{kind} is not an oscillatory kind"
        )));
    }
    Ok(MarginalTarget {
        kind,
        domain: (-DEFAULT_HALF_WIDTH, DEFAULT_HALF_WIDTH),
        potential: Potential::Osc(params),
        norm_const: None,
        table: None,
    })
}

impl MarginalTarget {
    /// Standard normal on `[-9, 9]` with `V' = -x`, `V'' = -1`.
    pub fn gaussian() -> Self {
        MarginalTarget {
            kind: TargetKind::Gaussian,
            domain: (-DEFAULT_HALF_WIDTH, DEFAULT_HALF_WIDTH),
            potential: Potential::Gaussian,
            norm_const: None,
            table: None,
        }
    }

    /// Replaces the domain of an analytic target; path targets keep their grid span.
    pub fn with_domain(mut self, min: f64, max: f64) -> Result<Self, TargetError> {
        if matches!(self.potential, Potential::Rough(_) | Potential::MalaRough(..)) {
            return Err(TargetError::InvalidParams(
                "path targets are defined on their grid span".into(),
            ));
        }
        if !(min < max) {
            return Err(TargetError::InvalidParams(format!("empty domain [{min}, {max}]")));
        }
        self.domain = (min, max);
        self.norm_const = None;
        self.table = None;
        Ok(self)
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.domain.0 && x <= self.domain.1
    }

    pub fn path(&self) -> Option<&FbmPath> {
        match &self.potential {
            Potential::Rough(p) | Potential::MalaRough(p, _) => Some(p),
            _ => None,
        }
    }

    pub fn localisation(&self) -> Option<LocalisationParams> {
        match &self.potential {
            Potential::MalaRough(_, r) => Some(r.params),
            _ => None,
        }
    }

    pub fn osc_params(&self) -> Option<OscParams> {
        match self.potential {
            Potential::Osc(p) => Some(p),
            _ => None,
        }
    }

    pub fn has_gradient(&self) -> bool {
        !matches!(self.kind, TargetKind::RwmRough | TargetKind::RwmOsc)
    }

    fn check(&self, x: f64) -> Result<(), TargetError> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(TargetError::OutOfDomain {
                x,
                min: self.domain.0,
                max: self.domain.1,
            })
        }
    }

    /// Unnormalized log-density.
    pub fn log_xi(&self, x: f64) -> Result<f64, TargetError> {
        self.check(x)?;
        Ok(match &self.potential {
            Potential::Rough(path) => path.eval(x)? - 0.5 * x * x - HALF_LN_2PI,
            Potential::MalaRough(path, r) => {
                let (j, t) = path.grid().locate(x)?;
                let slope = (r.g[j + 1] - r.g[j]) / path.grid().spacing();
                let kx = r.k[j] + t * r.i0[j] + 0.5 * r.g[j] * t * t + slope * t * t * t / 6.0;
                -0.5 * x * x + kx - HALF_LN_2PI
            }
            Potential::Osc(p) => match self.kind {
                TargetKind::RwmOsc => -0.5 * x * x + p.a * (p.b * x).cos(),
                _ => -0.5 * x * x - p.a / (p.b * p.b) * (p.b * x).cos(),
            },
            Potential::Gaussian => -0.5 * x * x - HALF_LN_2PI,
        })
    }

    /// First derivative of the log-density.
    pub fn v_prime(&self, x: f64) -> Result<f64, TargetError> {
        if !self.has_gradient() {
            return Err(TargetError::NoGradient(self.kind));
        }
        self.check(x)?;
        Ok(match &self.potential {
            Potential::MalaRough(path, r) => {
                let (j, t) = path.grid().locate(x)?;
                let slope = (r.g[j + 1] - r.g[j]) / path.grid().spacing();
                -x + r.i0[j] + r.g[j] * t + 0.5 * slope * t * t
            }
            Potential::Osc(p) => -x + p.a / p.b * (p.b * x).sin(),
            _ => -x,
        })
    }

    /// Second derivative of the log-density.
    pub fn v_second(&self, x: f64) -> Result<f64, TargetError> {
        if !self.has_gradient() {
            return Err(TargetError::NoGradient(self.kind));
        }
        self.check(x)?;
        Ok(match &self.potential {
            Potential::MalaRough(path, r) => -1.0 + path.eval(x)? * localisation(x, &r.params),
            Potential::Osc(p) => -1.0 + p.a * (p.b * x).cos(),
            _ => -1.0,
        })
    }

    /// Trapezoid normalization on `resolution` uniform nodes plus an
    /// inverse-CDF table for the piecewise-linear density through them.
    pub fn normalize_and_tabulate(&self, resolution: usize) -> Result<Self, TargetError> {
        if resolution < 1000 {
            return Err(TargetError::ResolutionTooSmall(resolution));
        }
        let (lo, hi) = self.domain;
        let spacing = (hi - lo) / (resolution - 1) as f64;
        let mut logs = Vec::with_capacity(resolution);
        for k in 0..resolution {
            let x = if k == resolution - 1 { hi } else { lo + k as f64 * spacing };
            let l = self.log_xi(x)?;
            if !l.is_finite() {
                return Err(TargetError::NonFinite(x));
            }
            logs.push(l);
        }
        let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let density: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
        let mass = quad::trapezoid(&density, spacing);
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(TargetError::ZeroMass);
        }
        let mut cdf = Vec::with_capacity(resolution);
        let mut running = 0.0;
        cdf.push(0.0);
        for w in density.windows(2) {
            running += 0.5 * spacing * (w[0] + w[1]);
            cdf.push((running / mass).min(1.0));
        }
        let mut out = self.clone();
        out.norm_const = Some(mass * shift.exp());
        out.table = Some(Arc::new(CdfTable {
            x_min: lo,
            spacing,
            density,
            cdf,
            mass,
        }));
        Ok(out)
    }

    pub fn norm_const(&self) -> Option<f64> {
        self.norm_const
    }

    pub fn table(&self) -> Option<&CdfTable> {
        self.table.as_deref()
    }

    pub fn is_normalized(&self) -> bool {
        self.table.is_some()
    }

    /// Normalized log-density `log pi(x)`.
    pub fn log_pi(&self, x: f64) -> Result<f64, TargetError> {
        let z = self.norm_const.ok_or(TargetError::NotNormalized)?;
        Ok(self.log_xi(x)? - z.ln())
    }

    /// One draw from the tabulated density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64, TargetError> {
        let table = self.table.as_ref().ok_or(TargetError::NotNormalized)?;
        Ok(table.quantile(rng.random::<f64>()))
    }

    /// `int phi_c(x)^2 pi(x) dx` by trapezoid on the table nodes.
    pub fn phi_sq_integral(&self) -> Result<f64, TargetError> {
        let params = self.localisation().ok_or(TargetError::WrongKind {
            expected: TargetKind::MalaRough,
            got: self.kind,
        })?;
        let table = self.table.as_ref().ok_or(TargetError::NotNormalized)?;
        let vals: Vec<f64> = table
            .nodes()
            .zip(table.density())
            .map(|(x, p)| localisation(x, &params).powi(2) * p)
            .collect();
        Ok(quad::trapezoid(&vals, table.spacing))
    }

    /// `key=value` lines describing the target, for CSV comment headers.
    pub fn descriptor(&self) -> String {
        let mut lines = vec![format!("kind={}", self.kind)];
        if let Some(path) = self.path() {
            lines.push(format!("H={}", path.hurst().value()));
            lines.push(format!("seed={}", path.seed()));
            lines.push(format!("grid_points={}", path.grid().num_points()));
        }
        if let Some(p) = self.localisation() {
            lines.push(format!("c={}", p.c()));
        }
        if let Some(p) = self.osc_params() {
            lines.push(format!("a={}", p.a));
            lines.push(format!("b={}", p.b));
        }
        lines.push(format!("domain={:.16e},{:.16e}", self.domain.0, self.domain.1));
        match self.norm_const {
            Some(z) => lines.push(format!("norm_const={z:.16e}")),
            None => lines.push("norm_const=unset".into()),
        }
        lines.join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm_circulant, GridSpec};
    use crate::seeding::rng_from_seed;

    fn h(v: f64) -> HurstExponent {
        HurstExponent::new(v).unwrap()
    }

    fn zero_path(points: usize) -> Arc<FbmPath> {
        let g = GridSpec::symmetric(9.0, points).unwrap();
        Arc::new(FbmPath::from_values(h(0.5), g, vec![0.0; points], 0).unwrap())
    }

    fn rough_path(points: usize, hv: f64, seed: u64) -> Arc<FbmPath> {
        let g = GridSpec::symmetric(9.0, points).unwrap();
        Arc::new(sample_fbm_circulant(&g, h(hv), seed).unwrap())
    }

    #[test]
    fn localisation_examples() {
        let p = LocalisationParams::new(0.1, h(0.5)).unwrap();
        assert_eq!(localisation(0.0, &p), 1.0);
        assert_eq!(localisation(0.05, &p), 1.0);
        let unit = LocalisationParams::new(1.0, h(0.5)).unwrap();
        assert!((localisation(2.0, &unit) - 0.125).abs() < 1e-15);
        assert!(LocalisationParams::new(0.0, h(0.5)).is_err());
    }

    #[test]
    fn localisation_growth_and_lipschitz_bounds() {
        for (c, hv) in [(0.1, 0.5), (0.3, 0.2), (0.05, 0.9)] {
            let p = LocalisationParams::new(c, h(hv)).unwrap();
            let lip = 3.0 * c.powf(-0.5 / hv);
            let mut worst = 0.0f64;
            let step = 1e-4;
            let mut x = -20.0;
            while x < 20.0 {
                let v = localisation(x, &p);
                assert!(v <= 1.0 && v > 0.0);
                assert!(x.abs().powf(2.0 * hv) * v <= c * (1.0 + 1e-12));
                worst = worst.max((localisation(x + step, &p) - v).abs() / step);
                x += step;
            }
            assert!(worst <= lip * (1.0 + 1e-6), "{worst} > {lip}");
        }
    }

    #[test]
    fn rwm_rough_values() {
        let t = build_rwm_rough(zero_path(1001));
        assert!((t.log_xi(0.0).unwrap() + HALF_LN_2PI).abs() < 1e-15);
        assert!((t.log_xi(1.3).unwrap() - (-0.845 - HALF_LN_2PI)).abs() < 1e-14);
        assert!(matches!(t.v_prime(0.0), Err(TargetError::NoGradient(_))));
        assert!(matches!(t.log_xi(9.5), Err(TargetError::OutOfDomain { .. })));

        let g = GridSpec::symmetric(1.0, 3).unwrap();
        let p = Arc::new(FbmPath::from_values(h(0.5), g, vec![0.0, 0.0, 0.3], 0).unwrap());
        let t = build_rwm_rough(p);
        assert!((t.log_xi(1.0).unwrap() - (0.3 - 0.5 - HALF_LN_2PI)).abs() < 1e-15);
    }

    #[test]
    fn mala_rough_zero_environment_is_gaussian() {
        let params = LocalisationParams::new(0.1, h(0.5)).unwrap();
        let t = build_mala_rough(zero_path(1001), params);
        for x in [-3.3, 0.0, 0.77, 8.9] {
            assert!((t.log_xi(x).unwrap() - (-0.5 * x * x - HALF_LN_2PI)).abs() < 1e-13);
            assert!((t.v_prime(x).unwrap() + x).abs() < 1e-14);
            assert_eq!(t.v_second(x).unwrap(), -1.0);
        }
        assert_eq!(t.v_prime(0.0).unwrap(), 0.0);
    }

    #[test]
    fn mala_rough_constant_environment_relative_accuracy() {
        // the origin spike is one cell wide; its effect shrinks with spacing
        let kappa = 0.7;
        let n = 200_001;
        let g = GridSpec::symmetric(1.0, n).unwrap();
        let values: Vec<f64> = g.nodes().map(|x| if x == 0.0 { 0.0 } else { kappa }).collect();
        let path = Arc::new(FbmPath::from_values(h(0.5), g, values, 0).unwrap());
        let params = LocalisationParams::new(0.5, h(0.5)).unwrap();
        let t = build_mala_rough(path, params);
        for x in [0.25, -0.4] {
            let k = t.log_xi(x).unwrap() + 0.5 * x * x + HALF_LN_2PI;
            let exact = kappa * x * x / 2.0;
            // spike contributes -kappa * h * |x| / 2 relative to the constant
            let spike = 0.5 * kappa * g.spacing() * x.abs();
            assert!(((k + spike) / exact - 1.0).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn mala_rough_derivatives_match_finite_differences() {
        let path = rough_path(20_001, 0.5, 3);
        let params = LocalisationParams::new(0.1, h(0.5)).unwrap();
        let t = build_mala_rough(path.clone(), params);
        let grid = path.grid();
        let step = 1e-4 * grid.spacing();
        for j in [100usize, 5_000, 9_990, 10_013, 15_000] {
            let x = grid.node(j) + 0.37 * grid.spacing();
            let fd = (t.log_xi(x + step).unwrap() - t.log_xi(x - step).unwrap()) / (2.0 * step);
            assert!((fd - t.v_prime(x).unwrap()).abs() < 1e-3);
            let fd2 = (t.v_prime(x + step).unwrap() - t.v_prime(x - step).unwrap()) / (2.0 * step);
            assert!((fd2 - t.v_second(x).unwrap()).abs() < 1e-3);
        }
    }

    #[test]
    fn oscillatory_targets() {
        let zero = build_oscillatory(TargetKind::MalaOsc, OscParams::new(0.0, 5.0).unwrap()).unwrap();
        assert_eq!(zero.log_xi(1.5).unwrap(), -1.125);
        assert_eq!(zero.v_prime(1.5).unwrap(), -1.5);
        let rwm = build_oscillatory(TargetKind::RwmOsc, OscParams::new(0.25, 30.0).unwrap()).unwrap();
        assert_eq!(rwm.log_xi(0.0).unwrap(), 0.25);
        assert!(rwm.v_prime(0.0).is_err());
        let mala = build_oscillatory(TargetKind::MalaOsc, OscParams::new(0.9, 5.0).unwrap()).unwrap();
        for i in 0..=1000 {
            let x = -9.0 + 0.018 * i as f64;
            let v2 = mala.v_second(x).unwrap();
            assert!((-1.9 - 1e-12..=-0.1 + 1e-12).contains(&v2));
        }
        assert!(OscParams::new(1.0, 0.0).is_err());
        assert!(build_oscillatory(TargetKind::Gaussian, OscParams::new(1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn gaussian_normalizes_to_one() {
        let t = MarginalTarget::gaussian().normalize_and_tabulate(20_001).unwrap();
        assert!((t.norm_const().unwrap() - 1.0).abs() < 1e-10);
        let cdf = t.table().unwrap().cdf();
        assert_eq!(cdf[0], 0.0);
        assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
        assert!(cdf
            .windows(2)
            .filter(|w| w[1] < 1.0 - 1e-12)
            .all(|w| w[1] > w[0]));
        assert!(MarginalTarget::gaussian().normalize_and_tabulate(999).is_err());
    }

    #[test]
    fn oscillatory_sample_mean_is_zero() {
        let t = build_oscillatory(TargetKind::RwmOsc, OscParams::new(0.25, 30.0).unwrap())
            .unwrap()
            .normalize_and_tabulate(100_001)
            .unwrap();
        let mut rng = rng_from_seed(17);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| t.sample(&mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn phi_sq_integral_bounds_and_errors() {
        let path = rough_path(20_001, 0.5, 9);
        let t = build_mala_rough(path.clone(), LocalisationParams::new(0.1, h(0.5)).unwrap());
        assert!(matches!(t.phi_sq_integral(), Err(TargetError::NotNormalized)));
        let t = t.normalize_and_tabulate(20_001).unwrap();
        let v = t.phi_sq_integral().unwrap();
        assert!(v > 0.0 && v <= 1.0);
        // c large enough that phi_c = 1 on [-9, 9]
        let wide = build_mala_rough(path, LocalisationParams::new(100.0, h(0.5)).unwrap())
            .normalize_and_tabulate(20_001)
            .unwrap();
        assert!((wide.phi_sq_integral().unwrap() - 1.0).abs() < 1e-12);
        let rwm = MarginalTarget::gaussian().normalize_and_tabulate(1001).unwrap();
        assert!(matches!(rwm.phi_sq_integral(), Err(TargetError::WrongKind { .. })));
    }

    #[test]
    fn descriptor_lists_parameters() {
        let t = build_mala_rough(rough_path(1001, 0.3, 4), LocalisationParams::new(0.1, h(0.3)).unwrap());
        let d = t.descriptor();
        assert!(d.contains("kind=mala_rough"));
        assert!(d.contains("H=0.3"));
        assert!(d.contains("c=0.1"));
        assert!(d.contains("seed=4"));
        assert!(d.contains("norm_const=unset"));
    }
}
