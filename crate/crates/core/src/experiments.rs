//! Experiment specs, table emission and the `scaling-lab` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::diagnostics::{fmt_real, mn_variance_kernel, mala_rational_factor, RunSummary};
use crate::fbm::{
    sample_fbm_cholesky, sample_fbm_circulant, FbmError, FbmPath, GridSpec, HurstExponent,
};
use crate::gauss_moments::{isserlis_moment, proper_pairing_moment, CovMatrix, MomentQuery};
use crate::mh::{
    run_chain, sample_pair_rho, Algorithm, ChainConfig, ChainError, ChainOutput, InitMode,
};
use crate::scaling::{
    ell_sweep, figure1_curve, default_h_grid, solve_optimal_a, ScaleConvention, ScalingError,
    SweepResult,
};
use crate::seeding::{derive_seed, rng_from_seed};
use crate::targets::{
    build_mala_rough, build_oscillatory, build_rwm_rough, LocalisationParams, MarginalTarget,
    OscParams, TargetError, TargetKind, DEFAULT_HALF_WIDTH, DEFAULT_LOCALISATION_C,
};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " v", env!("CARGO_PKG_VERSION"));

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "SCALING_LAB_THREADS";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("spec line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("nothing to emit: no rows")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Fbm(#[from] FbmError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
}

/// Marginal target block of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub a: f64,
    pub b: f64,
    pub hurst: f64,
    pub c: f64,
    pub path_seed: u64,
    pub grid_points: usize,
    pub half_width: f64,
    /// Pre-generated environment; overrides `hurst`, `path_seed` and the grid.
    pub path_file: Option<PathBuf>,
    /// Node count of the normalization table.
    pub resolution: usize,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            kind: TargetKind::Gaussian,
            a: 0.25,
            b: 30.0,
            hurst: 0.5,
            c: DEFAULT_LOCALISATION_C,
            path_seed: 1,
            grid_points: 200_000,
            half_width: DEFAULT_HALF_WIDTH,
            path_file: None,
            resolution: 200_001,
        }
    }
}

impl TargetSpec {
    pub fn load_path(&self) -> Result<FbmPath, ExperimentError> {
        match &self.path_file {
            Some(file) => Ok(FbmPath::load_csv(file)?),
            None => {
                let grid = GridSpec::symmetric(self.half_width, self.grid_points)?;
                Ok(sample_fbm_circulant(&grid, HurstExponent::new(self.hurst)?, self.path_seed)?)
            }
        }
    }

    /// Builds and normalizes the marginal target.
    pub fn build(&self) -> Result<MarginalTarget, ExperimentError> {
        let raw = match self.kind {
            TargetKind::Gaussian => MarginalTarget::gaussian(),
            TargetKind::RwmOsc | TargetKind::MalaOsc => {
                build_oscillatory(self.kind, OscParams::new(self.a, self.b)?)?
            }
            TargetKind::RwmRough => build_rwm_rough(Arc::new(self.load_path()?)),
            TargetKind::MalaRough => {
                let path = self.load_path()?;
                let params = LocalisationParams::new(self.c, path.hurst())?;
                build_mala_rough(Arc::new(path), params)
            }
        };
        Ok(raw.normalize_and_tabulate(self.resolution)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub ells: Vec<f64>,
    pub replicas: usize,
    pub convention: ScaleConvention,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub target: TargetSpec,
    pub chain: ChainConfig,
    pub sweep: SweepSpec,
    pub out_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let mut chain = ChainConfig::new(Algorithm::Rwm, 100, 2.38, 1.0);
        chain.seed = 1;
        chain.thin = 10;
        Self {
            name: "experiment".into(),
            target: TargetSpec::default(),
            chain,
            sweep: SweepSpec {
                ells: vec![2.38],
                replicas: 1,
                convention: ScaleConvention::Ell2,
            },
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Table1,
    Table2,
    Table3,
}

impl ExperimentSpec {
    pub fn preset(which: Preset) -> Self {
        let mut spec = Self::default();
        match which {
            Preset::Table1 => {
                spec.name = "table1".into();
                spec.target.kind = TargetKind::RwmRough;
                spec.chain = ChainConfig::new(Algorithm::Rwm, 200, 13.0, 0.5);
                spec.chain.burn_in = 10_000;
                spec.chain.init = InitMode::BurnInOnly;
                spec.sweep.ells = vec![5.0, 5.5, 11.0, 12.0, 13.0, 14.0];
            }
            Preset::Table2 => {
                spec.name = "table2".into();
                spec.target.kind = TargetKind::RwmOsc;
                spec.target.a = 0.25;
                spec.target.b = 30.0;
                spec.chain = ChainConfig::new(Algorithm::Rwm, 100, 2.55, 1.0);
                spec.sweep.ells = vec![0.5, 0.65, 1.5, 2.0, 2.55, 3.0];
            }
            Preset::Table3 => {
                spec.name = "table3".into();
                spec.target.kind = TargetKind::MalaOsc;
                spec.target.a = 0.9;
                spec.target.b = 5.0;
                spec.chain = ChainConfig::new(Algorithm::Mala, 100, 1.68, 3.0);
                spec.sweep.ells = vec![1.4, 1.51, 1.6, 1.67, 1.68, 1.7, 1.72, 1.73, 1.8];
            }
        }
        spec.chain.seed = 7;
        spec.chain.thin = 10;
        spec.out_dir = PathBuf::from("out").join(&spec.name);
        spec
    }

    /// `key=value` text; `from_text` inverts it exactly.
    pub fn to_text(&self) -> String {
        let t = &self.target;
        let c = &self.chain;
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("name", self.name.clone());
        kv("target.kind", t.kind.to_string());
        kv("target.a", t.a.to_string());
        kv("target.b", t.b.to_string());
        kv("target.hurst", t.hurst.to_string());
        kv("target.c", t.c.to_string());
        kv("target.path_seed", t.path_seed.to_string());
        kv("target.grid_points", t.grid_points.to_string());
        kv("target.half_width", t.half_width.to_string());
        kv(
            "target.path_file",
            t.path_file.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        kv("target.resolution", t.resolution.to_string());
        kv("chain.algo", c.algo.as_str().into());
        kv("chain.dim", c.dim.to_string());
        kv("chain.ell", c.ell.to_string());
        kv("chain.beta", c.beta.to_string());
        kv("chain.sigma", c.sigma_override.map(|v| v.to_string()).unwrap_or_default());
        kv("chain.steps", c.steps.to_string());
        kv("chain.burn_in", c.burn_in.to_string());
        kv("chain.seed", c.seed.to_string());
        kv("chain.init", c.init.label());
        kv("chain.thin", c.thin.to_string());
        kv("chain.max_lag", c.max_lag.to_string());
        kv("sweep.ells", list(&self.sweep.ells));
        kv("sweep.replicas", self.sweep.replicas.to_string());
        kv("sweep.convention", self.sweep.convention.as_str().into());
        kv("output.dir", self.out_dir.display().to_string());
        s
    }

    /// Parses `key=value` lines over the defaults. Blank lines and `#`
    /// comments are skipped; unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self, ExperimentError> {
        let mut spec = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ExperimentError::Parse {
                line,
                msg: format!("expected key=value, got '{content}'"),
            })?;
            spec.set(key.trim(), value.trim())
                .map_err(|msg| ExperimentError::Parse { line, msg })?;
        }
        Ok(spec)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad value '{v}' for {key}"))
        }
        let t = &mut self.target;
        let c = &mut self.chain;
        match key {
            "name" => self.name = value.to_string(),
            "target.kind" => {
                t.kind = TargetKind::parse(value).ok_or(format!("unknown target kind '{value}'"))?
            }
            "target.a" => t.a = num(key, value)?,
            "target.b" => t.b = num(key, value)?,
            "target.hurst" => t.hurst = num(key, value)?,
            "target.c" => t.c = num(key, value)?,
            "target.path_seed" => t.path_seed = num(key, value)?,
            "target.grid_points" => t.grid_points = num(key, value)?,
            "target.half_width" => t.half_width = num(key, value)?,
            "target.path_file" => {
                t.path_file = (!value.is_empty()).then(|| PathBuf::from(value))
            }
            "target.resolution" => t.resolution = num(key, value)?,
            "chain.algo" => {
                c.algo = Algorithm::parse(value).ok_or(format!("unknown algorithm '{value}'"))?
            }
            "chain.dim" => c.dim = num(key, value)?,
            "chain.ell" => c.ell = num(key, value)?,
            "chain.beta" => c.beta = num(key, value)?,
            "chain.sigma" => {
                c.sigma_override = if value.is_empty() {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "chain.steps" => c.steps = num(key, value)?,
            "chain.burn_in" => c.burn_in = num(key, value)?,
            "chain.seed" => c.seed = num(key, value)?,
            "chain.init" => {
                c.init = InitMode::parse(value).ok_or(format!("unknown init mode '{value}'"))?
            }
            "chain.thin" => c.thin = num(key, value)?,
            "chain.max_lag" => c.max_lag = num(key, value)?,
            "sweep.ells" => {
                self.sweep.ells = value
                    .split(',')
                    .map(|v| num(key, v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "sweep.replicas" => self.sweep.replicas = num(key, value)?,
            "sweep.convention" => {
                self.sweep.convention = ScaleConvention::parse(value)
                    .ok_or(format!("unknown convention '{value}'"))?
            }
            "output.dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Chain config for a single run at `chain.ell` under the sweep convention.
    pub fn single_run_config(&self) -> ChainConfig {
        let mut cfg = self.chain.clone();
        if cfg.sigma_override.is_none() {
            cfg.sigma_override = Some(self.sweep.convention.sigma(cfg.ell, cfg.dim, cfg.beta));
        }
        cfg
    }

    pub fn run_sweep(&self, target: &MarginalTarget) -> Result<SweepResult, ExperimentError> {
        Ok(ell_sweep(
            &self.chain,
            target,
            &self.sweep.ells,
            self.sweep.replicas,
            self.sweep.convention,
        )?)
    }

    /// Comment header carrying everything needed to re-run the output.
    pub fn provenance(&self, target: &MarginalTarget) -> Vec<String> {
        let mut lines = vec![format!("version={VERSION}")];
        lines.extend(self.to_text().lines().map(|l| format!("spec {l}")));
        lines.extend(target.descriptor().lines().map(|l| format!("target {l}")));
        lines
    }
}

fn create_parent(path: &Path) -> Result<(), ExperimentError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|source| ExperimentError::Write {
                path: dir.to_path_buf(),
                source,
            })
        }
        _ => Ok(()),
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), ExperimentError> {
    create_parent(path)?;
    fs::write(path, body).map_err(|source| ExperimentError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `# `-prefixed provenance, the CSV header and rows to `csv_path`,
/// plus a gnuplot script next to it when `plot` is given.
pub fn emit_table(
    csv_path: &Path,
    provenance: &[String],
    header: &str,
    rows: &[String],
    plot: Option<&str>,
) -> Result<(), ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::Empty);
    }
    let mut body = String::new();
    for p in provenance {
        let _ = writeln!(body, "# {p}");
    }
    let _ = writeln!(body, "{header}");
    for r in rows {
        let _ = writeln!(body, "{r}");
    }
    write_file(csv_path, &body)?;
    if let Some(script) = plot {
        write_file(&csv_path.with_extension("gp"), script)?;
    }
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Summary rows, per-ell aggregates and the ACF table of a sweep.
pub fn emit_sweep(
    spec: &ExperimentSpec,
    target: &MarginalTarget,
    result: &SweepResult,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let prov = spec.provenance(target);
    let dir = &spec.out_dir;
    let summary = dir.join(format!("{}.csv", spec.name));
    let rows: Vec<String> = result.rows.iter().map(RunSummary::csv_row).collect();
    let summary_plot = format!(
        "set datafile separator ','\nset key top left\nset xlabel 'ell'\n\
         set multiplot layout 2,1\n\
         plot '{f}' using 6:8 with linespoints title 'acceptance'\n\
         plot '{f}' using 6:9 with linespoints title 'esjd_coord', '' using 6:10 with linespoints title 'esjd_full'\n\
         unset multiplot\n",
        f = file_name(&summary)
    );
    emit_table(&summary, &prov, RunSummary::CSV_HEADER, &rows, Some(&summary_plot))?;

    let agg = dir.join(format!("{}_by_ell.csv", spec.name));
    let agg_rows: Vec<String> = result
        .points
        .iter()
        .map(|p| {
            format!(
                "{},{},{},{},{},{},{},{}",
                fmt_real(p.ell),
                p.replicas,
                fmt_real(p.acceptance.mean),
                fmt_real(p.acceptance.se),
                fmt_real(p.esjd_coord.mean),
                fmt_real(p.esjd_coord.se),
                fmt_real(p.esjd_full.mean),
                fmt_real(p.esjd_full.se)
            )
        })
        .collect();
    let mut agg_prov = prov.clone();
    agg_prov.push(format!(
        "argmax_esjd_coord_ell={} argmax_esjd_full_ell={}",
        result.points[result.argmax_esjd_coord].ell, result.points[result.argmax_esjd_full].ell
    ));
    emit_table(
        &agg,
        &agg_prov,
        "ell,replicas,acceptance,acceptance_se,esjd_coord,esjd_coord_se,esjd_full,esjd_full_se",
        &agg_rows,
        None,
    )?;

    let mut written = vec![summary.clone(), summary.with_extension("gp"), agg];
    let first: Vec<&RunSummary> = result
        .rows
        .iter()
        .step_by(spec.sweep.replicas)
        .filter(|r| !r.acf.is_empty())
        .collect();
    if !first.is_empty() {
        let acf = dir.join(format!("{}_acf.csv", spec.name));
        let lags = first[0].acf.len();
        let header = std::iter::once("lag".to_string())
            .chain(first.iter().map(|r| format!("ell_{}", r.ell)))
            .collect::<Vec<_>>()
            .join(",");
        let acf_rows: Vec<String> = (0..lags)
            .map(|k| {
                std::iter::once(k.to_string())
                    .chain(first.iter().map(|r| fmt_real(r.acf[k])))
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        let curves = (0..first.len())
            .map(|i| format!("'{}' using 1:{} with lines title columnhead", file_name(&acf), i + 2))
            .collect::<Vec<_>>()
            .join(", ");
        let plot = format!(
            "set datafile separator ','\nset xlabel 'lag'\nset ylabel 'acf coord 1'\nplot {curves}\n"
        );
        emit_table(&acf, &prov, &header, &acf_rows, Some(&plot))?;
        written.push(acf.clone());
        written.push(acf.with_extension("gp"));
    }
    Ok(written)
}

/// Summary, trace and ACF of a single chain.
pub fn emit_run(
    spec: &ExperimentSpec,
    target: &MarginalTarget,
    cfg: &ChainConfig,
    out: &ChainOutput,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut prov = spec.provenance(target);
    prov.push(format!("thin={}", cfg.thin));
    let dir = &spec.out_dir;
    let summary = dir.join(format!("{}_run.csv", spec.name));
    emit_table(&summary, &prov, RunSummary::CSV_HEADER, &[out.summary.csv_row()], None)?;
    let trace = dir.join(format!("{}_trace.csv", spec.name));
    let rows: Vec<String> = out
        .trace
        .iter()
        .map(|r| format!("{},{},{},{}", r.step, fmt_real(r.coord1), fmt_real(r.psi), u8::from(r.accepted)))
        .collect();
    let plot = format!(
        "set datafile separator ','\nset xlabel 'step'\nset ylabel 'coord 1'\n\
         plot '{}' using 1:2 with lines notitle\n",
        file_name(&trace)
    );
    emit_table(&trace, &prov, "step,coord1,psi,accepted", &rows, Some(&plot))?;
    let mut written = vec![summary, trace.clone(), trace.with_extension("gp")];
    if !out.summary.acf.is_empty() {
        let acf = dir.join(format!("{}_run_acf.csv", spec.name));
        let rows: Vec<String> = out
            .summary
            .acf
            .iter()
            .enumerate()
            .map(|(k, v)| format!("{k},{}", fmt_real(*v)))
            .collect();
        let plot = format!(
            "set datafile separator ','\nset xlabel 'lag'\nplot '{}' using 1:2 with lines notitle\n",
            file_name(&acf)
        );
        emit_table(&acf, &prov, "lag,acf", &rows, Some(&plot))?;
        written.push(acf.clone());
        written.push(acf.with_extension("gp"));
    }
    Ok(written)
}

/// Outcome of one invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Fast identity and invariant suite behind the `checks` subcommand.
pub fn run_checks(seed: u64) -> Result<Vec<CheckResult>, ExperimentError> {
    let mut out = Vec::new();

    let anchors = [(1.0, 0.2338, 0.001), (3.0, 0.574, 0.001), (0.5, 0.07, 0.003), (0.25, 0.007, 0.001)];
    let mut worst = 0.0f64;
    let mut ok = true;
    for (beta, acc, tol) in anchors {
        let t = solve_optimal_a(beta)?;
        ok &= (t.acceptance_star - acc).abs() <= tol && t.residual < 1e-10;
        worst = worst.max(t.residual);
    }
    out.push(CheckResult {
        name: "solver_anchors",
        passed: ok,
        detail: format!("max residual {worst:.3e}"),
    });

    let mut err = 0.0f64;
    for k in 1..=9 {
        let h = HurstExponent::new(k as f64 / 10.0)?;
        err = err.max((mn_variance_kernel(h) + mala_rational_factor(h)).abs());
    }
    out.push(CheckResult {
        name: "kernel_integral",
        passed: err < 1e-6,
        detail: format!("max error {err:.3e}"),
    });

    let r = CovMatrix::from_rows(&[
        vec![1.0, 0.4, -0.2],
        vec![0.4, 2.0, 0.3],
        vec![-0.2, 0.3, 1.5],
    ])
    .expect("fixed matrix is valid");
    // E[(X0^2 - R00) X1 X2] by expanding the square
    let full = isserlis_moment(&r, &MomentQuery::new(vec![0, 0, 1, 2]).expect("valid query"))
        .expect("indices in range");
    let pair = isserlis_moment(&r, &MomentQuery::new(vec![1, 2]).expect("valid query"))
        .expect("indices in range");
    let proper = proper_pairing_moment(&r, &[0], &[1, 2]).expect("indices in range");
    let gap = (full - r.get(0, 0) * pair - proper).abs();
    out.push(CheckResult {
        name: "proper_pairing_expansion",
        passed: gap < 1e-12,
        detail: format!("gap {gap:.3e}"),
    });

    let grid = GridSpec::symmetric(1.0, 17)?;
    let h = HurstExponent::new(0.3)?;
    let reps = 20_000u64;
    let last = grid.num_points() - 1;
    let ends: Vec<f64> = (0..reps)
        .map(|s| sample_fbm_circulant(&grid, h, derive_seed(seed, s)).map(|p| p.values()[last].powi(2)))
        .collect::<Result<_, _>>()?;
    let chol: Vec<f64> = (0..reps)
        .map(|s| sample_fbm_cholesky(&grid, h, derive_seed(seed ^ 1, s)).map(|p| p.values()[last].powi(2)))
        .collect::<Result<_, _>>()?;
    let (m1, s1) = mean_se(&ends);
    let (m2, s2) = mean_se(&chol);
    let z1 = (m1 - 1.0).abs() / s1;
    let z2 = (m2 - 1.0).abs() / s2;
    out.push(CheckResult {
        name: "fbm_endpoint_variance",
        passed: z1 < 4.0 && z2 < 4.0,
        detail: format!("circulant z={z1:.2} cholesky z={z2:.2}"),
    });

    for (kind, algo, params, sigma) in [
        (TargetKind::RwmOsc, Algorithm::Rwm, OscParams::new(0.25, 30.0)?, 0.25),
        (TargetKind::MalaOsc, Algorithm::Mala, OscParams::new(0.9, 5.0)?, 0.8),
    ] {
        let target = build_oscillatory(kind, params)?.normalize_and_tabulate(20_001)?;
        let mut rng = rng_from_seed(derive_seed(seed, 100 + algo as u64));
        let dim = 10;
        let mut e = Vec::new();
        let mut d1 = Vec::new();
        let mut d2 = Vec::new();
        for _ in 0..100_000 {
            let mut psi = 0.0;
            for _ in 0..dim {
                psi += sample_pair_rho(&target, algo, sigma, &mut rng)?.unwrap_or(f64::NEG_INFINITY);
            }
            if !psi.is_finite() {
                continue;
            }
            let w = psi.exp();
            e.push(w);
            d1.push(-psi * w - psi);
            d2.push(psi * psi * w - psi * psi);
        }
        let (me, se) = mean_se(&e);
        let (m1, s1) = mean_se(&d1);
        let (m2, s2) = mean_se(&d2);
        let z = [(me - 1.0) / se, m1 / s1, m2 / s2].map(f64::abs);
        out.push(CheckResult {
            name: if algo == Algorithm::Rwm { "detailed_balance_rwm_osc" } else { "detailed_balance_mala_osc" },
            passed: z.iter().all(|&v| v < 4.0),
            detail: format!("z(e^psi)={:.2} z(t)={:.2} z(t^2)={:.2}", z[0], z[1], z[2]),
        });
    }

    let target = MarginalTarget::gaussian().normalize_and_tabulate(20_001)?;
    let mut cfg = ChainConfig::new(Algorithm::Rwm, 100, 2.38, 1.0);
    cfg.steps = 50_000;
    cfg.seed = seed;
    let s = run_chain(&cfg, &target)?.summary;
    let se = (s.acceptance_rate * (1.0 - s.acceptance_rate) / cfg.steps as f64).sqrt();
    let z = (s.acceptance_rate - s.mean_alpha).abs() / se;
    out.push(CheckResult {
        name: "harmonic_acceptance",
        passed: z < 3.0 && (0.21..=0.26).contains(&s.acceptance_rate),
        detail: format!("acceptance {:.4} mean alpha {:.4} z={z:.2}", s.acceptance_rate, s.mean_alpha),
    });
    Ok(out)
}

#[derive(Parser, Debug)]
#[command(name = "scaling-lab", version, about = "Optimal scaling experiments for rough and oscillatory targets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a two-sided fBM path and write it as CSV.
    Fbm {
        #[arg(long, default_value_t = 0.5)]
        hurst: f64,
        #[arg(long, default_value_t = 200_000)]
        points: usize,
        #[arg(long, default_value_t = -9.0, allow_hyphen_values = true)]
        xmin: f64,
        #[arg(long, default_value_t = 9.0)]
        xmax: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FbmMethod::Circulant)]
        method: FbmMethod,
        #[arg(long, default_value = "fbm_path.csv")]
        out: PathBuf,
    },
    /// Optimal a* and acceptance rate for a scaling exponent.
    Solve {
        #[arg(long)]
        beta: f64,
        /// Also report the maximizing ell for this theta.
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Optimal acceptance against H for RWM and MALA.
    Figure1 {
        #[arg(long, default_value = "out/figure1.csv")]
        out: PathBuf,
    },
    /// Single chain with trace and ACF output.
    Run(RunArgs),
    /// Sweep over ell.
    Sweep(RunArgs),
    /// Rough RWM table (n = 200, variance ell^2 / n^2).
    Table1(TableArgs),
    /// Oscillatory RWM table (n = 100, variance ell^2 / n).
    Table2(TableArgs),
    /// Oscillatory MALA table (n = 100, variance ell^2 n^{-1/3}).
    Table3(TableArgs),
    /// Identity and invariant suite; exits non-zero on any failure.
    Checks {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FbmMethod {
    Circulant,
    Cholesky,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConventionArg {
    Ell2,
    Ell,
}

impl From<ConventionArg> for ScaleConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Ell2 => ScaleConvention::Ell2,
            ConventionArg::Ell => ScaleConvention::Ell,
        }
    }
}

/// Overrides shared by every experiment command.
#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Environment path CSV written by `fbm`.
    #[arg(long)]
    path_file: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    convention: Option<ConventionArg>,
    /// Comma-separated ell values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ell: Option<Vec<f64>>,
    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Experiment spec file (key=value lines).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Explicit per-coordinate proposal standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    thin: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug, Clone)]
struct TableArgs {
    /// Use 10^6 recorded steps per run.
    #[arg(long)]
    long: bool,
    /// Print the resolved spec instead of running.
    #[arg(long)]
    print_spec: bool,
    #[command(flatten)]
    common: CommonArgs,
}

fn apply_common(spec: &mut ExperimentSpec, c: &CommonArgs) {
    if let Some(h) = c.hurst {
        spec.target.hurst = h;
    }
    if let Some(v) = c.c {
        spec.target.c = v;
    }
    if let Some(n) = c.dim {
        spec.chain.dim = n;
    }
    if let Some(s) = c.steps {
        spec.chain.steps = s;
    }
    if let Some(b) = c.burnin {
        spec.chain.burn_in = b;
    }
    if let Some(s) = c.seed {
        spec.chain.seed = s;
    }
    if let Some(p) = &c.path_file {
        spec.target.path_file = Some(p.clone());
    }
    if let Some(o) = &c.out {
        spec.out_dir = o.clone();
    }
    if let Some(conv) = c.convention {
        spec.sweep.convention = conv.into();
    }
    if let Some(ells) = &c.ell {
        spec.sweep.ells = ells.clone();
        if let Some(&first) = ells.first() {
            spec.chain.ell = first;
        }
    }
    if let Some(r) = c.replicas {
        spec.sweep.replicas = r;
    }
}

fn resolve_run_spec(args: &RunArgs) -> Result<ExperimentSpec, ExperimentError> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                ExperimentError::Usage(format!("cannot read spec {}: {e}", path.display()))
            })?;
            ExperimentSpec::from_text(&text)?
        }
        None => ExperimentSpec::default(),
    };
    if let Some(k) = &args.kind {
        spec.target.kind =
            TargetKind::parse(k).ok_or_else(|| ExperimentError::Usage(format!("unknown kind '{k}'")))?;
    }
    if let Some(a) = &args.algo {
        spec.chain.algo =
            Algorithm::parse(a).ok_or_else(|| ExperimentError::Usage(format!("unknown algo '{a}'")))?;
    }
    if let Some(b) = args.beta {
        spec.chain.beta = b;
    }
    if let Some(a) = args.a {
        spec.target.a = a;
    }
    if let Some(b) = args.b {
        spec.target.b = b;
    }
    if args.sigma.is_some() {
        spec.chain.sigma_override = args.sigma;
    }
    if let Some(i) = &args.init {
        spec.chain.init =
            InitMode::parse(i).ok_or_else(|| ExperimentError::Usage(format!("unknown init '{i}'")))?;
    }
    if let Some(t) = args.thin {
        spec.chain.thin = t;
    }
    apply_common(&mut spec, &args.common);
    Ok(spec)
}

fn print_points(result: &SweepResult) {
    println!("ell,acceptance,esjd_coord,esjd_full");
    for p in &result.points {
        println!(
            "{},{},{},{}",
            fmt_real(p.ell),
            fmt_real(p.acceptance.mean),
            fmt_real(p.esjd_coord.mean),
            fmt_real(p.esjd_full.mean)
        );
    }
}

fn sweep_command(spec: &ExperimentSpec) -> Result<(), ExperimentError> {
    let target = spec.target.build()?;
    let result = spec.run_sweep(&target)?;
    print_points(&result);
    for p in emit_sweep(spec, &target, &result)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Fbm {
            hurst,
            points,
            xmin,
            xmax,
            seed,
            method,
            out,
        } => {
            let grid = GridSpec::new(xmin, xmax, points)?;
            let h = HurstExponent::new(hurst)?;
            let path = match method {
                FbmMethod::Circulant => sample_fbm_circulant(&grid, h, seed)?,
                FbmMethod::Cholesky => sample_fbm_cholesky(&grid, h, seed)?,
            };
            create_parent(&out)?;
            path.save_csv(&out)?;
            println!("wrote {} nodes to {}", grid.num_points(), out.display());
        }
        Command::Solve { beta, theta } => {
            let mut t = solve_optimal_a(beta)?;
            if let Some(th) = theta {
                t = t.with_theta(th);
            }
            println!("beta,a_star,acceptance_star,residual");
            println!(
                "{},{},{},{}",
                fmt_real(t.beta),
                fmt_real(t.a_star),
                fmt_real(t.acceptance_star),
                fmt_real(t.residual)
            );
            if let Some(ell) = t.ell_star_given_theta {
                println!("ell_star={}", fmt_real(ell));
            }
        }
        Command::Figure1 { out } => {
            let grid = default_h_grid();
            let mut rows = Vec::new();
            for algo in [Algorithm::Rwm, Algorithm::Mala] {
                for r in figure1_curve(algo, &grid)? {
                    rows.push(format!("{},{},{}", fmt_real(r.hurst), algo.as_str(), fmt_real(r.acceptance_star)));
                }
            }
            let name = file_name(&out);
            let plot = format!(
                "set datafile separator ','\nset xlabel 'H'\nset ylabel 'optimal acceptance'\n\
                 plot '< grep rwm {name}' using 1:3 with lines title 'RWM', \
                 '< grep mala {name}' using 1:3 with lines title 'MALA'\n"
            );
            emit_table(&out, &[format!("version={VERSION}")], "H,component,acceptance_star", &rows, Some(&plot))?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Run(args) => {
            let spec = resolve_run_spec(&args)?;
            let target = spec.target.build()?;
            let cfg = spec.single_run_config();
            let out = run_chain(&cfg, &target)?;
            println!("{}", RunSummary::CSV_HEADER);
            println!("{}", out.summary.csv_row());
            for p in emit_run(&spec, &target, &cfg, &out)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Sweep(args) => sweep_command(&resolve_run_spec(&args)?)?,
        Command::Table1(args) => table_command(Preset::Table1, &args)?,
        Command::Table2(args) => table_command(Preset::Table2, &args)?,
        Command::Table3(args) => table_command(Preset::Table3, &args)?,
        Command::Checks { seed } => {
            let results = run_checks(seed)?;
            let failed = results.iter().filter(|r| !r.passed).count();
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if failed > 0 {
                return Err(ExperimentError::Usage(format!("{failed} check(s) failed")));
            }
        }
    }
    Ok(())
}

fn table_command(preset: Preset, args: &TableArgs) -> Result<(), ExperimentError> {
    let mut spec = ExperimentSpec::preset(preset);
    if args.long {
        spec.chain.steps = 1_000_000;
    }
    apply_common(&mut spec, &args.common);
    if args.print_spec {
        print!("{}", spec.to_text());
        return Ok(());
    }
    sweep_command(&spec)
}

fn configure_threads() -> Result<(), ExperimentError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| ExperimentError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    Ok(())
}

/// Entry point of the `scaling-lab` binary; returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("invalid arguments"));
            return 2;
        }
    };
    let result = configure_threads().and_then(|_| execute(cli));
    match result {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
