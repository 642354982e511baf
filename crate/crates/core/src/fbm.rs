//! Two-sided fractional Brownian motion on a uniform grid.
//!
//! Two generators are provided. [`sample_fbm_cholesky`] factorizes the exact
//! covariance restricted to the grid and is kept as an oracle for small grids.
//! [`sample_fbm_circulant`] draws stationary fractional Gaussian noise over the
//! whole grid by circulant embedding and sums it outward from the node at the
//! origin. Stationary increments together with `B(0) = 0` reproduce the
//! two-sided covariance exactly.
//!
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat) driven
//! by `ChaCha8Rng`, so paths are bit-reproducible from `(grid, H, seed)`.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::seeding::rng_from_seed;

/// Largest grid accepted by the dense Cholesky generator.
pub const CHOLESKY_MAX_POINTS: usize = 4096;

/// Diagonal jitter tried once before a factorization is declared failed.
pub const CHOLESKY_JITTER: f64 = 1e-12;

/// Relative tolerance on negative circulant eigenvalues.
pub const CIRCULANT_EIGEN_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum FbmError {
    #[error("Hurst exponent must lie in (0, 1), got {0}")]
    InvalidHurst(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid has {points} points, dense factorization supports at most {max}")]
    TooLarge { points: usize, max: usize },
    #[error("covariance matrix is not positive definite even after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error(
        "circulant embedding has eigenvalue {min:e} (relative {relative:e}); \
         try doubling the embedding length"
    )]
    NegativeEigenvalue { min: f64, relative: f64 },
    #[error("x = {x} lies outside the path domain [{min}, {max}]")]
    OutOfRange { x: f64, min: f64, max: f64 },
    #[error("path file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Hurst exponent `H` in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HurstExponent(f64);

impl HurstExponent {
    pub fn new(value: f64) -> Result<Self, FbmError> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(FbmError::InvalidHurst(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for HurstExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Uniform grid whose node `zero_index` sits exactly at the origin.
///
/// The requested end points are snapped so that `0` is a node: the spacing
/// `(x_max - x_min) / (num_points - 1)` is kept and the grid is shifted by
/// less than half a cell. Node `k` is at `(k - zero_index) * spacing`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    x_min: f64,
    x_max: f64,
    num_points: usize,
    spacing: f64,
    zero_index: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, num_points: usize) -> Result<Self, FbmError> {
        if !(x_min.is_finite() && x_max.is_finite()) || !(x_min < 0.0 && 0.0 < x_max) {
            return Err(FbmError::InvalidGrid(format!(
                "need x_min < 0 < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if num_points < 3 {
            return Err(FbmError::InvalidGrid(format!(
                "need at least 3 points, got {num_points}"
            )));
        }
        let spacing = (x_max - x_min) / (num_points - 1) as f64;
        let zero_index = (-x_min / spacing).round() as usize;
        if zero_index == 0 || zero_index >= num_points - 1 {
            return Err(FbmError::InvalidGrid(
                "origin does not fall strictly inside the grid".into(),
            ));
        }
        Ok(Self {
            x_min: -(zero_index as f64) * spacing,
            x_max: (num_points - 1 - zero_index) as f64 * spacing,
            num_points,
            spacing,
            zero_index,
        })
    }

    /// Grid on `[-half_width, half_width]`; exact when `num_points` is odd.
    pub fn symmetric(half_width: f64, num_points: usize) -> Result<Self, FbmError> {
        Self::new(-half_width, half_width, num_points)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn zero_index(&self) -> usize {
        self.zero_index
    }

    pub fn node(&self, k: usize) -> f64 {
        (k as f64 - self.zero_index as f64) * self.spacing
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_points).map(move |k| self.node(k))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Cell index `k` and offset `t = x - node(k)` with `0 <= k < num_points - 1`.
    pub fn locate(&self, x: f64) -> Result<(usize, f64), FbmError> {
        if !self.contains(x) {
            return Err(FbmError::OutOfRange {
                x,
                min: self.x_min,
                max: self.x_max,
            });
        }
        let pos = x / self.spacing + self.zero_index as f64;
        let k = (pos.floor().max(0.0) as usize).min(self.num_points - 2);
        Ok((k, x - self.node(k)))
    }
}

/// Two-sided covariance `(|x|^{2H} + |y|^{2H} - |x - y|^{2H}) / 2`.
pub fn fbm_covariance(x: f64, y: f64, hurst: HurstExponent) -> f64 {
    let two_h = 2.0 * hurst.value();
    0.5 * (x.abs().powf(two_h) + y.abs().powf(two_h) - (x - y).abs().powf(two_h))
}

/// A frozen fBM realization on a grid, pinned to zero at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    hurst: HurstExponent,
    grid: GridSpec,
    values: Vec<f64>,
    seed: u64,
}

impl FbmPath {
    /// Wraps explicit node values; the node at the origin must be exactly zero.
    pub fn from_values(
        hurst: HurstExponent,
        grid: GridSpec,
        values: Vec<f64>,
        seed: u64,
    ) -> Result<Self, FbmError> {
        if values.len() != grid.num_points() {
            return Err(FbmError::InvalidGrid(format!(
                "{} values for {} nodes",
                values.len(),
                grid.num_points()
            )));
        }
        if values[grid.zero_index()] != 0.0 {
            return Err(FbmError::InvalidGrid("path is not zero at the origin".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FbmError::InvalidGrid("path has non-finite values".into()));
        }
        Ok(Self {
            hurst,
            grid,
            values,
            seed,
        })
    }

    pub fn hurst(&self) -> HurstExponent {
        self.hurst
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Piecewise-linear interpolation of the node values.
    pub fn eval(&self, x: f64) -> Result<f64, FbmError> {
        let (k, t) = self.grid.locate(x)?;
        let a = self.values[k];
        let b = self.values[k + 1];
        Ok(a + (b - a) * (t / self.grid.spacing))
    }

    /// Writes `# hurst=<H> seed=<s>`, the header `x,value` and one row per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), FbmError> {
        writeln!(out, "# hurst={} seed={}", self.hurst.value(), self.seed)?;
        writeln!(out, "x,value")?;
        for (x, v) in self.grid.nodes().zip(&self.values) {
            writeln!(out, "{x:.16e},{v:.16e}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), FbmError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, FbmError> {
        let mut lines = input.lines();
        let meta = lines
            .next()
            .ok_or_else(|| FbmError::Parse("empty file".into()))??;
        let meta = meta
            .strip_prefix('#')
            .ok_or_else(|| FbmError::Parse("missing metadata line".into()))?;
        let mut hurst = None;
        let mut seed = None;
        for token in meta.split_whitespace() {
            match token.split_once('=') {
                Some(("hurst", v)) => hurst = v.parse::<f64>().ok(),
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                _ => {}
            }
        }
        let hurst = HurstExponent::new(
            hurst.ok_or_else(|| FbmError::Parse("metadata lacks hurst".into()))?,
        )?;
        let seed = seed.ok_or_else(|| FbmError::Parse("metadata lacks seed".into()))?;
        let header = lines
            .next()
            .ok_or_else(|| FbmError::Parse("missing header".into()))??;
        if header.trim() != "x,value" {
            return Err(FbmError::Parse(format!("unexpected header {header:?}")));
        }
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (x, v) = line
                .split_once(',')
                .ok_or_else(|| FbmError::Parse(format!("row {}: expected x,value", lineno + 3)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| FbmError::Parse(format!("row {}: {e}", lineno + 3)))
            };
            xs.push(parse(x)?);
            values.push(parse(v)?);
        }
        if xs.len() < 3 {
            return Err(FbmError::Parse("fewer than 3 rows".into()));
        }
        let grid = GridSpec::new(xs[0], xs[xs.len() - 1], xs.len())?;
        Self::from_values(hurst, grid, values, seed)
    }

    pub fn load_csv(path: &Path) -> Result<Self, FbmError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Exact sampler: Cholesky factor of the covariance over the non-zero nodes.
pub fn sample_fbm_cholesky(
    grid: &GridSpec,
    hurst: HurstExponent,
    seed: u64,
) -> Result<FbmPath, FbmError> {
    let sampler = CholeskyFbm::new(grid, hurst)?;
    Ok(sampler.sample(seed))
}

/// Fast sampler: circulant-embedded fractional Gaussian noise summed from the origin.
pub fn sample_fbm_circulant(
    grid: &GridSpec,
    hurst: HurstExponent,
    seed: u64,
) -> Result<FbmPath, FbmError> {
    let sampler = CirculantFbm::new(grid, hurst)?;
    Ok(sampler.sample(seed))
}

/// Reusable Cholesky generator for a fixed grid and Hurst exponent.
pub struct CholeskyFbm {
    grid: GridSpec,
    hurst: HurstExponent,
    factor: DMatrix<f64>,
}

impl CholeskyFbm {
    pub fn new(grid: &GridSpec, hurst: HurstExponent) -> Result<Self, FbmError> {
        let n = grid.num_points();
        if n > CHOLESKY_MAX_POINTS {
            return Err(FbmError::TooLarge {
                points: n,
                max: CHOLESKY_MAX_POINTS,
            });
        }
        let xs: Vec<f64> = (0..n)
            .filter(|&k| k != grid.zero_index())
            .map(|k| grid.node(k))
            .collect();
        let cov = DMatrix::from_fn(xs.len(), xs.len(), |i, j| {
            fbm_covariance(xs[i], xs[j], hurst)
        });
        let factor = match cov.clone().cholesky() {
            Some(c) => c.l(),
            None => {
                let jittered = cov + DMatrix::identity(xs.len(), xs.len()) * CHOLESKY_JITTER;
                jittered
                    .cholesky()
                    .ok_or(FbmError::NotPositiveDefinite {
                        jitter: CHOLESKY_JITTER,
                    })?
                    .l()
            }
        };
        Ok(Self {
            grid: *grid,
            hurst,
            factor,
        })
    }

    pub fn sample(&self, seed: u64) -> FbmPath {
        let mut rng = rng_from_seed(seed);
        let m = self.factor.nrows();
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let draw = &self.factor * z;
        let zero = self.grid.zero_index();
        let mut values = Vec::with_capacity(m + 1);
        values.extend_from_slice(&draw.as_slice()[..zero]);
        values.push(0.0);
        values.extend_from_slice(&draw.as_slice()[zero..]);
        FbmPath {
            hurst: self.hurst,
            grid: self.grid,
            values,
            seed,
        }
    }
}

/// Reusable circulant-embedding generator.
///
/// Unit-spacing fractional Gaussian noise with autocovariance
/// `((k+1)^{2H} - 2k^{2H} + (k-1)^{2H}) / 2` is embedded in a circulant of
/// length `2L`, `L` the next power of two at or above the number of
/// increments, then scaled by `spacing^H`.
pub struct CirculantFbm {
    grid: GridSpec,
    hurst: HurstExponent,
    sqrt_eigs: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl CirculantFbm {
    pub fn new(grid: &GridSpec, hurst: HurstExponent) -> Result<Self, FbmError> {
        let increments = grid.num_points() - 1;
        let half = increments.next_power_of_two();
        let len = 2 * half;
        let two_h = 2.0 * hurst.value();
        let acov = |k: usize| {
            let k = k as f64;
            0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
        };
        let mut row: Vec<Complex<f64>> = (0..len)
            .map(|j| {
                let lag = if j <= half { j } else { len - j };
                Complex::new(acov(lag), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        fft.process(&mut row);
        let max = row.iter().map(|c| c.re).fold(f64::MIN, f64::max);
        let min = row.iter().map(|c| c.re).fold(f64::MAX, f64::min);
        if min < -CIRCULANT_EIGEN_TOL * max {
            return Err(FbmError::NegativeEigenvalue {
                min,
                relative: min / max,
            });
        }
        let sqrt_eigs = row
            .iter()
            .map(|c| (c.re.max(0.0) / len as f64).sqrt())
            .collect();
        Ok(Self {
            grid: *grid,
            hurst,
            sqrt_eigs,
            fft,
        })
    }

    /// One fractional Gaussian noise vector at the grid spacing.
    pub fn sample_increments(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let mut buf: Vec<Complex<f64>> = self
            .sqrt_eigs
            .iter()
            .map(|&s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex::new(s * re, s * im)
            })
            .collect();
        self.fft.process(&mut buf);
        let scale = self.grid.spacing().powf(self.hurst.value());
        buf[..self.grid.num_points() - 1]
            .iter()
            .map(|c| scale * c.re)
            .collect()
    }

    pub fn sample(&self, seed: u64) -> FbmPath {
        let inc = self.sample_increments(seed);
        let n = self.grid.num_points();
        let zero = self.grid.zero_index();
        let mut values = vec![0.0; n];
        for k in zero + 1..n {
            values[k] = values[k - 1] + inc[k - 1];
        }
        for k in (0..zero).rev() {
            values[k] = values[k + 1] - inc[k];
        }
        FbmPath {
            hurst: self.hurst,
            grid: self.grid,
            values,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstExponent {
        HurstExponent::new(v).unwrap()
    }

    #[test]
    fn covariance_examples() {
        for hv in [0.1, 0.5, 0.9] {
            assert!((fbm_covariance(1.0, 1.0, h(hv)) - 1.0).abs() < 1e-15);
            assert_eq!(fbm_covariance(2.5, 0.0, h(hv)), 0.0);
        }
        assert!(fbm_covariance(1.0, -1.0, h(0.5)).abs() < 1e-15);
        assert_eq!(
            fbm_covariance(0.3, -1.7, h(0.3)),
            fbm_covariance(-1.7, 0.3, h(0.3))
        );
    }

    #[test]
    fn hurst_bounds() {
        assert!(HurstExponent::new(0.0).is_err());
        assert!(HurstExponent::new(1.0).is_err());
        assert!(HurstExponent::new(f64::NAN).is_err());
    }

    #[test]
    fn grid_snaps_origin_onto_a_node() {
        let g = GridSpec::new(-9.0, 9.0, 200_000).unwrap();
        assert_eq!(g.node(g.zero_index()), 0.0);
        assert!((g.x_min() + 9.0).abs() < g.spacing());
        assert!((g.spacing() - 18.0 / 199_999.0).abs() < 1e-18);
        let odd = GridSpec::symmetric(1.0, 3).unwrap();
        assert_eq!(odd.nodes().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
        assert!(GridSpec::new(0.0, 1.0, 10).is_err());
        assert!(GridSpec::new(-1.0, 1.0, 2).is_err());
    }

    #[test]
    fn eval_interpolates_and_rejects_outside() {
        let g = GridSpec::symmetric(1.0, 3).unwrap();
        let p = FbmPath::from_values(h(0.5), g, vec![1.0, 0.0, 3.0], 0).unwrap();
        assert_eq!(p.eval(-1.0).unwrap(), 1.0);
        assert_eq!(p.eval(0.0).unwrap(), 0.0);
        assert_eq!(p.eval(1.0).unwrap(), 3.0);
        assert!((p.eval(0.5).unwrap() - 1.5).abs() < 1e-15);
        let q = FbmPath::from_values(h(0.5), GridSpec::symmetric(2.0, 5).unwrap(), vec![0.5, 1.0, 0.0, 1.0, 3.0], 0)
            .unwrap();
        assert!((q.eval(1.5).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(p.eval(1.5), Err(FbmError::OutOfRange { .. })));
    }

    #[test]
    fn three_node_brownian_sides_are_standard_normal() {
        let g = GridSpec::symmetric(1.0, 3).unwrap();
        let gen = CholeskyFbm::new(&g, h(0.5)).unwrap();
        let reps = 20_000;
        let (mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0);
        for seed in 0..reps {
            let p = gen.sample(seed);
            assert_eq!(p.values()[1], 0.0);
            let (a, b) = (p.values()[0], p.values()[2]);
            s11 += a * a;
            s22 += b * b;
            s12 += a * b;
        }
        let n = reps as f64;
        let se = (2.0 / n).sqrt();
        assert!((s11 / n - 1.0).abs() < 4.0 * se);
        assert!((s22 / n - 1.0).abs() < 4.0 * se);
        assert!((s12 / n).abs() < 4.0 / n.sqrt());
    }

    #[test]
    fn generators_are_deterministic_and_anchored() {
        let g = GridSpec::new(-3.0, 2.0, 501).unwrap();
        for hv in [0.25, 0.75] {
            let a = sample_fbm_circulant(&g, h(hv), 11).unwrap();
            let b = sample_fbm_circulant(&g, h(hv), 11).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.values()[g.zero_index()], 0.0);
            assert_eq!(a.eval(0.0).unwrap(), 0.0);
            let c = sample_fbm_cholesky(&g, h(hv), 11).unwrap();
            assert_eq!(c, sample_fbm_cholesky(&g, h(hv), 11).unwrap());
            assert_eq!(c.values()[g.zero_index()], 0.0);
        }
    }

    #[test]
    fn cholesky_guard() {
        let g = GridSpec::symmetric(1.0, CHOLESKY_MAX_POINTS + 1).unwrap();
        assert!(matches!(
            sample_fbm_cholesky(&g, h(0.5), 0),
            Err(FbmError::TooLarge { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let g = GridSpec::new(-1.0, 2.0, 64).unwrap();
        let p = sample_fbm_circulant(&g, h(0.3), 5).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# hurst=0.3 seed=5\nx,value\n"));
        let q = FbmPath::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(q.values(), p.values());
        assert_eq!(q.grid().zero_index(), p.grid().zero_index());
        assert!((q.grid().spacing() / p.grid().spacing() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn csv_rejects_garbage() {
        let bad = "# hurst=0.5 seed=1\nx,value\n-1,0.1\n0,0.2\n1,0.3\n";
        assert!(FbmPath::read_csv(std::io::Cursor::new(bad)).is_err());
        let no_meta = "x,value\n-1,0\n0,0\n1,0\n";
        assert!(FbmPath::read_csv(std::io::Cursor::new(no_meta)).is_err());
    }
}
