//! Seeded Gaussian-correlated random surfaces and their rescaling to
//! log-permeability.
//!
//! A surface is white noise filtered by periodic convolution with
//! `exp(-2 (x² + y²) / cl²)`, then shifted to zero mean and scaled to rms
//! `h`. The filtered field has the Gaussian autocorrelation
//! `exp(-r² / cl²)`, so the correlation at lag `cl` is `e⁻¹`.
//!
//! Per-sample seeds are derived with [`sample_seed`]:
//!
//! ```text
//! z = seed XOR index
//! z = z + 0x9E3779B97F4A7C15            (wrapping)
//! z = (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z XOR (z >> 27)) * 0x94D049BB133111EB
//! z = z XOR (z >> 31)
//! ```
//!
//! and feed a ChaCha8 stream from which `n²` standard normals are drawn in
//! row-major order.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::decomposition::SampleMatrix;
use crate::error::{Error, Result};

/// Parameters of a square random surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceParams {
    /// Grid points per side.
    pub n: usize,
    /// Side length of the surface.
    pub rl: f64,
    /// Rms height.
    pub h: f64,
    /// Correlation length, same units as `rl`.
    pub cl: f64,
    pub seed: u64,
}

impl SurfaceParams {
    pub fn new(n: usize, rl: f64, h: f64, cl: f64, seed: u64) -> Result<Self> {
        let p = Self { n, rl, h, cl, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!(
                "surface needs n >= 2, got {}",
                self.n
            )));
        }
        for (name, v) in [("rl", self.rl), ("h", self.h), ("cl", self.cl)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "surface parameter {name} must be positive, got {v}"
                )));
            }
        }
        if self.cl >= self.rl {
            return Err(Error::invalid(format!(
                "correlation length {} must be below side length {}",
                self.cl, self.rl
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// One generated field: raw surface, log-permeability and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub tau: DMatrix<f64>,
    pub mu: DMatrix<f64>,
    pub params: SurfaceParams,
    pub index: u64,
}

impl FieldSample {
    /// Row-major flattening of `mu`.
    pub fn mu_vector(&self) -> DVector<f64> {
        flatten_row_major(&self.mu)
    }
}

/// splitmix64 finalizer applied to `seed ^ index`.
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    let mut z = (seed ^ index).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Grid `(row, col)` maps to vector index `row * ncols + col`.
pub fn flatten_row_major(grid: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(grid.len(), grid.transpose().iter().copied())
}

pub fn unflatten_row_major(v: &DVector<f64>, nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if v.len() != nrows * ncols {
        return Err(Error::DimensionMismatch {
            what: "flattened grid",
            expected: nrows * ncols,
            actual: v.len(),
        });
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, v.as_slice()))
}

fn fft2(data: &mut [Complex64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    // rows
    fft.process(data);
    // columns
    let mut col = vec![Complex64::default(); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = data[r * n + c];
        }
        fft.process(&mut col);
        for r in 0..n {
            data[r * n + c] = col[r];
        }
    }
}

/// Filter weight at periodic grid offset `(i, j)`.
fn kernel(i: usize, j: usize, n: usize, dx: f64, cl: f64) -> f64 {
    let wrap = |k: usize| {
        let k = k as f64;
        let n = n as f64;
        if k <= n / 2.0 {
            k
        } else {
            k - n
        }
    };
    let x = wrap(i) * dx;
    let y = wrap(j) * dx;
    (-2.0 * (x * x + y * y) / (cl * cl)).exp()
}

/// Zero-mean Gaussian-correlated surface with rms exactly `h`.
pub fn gaussian_surface(params: &SurfaceParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    let n = params.n;
    let dx = params.rl / n as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut noise: Vec<Complex64> = (0..n * n)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    let mut filter: Vec<Complex64> = (0..n * n)
        .map(|k| Complex64::new(kernel(k / n, k % n, n, dx, params.cl), 0.0))
        .collect();

    fft2(&mut noise, n, false);
    fft2(&mut filter, n, false);
    for (a, b) in noise.iter_mut().zip(&filter) {
        *a *= b;
    }
    fft2(&mut noise, n, true);

    let vals: Vec<f64> = noise.iter().map(|c| c.re).collect();
    let count = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / count;
    let rms = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count).sqrt();
    if !(rms > 0.0) {
        return Err(Error::numerical("filtered surface is constant"));
    }
    let scale = params.h / rms;
    Ok(DMatrix::from_row_iterator(
        n,
        n,
        vals.into_iter().map(|v| (v - mean) * scale),
    ))
}

/// Affine map of `[τ_min, τ_max]` (extremes of this grid) onto
/// `[ln K_min, ln K_max]`.
pub fn rescale_log_perm(tau: &DMatrix<f64>, k_min: f64, k_max: f64) -> Result<DMatrix<f64>> {
    if !(k_min > 0.0 && k_max > k_min && k_max.is_finite()) {
        return Err(Error::invalid(format!(
            "permeability bounds need 0 < Kmin < Kmax, got {k_min}, {k_max}"
        )));
    }
    if tau.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("surface"));
    }
    let t_min = tau.min();
    let t_max = tau.max();
    let range = t_max - t_min;
    if !(range > 0.0) {
        return Err(Error::invalid("surface is constant; cannot rescale"));
    }
    let span = (k_max / k_min).ln();
    let base = k_min.ln();
    Ok(tau.map(|t| span * (t - t_min) / range + base))
}

/// Generates sample `index` of a dataset seeded by `params.seed`.
pub fn generate_sample(
    params: &SurfaceParams,
    index: u64,
    k_min: f64,
    k_max: f64,
) -> Result<FieldSample> {
    let seeded = params.with_seed(sample_seed(params.seed, index));
    let tau = gaussian_surface(&seeded)?;
    let mu = rescale_log_perm(&tau, k_min, k_max)?;
    Ok(FieldSample {
        tau,
        mu,
        params: *params,
        index,
    })
}

/// `count` independent log-permeability samples as a `n² × count` matrix.
pub fn make_dataset(
    count: usize,
    params: &SurfaceParams,
    k_min: f64,
    k_max: f64,
) -> Result<SampleMatrix> {
    if count == 0 {
        return Err(Error::invalid("dataset needs at least one sample"));
    }
    params.validate()?;
    let columns = (0..count as u64)
        .into_par_iter()
        .map(|i| generate_sample(params, i, k_min, k_max).map(|s| s.mu_vector()))
        .collect::<Result<Vec<_>>>()?;
    SampleMatrix::from_columns(&columns, params.n, params.n)
}
