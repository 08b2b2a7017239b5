//! Second-moment PCA and metric-aware truncation.
//!
//! Samples are **not** mean-centred. The fitted components are eigenvectors
//! of the raw second moment `K = (1/M) Σ_s μ_s μ_sᵀ`, which differs from what
//! most PCA libraries compute. The leading component of a log-permeability
//! dataset therefore carries the (large) mean level of the fields.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Components whose eigenvalue falls below this fraction of the leading one
/// are dropped as numerical noise.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// `d × M` matrix of samples, one flattened grid per column.
///
/// Grids are flattened row-major: cell `(ix, iy)` lives at `iy * nx + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
    nx: usize,
    ny: usize,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>, nx: usize, ny: usize) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::invalid(
                "sample matrix must have at least one row and one sample",
            ));
        }
        if nx * ny != data.nrows() {
            return Err(Error::DimensionMismatch {
                what: "grid cells vs sample length",
                expected: nx * ny,
                actual: data.nrows(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample matrix"));
        }
        Ok(Self { data, nx, ny })
    }

    /// Builds a matrix from sample vectors on an `nx × ny` grid.
    pub fn from_columns(columns: &[DVector<f64>], nx: usize, ny: usize) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::invalid("empty sample set"));
        }
        let d = columns[0].len();
        if let Some(bad) = columns.iter().find(|c| c.len() != d) {
            return Err(Error::DimensionMismatch {
                what: "sample length",
                expected: d,
                actual: bad.len(),
            });
        }
        Self::new(DMatrix::from_columns(columns), nx, ny)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn count(&self) -> usize {
        self.data.ncols()
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn sample(&self, s: usize) -> DVector<f64> {
        self.data.column(s).into_owned()
    }

    /// Applies a linear map to every sample, keeping the grid shape.
    pub fn map_samples(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> Result<Self> {
        let cols: Vec<DVector<f64>> = (0..self.count()).map(|s| f(&self.sample(s))).collect();
        Self::from_columns(&cols, self.nx, self.ny)
    }
}

/// Inner product under which a basis is orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricDescriptor {
    Euclidean,
    /// `W = I + ε J Jᵀ` for a single objective gradient `J`.
    GradientWeighted {
        gradient: DVector<f64>,
        epsilon: f64,
    },
}

impl MetricDescriptor {
    pub fn gradient_weighted(gradient: DVector<f64>, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::OutOfRange(format!(
                "epsilon must be >= 0, got {epsilon}"
            )));
        }
        if gradient.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        if gradient.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid(
                "gradient-weighted metric needs a nonzero gradient",
            ));
        }
        Ok(MetricDescriptor::GradientWeighted { gradient, epsilon })
    }

    /// `W x`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            MetricDescriptor::Euclidean => x.clone(),
            MetricDescriptor::GradientWeighted { gradient, epsilon } => {
                x + gradient * (epsilon * gradient.dot(x))
            }
        }
    }

    /// `xᵀ W y`.
    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        match self {
            MetricDescriptor::Euclidean => x.dot(y),
            MetricDescriptor::GradientWeighted { gradient, epsilon } => {
                x.dot(y) + epsilon * gradient.dot(x) * gradient.dot(y)
            }
        }
    }

    pub fn norm_squared(&self, x: &DVector<f64>) -> f64 {
        self.inner(x, x)
    }

    /// Dense `W`, for tests and small problems.
    pub fn dense(&self, d: usize) -> DMatrix<f64> {
        let mut w = DMatrix::identity(d, d);
        if let MetricDescriptor::GradientWeighted { gradient, epsilon } = self {
            w += gradient * gradient.transpose() * *epsilon;
        }
        w
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            MetricDescriptor::Euclidean => None,
            MetricDescriptor::GradientWeighted { gradient, .. } => Some(gradient.len()),
        }
    }
}

/// Ordered components with their singular values and the metric in which
/// the components are orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    pub components: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub metric: MetricDescriptor,
    /// Energy of the eigenpairs dropped by rank truncation. Zero for bases
    /// that were not produced by a fit.
    pub discarded_energy: f64,
}

impl SpectralBasis {
    pub fn new(
        components: DMatrix<f64>,
        singular_values: Vec<f64>,
        metric: MetricDescriptor,
    ) -> Result<Self> {
        if components.ncols() != singular_values.len() {
            return Err(Error::DimensionMismatch {
                what: "singular values vs components",
                expected: components.ncols(),
                actual: singular_values.len(),
            });
        }
        if let Some(d) = metric.dim() {
            if d != components.nrows() {
                return Err(Error::DimensionMismatch {
                    what: "metric gradient length",
                    expected: components.nrows(),
                    actual: d,
                });
            }
        }
        if components
            .iter()
            .chain(singular_values.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("spectral basis"));
        }
        Ok(Self {
            components,
            singular_values,
            metric,
            discarded_energy: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn rank(&self) -> usize {
        self.components.ncols()
    }

    pub fn component(&self, i: usize) -> DVector<f64> {
        self.components.column(i).into_owned()
    }

    /// Total spectral energy, including any truncated tail.
    pub fn total_energy(&self) -> f64 {
        self.singular_values.iter().sum::<f64>() + self.discarded_energy
    }

    /// `max |φ_iᵀ W φ_j − δ_ij|` over all component pairs.
    pub fn orthonormality_defect(&self) -> f64 {
        let w_phi = self.metric_image();
        let gram = self.components.transpose() * w_phi;
        let m = self.rank();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `W Φ`, column by column.
    pub fn metric_image(&self) -> DMatrix<f64> {
        match &self.metric {
            MetricDescriptor::Euclidean => self.components.clone(),
            MetricDescriptor::GradientWeighted { gradient, epsilon } => {
                let proj = self.components.transpose() * gradient; // Φᵀ J
                &self.components + gradient * proj.transpose() * *epsilon
            }
        }
    }

    /// Basis restricted to its first `n` components.
    pub fn leading(&self, n: usize) -> Result<Self> {
        check_count(n, self.rank())?;
        Ok(Self {
            components: self.components.columns(0, n).into_owned(),
            singular_values: self.singular_values[..n].to_vec(),
            metric: self.metric.clone(),
            discarded_energy: self.singular_values[n..].iter().sum::<f64>() + self.discarded_energy,
        })
    }
}

/// Split of a vector into its `N`-component reconstruction and residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub coefficients: DVector<f64>,
    pub reconstruction: DVector<f64>,
    pub residual: DVector<f64>,
    pub n: usize,
}

fn check_count(n: usize, available: usize) -> Result<()> {
    if n == 0 || n > available {
        return Err(Error::OutOfRange(format!(
            "component count {n} outside 1..={available}"
        )));
    }
    Ok(())
}

/// Flips `v` so that its largest-magnitude entry is positive (first index on ties).
pub(crate) fn canonical_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    let mut best_abs = -1.0f64;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Second-moment PCA via a thin SVD of `X / √M`.
///
/// Returns a Euclidean basis ordered by descending eigenvalue with the
/// canonical sign convention applied. Components with eigenvalue below
/// [`RANK_TOLERANCE`]`·σ₁` are dropped; their energy is kept in
/// `discarded_energy`.
pub fn pca_fit(samples: &SampleMatrix) -> Result<SpectralBasis> {
    let m_samples = samples.count();
    let scaled = samples.data() / (m_samples as f64).sqrt();
    let svd = nalgebra::linalg::SVD::try_new(scaled, true, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("SVD did not converge"))?;
    let u = svd
        .u
        .ok_or_else(|| Error::numerical("SVD returned no left vectors"))?;
    let s = svd.singular_values;

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let eig: Vec<f64> = order.iter().map(|&i| s[i] * s[i]).collect();
    let lead = eig.first().copied().unwrap_or(0.0);
    if !(lead > 0.0) {
        return Err(Error::numerical("sample set has zero second moment"));
    }
    let keep = eig
        .iter()
        .take_while(|&&v| v >= RANK_TOLERANCE * lead)
        .count();
    let discarded: f64 = eig[keep..].iter().sum();

    let mut columns = Vec::with_capacity(keep);
    for &i in &order[..keep] {
        let mut c = u.column(i).into_owned();
        canonical_sign(&mut c);
        columns.push(c);
    }
    let mut basis = SpectralBasis::new(
        DMatrix::from_columns(&columns),
        eig[..keep].to_vec(),
        MetricDescriptor::Euclidean,
    )?;
    basis.discarded_energy = discarded;
    Ok(basis)
}

/// Projects `mu` onto the first `n` components using the basis' own metric:
/// `a_i = φ_iᵀ W μ`.
pub fn project(basis: &SpectralBasis, mu: &DVector<f64>, n: usize) -> Result<Truncation> {
    check_count(n, basis.rank())?;
    if mu.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            what: "vector vs basis dimension",
            expected: basis.dim(),
            actual: mu.len(),
        });
    }
    let lead = basis.components.columns(0, n);
    let coefficients = lead.transpose() * basis.metric.apply(mu);
    let reconstruction = lead * &coefficients;
    let residual = mu - &reconstruction;
    Ok(Truncation {
        coefficients,
        reconstruction,
        residual,
        n,
    })
}

/// `ω(n) = Σ_{i≤n} σ_i / Σ_i σ_i`.
pub fn energy_fraction(singular_values: &[f64], n: usize) -> Result<f64> {
    check_count(n, singular_values.len())?;
    let total = spectrum_total(singular_values)?;
    let partial: f64 = singular_values[..n].iter().sum();
    Ok((partial / total).clamp(0.0, 1.0))
}

fn spectrum_total(singular_values: &[f64]) -> Result<f64> {
    if singular_values
        .iter()
        .any(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(Error::invalid("spectrum must be finite and nonnegative"));
    }
    let total: f64 = singular_values.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("all-zero spectrum"));
    }
    Ok(total)
}

/// Smallest `n` with `ω(n) ≥ threshold`.
pub fn select_dimension(singular_values: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::OutOfRange(format!(
            "threshold {threshold} outside (0, 1]"
        )));
    }
    let total = spectrum_total(singular_values)?;
    let mut partial = 0.0;
    for (i, s) in singular_values.iter().enumerate() {
        partial += s;
        if partial / total >= threshold {
            return Ok(i + 1);
        }
    }
    Ok(singular_values.len())
}

fn orthonormal_span(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = nalgebra::linalg::SVD::try_new(m.clone(), true, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("SVD did not converge"))?;
    let smax = svd.singular_values.max();
    if svd.singular_values.iter().any(|&s| s <= 1e-12 * smax) {
        return Err(Error::numerical("component columns are linearly dependent"));
    }
    Ok(svd.u.expect("requested"))
}

/// Largest principal angle (radians) between the spans of the first `n`
/// columns of two bases, compared as raw Euclidean column spaces.
pub fn subspace_angle(a: &SpectralBasis, b: &SpectralBasis, n: usize) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            what: "basis dimension",
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    check_count(n, a.rank().min(b.rank()))?;
    let qa = orthonormal_span(&a.components.columns(0, n).into_owned())?;
    let qb = orthonormal_span(&b.components.columns(0, n).into_owned())?;
    let cross = qa.transpose() * &qb;
    // sin from the out-of-span part keeps small angles accurate.
    let outside = &qb - &qa * &cross;
    let sin = outside.singular_values().max().min(1.0);
    let cos = cross.singular_values().min().clamp(0.0, 1.0);
    Ok(sin.atan2(cos))
}

/// Modified Gram–Schmidt under `metric`, in component order.
///
/// Singular values are carried over unchanged.
pub fn orthonormalize(basis: &SpectralBasis, metric: &MetricDescriptor) -> Result<SpectralBasis> {
    let m = basis.rank();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut v = basis.component(i);
        for q in &cols {
            let r = metric.inner(q, &v);
            v -= q * r;
        }
        let norm = metric.norm_squared(&v).sqrt();
        if !(norm > 1e-14) {
            return Err(Error::numerical(format!(
                "component {i} is dependent on its predecessors"
            )));
        }
        cols.push(v / norm);
    }
    let mut out = SpectralBasis::new(
        DMatrix::from_columns(&cols),
        basis.singular_values.clone(),
        metric.clone(),
    )?;
    out.discarded_energy = basis.discarded_energy;
    Ok(out)
}

/// The first `n` components re-orthonormalized under the basis's own
/// metric.
///
/// Projecting with the result gives the metric-orthogonal projection onto
/// the span of those components, which for an already orthonormal basis is
/// the plain coefficient rule. Use it for bases that are orthonormal only
/// approximately.
pub fn span_basis(basis: &SpectralBasis, n: usize) -> Result<SpectralBasis> {
    orthonormalize(&basis.leading(n)?, &basis.metric)
}

/// Mean over samples of `‖residual(n)‖²` measured in `metric`.
pub fn mean_residual_energy(
    basis: &SpectralBasis,
    samples: &SampleMatrix,
    n: usize,
    metric: &MetricDescriptor,
) -> Result<f64> {
    let mut total = 0.0;
    for s in 0..samples.count() {
        let t = project(basis, &samples.sample(s), n)?;
        total += metric.norm_squared(&t.residual);
    }
    Ok(total / samples.count() as f64)
}
