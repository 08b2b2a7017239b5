//! Python bindings for `ospca`.
//!
//! Vectors cross the boundary as lists of floats and sample sets as lists
//! of samples, each of length `nx * ny`. Bases are wrapped in [`Basis`].

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ospca::harness::{run_test_experiment, run_train_experiment, ExperimentConfig};
use ospca::{
    FdStep, GradientProbe, MetricDescriptor, SampleMatrix, SpectralBasis, SurfaceParams,
    TailRanking,
};

fn to_py(e: ospca::Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn vector(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

fn samples(data: Vec<Vec<f64>>, nx: usize, ny: usize) -> PyResult<SampleMatrix> {
    let cols: Vec<DVector<f64>> = data.into_iter().map(vector).collect();
    SampleMatrix::from_columns(&cols, nx, ny).map_err(to_py)
}

fn probe(
    basis: &SpectralBasis,
    gradient: Vec<f64>,
    epsilon: f64,
    eta: Option<Vec<f64>>,
) -> PyResult<GradientProbe> {
    let eta = eta
        .map(vector)
        .unwrap_or_else(|| DVector::zeros(basis.dim()));
    GradientProbe::new(eta, vector(gradient), epsilon, basis).map_err(to_py)
}

/// An ordered set of components with their singular values and metric.
#[pyclass(module = "ospca_py", frozen)]
pub struct Basis {
    inner: SpectralBasis,
}

#[pymethods]
impl Basis {
    #[getter]
    fn singular_values(&self) -> Vec<f64> {
        self.inner.singular_values.clone()
    }

    /// Components as a list of vectors.
    #[getter]
    fn components(&self) -> Vec<Vec<f64>> {
        self.inner
            .components
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn discarded_energy(&self) -> f64 {
        self.inner.discarded_energy
    }

    /// `"euclidean"` or `"gradient"`.
    #[getter]
    fn metric(&self) -> &'static str {
        match self.inner.metric {
            MetricDescriptor::Euclidean => "euclidean",
            MetricDescriptor::GradientWeighted { .. } => "gradient",
        }
    }

    fn orthonormality_defect(&self) -> f64 {
        self.inner.orthonormality_defect()
    }

    fn energy_fraction(&self, n: usize) -> PyResult<f64> {
        ospca::energy_fraction(&self.inner.singular_values, n).map_err(to_py)
    }

    /// Returns `(coefficients, reconstruction, residual)` for the first `n`
    /// components under the basis metric.
    fn project(&self, mu: Vec<f64>, n: usize) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let t = ospca::project(&self.inner, &vector(mu), n).map_err(to_py)?;
        Ok((
            t.coefficients.as_slice().to_vec(),
            t.reconstruction.as_slice().to_vec(),
            t.residual.as_slice().to_vec(),
        ))
    }

    /// Metric-orthonormal basis of the span of the first `n` components.
    fn span(&self, n: usize) -> PyResult<Basis> {
        ospca::span_basis(&self.inner, n)
            .map(|inner| Basis { inner })
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Basis(dim={}, rank={}, metric={})",
            self.inner.dim(),
            self.inner.rank(),
            self.metric()
        )
    }
}

/// Steady single-phase five-spot model.
#[pyclass(module = "ospca_py")]
pub struct Reservoir {
    inner: ospca::ReservoirCase,
}

#[pymethods]
impl Reservoir {
    #[new]
    #[pyo3(signature = (nx, ny, observations=None))]
    fn new(nx: usize, ny: usize, observations: Option<Vec<f64>>) -> PyResult<Self> {
        let mut inner = ospca::ReservoirCase::five_spot(nx, ny).map_err(to_py)?;
        if let Some(obs) = observations {
            inner = inner.with_observations(vector(obs)).map_err(to_py)?;
        }
        Ok(Self { inner })
    }

    #[getter]
    fn well_names(&self) -> Vec<String> {
        self.inner.wells.iter().map(|w| w.name.clone()).collect()
    }

    #[getter]
    fn observations(&self) -> Vec<f64> {
        self.inner.observations.as_slice().to_vec()
    }

    #[setter]
    fn set_observations(&mut self, obs: Vec<f64>) -> PyResult<()> {
        self.inner = self
            .inner
            .clone()
            .with_observations(vector(obs))
            .map_err(to_py)?;
        Ok(())
    }

    /// Well rates in m³/s, positive into the reservoir.
    fn simulate(&self, mu: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner
            .simulate(&vector(mu))
            .map(|q| q.as_slice().to_vec())
            .map_err(to_py)
    }

    fn objective(&self, mu: Vec<f64>) -> PyResult<f64> {
        self.inner.objective(&vector(mu)).map_err(to_py)
    }

    /// Central-difference gradient along the first `count` components of
    /// `basis`. Returns `(gradient, coefficients)`.
    #[pyo3(signature = (basis, eta, count, step=0.01))]
    fn gradient(
        &self,
        basis: &Basis,
        eta: Vec<f64>,
        count: usize,
        step: f64,
    ) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let p = ospca::fd_gradient_central(
            &self.inner,
            &basis.inner,
            &vector(eta),
            count,
            FdStep::SigmaScaled(step),
        )
        .map_err(to_py)?;
        Ok((p.gradient.as_slice().to_vec(), p.b.as_slice().to_vec()))
    }
}

#[pyfunction]
fn pca_fit(data: Vec<Vec<f64>>, nx: usize, ny: usize) -> PyResult<Basis> {
    let s = samples(data, nx, ny)?;
    ospca::pca_fit(&s)
        .map(|inner| Basis { inner })
        .map_err(to_py)
}

#[pyfunction]
fn gspca_fit(
    data: Vec<Vec<f64>>,
    nx: usize,
    ny: usize,
    gradient: Vec<f64>,
    epsilon: f64,
) -> PyResult<Basis> {
    let s = samples(data, nx, ny)?;
    ospca::gspca_fit(&s, &vector(gradient), epsilon)
        .map(|inner| Basis { inner })
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (basis, gradient, epsilon, sort=false))]
fn agspca_fit(basis: &Basis, gradient: Vec<f64>, epsilon: f64, sort: bool) -> PyResult<Basis> {
    let p = probe(&basis.inner, gradient, epsilon, None)?;
    let fitted = if sort {
        ospca::agspca_fit_sorted(&basis.inner, &p)
    } else {
        ospca::agspca_fit(&basis.inner, &p)
    };
    fitted.map(|(inner, _)| Basis { inner }).map_err(to_py)
}

/// Zero-based tail positions chosen for the extension.
#[pyfunction]
#[pyo3(signature = (basis, gradient, n, count, ranking="energy"))]
fn egspca_select(
    basis: &Basis,
    gradient: Vec<f64>,
    n: usize,
    count: usize,
    ranking: &str,
) -> PyResult<Vec<usize>> {
    let ranking: TailRanking = ranking.parse().map_err(to_py)?;
    let p = probe(&basis.inner, gradient, 0.0, None)?;
    ospca::egspca_select_ranked(&p, &basis.inner.singular_values, n, count, ranking).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (basis, gradient, n, count, ranking="energy"))]
fn egspca_extend(
    basis: &Basis,
    gradient: Vec<f64>,
    n: usize,
    count: usize,
    ranking: &str,
) -> PyResult<Basis> {
    let ranking: TailRanking = ranking.parse().map_err(to_py)?;
    let p = probe(&basis.inner, gradient, 0.0, None)?;
    ospca::egspca_extend_ranked(&basis.inner, &p, n, count, ranking)
        .map(|inner| Basis { inner })
        .map_err(to_py)
}

#[pyfunction]
fn select_dimension(singular_values: Vec<f64>, threshold: f64) -> PyResult<usize> {
    ospca::select_dimension(&singular_values, threshold).map_err(to_py)
}

/// Largest principal angle in radians between the first `n` components.
#[pyfunction]
fn subspace_angle(a: &Basis, b: &Basis, n: usize) -> PyResult<f64> {
    ospca::subspace_angle(&a.inner, &b.inner, n).map_err(to_py)
}

/// `count` log-permeability fields on an `n × n` grid.
#[pyfunction]
#[pyo3(signature = (count, n=21, rl=3.0, h=1.0, cl=1.0, seed=1, k_min=1.0, k_max=100.0))]
#[allow(clippy::too_many_arguments)]
fn make_dataset(
    count: usize,
    n: usize,
    rl: f64,
    h: f64,
    cl: f64,
    seed: u64,
    k_min: f64,
    k_max: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let params = SurfaceParams::new(n, rl, h, cl, seed).map_err(to_py)?;
    let data = ospca::make_dataset(count, &params, k_min, k_max).map_err(to_py)?;
    Ok(data
        .data()
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect())
}

/// Raw Gaussian surface as a list of rows.
#[pyfunction]
#[pyo3(signature = (n, rl, h, cl, seed))]
fn gaussian_surface(n: usize, rl: f64, h: f64, cl: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let params = SurfaceParams::new(n, rl, h, cl, seed).map_err(to_py)?;
    let t: DMatrix<f64> = ospca::gaussian_surface(&params).map_err(to_py)?;
    Ok(t.row_iter().map(|r| r.iter().copied().collect()).collect())
}

fn config(seed: Option<u64>, overrides: Vec<String>) -> PyResult<ExperimentConfig> {
    ExperimentConfig::load(None, &overrides, seed).map_err(to_py)
}

/// Train-set scores as a JSON string.
#[pyfunction]
#[pyo3(signature = (seed=None, overrides=Vec::new()))]
fn train_scores(seed: Option<u64>, overrides: Vec<String>) -> PyResult<String> {
    let report = run_train_experiment(&config(seed, overrides)?).map_err(to_py)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Test-sample scores as a JSON string.
#[pyfunction]
#[pyo3(signature = (seed=None, overrides=Vec::new()))]
fn test_scores(seed: Option<u64>, overrides: Vec<String>) -> PyResult<String> {
    let report = run_test_experiment(&config(seed, overrides)?).map_err(to_py)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn ospca_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Basis>()?;
    m.add_class::<Reservoir>()?;
    m.add_function(wrap_pyfunction!(pca_fit, m)?)?;
    m.add_function(wrap_pyfunction!(gspca_fit, m)?)?;
    m.add_function(wrap_pyfunction!(agspca_fit, m)?)?;
    m.add_function(wrap_pyfunction!(egspca_select, m)?)?;
    m.add_function(wrap_pyfunction!(egspca_extend, m)?)?;
    m.add_function(wrap_pyfunction!(select_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(subspace_angle, m)?)?;
    m.add_function(wrap_pyfunction!(make_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_surface, m)?)?;
    m.add_function(wrap_pyfunction!(train_scores, m)?)?;
    m.add_function(wrap_pyfunction!(test_scores, m)?)?;
    Ok(())
}
