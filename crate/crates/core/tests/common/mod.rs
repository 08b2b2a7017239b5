//! Shared fixtures and independent reference implementations.
#![allow(dead_code)]

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ospca::harness::{prepare, ExperimentConfig, Prepared};
use ospca::{MetricDescriptor, SampleMatrix, SpectralBasis};

pub fn prepared() -> &'static Prepared {
    static PREP: OnceLock<Prepared> = OnceLock::new();
    PREP.get_or_init(|| prepare(&ExperimentConfig::default()).expect("default pipeline"))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Eigen-decomposition of the explicitly formed second moment
/// `K = X Xᵀ / M`, eigenvalues descending.
pub fn second_moment_eigen(samples: &SampleMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let x = samples.data();
    let k = x * x.transpose() / samples.count() as f64;
    let eig = SymmetricEigen::new(k);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i))
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

fn sign_fix(v: &mut DVector<f64>) {
    let (mut best, mut best_abs) = (0, -1.0);
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

/// GS-PCA through a dense SVD of `W`: `A = Σ_W^½ U_Wᵀ`, PCA of the
/// transformed samples by a dense eigensolve, back-transform with `A⁻¹`.
/// Returns components (sign-normalized) and hat-space eigenvalues.
pub fn gspca_dense(
    samples: &SampleMatrix,
    gradient: &DVector<f64>,
    epsilon: f64,
) -> (Vec<f64>, DMatrix<f64>) {
    let d = samples.dim();
    let w = DMatrix::identity(d, d) + gradient * gradient.transpose() * epsilon;
    let svd = w.svd(true, true);
    let u = svd.u.unwrap();
    let root = DVector::from_iterator(d, svd.singular_values.iter().map(|s| s.sqrt()));
    let a = DMatrix::from_diagonal(&root) * u.transpose();
    let a_inv = &u * DMatrix::from_diagonal(&root.map(|s| 1.0 / s));
    let hat = SampleMatrix::new(
        &a * samples.data(),
        samples.grid_shape().0,
        samples.grid_shape().1,
    )
    .unwrap();
    let (values, vectors) = second_moment_eigen(&hat);
    let mut cols = Vec::new();
    for i in 0..values.len() {
        let mut c = &a_inv * vectors.column(i);
        sign_fix(&mut c);
        cols.push(c);
    }
    (values, DMatrix::from_columns(&cols))
}

/// Residual of the metric-orthogonal projection of `mu` onto the span of
/// the first `n` components, via the normal equations `G c = Φᵀ W μ`.
pub fn normal_equation_residual(
    basis: &SpectralBasis,
    mu: &DVector<f64>,
    n: usize,
) -> DVector<f64> {
    let phi = basis.components.columns(0, n).into_owned();
    let w_phi = match &basis.metric {
        MetricDescriptor::Euclidean => phi.clone(),
        MetricDescriptor::GradientWeighted { gradient, epsilon } => {
            &phi + gradient * (gradient.transpose() * &phi) * *epsilon
        }
    };
    let gram = phi.transpose() * &w_phi;
    let rhs = w_phi.transpose() * mu;
    let c = gram.lu().solve(&rhs).expect("nonsingular Gram matrix");
    mu - phi * c
}

/// Mean of `(J r)²` and of `‖r‖²` over the train set for the span of the
/// first `n` components.
pub fn span_scores(
    basis: &SpectralBasis,
    samples: &SampleMatrix,
    n: usize,
    j: &DVector<f64>,
) -> (f64, f64) {
    let (mut c, mut f) = (0.0, 0.0);
    for s in 0..samples.count() {
        let r = normal_equation_residual(basis, &samples.sample(s), n);
        c += j.dot(&r).powi(2);
        f += r.norm_squared();
    }
    let m = samples.count() as f64;
    (c / m, f / m)
}

/// Repeated arg-max over the tail, lowest index first among equals.
pub fn brute_force_select(score: &[f64], n: usize, count: usize) -> Vec<usize> {
    let mut taken = vec![false; score.len()];
    let mut out = Vec::new();
    for _ in 0..count {
        let mut best: Option<usize> = None;
        for i in n..score.len() {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|b| score[i] > score[b]) {
                best = Some(i);
            }
        }
        let b = best.expect("tail not exhausted");
        taken[b] = true;
        out.push(b);
    }
    out
}

/// Euclidean basis made of the listed PCA components.
pub fn pick_components(basis: &SpectralBasis, idx: &[usize]) -> SpectralBasis {
    let cols: Vec<DVector<f64>> = idx.iter().map(|&i| basis.component(i)).collect();
    let sigma = idx.iter().map(|&i| basis.singular_values[i]).collect();
    SpectralBasis::new(
        DMatrix::from_columns(&cols),
        sigma,
        MetricDescriptor::Euclidean,
    )
    .unwrap()
}
