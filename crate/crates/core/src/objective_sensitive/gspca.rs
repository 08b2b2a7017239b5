use nalgebra::{DMatrix, DVector};

use crate::decomposition::{canonical_sign, pca_fit, SampleMatrix, SpectralBasis};
use crate::error::{Error, Result};

/// Closed-form symmetric square root of `W = I + ε JᵀJ`.
///
/// `A x = x + c (Ĵᵀx) Ĵ` with `c = √(1 + ε‖J‖²) − 1`, and the inverse uses
/// `c' = 1/√(1 + ε‖J‖²) − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSqrt {
    pub unit_gradient: DVector<f64>,
    pub scale_forward: f64,
    pub scale_inverse: f64,
}

impl MetricSqrt {
    fn apply_scaled(&self, x: &DVector<f64>, c: f64) -> DVector<f64> {
        if c == 0.0 {
            return x.clone();
        }
        x + &self.unit_gradient * (c * self.unit_gradient.dot(x))
    }

    /// `A x`.
    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply_scaled(x, self.scale_forward)
    }

    /// `A⁻¹ x`.
    pub fn inverse(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply_scaled(x, self.scale_inverse)
    }

    pub fn dense_forward(&self) -> DMatrix<f64> {
        self.dense(self.scale_forward)
    }

    pub fn dense_inverse(&self) -> DMatrix<f64> {
        self.dense(self.scale_inverse)
    }

    fn dense(&self, c: f64) -> DMatrix<f64> {
        let d = self.unit_gradient.len();
        DMatrix::identity(d, d) + &self.unit_gradient * self.unit_gradient.transpose() * c
    }
}

pub fn metric_sqrt(gradient: &DVector<f64>, epsilon: f64) -> Result<MetricSqrt> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::OutOfRange(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    if gradient.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let norm2 = gradient.norm_squared();
    if epsilon > 0.0 && norm2 == 0.0 {
        return Err(Error::invalid("zero gradient with positive epsilon"));
    }
    let unit_gradient = if norm2 > 0.0 {
        gradient / norm2.sqrt()
    } else {
        gradient.clone()
    };
    let root = (1.0 + epsilon * norm2).sqrt();
    Ok(MetricSqrt {
        unit_gradient,
        scale_forward: root - 1.0,
        scale_inverse: 1.0 / root - 1.0,
    })
}

/// Exact GS-PCA.
///
/// Samples are mapped into the hat space `μ̂ = A μ`, fitted with plain PCA,
/// and the components mapped back with `A⁻¹`. The returned singular values
/// are the hat-space ones and the components are `W`-orthonormal. With
/// `ε = 0` the result is the Euclidean PCA basis.
pub fn gspca_fit(
    samples: &SampleMatrix,
    gradient: &DVector<f64>,
    epsilon: f64,
) -> Result<SpectralBasis> {
    if gradient.len() != samples.dim() {
        return Err(Error::DimensionMismatch {
            what: "gradient vs sample length",
            expected: samples.dim(),
            actual: gradient.len(),
        });
    }
    let root = metric_sqrt(gradient, epsilon)?;
    if epsilon == 0.0 {
        return pca_fit(samples);
    }
    let hat = samples.map_samples(|mu| root.forward(mu))?;
    let hat_basis = pca_fit(&hat)?;

    let columns: Vec<DVector<f64>> = (0..hat_basis.rank())
        .map(|i| {
            let mut c = root.inverse(&hat_basis.component(i));
            canonical_sign(&mut c);
            c
        })
        .collect();
    let metric =
        crate::decomposition::MetricDescriptor::gradient_weighted(gradient.clone(), epsilon)?;
    let mut basis = SpectralBasis::new(
        DMatrix::from_columns(&columns),
        hat_basis.singular_values.clone(),
        metric,
    )?;
    basis.discarded_energy = hat_basis.discarded_energy;
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{subspace_angle, MetricDescriptor};

    #[test]
    fn axis_aligned_root() {
        let r = metric_sqrt(&DVector::from_column_slice(&[1.0, 0.0]), 3.0).unwrap();
        let a = r.dense_forward();
        let ai = r.dense_inverse();
        assert!((a - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).amax() < 1e-15);
        assert!((ai - DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0])).amax() < 1e-15);
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let r = metric_sqrt(&DVector::from_column_slice(&[0.3, -2.0, 1.0]), 0.0).unwrap();
        assert_eq!(r.dense_forward(), DMatrix::identity(3, 3));
        let z = metric_sqrt(&DVector::zeros(3), 0.0).unwrap();
        assert_eq!(
            z.forward(&DVector::from_element(3, 1.5)),
            DVector::from_element(3, 1.5)
        );
    }

    #[test]
    fn root_errors() {
        assert!(metric_sqrt(&DVector::from_element(2, 1.0), -0.1).is_err());
        assert!(metric_sqrt(&DVector::zeros(2), 1.0).is_err());
    }

    #[test]
    fn forward_then_inverse_is_identity() {
        let j = DVector::from_column_slice(&[0.4, -1.2, 2.5, 0.1]);
        let r = metric_sqrt(&j, 0.9).unwrap();
        let x = DVector::from_column_slice(&[1.0, 2.0, -3.0, 0.5]);
        assert!((r.inverse(&r.forward(&x)) - &x).amax() < 1e-12);
        let w = MetricDescriptor::gradient_weighted(j, 0.9).unwrap();
        assert!((r.forward(&r.forward(&x)) - w.apply(&x)).amax() < 1e-12);
    }

    #[test]
    fn four_point_cross() {
        let cols: Vec<DVector<f64>> = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
            .iter()
            .map(|c| DVector::from_column_slice(c))
            .collect();
        let s = SampleMatrix::from_columns(&cols, 2, 1).unwrap();
        let basis = gspca_fit(&s, &DVector::from_column_slice(&[1.0, 0.0]), 3.0).unwrap();
        assert!((basis.singular_values[0] - 2.0).abs() < 1e-14);
        assert!((basis.singular_values[1] - 0.5).abs() < 1e-14);
        assert!((basis.components[(0, 0)] - 0.5).abs() < 1e-14);
        assert!(basis.components[(1, 0)].abs() < 1e-14);
        assert!(basis.orthonormality_defect() < 1e-14);
    }

    #[test]
    fn zero_epsilon_matches_pca() {
        let cols: Vec<DVector<f64>> = (0..5)
            .map(|s| DVector::from_fn(3, |i, _| ((s * 7 + i * 3) % 5) as f64 - 1.7))
            .collect();
        let s = SampleMatrix::from_columns(&cols, 3, 1).unwrap();
        let pca = pca_fit(&s).unwrap();
        let gs = gspca_fit(&s, &DVector::from_column_slice(&[1.0, 2.0, 3.0]), 0.0).unwrap();
        assert_eq!(pca, gs);
        assert!(subspace_angle(&pca, &gs, 2).unwrap() < 1e-8);
    }
}
