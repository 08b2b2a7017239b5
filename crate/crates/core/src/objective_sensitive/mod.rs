//! Gradient-sensitive PCA variants.
//!
//! All three algorithms target the weighted loss
//! `⟨‖μ_r‖² + ε (J μ_r)²⟩ = ⟨‖μ_r‖²_W⟩` with `W = I + ε JᵀJ`:
//!
//! * [`gspca_fit`] solves it exactly by PCA in the `W^½`-transformed space;
//! * [`agspca_fit`] applies first-order perturbation corrections to a plain
//!   PCA basis;
//! * [`egspca_extend`] keeps the PCA components and re-ranks the tail by the
//!   squared gradient coefficients `b_i²` (or by `b_i² σ_i`, see
//!   [`TailRanking`]).

mod agspca;
mod egspca;
mod gspca;

pub use agspca::{
    agspca_fit, agspca_fit_sorted, perturbed_eigen_residual, PerturbationCorrection,
    DEGENERACY_TOLERANCE,
};
pub use egspca::{
    egspca_extend, egspca_extend_ranked, egspca_select, egspca_select_ranked, tail_is_flat,
    TailRanking,
};
pub use gspca::{gspca_fit, metric_sqrt, MetricSqrt};

use nalgebra::DVector;

use crate::decomposition::{MetricDescriptor, SpectralBasis};
use crate::error::{Error, Result};

/// Gradient evaluated at a trial point, with its coefficients against a
/// reference Euclidean basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientProbe {
    pub eta: DVector<f64>,
    pub gradient: DVector<f64>,
    pub epsilon: f64,
    /// `b_i = ⟨φ_i⁰, J⟩` for every component of the reference basis.
    pub b: DVector<f64>,
}

impl GradientProbe {
    /// Computes `b = Φ⁰ᵀ J` against `reference`.
    pub fn new(
        eta: DVector<f64>,
        gradient: DVector<f64>,
        epsilon: f64,
        reference: &SpectralBasis,
    ) -> Result<Self> {
        if gradient.len() != reference.dim() || eta.len() != reference.dim() {
            return Err(Error::DimensionMismatch {
                what: "probe vs basis dimension",
                expected: reference.dim(),
                actual: gradient.len(),
            });
        }
        let b = reference.components.transpose() * &gradient;
        Self::from_parts(eta, gradient, epsilon, b)
    }

    pub fn from_parts(
        eta: DVector<f64>,
        gradient: DVector<f64>,
        epsilon: f64,
        b: DVector<f64>,
    ) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "epsilon must be >= 0, got {epsilon}"
            )));
        }
        if gradient
            .iter()
            .chain(b.iter())
            .chain(eta.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("gradient probe"));
        }
        Ok(Self {
            eta,
            gradient,
            epsilon,
            b,
        })
    }

    /// Sets `ε` from the dimensionless sensitivity `ε‖J‖²`.
    pub fn with_scaled_epsilon(mut self, eps_scaled: f64) -> Result<Self> {
        if !(eps_scaled >= 0.0 && eps_scaled.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "eps_scaled must be >= 0, got {eps_scaled}"
            )));
        }
        let norm2 = self.gradient.norm_squared();
        if eps_scaled > 0.0 && norm2 == 0.0 {
            return Err(Error::invalid("cannot scale epsilon by a zero gradient"));
        }
        self.epsilon = if eps_scaled == 0.0 {
            0.0
        } else {
            eps_scaled / norm2
        };
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "epsilon must be >= 0, got {epsilon}"
            )));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    /// `ε‖J‖²`.
    pub fn scaled_epsilon(&self) -> f64 {
        self.epsilon * self.gradient.norm_squared()
    }

    /// The metric `W = I + ε JᵀJ`; Euclidean when `ε = 0`.
    pub fn metric(&self) -> Result<MetricDescriptor> {
        if self.epsilon == 0.0 {
            Ok(MetricDescriptor::Euclidean)
        } else {
            MetricDescriptor::gradient_weighted(self.gradient.clone(), self.epsilon)
        }
    }
}
