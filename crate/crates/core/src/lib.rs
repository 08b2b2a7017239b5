//! Objective-sensitive principal component analysis.
//!
//! The crate builds reduced bases for high-dimensional parameter fields that
//! account for both the sample statistics and the local gradient of an
//! objective function:
//!
//! * [`decomposition`]: second-moment PCA, metric-aware projection and
//!   energy-based dimension selection.
//! * [`objective_sensitive`]: exact gradient-sensitive PCA (GS-PCA), its
//!   first-order perturbative approximation (aGS-PCA) and the
//!   coefficient-ranked subspace extension (eGS-PCA).
//! * [`randfield`]: seeded Gaussian-correlated surfaces rescaled to
//!   log-permeability fields.
//! * [`reservoir`]: a steady single-phase Darcy five-spot model, the
//!   history-matching misfit and finite-difference gradients.
//! * [`harness`]: experiment pipelines, configuration, reports and the CLI.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decomposition;
pub mod error;
pub mod harness;
pub mod io;
pub mod objective_sensitive;
pub mod randfield;
pub mod reservoir;

pub use decomposition::{
    energy_fraction, orthonormalize, pca_fit, project, select_dimension, span_basis,
    subspace_angle, MetricDescriptor, SampleMatrix, SpectralBasis, Truncation,
};
pub use error::{Error, Result};
pub use objective_sensitive::{
    agspca_fit, agspca_fit_sorted, egspca_extend, egspca_extend_ranked, egspca_select,
    egspca_select_ranked, gspca_fit, metric_sqrt, perturbed_eigen_residual, GradientProbe,
    MetricSqrt, PerturbationCorrection, TailRanking,
};
pub use randfield::{gaussian_surface, make_dataset, rescale_log_perm, FieldSample, SurfaceParams};
pub use reservoir::{
    direction_gradient, fd_gradient_central, gradient_cosine, FdStep, Grid2D, Objective,
    QuadraticObjective, ReservoirCase, Well, WellRole,
};
