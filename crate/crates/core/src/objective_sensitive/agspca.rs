use nalgebra::{DMatrix, DVector};

use super::GradientProbe;
use crate::decomposition::{MetricDescriptor, SpectralBasis};
use crate::error::{Error, Result};

/// Eigenvalue gaps below this fraction of `σ₁⁰` are treated as degenerate and
/// their mixing coefficient is set to zero.
pub const DEGENERACY_TOLERANCE: f64 = 1e-8;

/// First-order corrections of a PCA basis.
///
/// `alpha` and `sigma1` are indexed by the *unperturbed* component order;
/// `order[p]` gives the unperturbed index of corrected component `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationCorrection {
    pub alpha: DMatrix<f64>,
    pub sigma1: Vec<f64>,
    pub order: Vec<usize>,
    /// Pairs `(k, n)` skipped by the degeneracy guard while coupled through
    /// a nonzero `b_k b_n`.
    pub degenerate_pairs: Vec<(usize, usize)>,
}

fn check_probe(base: &SpectralBasis, probe: &GradientProbe) -> Result<()> {
    if base.metric != MetricDescriptor::Euclidean {
        return Err(Error::invalid("aGS-PCA needs a Euclidean reference basis"));
    }
    if probe.b.len() != base.rank() {
        return Err(Error::DimensionMismatch {
            what: "gradient coefficients vs basis rank",
            expected: base.rank(),
            actual: probe.b.len(),
        });
    }
    if probe.gradient.len() != base.dim() {
        return Err(Error::DimensionMismatch {
            what: "gradient vs basis dimension",
            expected: base.dim(),
            actual: probe.gradient.len(),
        });
    }
    Ok(())
}

/// aGS-PCA: `φ_k = φ_k⁰ + Σ_n α_kn φ_n⁰` with
/// `α_kn = ε b_k b_n σ_n⁰ / (σ_k⁰ − σ_n⁰)` and `σ_k = σ_k⁰ (1 + ε b_k²)`.
///
/// Corrected components keep the unperturbed order and are `W`-orthonormal
/// only to first order; no re-orthonormalization is applied. See
/// [`agspca_fit_sorted`] for the variant ordered by corrected `σ_k`.
pub fn agspca_fit(
    base: &SpectralBasis,
    probe: &GradientProbe,
) -> Result<(SpectralBasis, PerturbationCorrection)> {
    corrected_basis(base, probe, false)
}

/// Same as [`agspca_fit`] but with components re-sorted by decreasing
/// corrected `σ_k` (ties keep the unperturbed order).
pub fn agspca_fit_sorted(
    base: &SpectralBasis,
    probe: &GradientProbe,
) -> Result<(SpectralBasis, PerturbationCorrection)> {
    corrected_basis(base, probe, true)
}

fn corrected_basis(
    base: &SpectralBasis,
    probe: &GradientProbe,
    resort: bool,
) -> Result<(SpectralBasis, PerturbationCorrection)> {
    check_probe(base, probe)?;
    let m = base.rank();
    let eps = probe.epsilon;
    let sigma0 = &base.singular_values;
    let b = &probe.b;
    let gap_floor = DEGENERACY_TOLERANCE * sigma0.first().copied().unwrap_or(0.0);

    let mut alpha = DMatrix::zeros(m, m);
    let mut degenerate_pairs = Vec::new();
    if eps > 0.0 {
        for k in 0..m {
            if b[k] == 0.0 {
                continue;
            }
            for n in 0..m {
                if n == k || b[n] == 0.0 {
                    continue;
                }
                let gap = sigma0[k] - sigma0[n];
                if gap.abs() < gap_floor {
                    degenerate_pairs.push((k, n));
                    continue;
                }
                alpha[(k, n)] = eps * b[k] * b[n] * sigma0[n] / gap;
            }
        }
    }
    let sigma1: Vec<f64> = (0..m).map(|k| eps * b[k] * b[k] * sigma0[k]).collect();
    let sigma: Vec<f64> = (0..m).map(|k| sigma0[k] + sigma1[k]).collect();

    // Column k of the corrected matrix is Φ⁰ (e_k + α_k·ᵀ).
    let mixing = DMatrix::identity(m, m) + alpha.transpose();
    let corrected = &base.components * mixing;

    let mut order: Vec<usize> = (0..m).collect();
    if resort {
        order.sort_by(|&a, &c| sigma[c].total_cmp(&sigma[a]).then(a.cmp(&c)));
    }
    let columns: Vec<DVector<f64>> = order
        .iter()
        .map(|&k| corrected.column(k).into_owned())
        .collect();
    let sorted_sigma: Vec<f64> = order.iter().map(|&k| sigma[k]).collect();

    let metric = probe.metric()?;
    let mut basis = SpectralBasis::new(DMatrix::from_columns(&columns), sorted_sigma, metric)?;
    basis.discarded_energy = base.discarded_energy;
    Ok((
        basis,
        PerturbationCorrection {
            alpha,
            sigma1,
            order,
            degenerate_pairs,
        },
    ))
}

/// Per-component Euclidean norm of
/// `K φ_k + ε b_k Σ_i b_i K φ_i − σ_k φ_k`, with `K = Φ⁰ diag(σ⁰) Φ⁰ᵀ`.
///
/// Results follow the corrected component order.
pub fn perturbed_eigen_residual(
    base: &SpectralBasis,
    probe: &GradientProbe,
    corrected: &SpectralBasis,
    correction: &PerturbationCorrection,
) -> Result<Vec<f64>> {
    check_probe(base, probe)?;
    if corrected.dim() != base.dim() {
        return Err(Error::DimensionMismatch {
            what: "corrected basis dimension",
            expected: base.dim(),
            actual: corrected.dim(),
        });
    }
    let m = corrected.rank();
    if correction.order.len() != m || m != base.rank() {
        return Err(Error::DimensionMismatch {
            what: "corrected basis rank",
            expected: base.rank(),
            actual: m,
        });
    }
    let sigma0 = DVector::from_column_slice(&base.singular_values);
    let overlap = base.components.transpose() * &corrected.components; // Φ⁰ᵀ Φ
    let k_phi = &base.components * DMatrix::from_diagonal(&sigma0) * overlap; // K Φ
    let b_sorted = DVector::from_iterator(m, correction.order.iter().map(|&k| probe.b[k]));
    let coupled = &k_phi * &b_sorted; // Σ_i b_i K φ_i

    Ok((0..m)
        .map(|p| {
            let k = correction.order[p];
            let defect = k_phi.column(p) + &coupled * (probe.epsilon * probe.b[k])
                - corrected.components.column(p) * corrected.singular_values[p];
            defect.norm()
        })
        .collect())
}
