//! Steady single-phase incompressible Darcy flow on a 2D grid with
//! pressure-controlled wells.
//!
//! This is a deliberately small stand-in for a full reservoir simulator: the
//! observations are the five steady well rates of a five-spot pattern, which
//! is enough to give the history-matching misfit a nontrivial gradient with
//! respect to the log-permeability field.
//!
//! Units are SI except permeability, which enters as `K = e^μ` milli-Darcy
//! and is converted with [`MILLIDARCY`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::decomposition::{project, MetricDescriptor, SpectralBasis};
use crate::error::{Error, Result};
use crate::objective_sensitive::GradientProbe;

/// One milli-Darcy in m².
pub const MILLIDARCY: f64 = 9.869233e-16;

/// Peaceman equivalent-radius factor, `r_e = 0.14 √(dx² + dy²)`.
pub const PEACEMAN_FACTOR: f64 = 0.14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    /// Cell sizes and thickness, meters.
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Grid2D {
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::invalid("grid needs at least one cell per axis"));
        }
        for (name, v) in [("dx", self.dx), ("dy", self.dy), ("dz", self.dz)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "grid {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WellRole {
    Injector,
    Producer,
}

impl WellRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            WellRole::Injector => "injector",
            WellRole::Producer => "producer",
        }
    }
}

impl std::str::FromStr for WellRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "injector" => Ok(WellRole::Injector),
            "producer" => Ok(WellRole::Producer),
            other => Err(Error::Parse(format!("unknown well role `{other}`"))),
        }
    }
}

/// Bottom-hole-pressure controlled well.
#[derive(Debug, Clone, PartialEq)]
pub struct Well {
    pub name: String,
    pub cell: usize,
    /// Pascals.
    pub bhp: f64,
    /// Wellbore radius, meters.
    pub rw: f64,
    pub role: WellRole,
}

/// Grid, wells, fluid and the observed rates the misfit is measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirCase {
    pub grid: Grid2D,
    pub wells: Vec<Well>,
    /// Pascal-seconds.
    pub viscosity: f64,
    /// Observed well rates, m³/s, in well order.
    pub observations: DVector<f64>,
}

impl ReservoirCase {
    /// Five-spot on an `nx × ny` grid: injector at the centre cell at 20 MPa,
    /// producers in the four corners at 10 MPa, 10 m × 10 m × 1 m cells,
    /// 1 mPa·s fluid, 0.1 m wellbores. Observations start at zero.
    pub fn five_spot(nx: usize, ny: usize) -> Result<Self> {
        let grid = Grid2D {
            nx,
            ny,
            dx: 10.0,
            dy: 10.0,
            dz: 1.0,
        };
        grid.validate()?;
        let well = |name: &str, ix, iy, bhp, role| Well {
            name: name.to_string(),
            cell: grid.index(ix, iy),
            bhp,
            rw: 0.1,
            role,
        };
        let wells = vec![
            well("INJ", nx / 2, ny / 2, 2.0e7, WellRole::Injector),
            well("PROD1", 0, 0, 1.0e7, WellRole::Producer),
            well("PROD2", nx - 1, 0, 1.0e7, WellRole::Producer),
            well("PROD3", 0, ny - 1, 1.0e7, WellRole::Producer),
            well("PROD4", nx - 1, ny - 1, 1.0e7, WellRole::Producer),
        ];
        Self::new(grid, wells, 1.0e-3, None)
    }

    pub fn new(
        grid: Grid2D,
        wells: Vec<Well>,
        viscosity: f64,
        observations: Option<DVector<f64>>,
    ) -> Result<Self> {
        grid.validate()?;
        if !(viscosity.is_finite() && viscosity > 0.0) {
            return Err(Error::invalid(format!(
                "viscosity must be positive, got {viscosity}"
            )));
        }
        let half = grid.dx.min(grid.dy) / 2.0;
        for w in &wells {
            if w.cell >= grid.cells() {
                return Err(Error::invalid(format!(
                    "well {} cell {} outside grid",
                    w.name, w.cell
                )));
            }
            if !(w.rw > 0.0 && w.rw < half) {
                return Err(Error::invalid(format!(
                    "well {} radius {} must lie in (0, {half})",
                    w.name, w.rw
                )));
            }
            if !w.bhp.is_finite() {
                return Err(Error::NonFinite("well pressure"));
            }
        }
        let observations = observations.unwrap_or_else(|| DVector::zeros(wells.len()));
        if observations.len() != wells.len() {
            return Err(Error::DimensionMismatch {
                what: "observations vs wells",
                expected: wells.len(),
                actual: observations.len(),
            });
        }
        if observations.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observations"));
        }
        Ok(Self {
            grid,
            wells,
            viscosity,
            observations,
        })
    }

    pub fn with_observations(mut self, observations: DVector<f64>) -> Result<Self> {
        if observations.len() != self.wells.len() {
            return Err(Error::DimensionMismatch {
                what: "observations vs wells",
                expected: self.wells.len(),
                actual: observations.len(),
            });
        }
        self.observations = observations;
        Ok(self)
    }

    fn well_index(&self, perm: f64, rw: f64) -> f64 {
        let g = &self.grid;
        let re = PEACEMAN_FACTOR * (g.dx * g.dx + g.dy * g.dy).sqrt();
        2.0 * PI * perm * g.dz / (self.viscosity * (re / rw).ln())
    }

    /// Pressure matrix and right-hand side for the given SI permeabilities.
    pub fn assemble(&self, perm: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let g = &self.grid;
        let d = g.cells();
        let mut a = DMatrix::zeros(d, d);
        let mut rhs = DVector::zeros(d);
        let harmonic = |ka: f64, kb: f64| 2.0 * ka * kb / (ka + kb);
        let tx = g.dy * g.dz / g.dx / self.viscosity;
        let ty = g.dx * g.dz / g.dy / self.viscosity;
        let mut couple = |i: usize, j: usize, t: f64| {
            a[(i, i)] += t;
            a[(j, j)] += t;
            a[(i, j)] -= t;
            a[(j, i)] -= t;
        };
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let c = g.index(ix, iy);
                if ix + 1 < g.nx {
                    let e = g.index(ix + 1, iy);
                    couple(c, e, tx * harmonic(perm[c], perm[e]));
                }
                if iy + 1 < g.ny {
                    let n = g.index(ix, iy + 1);
                    couple(c, n, ty * harmonic(perm[c], perm[n]));
                }
            }
        }
        for w in &self.wells {
            let wi = self.well_index(perm[w.cell], w.rw);
            a[(w.cell, w.cell)] += wi;
            rhs[w.cell] += wi * w.bhp;
        }
        (a, rhs)
    }

    fn permeability(&self, mu: &DVector<f64>) -> Result<Vec<f64>> {
        if mu.len() != self.grid.cells() {
            return Err(Error::DimensionMismatch {
                what: "field vs grid cells",
                expected: self.grid.cells(),
                actual: mu.len(),
            });
        }
        let perm: Vec<f64> = mu.iter().map(|m| m.exp() * MILLIDARCY).collect();
        if perm.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::NonFinite("permeability"));
        }
        Ok(perm)
    }

    /// Cell pressures, Pa.
    pub fn pressures(&self, mu: &DVector<f64>) -> Result<DVector<f64>> {
        if self.wells.is_empty() {
            return Err(Error::numerical(
                "pressure system is singular without wells",
            ));
        }
        let perm = self.permeability(mu)?;
        let (a, rhs) = self.assemble(&perm);
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::numerical("pressure matrix is not positive definite"))?;
        Ok(chol.solve(&rhs))
    }

    /// Steady well rates, m³/s, positive into the reservoir.
    pub fn simulate(&self, mu: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.pressures(mu)?;
        let perm = self.permeability(mu)?;
        let rates = DVector::from_iterator(
            self.wells.len(),
            self.wells
                .iter()
                .map(|w| self.well_index(perm[w.cell], w.rw) * (w.bhp - p[w.cell])),
        );
        if rates.iter().any(|r| !r.is_finite()) {
            return Err(Error::numerical("non-finite well rate"));
        }
        Ok(rates)
    }

    /// `C(μ) = ‖S(μ) − S₀‖²`.
    pub fn objective(&self, mu: &DVector<f64>) -> Result<f64> {
        Ok((self.simulate(mu)? - &self.observations).norm_squared())
    }
}

/// Scalar misfit evaluated on a parameter vector.
pub trait Objective: Sync {
    fn evaluate(&self, mu: &DVector<f64>) -> Result<f64>;
}

impl Objective for ReservoirCase {
    fn evaluate(&self, mu: &DVector<f64>) -> Result<f64> {
        self.objective(mu)
    }
}

/// `C(μ) = ‖μ − μ*‖²`, a surrogate with a known gradient `2(μ − μ*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub target: DVector<f64>,
}

impl Objective for QuadraticObjective {
    fn evaluate(&self, mu: &DVector<f64>) -> Result<f64> {
        if mu.len() != self.target.len() {
            return Err(Error::DimensionMismatch {
                what: "field vs surrogate target",
                expected: self.target.len(),
                actual: mu.len(),
            });
        }
        Ok((mu - &self.target).norm_squared())
    }
}

/// Step policy for coefficient-space finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdStep {
    /// The same `Δa` for every component.
    Absolute(f64),
    /// `Δa_i = factor · √σ_i`.
    SigmaScaled(f64),
}

impl FdStep {
    pub fn for_component(&self, sigma: f64) -> f64 {
        match *self {
            FdStep::Absolute(d) => d,
            FdStep::SigmaScaled(f) => f * sigma.max(0.0).sqrt(),
        }
    }
}

/// Central differences along the first `probe_count` components:
/// `b_i = [C(η + Δa_i φ_i) − C(η − Δa_i φ_i)] / (2 Δa_i)` and
/// `J = Σ_i b_i φ_i`. Costs `2 · probe_count` objective calls.
///
/// The returned probe has `ε = 0` and its coefficients recomputed against
/// the full basis.
pub fn fd_gradient_central<O: Objective + ?Sized>(
    objective: &O,
    basis: &SpectralBasis,
    eta: &DVector<f64>,
    probe_count: usize,
    step: FdStep,
) -> Result<GradientProbe> {
    if basis.metric != MetricDescriptor::Euclidean {
        return Err(Error::invalid("gradient probes need a Euclidean basis"));
    }
    if probe_count == 0 || probe_count > basis.rank() {
        return Err(Error::OutOfRange(format!(
            "probe count {probe_count} outside 1..={}",
            basis.rank()
        )));
    }
    if eta.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            what: "trial point vs basis dimension",
            expected: basis.dim(),
            actual: eta.len(),
        });
    }
    let coefficients = (0..probe_count)
        .into_par_iter()
        .map(|i| {
            let delta = step.for_component(basis.singular_values[i]);
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(Error::OutOfRange(format!(
                    "finite-difference step {delta} for component {i}"
                )));
            }
            let phi = basis.components.column(i);
            let wrap = |e: Error| Error::ProbeFailed {
                index: i,
                source: Box::new(e),
            };
            let plus = objective.evaluate(&(eta + phi * delta)).map_err(wrap)?;
            let minus = objective.evaluate(&(eta - phi * delta)).map_err(wrap)?;
            Ok((plus - minus) / (2.0 * delta))
        })
        .collect::<Result<Vec<f64>>>()?;
    let gradient = basis.components.columns(0, probe_count) * DVector::from_vec(coefficients);
    GradientProbe::new(eta.clone(), gradient, 0.0, basis)
}

/// Two-point gradient towards a known optimum:
/// `J = −(C_η / ‖r‖) · r / ‖r‖` with `r = μ* − η`.
///
/// `η` is expected to be the `n`-term truncation of `mu_star`; coefficients
/// are `b_i = 0` for the first `n` components and `φ_iᵀ J` beyond. Only
/// usable when the optimum is known, i.e. for synthetic studies.
pub fn direction_gradient(
    eta: &DVector<f64>,
    mu_star: &DVector<f64>,
    c_at_eta: f64,
    basis: &SpectralBasis,
    n: usize,
) -> Result<GradientProbe> {
    if eta.len() != basis.dim() || mu_star.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            what: "trial point vs basis dimension",
            expected: basis.dim(),
            actual: eta.len().min(mu_star.len()),
        });
    }
    if n > basis.rank() {
        return Err(Error::OutOfRange(format!(
            "N = {n} exceeds basis rank {}",
            basis.rank()
        )));
    }
    if !(c_at_eta >= 0.0 && c_at_eta.is_finite()) {
        return Err(Error::OutOfRange(format!(
            "objective value {c_at_eta} must be >= 0"
        )));
    }
    let residual = mu_star - eta;
    let norm2 = residual.norm_squared();
    if norm2 == 0.0 {
        return Err(Error::numerical("trial point coincides with the optimum"));
    }
    let scale = -c_at_eta / norm2;
    let gradient = &residual * scale;
    let mut b = basis.components.transpose() * &residual * scale;
    b.rows_mut(0, n).fill(0.0);
    GradientProbe::from_parts(eta.clone(), gradient, 0.0, b)
}

/// `⟨J₁, J₂⟩ / (‖J₁‖ ‖J₂‖)`.
pub fn gradient_cosine(j1: &DVector<f64>, j2: &DVector<f64>) -> Result<f64> {
    if j1.len() != j2.len() {
        return Err(Error::DimensionMismatch {
            what: "gradient lengths",
            expected: j1.len(),
            actual: j2.len(),
        });
    }
    let n1 = j1.norm();
    let n2 = j2.norm();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::invalid("cosine of a zero vector"));
    }
    Ok((j1.dot(j2) / (n1 * n2)).clamp(-1.0, 1.0))
}

/// Truncation of `mu` to `n` components of `basis` evaluated by full
/// simulation, i.e. `C(μ_N)`.
pub fn truncated_objective<O: Objective + ?Sized>(
    objective: &O,
    basis: &SpectralBasis,
    mu: &DVector<f64>,
    n: usize,
) -> Result<f64> {
    objective.evaluate(&project(basis, mu, n)?.reconstruction)
}
