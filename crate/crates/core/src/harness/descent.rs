use nalgebra::DVector;

use crate::decomposition::SpectralBasis;
use crate::error::{Error, Result};
use crate::reservoir::Objective;

/// Coefficient step used for the central differences.
pub const DESCENT_FD_STEP: f64 = 1e-4;

/// Consecutive objective increases tolerated before giving up.
pub const MAX_INCREASES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub coefficients: DVector<f64>,
    pub objective: f64,
    /// Objective before the first step and after every step.
    pub history: Vec<f64>,
}

/// `C / scale`, to descend on a normalized misfit.
pub struct Scaled<'a, O: ?Sized> {
    pub inner: &'a O,
    pub scale: f64,
}

impl<O: Objective + ?Sized> Objective for Scaled<'_, O> {
    fn evaluate(&self, mu: &DVector<f64>) -> Result<f64> {
        Ok(self.inner.evaluate(mu)? / self.scale)
    }
}

fn field(basis: &SpectralBasis, a: &DVector<f64>) -> DVector<f64> {
    basis.components.columns(0, a.len()) * a
}

/// Fixed-step gradient descent on `a ↦ C(Σ_{i<N} a_i φ_i)`, with the
/// gradient taken by central differences in coefficient space.
///
/// Returns the final coefficients and objective. Fails with
/// [`Error::Diverged`] once the objective has risen [`MAX_INCREASES`] steps
/// in a row or stops being finite.
pub fn subspace_descent<O: Objective + ?Sized>(
    objective: &O,
    basis: &SpectralBasis,
    n: usize,
    a0: &DVector<f64>,
    steps: usize,
    lr: f64,
) -> Result<(DVector<f64>, f64)> {
    subspace_descent_traced(objective, basis, n, a0, steps, lr)
        .map(|d| (d.coefficients, d.objective))
}

pub fn subspace_descent_traced<O: Objective + ?Sized>(
    objective: &O,
    basis: &SpectralBasis,
    n: usize,
    a0: &DVector<f64>,
    steps: usize,
    lr: f64,
) -> Result<Descent> {
    if n == 0 || n > basis.rank() {
        return Err(Error::OutOfRange(format!(
            "N = {n} outside 1..={}",
            basis.rank()
        )));
    }
    if a0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "starting coefficients",
            expected: n,
            actual: a0.len(),
        });
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::OutOfRange(format!(
            "learning rate must be positive, got {lr}"
        )));
    }

    let eval = |a: &DVector<f64>| objective.evaluate(&field(basis, a));
    let mut a = a0.clone();
    let mut c = eval(&a)?;
    let mut history = vec![c];
    let mut rising = 0;
    for step in 1..=steps {
        let mut grad = DVector::zeros(n);
        for i in 0..n {
            let mut plus = a.clone();
            plus[i] += DESCENT_FD_STEP;
            let mut minus = a.clone();
            minus[i] -= DESCENT_FD_STEP;
            grad[i] = (eval(&plus)? - eval(&minus)?) / (2.0 * DESCENT_FD_STEP);
        }
        a -= grad * lr;
        let next = match eval(&a) {
            Ok(v) if v.is_finite() => v,
            _ => {
                return Err(Error::Diverged {
                    steps: step,
                    objective: c,
                })
            }
        };
        rising = if next > c { rising + 1 } else { 0 };
        c = next;
        history.push(c);
        if rising >= MAX_INCREASES {
            return Err(Error::Diverged {
                steps: step,
                objective: c,
            });
        }
    }
    Ok(Descent {
        coefficients: a,
        objective: c,
        history,
    })
}
