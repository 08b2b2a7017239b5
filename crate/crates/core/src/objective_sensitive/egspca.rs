use nalgebra::DMatrix;

use super::GradientProbe;
use crate::decomposition::{MetricDescriptor, SpectralBasis};
use crate::error::{Error, Result};

/// Score used to rank tail components for the extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailRanking {
    /// `b_i²`.
    Coefficient,
    /// `b_i² σ_i`, the share of the mean linearized objective `⟨(Jᵀμ)²⟩`
    /// carried by component `i`. Picking the largest scores minimizes the
    /// truncated `⟨C²⟩` over all tail selections of the same size.
    #[default]
    Energy,
}

impl TailRanking {
    pub fn as_str(self) -> &'static str {
        match self {
            TailRanking::Coefficient => "coefficient",
            TailRanking::Energy => "energy",
        }
    }
}

impl std::str::FromStr for TailRanking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coefficient" | "b2" => Ok(TailRanking::Coefficient),
            "energy" | "b2sigma" => Ok(TailRanking::Energy),
            other => Err(Error::Parse(format!("unknown tail ranking '{other}'"))),
        }
    }
}

/// Picks `count` tail components (0-based positions `≥ n`) with the largest
/// `b_i²`, in decreasing order. Ties go to the lower index, so a flat tail
/// falls back to singular-value order.
pub fn egspca_select(probe: &GradientProbe, n: usize, count: usize) -> Result<Vec<usize>> {
    let ones = vec![1.0; probe.b.len()];
    select_by_score(probe, &ones, n, count)
}

/// Like [`egspca_select`] with an explicit ranking; `sigma` holds the
/// singular values of the basis the coefficients refer to.
pub fn egspca_select_ranked(
    probe: &GradientProbe,
    sigma: &[f64],
    n: usize,
    count: usize,
    ranking: TailRanking,
) -> Result<Vec<usize>> {
    if sigma.len() != probe.b.len() {
        return Err(Error::DimensionMismatch {
            what: "singular values vs gradient coefficients",
            expected: probe.b.len(),
            actual: sigma.len(),
        });
    }
    match ranking {
        TailRanking::Coefficient => egspca_select(probe, n, count),
        TailRanking::Energy => select_by_score(probe, sigma, n, count),
    }
}

fn select_by_score(
    probe: &GradientProbe,
    weight: &[f64],
    n: usize,
    count: usize,
) -> Result<Vec<usize>> {
    let available = probe.b.len().saturating_sub(n);
    if count == 0 {
        return Err(Error::OutOfRange(
            "extension count must be at least 1".into(),
        ));
    }
    if count > available {
        return Err(Error::OutOfRange(format!(
            "requested {count} extension components but only {available} lie beyond N = {n}"
        )));
    }
    let mut tail: Vec<usize> = (n..probe.b.len()).collect();
    let sq = |i: usize| probe.b[i] * probe.b[i] * weight[i];
    tail.sort_by(|&a, &c| sq(c).total_cmp(&sq(a)).then(a.cmp(&c)));
    tail.truncate(count);
    Ok(tail)
}

/// True when every tail coefficient beyond `n` is zero, i.e. the selection
/// degenerates to singular-value order.
pub fn tail_is_flat(probe: &GradientProbe, n: usize) -> bool {
    probe.b.iter().skip(n).all(|&b| b == 0.0)
}

/// Keeps the first `n` components of `base` and appends the `count`
/// selected tail components; the remaining tail follows in its original
/// order so that energy fractions over the full spectrum stay defined.
/// Tail components are ranked by `b_i²`.
pub fn egspca_extend(
    base: &SpectralBasis,
    probe: &GradientProbe,
    n: usize,
    count: usize,
) -> Result<SpectralBasis> {
    egspca_extend_ranked(base, probe, n, count, TailRanking::Coefficient)
}

pub fn egspca_extend_ranked(
    base: &SpectralBasis,
    probe: &GradientProbe,
    n: usize,
    count: usize,
    ranking: TailRanking,
) -> Result<SpectralBasis> {
    if base.metric != MetricDescriptor::Euclidean {
        return Err(Error::invalid("eGS-PCA extends a Euclidean PCA basis"));
    }
    if probe.b.len() != base.rank() {
        return Err(Error::DimensionMismatch {
            what: "gradient coefficients vs basis rank",
            expected: base.rank(),
            actual: probe.b.len(),
        });
    }
    if n > base.rank() {
        return Err(Error::OutOfRange(format!(
            "N = {n} exceeds basis rank {}",
            base.rank()
        )));
    }
    let selected = if count == 0 {
        Vec::new()
    } else {
        egspca_select_ranked(probe, &base.singular_values, n, count, ranking)?
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.extend(&selected);
    order.extend((n..base.rank()).filter(|i| !selected.contains(i)));

    let columns: Vec<_> = order
        .iter()
        .map(|&i| base.components.column(i).into_owned())
        .collect();
    let sigma = order.iter().map(|&i| base.singular_values[i]).collect();
    let mut out = SpectralBasis::new(
        DMatrix::from_columns(&columns),
        sigma,
        MetricDescriptor::Euclidean,
    )?;
    out.discarded_energy = base.discarded_energy;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn probe(b: &[f64]) -> GradientProbe {
        let d = b.len();
        GradientProbe::from_parts(
            DVector::zeros(d),
            DVector::zeros(d),
            0.0,
            DVector::from_column_slice(b),
        )
        .unwrap()
    }

    #[test]
    fn picks_largest_squares() {
        let p = probe(&[9.0, 9.0, 0.1, -5.0, 2.0]);
        assert_eq!(egspca_select(&p, 2, 1).unwrap(), vec![3]);
        assert_eq!(egspca_select(&p, 2, 2).unwrap(), vec![3, 4]);
        assert!(egspca_select(&p, 2, 4).is_err());
        assert!(egspca_select(&p, 2, 0).is_err());
    }

    #[test]
    fn energy_ranking_weighs_by_sigma() {
        let p = probe(&[1.0, 0.5, 0.6, 0.2]);
        let sigma = [10.0, 8.0, 2.0, 1.0];
        assert_eq!(
            egspca_select_ranked(&p, &sigma, 1, 1, TailRanking::Energy).unwrap(),
            vec![1]
        );
        assert_eq!(
            egspca_select_ranked(&p, &sigma, 1, 1, TailRanking::Coefficient).unwrap(),
            vec![2]
        );
        assert!(egspca_select_ranked(&p, &sigma[..3], 1, 1, TailRanking::Energy).is_err());
        assert_eq!(
            "b2sigma".parse::<TailRanking>().unwrap(),
            TailRanking::Energy
        );
        assert!("other".parse::<TailRanking>().is_err());
    }

    #[test]
    fn flat_tail_falls_back_to_sigma_order() {
        let p = probe(&[1.0, 0.0, 0.0, 0.0]);
        assert!(tail_is_flat(&p, 1));
        assert_eq!(egspca_select(&p, 1, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn extension_keeps_orthonormal_components() {
        let base = SpectralBasis::new(
            DMatrix::identity(4, 4),
            vec![4.0, 3.0, 2.0, 1.0],
            MetricDescriptor::Euclidean,
        )
        .unwrap();
        let p = probe(&[0.0, 0.1, 0.2, 3.0]);
        let ext = egspca_extend(&base, &p, 1, 1).unwrap();
        assert_eq!(ext.singular_values, vec![4.0, 1.0, 3.0, 2.0]);
        assert!(ext.orthonormality_defect() < 1e-12);
        let same = egspca_extend(&base, &p, 4, 0).unwrap();
        assert_eq!(same.components, base.components);
        assert!(egspca_extend(&base, &p, 4, 1).is_err());
    }
}
