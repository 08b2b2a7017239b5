use nalgebra::DVector;

use super::config::{Algorithm, ExperimentConfig, GradientKind};
use super::report::{ScoreReport, TestRow, TrainRow};
use crate::decomposition::{
    energy_fraction, pca_fit, project, select_dimension, span_basis, SampleMatrix, SpectralBasis,
};
use crate::error::{Error, Result};
use crate::objective_sensitive::{
    agspca_fit, agspca_fit_sorted, egspca_extend_ranked, gspca_fit, tail_is_flat, GradientProbe,
    PerturbationCorrection,
};
use crate::randfield::{generate_sample, make_dataset};
use crate::reservoir::{direction_gradient, fd_gradient_central, gradient_cosine, ReservoirCase};

/// Everything the experiments share: the train set, its PCA basis, the
/// selected dimension and the synthetic history-matching problem.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub train: SampleMatrix,
    pub pca: SpectralBasis,
    pub n: usize,
    /// Raw test field before truncation.
    pub test_field: DVector<f64>,
    /// Ground truth `μ*`: the test field truncated to `2N` PCA components.
    pub mu_star: DVector<f64>,
    /// Trial point `η`: the test field truncated to `N` components.
    pub eta: DVector<f64>,
    /// Case whose observations are the rates simulated at `μ*`.
    pub case: ReservoirCase,
    pub objective_at_eta: f64,
}

/// Bases fitted against one gradient.
#[derive(Debug, Clone)]
pub struct GradientBases {
    pub kind: GradientKind,
    /// The gradient with `ε` set from `ε‖J‖²`.
    pub probe: GradientProbe,
    pub gs: SpectralBasis,
    pub ags: SpectralBasis,
    pub ags_correction: PerturbationCorrection,
    /// Extension to every `N₁ > N`, in the order of [`Prepared::n1_values`].
    pub egs: Vec<(usize, SpectralBasis)>,
}

impl GradientBases {
    pub fn basis<'a>(
        &'a self,
        prep: &'a Prepared,
        algorithm: Algorithm,
        n1: usize,
    ) -> Option<&'a SpectralBasis> {
        match algorithm {
            Algorithm::Pca => Some(&prep.pca),
            Algorithm::Gs => Some(&self.gs),
            Algorithm::Ags => Some(&self.ags),
            Algorithm::Egs => self.egs.iter().find(|(k, _)| *k == n1).map(|(_, b)| b),
        }
    }
}

/// Projection of the ground truth kept for raster output.
#[derive(Debug, Clone)]
pub struct Projection {
    pub kind: GradientKind,
    pub algorithm: Algorithm,
    pub n1: usize,
    pub field: DVector<f64>,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let train = make_dataset(
        config.train_count,
        &config.train,
        config.k_min,
        config.k_max,
    )
    .map_err(|e| e.in_stage("generate"))?;
    let pca = pca_fit(&train).map_err(|e| e.in_stage("pca"))?;
    let n =
        select_dimension(&pca.singular_values, config.threshold).map_err(|e| e.in_stage("pca"))?;
    if 2 * n > pca.rank() {
        return Err(Error::OutOfRange(format!(
            "2N = {} exceeds the PCA rank {}",
            2 * n,
            pca.rank()
        ))
        .in_stage("pca"));
    }

    let truth = || -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let field = generate_sample(&config.test, config.test_index, config.k_min, config.k_max)?
            .mu_vector();
        let mu_star = project(&pca, &field, 2 * n)?.reconstruction;
        let eta = project(&pca, &mu_star, n)?.reconstruction;
        Ok((field, mu_star, eta))
    };
    let (test_field, mu_star, eta) = truth().map_err(|e| e.in_stage("ground-truth"))?;

    let observe = || -> Result<(ReservoirCase, f64)> {
        let s0 = config.case.simulate(&mu_star)?;
        let case = config.case.clone().with_observations(s0)?;
        let c = case.objective(&eta)?;
        Ok((case, c))
    };
    let (case, objective_at_eta) = observe().map_err(|e| e.in_stage("simulate"))?;

    Ok(Prepared {
        config: config.clone(),
        train,
        pca,
        n,
        test_field,
        mu_star,
        eta,
        case,
        objective_at_eta,
    })
}

impl Prepared {
    /// `N₁ = ⌈f · N⌉` for each configured factor, without repeats.
    pub fn n1_values(&self) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = Vec::new();
        for &f in &self.config.n1_factors {
            let n1 = (f * self.n as f64).ceil() as usize;
            if n1 > self.pca.rank() {
                return Err(Error::OutOfRange(format!(
                    "N1 = {n1} exceeds the PCA rank {}",
                    self.pca.rank()
                )));
            }
            if !out.contains(&n1) {
                out.push(n1);
            }
        }
        Ok(out)
    }

    /// The raw gradient (`ε = 0`) of the requested kind.
    pub fn gradient(&self, kind: GradientKind) -> Result<GradientProbe> {
        let probe = match kind {
            GradientKind::Central => fd_gradient_central(
                &self.case,
                &self.pca,
                &self.eta,
                2 * self.n,
                self.config.fd_step,
            ),
            GradientKind::Directional => direction_gradient(
                &self.eta,
                &self.mu_star,
                self.objective_at_eta,
                &self.pca,
                self.n,
            ),
        };
        probe.map_err(|e| e.in_stage("gradient"))
    }

    pub fn fit_bases(&self, kind: GradientKind) -> Result<GradientBases> {
        let probe = self
            .gradient(kind)?
            .with_scaled_epsilon(self.config.eps_scaled)
            .map_err(|e| e.in_stage("gradient"))?;
        let gs = gspca_fit(&self.train, &probe.gradient, probe.epsilon)
            .map_err(|e| e.in_stage("gspca"))?;
        let fit = if self.config.ags_resort {
            agspca_fit_sorted
        } else {
            agspca_fit
        };
        let (ags, ags_correction) = fit(&self.pca, &probe).map_err(|e| e.in_stage("agspca"))?;
        let mut egs = Vec::new();
        for n1 in self.n1_values()? {
            if n1 > self.n {
                let b = egspca_extend_ranked(
                    &self.pca,
                    &probe,
                    self.n,
                    n1 - self.n,
                    self.config.tail_ranking,
                )
                .map_err(|e| e.in_stage("egspca"))?;
                egs.push((n1, b));
            }
        }
        Ok(GradientBases {
            kind,
            probe,
            gs,
            ags,
            ags_correction,
            egs,
        })
    }

    /// `(algorithm, N₁)` pairs in table order: PCA, GS-PCA and aGS-PCA at
    /// every `N₁`, eGS-PCA only where `N₁ > N`.
    pub fn table_layout(&self) -> Result<Vec<(Algorithm, usize)>> {
        let mut rows = Vec::new();
        for n1 in self.n1_values()? {
            rows.extend([Algorithm::Pca, Algorithm::Gs, Algorithm::Ags].map(|a| (a, n1)));
            if n1 > self.n {
                rows.push((Algorithm::Egs, n1));
            }
        }
        Ok(rows)
    }

    fn notes(&self, bases: &GradientBases) -> Vec<String> {
        let mut notes = Vec::new();
        let kind = bases.kind;
        if !bases.ags_correction.degenerate_pairs.is_empty() {
            notes.push(format!(
                "{kind}: aGS-PCA skipped {} near-degenerate coupled pairs",
                bases.ags_correction.degenerate_pairs.len()
            ));
        }
        if !bases.egs.is_empty() && tail_is_flat(&bases.probe, self.n) {
            notes.push(format!("{kind}: gradient has no tail coefficients; eGS-PCA fell back to singular-value order"));
        }
        notes
    }
}

/// Mean squared field residual and mean squared linearized objective
/// residual of the train set for one basis truncated to `n1` components.
pub fn train_scores(
    prep: &Prepared,
    basis: &SpectralBasis,
    n1: usize,
    gradient: &DVector<f64>,
) -> Result<(f64, f64)> {
    let span = span_basis(basis, n1)?;
    let m = prep.train.count();
    let (mut field, mut objective) = (0.0, 0.0);
    for s in 0..m {
        let t = project(&span, &prep.train.sample(s), n1)?;
        field += t.residual.norm_squared();
        objective += gradient.dot(&t.residual).powi(2);
    }
    Ok((field / m as f64, objective / m as f64))
}

pub fn train_rows(prep: &Prepared, bases: &GradientBases) -> Result<Vec<TrainRow>> {
    let mut rows = Vec::new();
    for (algorithm, n1) in prep.table_layout()? {
        let basis = bases.basis(prep, algorithm, n1).ok_or_else(|| {
            Error::invalid(format!("no {} basis for N1 = {n1}", algorithm.label()))
        })?;
        let (field, objective) = train_scores(prep, basis, n1, &bases.probe.gradient)
            .map_err(|e| e.in_stage("scores"))?;
        rows.push(TrainRow {
            algorithm: algorithm.label().to_string(),
            n1,
            omega: energy_fraction(&basis.singular_values, n1).map_err(|e| e.in_stage("scores"))?,
            mean_sq_field_residual: field,
            mean_sq_linearized_objective_residual: objective,
        });
    }
    Ok(rows)
}

/// Test-table rows for one gradient, with the projections they were
/// computed from.
pub fn test_rows(
    prep: &Prepared,
    bases: &GradientBases,
) -> Result<(Vec<TestRow>, Vec<Projection>)> {
    let mut rows = Vec::new();
    let mut projections = Vec::new();
    for (algorithm, n1) in prep.table_layout()? {
        let basis = bases.basis(prep, algorithm, n1).ok_or_else(|| {
            Error::invalid(format!("no {} basis for N1 = {n1}", algorithm.label()))
        })?;
        let t = span_basis(basis, n1)
            .and_then(|span| project(&span, &prep.mu_star, n1))
            .map_err(|e| e.in_stage("scores"))?;
        let c = prep
            .case
            .objective(&t.reconstruction)
            .map_err(|e| e.in_stage("simulate"))?;
        rows.push(TestRow {
            algorithm: algorithm.label().to_string(),
            n1,
            gradient: bases.kind.as_str().to_string(),
            field_residual_norm: t.residual.norm(),
            simulated_objective_residual: c,
        });
        projections.push(Projection {
            kind: bases.kind,
            algorithm,
            n1,
            field: t.reconstruction,
        });
    }
    Ok((rows, projections))
}

fn base_report(prep: &Prepared) -> Result<ScoreReport> {
    Ok(ScoreReport {
        n: prep.n,
        n1: prep.n1_values()?,
        eps_scaled: prep.config.eps_scaled,
        objective_at_trial_point: prep.objective_at_eta,
        ..Default::default()
    })
}

/// Train study on a prepared problem; also returns the fitted bases.
pub fn train_experiment(prep: &Prepared) -> Result<(ScoreReport, GradientBases)> {
    let kind = prep.config.gradient_kind;
    let bases = prep.fit_bases(kind)?;
    let mut report = base_report(prep)?;
    report.train_gradient = Some(kind.as_str().to_string());
    report.train = train_rows(prep, &bases)?;
    report.notes = prep.notes(&bases);
    report.validate()?;
    Ok((report, bases))
}

/// Test study on a prepared problem for both gradient kinds.
pub fn test_experiment(
    prep: &Prepared,
) -> Result<(ScoreReport, Vec<GradientBases>, Vec<Projection>)> {
    let mut report = base_report(prep)?;
    let mut all_bases = Vec::new();
    let mut projections = Vec::new();
    for kind in GradientKind::ALL {
        let bases = prep.fit_bases(kind)?;
        let (rows, proj) = test_rows(prep, &bases)?;
        report.test.extend(rows);
        report.notes.extend(prep.notes(&bases));
        projections.extend(proj);
        all_bases.push(bases);
    }
    report.gradient_cosine = Some(
        gradient_cosine(&all_bases[0].probe.gradient, &all_bases[1].probe.gradient)
            .map_err(|e| e.in_stage("scores"))?,
    );
    report.validate()?;
    Ok((report, all_bases, projections))
}

/// Generates the data, fits every basis against the configured gradient
/// and scores the train set: ω(N₁), `⟨‖μ_Nr‖²⟩` and `⟨(J μ_Nr)²⟩`.
///
/// Each basis is scored through the metric-orthogonal projection onto the
/// span of its first `N₁` components.
pub fn run_train_experiment(config: &ExperimentConfig) -> Result<ScoreReport> {
    train_experiment(&prepare(config)?).map(|(r, _)| r)
}

/// Projects the ground truth onto every basis for both gradient kinds and
/// simulates the projections: `‖μ*_Nr‖` and `C(μ*_N)`.
pub fn run_test_experiment(config: &ExperimentConfig) -> Result<ScoreReport> {
    test_experiment(&prepare(config)?).map(|(r, _, _)| r)
}
