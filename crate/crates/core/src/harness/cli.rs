use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::Value;

use super::config::{Algorithm, ExperimentConfig, GradientKind};
use super::descent::{subspace_descent_traced, Scaled};
use super::pipeline::{prepare, test_experiment, train_experiment, Prepared};
use super::report::merge_report_json;
use crate::decomposition::{project, SampleMatrix, SpectralBasis};
use crate::error::{Error, Result};
use crate::io::{
    case_to_string, fmt_f64, rates_csv, spectrum_csv, write_basis, write_dataset, write_pgm,
    write_vector,
};
use crate::objective_sensitive::{egspca_select_ranked, GradientProbe};
use crate::randfield::make_dataset;

#[derive(Debug, Parser)]
#[command(name = "ospca", version, about = "Objective-sensitive PCA experiments")]
struct Cli {
    /// Config file of key=value lines layered over the built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Sets train.seed and derives test.seed from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides output.dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the train set and the test field.
    Generate,
    /// Fit plain PCA and select N.
    Pca,
    /// Fit exact GS-PCA against the configured gradient.
    Gspca,
    /// Fit the first-order aGS-PCA approximation.
    Agspca,
    /// Extend the PCA subspace by gradient-ranked tail components.
    Egspca,
    /// Simulate the ground truth and the trial point.
    Simulate,
    /// Compute the configured gradient and its coefficients.
    Gradient,
    /// Train-set encoding scores.
    TrainScores,
    /// Test-sample projection scores for both gradients.
    TestScores,
    /// Gradient descent in a reduced subspace.
    Descend,
}

struct Context {
    config: ExperimentConfig,
    out: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path(name), text)?;
        Ok(())
    }

    fn config_json(&self) -> Value {
        serde_json::to_value(self.config.echo()).unwrap_or(Value::Null)
    }
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 for invalid input or usage, 2 for numerical failure.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = ExperimentConfig::load(cli.config.as_deref(), &cli.set, cli.seed)?;
    let out = cli.out.clone().unwrap_or_else(|| config.output_dir.clone());
    fs::create_dir_all(&out)?;
    let ctx = Context { config, out };
    match cli.command {
        Command::Generate => generate(&ctx),
        Command::Pca => pca(&ctx),
        Command::Gspca => fitted(&ctx, Algorithm::Gs),
        Command::Agspca => fitted(&ctx, Algorithm::Ags),
        Command::Egspca => fitted(&ctx, Algorithm::Egs),
        Command::Simulate => simulate(&ctx),
        Command::Gradient => gradient(&ctx),
        Command::TrainScores => train_scores(&ctx),
        Command::TestScores => test_scores(&ctx),
        Command::Descend => descend(&ctx),
    }
}

fn train_set(ctx: &Context) -> Result<SampleMatrix> {
    let c = &ctx.config;
    make_dataset(c.train_count, &c.train, c.k_min, c.k_max).map_err(|e| e.in_stage("generate"))
}

fn write_raster(ctx: &Context, name: &str, field: &nalgebra::DVector<f64>) -> Result<()> {
    let n = ctx.config.train.n;
    write_pgm(&ctx.path(name), field, n, n)
}

fn generate(ctx: &Context) -> Result<()> {
    let train = train_set(ctx)?;
    write_dataset(&ctx.path("train_dataset.csv"), &train)?;
    write_raster(ctx, "field_train_0.pgm", &train.sample(0))?;
    let c = &ctx.config;
    let test =
        crate::randfield::generate_sample(&c.test, c.test_index, c.k_min, c.k_max)?.mu_vector();
    let (nx, ny) = train.grid_shape();
    write_dataset(
        &ctx.path("test_field.csv"),
        &SampleMatrix::from_columns(std::slice::from_ref(&test), nx, ny)?,
    )?;
    write_raster(ctx, "field_test.pgm", &test)?;
    println!(
        "generated {} train samples on a {nx}x{ny} grid",
        train.count()
    );
    Ok(())
}

fn save_basis(ctx: &Context, algorithm: Algorithm, basis: &SpectralBasis) -> Result<()> {
    write_basis(&ctx.path(&format!("basis_{}.txt", algorithm.slug())), basis)?;
    ctx.write(
        &format!("spectrum_{}.csv", algorithm.slug()),
        &spectrum_csv(&basis.singular_values)?,
    )
}

fn pca(ctx: &Context) -> Result<()> {
    let train = train_set(ctx)?;
    let basis = crate::decomposition::pca_fit(&train).map_err(|e| e.in_stage("pca"))?;
    let n = crate::decomposition::select_dimension(&basis.singular_values, ctx.config.threshold)?;
    save_basis(ctx, Algorithm::Pca, &basis)?;
    println!(
        "PCA rank {}; N = {n} at threshold {}",
        basis.rank(),
        ctx.config.threshold
    );
    Ok(())
}

fn fitted(ctx: &Context, algorithm: Algorithm) -> Result<()> {
    let prep = prepare(&ctx.config)?;
    let bases = prep.fit_bases(ctx.config.gradient_kind)?;
    match algorithm {
        Algorithm::Gs => save_basis(ctx, algorithm, &bases.gs)?,
        Algorithm::Ags => {
            save_basis(ctx, algorithm, &bases.ags)?;
            let corr = &bases.ags_correction;
            let mut csv = String::from("component,sigma0,sigma1,b\n");
            for k in 0..corr.sigma1.len() {
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    k + 1,
                    fmt_f64(prep.pca.singular_values[k]),
                    fmt_f64(corr.sigma1[k]),
                    fmt_f64(bases.probe.b[k])
                );
            }
            ctx.write("agspca_corrections.csv", &csv)?;
            if !corr.degenerate_pairs.is_empty() {
                eprintln!(
                    "warning: {} near-degenerate coupled pairs left uncorrected",
                    corr.degenerate_pairs.len()
                );
            }
        }
        Algorithm::Egs => {
            let (n1, basis) = bases.egs.last().ok_or_else(|| {
                Error::invalid("eGS-PCA needs an N1 factor above 1 in scores.n1_factors")
            })?;
            save_basis(ctx, algorithm, basis)?;
            let picked = egspca_select_ranked(
                &bases.probe,
                &prep.pca.singular_values,
                prep.n,
                n1 - prep.n,
                ctx.config.tail_ranking,
            )?;
            let mut csv = String::from("position,component,b,sigma\n");
            for (p, &i) in picked.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    prep.n + p + 1,
                    i + 1,
                    fmt_f64(bases.probe.b[i]),
                    fmt_f64(prep.pca.singular_values[i])
                );
            }
            ctx.write("egspca_selection.csv", &csv)?;
        }
        Algorithm::Pca => unreachable!("plain PCA has its own subcommand"),
    }
    println!(
        "{} fitted with {} gradient, eps*|J|^2 = {}, N = {}",
        algorithm.label(),
        ctx.config.gradient_kind,
        ctx.config.eps_scaled,
        prep.n
    );
    Ok(())
}

fn simulate(ctx: &Context) -> Result<()> {
    let prep = prepare(&ctx.config)?;
    ctx.write("case.txt", &case_to_string(&prep.case))?;
    ctx.write(
        "rates_truth.csv",
        &rates_csv(&prep.case, &prep.case.observations),
    )?;
    let trial = prep.case.simulate(&prep.eta)?;
    ctx.write("rates_trial.csv", &rates_csv(&prep.case, &trial))?;
    write_raster(ctx, "field_truth.pgm", &prep.mu_star)?;
    write_raster(ctx, "field_trial.pgm", &prep.eta)?;
    println!("C(eta) = {:e}", prep.objective_at_eta);
    Ok(())
}

fn write_gradient(
    ctx: &Context,
    prep: &Prepared,
    probe: &GradientProbe,
    kind: GradientKind,
) -> Result<()> {
    write_vector(&ctx.path(&format!("gradient_{kind}.txt")), &probe.gradient)?;
    let mut csv = String::from("component,sigma,b\n");
    for (i, b) in probe.b.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{}",
            i + 1,
            fmt_f64(prep.pca.singular_values[i]),
            fmt_f64(*b)
        );
    }
    ctx.write(&format!("gradient_{kind}_coefficients.csv"), &csv)
}

fn gradient(ctx: &Context) -> Result<()> {
    let prep = prepare(&ctx.config)?;
    let kind = ctx.config.gradient_kind;
    let probe = prep.gradient(kind)?;
    write_gradient(ctx, &prep, &probe, kind)?;
    println!(
        "{kind} gradient: |J| = {:e}, N = {}",
        probe.gradient.norm(),
        prep.n
    );
    Ok(())
}

fn train_scores(ctx: &Context) -> Result<()> {
    let prep = prepare(&ctx.config)?;
    let (report, bases) = train_experiment(&prep)?;
    ctx.write("train_scores.csv", &report.train_csv())?;
    write_dataset(&ctx.path("train_dataset.csv"), &prep.train)?;
    save_basis(ctx, Algorithm::Pca, &prep.pca)?;
    save_basis(ctx, Algorithm::Gs, &bases.gs)?;
    save_basis(ctx, Algorithm::Ags, &bases.ags)?;
    if let Some((_, egs)) = bases.egs.last() {
        save_basis(ctx, Algorithm::Egs, egs)?;
    }
    write_gradient(ctx, &prep, &bases.probe, bases.kind)?;
    let value = serde_json::to_value(&report).map_err(|e| Error::Parse(e.to_string()))?;
    merge_report_json(&ctx.path("report.json"), "train", value, ctx.config_json())?;
    print!("{}", report.train_csv());
    Ok(())
}

fn test_scores(ctx: &Context) -> Result<()> {
    let prep = prepare(&ctx.config)?;
    let (report, _, projections) = test_experiment(&prep)?;
    ctx.write("test_scores.csv", &report.test_csv())?;
    write_raster(ctx, "projection_truth.pgm", &prep.mu_star)?;
    write_raster(ctx, "projection_trial.pgm", &prep.eta)?;
    for p in &projections {
        let name = format!("projection_{}_{}_{}.pgm", p.kind, p.algorithm.slug(), p.n1);
        write_raster(ctx, &name, &p.field)?;
    }
    let value = serde_json::to_value(&report).map_err(|e| Error::Parse(e.to_string()))?;
    merge_report_json(&ctx.path("report.json"), "test", value, ctx.config_json())?;
    print!("{}", report.test_csv());
    if let Some(c) = report.gradient_cosine {
        println!("cosine(J1, J2) = {c:.4}");
    }
    Ok(())
}

fn descend(ctx: &Context) -> Result<()> {
    let prep = prepare(&ctx.config)?;
    let settings = &ctx.config.descent;
    let basis = match settings.basis {
        Algorithm::Pca => prep.pca.clone(),
        other => {
            let bases = prep.fit_bases(ctx.config.gradient_kind)?;
            bases
                .basis(&prep, other, prep.n)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("{} has no basis at N", other.label())))?
        }
    };
    let span = crate::decomposition::span_basis(&basis, prep.n)?;
    let a0 = project(&span, &prep.eta, prep.n)?.coefficients;
    let scale = if settings.normalize && prep.objective_at_eta > 0.0 {
        prep.objective_at_eta
    } else {
        1.0
    };
    let objective = Scaled {
        inner: &prep.case,
        scale,
    };
    let run = subspace_descent_traced(&objective, &span, prep.n, &a0, settings.steps, settings.lr)
        .map_err(|e| e.in_stage("descend"))?;

    let mut csv = String::from("step,objective\n");
    for (i, c) in run.history.iter().enumerate() {
        let _ = writeln!(csv, "{i},{}", fmt_f64(c * scale));
    }
    ctx.write("descent.csv", &csv)?;
    let field = span.components.columns(0, prep.n) * &run.coefficients;
    write_raster(ctx, "descent_field.pgm", &field)?;
    println!(
        "{} subspace, N = {}: C {:e} -> {:e} in {} steps",
        settings.basis.label(),
        prep.n,
        run.history[0] * scale,
        run.objective * scale,
        settings.steps
    );
    Ok(())
}
