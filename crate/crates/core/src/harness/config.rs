use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::{case_from_map, parse_f64, parse_key_values, parse_usize, read_case};
use crate::objective_sensitive::TailRanking;
use crate::randfield::SurfaceParams;
use crate::reservoir::{FdStep, ReservoirCase};

/// XOR mask turning `--seed` into the test-sample seed.
pub const TEST_SEED_MASK: u64 = 0x5EED;

/// The built-in configuration; every other config file is read as a set of
/// overrides on top of it.
pub const DEFAULT_CONFIG: &str = "\
# 21x21 grid, 441 train samples, one test sample.
train.n=21
train.rl=3
train.h=1
train.cl=1
train.count=441
train.seed=1
test.n=21
test.rl=6
test.h=1
test.cl=1
test.seed=24300
test.index=0
field.kmin=1
field.kmax=100
pca.threshold=0.95
gs.eps_scaled=100
scores.n1_factors=1,1.5
gradient.kind=central
gradient.fd_step=sigma:0.01
egs.ranking=energy
ags.order=unperturbed
descend.basis=gspca
descend.steps=50
descend.lr=0.05
descend.normalize=true
output.dir=out
";

const KNOWN_KEYS: &[&str] = &[
    "train.n",
    "train.rl",
    "train.h",
    "train.cl",
    "train.count",
    "train.seed",
    "test.n",
    "test.rl",
    "test.h",
    "test.cl",
    "test.seed",
    "test.index",
    "field.kmin",
    "field.kmax",
    "pca.threshold",
    "gs.eps_scaled",
    "scores.n1_factors",
    "gradient.kind",
    "gradient.fd_step",
    "egs.ranking",
    "ags.order",
    "descend.basis",
    "descend.steps",
    "descend.lr",
    "descend.normalize",
    "output.dir",
    "case.file",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GradientKind {
    /// `J⁽¹⁾`: central differences over the first `2N` PCA components.
    Central,
    /// `J⁽²⁾`: two-point approximation towards the ground truth.
    Directional,
}

impl GradientKind {
    pub const ALL: [GradientKind; 2] = [GradientKind::Central, GradientKind::Directional];

    pub fn as_str(self) -> &'static str {
        match self {
            GradientKind::Central => "central",
            GradientKind::Directional => "directional",
        }
    }
}

impl fmt::Display for GradientKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GradientKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "central" | "j1" => Ok(GradientKind::Central),
            "directional" | "j2" => Ok(GradientKind::Directional),
            other => Err(Error::Parse(format!("unknown gradient kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Pca,
    Gs,
    Ags,
    Egs,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Pca => "PCA",
            Algorithm::Gs => "GS-PCA",
            Algorithm::Ags => "aGS-PCA",
            Algorithm::Egs => "eGS-PCA",
        }
    }

    /// Lower-case name used in file names and config values.
    pub fn slug(self) -> &'static str {
        match self {
            Algorithm::Pca => "pca",
            Algorithm::Gs => "gspca",
            Algorithm::Ags => "agspca",
            Algorithm::Egs => "egspca",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(Algorithm::Pca),
            "gspca" | "gs-pca" | "gs" => Ok(Algorithm::Gs),
            "agspca" | "ags-pca" | "ags" => Ok(Algorithm::Ags),
            "egspca" | "egs-pca" | "egs" => Ok(Algorithm::Egs),
            other => Err(Error::Parse(format!("unknown algorithm `{other}`"))),
        }
    }
}

fn parse_fd_step(s: &str) -> Result<FdStep> {
    let (kind, value) = s.split_once(':').ok_or_else(|| {
        Error::Parse(format!(
            "fd step `{s}` should look like sigma:0.01 or abs:0.01"
        ))
    })?;
    let v = parse_f64(value, "gradient.fd_step")?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::OutOfRange(format!(
            "fd step must be positive, got {v}"
        )));
    }
    match kind.trim() {
        "sigma" => Ok(FdStep::SigmaScaled(v)),
        "abs" => Ok(FdStep::Absolute(v)),
        other => Err(Error::Parse(format!("unknown fd step policy `{other}`"))),
    }
}

fn fd_step_string(step: FdStep) -> String {
    match step {
        FdStep::SigmaScaled(v) => format!("sigma:{v}"),
        FdStep::Absolute(v) => format!("abs:{v}"),
    }
}

fn parse_bool(s: &str, what: &str) -> Result<bool> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Parse(format!("bad boolean `{s}` in {what}"))),
    }
}

fn parse_u64(s: &str, what: &str) -> Result<u64> {
    let s = s.trim();
    let parsed = match s.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse::<u64>(),
    };
    parsed.map_err(|_| Error::Parse(format!("bad unsigned integer `{s}` in {what}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentSettings {
    pub basis: Algorithm,
    pub steps: usize,
    pub lr: f64,
    /// Descend on `C / C(η)` instead of `C`.
    pub normalize: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub train: SurfaceParams,
    pub train_count: usize,
    pub test: SurfaceParams,
    pub test_index: u64,
    pub k_min: f64,
    pub k_max: f64,
    pub threshold: f64,
    /// Dimensionless sensitivity `ε‖J‖²`.
    pub eps_scaled: f64,
    pub n1_factors: Vec<f64>,
    pub gradient_kind: GradientKind,
    pub fd_step: FdStep,
    pub tail_ranking: TailRanking,
    pub ags_resort: bool,
    /// Case template without observations.
    pub case: ReservoirCase,
    pub descent: DescentSettings,
    pub output_dir: PathBuf,
    /// The merged key/value set the config was built from.
    pub entries: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::load(None, &[], None).expect("built-in config is valid")
    }
}

impl ExperimentConfig {
    /// Defaults, then the file at `path`, then `key=value` overrides, then
    /// `seed` (which sets `train.seed = seed` and
    /// `test.seed = seed ^ TEST_SEED_MASK`).
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut entries = parse_key_values(DEFAULT_CONFIG)?;
        let mut base_dir = None;
        if let Some(p) = path {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", p.display())))?;
            entries.extend(parse_key_values(&text)?);
            base_dir = p.parent().map(Path::to_path_buf);
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("override `{o}` is not key=value")))?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        if let Some(s) = seed {
            entries.insert("train.seed".into(), s.to_string());
            entries.insert("test.seed".into(), (s ^ TEST_SEED_MASK).to_string());
        }
        Self::from_entries(entries, base_dir.as_deref())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = parse_key_values(DEFAULT_CONFIG)?;
        entries.extend(parse_key_values(text)?);
        Self::from_entries(entries, None)
    }

    fn from_entries(entries: BTreeMap<String, String>, base_dir: Option<&Path>) -> Result<Self> {
        for key in entries.keys() {
            let inline_case = key.starts_with("case.") && key != "case.file";
            if !KNOWN_KEYS.contains(&key.as_str()) && !inline_case {
                return Err(Error::invalid(format!("unknown config key `{key}`")));
            }
        }
        let get = |k: &str| entries.get(k).map(String::as_str).unwrap_or_default();
        let f = |k: &str| parse_f64(get(k), k);
        let u = |k: &str| parse_usize(get(k), k);

        let train = SurfaceParams::new(
            u("train.n")?,
            f("train.rl")?,
            f("train.h")?,
            f("train.cl")?,
            parse_u64(get("train.seed"), "train.seed")?,
        )?;
        let test = SurfaceParams::new(
            u("test.n")?,
            f("test.rl")?,
            f("test.h")?,
            f("test.cl")?,
            parse_u64(get("test.seed"), "test.seed")?,
        )?;
        if test.n != train.n {
            return Err(Error::invalid(format!(
                "test.n = {} must equal train.n = {}",
                test.n, train.n
            )));
        }
        let train_count = u("train.count")?;
        if train_count == 0 {
            return Err(Error::OutOfRange("train.count must be at least 1".into()));
        }
        let (k_min, k_max) = (f("field.kmin")?, f("field.kmax")?);
        if !(k_min > 0.0 && k_max > k_min) {
            return Err(Error::OutOfRange(format!(
                "need 0 < field.kmin < field.kmax, got {k_min}, {k_max}"
            )));
        }
        let threshold = f("pca.threshold")?;
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::OutOfRange(format!(
                "pca.threshold must lie in (0, 1], got {threshold}"
            )));
        }
        let eps_scaled = f("gs.eps_scaled")?;
        if !(eps_scaled >= 0.0 && eps_scaled.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "gs.eps_scaled must be >= 0, got {eps_scaled}"
            )));
        }
        let n1_factors = get("scores.n1_factors")
            .split(',')
            .map(|s| parse_f64(s, "scores.n1_factors"))
            .collect::<Result<Vec<f64>>>()?;
        if n1_factors.iter().any(|&x| !(x >= 1.0 && x.is_finite())) {
            return Err(Error::OutOfRange(
                "scores.n1_factors must all be >= 1".into(),
            ));
        }
        let ags_resort = match get("ags.order") {
            "unperturbed" => false,
            "sorted" => true,
            other => {
                return Err(Error::Parse(format!(
                    "ags.order must be unperturbed or sorted, got `{other}`"
                )))
            }
        };
        let descent = DescentSettings {
            basis: get("descend.basis").parse()?,
            steps: u("descend.steps")?,
            lr: f("descend.lr")?,
            normalize: parse_bool(get("descend.normalize"), "descend.normalize")?,
        };
        if !(descent.lr > 0.0 && descent.lr.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "descend.lr must be positive, got {}",
                descent.lr
            )));
        }

        let inline = entries
            .keys()
            .any(|k| k.starts_with("case.") && k != "case.file");
        let case = match entries.get("case.file") {
            Some(_) if inline => {
                return Err(Error::invalid(
                    "give either case.file or inline case.* keys, not both",
                ))
            }
            Some(file) => {
                let p = Path::new(file);
                let p = match base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.to_path_buf(),
                };
                read_case(&p)?
            }
            None if inline => case_from_map(&entries, "case.")?,
            None => ReservoirCase::five_spot(train.n, train.n)?,
        };
        if case.grid.nx != train.n || case.grid.ny != train.n {
            return Err(Error::invalid(format!(
                "case grid {}x{} does not match the {}x{} field grid",
                case.grid.nx, case.grid.ny, train.n, train.n
            )));
        }

        Ok(ExperimentConfig {
            train,
            train_count,
            test,
            test_index: parse_u64(get("test.index"), "test.index")?,
            k_min,
            k_max,
            threshold,
            eps_scaled,
            n1_factors,
            gradient_kind: get("gradient.kind").parse()?,
            fd_step: parse_fd_step(get("gradient.fd_step"))?,
            tail_ranking: get("egs.ranking").parse()?,
            ags_resort,
            case,
            descent,
            output_dir: PathBuf::from(get("output.dir")),
            entries,
        })
    }

    /// The settings that determine experiment results, as sorted key/value
    /// pairs (the output directory is left out).
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut out = self.entries.clone();
        out.remove("output.dir");
        out.insert("gradient.fd_step".into(), fd_step_string(self.fd_step));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let c = ExperimentConfig::default();
        assert_eq!(c.train.n, 21);
        assert_eq!(c.train_count, 441);
        assert_eq!(c.test.rl, 6.0);
        assert_eq!(c.n1_factors, vec![1.0, 1.5]);
        assert_eq!(c.fd_step, FdStep::SigmaScaled(0.01));
        assert_eq!(c.tail_ranking, TailRanking::Energy);
        assert_eq!(c.case.wells.len(), 5);
        assert!(!c.ags_resort);
    }

    #[test]
    fn overrides_and_seed() {
        let c = ExperimentConfig::load(
            None,
            &["gs.eps_scaled=0".into(), "gradient.kind=j2".into()],
            Some(7),
        )
        .unwrap();
        assert_eq!(c.eps_scaled, 0.0);
        assert_eq!(c.gradient_kind, GradientKind::Directional);
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.test.seed, 7 ^ TEST_SEED_MASK);
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "pca.threshold=0",
            "pca.threshold=1.5",
            "gs.eps_scaled=-1",
            "scores.n1_factors=1,0.5",
            "gradient.fd_step=0.01",
            "gradient.fd_step=sigma:-1",
            "bogus.key=1",
            "test.n=20",
            "train.cl=5",
            "ags.order=random",
        ] {
            assert!(ExperimentConfig::from_text(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn inline_case_keys() {
        let text = "train.n=3\ntest.n=3\ntrain.rl=3\ntest.rl=3\n\
            case.grid.nx=3\ncase.grid.ny=3\ncase.grid.dx=5\ncase.grid.dy=5\ncase.grid.dz=2\n\
            case.fluid.viscosity=0.001\n\
            case.well.I.role=injector\ncase.well.I.ix=1\ncase.well.I.iy=1\ncase.well.I.bhp=2e7\ncase.well.I.rw=0.1\n\
            case.well.P.role=producer\ncase.well.P.ix=0\ncase.well.P.iy=0\ncase.well.P.bhp=1e7\ncase.well.P.rw=0.1\n";
        let c = ExperimentConfig::from_text(text).unwrap();
        assert_eq!(c.case.grid.dx, 5.0);
        assert_eq!(c.case.wells.len(), 2);
        assert_eq!(c.case.wells[0].name, "I");
    }

    #[test]
    fn parse_enums() {
        assert_eq!("GS-PCA".parse::<Algorithm>().unwrap(), Algorithm::Gs);
        assert!("nope".parse::<Algorithm>().is_err());
        assert_eq!(parse_u64("0x5EED", "x").unwrap(), 24301);
    }
}
