//! Plain-text file formats.
//!
//! Basis file (`basis_*.txt`):
//!
//! ```text
//! OSPCA-BASIS v1 <d> <m> metric=euclidean discarded=<e>
//! OSPCA-BASIS v1 <d> <m> metric=gradient eps=<ε> J=<file> discarded=<e>
//! <σ_1> <σ_2> ... <σ_m>
//! <d rows of m component entries>
//! ```
//!
//! `J=<file>` names a sibling file holding the gradient, one value per line.
//! Numbers use Rust's shortest round-trip exponent formatting, so a written
//! file reads back bit-exactly.
//!
//! Dataset CSV: a `# ospca-dataset nx=<nx> ny=<ny> count=<M>` header and one
//! row-major flattened sample per line.
//!
//! Case files and experiment configs are flat `key=value` lines; `#` starts a
//! comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::decomposition::{energy_fraction, MetricDescriptor, SampleMatrix, SpectralBasis};
use crate::error::{Error, Result};
use crate::reservoir::{Grid2D, ReservoirCase, Well, WellRole};

pub const BASIS_MAGIC: &str = "OSPCA-BASIS";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub(crate) fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad number `{s}` in {what}")))
}

pub(crate) fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("bad integer `{s}` in {what}")))
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    let mut out = String::new();
    for x in v.iter() {
        out.push_str(&fmt_f64(*x));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let text = fs::read_to_string(path)?;
    let vals = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| parse_f64(l, "vector file"))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(vals))
}

fn gradient_file_for(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("basis");
    path.with_file_name(format!("{stem}.J.txt"))
}

/// Writes a basis; gradient-weighted metrics also write `<stem>.J.txt`.
pub fn write_basis(path: &Path, basis: &SpectralBasis) -> Result<()> {
    let (d, m) = basis.components.shape();
    let mut out = format!("{BASIS_MAGIC} v1 {d} {m} ");
    match &basis.metric {
        MetricDescriptor::Euclidean => out.push_str("metric=euclidean"),
        MetricDescriptor::GradientWeighted { gradient, epsilon } => {
            let jpath = gradient_file_for(path);
            write_vector(&jpath, gradient)?;
            let name = jpath
                .file_name()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            let _ = write!(out, "metric=gradient eps={} J={name}", fmt_f64(*epsilon));
        }
    }
    let _ = writeln!(out, " discarded={}", fmt_f64(basis.discarded_energy));
    let sigma: Vec<String> = basis.singular_values.iter().map(|v| fmt_f64(*v)).collect();
    out.push_str(&sigma.join(" "));
    out.push('\n');
    for r in 0..d {
        let row: Vec<String> = (0..m).map(|c| fmt_f64(basis.components[(r, c)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_basis(path: &Path) -> Result<SpectralBasis> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty basis file".into()))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() < 5 || tokens[0] != BASIS_MAGIC || tokens[1] != "v1" {
        return Err(Error::Parse(format!("not an {BASIS_MAGIC} v1 file")));
    }
    let d = parse_usize(tokens[2], "basis header")?;
    let m = parse_usize(tokens[3], "basis header")?;
    let fields: BTreeMap<&str, &str> = tokens[4..]
        .iter()
        .filter_map(|t| t.split_once('='))
        .collect();
    let metric = match fields.get("metric").copied() {
        Some("euclidean") => MetricDescriptor::Euclidean,
        Some("gradient") => {
            let eps = parse_f64(fields.get("eps").copied().unwrap_or(""), "basis header eps")?;
            let jname = fields
                .get("J")
                .ok_or_else(|| Error::Parse("gradient metric without J file".into()))?;
            let jpath = path.parent().unwrap_or(Path::new(".")).join(jname);
            MetricDescriptor::gradient_weighted(read_vector(&jpath)?, eps)?
        }
        other => return Err(Error::Parse(format!("unknown metric {other:?}"))),
    };
    let discarded = match fields.get("discarded") {
        Some(v) => parse_f64(v, "basis header discarded")?,
        None => 0.0,
    };
    let sigma_line = lines.next().unwrap_or_default();
    let sigma = sigma_line
        .split_whitespace()
        .map(|s| parse_f64(s, "singular values"))
        .collect::<Result<Vec<_>>>()?;
    let mut entries = Vec::with_capacity(d * m);
    for (r, line) in lines.enumerate().take(d) {
        let row = line
            .split_whitespace()
            .map(|s| parse_f64(s, "component row"))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != m {
            return Err(Error::Parse(format!(
                "component row {r} has {} entries, expected {m}",
                row.len()
            )));
        }
        entries.extend(row);
    }
    if entries.len() != d * m {
        return Err(Error::Parse(format!(
            "basis file has {} entries, expected {}",
            entries.len(),
            d * m
        )));
    }
    let mut basis = SpectralBasis::new(DMatrix::from_row_slice(d, m, &entries), sigma, metric)?;
    basis.discarded_energy = discarded;
    Ok(basis)
}

/// `index,sigma,omega` for every component (1-based index).
pub fn spectrum_csv(singular_values: &[f64]) -> Result<String> {
    let mut out = String::from("index,sigma,omega\n");
    for (i, s) in singular_values.iter().enumerate() {
        let omega = energy_fraction(singular_values, i + 1)?;
        let _ = writeln!(out, "{},{},{}", i + 1, fmt_f64(*s), fmt_f64(omega));
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, samples: &SampleMatrix) -> Result<()> {
    let (nx, ny) = samples.grid_shape();
    let mut out = format!(
        "# ospca-dataset nx={nx} ny={ny} count={}\n",
        samples.count()
    );
    for s in 0..samples.count() {
        let row: Vec<String> = samples
            .data()
            .column(s)
            .iter()
            .map(|v| fmt_f64(*v))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<SampleMatrix> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let fields: BTreeMap<&str, &str> = header
        .trim_start_matches('#')
        .split_whitespace()
        .filter_map(|t| t.split_once('='))
        .collect();
    let get = |k: &str| -> Result<usize> {
        parse_usize(
            fields
                .get(k)
                .ok_or_else(|| Error::Parse(format!("dataset header missing {k}")))?,
            "dataset header",
        )
    };
    let (nx, ny) = (get("nx")?, get("ny")?);
    let columns = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| parse_f64(v, "dataset row"))
                .collect::<Result<Vec<_>>>()
                .map(DVector::from_vec)
        })
        .collect::<Result<Vec<_>>>()?;
    if let Ok(count) = get("count") {
        if count != columns.len() {
            return Err(Error::Parse(format!(
                "dataset header says {count} samples, found {}",
                columns.len()
            )));
        }
    }
    SampleMatrix::from_columns(&columns, nx, ny)
}

/// Plain-text 16-bit PGM of a row-major field; the value range is kept in a
/// comment line.
pub fn pgm_string(field: &DVector<f64>, nx: usize, ny: usize) -> Result<String> {
    if field.len() != nx * ny {
        return Err(Error::DimensionMismatch {
            what: "raster size",
            expected: nx * ny,
            actual: field.len(),
        });
    }
    let lo = field.min();
    let hi = field.max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!(
        "P2\n# min={} max={}\n{nx} {ny}\n65535\n",
        fmt_f64(lo),
        fmt_f64(hi)
    );
    for iy in 0..ny {
        let row: Vec<String> = (0..nx)
            .map(|ix| {
                let v = ((field[iy * nx + ix] - lo) / span * 65535.0).round();
                format!("{}", v as u32)
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, field: &DVector<f64>, nx: usize, ny: usize) -> Result<()> {
    fs::write(path, pgm_string(field, nx, ny)?)?;
    Ok(())
}

pub fn rates_csv(case: &ReservoirCase, rates: &DVector<f64>) -> String {
    let mut out = String::from("well,role,cell,rate_m3_per_s\n");
    for (w, q) in case.wells.iter().zip(rates.iter()) {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            w.name,
            w.role.as_str(),
            w.cell,
            fmt_f64(*q)
        );
    }
    out
}

/// Parses `key=value` lines into an ordered map; duplicate keys are an error.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!("line {}: expected key=value, got `{line}`", no + 1))
        })?;
        let k = k.trim().to_string();
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Parse(format!(
                "line {}: duplicate key `{k}`",
                no + 1
            )));
        }
    }
    Ok(map)
}

/// Reads a case from `grid.*`, `fluid.*`, `well.<name>.*` and optional
/// `observations` keys (all keys relative to `prefix`).
pub fn case_from_map(map: &BTreeMap<String, String>, prefix: &str) -> Result<ReservoirCase> {
    let get = |k: &str| map.get(&format!("{prefix}{k}")).map(String::as_str);
    let req =
        |k: &str| get(k).ok_or_else(|| Error::Parse(format!("case is missing `{prefix}{k}`")));
    let grid = Grid2D {
        nx: parse_usize(req("grid.nx")?, "grid.nx")?,
        ny: parse_usize(req("grid.ny")?, "grid.ny")?,
        dx: parse_f64(req("grid.dx")?, "grid.dx")?,
        dy: parse_f64(req("grid.dy")?, "grid.dy")?,
        dz: parse_f64(req("grid.dz")?, "grid.dz")?,
    };
    let viscosity = parse_f64(req("fluid.viscosity")?, "fluid.viscosity")?;

    let well_prefix = format!("{prefix}well.");
    let mut names: Vec<String> = Vec::new();
    for key in map.keys() {
        if let Some(rest) = key.strip_prefix(&well_prefix) {
            let name = rest
                .split_once('.')
                .map(|(n, _)| n.to_string())
                .ok_or_else(|| Error::Parse(format!("bad well key `{key}`")))?;
            if !names.contains(&name) {
                names.push(name);
            }
        }
    }
    let mut wells = Vec::new();
    for name in names {
        let wk = |f: &str| req(&format!("well.{name}.{f}"));
        let ix = parse_usize(wk("ix")?, "well ix")?;
        let iy = parse_usize(wk("iy")?, "well iy")?;
        if ix >= grid.nx || iy >= grid.ny {
            return Err(Error::invalid(format!(
                "well {name} at ({ix}, {iy}) lies outside the grid"
            )));
        }
        wells.push(Well {
            cell: grid.index(ix, iy),
            bhp: parse_f64(wk("bhp")?, "well bhp")?,
            rw: parse_f64(wk("rw")?, "well rw")?,
            role: wk("role")?.parse::<WellRole>()?,
            name,
        });
    }
    // Injectors first, then producers, each by name.
    wells.sort_by(|a, b| {
        (a.role == WellRole::Producer, &a.name).cmp(&(b.role == WellRole::Producer, &b.name))
    });
    let observations = match get("observations") {
        Some(v) => Some(DVector::from_vec(
            v.split(',')
                .map(|s| parse_f64(s, "observations"))
                .collect::<Result<Vec<_>>>()?,
        )),
        None => None,
    };
    ReservoirCase::new(grid, wells, viscosity, observations)
}

pub fn case_to_string(case: &ReservoirCase) -> String {
    let g = &case.grid;
    let mut out = String::new();
    let _ = writeln!(out, "grid.nx={}\ngrid.ny={}", g.nx, g.ny);
    let _ = writeln!(
        out,
        "grid.dx={}\ngrid.dy={}\ngrid.dz={}",
        fmt_f64(g.dx),
        fmt_f64(g.dy),
        fmt_f64(g.dz)
    );
    let _ = writeln!(out, "fluid.viscosity={}", fmt_f64(case.viscosity));
    for w in &case.wells {
        let (ix, iy) = (w.cell % g.nx, w.cell / g.nx);
        let _ = writeln!(out, "well.{}.role={}", w.name, w.role.as_str());
        let _ = writeln!(out, "well.{}.ix={ix}\nwell.{}.iy={iy}", w.name, w.name);
        let _ = writeln!(
            out,
            "well.{}.bhp={}\nwell.{}.rw={}",
            w.name,
            fmt_f64(w.bhp),
            w.name,
            fmt_f64(w.rw)
        );
    }
    let obs: Vec<String> = case.observations.iter().map(|v| fmt_f64(*v)).collect();
    let _ = writeln!(out, "observations={}", obs.join(","));
    out
}

pub fn read_case(path: &Path) -> Result<ReservoirCase> {
    case_from_map(&parse_key_values(&fs::read_to_string(path)?)?, "")
}
