//! Result files.
//!
//! Row CSV columns, in order:
//!
//! | column | content |
//! |---|---|
//! | `geometry` | `contacts8` / `contacts40` |
//! | `target_id` | index in the config's target list (or grid position for sweeps) |
//! | `position_index` | grid position index |
//! | `x_mm`, `y_mm`, `z_mm` | target position |
//! | `orientation` | `parallel` / `perpendicular` / `custom` |
//! | `method`, `variant` | solver and variant label |
//! | `psnr_db`, `realization`, `noise_seed` | empty when noiseless |
//! | `status`, `message` | `ok` or `failed` with the error text |
//! | `gamma`, `xi`, `theta` | metrics of the emitted pattern |
//! | `feasible` | `Γ ≥ Γ₀` |
//! | `grid_i`, `grid_j` | lattice coordinates of the best point |
//! | `param1_name`, `param1_db`, `param2_name`, `param2_db` | best hyperparameters |
//! | `iterations`, `failed_points` | solver iterations, failed lattice points |
//! | `reference_activation` | constant 3.85 A/m² for plotting |
//! | `currents_ma` | `;`-separated currents |
//!
//! Floats are written in shortest round-trip form (`inf`, `-inf`, `NaN`
//! for non-finite values). Runtimes go only to the metadata file.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::config::Format;
use super::study::{StudyMetadata, StudyResult, StudyRow, SummaryBlock};
use crate::model::ACTIVATION_REFERENCE;
use crate::search::axis_names;
use crate::{Error, Result};

pub const ROW_COLUMNS: [&str; 28] = [
    "geometry",
    "target_id",
    "position_index",
    "x_mm",
    "y_mm",
    "z_mm",
    "orientation",
    "method",
    "variant",
    "psnr_db",
    "realization",
    "noise_seed",
    "status",
    "message",
    "gamma",
    "xi",
    "theta",
    "feasible",
    "grid_i",
    "grid_j",
    "param1_name",
    "param1_db",
    "param2_name",
    "param2_db",
    "iterations",
    "failed_points",
    "reference_activation",
    "currents_ma",
];

pub const SUMMARY_COLUMNS: [&str; 15] = [
    "geometry",
    "target_id",
    "orientation",
    "variant",
    "psnr_db",
    "metric",
    "n",
    "median",
    "q1",
    "q3",
    "iqr",
    "whisker_low",
    "whisker_high",
    "outlier_count",
    "outliers",
];

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn opt<T>(v: Option<T>, f: impl FnOnce(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

fn join(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(";")
}

fn row_record(r: &StudyRow) -> Vec<String> {
    let (n1, n2) = axis_names(r.method).unwrap_or(("", ""));
    let hp = |name: &str| opt(r.hyperparameters.get(name), |h| fmt_f64(h.db));
    let named = |name: &str| if r.hyperparameters.contains_key(name) { name.to_string() } else { String::new() };
    vec![
        r.geometry.as_str().into(),
        r.target_id.to_string(),
        r.position_index.to_string(),
        fmt_f64(r.position_mm[0]),
        fmt_f64(r.position_mm[1]),
        fmt_f64(r.position_mm[2]),
        r.orientation.as_str().into(),
        r.method.as_str().into(),
        r.variant.clone(),
        opt(r.psnr_db, fmt_f64),
        opt(r.realization, |k| k.to_string()),
        opt(r.noise_seed, |s| s.to_string()),
        r.status.as_str().into(),
        r.message.clone().unwrap_or_default(),
        opt(r.gamma, fmt_f64),
        opt(r.xi, fmt_f64),
        opt(r.theta, fmt_f64),
        opt(r.feasible, |b| b.to_string()),
        opt(r.grid_coordinates, |c| c.0.to_string()),
        opt(r.grid_coordinates, |c| c.1.to_string()),
        named(n1),
        hp(n1),
        named(n2),
        hp(n2),
        r.iterations.to_string(),
        r.failed_points.to_string(),
        fmt_f64(ACTIVATION_REFERENCE),
        join(&r.currents_ma),
    ]
}

fn summary_record(s: &SummaryBlock) -> Vec<String> {
    let b = &s.stats;
    vec![
        s.geometry.as_str().into(),
        s.target_id.to_string(),
        s.orientation.as_str().into(),
        s.variant.clone(),
        opt(s.psnr_db, fmt_f64),
        s.metric.as_str().into(),
        b.n.to_string(),
        fmt_f64(b.median),
        fmt_f64(b.q1),
        fmt_f64(b.q3),
        fmt_f64(b.iqr),
        fmt_f64(b.whisker_low),
        fmt_f64(b.whisker_high),
        b.outliers.len().to_string(),
        join(&b.outliers),
    ]
}

fn write_table<W: Write>(out: W, header: &[&str], records: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for rec in records {
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn write_rows_csv<W: Write>(result: &StudyResult, out: W) -> Result<()> {
    write_table(out, &ROW_COLUMNS, result.rows.iter().map(row_record))
}

pub fn write_summary_csv<W: Write>(result: &StudyResult, out: W) -> Result<()> {
    write_table(out, &SUMMARY_COLUMNS, result.summaries.iter().map(summary_record))
}

pub fn write_json<W: Write>(result: &StudyResult, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, result)?;
    out.write_all(b"\n").map_err(|e| Error::io("<json output>", e))?;
    Ok(())
}

pub fn read_json<R: Read>(input: R) -> Result<StudyResult> {
    Ok(serde_json::from_reader(input)?)
}

/// Paths written by [`emit`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emitted {
    pub files: Vec<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, w: BufWriter<fs::File>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .sync_all()
        .map_err(|e| Error::io(path, e))
}

fn rewrap(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        Error::Csv(c) => Error::Config(format!("{}: {c}", path.display())),
        other => other,
    }
}

/// Writes `<stem>.csv` + `<stem>.summary.csv` and/or `<stem>.json` into
/// `dir`, plus `<stem>.meta.json` when `metadata` is given.
pub fn emit(
    result: &StudyResult,
    metadata: Option<&StudyMetadata>,
    dir: &Path,
    stem: &str,
    formats: &[Format],
) -> Result<Emitted> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut write = |name: String, f: &dyn Fn(&mut BufWriter<fs::File>) -> Result<()>| -> Result<()> {
        let path = dir.join(name);
        let mut w = create(&path)?;
        f(&mut w).map_err(|e| rewrap(&path, e))?;
        finish(&path, w)?;
        files.push(path);
        Ok(())
    };
    if formats.contains(&Format::Csv) {
        write(format!("{stem}.csv"), &|w| write_rows_csv(result, w))?;
        write(format!("{stem}.summary.csv"), &|w| write_summary_csv(result, w))?;
    }
    if formats.contains(&Format::Json) {
        write(format!("{stem}.json"), &|w| write_json(result, w))?;
    }
    if let Some(meta) = metadata {
        write(format!("{stem}.meta.json"), &|w| {
            serde_json::to_writer_pretty(&mut *w, meta)?;
            w.write_all(b"\n").map_err(|e| Error::io("<json output>", e))
        })?;
    }
    Ok(Emitted { files })
}
