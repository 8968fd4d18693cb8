//! Text exchange formats for lead fields.
//!
//! ```text
//! LEADFIELD v1 N=<rows> K=<columns>
//! <K floats>            (N lines, shortest round-trip decimal)
//! METADATA
//! <JSON: provenance, grid, contacts, noise>
//! ```
//!
//! The CSV variant carries the bare matrix, one row per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{LeadField, NoiseSpec, Provenance};
use crate::model::{ContactArray, DofGrid};
use crate::{Error, Result};

const MAGIC: &str = "LEADFIELD";
const VERSION: &str = "v1";
const TRAILER: &str = "METADATA";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    provenance: Provenance,
    grid: DofGrid,
    contacts: ContactArray,
    #[serde(default)]
    noise: Option<NoiseSpec>,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn stream_err(e: std::io::Error) -> Error {
    Error::io("<stream>", e)
}

pub fn write_leadfield<W: Write>(field: &LeadField, mut out: W) -> Result<()> {
    let m = field.matrix();
    writeln!(out, "{MAGIC} {VERSION} N={} K={}", m.nrows(), m.ncols()).map_err(stream_err)?;
    let mut line = String::new();
    for i in 0..m.nrows() {
        line.clear();
        for j in 0..m.ncols() {
            if j > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{:e}", m[(i, j)]));
        }
        writeln!(out, "{line}").map_err(stream_err)?;
    }
    writeln!(out, "{TRAILER}").map_err(stream_err)?;
    let meta = Metadata {
        provenance: field.provenance(),
        grid: field.grid().clone(),
        contacts: field.contacts().clone(),
        noise: field.noise().copied(),
    };
    serde_json::to_writer(&mut out, &meta)?;
    writeln!(out).map_err(stream_err)?;
    out.flush().map_err(stream_err)
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    let bad = || parse_err(1, 1, format!("expected `{MAGIC} {VERSION} N=<int> K=<int>`, found {line:?}"));
    if parts.len() != 4 || parts[0] != MAGIC || parts[1] != VERSION {
        return Err(bad());
    }
    let n = parts[2].strip_prefix("N=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    let k = parts[3].strip_prefix("K=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    Ok((n, k))
}

/// Parses one whitespace-separated matrix row; `line_no` is 1-based and
/// `row` is the 0-based matrix row for error messages.
fn parse_row(text: &str, sep: impl Fn(char) -> bool, k: usize, line_no: usize, row: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = text.split(sep).map(str::trim).filter(|s| !s.is_empty()).collect();
    if fields.len() != k {
        return Err(parse_err(
            line_no,
            1,
            format!("row {row} has {} entries, expected K={k}", fields.len()),
        ));
    }
    fields
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let v: f64 = s
                .parse()
                .map_err(|_| parse_err(line_no, j + 1, format!("entry ({row}, {j}) is not a number: {s:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(line_no, j + 1, format!("non-finite entry at ({row}, {j}): {s}")))
            }
        })
        .collect()
}

pub fn read_leadfield<R: BufRead>(input: R) -> Result<LeadField> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(1, 1, "empty input"))?
        .map_err(stream_err)?;
    let (n, k) = parse_header(&header)?;
    let mut data = Vec::with_capacity(n * k);
    let mut rows = 0usize;
    let mut trailer_seen = false;
    let mut line_no = 1;
    for line in lines.by_ref() {
        let line = line.map_err(stream_err)?;
        line_no += 1;
        if line.trim() == TRAILER {
            trailer_seen = true;
            break;
        }
        if rows == n {
            return Err(parse_err(
                line_no,
                1,
                format!("header declares N={n} rows but the payload has more"),
            ));
        }
        data.extend(parse_row(&line, char::is_whitespace, k, line_no, rows)?);
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(
            line_no,
            1,
            format!("header declares N={n} rows but the payload has {rows}"),
        ));
    }
    if !trailer_seen {
        return Err(parse_err(line_no + 1, 1, format!("missing {TRAILER} trailer")));
    }
    let json: String = lines.collect::<std::io::Result<Vec<_>>>().map_err(stream_err)?.join("\n");
    let de = &mut serde_json::Deserializer::from_str(&json);
    let meta: Metadata = serde_path_to_error::deserialize(de)
        .map_err(|e| parse_err(line_no + 1, 1, format!("metadata: {e}")))?;
    let grid = DofGrid::new(meta.grid.positions().to_vec(), meta.grid.resolution())?;
    let contacts = ContactArray::new(
        meta.contacts.lead_diameter_mm(),
        meta.contacts.contacts().to_vec(),
        meta.contacts.impedance_kohm(),
    )?;
    let matrix = DMatrix::from_row_slice(n, k, &data);
    let field = LeadField::new(matrix, grid, contacts, meta.provenance)?;
    Ok(match meta.noise {
        Some(spec) => {
            let m = field.matrix().clone();
            field.with_matrix(m, Some(spec))
        }
        None => field,
    })
}

pub fn export_leadfield(field: &LeadField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_leadfield(field, BufWriter::new(file))
}

pub fn import_leadfield(path: impl AsRef<Path>) -> Result<LeadField> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_leadfield(BufReader::new(file))
}

pub fn write_matrix_csv<W: Write>(matrix: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let mut record = Vec::with_capacity(matrix.ncols());
    for i in 0..matrix.nrows() {
        record.clear();
        record.extend((0..matrix.ncols()).map(|j| format!("{:e}", matrix[(i, j)])));
        w.write_record(&record)?;
    }
    w.flush().map_err(stream_err)
}

pub fn read_matrix_csv<R: std::io::Read>(input: R) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut data = Vec::new();
    let mut k = None;
    let mut n = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let joined = rec.iter().collect::<Vec<_>>().join(",");
        let width = *k.get_or_insert(rec.len());
        data.extend(parse_row(&joined, |c| c == ',', width, i + 1, i)?);
        n += 1;
    }
    Ok(DMatrix::from_row_slice(n, k.unwrap_or(0), &data))
}

pub fn export_matrix_csv(matrix: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_matrix_csv(matrix, BufWriter::new(file))
}

pub fn import_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix_csv(BufReader::new(file))
}
