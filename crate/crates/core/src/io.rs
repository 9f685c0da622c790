//! CSV output and the matching readers.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading a
//! file back reproduces the written values bit for bit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::capacity::AccidentParams;
use crate::ensemble::ConvergenceRow;
use crate::grid::Grid;
use crate::pdp::{FirstJump, PathResult, RecordKind};
use crate::solver::DensityField;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("record {record}: {message}")]
    Format { record: usize, message: String },
}

fn real(v: f64) -> String {
    format!("{v}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

struct Fields<'a> {
    record: usize,
    row: &'a csv::StringRecord,
}

impl Fields<'_> {
    fn err(&self, message: String) -> IoError {
        IoError::Format {
            record: self.record,
            message,
        }
    }

    fn raw(&self, k: usize) -> Result<&str, IoError> {
        self.row.get(k).ok_or_else(|| self.err(format!("missing column {k}")))
    }

    fn parse<T: std::str::FromStr>(&self, k: usize) -> Result<T, IoError> {
        let s = self.raw(k)?;
        s.parse().map_err(|_| self.err(format!("cannot parse {s:?} in column {k}")))
    }

    fn parse_opt<T: std::str::FromStr>(&self, k: usize) -> Result<Option<T>, IoError> {
        if self.raw(k)?.is_empty() {
            Ok(None)
        } else {
            self.parse(k).map(Some)
        }
    }
}

fn read_rows<R: Read, T>(
    reader: R,
    expected: &[&str],
    mut parse: impl FnMut(&Fields) -> Result<T, IoError>,
) -> Result<Vec<T>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(expected.iter().copied()) {
        return Err(IoError::Format {
            record: 0,
            message: format!("expected header {expected:?}, got {headers:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        out.push(parse(&Fields { record: i + 1, row: &row })?);
    }
    Ok(out)
}

fn kind_from_str(s: &str) -> Option<RecordKind> {
    match s {
        "initial" => Some(RecordKind::Initial),
        "accident" => Some(RecordKind::Accident),
        "resolution" => Some(RecordKind::Resolution),
        _ => None,
    }
}

/// One line of the jump-chain file. For a resolution, `accident` holds the
/// parameters of the accident that was removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRow {
    pub path_id: usize,
    pub time: f64,
    pub kind: RecordKind,
    pub slot: Option<usize>,
    pub accident: Option<AccidentParams>,
}

pub const JUMP_HEADER: [&str; 7] = ["path_id", "time", "kind", "slot", "p", "s", "c"];

pub fn jump_rows(path_id: usize, path: &PathResult) -> Vec<JumpRow> {
    path.records
        .iter()
        .map(|r| JumpRow {
            path_id,
            time: r.time,
            kind: r.kind,
            slot: r.slot,
            accident: r.accident,
        })
        .collect()
}

fn accident_fields(a: Option<AccidentParams>) -> [String; 3] {
    match a {
        Some(a) => [real(a.position), real(a.size), real(a.drop)],
        None => Default::default(),
    }
}

fn accident_from(f: &Fields, first: usize) -> Result<Option<AccidentParams>, IoError> {
    let p: Option<f64> = f.parse_opt(first)?;
    let s: Option<f64> = f.parse_opt(first + 1)?;
    let c: Option<f64> = f.parse_opt(first + 2)?;
    match (p, s, c) {
        (Some(p), Some(s), Some(c)) => Ok(Some(AccidentParams::new(p, s, c))),
        (None, None, None) => Ok(None),
        _ => Err(f.err("accident columns must be all present or all empty".into())),
    }
}

pub fn write_jumps<W: Write>(writer: W, rows: &[JumpRow]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(JUMP_HEADER)?;
    for r in rows {
        let [p, s, c] = accident_fields(r.accident);
        w.write_record([r.path_id.to_string(), real(r.time), r.kind.as_str().into(), opt(r.slot), p, s, c])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jumps<R: Read>(reader: R) -> Result<Vec<JumpRow>, IoError> {
    read_rows(reader, &JUMP_HEADER, |f| {
        let kind = f.raw(2)?;
        Ok(JumpRow {
            path_id: f.parse(0)?,
            time: f.parse(1)?,
            kind: kind_from_str(kind).ok_or_else(|| f.err(format!("unknown kind {kind:?}")))?,
            slot: f.parse_opt(3)?,
            accident: accident_from(f, 4)?,
        })
    })
}

/// `(x_center, rho)` per cell.
pub fn write_snapshot<W: Write>(writer: W, grid: &Grid, rho: &DensityField) -> Result<(), IoError> {
    let rows: Vec<(f64, f64)> = grid.centers().zip(rho.values.iter().copied()).collect();
    write_table(writer, ("x", "rho"), &rows)
}

pub fn read_snapshot<R: Read>(reader: R) -> Result<Vec<(f64, f64)>, IoError> {
    read_table(reader, ("x", "rho"))
}

/// Which snapshot file holds which path and time.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEntry {
    pub path_id: usize,
    pub time: f64,
    pub file: String,
}

pub const SNAPSHOT_INDEX_HEADER: [&str; 3] = ["path_id", "time", "file"];

pub fn write_snapshot_index<W: Write>(writer: W, entries: &[SnapshotEntry]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SNAPSHOT_INDEX_HEADER)?;
    for e in entries {
        w.write_record([e.path_id.to_string(), real(e.time), e.file.clone()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot_index<R: Read>(reader: R) -> Result<Vec<SnapshotEntry>, IoError> {
    read_rows(reader, &SNAPSHOT_INDEX_HEADER, |f| {
        Ok(SnapshotEntry {
            path_id: f.parse(0)?,
            time: f.parse(1)?,
            file: f.raw(2)?.to_string(),
        })
    })
}

/// Two-column table of reals with the given header.
pub fn write_table<W: Write>(writer: W, header: (&str, &str), rows: &[(f64, f64)]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([header.0, header.1])?;
    for &(a, b) in rows {
        w.write_record([real(a), real(b)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table<R: Read>(reader: R, header: (&str, &str)) -> Result<Vec<(f64, f64)>, IoError> {
    read_rows(reader, &[header.0, header.1], |f| Ok((f.parse(0)?, f.parse(1)?)))
}

pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_left", "bin_right", "count"];

pub fn write_histogram<W: Write>(writer: W, edges: &[f64], counts: &[u64]) -> Result<(), IoError> {
    assert_eq!(edges.len(), counts.len() + 1, "one more edge than bins");
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HISTOGRAM_HEADER)?;
    for (k, count) in counts.iter().enumerate() {
        w.write_record([real(edges[k]), real(edges[k + 1]), count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Edges and counts; consecutive bins must share their edge.
pub fn read_histogram<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<u64>), IoError> {
    let bins: Vec<(f64, f64, u64)> = read_rows(reader, &HISTOGRAM_HEADER, |f| Ok((f.parse(0)?, f.parse(1)?, f.parse(2)?)))?;
    let mut edges = Vec::with_capacity(bins.len() + 1);
    let mut counts = Vec::with_capacity(bins.len());
    for (k, &(lo, hi, count)) in bins.iter().enumerate() {
        match edges.last() {
            None => edges.push(lo),
            Some(&prev) if prev == lo => {}
            Some(_) => {
                return Err(IoError::Format {
                    record: k + 1,
                    message: "bins are not contiguous".into(),
                })
            }
        }
        edges.push(hi);
        counts.push(count);
    }
    Ok((edges, counts))
}

pub const FIRST_JUMP_HEADER: [&str; 7] = ["sample_id", "time", "kind", "slot", "p", "s", "c"];

/// One row per sample; censored samples have empty fields after the id.
pub fn write_first_jumps<W: Write>(writer: W, samples: &[FirstJump]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FIRST_JUMP_HEADER)?;
    for (i, s) in samples.iter().enumerate() {
        let [p, q, c] = accident_fields(s.outcome.map(|o| o.accident));
        w.write_record([
            i.to_string(),
            opt(s.time.map(real)),
            opt(s.outcome.map(|o| o.kind.as_str())),
            opt(s.outcome.map(|o| o.slot)),
            p,
            q,
            c,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Time and accident of each sample as written; the kind column is checked
/// but only its presence is returned.
pub fn read_first_jumps<R: Read>(reader: R) -> Result<Vec<(Option<f64>, Option<AccidentParams>)>, IoError> {
    read_rows(reader, &FIRST_JUMP_HEADER, |f| Ok((f.parse_opt(1)?, accident_from(f, 4)?)))
}

pub const CONVERGENCE_HEADER: [&str; 3] = ["dx", "l1_diff", "order"];

pub fn write_convergence<W: Write>(writer: W, rows: &[ConvergenceRow]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CONVERGENCE_HEADER)?;
    for r in rows {
        w.write_record([real(r.dx), real(r.l1_diff), opt(r.order.map(real))])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_convergence<R: Read>(reader: R) -> Result<Vec<ConvergenceRow>, IoError> {
    read_rows(reader, &CONVERGENCE_HEADER, |f| {
        Ok(ConvergenceRow {
            dx: f.parse(0)?,
            l1_diff: f.parse(1)?,
            order: f.parse_opt(2)?,
        })
    })
}

/// Creates `path` and hands a buffered writer to `write`.
pub fn to_file<T>(path: &Path, write: impl FnOnce(std::io::BufWriter<File>) -> Result<T, IoError>) -> Result<T, IoError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write(std::io::BufWriter::new(File::create(path)?))
}

pub fn from_file<T>(path: &Path, read: impl FnOnce(std::io::BufReader<File>) -> Result<T, IoError>) -> Result<T, IoError> {
    read(std::io::BufReader::new(File::open(path)?))
}
