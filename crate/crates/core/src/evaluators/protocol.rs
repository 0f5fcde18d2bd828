//! CSV ask/tell exchange with an external evaluator.
//!
//! Proposals: `proposals_iter<N>.csv`, header `id,<dimension names…>`, one
//! row per candidate with ids `iter<N>_<j>`. Results: header `id,k,v_mag`,
//! rows in any order, matched to proposals by id.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::space::ParameterSpace;

pub const RESULTS_HEADER: [&str; 3] = ["id", "k", "v_mag"];

/// Formats with 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn proposal_id(iteration: u32, j: usize) -> String {
    format!("iter{iteration}_{j}")
}

pub fn proposals_file_name(iteration: u32) -> String {
    format!("proposals_iter{iteration}.csv")
}

/// One evaluated result row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub id: String,
    pub k: f64,
    pub v: f64,
}

/// Writes `proposals_iter<N>.csv` into `dir`; returns its path and the ids.
pub fn write_proposals(
    dir: &Path,
    space: &ParameterSpace,
    batch: &[Vec<f64>],
    iteration: u32,
) -> Result<(PathBuf, Vec<String>)> {
    if batch.is_empty() {
        return Err(Error::invalid("cannot write an empty proposal batch"));
    }
    for x in batch {
        space.check_bounds(x)?;
    }
    let path = dir.join(proposals_file_name(iteration));
    let ids: Vec<String> = (0..batch.len()).map(|j| proposal_id(iteration, j)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("id").chain(space.names()).collect();
    let mut write = |rec: Vec<String>| {
        w.write_record(&rec)
            .map_err(|e| Error::io(&path, std::io::Error::other(e)))
    };
    write(header.iter().map(|s| s.to_string()).collect())?;
    for (id, x) in ids.iter().zip(batch) {
        write(std::iter::once(id.clone()).chain(x.iter().map(|&v| format_value(v))).collect())?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok((path, ids))
}

fn open_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn parse_field(field: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Data {
        row,
        message: format!("column `{column}`: cannot parse `{field}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Data {
            row,
            message: format!("column `{column}`: non-finite value `{field}`"),
        });
    }
    Ok(v)
}

/// Reads a proposals file back: `(id, physical point)` per row.
pub fn read_proposals(path: &Path, space: &ParameterSpace) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers().map_err(|e| parse_err(path, e))?.clone();
    let expected: Vec<&str> = std::iter::once("id").chain(space.names()).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Protocol(format!(
            "{}: header {:?} does not match expected {:?}",
            path.display(),
            header.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e))?;
        let row = i + 1;
        let id = rec[0].to_string();
        let x = space
            .names()
            .enumerate()
            .map(|(j, name)| parse_field(&rec[j + 1], row, name))
            .collect::<Result<Vec<_>>>()?;
        out.push((id, x));
    }
    Ok(out)
}

/// Parses a results file and checks that its ids equal `expected_ids` as a set.
/// Data-row numbers in errors are 1-based and exclude the header.
pub fn read_results(path: &Path, expected_ids: &[String]) -> Result<Vec<ResultRow>> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers().map_err(|e| parse_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != RESULTS_HEADER {
        return Err(Error::Protocol(format!(
            "{}: header {:?} does not match expected {:?}",
            path.display(),
            header.iter().collect::<Vec<_>>(),
            RESULTS_HEADER
        )));
    }
    let mut rows = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut duplicates = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e))?;
        let row = i + 1;
        let id = rec[0].to_string();
        let k = parse_field(&rec[1], row, "k")?;
        let v = parse_field(&rec[2], row, "v_mag")?;
        if seen.insert(id.clone(), row).is_some() {
            duplicates.insert(id.clone());
        }
        rows.push(ResultRow { id, k, v });
    }
    let expected: BTreeSet<&str> = expected_ids.iter().map(String::as_str).collect();
    let missing: Vec<&str> = expected.iter().filter(|id| !seen.contains_key(**id)).copied().collect();
    let extra: Vec<&str> = seen
        .keys()
        .map(String::as_str)
        .filter(|id| !expected.contains(id))
        .collect();
    if !missing.is_empty() || !extra.is_empty() || !duplicates.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("missing ids {missing:?}"));
        }
        if !extra.is_empty() {
            parts.push(format!("unexpected ids {extra:?}"));
        }
        if !duplicates.is_empty() {
            parts.push(format!("duplicate ids {duplicates:?}"));
        }
        return Err(Error::Protocol(format!("{}: {}", path.display(), parts.join("; "))));
    }
    Ok(rows)
}

/// Writes a results file; used by tests and by scripted evaluators.
pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(RESULTS_HEADER).map_err(to_io)?;
    for r in rows {
        w.write_record([r.id.clone(), format_value(r.k), format_value(r.v)])
            .map_err(to_io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}
