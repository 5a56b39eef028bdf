//! Canonical branch CSV.

use std::collections::HashMap;
use std::io::Read;

use super::BranchRecord;
use crate::error::{Error, Result};

pub const BRANCH_CSV_HEADER: [&str; 10] = [
    "id",
    "from_bus",
    "to_bus",
    "from_kv",
    "to_kv",
    "r_pu",
    "x_pu",
    "mva_rating",
    "tap_ratio",
    "system_mva_base",
];

/// Reads branch records. Columns are located by header name, so their order
/// in the file does not matter; extra columns are ignored.
pub fn parse_branch_csv<R: Read>(input: R) -> Result<Vec<BranchRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    let width = headers.len();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let mut cols = [0usize; 10];
    for (slot, name) in cols.iter_mut().zip(BRANCH_CSV_HEADER) {
        *slot = *index
            .get(name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut out = Vec::new();
    let mut row = csv::StringRecord::new();
    loop {
        let more = reader
            .read_record(&mut row)
            .map_err(|e| csv_error(e, 0))?;
        if !more {
            break;
        }
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} columns, found {}", row.len()),
            });
        }
        let field = |k: usize| &row[cols[k]];
        let num = |k: usize| -> Result<f64> {
            field(k).parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: cannot parse `{}` as a number", BRANCH_CSV_HEADER[k], field(k)),
            })
        };
        let int = |k: usize| -> Result<i64> {
            field(k).parse::<i64>().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: cannot parse `{}` as an integer", BRANCH_CSV_HEADER[k], field(k)),
            })
        };
        out.push(BranchRecord {
            id: field(0).to_string(),
            from_bus: int(1)?,
            to_bus: int(2)?,
            from_kv: num(3)?,
            to_kv: num(4)?,
            r_pu: num(5)?,
            x_pu: num(6)?,
            mva_rating: num(7)?,
            tap_ratio: num(8)?,
            system_mva_base: num(9)?,
        });
    }
    Ok(out)
}

/// Writes records in canonical column order. Floats use the shortest
/// representation that parses back to the same value.
pub fn serialize_branch_csv(records: &[BranchRecord]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(BRANCH_CSV_HEADER).expect("write to Vec");
    for r in records {
        w.write_record([
            r.id.clone(),
            r.from_bus.to_string(),
            r.to_bus.to_string(),
            r.from_kv.to_string(),
            r.to_kv.to_string(),
            r.r_pu.to_string(),
            r.x_pu.to_string(),
            r.mva_rating.to_string(),
            r.tap_ratio.to_string(),
            r.system_mva_base.to_string(),
        ])
        .expect("write to Vec");
    }
    String::from_utf8(w.into_inner().expect("flush to Vec")).expect("utf-8 output")
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map_or(fallback_line, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
