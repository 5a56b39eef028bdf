//! The MATPOWER case subset needed for branch statistics: `baseMVA`, the bus
//! matrix (id in column 1, baseKV in column 10) and the branch matrix (fbus,
//! tbus, r, x, b, rateA, rateB, rateC, ratio, ...).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::BranchRecord;
use crate::error::{Error, Result};

const BUS_MIN_COLS: usize = 10;
const BRANCH_MIN_COLS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct MatpowerCase {
    pub base_mva: f64,
    pub branches: Vec<BranchRecord>,
}

struct Row {
    line: usize,
    values: Vec<f64>,
}

enum State {
    Top,
    Matrix { name: String, rows: Vec<Row>, current: Vec<f64>, start: usize },
    Cell,
}

pub fn parse_matpower_case(text: &str) -> Result<MatpowerCase> {
    let mut base_mva = None;
    let mut matrices: HashMap<String, Vec<Row>> = HashMap::new();
    let mut state = State::Top;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut rest = raw.split('%').next().unwrap_or("").trim();
        while !rest.is_empty() {
            match &mut state {
                State::Cell => match rest.find('}') {
                    Some(p) => {
                        rest = &rest[p + 1..];
                        state = State::Top;
                    }
                    None => rest = "",
                },
                State::Top => {
                    let Some(p) = rest.find("mpc.") else { break };
                    let after = &rest[p + 4..];
                    let Some(eq) = after.find('=') else {
                        return Err(parse_err(line_no, "expected `=` after field name"));
                    };
                    let name = after[..eq].trim().to_string();
                    let rhs = after[eq + 1..].trim_start();
                    if let Some(body) = rhs.strip_prefix('[') {
                        state = State::Matrix {
                            name,
                            rows: Vec::new(),
                            current: Vec::new(),
                            start: line_no,
                        };
                        rest = body;
                    } else if let Some(body) = rhs.strip_prefix('{') {
                        state = State::Cell;
                        rest = body;
                    } else {
                        let end = rhs.find(';').unwrap_or(rhs.len());
                        let value = rhs[..end].trim();
                        if name == "baseMVA" {
                            base_mva = Some(value.parse::<f64>().map_err(|_| {
                                parse_err(line_no, &format!("cannot parse baseMVA `{value}`"))
                            })?);
                        }
                        rest = rhs.get(end + 1..).unwrap_or("");
                    }
                }
                State::Matrix { name, rows, current, start } => {
                    let stop = rest.find([';', ']']);
                    let (chunk, delim) = match stop {
                        Some(p) => (&rest[..p], rest[p..].chars().next()),
                        None => (rest, None),
                    };
                    for tok in chunk.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
                        if current.is_empty() {
                            *start = line_no;
                        }
                        let v = tok.parse::<f64>().map_err(|_| {
                            parse_err(line_no, &format!("cannot parse `{tok}` in matrix `{name}`"))
                        })?;
                        current.push(v);
                    }
                    match delim {
                        Some(';') => {
                            flush_row(rows, current, *start);
                            rest = &rest[stop.unwrap() + 1..];
                        }
                        Some(']') => {
                            flush_row(rows, current, *start);
                            matrices.insert(std::mem::take(name), std::mem::take(rows));
                            state = State::Top;
                            rest = &rest[stop.unwrap() + 1..];
                        }
                        _ => rest = "",
                    }
                }
            }
        }
        // a newline also terminates a matrix row
        if let State::Matrix { rows, current, start, .. } = &mut state {
            flush_row(rows, current, *start);
        }
    }

    if let State::Matrix { name, start, .. } = &state {
        return Err(parse_err(*start, &format!("matrix `{name}` is not closed")));
    }
    let base_mva = base_mva.ok_or_else(|| Error::MissingField("baseMVA".into()))?;
    if !(base_mva.is_finite() && base_mva > 0.0) {
        return Err(Error::InvalidArgument(format!("baseMVA must be positive, got {base_mva}")));
    }
    let bus_rows = matrices.remove("bus").ok_or_else(|| Error::MissingField("bus".into()))?;
    let branch_rows = matrices
        .remove("branch")
        .ok_or_else(|| Error::MissingField("branch".into()))?;

    let mut bus_kv = HashMap::new();
    for row in &bus_rows {
        if row.values.len() < BUS_MIN_COLS {
            return Err(parse_err(
                row.line,
                &format!("bus row has {} columns, need at least {BUS_MIN_COLS}", row.values.len()),
            ));
        }
        let id = as_bus_id(row.values[0], row.line)?;
        bus_kv.insert(id, row.values[9]);
    }

    let mut seen: HashMap<(i64, i64), usize> = HashMap::new();
    let mut branches = Vec::with_capacity(branch_rows.len());
    for (k, row) in branch_rows.iter().enumerate() {
        if row.values.len() < BRANCH_MIN_COLS {
            return Err(parse_err(
                row.line,
                &format!("branch row has {} columns, need at least {BRANCH_MIN_COLS}", row.values.len()),
            ));
        }
        let v = &row.values;
        let fbus = as_bus_id(v[0], row.line)?;
        let tbus = as_bus_id(v[1], row.line)?;
        let lookup = |bus: i64| {
            bus_kv.get(&bus).copied().ok_or(Error::UnknownBus {
                row: k + 1,
                line: row.line,
                bus,
            })
        };
        let from_kv = lookup(fbus)?;
        let to_kv = lookup(tbus)?;
        let n = seen.entry((fbus, tbus)).or_insert(0);
        *n += 1;
        branches.push(BranchRecord {
            id: format!("{fbus}-{tbus}-{n}"),
            from_bus: fbus,
            to_bus: tbus,
            from_kv,
            to_kv,
            r_pu: v[2],
            x_pu: v[3],
            mva_rating: v[5],
            tap_ratio: v[8],
            system_mva_base: base_mva,
        });
    }

    Ok(MatpowerCase { base_mva, branches })
}

/// Writes branches as a minimal MATPOWER case: one PQ bus per distinct bus id
/// (the first seen voltage wins) and in-service branches with rateA and
/// ratio filled in. Record ids are not preserved; the parser regenerates them.
pub fn write_matpower_case(base_mva: f64, branches: &[BranchRecord]) -> String {
    let mut buses: BTreeMap<i64, f64> = BTreeMap::new();
    for b in branches {
        buses.entry(b.from_bus).or_insert(b.from_kv);
        buses.entry(b.to_bus).or_insert(b.to_kv);
    }
    let mut out = String::from("function mpc = case_synthetic\nmpc.version = '2';\n");
    let _ = writeln!(out, "mpc.baseMVA = {base_mva};");
    out.push_str("%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin\nmpc.bus = [\n");
    for (id, kv) in &buses {
        let _ = writeln!(out, "\t{id}\t1\t0\t0\t0\t0\t1\t1\t0\t{kv}\t1\t1.1\t0.9;");
    }
    out.push_str("];\n%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax\nmpc.branch = [\n");
    for b in branches {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t0\t{}\t0\t0\t{}\t0\t1\t-360\t360;",
            b.from_bus, b.to_bus, b.r_pu, b.x_pu, b.mva_rating, b.tap_ratio
        );
    }
    out.push_str("];\n");
    out
}

fn flush_row(rows: &mut Vec<Row>, current: &mut Vec<f64>, start: usize) {
    if !current.is_empty() {
        rows.push(Row {
            line: start,
            values: std::mem::take(current),
        });
    }
}

fn as_bus_id(v: f64, line: usize) -> Result<i64> {
    if v.fract() == 0.0 && v.is_finite() {
        Ok(v as i64)
    } else {
        Err(parse_err(line, &format!("bus id `{v}` is not an integer")))
    }
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse {
        line,
        message: message.to_string(),
    }
}
