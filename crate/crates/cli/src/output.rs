//! Map and table serialization.
//!
//! The CSV map starts with one `#` comment line carrying the format version
//! and units, followed by a header row with the frozen column order
//! `x,y,z,k_tran,k_rot,k11..k66,rank_jq_1..rank_jq_3,singular`.
//! Floats are written with 17 significant digits.

use std::io::{BufRead, Write};

use crate::error::{CliError, Result};
use crate::run::{MapRecord, TableRecord};

pub const MAP_VERSION_LINE: &str = "# pkm-stiffness map v1; x,y,z [mm]; k_tran [N/mm]; k_rot [N*mm/rad]; \
k_ij row-major K_m [N/mm | N | N*mm/rad] in (dx,dy,dz,rx,ry,rz) order";

pub const TABLE_VERSION_LINE: &str =
    "# pkm-stiffness table v1; k_tran [N/mm]; k_rot [N*mm/rad]; c_tran [mm/N]; c_rot [rad/(N*mm)]";

/// Symmetry tolerance applied when reading a map back, relative to the largest entry.
pub const READ_SYMMETRY_TOL: f64 = 1e-9;

const CHAINS: usize = 3;

pub fn map_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["x", "y", "z", "k_tran", "k_rot"].map(String::from).into();
    for i in 1..=6 {
        for j in 1..=6 {
            cols.push(format!("k{i}{j}"));
        }
    }
    for i in 1..=CHAINS {
        cols.push(format!("rank_jq_{i}"));
    }
    cols.push("singular".into());
    cols
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::config(format!("csv: {e}"))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io {
        path: "<output>".into(),
        source: e,
    }
}

pub fn write_map_csv<W: Write>(records: &[MapRecord], mut out: W) -> Result<()> {
    writeln!(out, "{MAP_VERSION_LINE}").map_err(io_err)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(map_columns()).map_err(csv_err)?;
    for r in records {
        let mut row: Vec<String> = [r.x, r.y, r.z, r.k_tran, r.k_rot].map(num).into();
        row.extend(r.k_m.iter().map(|v| num(*v)));
        for i in 0..CHAINS {
            row.push(r.rank_jq.get(i).map(|v| v.to_string()).unwrap_or_default());
        }
        row.push(r.singular.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_map_jsonl<W: Write>(records: &[MapRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)
            .map_err(|e| CliError::config(format!("json: {e}")))?;
        writeln!(out).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Parses a map written by [`write_map_csv`] and re-checks the symmetry of
/// every stored `K_m`.
pub fn read_map_csv<R: BufRead>(mut input: R) -> Result<Vec<MapRecord>> {
    let mut first = String::new();
    input.read_line(&mut first).map_err(io_err)?;
    if first.trim_end() != MAP_VERSION_LINE {
        return Err(CliError::config(format!(
            "unsupported map header {:?}",
            first.trim_end()
        )));
    }
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header != map_columns() {
        return Err(CliError::config("map column order does not match v1"));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let bad = |c: &str| CliError::config(format!("row {}: bad value in column {c}", line + 1));
        let f = |k: usize| -> Result<f64> { row[k].parse().map_err(|_| bad(&header[k])) };
        let k_m: Vec<f64> = (5..41).map(f).collect::<Result<_>>()?;
        let rank_jq = (41..41 + CHAINS)
            .map(|k| row[k].parse().map_err(|_| bad(&header[k])))
            .collect::<Result<_>>()?;
        let singular = row[44].parse().map_err(|_| bad("singular"))?;
        let scale = k_m.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..6 {
            for j in 0..i {
                if (k_m[6 * i + j] - k_m[6 * j + i]).abs() > READ_SYMMETRY_TOL * scale {
                    return Err(CliError::config(format!(
                        "row {}: K_m is not symmetric at ({}, {})",
                        line + 1,
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        out.push(MapRecord {
            x: f(0)?,
            y: f(1)?,
            z: f(2)?,
            k_tran: f(3)?,
            k_rot: f(4)?,
            k_m,
            rank_jq,
            singular,
        });
    }
    Ok(out)
}

pub fn write_table_csv<W: Write>(records: &[TableRecord], mut out: W) -> Result<()> {
    writeln!(out, "{TABLE_VERSION_LINE}").map_err(io_err)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["architecture", "point", "x", "y", "z", "k_tran", "k_rot", "c_tran", "c_rot"])
        .map_err(csv_err)?;
    for r in records {
        let mut row = vec![r.architecture.clone(), r.point.clone()];
        row.extend([r.x, r.y, r.z, r.k_tran, r.k_rot, r.c_tran, r.c_rot].map(num));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}
