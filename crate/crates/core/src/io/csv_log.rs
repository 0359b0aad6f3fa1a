//! Race logs as CSV with a fixed column order.
//!
//! Floats are written with 17 significant digits so that reading a written
//! log reproduces it bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Vector3, Vector4};

use crate::dynamics::{ControlInput, DroneState};
use crate::error::{Error, Result};
use crate::path::AugmentedState;
use crate::race::{DroneRecord, RaceLog, RaceRecord};

const DRONE_FIELDS: [&str; 21] = [
    "x", "y", "z", "vx", "vy", "vz", "w1", "w2", "w3", "q0", "q1", "q2", "q3", "theta", "sigma", "F1",
    "F2", "F3", "F4", "residual", "solve_ms",
];

/// Header of a race log: `t`, the rear drone, the front drone, then the
/// potentials and the running minimum separation.
pub fn columns() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for who in ["rear", "front"] {
        cols.extend(DRONE_FIELDS.iter().map(|f| format!("{who}_{f}")));
    }
    cols.extend(["potential_ego", "potential_opp", "min_distance"].map(String::from));
    cols
}

fn push_drone(row: &mut Vec<f64>, d: &DroneRecord) {
    let s = &d.state.drone;
    row.extend(s.position.iter());
    row.extend(s.velocity.iter());
    row.extend(s.body_rates.iter());
    row.extend(s.attitude.iter());
    row.push(d.state.theta);
    row.push(d.state.sigma);
    row.extend(d.input.0);
    row.push(d.residual);
    row.push(d.solve_ms);
}

fn read_drone(v: &[f64]) -> DroneRecord {
    DroneRecord {
        state: AugmentedState {
            drone: DroneState {
                position: Vector3::new(v[0], v[1], v[2]),
                velocity: Vector3::new(v[3], v[4], v[5]),
                body_rates: Vector3::new(v[6], v[7], v[8]),
                attitude: Vector4::new(v[9], v[10], v[11], v[12]),
            },
            theta: v[13],
            sigma: v[14],
        },
        input: ControlInput([v[15], v[16], v[17], v[18]]),
        residual: v[19],
        solve_ms: v[20],
    }
}

/// Flattens a record in column order.
pub fn record_row(r: &RaceRecord) -> Vec<f64> {
    let mut row = Vec::with_capacity(46);
    row.push(r.t);
    push_drone(&mut row, &r.rear);
    push_drone(&mut row, &r.front);
    row.extend([r.potential_ego, r.potential_opp, r.min_distance]);
    row
}

fn row_record(v: &[f64]) -> RaceRecord {
    let n = DRONE_FIELDS.len();
    RaceRecord {
        t: v[0],
        rear: read_drone(&v[1..1 + n]),
        front: read_drone(&v[1 + n..1 + 2 * n]),
        potential_ego: v[1 + 2 * n],
        potential_opp: v[2 + 2 * n],
        min_distance: v[3 + 2 * n],
    }
}

pub fn write_log<W: Write>(out: W, log: &RaceLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(columns()).map_err(io)?;
    let mut cells = Vec::new();
    for r in &log.records {
        cells.clear();
        cells.extend(record_row(r).iter().map(|v| format!("{v:.16e}")));
        w.write_record(&cells).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a log, rejecting unexpected headers and non-finite or malformed
/// cells. Rows and columns in errors are 1-based, the header being row 1.
pub fn read_log<R: Read>(input: R) -> Result<RaceLog> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let expected = columns();
    let header = rd.headers().map_err(|e| Error::Io(e.to_string()))?;
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::SchemaMismatch(format!(
            "expected {} columns starting {:?}, found {} starting {:?}",
            expected.len(),
            &expected[..3],
            header.len(),
            header.iter().take(3).collect::<Vec<_>>()
        )));
    }
    let mut records = Vec::new();
    let mut values = Vec::with_capacity(expected.len());
    for (i, row) in rd.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            column: 0,
            message: e.to_string(),
        })?;
        if row.len() != expected.len() {
            return Err(Error::SchemaMismatch(format!(
                "row {row_no} has {} cells, expected {}",
                row.len(),
                expected.len()
            )));
        }
        values.clear();
        for (j, cell) in row.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: row_no,
                column: j + 1,
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: row_no,
                    column: j + 1,
                    message: format!("non-finite value in {}", expected[j]),
                });
            }
            values.push(v);
        }
        records.push(row_record(&values));
    }
    Ok(RaceLog { records })
}

pub fn write_log_file(path: &Path, log: &RaceLog) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_log(std::io::BufWriter::new(file), log)
}

pub fn read_log_file(path: &Path) -> Result<RaceLog> {
    read_log(std::io::BufReader::new(std::fs::File::open(path)?))
}
