//! Trace CSV: fixed scalar columns, then iterate components `x0, x1, ...`
//! when iterates were recorded and the dimension is at most
//! [`MAX_CSV_DIM`]. Floats carry 17 significant digits, so a written trace
//! reads back bit for bit. Missing optional values are empty fields.

use std::io::{Read, Write};

use multilevel_prox::{IterateRecord, TerminalStatus, Trace, Vector};

use crate::CliError;

pub const MAX_CSV_DIM: usize = 16;

pub const COLUMNS: [&str; 9] = [
    "k",
    "alpha",
    "beta",
    "res_W",
    "res_T",
    "step_norm",
    "phi1_y",
    "phi2_z",
    "omega_x",
];

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn write_trace<W: Write>(out: W, trace: &Trace, dim: usize) -> Result<(), CliError> {
    let with_x = dim <= MAX_CSV_DIM && trace.records.iter().any(|r| r.x.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = COLUMNS.iter().map(|s| s.to_string()).collect();
    if with_x {
        header.extend((0..dim).map(|i| format!("x{i}")));
    }
    w.write_record(&header).map_err(io_err)?;
    for r in &trace.records {
        let mut row = vec![
            r.k.to_string(),
            fmt(r.alpha),
            fmt(r.beta),
            fmt(r.res_w),
            fmt_opt(r.res_t),
            fmt(r.step_norm),
            fmt_opt(r.phi1_y),
            fmt_opt(r.phi2_z),
            fmt_opt(r.omega_x),
        ];
        if with_x {
            match &r.x {
                Some(x) => row.extend(x.iter().map(|v| fmt(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), dim)),
            }
        }
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

fn io_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn parse_f(line: usize, col: &str, s: &str) -> Result<f64, CliError> {
    s.parse::<f64>().map_err(|_| {
        CliError::Validation(format!(
            "trace line {line}, column {col}: not a number: {s:?}"
        ))
    })
}

fn parse_opt(line: usize, col: &str, s: &str) -> Result<Option<f64>, CliError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f(line, col, s).map(Some)
    }
}

/// Reads a trace written by [`write_trace`]. Weight vectors and the
/// terminal status are not stored in the CSV; the status reads back as
/// `MaxIters` and `final_x` is the last recorded iterate (empty without
/// iterate columns).
pub fn read_trace<R: Read>(input: R) -> Result<Trace, CliError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd
        .headers()
        .map_err(|e| CliError::Validation(format!("trace header: {e}")))?
        .clone();
    if header.len() < COLUMNS.len() || header.iter().zip(COLUMNS).any(|(h, c)| h != c) {
        return Err(CliError::Validation(format!(
            "trace header must start with {}",
            COLUMNS.join(",")
        )));
    }
    let dim = header.len() - COLUMNS.len();
    for (i, h) in header.iter().skip(COLUMNS.len()).enumerate() {
        if h != format!("x{i}") {
            return Err(CliError::Validation(format!(
                "trace header: unexpected column {h:?}"
            )));
        }
    }
    let mut records = Vec::new();
    for (n, row) in rd.records().enumerate() {
        let line = n + 2;
        let row = row.map_err(|e| CliError::Validation(format!("trace line {line}: {e}")))?;
        let k = row[0].parse::<usize>().map_err(|_| {
            CliError::Validation(format!("trace line {line}, column k: not an integer"))
        })?;
        let x = if dim == 0 || row[COLUMNS.len()].is_empty() {
            None
        } else {
            Some(
                (0..dim)
                    .map(|i| parse_f(line, &header[COLUMNS.len() + i], &row[COLUMNS.len() + i]))
                    .collect::<Result<Vec<f64>, _>>()?,
            )
        };
        records.push(IterateRecord {
            k,
            alpha: parse_f(line, "alpha", &row[1])?,
            beta: parse_f(line, "beta", &row[2])?,
            weights: None,
            res_w: parse_f(line, "res_W", &row[3])?,
            res_t: parse_opt(line, "res_T", &row[4])?,
            step_norm: parse_f(line, "step_norm", &row[5])?,
            phi1_y: parse_opt(line, "phi1_y", &row[6])?,
            phi2_z: parse_opt(line, "phi2_z", &row[7])?,
            omega_x: parse_opt(line, "omega_x", &row[8])?,
            x,
        });
    }
    let final_x = records
        .iter()
        .rev()
        .find_map(|r| r.x.as_ref())
        .map(|x| Vector::from_column_slice(x))
        .unwrap_or_else(|| Vector::zeros(0));
    let iterations = records.last().map_or(0, |r| r.k);
    Ok(Trace {
        records,
        status: TerminalStatus::MaxIters,
        final_x,
        iterations,
    })
}
