//! Measurement/torque log CSV.
//!
//! Optional first line `# format: 1`, then a header `time_s,pos_<dof>,vel_<dof>[,tau_<dof>]...`
//! with one group per actuated DOF. Timestamps must increase strictly.

use std::fmt::Write as _;

use nalgebra::DVector;
use thiserror::Error;

use crate::model::MechanismModel;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LogError {
    #[error("line {line}: {message}")]
    ColumnMismatch { line: usize, message: String },
    #[error("line {line}: time {time} does not follow {previous}")]
    NonMonotoneTime { line: usize, previous: f64, time: f64 },
    #[error("line {line}, column {column}: `{text}` is not a number")]
    BadNumber { line: usize, column: usize, text: String },
    #[error("missing header row")]
    MissingHeader,
}

impl LogError {
    pub fn code(&self) -> &'static str {
        match self {
            LogError::ColumnMismatch { .. } => "column_mismatch",
            LogError::NonMonotoneTime { .. } => "non_monotone_time",
            LogError::BadNumber { .. } => "bad_number",
            LogError::MissingHeader => "missing_header",
        }
    }
}

/// A numeric CSV table with a header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Line number of each row in the source, 1-based.
    pub lines: Vec<usize>,
}

pub fn parse_table(text: &str) -> Result<Table, LogError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, mut header) = lines.next().ok_or(LogError::MissingHeader)?;
    if header.trim_start().starts_with('#') {
        let (_, h) = lines.next().ok_or(LogError::MissingHeader)?;
        header = h;
    }
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if columns.iter().any(|c| c.is_empty()) {
        return Err(LogError::ColumnMismatch { line: 1, message: "empty column name".into() });
    }
    let mut rows = Vec::new();
    let mut at = Vec::new();
    for (i, l) in lines {
        let line = i + 1;
        if l.trim_start().starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = l.split(',').collect();
        if cells.len() != columns.len() {
            return Err(LogError::ColumnMismatch {
                line,
                message: format!("{} fields, header has {}", cells.len(), columns.len()),
            });
        }
        let row = cells
            .iter()
            .enumerate()
            .map(|(c, s)| {
                s.trim().parse::<f64>().map_err(|_| LogError::BadNumber { line, column: c + 1, text: s.trim().to_string() })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
        at.push(line);
    }
    Ok(Table { columns, rows, lines: at })
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Require strictly increasing values in column `c`.
    pub fn check_monotone(&self, c: usize) -> Result<(), LogError> {
        for k in 1..self.rows.len() {
            let (previous, time) = (self.rows[k - 1][c], self.rows[k][c]);
            if !(time > previous) {
                return Err(LogError::NonMonotoneTime { line: self.lines[k], previous, time });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogSample {
    pub time: f64,
    pub pos: DVector<f64>,
    pub vel: DVector<f64>,
    pub tau: Option<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogSeries {
    /// Actuated DOF names, in column order.
    pub names: Vec<String>,
    /// False when torque columns are absent; wrench estimation is then unavailable.
    pub has_tau: bool,
    pub samples: Vec<LogSample>,
}

pub fn parse_log(text: &str) -> Result<LogSeries, LogError> {
    let t = parse_table(text)?;
    if t.columns.first().map(String::as_str) != Some("time_s") {
        return Err(LogError::ColumnMismatch { line: 1, message: "first column must be time_s".into() });
    }
    let mut names = Vec::new();
    for c in &t.columns[1..] {
        let Some((kind, name)) = c.split_once('_') else {
            return Err(LogError::ColumnMismatch { line: 1, message: format!("unexpected column `{c}`") });
        };
        match kind {
            "pos" => names.push(name.to_string()),
            "vel" | "tau" => {}
            _ => return Err(LogError::ColumnMismatch { line: 1, message: format!("unexpected column `{c}`") }),
        }
    }
    let find = |prefix: &str, name: &str| t.column(&format!("{prefix}_{name}"));
    let mut pos_c = Vec::new();
    let mut vel_c = Vec::new();
    let mut tau_c = Vec::new();
    for n in &names {
        pos_c.push(find("pos", n).unwrap());
        vel_c.push(find("vel", n).ok_or_else(|| LogError::ColumnMismatch { line: 1, message: format!("missing vel_{n}") })?);
        if let Some(c) = find("tau", n) {
            tau_c.push(c);
        }
    }
    let has_tau = !tau_c.is_empty();
    let expected = 1 + names.len() * if has_tau { 3 } else { 2 };
    if (has_tau && tau_c.len() != names.len()) || t.columns.len() != expected {
        return Err(LogError::ColumnMismatch { line: 1, message: "columns do not form pos/vel/tau groups".into() });
    }
    t.check_monotone(0)?;
    let pick = |row: &Vec<f64>, cols: &[usize]| DVector::from_iterator(cols.len(), cols.iter().map(|&c| row[c]));
    let samples = t
        .rows
        .iter()
        .map(|r| LogSample {
            time: r[0],
            pos: pick(r, &pos_c),
            vel: pick(r, &vel_c),
            tau: has_tau.then(|| pick(r, &tau_c)),
        })
        .collect();
    Ok(LogSeries { names, has_tau, samples })
}

pub fn serialize_log(log: &LogSeries) -> String {
    let mut s = String::from("# format: 1\ntime_s");
    for n in &log.names {
        let _ = write!(s, ",pos_{n},vel_{n}");
        if log.has_tau {
            let _ = write!(s, ",tau_{n}");
        }
    }
    s.push('\n');
    for sm in &log.samples {
        let _ = write!(s, "{:?}", sm.time);
        for i in 0..log.names.len() {
            let _ = write!(s, ",{:?},{:?}", sm.pos[i], sm.vel[i]);
            if let Some(t) = &sm.tau {
                let _ = write!(s, ",{:?}", t[i]);
            }
        }
        s.push('\n');
    }
    s
}

impl LogSeries {
    /// Map each log column group to the model's actuated DOF order.
    pub fn bind(&self, model: &MechanismModel) -> Result<Vec<usize>, LogError> {
        let na = model.n_actuated();
        if self.names.len() != na {
            return Err(LogError::ColumnMismatch {
                line: 1,
                message: format!("log has {} actuated DOFs, model has {na}", self.names.len()),
            });
        }
        // perm[k] = column group holding actuated DOF k
        let mut perm = Vec::with_capacity(na);
        for k in 0..na {
            let name = model.dof_name(model.m + k);
            let c = self.names.iter().position(|n| n == name).ok_or_else(|| LogError::ColumnMismatch {
                line: 1,
                message: format!("no columns for actuated DOF `{name}`"),
            })?;
            perm.push(c);
        }
        Ok(perm)
    }
}

/// Absolute passive measurements: header `joint,value`, one row per encoder.
pub fn parse_measurements(text: &str) -> Result<Vec<(String, f64)>, LogError> {
    let mut out = Vec::new();
    let mut header_seen = false;
    for (i, l) in text.lines().enumerate() {
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = t.split(',').map(str::trim).collect();
        if cells.len() != 2 {
            return Err(LogError::ColumnMismatch { line: i + 1, message: "expected `joint,value`".into() });
        }
        if !header_seen {
            if cells != ["joint", "value"] {
                return Err(LogError::ColumnMismatch { line: i + 1, message: "header must be `joint,value`".into() });
            }
            header_seen = true;
            continue;
        }
        let v = cells[1]
            .parse::<f64>()
            .map_err(|_| LogError::BadNumber { line: i + 1, column: 2, text: cells[1].to_string() })?;
        out.push((cells[0].to_string(), v));
    }
    if !header_seen {
        return Err(LogError::MissingHeader);
    }
    Ok(out)
}
