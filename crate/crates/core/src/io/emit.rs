//! Result emission: CSV tables with 17 significant digits and versioned JSON.

use std::fmt::Write as _;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::log::{parse_table, LogError};

/// 17 significant digits, enough to reproduce every f64 exactly.
pub fn fmt_sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ResultTable {
    pub fn new(columns: Vec<String>) -> Self {
        ResultTable { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub fn emit_csv(t: &ResultTable) -> String {
    let mut s = String::from("# format: 1\n");
    s.push_str(&t.columns.join(","));
    s.push('\n');
    for r in &t.rows {
        let cells: Vec<String> = r.iter().map(|&x| fmt_sig17(x)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_csv(text: &str) -> Result<ResultTable, LogError> {
    let t = parse_table(text)?;
    Ok(ResultTable { columns: t.columns, rows: t.rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub format: u32,
    pub kind: String,
    pub data: T,
}

pub fn emit_json<T: Serialize>(kind: &str, data: &T) -> String {
    let env = Envelope { format: 1, kind: kind.to_string(), data };
    let mut s = serde_json::to_string_pretty(&env).expect("result types serialize");
    s.push('\n');
    s
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<Envelope<T>, serde_json::Error> {
    serde_json::from_str(text)
}

/// Human-readable `key: value` report lines.
pub fn report_line(out: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{key}: {value}");
}
