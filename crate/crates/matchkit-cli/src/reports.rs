//! Report envelopes and the aligned-text rendering.
//!
//! Each subcommand gets one envelope carrying the version tag and the
//! ingestion warnings next to the payload. JSON field order comes from
//! serde_json's sorted maps, so output bytes are stable.

use serde::Serialize;
use serde_json::Value;

use matchkit::association::GammaResult;
use matchkit::estimation::{FitDiagnostics, ParamVector};
use matchkit::logit::LogitSolution;
use matchkit::market::MatchingMeasure;
use matchkit::order::ConeCertificate;
use matchkit::sorting::{GlobalSearchOutcome, SortingVerdict, WithinGroupVerdict};

pub const REPORT_VERSION: &str = "1.0.0";

#[derive(Serialize)]
pub struct SolveReport {
    pub spec_version: &'static str,
    pub value: f64,
    pub scaling: Option<u64>,
    pub matching: MatchingMeasure,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
pub struct SortCheckReport {
    pub spec_version: &'static str,
    pub weak: SortingVerdict,
    pub within_group: WithinGroupVerdict,
    pub global: SortingVerdict,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
pub struct ExistsGlobalReport {
    pub spec_version: &'static str,
    #[serde(flatten)]
    pub outcome: GlobalSearchOutcome,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
pub struct DominanceReport {
    pub spec_version: &'static str,
    pub dominates: bool,
    pub certificate: ConeCertificate,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
pub struct UndominatedReport {
    pub spec_version: &'static str,
    pub undominated: bool,
    pub improving_direction: Option<ConeCertificate>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
pub struct IpfReport {
    pub spec_version: &'static str,
    #[serde(flatten)]
    pub solution: LogitSolution,
}

#[derive(Serialize)]
pub struct GammaReport {
    pub spec_version: &'static str,
    pub input: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second: Option<String>,
    #[serde(flatten)]
    pub result: GammaResult,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
pub struct EstimateReport {
    pub spec_version: &'static str,
    pub params: ParamVector,
    pub woman_fractions: Vec<f64>,
    pub diagnostics: FitDiagnostics,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
pub struct SimulateReport {
    pub spec_version: &'static str,
    pub n: usize,
    pub seed: u64,
    pub counts: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
pub struct DiagnosticsReport {
    pub spec_version: &'static str,
    #[serde(flatten)]
    pub diagnostics: FitDiagnostics,
}

// ---------------------------------------------------------------------------
// Aligned text
// ---------------------------------------------------------------------------

fn is_scalar(v: &Value) -> bool {
    matches!(v, Value::Null | Value::Bool(_) | Value::Number(_) | Value::String(_))
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn compact(v: &Value) -> String {
    if is_scalar(v) {
        scalar_text(v)
    } else {
        v.to_string()
    }
}

fn numeric_row(v: &Value) -> Option<&Vec<Value>> {
    match v {
        Value::Array(items) if !items.is_empty() && items.iter().all(|x| x.is_number()) => {
            Some(items)
        }
        _ => None,
    }
}

fn numeric_matrix(v: &Value) -> Option<Vec<&Vec<Value>>> {
    match v {
        Value::Array(rows) if !rows.is_empty() => {
            rows.iter().map(numeric_row).collect::<Option<Vec<_>>>()
        }
        _ => None,
    }
}

fn push_matrix(rows: &[&Vec<Value>], indent: usize, out: &mut String) {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect())
        .collect();
    let cols = cells.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut widths = vec![0usize; cols];
    for row in &cells {
        for (j, cell) in row.iter().enumerate() {
            widths[j] = widths[j].max(cell.len());
        }
    }
    for row in &cells {
        out.push_str(&"  ".repeat(indent));
        for (j, cell) in row.iter().enumerate() {
            if j > 0 {
                out.push_str("  ");
            }
            out.push_str(&" ".repeat(widths[j] - cell.len()));
            out.push_str(cell);
        }
        out.push('\n');
    }
}

/// Renders an array of objects as one aligned row per object, columns in
/// key order, composite values compacted to single-line JSON.
fn push_object_rows(items: &[Value], indent: usize, out: &mut String) {
    let maps: Vec<&serde_json::Map<String, Value>> = items
        .iter()
        .filter_map(|v| v.as_object())
        .collect();
    if maps.len() != items.len() || maps.is_empty() {
        for item in items {
            out.push_str(&"  ".repeat(indent));
            out.push_str("- ");
            out.push_str(&compact(item));
            out.push('\n');
        }
        return;
    }
    let mut keys: Vec<&String> = Vec::new();
    for m in &maps {
        for k in m.keys() {
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    keys.sort();
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(maps.len() + 1);
    rows.push(keys.iter().map(|k| (*k).clone()).collect());
    for m in &maps {
        rows.push(
            keys.iter()
                .map(|k| m.get(*k).map(compact).unwrap_or_default())
                .collect(),
        );
    }
    let cols = keys.len();
    let mut widths = vec![0usize; cols];
    for row in &rows {
        for (j, cell) in row.iter().enumerate() {
            widths[j] = widths[j].max(cell.len());
        }
    }
    for row in &rows {
        out.push_str(&"  ".repeat(indent));
        for (j, cell) in row.iter().enumerate() {
            if j > 0 {
                out.push_str("  ");
            }
            out.push_str(cell);
            out.push_str(&" ".repeat(widths[j] - cell.len()));
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    }
}

fn render(v: &Value, indent: usize, out: &mut String) {
    match v {
        Value::Object(map) => {
            for (k, val) in map {
                out.push_str(&"  ".repeat(indent));
                if is_scalar(val) {
                    out.push_str(&format!("{k}: {}\n", scalar_text(val)));
                } else if let Some(row) = numeric_row(val) {
                    let joined: Vec<String> = row.iter().map(|x| x.to_string()).collect();
                    out.push_str(&format!("{k}: [{}]\n", joined.join(", ")));
                } else if let Some(rows) = numeric_matrix(val) {
                    out.push_str(&format!("{k}:\n"));
                    push_matrix(&rows, indent + 1, out);
                } else {
                    out.push_str(&format!("{k}:\n"));
                    render(val, indent + 1, out);
                }
            }
        }
        Value::Array(items) => {
            if let Some(rows) = numeric_matrix(v) {
                push_matrix(&rows, indent, out);
            } else if let Some(row) = numeric_row(v) {
                let joined: Vec<String> = row.iter().map(|x| x.to_string()).collect();
                out.push_str(&"  ".repeat(indent));
                out.push_str(&format!("[{}]\n", joined.join(", ")));
            } else {
                push_object_rows(items, indent, out);
            }
        }
        scalar => {
            out.push_str(&"  ".repeat(indent));
            out.push_str(&scalar_text(scalar));
            out.push('\n');
        }
    }
}

pub fn aligned_text(v: &Value) -> String {
    let mut out = String::new();
    render(v, 0, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn scalars_and_rows_render_inline() {
        let v = json!({"gamma": 0.5, "name": "test", "row": [1, 2, 3]});
        let text = aligned_text(&v);
        assert!(text.contains("gamma: 0.5\n"));
        assert!(text.contains("name: test\n"));
        assert!(text.contains("row: [1, 2, 3]\n"));
    }

    #[test]
    fn matrices_get_aligned_columns() {
        let v = json!({"m": [[1.0, 20.0], [300.0, 4.0]]});
        let text = aligned_text(&v);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "m:");
        assert_eq!(lines[1], "    1.0  20.0");
        assert_eq!(lines[2], "  300.0   4.0");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn object_arrays_become_tables() {
        let v = json!({"cells": [
            {"x": [1.0], "y": [2.0], "mass": 3.0},
            {"x": [10.0], "y": [0.0], "mass": 0.5}
        ]});
        let text = aligned_text(&v);
        assert!(text.contains("mass"));
        assert!(text.contains("[10.0]"));
        let header_line = text.lines().nth(1).unwrap();
        assert!(header_line.trim_start().starts_with("mass"));
    }
}
