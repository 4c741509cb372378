use std::io::Write;

use serde::Serialize;
use serde_json::Value;
use shiftbreak::recovery::PhaseRecord;
use shiftbreak::Verdict;

use crate::config::OutputFormat;
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    pub algorithm: &'static str,
    pub p: u64,
    pub e: u64,
    pub trial: u32,
    pub planted: u64,
    pub recovered: u64,
    pub oracle_calls: u64,
    pub phases: Vec<PhaseRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub variant: &'static str,
    pub p: u64,
    pub e: u64,
    pub trial: u32,
    pub s: u64,
    pub t: u64,
    pub h_mode: &'static str,
    pub h: u64,
    pub verdict: Verdict,
    pub expected: Verdict,
    pub correct: bool,
    pub probes: u64,
    pub oracle_calls: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub p: u64,
    pub e: u64,
    pub algorithm: &'static str,
    pub trials: u32,
    pub mean_calls: f64,
    pub max_calls: u64,
    pub interpolation_calls: u64,
    pub failures: u64,
    /// Probe count of the randomized algorithm.
    pub nu: Option<u64>,
    /// Consecutive calls of the large-`e` algorithm.
    pub m: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_wall_time_ms: Option<f64>,
}

/// Serializes a row to a JSON object with keys in declaration order.
pub fn to_row<T: Serialize>(row: &T) -> Value {
    serde_json::to_value(row).expect("report rows serialize to JSON")
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn columns(rows: &[Value]) -> Vec<String> {
    rows.first()
        .and_then(Value::as_object)
        .map(|obj| obj.keys().cloned().collect())
        .unwrap_or_default()
}

fn cells(row: &Value, header: &[String]) -> Vec<String> {
    header
        .iter()
        .map(|k| row.get(k).map(cell_text).unwrap_or_default())
        .collect()
}

/// Writes rows as JSON lines, CSV (header then rows), or an aligned table.
pub fn write_rows<W: Write>(out: &mut W, format: OutputFormat, rows: &[Value]) -> Result<()> {
    match format {
        OutputFormat::Json => {
            for row in rows {
                serde_json::to_writer(&mut *out, row)?;
                out.write_all(b"\n")?;
            }
        }
        OutputFormat::Csv => {
            let header = columns(rows);
            if header.is_empty() {
                return Ok(());
            }
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(&header)?;
            for row in rows {
                w.write_record(cells(row, &header))?;
            }
            w.flush()?;
        }
        OutputFormat::Table => {
            let header = columns(rows);
            if header.is_empty() {
                return Ok(());
            }
            let body: Vec<Vec<String>> = rows.iter().map(|r| cells(r, &header)).collect();
            let widths: Vec<usize> = header
                .iter()
                .enumerate()
                .map(|(i, h)| {
                    body.iter()
                        .map(|r| r[i].len())
                        .chain([h.len()])
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            let line = |fields: &[String]| {
                let padded: Vec<String> = fields
                    .iter()
                    .zip(&widths)
                    .map(|(f, &w)| format!("{f:<w$}"))
                    .collect();
                padded.join("  ").trim_end().to_string()
            };
            writeln!(out, "{}", line(&header))?;
            for row in &body {
                writeln!(out, "{}", line(row))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn render(format: OutputFormat, rows: &[Value]) -> String {
        let mut buf = Vec::new();
        write_rows(&mut buf, format, rows).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn csv_header_matches_json_keys() {
        let rows = vec![
            json!({"p": 13, "e": 3, "nu": null}),
            json!({"p": 7, "e": 2, "nu": 4}),
        ];
        assert_eq!(render(OutputFormat::Csv, &rows), "p,e,nu\n13,3,\n7,2,4\n");
        assert_eq!(
            render(OutputFormat::Json, &rows),
            "{\"p\":13,\"e\":3,\"nu\":null}\n{\"p\":7,\"e\":2,\"nu\":4}\n"
        );
    }

    #[test]
    fn table_aligns_columns() {
        let rows = vec![json!({"algorithm": "large_e", "calls": 3})];
        assert_eq!(
            render(OutputFormat::Table, &rows),
            "algorithm  calls\nlarge_e    3\n"
        );
    }

    #[test]
    fn empty_stream_writes_nothing() {
        for f in [OutputFormat::Json, OutputFormat::Csv, OutputFormat::Table] {
            assert_eq!(render(f, &[]), "");
        }
    }

    #[test]
    fn nested_values_become_compact_json_cells() {
        let rows = vec![json!({"phases": [{"calls": 1}]})];
        assert_eq!(
            render(OutputFormat::Csv, &rows),
            "phases\n\"[{\"\"calls\"\":1}]\"\n"
        );
    }
}
