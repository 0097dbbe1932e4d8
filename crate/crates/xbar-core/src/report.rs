//! Overhead report emission and parsing (CSV and JSON).
//!
//! CSV schema, exactly:
//! `node,rows,cols,config,current_A,delay_s,power_W,current_drop_pct,delay_inc_pct,power_inc_pct`
//! one data line per row in input order. Floats are written in shortest
//! round-trip form, so parsing an emitted file reproduces the rows
//! bit-exactly. JSON mirrors the same field names as an array of objects.

use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiment::OverheadRow;

pub const CSV_HEADER: &str =
    "node,rows,cols,config,current_A,delay_s,power_W,current_drop_pct,delay_inc_pct,power_inc_pct";

/// Output format of [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Format(format!("unknown format `{other}` (expected csv|json)"))),
        }
    }
}

/// Writes the report in the requested format. Empty input is an error:
/// an empty report almost always means a wiring bug upstream.
pub fn emit_report<W: Write>(rows: &[OverheadRow], format: ReportFormat, w: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidParams("refusing to emit an empty report".into()));
    }
    match format {
        ReportFormat::Csv => write_csv(rows, w),
        ReportFormat::Json => write_json(rows, w),
    }
}

fn write_csv<W: Write>(rows: &[OverheadRow], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.node,
            r.rows,
            r.cols,
            r.config,
            r.current_a,
            r.delay_s,
            r.power_w,
            r.current_drop_pct,
            r.delay_inc_pct,
            r.power_inc_pct
        )?;
    }
    Ok(())
}

fn write_json<W: Write>(rows: &[OverheadRow], mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, rows)
        .map_err(|e| Error::Format(format!("JSON encoding failed: {e}")))?;
    writeln!(w)?;
    Ok(())
}

/// Parses a CSV report back into rows; inverse of the CSV emitter.
pub fn parse_csv_report(text: &str) -> Result<Vec<OverheadRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        Some(h) => {
            return Err(Error::Format(format!("unexpected CSV header `{h}`")));
        }
        None => return Err(Error::Format("empty report".into())),
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Format(format!(
                "line {}: expected 10 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad number `{}`", lineno + 2, fields[i])))
        };
        let int = |i: usize| -> Result<usize> {
            fields[i]
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad count `{}`", lineno + 2, fields[i])))
        };
        rows.push(OverheadRow {
            node: fields[0].to_string(),
            rows: int(1)?,
            cols: int(2)?,
            config: fields[3].to_string(),
            current_a: num(4)?,
            delay_s: num(5)?,
            power_w: num(6)?,
            current_drop_pct: num(7)?,
            delay_inc_pct: num(8)?,
            power_inc_pct: num(9)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Format("report has a header but no rows".into()));
    }
    Ok(rows)
}

/// Parses a JSON report; inverse of the JSON emitter.
pub fn parse_json_report(text: &str) -> Result<Vec<OverheadRow>> {
    let rows: Vec<OverheadRow> =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("bad report JSON: {e}")))?;
    if rows.is_empty() {
        return Err(Error::Format("report JSON holds no rows".into()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> Vec<OverheadRow> {
        vec![
            OverheadRow {
                node: "45nm".into(),
                rows: 10,
                cols: 10,
                config: "baseline".into(),
                current_a: 1.23e-5,
                delay_s: 6.5e-11,
                power_w: 3.1e-5,
                current_drop_pct: 0.0,
                delay_inc_pct: 0.0,
                power_inc_pct: 0.0,
            },
            OverheadRow {
                node: "45nm".into(),
                rows: 10,
                cols: 10,
                config: "both".into(),
                current_a: 1.1e-5,
                delay_s: 7.0e-11,
                power_w: 3.4e-5,
                current_drop_pct: 10.569105691056912,
                delay_inc_pct: 7.692307692307693,
                power_inc_pct: 9.677419354838708,
            },
        ]
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = sample_rows();
        let mut buf = Vec::new();
        emit_report(&rows, ReportFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with(CSV_HEADER));
        let back = parse_csv_report(&text).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let rows = sample_rows();
        let mut buf = Vec::new();
        emit_report(&rows, ReportFormat::Json, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"current_A\""));
        assert!(text.contains("\"power_W\""));
        let back = parse_json_report(&text).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn empty_report_is_rejected() {
        let mut buf = Vec::new();
        assert!(emit_report(&[], ReportFormat::Csv, &mut buf).is_err());
        assert!(parse_csv_report(CSV_HEADER).is_err());
        assert!(parse_csv_report("bogus\n").is_err());
    }

    #[test]
    fn emission_is_deterministic() {
        let rows = sample_rows();
        let mut a = Vec::new();
        let mut b = Vec::new();
        emit_report(&rows, ReportFormat::Csv, &mut a).unwrap();
        emit_report(&rows, ReportFormat::Csv, &mut b).unwrap();
        assert_eq!(a, b);
    }
}
