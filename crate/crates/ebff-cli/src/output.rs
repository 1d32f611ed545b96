//! JSON-lines and CSV writers.

use std::io::Write;

use serde::Serialize;

use crate::checks::Report;
use crate::config::Format;
use crate::CliError;

pub fn json_lines<T: Serialize, W: Write>(items: &[T], out: &mut W) -> Result<(), CliError> {
    for item in items {
        serde_json::to_writer(&mut *out, item).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn csv_rows<W: Write>(header: &[&str], rows: &[Vec<String>], out: &mut W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

pub fn reports<W: Write>(reports: &[Report], format: Format, out: &mut W) -> Result<(), CliError> {
    match format {
        Format::JsonLines => json_lines(reports, out),
        Format::Csv => {
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    vec![
                        r.check.clone(),
                        r.seed.to_string(),
                        format!("{:e}", r.residual),
                        format!("{:e}", r.threshold),
                        r.pass.to_string(),
                        r.error.clone().unwrap_or_default(),
                        r.wall_time_s.map(|t| format!("{t:.3}")).unwrap_or_default(),
                    ]
                })
                .collect();
            csv_rows(&["check", "seed", "residual", "threshold", "pass", "error", "wall_time_s"], &rows, out)
        }
    }
}
