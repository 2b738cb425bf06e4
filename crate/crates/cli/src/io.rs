//! CSV input and JSON report output.
//!
//! Input format: a header line `y,d,r`, then one row per unit. `d` and `r`
//! are 0/1; `y` is a float that must be present exactly when `r = 1`.

use anyhow::{bail, Context, Result};
use attrition_ri_core::Dataset;
use std::io::Write;
use std::path::Path;

/// Load a dataset from a `y,d,r` CSV file.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    parse_csv(&text)
}

/// Parse CSV text in the `y,d,r` format.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().context("empty input")?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    if header != ["y", "d", "r"] {
        bail!("expected header 'y,d,r', found '{}'", header.join(","));
    }
    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut r = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            bail!("line {}: expected 3 fields, found {}", lineno + 1, fields.len());
        }
        let di = parse_flag(fields[1]).with_context(|| format!("line {}: d", lineno + 1))?;
        let ri = parse_flag(fields[2]).with_context(|| format!("line {}: r", lineno + 1))?;
        let yi = if fields[0].is_empty() {
            if ri {
                bail!("line {}: reporting unit with empty outcome", lineno + 1);
            }
            None
        } else {
            if !ri {
                bail!("line {}: non-reporting unit with an outcome", lineno + 1);
            }
            Some(fields[0].parse::<f64>().with_context(|| format!("line {}: y", lineno + 1))?)
        };
        y.push(yi);
        d.push(di);
        r.push(ri);
    }
    let data = Dataset { y, d, r };
    data.validate()?;
    Ok(data)
}

fn parse_flag(s: &str) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => bail!("expected 0 or 1, found '{other}'"),
    }
}

/// Serialize any report as a single pretty JSON document plus newline.
pub fn write_report<T: serde::Serialize, W: Write>(report: &T, out: &mut W) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, report)?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_small_file() {
        let text = "y,d,r\n1.5,1,1\n,1,0\n-0.25,0,1\n,0,0\n";
        let data = parse_csv(text).unwrap();
        assert_eq!(data.n(), 4);
        assert_eq!(data.y[0], Some(1.5));
        assert_eq!(data.y[1], None);
        assert!(data.d[0] && !data.d[2]);
        assert!(data.r[2] && !data.r[3]);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(parse_csv("y,d,r\n1.0,1,0\n").is_err()); // outcome without reporting
        assert!(parse_csv("y,d,r\n,1,1\n").is_err()); // reporting without outcome
        assert!(parse_csv("x,d,r\n").is_err()); // wrong header
        assert!(parse_csv("y,d,r\n1.0,2,1\n").is_err()); // bad flag
    }
}
