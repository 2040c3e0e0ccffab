use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::CliResult;

/// Renders with 17 significant digits, enough to round-trip any `f64`.
pub fn full(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn full_opt(v: Option<f64>) -> String {
    v.map(full).unwrap_or_default()
}

pub fn open(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    let mut sink = open(out)?;
    serde_json::to_writer_pretty(&mut sink, value)?;
    writeln!(sink)?;
    sink.flush()?;
    Ok(())
}

/// `# `-prefixed header lines, a header row, then the records.
pub fn write_csv(out: Option<&Path>, header: &[String], columns: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut sink = open(out)?;
    for line in header {
        writeln!(sink, "# {line}")?;
    }
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(columns)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}
