//! Sample and table files. CSV is written with `.` decimals and `\n` line
//! ends; floats use the shortest representation that reads back exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use stein_core::JointSampleSet;

use crate::CliError;

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::new("IO", format!("{}: {e}", path.display())))
}

/// Two columns `x,y`, with or without that header line.
pub fn parse_samples(text: &str) -> Result<JointSampleSet, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::new("CSV_PARSE", e.to_string()))?;
        if rec.len() != 2 {
            return Err(CliError::new(
                "CSV_PARSE",
                format!("line {}: expected 2 columns, found {}", i + 1, rec.len()),
            ));
        }
        if i == 0 && &rec[0] == "x" && &rec[1] == "y" {
            continue;
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| CliError::new("CSV_PARSE", format!("line {}: `{s}` is not a number", i + 1)))
        };
        xs.push(num(&rec[0])?);
        ys.push(num(&rec[1])?);
    }
    Ok(JointSampleSet::new(xs, ys)?)
}

pub fn read_samples(path: &Path) -> Result<JointSampleSet, CliError> {
    parse_samples(&read_text(path)?)
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn csv_table<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [f64; N]>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn samples_csv(xs: &[f64], ys: &[f64]) -> String {
    csv_table(["x", "y"], xs.iter().zip(ys).map(|(&x, &y)| [x, y]))
}

/// Write to `path`, or to stdout when absent.
pub fn emit(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, content).map_err(|e| CliError::new("IO", format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::new("IO", e.to_string()))
        }
    }
}
