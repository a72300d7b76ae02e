use std::io::{Read, Write};
use std::path::Path;

use crate::error::{domain, Error, Result};
use crate::qed::SpectrumScan;

pub const SCAN_HEADERS: [&str; 2] = ["delta_pa_MHz", "transmission"];

/// Numeric columns with `name_unit` headers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Column by position, for files with arbitrary headers.
    pub fn column_at(&self, j: usize) -> Option<Vec<f64>> {
        (j < self.headers.len()).then(|| self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Writes a header row and numeric rows. `f64` values use the shortest
/// representation that parses back to the same bits.
pub fn write_table<W: Write>(w: W, headers: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(headers).map_err(csv_error)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != headers.len() {
            return Err(domain(format!(
                "row {i} has {} values for {} columns",
                row.len(),
                headers.len()
            )));
        }
        out.write_record(row.iter().map(|v| v.to_string()))
            .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_table<R: Read>(r: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("column '{}': '{field}' is not a number", headers[j]),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

pub fn write_scan(path: &Path, scan: &SpectrumScan) -> Result<()> {
    let rows: Vec<Vec<f64>> = scan.points().iter().map(|&(x, t)| vec![x, t]).collect();
    write_table(std::fs::File::create(path)?, &SCAN_HEADERS, &rows)
}

/// Reads a spectrum; the first two columns are detuning and transmission.
pub fn read_scan(path: &Path) -> Result<SpectrumScan> {
    let t = read_table(std::fs::File::open(path)?)?;
    if t.headers.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "a spectrum needs detuning and transmission columns".into(),
        });
    }
    SpectrumScan::new(t.rows.iter().map(|r| (r[0], r[1])).collect())
}
