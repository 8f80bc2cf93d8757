//! CSV ingestion: decimal reals, optional single header line, LF or CRLF.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use qgad_core::fixedpoint::{index_width, quantize_dataset, QuantizedDataset};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub cols: usize,
    pub index_width: usize,
    pub bits: u32,
    /// Cells whose magnitude saturated at `2^n - 1`, as 0-based `(row, col)`.
    pub clamped: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: QuantizedDataset,
    pub report: IngestReport,
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(buf)
}

/// Parses every record as a row of finite reals; all rows must share one width.
pub fn parse_rows(path: &Path, bytes: &[u8], skip_header: bool) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(skip_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let input_err = |line: u64, column: usize, message: String| CliError::Input {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            input_err(line, 1, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(input_err(line, c + 1, format!("cannot parse {field:?} as a finite real"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(input_err(
                    line,
                    row.len().min(first.len()) + 1,
                    format!("expected {} fields, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reads and quantizes a training file. Needs at least two rows, all in `(-1, 1)`.
pub fn ingest(path: &Path, bits: u32, skip_header: bool) -> Result<Ingested> {
    let bytes = read_bytes(path)?;
    ingest_bytes(path, &bytes, bits, skip_header)
}

pub fn ingest_bytes(path: &Path, bytes: &[u8], bits: u32, skip_header: bool) -> Result<Ingested> {
    let rows = parse_rows(path, bytes, skip_header)?;
    if rows.is_empty() {
        return Err(CliError::Input {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: "no data rows".into(),
        });
    }
    let header_lines = u64::from(skip_header);
    for (i, row) in rows.iter().enumerate() {
        if let Some(c) = row.iter().position(|v| v.abs() >= 1.0) {
            return Err(CliError::Input {
                path: path.to_path_buf(),
                line: i as u64 + 1 + header_lines,
                column: c + 1,
                message: format!("value {} lies outside the open interval (-1, 1)", row[c]),
            });
        }
    }
    if rows.len() < 2 {
        return Err(CliError::Data(format!("{}: need at least 2 data rows, found 1", path.display())));
    }
    let dataset = quantize_dataset(&rows, bits)?;
    let report = IngestReport {
        rows: dataset.rows(),
        cols: dataset.cols(),
        index_width: index_width(dataset.rows()),
        bits,
        clamped: dataset.clamped_cells().to_vec(),
    };
    Ok(Ingested { dataset, report })
}

/// Reads query rows for detection; an empty file yields no rows.
pub fn read_queries(path: &Path, skip_header: bool) -> Result<Vec<Vec<f64>>> {
    let bytes = read_bytes(path)?;
    parse_rows(path, &bytes, skip_header)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem.csv")
    }

    #[test]
    fn two_by_two() {
        let got = ingest_bytes(p(), b"0.5,0.5\n0.25,-0.25\n", 2, false).unwrap();
        assert_eq!((got.report.rows, got.report.cols, got.report.index_width), (2, 2, 1));
        assert_eq!(got.dataset.decoded(1, 1), -0.25);
    }

    #[test]
    fn crlf_and_header() {
        let got = ingest_bytes(p(), b"a,b\r\n0.5,0.5\r\n0.25,-0.25\r\n", 2, true).unwrap();
        assert_eq!(got.report.rows, 2);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(ingest_bytes(p(), b"", 2, false), Err(CliError::Input { .. })));
    }

    #[test]
    fn out_of_range_names_the_line() {
        match ingest_bytes(p(), b"1.2,0.1\n0.1,0.1\n", 2, false) {
            Err(CliError::Input { line, column, .. }) => assert_eq!((line, column), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
        match ingest_bytes(p(), b"x,y\n0.1,0.1\n0.1,-1.0\n", 2, true) {
            Err(CliError::Input { line, column, .. }) => assert_eq!((line, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        match ingest_bytes(p(), b"0.1,0.2\n0.3,abc\n", 2, false) {
            Err(CliError::Input { line, column, .. }) => assert_eq!((line, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        match ingest_bytes(p(), b"0.1,0.2\n0.3\n", 2, false) {
            Err(CliError::Input { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clamped_cells_are_reported() {
        let got = ingest_bytes(p(), b"0.999,0.1\n0.1,0.1\n", 2, false).unwrap();
        assert_eq!(got.report.clamped, vec![(0, 0)]);
    }
}
