//! Matrix files and CSV tables.
//!
//! Matrix files are plain text: the first line holds `N`, followed by `N`
//! rows of `N` whitespace-separated reals. Blank lines are ignored.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{CliError, Result};

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_matrix(&text, path)
}

pub fn parse_matrix(text: &str, origin: &Path) -> Result<DMatrix<f64>> {
    let err = |line: usize, message: String| CliError::Parse { path: origin.to_path_buf(), line, message };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (first, header) = lines.next().ok_or_else(|| err(1, "empty matrix file".into()))?;
    let n: usize = header
        .parse()
        .map_err(|_| err(first, format!("expected matrix size, found {header:?}")))?;
    if n == 0 {
        return Err(err(first, "matrix size must be positive".into()));
    }
    let mut m = DMatrix::zeros(n, n);
    for row in 0..n {
        let (line, content) = lines
            .next()
            .ok_or_else(|| err(first, format!("expected {n} rows, found {row}")))?;
        let values: Vec<&str> = content.split_whitespace().collect();
        if values.len() != n {
            return Err(err(line, format!("expected {n} entries, found {}", values.len())));
        }
        for (col, v) in values.iter().enumerate() {
            m[(row, col)] = v
                .parse()
                .map_err(|_| err(line, format!("invalid number {v:?} in column {}", col + 1)))?;
        }
    }
    if let Some((line, _)) = lines.next() {
        return Err(err(line, format!("unexpected content after {n} rows")));
    }
    Ok(m)
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = format!("{}\n", m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| fmt_float(*v)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.header)?;
        for r in &self.rows {
            wtr.write_record(r)?;
        }
        wtr.flush().map_err(|e| CliError::io("flushing csv", e))?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
        self.write_to(std::io::BufWriter::new(f))
    }
}

/// `out.csv` + `vectors` -> `out_vectors.csv`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}_{suffix}.{ext}"))
}
