//! Per-generation convergence curves as CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use evoprune::ga::GenerationRecord;

use crate::error::{io_error, CliError, CliResult};

pub const HEADER: &str = "generation,elite_f,elite_e,elite_c,elite_s,mean_f";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub generation: usize,
    pub elite_f: f64,
    pub elite_e: f64,
    pub elite_c: f64,
    pub elite_s: f64,
    pub mean_f: f64,
}

impl From<&GenerationRecord> for CurveRow {
    fn from(r: &GenerationRecord) -> Self {
        Self {
            generation: r.generation,
            elite_f: r.elite.fitness,
            elite_e: r.elite.error,
            elite_c: r.elite.flops_remaining,
            elite_s: r.elite.sparsity,
            mean_f: r.mean_fitness,
        }
    }
}

impl CurveRow {
    pub fn to_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.generation, self.elite_f, self.elite_e, self.elite_c, self.elite_s, self.mean_f
        )
    }
}

/// Writes the header on creation and flushes after every row, so a run
/// that is interrupted still leaves a readable prefix.
pub struct CurveWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl CurveWriter {
    pub fn create(path: &Path) -> CliResult<Self> {
        let file = File::create(path).map_err(|e| io_error(path, e))?;
        let mut w = Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        w.line(HEADER)?;
        Ok(w)
    }

    pub fn push(&mut self, row: &CurveRow) -> CliResult<()> {
        self.line(&row.to_line())
    }

    fn line(&mut self, s: &str) -> CliResult<()> {
        writeln!(self.out, "{s}")
            .and_then(|_| self.out.flush())
            .map_err(|e| io_error(&self.path, e))
    }
}

/// Parses a curves file. Errors name the offending line; a file with no
/// data rows is an error.
pub fn read_curves(path: &Path) -> CliResult<Vec<CurveRow>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| CliError::Config(format!("{}: line 1: {e}", path.display())))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != HEADER {
        return Err(CliError::Config(format!(
            "{}: line 1: expected header {HEADER:?}, found {header:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Config(format!("{}: line {line}: {e}", path.display()))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str| CliError::Config(format!("{}: line {line}: {what}", path.display()));
        if record.len() != 6 {
            return Err(bad(&format!("expected 6 fields, found {}", record.len())));
        }
        let generation = record[0]
            .trim()
            .parse()
            .map_err(|_| bad(&format!("bad generation {:?}", &record[0])))?;
        let mut v = [0.0; 5];
        for (i, slot) in v.iter_mut().enumerate() {
            let field = record[i + 1].trim();
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(&format!("bad number {field:?}")))?;
        }
        rows.push(CurveRow {
            generation,
            elite_f: v[0],
            elite_e: v[1],
            elite_c: v[2],
            elite_s: v[3],
            mean_f: v[4],
        });
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn row(g: usize) -> CurveRow {
        CurveRow {
            generation: g,
            elite_f: 0.1234567,
            elite_e: 0.01,
            elite_c: 0.5,
            elite_s: 0.75,
            mean_f: 0.2,
        }
    }

    #[test]
    fn six_fraction_digits() {
        assert_eq!(
            row(3).to_line(),
            "3,0.123457,0.010000,0.500000,0.750000,0.200000"
        );
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut w = CurveWriter::create(&path).unwrap();
        w.push(&row(1)).unwrap();
        w.push(&row(2)).unwrap();
        drop(w);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(HEADER));
        let rows = read_curves(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].generation, 2);
        assert_eq!(rows[0].elite_f, 0.123457);
    }

    #[test]
    fn header_only_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(&path, format!("{HEADER}\n")).unwrap();
        assert!(read_curves(&path)
            .unwrap_err()
            .to_string()
            .contains("no data rows"));
    }

    #[test]
    fn malformed_row_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(
            &path,
            format!("{HEADER}\n1,0.1,0.1,0.1,0.1,0.1\n2,0.1,abc,0.1,0.1,0.1\n"),
        )
        .unwrap();
        let e = read_curves(&path).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        fs::write(&path, format!("{HEADER}\n1,0.1,0.1\n")).unwrap();
        let e = read_curves(&path).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_curves(&path)
            .unwrap_err()
            .to_string()
            .contains("line 1"));
    }
}
