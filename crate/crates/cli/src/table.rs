//! CSV plumbing: header-indexed reading with positioned errors, full
//! precision number formatting and atomic file replacement.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}:{line}: {}{message}", file.display(), if column.is_empty() { String::new() } else { format!("column `{column}`: ") })]
pub struct ParseError {
    pub file: PathBuf,
    /// 1-based; 0 when the error concerns the file as a whole.
    pub line: u64,
    pub column: String,
    pub message: String,
}

impl ParseError {
    pub fn new(file: &Path, line: u64, column: &str, message: String) -> Self {
        ParseError { file: file.to_path_buf(), line, column: column.to_string(), message }
    }
}

/// Every number written by this crate: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Table {
    pub file: PathBuf,
    header: Vec<String>,
    pub rows: Vec<Row>,
}

pub struct Row {
    pub line: u64,
    fields: Vec<String>,
}

impl Table {
    pub fn read(path: &Path, required: &[&str]) -> Result<Self, ParseError> {
        let data = fs::read(path).map_err(|e| ParseError::new(path, 0, "", e.to_string()))?;
        let mut rdr =
            csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).flexible(false).from_reader(&data[..]);
        let header: Vec<String> = rdr.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect();
        for col in required {
            if !header.iter().any(|h| h == col) {
                return Err(ParseError::new(path, 1, col, "missing column".into()));
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push(Row { line, fields: rec.iter().map(str::to_string).collect() });
        }
        Ok(Table { file: path.to_path_buf(), header, rows })
    }

    pub fn has(&self, col: &str) -> bool {
        self.header.iter().any(|h| h == col)
    }

    pub fn err(&self, row: &Row, col: &str, message: impl Into<String>) -> ParseError {
        ParseError::new(&self.file, row.line, col, message.into())
    }

    /// Cell text; empty when the column is absent.
    pub fn cell<'a>(&self, row: &'a Row, col: &str) -> &'a str {
        self.header.iter().position(|h| h == col).map_or("", |i| row.fields[i].as_str())
    }

    pub fn text(&self, row: &Row, col: &str) -> Result<String, ParseError> {
        let s = self.cell(row, col);
        if s.is_empty() {
            return Err(self.err(row, col, "empty value"));
        }
        Ok(s.to_string())
    }

    pub fn opt_f64(&self, row: &Row, col: &str) -> Result<Option<f64>, ParseError> {
        let s = self.cell(row, col);
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>().map(Some).map_err(|_| self.err(row, col, format!("`{s}` is not a number")))
    }

    pub fn f64(&self, row: &Row, col: &str) -> Result<f64, ParseError> {
        self.opt_f64(row, col)?.ok_or_else(|| self.err(row, col, "empty value"))
    }

    pub fn usize(&self, row: &Row, col: &str) -> Result<usize, ParseError> {
        let s = self.cell(row, col);
        s.parse::<usize>().map_err(|_| self.err(row, col, format!("`{s}` is not a non-negative integer")))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> ParseError {
    let line = e.position().map_or(0, |p| p.line());
    ParseError::new(path, line, "", e.to_string())
}

/// In-memory CSV document, written out in one piece.
pub struct CsvOut {
    w: csv::Writer<Vec<u8>>,
}

impl CsvOut {
    pub fn new(header: &[&str]) -> Self {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        CsvOut { w }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.w.into_inner().expect("in-memory flush")
    }

    pub fn save(self, path: &Path) -> io::Result<()> {
        write_atomic(path, &self.into_bytes())
    }
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no file name"))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_exactly() {
        for x in [0.0, -0.0, 1.0 / 3.0, 1e-300, -2.5e17, f64::MAX, f64::MIN_POSITIVE, f64::INFINITY] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(num(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn positioned_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "id,x\n# note\na,1\nb,zz\n").unwrap();
        let t = Table::read(&p, &["id", "x"]).unwrap();
        assert_eq!(t.f64(&t.rows[0], "x").unwrap(), 1.0);
        let e = t.f64(&t.rows[1], "x").unwrap_err();
        assert_eq!((e.line, e.column.as_str()), (4, "x"));
        let e = Table::read(&p, &["id", "y"]).err().unwrap();
        assert_eq!((e.line, e.column.as_str()), (1, "y"));
        fs::write(&p, "id,x\na,1,2\n").unwrap();
        assert_eq!(Table::read(&p, &[]).err().unwrap().line, 2);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("o.csv");
        let mut c = CsvOut::new(&["a"]);
        c.row(["1"]);
        c.save(&p).unwrap();
        write_atomic(&p, b"a\n2\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a\n2\n");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
