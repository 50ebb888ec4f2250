//! CSV emission. Every file has a header row, LF line endings and floats
//! that always carry a decimal point.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("cannot read {path}: {reason}")]
    Input { path: PathBuf, reason: String },
}

/// Shortest round-tripping representation with a guaranteed `.`
/// (`1.0`, `2.5e-7` → `2.5e-7`, `1e-5` → `1.0e-5`).
pub fn fmt_float(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let s = format!("{x:?}");
    if s.contains('.') {
        return s;
    }
    match s.find('e') {
        Some(k) => format!("{}.0{}", &s[..k], &s[k..]),
        None => format!("{s}.0"),
    }
}

pub struct CsvFile {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvFile {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, OutputError> {
        let file = File::create(path).map_err(|source| OutputError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(file));
        writer.write_record(header).map_err(|source| OutputError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), OutputError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|source| OutputError::Csv {
            path: self.path.clone(),
            source,
        })
    }

    pub fn floats(&mut self, values: &[f64]) -> Result<(), OutputError> {
        self.row(values.iter().map(|v| fmt_float(*v)))
    }

    pub fn finish(mut self) -> Result<(), OutputError> {
        self.writer.flush().map_err(|source| OutputError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    let mut f = File::create(path).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    f.write_all(text.as_bytes()).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads `(e, i)` pairs from a CSV with a header naming columns `e` and `i`.
pub fn read_current_data(path: &Path) -> Result<Vec<(f64, f64)>, OutputError> {
    let input_err = |reason: String| OutputError::Input {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| input_err(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| input_err(format!("missing column `{name}`")))
    };
    let (ce, ci) = (col("e")?, col("i")?);
    let mut out = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| input_err(e.to_string()))?;
        let parse = |c: usize| -> Result<f64, OutputError> {
            record
                .get(c)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| input_err(format!("row {}: unreadable number", k + 2)))
        };
        out.push((parse(ce)?, parse(ci)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_always_have_a_point() {
        assert_eq!(fmt_float(1.0), "1.0");
        assert_eq!(fmt_float(-3.0), "-3.0");
        assert_eq!(fmt_float(0.1), "0.1");
        assert_eq!(fmt_float(1e-5), "1.0e-5");
        assert_eq!(fmt_float(2.5e-7), "2.5e-7");
        assert_eq!(fmt_float(1e300), "1.0e300");
        assert_eq!(fmt_float(f64::NAN), "NaN");
        for x in [0.1, 1.0 / 3.0, 6.02e23, -7.5e-300] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut w = CsvFile::create(&path, &["e", "i"]).unwrap();
        w.floats(&[1.0, 2.0]).unwrap();
        w.floats(&[3.5, 1e-9]).unwrap();
        w.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "e,i\n1.0,2.0\n3.5,1.0e-9\n");
        assert_eq!(read_current_data(&path).unwrap(), vec![(1.0, 2.0), (3.5, 1e-9)]);
    }

    #[test]
    fn missing_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "field,current\n1,2\n").unwrap();
        let err = read_current_data(&path).unwrap_err();
        assert!(err.to_string().contains("`e`"));
    }
}
