//! File formats: CSV inputs and outputs, GeoJSON flow maps, TOML config.

pub mod config;
pub mod geojson;
pub mod records;
pub mod tables;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

pub use config::{Config, RouterConfig, ScenarioConfig};
pub use records::{
    edges_csv, nodes_csv, parse_network, parse_od, parse_simplified, parse_traces, read_network, read_od,
    read_simplified, read_traces, simplified_csv, traces_csv, RowIssue, TraceLoad,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: u64, message: String },
    #[error("{0}: no valid rows")]
    EmptyInput(String),
    #[error("{file}: {message}")]
    Invalid { file: String, message: String },
}

impl IoError {
    pub fn code(&self) -> &'static str {
        match self {
            IoError::Io { .. } => "io_error",
            IoError::Parse { .. } => "parse_error",
            IoError::EmptyInput(_) => "empty_input",
            IoError::Invalid { .. } => "invariant_violation",
        }
    }

    pub fn is_parse(&self) -> bool {
        !matches!(self, IoError::Io { .. })
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| IoError::io(path, e))?;
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}

pub(crate) fn open(path: &Path) -> Result<fs::File, IoError> {
    fs::File::open(path).map_err(|e| IoError::io(path, e))
}

pub fn format_instant(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// RFC 3339 with an explicit offset; a space may stand in for the `T`.
pub fn parse_instant(s: &str) -> Result<DateTime<Utc>, String> {
    let s = s.trim();
    let fixed = if s.len() > 10 && s.as_bytes()[10] == b' ' {
        format!("{}T{}", &s[..10], &s[11..])
    } else {
        s.to_string()
    };
    DateTime::parse_from_rfc3339(&fixed)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp {s:?}: {e}"))
}

pub(crate) fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instants() {
        let t = parse_instant("2019-11-26T08:00:00+01:00").unwrap();
        assert_eq!(format_instant(t), "2019-11-26T07:00:00Z");
        assert_eq!(parse_instant("2019-11-26 07:00:00Z").unwrap(), t);
        let frac = parse_instant("2019-11-26T07:00:00.25Z").unwrap();
        assert_eq!(format_instant(frac), "2019-11-26T07:00:00.250Z");
        assert_eq!(parse_instant(&format_instant(frac)).unwrap(), frac);
        assert!(parse_instant("2019-11-26T07:00:00").is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.csv");
        write_atomic(&p, b"a").unwrap();
        write_atomic(&p, b"b").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"b");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
