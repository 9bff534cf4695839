//! Result containers and atomic artifact writing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::config::Format;
use crate::error::RunError;

/// Version of the results.csv columns and summary.json layout.
pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 4] = ["path_id", "t", "series", "value"];

/// One long-format row of results.csv.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub path_id: u64,
    pub t: f64,
    pub series: String,
    pub value: f64,
}

impl Row {
    pub fn new(path_id: usize, t: f64, series: impl Into<String>, value: f64) -> Self {
        Self {
            path_id: path_id as u64,
            t,
            series: series.into(),
            value,
        }
    }
}

/// Everything one run produces, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub rows: Vec<Row>,
    /// The `results` object of summary.json.
    pub results: Value,
    pub certificate: Option<String>,
    /// `Some(false)` when a certificate was produced and failed.
    pub certified: Option<bool>,
}

pub fn csv_bytes(rows: &[Row]) -> Result<Vec<u8>, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| RunError::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([r.path_id.to_string(), format!("{:?}", r.t), r.series.clone(), format!("{:?}", r.value)])
            .map_err(io)?;
    }
    w.into_inner().map_err(|e| RunError::Io(e.to_string()))
}

/// Writes `files` into `dir`, each through a temporary file and a rename.
/// On failure every temporary file is removed and no target is replaced.
pub fn write_atomically(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<Vec<PathBuf>, RunError> {
    let io = |p: &Path, e: std::io::Error| RunError::Io(format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut temps = Vec::new();
    let staged: Result<(), RunError> = files.iter().try_for_each(|(name, bytes)| {
        let tmp = dir.join(format!(".{name}.tmp"));
        temps.push(tmp.clone());
        let mut f = fs::File::create(&tmp).map_err(|e| io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| io(&tmp, e))?;
        f.sync_all().map_err(|e| io(&tmp, e))
    });
    let cleanup = |temps: &[PathBuf]| {
        for t in temps {
            let _ = fs::remove_file(t);
        }
    };
    if let Err(e) = staged {
        cleanup(&temps);
        return Err(e);
    }
    let mut done = Vec::new();
    for ((name, _), tmp) in files.iter().zip(&temps) {
        let target = dir.join(name);
        if let Err(e) = fs::rename(tmp, &target) {
            cleanup(&temps);
            return Err(io(&target, e));
        }
        done.push(target);
    }
    Ok(done)
}

/// Serializes the requested artifacts of `outcome`.
pub fn artifacts(outcome: &Outcome, summary: &Value, formats: &[Format]) -> Result<Vec<(&'static str, Vec<u8>)>, RunError> {
    let mut files = Vec::new();
    if formats.contains(&Format::Csv) {
        files.push(("results.csv", csv_bytes(&outcome.rows)?));
    }
    if formats.contains(&Format::Json) {
        let mut text = serde_json::to_string_pretty(summary).map_err(|e| RunError::Io(e.to_string()))?;
        text.push('\n');
        files.push(("summary.json", text.into_bytes()));
    }
    if let (true, Some(c)) = (formats.contains(&Format::Certificate), &outcome.certificate) {
        files.push(("certificate.txt", c.clone().into_bytes()));
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_floats() {
        let rows = vec![Row::new(3, 0.1, "S1", 1.0 / 3.0), Row::new(0, 1.0, "a,b", -0.0)];
        let bytes = csv_bytes(&rows).unwrap();
        let mut r = csv::Reader::from_reader(bytes.as_slice());
        assert_eq!(r.headers().unwrap(), CSV_HEADER.as_slice());
        let recs: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
        assert_eq!(recs[0][3].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(&recs[1][2], "a,b");
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let out = write_atomically(dir.path(), &[("a.txt", b"x".to_vec()), ("b.txt", b"y".to_vec())]).unwrap();
        assert_eq!(out.len(), 2);
        let names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert!(names.iter().all(|n| !n.ends_with(".tmp")), "{names:?}");
        assert_eq!(fs::read(dir.path().join("b.txt")).unwrap(), b"y");
    }
}
