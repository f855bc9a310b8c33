//! CSV / JSON emission and the metadata sidecars written next to every output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ConcentrationTable, RecoveryReport};
use crate::record::RunRecord;

pub const REPORT_HEADER: [&str; 5] = ["n", "N", "trials", "successes", "rate"];
pub const RECURRENCE_HEADER: [&str; 4] = ["t", "dist_l2", "hamming", "loss"];
pub const CONCENTRATION_HEADER: [&str; 6] = ["N", "repeats", "median", "q10", "q90", "median_rho"];

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let kind = match e.kind() {
        csv::ErrorKind::Io(io) => io.kind(),
        _ => std::io::ErrorKind::InvalidData,
    };
    Error::io(path, std::io::Error::new(kind, e.to_string()))
}

fn write_rows<const K: usize>(
    path: &Path,
    header: [&str; K],
    rows: impl Iterator<Item = [String; K]>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `n,N,trials,successes,rate`, one row per grid cell.
pub fn emit_report_csv(report: &RecoveryReport, path: &Path) -> Result<()> {
    write_rows(
        path,
        REPORT_HEADER,
        report.cells.iter().map(|c| {
            [
                c.n.to_string(),
                c.n_samples.to_string(),
                c.trials.to_string(),
                c.successes().to_string(),
                c.rate().to_string(),
            ]
        }),
    )
}

/// `t,dist_l2,hamming,loss`, one row per iteration.
pub fn emit_recurrence_csv(record: &RunRecord, path: &Path) -> Result<()> {
    write_rows(
        path,
        RECURRENCE_HEADER,
        (0..record.len()).map(|i| {
            [
                (i + 1).to_string(),
                record.dist_l2()[i].to_string(),
                record.hamming()[i].to_string(),
                record.loss()[i].to_string(),
            ]
        }),
    )
}

pub fn emit_concentration_csv(table: &ConcentrationTable, path: &Path) -> Result<()> {
    write_rows(
        path,
        CONCENTRATION_HEADER,
        table.rows.iter().map(|r| {
            [
                r.n_samples.to_string(),
                r.deltas.len().to_string(),
                r.median.to_string(),
                r.q10.to_string(),
                r.q90.to_string(),
                r.median_rho.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceRow {
    pub t: usize,
    pub dist_l2: f64,
    pub hamming: u32,
    pub loss: f64,
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    read_rows(path)
}

pub fn read_recurrence_csv(path: &Path) -> Result<Vec<RecurrenceRow>> {
    read_rows(path)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        )
    })?;
    write_text(&(text + "\n"), path)
}

pub fn write_text(text: &str, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reproduction metadata stored as `<file>.meta.json` beside each output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Resolved configuration as `key = value` lines.
    pub config: String,
    pub defaulted_keys: Vec<String>,
    pub master_seed: u64,
    pub seed_derivation: String,
    /// Subcommand-specific resolved parameters.
    pub parameters: serde_json::Value,
}

impl Metadata {
    pub fn new(
        subcommand: &str,
        config: String,
        master_seed: u64,
        parameters: serde_json::Value,
    ) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config,
            defaulted_keys: Vec::new(),
            master_seed,
            seed_derivation:
                "splitmix64 chain over [master_seed, n, N, trial]; ChaCha8 stream per purpose tag"
                    .into(),
            parameters,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn write_sidecar(path: &Path, meta: &Metadata) -> Result<PathBuf> {
    let side = sidecar_path(path);
    write_json(meta, &side)?;
    Ok(side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{CellResult, SuccessKind, SweepConfig};

    fn report(cells: Vec<CellResult>) -> RecoveryReport {
        RecoveryReport {
            config: SweepConfig::default(),
            cells,
            wall_time_secs: 0.0,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        emit_report_csv(&report(vec![]), &p).unwrap();
        assert_eq!(
            fs::read_to_string(&p).unwrap(),
            "n,N,trials,successes,rate\n"
        );
        assert!(read_report_csv(&p).unwrap().is_empty());
    }

    #[test]
    fn report_row_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let cell = CellResult {
            n: 25,
            n_samples: 140,
            trials: 100,
            ergodic_successes: 93,
            last_iterate_successes: 80,
            success_kind: SuccessKind::Ergodic,
        };
        emit_report_csv(&report(vec![cell]), &p).unwrap();
        assert_eq!(
            fs::read_to_string(&p).unwrap(),
            "n,N,trials,successes,rate\n25,140,100,93,0.93\n"
        );
        let rows = read_report_csv(&p).unwrap();
        assert_eq!(rows[0].rate, 0.93);
        assert_eq!(rows[0].successes, 93);
    }

    #[test]
    fn recurrence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rec.csv");
        let s = [0.5, 0.5, -0.5, 0.5];
        let seq = vec![vec![0.5; 4], s.to_vec()];
        let rec = RunRecord::from_iterates(
            &s,
            Default::default(),
            &[0.5; 4],
            &seq,
            Some(&[1.0 / 3.0, 0.0]),
        );
        emit_recurrence_csv(&rec, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,dist_l2,hamming,loss\n"));
        assert!(!text.contains('\r'));
        let rows = read_recurrence_csv(&p).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].loss, 1.0 / 3.0);
        assert_eq!(rows[0].dist_l2, rec.dist_l2()[0]);
        assert_eq!(rows[1].hamming, 0);
    }

    #[test]
    fn io_errors_carry_path() {
        let p = Path::new("/nonexistent-dir/x.csv");
        let err = emit_report_csv(&report(vec![]), p).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }

    #[test]
    fn sidecar_naming() {
        assert_eq!(
            sidecar_path(Path::new("a/b.csv")),
            PathBuf::from("a/b.csv.meta.json")
        );
    }
}
