//! Result files: `results.csv`, per-run JSONL traces and `manifest.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::monte_carlo::{AggregateRow, SolverFlags, TraceSet};
use crate::error::{Error, Result};

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACE_DIR: &str = "traces";
pub const CSV_HEADER: &str = "power_db,t,variant,n_init,mean_sum_rate_bits,stderr_bits,realizations";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub system: String,
    pub realizations: usize,
    pub solver_flags: SolverFlags,
    /// Seconds since the Unix epoch.
    pub created_unix: u64,
}

/// Hex SHA-256 of the canonical config text.
pub fn config_hash(config: &ExperimentConfig) -> String {
    Sha256::digest(config.to_text().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn write_csv(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    writer.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// `traces/r00003_p30_t0.5_final.jsonl`.
pub fn trace_file_name(trace: &TraceSet) -> String {
    format!(
        "r{:05}_p{}_t{}_{}.jsonl",
        trace.realization, trace.power_db, trace.t, trace.variant
    )
}

pub fn write_trace(trace: &TraceSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for rec in &trace.records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes the CSV, any traces and the manifest under `outdir`, returning the
/// CSV path.
pub fn emit_results(
    config: &ExperimentConfig,
    rows: &[AggregateRow],
    traces: &[TraceSet],
    flags: SolverFlags,
    outdir: &Path,
) -> Result<PathBuf> {
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let csv_path = outdir.join(RESULTS_FILE);
    write_csv(rows, &csv_path)?;

    if !traces.is_empty() {
        let dir = outdir.join(TRACE_DIR);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for trace in traces {
            write_trace(trace, &dir.join(trace_file_name(trace)))?;
        }
    }

    let manifest = Manifest {
        config_sha256: config_hash(config),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        system: config.system.to_string(),
        realizations: config.realizations,
        solver_flags: flags,
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let path = outdir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(csv_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::monte_carlo::Series;
    use crate::pipeline::VariantId;
    use crate::solver::TraceRecord;
    use crate::topology::SystemSpec;

    fn config() -> ExperimentConfig {
        ExperimentConfig::new(SystemSpec::new((1, 1), (1, 1), (1, 1), 1, 1).unwrap())
    }

    #[test]
    fn empty_rows_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = emit_results(&config(), &[], &[], SolverFlags::default(), dir.path()).unwrap();
        assert_eq!(fs::read_to_string(path).unwrap(), format!("{CSV_HEADER}\n"));
        assert!(read_csv(&dir.path().join(RESULTS_FILE)).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trips() {
        let rows = vec![
            AggregateRow {
                power_db: 30.0,
                t: 0.425,
                series: Series::Variant(VariantId::AfterPhase2),
                n_init: 5,
                mean_sum_rate_bits: 1.0 / 3.0,
                stderr_bits: 0.1,
                realizations: 100,
            },
            AggregateRow {
                power_db: -2.5,
                t: 0.5,
                series: Series::UpperBound,
                n_init: 1,
                mean_sum_rate_bits: 7.25,
                stderr_bits: 0.0,
                realizations: 1,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_csv(&rows, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("30.0,0.425,after_phase2,5,"));
    }

    #[test]
    fn trace_lines_match_records() {
        let records: Vec<TraceRecord> = (1..=7)
            .map(|i| TraceRecord {
                phase: if i < 4 { 1 } else { 2 },
                iteration: i,
                objective_bits: i as f64,
                max_delta: 0.5,
            })
            .collect();
        let trace = TraceSet {
            realization: 3,
            power_db: 30.0,
            t: 0.5,
            variant: VariantId::Final,
            records: records.clone(),
        };
        let dir = tempfile::tempdir().unwrap();
        emit_results(&config(), &[], std::slice::from_ref(&trace), SolverFlags::default(), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(TRACE_DIR).join(trace_file_name(&trace))).unwrap();
        let back: Vec<TraceRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, records);
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(manifest.config_sha256, config_hash(&config()));
        assert_eq!(manifest.config_sha256.len(), 64);
    }

    #[test]
    fn unwritable_directory_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "").unwrap();
        let err = emit_results(&config(), &[], &[], SolverFlags::default(), &blocker.join("sub")).unwrap_err();
        assert!(err.to_string().contains("file"));
    }
}
