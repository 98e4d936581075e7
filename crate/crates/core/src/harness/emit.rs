//! Result files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::OutputFormat;
use super::diagnose::Diagnosis;
use super::records::{IntervalRecord, MethodResult};
use super::ExperimentOutput;
use crate::diagnostics::{write_ecdf_csv, write_pivots_csv};
use crate::error::Result;

/// Column order of the aggregate file.
pub const RESULT_COLUMNS: [&str; 12] = [
    "experiment",
    "method",
    "scenario_param",
    "replicates",
    "coverage",
    "coverage_lo",
    "coverage_hi",
    "mean_length",
    "length_lo",
    "length_hi",
    "clipped_count",
    "seed",
];

const RECORD_COLUMNS: [&str; 9] =
    ["method", "replicate", "target", "estimate", "lower", "upper", "truth", "covered", "clipped"];

fn write_rows<T: Serialize, W: Write>(rows: &[T], header: &[&str], format: OutputFormat, mut w: W) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
            csv.write_record(header)?;
            for r in rows {
                csv.serialize(r)?;
            }
            csv.flush()?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn write_results<W: Write>(results: &[MethodResult], format: OutputFormat, w: W) -> Result<()> {
    write_rows(results, &RESULT_COLUMNS, format, w)
}

pub fn write_records<W: Write>(records: &[IntervalRecord], w: W) -> Result<()> {
    write_rows(records, &RECORD_COLUMNS, OutputFormat::Csv, w)
}

/// `path` with `suffix` appended to its file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes the aggregates to `path` and the per-interval records to
/// `<path>.records.csv`. Returns the files written.
pub fn emit(output: &ExperimentOutput, format: OutputFormat, path: &Path) -> Result<Vec<PathBuf>> {
    write_results(&output.results, format, create(path)?)?;
    let records = sibling(path, ".records.csv");
    write_records(&output.records, create(&records)?)?;
    Ok(vec![path.to_path_buf(), records])
}

/// Writes the summary to `path` plus pivot and ECDF files for both
/// variants next to it.
pub fn emit_diagnosis(diagnosis: &Diagnosis, seed: u64, format: OutputFormat, path: &Path) -> Result<Vec<PathBuf>> {
    let header = ["variant", "ks", "accepted", "attempts", "acceptance_rate", "seed"];
    write_rows(&diagnosis.rows(seed), &header, format, create(path)?)?;
    let mut written = vec![path.to_path_buf()];
    for (name, sample) in [("adjusted", &diagnosis.adjusted), ("unadjusted", &diagnosis.unadjusted)] {
        let pivots = sibling(path, &format!(".{name}.pivots.csv"));
        write_pivots_csv(&sample.values, create(&pivots)?)?;
        let ecdf = sibling(path, &format!(".{name}.ecdf.csv"));
        write_ecdf_csv(&sample.values, create(&ecdf)?)?;
        written.extend([pivots, ecdf]);
    }
    Ok(written)
}
