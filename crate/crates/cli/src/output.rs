use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use snowgrow_core::metrics::{SummaryRow, TrialReport};

/// `dir/stem.csv` -> `dir/stem<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_reports(path: &Path, reports: &[TrialReport]) -> Result<()> {
    write_rows(path, &TrialReport::CSV_HEADER, reports.iter().map(TrialReport::csv_fields))
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_rows(path, &SummaryRow::CSV_HEADER, rows.iter().map(SummaryRow::csv_fields))
}
