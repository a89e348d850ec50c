use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::learners::IterationReport;

/// Creates (or truncates) a metrics file holding only the header line.
pub fn write_metrics_header(path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "{}", IterationReport::CSV_HEADER)?;
    Ok(())
}

/// Appends rows, flushing so an interrupted run keeps what it finished.
pub fn append_metrics(path: &Path, reports: &[IterationReport]) -> Result<()> {
    let mut f = OpenOptions::new().append(true).open(path)?;
    for r in reports {
        writeln!(f, "{}", r.to_csv_row())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<IterationReport>> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == IterationReport::CSV_HEADER => {}
        Some(Ok(h)) => return Err(Error::format(format!("unexpected metrics header {h:?}"))),
        Some(Err(e)) => return Err(e.into()),
        None => return Err(Error::format("metrics file is empty")),
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(IterationReport::from_csv_row(&line)?);
        }
    }
    Ok(out)
}
