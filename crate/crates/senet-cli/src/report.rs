//! Result rows and CSV emission.

use senet::Result;
use std::io::Write;
use std::path::Path;

pub const CSV_HEADER: &str =
    "experiment,variant,lambda,way,shot,episodes,acc_pct,ci95_pct,seconds,seed";

/// One evaluation cell. Accuracy and confidence interval are percentages
/// rendered with two decimals; seconds is wall time for the cell.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub experiment: String,
    pub variant: &'static str,
    pub lambda: f64,
    pub way: usize,
    pub shot: usize,
    pub episodes: usize,
    pub accuracy: f64,
    pub ci95: f64,
    pub seconds: f64,
    pub seed: u64,
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.2},{:.2},{:.3},{}",
            self.experiment,
            self.variant,
            self.lambda,
            self.way,
            self.shot,
            self.episodes,
            self.accuracy * 100.0,
            self.ci95 * 100.0,
            self.seconds,
            self.seed
        )
    }
}

/// Write header plus rows to the path, or to stdout when no path is given.
pub fn write_rows(rows: &[ResultRow], out: Option<&Path>) -> Result<()> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_csv_line());
        text.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}
