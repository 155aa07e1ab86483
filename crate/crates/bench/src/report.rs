//! Recomputes a run summary from its CSV alone.

use std::path::Path;

use faasbench_core::metrics::{read_csv, render_size_table, summarize_rows, MetricsError, RunSummary};

/// Summary and the rendered text (summary table followed by the size table).
pub fn report(csv_path: &Path) -> Result<(RunSummary, String), MetricsError> {
    let rows = read_csv(csv_path)?;
    let summary = summarize_rows(&rows)?;
    let text = format!("{}\n{}", summary.render(), render_size_table(&rows));
    Ok((summary, text))
}
