//! Metrics and reporting: timing capture, HTTP size accounting at the four
//! measurement points, invocation classification, run summaries and the
//! CSV/log outputs.

mod csv_file;
mod log;
mod size;
mod status;
mod summary;
mod timing;

use std::sync::Mutex;

use thiserror::Error;

pub use csv_file::{read_csv, read_csv_from, write_csv, write_csv_to, CSV_COLUMNS};
pub use log::{invocation_events, write_log, LogEvent, LogLevel, RunMeta};
pub use size::{measure_http_sizes, Point, SizeSample};
pub use status::{classify, error_detail, Outcome, Status};
pub use summary::{
    nearest_rank, render_size_table, summarize, summarize_rows, ByteTotals, LayerStats, RunSummary,
};
pub use timing::{epoch_millis_now, hr_elapsed, Stopwatch, TimingSample};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("monotonic clock went backwards")]
    ClockError,
    #[error("run contains no records")]
    EmptyRun,
    #[error("csv schema mismatch: {0}")]
    SchemaError(String),
    #[error("csv line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] ::csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Full fate of one benchmark invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct InvocationRecord {
    pub uuid: String,
    pub status: Status,
    pub words: usize,
    /// m1 to m4 round trip as seen by the driver.
    pub client_timing: Option<TimingSample>,
    pub proxy_timing: Option<TimingSample>,
    pub target_timing: Option<TimingSample>,
    pub sizes: Vec<SizeSample>,
    pub result: String,
    pub error_detail: Option<String>,
}

impl InvocationRecord {
    pub fn size_at(&self, point: Point) -> Option<SizeSample> {
        self.sizes.iter().copied().find(|s| s.point == point)
    }

    /// target <= proxy <= client on the monotonic durations.
    pub fn timing_nested(&self) -> bool {
        match (&self.target_timing, &self.proxy_timing, &self.client_timing) {
            (Some(t), Some(p), Some(c)) => t.hr_elapsed <= p.hr_elapsed && p.hr_elapsed <= c.hr_elapsed,
            _ => false,
        }
    }

    /// Flattened projection written to CSV.
    pub fn row(&self) -> RecordRow {
        let mut sizes = [None; 4];
        for s in &self.sizes {
            sizes[s.point.index()] = Some((s.header_bytes, s.body_bytes));
        }
        RecordRow {
            uuid: self.uuid.clone(),
            status: self.status,
            words: self.words as u64,
            sizes,
            client_ms: self.client_timing.map(|t| t.millis()),
            proxy_ms: self.proxy_timing.map(|t| t.millis()),
            target_ms: self.target_timing.map(|t| t.millis()),
            target_start_epoch_ms: self.target_timing.map(|t| t.epoch_start_ms),
            target_stop_epoch_ms: self.target_timing.map(|t| t.epoch_stop_ms),
            result: self.result.clone(),
            error: self.error_detail.clone().filter(|e| !e.is_empty()),
        }
    }
}

/// One CSV row. Durations are milliseconds derived from the monotonic
/// durations; sizes are `(header, body)` bytes per measurement point.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub uuid: String,
    pub status: Status,
    pub words: u64,
    pub sizes: [Option<(u64, u64)>; 4],
    pub client_ms: Option<f64>,
    pub proxy_ms: Option<f64>,
    pub target_ms: Option<f64>,
    pub target_start_epoch_ms: Option<u64>,
    pub target_stop_epoch_ms: Option<u64>,
    pub result: String,
    pub error: Option<String>,
}

/// Append-only record sink shared by concurrent invocations. Records keep
/// completion order.
#[derive(Debug, Default)]
pub struct RunStore {
    records: Mutex<Vec<InvocationRecord>>,
}

impl RunStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&self, record: InvocationRecord) {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).push(record);
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_records(self) -> Vec<InvocationRecord> {
        self.records.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::protocol::HrTime;

    fn timing(ns: u32) -> Option<TimingSample> {
        Some(TimingSample::new(1, 2, HrTime::new(0, ns).unwrap()).unwrap())
    }

    fn record(uuid: &str) -> InvocationRecord {
        InvocationRecord {
            uuid: uuid.into(),
            status: Status::Success,
            words: 4,
            client_timing: timing(300),
            proxy_timing: timing(200),
            target_timing: timing(100),
            sizes: vec![SizeSample {
                point: Point::M3,
                header_bytes: 5,
                body_bytes: 6,
            }],
            result: "4".into(),
            error_detail: Some(String::new()),
        }
    }

    #[test]
    fn nesting_and_projection() {
        let r = record("a");
        assert!(r.timing_nested());
        let row = r.row();
        assert_eq!(row.sizes, [None, None, Some((5, 6)), None]);
        assert_eq!(row.error, None);
        assert_eq!(row.target_ms, Some(0.0001));
        let mut inverted = r.clone();
        inverted.target_timing = timing(400);
        assert!(!inverted.timing_nested());
        inverted.target_timing = None;
        assert!(!inverted.timing_nested());
    }

    #[test]
    fn store_serializes_concurrent_appends() {
        let store = Arc::new(RunStore::new());
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let store = Arc::clone(&store);
                std::thread::spawn(move || {
                    for i in 0..100 {
                        store.append(record(&format!("{t}-{i}")));
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let store = Arc::into_inner(store).unwrap();
        assert_eq!(store.len(), 800);
        assert_eq!(store.into_records().len(), 800);
    }
}
