use std::fmt::Write as _;

use super::{InvocationRecord, MetricsError, Point, RecordRow, Status};

/// Duration statistics of one timing layer, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Lower median.
    pub median: f64,
    /// Nearest-rank percentiles.
    pub p95: f64,
    pub p99: f64,
    /// Population standard deviation.
    pub stddev: f64,
}

impl LayerStats {
    /// `None` for an empty sample.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Some(Self {
            count: n,
            min: sorted[0],
            max: sorted[n - 1],
            mean,
            median: sorted[(n - 1) / 2],
            p95: sorted[nearest_rank(95, n) - 1],
            p99: sorted[nearest_rank(99, n) - 1],
            stddev: var.sqrt(),
        })
    }
}

/// 1-based rank `ceil(p/100 * n)`, clamped to at least 1.
pub fn nearest_rank(percent: usize, n: usize) -> usize {
    ((percent * n).div_ceil(100)).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ByteTotals {
    pub header_bytes: u64,
    pub body_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub request_count: usize,
    pub success_count: usize,
    pub success_ratio: f64,
    pub status_counts: Vec<(Status, usize)>,
    pub client: Option<LayerStats>,
    pub proxy: Option<LayerStats>,
    pub target: Option<LayerStats>,
    /// Indexed by [`Point::index`].
    pub bytes: [ByteTotals; 4],
    /// Sum of client-observed durations over all records.
    pub total_runtime_ms: f64,
}

pub fn summarize(records: &[InvocationRecord]) -> Result<RunSummary, MetricsError> {
    let rows: Vec<RecordRow> = records.iter().map(InvocationRecord::row).collect();
    summarize_rows(&rows)
}

/// Summary over flattened rows, so CSV files can be re-summarized without
/// the original records.
pub fn summarize_rows(rows: &[RecordRow]) -> Result<RunSummary, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    let successes: Vec<&RecordRow> = rows.iter().filter(|r| r.status == Status::Success).collect();
    let layer = |f: fn(&RecordRow) -> Option<f64>| {
        let values: Vec<f64> = successes.iter().filter_map(|r| f(r)).collect();
        LayerStats::from_values(&values)
    };

    let mut bytes = [ByteTotals::default(); 4];
    for row in rows {
        for p in Point::ALL {
            if let Some((h, b)) = row.sizes[p.index()] {
                bytes[p.index()].header_bytes += h;
                bytes[p.index()].body_bytes += b;
            }
        }
    }

    let status_counts = Status::ALL
        .into_iter()
        .map(|s| (s, rows.iter().filter(|r| r.status == s).count()))
        .filter(|(_, c)| *c > 0)
        .collect();

    Ok(RunSummary {
        request_count: rows.len(),
        success_count: successes.len(),
        success_ratio: successes.len() as f64 / rows.len() as f64,
        status_counts,
        client: layer(|r| r.client_ms),
        proxy: layer(|r| r.proxy_ms),
        target: layer(|r| r.target_ms),
        bytes,
        total_runtime_ms: rows.iter().filter_map(|r| r.client_ms).sum(),
    })
}

impl RunSummary {
    /// Aligned plain-text rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "requests      {}", self.request_count);
        let _ = writeln!(
            out,
            "success       {} ({:.1}%)",
            self.success_count,
            self.success_ratio * 100.0
        );
        for (status, count) in &self.status_counts {
            let _ = writeln!(out, "  {:<16}{count}", status.as_str());
        }
        let _ = writeln!(out, "total runtime {:.3} ms", self.total_runtime_ms);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<8}{:>7}{:>11}{:>11}{:>11}{:>11}{:>11}{:>11}{:>11}",
            "layer", "n", "min", "mean", "median", "p95", "p99", "max", "stddev"
        );
        for (name, stats) in [("client", &self.client), ("proxy", &self.proxy), ("target", &self.target)] {
            match stats {
                Some(s) => {
                    let _ = writeln!(
                        out,
                        "{name:<8}{:>7}{:>11.3}{:>11.3}{:>11.3}{:>11.3}{:>11.3}{:>11.3}{:>11.3}",
                        s.count, s.min, s.mean, s.median, s.p95, s.p99, s.max, s.stddev
                    );
                }
                None => {
                    let _ = writeln!(out, "{name:<8}{:>7}", 0);
                }
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<8}{:>14}{:>14}", "point", "header B", "body B");
        for p in Point::ALL {
            let t = self.bytes[p.index()];
            let _ = writeln!(out, "{:<8}{:>14}{:>14}", p.to_string(), t.header_bytes, t.body_bytes);
        }
        out
    }
}

/// Per-invocation header/body sizes at m1..m4 with a closing total row.
pub fn render_size_table(rows: &[RecordRow]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<10}", "words");
    for p in Point::ALL {
        let _ = write!(out, "{:>12}{:>12}", format!("{p} header"), format!("{p} body"));
    }
    out.push('\n');
    let mut totals = [(0u64, 0u64); 4];
    for row in rows {
        let _ = write!(out, "{:<10}", row.words);
        for p in Point::ALL {
            match row.sizes[p.index()] {
                Some((h, b)) => {
                    totals[p.index()].0 += h;
                    totals[p.index()].1 += b;
                    let _ = write!(out, "{h:>12}{b:>12}");
                }
                None => {
                    let _ = write!(out, "{:>12}{:>12}", "-", "-");
                }
            }
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<10}", "total");
    for (h, b) in totals {
        let _ = write!(out, "{h:>12}{b:>12}");
    }
    out.push('\n');
    out
}
