use std::fmt;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};

use super::{InvocationRecord, MetricsError, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogLevel {
    Info,
    Warn,
    Error,
}

impl fmt::Display for LogLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogLevel::Info => "INFO",
            LogLevel::Warn => "WARN",
            LogLevel::Error => "ERROR",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEvent {
    pub at: DateTime<Utc>,
    pub level: LogLevel,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub name: String,
    pub started: DateTime<Utc>,
    pub stopped: DateTime<Utc>,
}

/// One status line per record, stamped with the record's completion time.
pub fn invocation_events(records: &[InvocationRecord]) -> Vec<LogEvent> {
    records
        .iter()
        .map(|r| {
            let at = r
                .client_timing
                .and_then(|t| Utc.timestamp_millis_opt(t.epoch_stop_ms as i64).single())
                .unwrap_or_else(Utc::now);
            let level = match r.status {
                Status::Success => LogLevel::Info,
                Status::Invalid | Status::GatewayTimeout | Status::FunctionTimeout => LogLevel::Warn,
                Status::TransportError | Status::FunctionError => LogLevel::Error,
            };
            let mut message = format!("invocation {} status={} words={}", r.uuid, r.status, r.words);
            if let Some(detail) = r.error_detail.as_deref().filter(|d| !d.is_empty()) {
                message.push_str(" error=");
                message.push_str(detail);
            }
            LogEvent { at, level, message }
        })
        .collect()
}

fn line(w: &mut impl Write, at: &DateTime<Utc>, level: LogLevel, message: &str) -> std::io::Result<()> {
    // one event per line
    let message = message.replace(['\r', '\n'], " ");
    writeln!(w, "{} {level} {message}", at.to_rfc3339_opts(SecondsFormat::Millis, true))
}

/// Appends run start, the events, and run stop to `path`.
pub fn write_log(meta: &RunMeta, events: &[LogEvent], path: &Path) -> Result<(), MetricsError> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(file);
    line(&mut w, &meta.started, LogLevel::Info, &format!("run {} started", meta.name))?;
    for e in events {
        line(&mut w, &e.at, e.level, &e.message)?;
    }
    line(&mut w, &meta.stopped, LogLevel::Info, &format!("run {} stopped", meta.name))?;
    w.flush()?;
    Ok(())
}
