use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{InvocationRecord, MetricsError, RecordRow, Status};

pub const CSV_COLUMNS: [&str; 18] = [
    "uuid",
    "status",
    "words",
    "m1_header_b",
    "m1_body_b",
    "m2_header_b",
    "m2_body_b",
    "m3_header_b",
    "m3_body_b",
    "m4_header_b",
    "m4_body_b",
    "client_ms",
    "proxy_ms",
    "target_ms",
    "target_start_epoch_ms",
    "target_stop_epoch_ms",
    "result",
    "error",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn to_fields(row: &RecordRow) -> Vec<String> {
    let mut f = Vec::with_capacity(CSV_COLUMNS.len());
    f.push(row.uuid.clone());
    f.push(row.status.to_string());
    f.push(row.words.to_string());
    for s in row.sizes {
        f.push(opt(s.map(|s| s.0)));
        f.push(opt(s.map(|s| s.1)));
    }
    // f64 Display is the shortest representation that parses back exactly.
    f.push(opt(row.client_ms));
    f.push(opt(row.proxy_ms));
    f.push(opt(row.target_ms));
    f.push(opt(row.target_start_epoch_ms));
    f.push(opt(row.target_stop_epoch_ms));
    f.push(row.result.clone());
    f.push(row.error.clone().unwrap_or_default());
    f
}

/// Writes a header row plus one row per record and returns the record count.
pub fn write_csv_to<W: Write>(records: &[InvocationRecord], dest: W) -> Result<usize, MetricsError> {
    let mut w = csv::Writer::from_writer(dest);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record(to_fields(&r.row()))?;
    }
    w.flush()?;
    Ok(records.len())
}

pub fn write_csv(records: &[InvocationRecord], path: &Path) -> Result<usize, MetricsError> {
    write_csv_to(records, File::create(path)?)
}

fn parse_opt<T: FromStr>(s: &str, line: u64, column: &str) -> Result<Option<T>, MetricsError>
where
    T::Err: std::fmt::Display,
{
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|e| MetricsError::Parse {
        line,
        message: format!("{column}: {e}"),
    })
}

fn parse_req<T: FromStr>(s: &str, line: u64, column: &str) -> Result<T, MetricsError>
where
    T::Err: std::fmt::Display,
{
    parse_opt(s, line, column)?.ok_or_else(|| MetricsError::Parse {
        line,
        message: format!("{column} is empty"),
    })
}

pub fn read_csv_from<R: Read>(src: R) -> Result<Vec<RecordRow>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(src);
    let header = rdr.headers()?;
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        let found: Vec<&str> = header.iter().collect();
        return Err(MetricsError::SchemaError(format!(
            "expected columns {CSV_COLUMNS:?}, found {found:?}"
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let col = |i: usize| rec.get(i).unwrap_or("");
        let mut sizes = [None; 4];
        for (p, slot) in sizes.iter_mut().enumerate() {
            let h = parse_opt::<u64>(col(3 + 2 * p), line, CSV_COLUMNS[3 + 2 * p])?;
            let b = parse_opt::<u64>(col(4 + 2 * p), line, CSV_COLUMNS[4 + 2 * p])?;
            *slot = match (h, b) {
                (Some(h), Some(b)) => Some((h, b)),
                (None, None) => None,
                _ => {
                    return Err(MetricsError::Parse {
                        line,
                        message: format!("m{} has only one of header/body", p + 1),
                    })
                }
            };
        }
        let status = Status::from_str(col(1)).map_err(|message| MetricsError::Parse { line, message })?;
        rows.push(RecordRow {
            uuid: col(0).to_owned(),
            status,
            words: parse_req(col(2), line, "words")?,
            sizes,
            client_ms: parse_opt(col(11), line, "client_ms")?,
            proxy_ms: parse_opt(col(12), line, "proxy_ms")?,
            target_ms: parse_opt(col(13), line, "target_ms")?,
            target_start_epoch_ms: parse_opt(col(14), line, "target_start_epoch_ms")?,
            target_stop_epoch_ms: parse_opt(col(15), line, "target_stop_epoch_ms")?,
            result: col(16).to_owned(),
            error: Some(col(17).to_owned()).filter(|e| !e.is_empty()),
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<RecordRow>, MetricsError> {
    read_csv_from(File::open(path)?)
}
