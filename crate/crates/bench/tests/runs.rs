//! Whole runs through the driver and the command-line binary.

use std::path::Path;
use std::process::Command;

use faasbench::driver::{run_benchmark, Operation, RunConfig};
use faasbench::proxy::ProxyConfig;
use faasbench::report::report;
use faasbench::stack::LocalStack;
use faasbench::targets::{GatewayConfig, WORD_ROUTE};
use faasbench_core::metrics::{read_csv, Point, Status, CSV_COLUMNS};
use faasbench_core::workload::{BatchSpec, Dispatch};

fn batch(total: usize, dispatch: Dispatch, words: Vec<usize>) -> Operation {
    Operation::Batch(BatchSpec {
        total_requests: total,
        batch_size: total.min(5),
        dispatch,
        words_per_request: words,
        seed: 99,
    })
}

fn config(stack: &LocalStack, target_uri: String, operation: Operation, out: &Path) -> RunConfig {
    RunConfig {
        name: "it".into(),
        proxy_uri: stack.proxy_uri(),
        target_uri,
        operation,
        output_dir: out.to_owned(),
        request_timeout_ms: 10_000,
        mode: None,
        payload: None,
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn report_recomputes_the_run_summary() {
    let dir = tempfile::tempdir().unwrap();
    let stack = LocalStack::start(ProxyConfig::default(), GatewayConfig::default()).await.unwrap();
    let cfg = config(
        &stack,
        stack.target_uri(WORD_ROUTE),
        batch(20, Dispatch::Asynchronous { max_in_flight: 4 }, vec![10, 50]),
        dir.path(),
    );
    let run = run_benchmark(&cfg).await.unwrap();
    stack.shutdown().await;

    let (summary, text) = report(&run.csv_path).unwrap();
    assert_eq!(summary, run.summary);
    assert!(text.contains("total"));
    assert!(run.records.iter().all(|r| r.status == Status::Success));
    // sandwich
    assert!(run.records.iter().all(|r| r.timing_nested()));
    let log = std::fs::read_to_string(&run.log_path).unwrap();
    assert_eq!(log.lines().count(), 22);
    assert!(!log.contains("00000000"));
}

#[tokio::test(flavor = "multi_thread")]
async fn error_heavy_runs_keep_every_record() {
    let dir = tempfile::tempdir().unwrap();
    let stack = LocalStack::start(ProxyConfig::default(), GatewayConfig::default()).await.unwrap();
    // nothing listens on port 9, so the proxy cannot reach the target
    let cfg = config(
        &stack,
        "http://127.0.0.1:9/func/word".into(),
        batch(7, Dispatch::Asynchronous { max_in_flight: 3 }, vec![3]),
        dir.path(),
    );
    let run = run_benchmark(&cfg).await.unwrap();
    stack.shutdown().await;
    assert_eq!(run.records.len(), 7);
    assert_eq!(read_csv(&run.csv_path).unwrap().len(), 7);
    assert!(run.records.iter().all(|r| r.status == Status::FunctionError));
    assert_eq!(run.summary.success_ratio, 0.0);
    assert!(run.summary.client.is_none());
    assert!(run.records[0].error_detail.as_deref().unwrap().contains("target unreachable"));
}

#[tokio::test(flavor = "multi_thread")]
async fn ladder_rows_grow_at_m1() {
    let dir = tempfile::tempdir().unwrap();
    let stack = LocalStack::start(ProxyConfig::default(), GatewayConfig::default()).await.unwrap();
    let cfg = config(
        &stack,
        stack.target_uri(WORD_ROUTE),
        Operation::Batch(BatchSpec {
            total_requests: 4,
            batch_size: 4,
            dispatch: Dispatch::Synchronous,
            words_per_request: vec![10, 100, 1_000, 10_000],
            seed: 1,
        }),
        dir.path(),
    );
    let run = run_benchmark(&cfg).await.unwrap();
    stack.shutdown().await;
    let csv = std::fs::read_to_string(&run.csv_path).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let rows = read_csv(&run.csv_path).unwrap();
    let m1: Vec<u64> = rows.iter().map(|r| r.sizes[Point::M1.index()].unwrap().1).collect();
    assert!(m1.windows(2).all(|w| w[0] < w[1]), "{m1:?}");
    let m2: Vec<u64> = rows.iter().map(|r| r.sizes[Point::M2.index()].unwrap().1).collect();
    // the proxy re-encodes without enrichment, so the bodies match
    assert_eq!(m1, m2);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_faasbench"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn cli_self_contained_run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.properties");
    let out = dir.path().join("out");
    std::fs::write(
        &conf,
        format!("# smoke run\noperation=batch\nwords=10,100\nrequests=4\nmode=full\nout={}\n", out.display()),
    )
    .unwrap();
    let run = cli(&["run", conf.to_str().unwrap(), "--async", "--max-in-flight", "2"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("success"), "{stdout}");

    let rows = read_csv(&out.join("run.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.result.starts_with("words=")));

    let rep = cli(&["report", out.join("run.csv").to_str().unwrap()]);
    assert_eq!(rep.status.code(), Some(0));
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, CSV_COLUMNS.join(",") + "\n").unwrap();
    let out = cli(&["report", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no records"));

    let renamed = dir.path().join("renamed.csv");
    std::fs::write(&renamed, CSV_COLUMNS.join(",").replacen("uuid", "id", 1) + "\n").unwrap();
    assert_eq!(cli(&["report", renamed.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(cli(&["report", dir.path().join("missing.csv").to_str().unwrap()]).status.code(), Some(1));

    let bad = dir.path().join("bad.properties");
    std::fs::write(&bad, "colour=red\n").unwrap();
    assert_eq!(cli(&["run", bad.to_str().unwrap()]).status.code(), Some(2));

    let unreachable = dir.path().join("unreachable.properties");
    std::fs::write(
        &unreachable,
        format!(
            "proxy-uri=http://127.0.0.1:9/\ntarget-uri=http://127.0.0.1:9/func/word\nout={}\n",
            dir.path().join("o").display()
        ),
    )
    .unwrap();
    assert_eq!(cli(&["run", unreachable.to_str().unwrap()]).status.code(), Some(1));
}
