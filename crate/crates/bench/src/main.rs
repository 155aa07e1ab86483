use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use faasbench::config::{ConfigError, Properties};
use faasbench::driver::{run_benchmark, DriverError};
use faasbench::report::report;
use faasbench::stack::{serve, LocalStack, Role};
use faasbench_core::metrics::MetricsError;

/// FaaS benchmark driver, proxy function and target functions.
#[derive(Debug, Parser)]
#[command(name = "faasbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the benchmark described by a properties file. Without
    /// --proxy-uri/--target-uri, local services are started.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Serve the proxy function.
    ServeProxy {
        /// Optional properties file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Serve the target functions behind the gateway emulator.
    ServeTarget {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Recompute and print the summary of a run CSV.
    Report { csv: PathBuf },
}

/// Overrides for configuration keys of the same name.
#[derive(Debug, Default, Args)]
struct Flags {
    #[arg(long)]
    proxy_uri: Option<String>,
    #[arg(long)]
    target_uri: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    operation: Option<String>,
    /// Word counts, comma separated; cycled over the requests.
    #[arg(long)]
    words: Option<String>,
    /// Literal workload text instead of synthesized words.
    #[arg(long)]
    payload: Option<String>,
    #[arg(long)]
    requests: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long = "async")]
    asynchronous: bool,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    request_timeout_ms: Option<u64>,
    #[arg(long)]
    initial_wait_ms: Option<u64>,
    #[arg(long)]
    multiplier: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    sleep_ms: Option<u64>,
    #[arg(long)]
    limit_ms: Option<u64>,
    #[arg(long)]
    level: Option<String>,
    #[arg(long)]
    cold_start_ms: Option<u64>,
    #[arg(long)]
    warm_window_ms: Option<u64>,
    #[arg(long)]
    header_echo: bool,
    #[arg(long)]
    forward_timeout_ms: Option<u64>,
    #[arg(long)]
    injected_latency_ms: Option<u64>,
    /// Target hosts the proxy may forward to, comma separated.
    #[arg(long)]
    allowed_hosts: Option<String>,
    #[arg(long)]
    listen: Option<SocketAddr>,
}

impl Flags {
    fn properties(&self) -> Properties {
        let mut p = Properties::default();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                p.set(k, v).expect("flag names are known keys");
            }
        };
        let s = |v: &Option<String>| v.clone();
        let n = |v: Option<u64>| v.map(|x| x.to_string());
        put("proxy-uri", s(&self.proxy_uri));
        put("target-uri", s(&self.target_uri));
        put("out", self.out.as_ref().map(|o| o.display().to_string()));
        put("operation", s(&self.operation));
        put("words", s(&self.words));
        put("payload", s(&self.payload));
        put("requests", self.requests.map(|x| x.to_string()));
        put("batch", self.batch.map(|x| x.to_string()));
        put("async", self.asynchronous.then(|| "true".into()));
        put("max-in-flight", self.max_in_flight.map(|x| x.to_string()));
        put("seed", n(self.seed));
        put("mode", s(&self.mode));
        put("request-timeout-ms", n(self.request_timeout_ms));
        put("initial-wait-ms", n(self.initial_wait_ms));
        put("multiplier", self.multiplier.map(|x| x.to_string()));
        put("steps", self.steps.map(|x| x.to_string()));
        put("sleep-ms", n(self.sleep_ms));
        put("limit-ms", n(self.limit_ms));
        put("level", s(&self.level));
        put("cold-start-ms", n(self.cold_start_ms));
        put("warm-window-ms", n(self.warm_window_ms));
        put("header-echo", self.header_echo.then(|| "true".into()));
        put("forward-timeout-ms", n(self.forward_timeout_ms));
        put("injected-latency-ms", n(self.injected_latency_ms));
        put("allowed-hosts", s(&self.allowed_hosts));
        put("listen", self.listen.map(|a| a.to_string()));
        p
    }
}

/// A failure with its exit code: 1 for infrastructure, 2 for user input.
struct Failure(u8, String);

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = if matches!(e, ConfigError::Io { .. }) { 1 } else { 2 };
        Failure(code, e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        let code = match e {
            MetricsError::Io(_) | MetricsError::ClockError => 1,
            _ => 2,
        };
        Failure(code, e.to_string())
    }
}

impl From<DriverError> for Failure {
    fn from(e: DriverError) -> Self {
        let code = match e {
            DriverError::InvalidConfig(_) | DriverError::Workload(_) => 2,
            DriverError::Metrics(m) => return m.into(),
            _ => 1,
        };
        Failure(code, e.to_string())
    }
}

fn settings(config: Option<&PathBuf>, flags: &Flags) -> Result<Properties, ConfigError> {
    let mut props = match config {
        Some(path) => Properties::load(path)?,
        None => Properties::default(),
    };
    props.overlay(&flags.properties());
    Ok(props)
}

async fn wait_for_ctrl_c(what: &str, addr: SocketAddr) {
    println!("{what} listening on http://{addr}");
    let _ = tokio::signal::ctrl_c().await;
}

async fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, flags } => {
            let setup = settings(Some(&config), &flags)?.run_setup()?;
            let stack = if setup.proxy_uri.is_none() || setup.target_uri.is_none() {
                Some(
                    LocalStack::start(setup.proxy.clone(), setup.gateway)
                        .await
                        .map_err(|e| Failure(1, e.to_string()))?,
                )
            } else {
                None
            };
            let proxy_uri = setup
                .proxy_uri
                .clone()
                .unwrap_or_else(|| stack.as_ref().expect("started above").proxy_uri());
            let target_uri = setup.target_uri.clone().unwrap_or_else(|| {
                stack
                    .as_ref()
                    .expect("started above")
                    .target_uri(setup.local_route())
            });
            let result = run_benchmark(&setup.run_config(proxy_uri, target_uri)).await;
            if let Some(stack) = stack {
                stack.shutdown().await;
            }
            let report = result?;
            println!("{}", report.summary.render());
            println!("records: {}", report.csv_path.display());
            println!("log: {}", report.log_path.display());
            Ok(())
        }
        Command::ServeProxy { config, flags } => {
            let props = settings(config.as_ref(), &flags)?;
            let addr = props.listen(([127, 0, 0, 1], 8081).into())?;
            let handle = serve(Role::Proxy(props.proxy_config()?), addr)
                .await
                .map_err(|e| Failure(1, e.to_string()))?;
            wait_for_ctrl_c("proxy", handle.local_addr()).await;
            handle.shutdown().await;
            Ok(())
        }
        Command::ServeTarget { config, flags } => {
            let props = settings(config.as_ref(), &flags)?;
            let addr = props.listen(([127, 0, 0, 1], 8080).into())?;
            let handle = serve(Role::Target(props.gateway_config()?), addr)
                .await
                .map_err(|e| Failure(1, e.to_string()))?;
            wait_for_ctrl_c("target", handle.local_addr()).await;
            handle.shutdown().await;
            Ok(())
        }
        Command::Report { csv } => {
            let (_, text) = report(&csv)?;
            println!("{text}");
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, message)) => {
            eprintln!("faasbench: {message}");
            ExitCode::from(code)
        }
    }
}
