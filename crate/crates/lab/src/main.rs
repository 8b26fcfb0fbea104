use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use qoe_core::analysis::CorrelationMethod;
use qoe_core::capture::{run_capture, BrowserDriver, CaptureJob, SyntheticDriver};
use qoe_core::experiments::splice_ab;
use qoe_core::metrics::MetricName;
use qoe_core::PltMetrics;
use qoe_lab::archive;
use qoe_lab::capture_out::write_capture;
use qoe_lab::cdp::{CdpDriver, LaunchOptions};
use qoe_lab::filmstrip_io::{read_filmstrip, write_filmstrip};
use qoe_lab::har_io::parse_har;
use qoe_lab::json::to_pretty_bytes;
use qoe_lab::service::http::{router, AppState};
use qoe_lab::service::{GenericProvider, Service, ServiceConfig, SystemClock, Verifier};

#[derive(Parser)]
#[command(name = "qoe", version, about = "Capture page loads, run perception studies, analyze the answers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DriverKind {
    Cdp,
    Synthetic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Correlation {
    Pearson,
    Spearman,
}

#[derive(Subcommand)]
enum Command {
    /// Record page loads described by a job file.
    Capture {
        #[arg(long)]
        job: PathBuf,
        #[arg(long, value_enum)]
        driver: DriverKind,
        #[arg(long)]
        out: PathBuf,
        /// Browser websocket endpoint for the cdp driver.
        #[arg(long, env = "QOE_DEBUG_URL")]
        debug_url: Option<String>,
        /// Shell command run on each median run; `{dir}` is the run directory.
        #[arg(long)]
        encode_cmd: Option<String>,
        /// The browser behind --debug-url was started with HTTP/2 disabled.
        #[arg(long)]
        browser_h1_only: bool,
        /// Extension loaded in that browser; repeatable.
        #[arg(long = "browser-extension")]
        browser_extensions: Vec<String>,
    },
    /// Filter and analyze an exported campaign directory.
    Analyze {
        #[arg(long)]
        campaign: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Metric defining Δ for A/B pairs.
        #[arg(long)]
        metric: Option<String>,
        /// Ascending Δ bin edges in ms.
        #[arg(long, value_delimiter = ',')]
        bins: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        correlation: Option<Correlation>,
        /// Also write the per-video CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also write filter verdicts here.
        #[arg(long)]
        verdicts: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "QOE_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, env = "QOE_DATA_DIR")]
        data: PathBuf,
        /// `stub` or the URL of an external humanness verifier.
        #[arg(long, env = "QOE_VERIFIER", default_value = "stub")]
        verifier: String,
        /// URL receiving `{session_id, code}` for each completed session.
        #[arg(long, env = "QOE_COMPLETION_CALLBACK")]
        completion_callback: Option<String>,
    },
    /// Export a campaign from a service data directory.
    Export {
        #[arg(long, env = "QOE_DATA_DIR")]
        data: PathBuf,
        #[arg(long)]
        campaign: String,
        /// Output directory, or a file when --tar is given.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tar: bool,
    },
    /// Compute page load metrics of a filmstrip directory.
    Metrics {
        #[arg(long)]
        filmstrip: PathBuf,
        /// HAR file; defaults to har.json next to the manifest.
        #[arg(long)]
        har: Option<PathBuf>,
    },
    /// Splice two filmstrips side by side.
    Splice {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long, default_value_t = 0)]
        delay_right_ms: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

type AnyResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

fn capture(
    job_path: &Path,
    driver: DriverKind,
    out: &Path,
    debug_url: Option<String>,
    encode_cmd: Option<&str>,
    launch: LaunchOptions,
) -> AnyResult {
    let job: CaptureJob = serde_json::from_slice(&std::fs::read(job_path)?)?;
    let mut driver: Box<dyn BrowserDriver> = match driver {
        DriverKind::Synthetic => Box::new(SyntheticDriver::new()),
        DriverKind::Cdp => {
            let url = debug_url.ok_or("the cdp driver needs --debug-url or QOE_DEBUG_URL")?;
            Box::new(CdpDriver::connect(&url, launch)?)
        }
    };
    let captures = run_capture(&job, driver.as_mut()).map_err(|e| e.to_string())?;
    let summaries = write_capture(out, &captures, encode_cmd)?;
    for s in &summaries {
        let status = if s.complete { "complete" } else { "incomplete" };
        println!("{} {} {} runs={} median=run-{}", s.hash, s.url, status, s.runs.len(),
            s.median_run.map_or("none".into(), |k| k.to_string()));
    }
    Ok(())
}

fn analyze(
    dir: &Path,
    out: &Path,
    metric: Option<String>,
    bins: Option<Vec<f64>>,
    correlation: Option<Correlation>,
    csv: Option<PathBuf>,
    verdicts_out: Option<PathBuf>,
) -> AnyResult {
    let mut options = archive::read_options(dir)?.unwrap_or_default();
    if let Some(m) = metric {
        options.metric = MetricName::parse(&m).ok_or_else(|| format!("unknown metric {m}"))?;
    }
    if let Some(edges) = bins {
        if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err("--bins must be strictly increasing".into());
        }
        options.delta_edges = edges;
    }
    if let Some(c) = correlation {
        options.correlation = match c {
            Correlation::Pearson => CorrelationMethod::Pearson,
            Correlation::Spearman => CorrelationMethod::Spearman,
        };
    }
    let input = archive::read_dir(dir)?;
    let (verdicts, report) = input.analyze(&options);
    std::fs::write(out, archive::report_json(&report))?;
    if let Some(p) = csv {
        std::fs::write(p, archive::report_csv(&report)?)?;
    }
    if let Some(p) = verdicts_out {
        std::fs::write(p, archive::verdicts_csv(&verdicts)?)?;
    }
    let f = &report.filtering;
    println!("{} sessions, {} kept, {} dropped; {} videos, {} pairs", f.sessions, f.kept, f.dropped,
        report.videos.len(), report.pairs.len());
    Ok(())
}

fn serve(listen: SocketAddr, data: PathBuf, verifier: &str, callback: Option<String>) -> AnyResult {
    let verifier = Verifier::from_mode(verifier)?;
    let provider = Arc::new(GenericProvider { callback });
    let service = Service::open(ServiceConfig::new(data), Arc::new(SystemClock), provider)?;
    let state = AppState {
        service: Arc::new(service),
        verifier,
        http: reqwest::Client::new(),
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        tracing::info!("listening on {listen}");
        let svc = state.service.clone();
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        svc.snapshot_all()?;
        Ok(())
    })
}

fn export(data: PathBuf, campaign: &str, out: &Path, tar: bool) -> AnyResult {
    let service = Service::open(ServiceConfig::new(data), Arc::new(SystemClock), Arc::new(GenericProvider::default()))?;
    let files = service.export(campaign)?;
    if tar {
        std::fs::write(out, archive::to_tar(&files))?;
    } else {
        archive::write_dir(&files, out)?;
    }
    Ok(())
}

fn metrics(dir: &Path, har: Option<PathBuf>) -> AnyResult {
    let strip = read_filmstrip(dir)?;
    let har = parse_har(&std::fs::read(har.unwrap_or_else(|| dir.join("har.json")))?)?;
    std::io::Write::write_all(&mut std::io::stdout(), &to_pretty_bytes(&PltMetrics::compute(&strip, &har)))?;
    Ok(())
}

fn splice(left: &Path, right: &Path, delay: u64, out: &Path) -> AnyResult {
    let composite = splice_ab(&read_filmstrip(left)?, &read_filmstrip(right)?, delay).map_err(|e| e.to_string())?;
    write_filmstrip(out, &composite)?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let result = match Cli::parse().command {
        Command::Capture { job, driver, out, debug_url, encode_cmd, browser_h1_only, browser_extensions } => {
            let launch = LaunchOptions {
                http1_only: browser_h1_only,
                extensions: browser_extensions.into_iter().collect::<BTreeSet<_>>(),
            };
            capture(&job, driver, &out, debug_url, encode_cmd.as_deref(), launch)
        }
        Command::Analyze { campaign, out, metric, bins, correlation, csv, verdicts } => {
            analyze(&campaign, &out, metric, bins, correlation, csv, verdicts)
        }
        Command::Serve { listen, data, verifier, completion_callback } => {
            serve(listen, data, &verifier, completion_callback)
        }
        Command::Export { data, campaign, out, tar } => export(data, &campaign, &out, tar),
        Command::Metrics { filmstrip, har } => metrics(&filmstrip, har),
        Command::Splice { left, right, delay_right_ms, out } => splice(&left, &right, delay_right_ms, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qoe: {e}");
            ExitCode::FAILURE
        }
    }
}
