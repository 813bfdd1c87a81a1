//! The `elicit` command line: channel analysis, simulation, catalog
//! ingestion and the HTTP service.

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::channel::{
    compute_capacity, dominated_row_report, shannon_closed_form, ChannelSpec, ShannonSolution, DEFAULT_CAPACITY_TOL,
};
use crate::error::{Error, Result};
use crate::selection::PolicyKind;
use crate::service::Service;
use crate::simulation::{run_experiment, write_atomic, write_outputs, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "elicit", version, about = "Adaptive preference elicitation under noisy responses")]
pub struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Output directory for result files.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Capacity, optimal predictive distribution and admissibility of a noise channel.
    AnalyzeChannel(AnalyzeArgs),
    /// Simulated-user experiments writing metrics.csv and summary.json.
    Simulate(SimulateArgs),
    /// Validate a JSONL catalog and add it to the data directory.
    Ingest(IngestArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ChannelSource {
    /// Channel file: {"m": M, "matrix": [[...]]} or {"symmetric": {"m": M, "alpha": A}}.
    #[arg(long, value_name = "FILE")]
    pub channel: Option<PathBuf>,
    /// Symmetric channel given as M,ALPHA.
    #[arg(long, value_name = "M,ALPHA")]
    pub symmetric: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub source: ChannelSource,
    /// Duality-gap tolerance of the capacity solver, in nats.
    #[arg(long, default_value_t = DEFAULT_CAPACITY_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config in JSON or TOML; omitted fields take defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override the number of simulated users.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Override the number of questions per user.
    #[arg(long, short = 'K')]
    pub questions: Option<usize>,
    /// Override the compared policies (comma separated).
    #[arg(long, value_delimiter = ',', value_parser = parse_policy)]
    pub compare: Option<Vec<PolicyKind>>,
    /// Record wall-clock decision times (makes output timing dependent).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSON Lines catalog: one {"id", "title"?, "features"} object per line.
    #[arg(value_name = "FILE")]
    pub file: PathBuf,
    /// Data directory (default: $ELICIT_DATA_DIR or ./elicit-data).
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address.
    #[arg(long, value_name = "HOST:PORT", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Data directory (default: $ELICIT_DATA_DIR or ./elicit-data).
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
}

fn parse_policy(s: &str) -> std::result::Result<PolicyKind, String> {
    match s {
        "entropy_pursuit" | "ep" => Ok(PolicyKind::EntropyPursuit),
        "knowledge_gradient" | "kg" => Ok(PolicyKind::KnowledgeGradient),
        "continuum" => Ok(PolicyKind::Continuum),
        _ => Err(format!("unknown policy {s}")),
    }
}

fn parse_symmetric(s: &str) -> Result<ChannelSpec> {
    let (m, a) = s
        .split_once(',')
        .ok_or_else(|| Error::invalid(format!("expected M,ALPHA, got {s}")))?;
    let m = m.trim().parse().map_err(|_| Error::invalid(format!("bad m in {s}")))?;
    let alpha = a.trim().parse().map_err(|_| Error::invalid(format!("bad alpha in {s}")))?;
    Ok(ChannelSpec::symmetric(m, alpha))
}

fn resolved(command: &str, seed: Option<u64>, config: serde_json::Value) {
    let line = json!({ "command": command, "seed": seed, "config": config });
    eprintln!("{line}");
}

fn emit(value: &serde_json::Value, out: Option<&Path>, file: &str) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join(file), text.as_bytes())?;
    }
    std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::io("stdout", e))
}

fn analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<()> {
    let spec = match (&args.source.channel, &args.source.symmetric) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<ChannelSpec>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        (None, Some(s)) => parse_symmetric(s)?,
        (None, None) => return Err(Error::invalid("a channel is required")),
    };
    resolved("analyze-channel", cli.seed, json!({ "channel": spec, "tol": args.tol }));
    let channel = spec.build()?;
    let analysis = compute_capacity(&channel, args.tol)?;
    let closed_form = match shannon_closed_form(&channel) {
        Ok(ShannonSolution::Optimal(u)) => json!({ "admissible": true, "u": u }),
        Ok(ShannonSolution::Inadmissible { unconstrained }) => {
            json!({ "admissible": false, "unconstrained": unconstrained })
        }
        Err(e) => json!({ "error": e.code(), "message": e.to_string() }),
    };
    let mut value = serde_json::to_value(&analysis)?;
    value["dominated_rows"] = json!(dominated_row_report(&channel, args.tol));
    value["closed_form"] = closed_form;
    emit(&value, cli.out.as_deref(), "channel.json")
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(p) = args.paths {
        config.paths = p;
    }
    if let Some(k) = args.questions {
        config.questions = k;
    }
    if let Some(c) = &args.compare {
        config.compare = c.clone();
    }
    if args.timing {
        config.record_timing = true;
    }
    resolved("simulate", Some(config.seed), serde_json::to_value(&config)?);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let report = run_experiment(&config)?;
    write_outputs(&out, &report)?;
    let brief = json!({
        "out": out,
        "capacity_bits": report.capacity_bits,
        "answer_entropy_bits": report.answer_entropy_bits,
        "policies": report.policies.iter().map(|p| {
            let last = p.steps.last().expect("at least one step");
            json!({ "policy": p.policy, "entropy_bits": last.entropy_bits, "misclass": last.misclass })
        }).collect::<Vec<_>>(),
    });
    println!("{brief}");
    Ok(())
}

fn data_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(|| Service::resolve_data_dir("elicit-data"))
}

fn ingest(cli: &Cli, args: &IngestArgs) -> Result<()> {
    let dir = data_dir(&args.data);
    resolved("ingest", cli.seed, json!({ "file": args.file, "data": dir }));
    let text = std::fs::read_to_string(&args.file).map_err(|e| Error::io(&args.file, e))?;
    let info = Service::open(&dir)?.ingest_catalog(&text)?;
    emit(&serde_json::to_value(info)?, cli.out.as_deref(), "catalog.json")
}

fn serve_command(cli: &Cli, args: &ServeArgs) -> Result<()> {
    let dir = data_dir(&args.data);
    resolved("serve", cli.seed, json!({ "addr": args.addr.to_string(), "data": dir }));
    let service = Arc::new(Service::open(&dir)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::invalid(format!("cannot start runtime: {e}")))?;
    runtime.block_on(crate::service::serve(args.addr, service))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::AnalyzeChannel(a) => analyze(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Ingest(a) => ingest(cli, a),
        Command::Serve(a) => serve_command(cli, a),
    }
}

/// Parses `argv` and runs it: 0 on success, 1 on failure with a JSON error
/// line on stderr, 2 on usage errors.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(Error::invalid(format!("cannot build thread pool: {e}"))),
        },
        None => run(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let mut line = json!({ "code": e.code(), "message": e.to_string() });
            if let Error::Ingestion(lines) = &e {
                line["lines"] = serde_json::to_value(lines).unwrap_or_default();
            }
            eprintln!("{line}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn symmetric_flag_parses() {
        assert_eq!(parse_symmetric("3, 0.5").unwrap(), ChannelSpec::symmetric(3, 0.5));
        assert!(parse_symmetric("3").is_err());
        assert!(parse_symmetric("x,0.5").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(dispatch(["elicit", "analyze-channel", "--bogus"]), 2);
        assert_eq!(dispatch(["elicit", "analyze-channel"]), 2);
        assert_eq!(dispatch(["elicit", "analyze-channel", "--symmetric", "2,0.7", "--channel", "x"]), 2);
        assert_eq!(dispatch(["elicit", "frobnicate"]), 2);
    }

    #[test]
    fn failures_exit_1() {
        assert_eq!(dispatch(["elicit", "simulate", "--config", "/nonexistent/missing.json"]), 1);
        assert_eq!(dispatch(["elicit", "analyze-channel", "--symmetric", "2,1.5"]), 1);
    }
}
