//! `hawkes-graph`: simulate, estimate and validate from the command line.
//!
//! Exit codes: 0 success, 1 domain or usage error, 2 I/O error, 3 a
//! validation criterion failed. Errors go to stderr as `E<code>: message`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hawkes_graph::graph::GraphLimits;
use hawkes_graph::harness::{run_experiment, ExperimentConfig};
use hawkes_graph::seeds::{self, Stream};
use hawkes_graph::{subcritical, supercritical, CiMode, Error, EventLog, InteractionGraph, KernelSpec, SimOptions};
use serde::Serialize;
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "hawkes-graph", version, about = "Interacting Hawkes processes on Bernoulli random graphs")]
struct Cli {
    /// Worker threads for replicated experiments (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more progress output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a graph and simulate the event log.
    Simulate(SimulateArgs),
    /// Deterministic graph functionals of one graph sample.
    GraphLimits(GraphLimitsArgs),
    /// Subcritical estimates of (μ, Λ, p) from an event CSV.
    EstimateSub(EstimateSubArgs),
    /// Supercritical estimate of p from an event CSV.
    EstimateSuper(EstimateSuperArgs),
    /// Run a Monte Carlo experiment from a JSON config.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct GraphSource {
    /// Population size N (ignored with --graph).
    #[arg(long)]
    n: Option<usize>,
    /// Edge probability.
    #[arg(long)]
    p: Option<f64>,
    /// Read the graph from a file instead of sampling it.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Seed of the graph draw; derived from --seed when absent.
    #[arg(long)]
    graph_seed: Option<u64>,
    /// Base seed; drawn from entropy when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the graph to this file.
    #[arg(long)]
    save_graph: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    source: GraphSource,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    /// `exp:<b>` or `unif:<a>`.
    #[arg(long)]
    kernel: KernelSpec,
    #[arg(long)]
    horizon: f64,
    /// Simulate only what individuals 0..K depend on.
    #[arg(long)]
    observed: Option<usize>,
    #[arg(long, default_value_t = SimOptions::default().event_budget)]
    budget: u64,
    /// Event CSV; the sidecar `<stem>.meta.json` is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GraphLimitsArgs {
    #[command(flatten)]
    source: GraphSource,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long)]
    kernel: KernelSpec,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct EventInput {
    /// Event CSV with header `individual,time`.
    #[arg(long)]
    events: PathBuf,
    /// Population size; read from the sidecar when absent.
    #[arg(long)]
    n: Option<usize>,
    /// Horizon of the log; read from the sidecar when absent.
    #[arg(long)]
    horizon: Option<f64>,
    /// Number of observed individuals.
    #[arg(long)]
    k: usize,
    #[arg(long)]
    t: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CiArg {
    PaperLiteral,
    DeltaMethod,
}

#[derive(Args, Debug)]
struct EstimateSubArgs {
    #[command(flatten)]
    input: EventInput,
    #[arg(long, default_value_t = 7.0)]
    q: f64,
    /// Level of the confidence interval.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Which interval `ci.halfwidth` reports; both are always included.
    #[arg(long, value_enum, default_value_t = CiArg::DeltaMethod)]
    ci_mode: CiArg,
}

#[derive(Args, Debug)]
struct EstimateSuperArgs {
    #[command(flatten)]
    input: EventInput,
    /// Known growth rate α₀ = p - b; fitted from the log when absent.
    #[arg(long)]
    alpha0: Option<f64>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON; QQ data goes to `<stem>.<name>.qq.csv` next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_io() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

/// Everything needed to rerun an invocation.
#[derive(Serialize)]
struct RunMeta {
    program: &'static str,
    version: &'static str,
    command: &'static str,
    argv: Vec<String>,
    /// `flag`, `entropy`, `config` or `none`.
    seed_source: &'static str,
    seed: Option<u64>,
    graph_seed: Option<u64>,
    sim_seed: Option<u64>,
    threads: usize,
    outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_meta: Option<Value>,
}

impl RunMeta {
    fn new(command: &'static str) -> Self {
        RunMeta {
            program: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv: std::env::args().collect(),
            seed_source: "none",
            seed: None,
            graph_seed: None,
            sim_seed: None,
            threads: rayon::current_num_threads(),
            outputs: Vec::new(),
            input_meta: None,
        }
    }

    fn path_for(out: &Path) -> PathBuf {
        out.with_extension("run.json")
    }

    fn write(mut self, out: &Path) -> CliResult<()> {
        let path = Self::path_for(out);
        self.outputs.insert(0, out.to_path_buf());
        write_text(&path, &(serde_json::to_string_pretty(&self)? + "\n"))
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn resolve_seed(flag: Option<u64>, meta: &mut RunMeta) -> u64 {
    let (seed, source) = match flag {
        Some(s) => (s, "flag"),
        None => (rand::random::<u64>(), "entropy"),
    };
    meta.seed = Some(seed);
    meta.seed_source = source;
    seed
}

fn obtain_graph(src: &GraphSource, meta: &mut RunMeta) -> CliResult<InteractionGraph> {
    let g = match &src.graph {
        Some(path) => InteractionGraph::load(path)?,
        None => {
            let n = src.n.ok_or_else(|| usage("--n is required unless --graph is given"))?;
            let p = src.p.ok_or_else(|| usage("--p is required unless --graph is given"))?;
            let gs = match src.graph_seed {
                Some(s) => s,
                None => {
                    let base = meta.seed.expect("seed resolved before the graph");
                    seeds::derive(base, 0, Stream::Graph)
                }
            };
            InteractionGraph::sample(n, p, gs)?
        }
    };
    meta.graph_seed = Some(g.seed());
    if let Some(path) = &src.save_graph {
        g.save(path)?;
        meta.outputs.push(path.clone());
    }
    Ok(g)
}

fn simulate(args: SimulateArgs, verbose: u8) -> CliResult<()> {
    let mut meta = RunMeta::new("simulate");
    let base = resolve_seed(args.source.seed, &mut meta);
    let g = obtain_graph(&args.source, &mut meta)?;
    let sim_seed = seeds::derive(base, 0, Stream::Simulation);
    meta.sim_seed = Some(sim_seed);
    let opts = SimOptions {
        event_budget: args.budget,
        observed: args.observed,
    };
    let log = hawkes_graph::simulate_with(&g, &args.kernel, args.mu, args.horizon, sim_seed, &opts)?;
    if verbose > 0 {
        eprintln!("simulated {} events on [0, {}]", log.total_events(), args.horizon);
    }
    log.save(&args.out)?;
    meta.outputs.push(EventLog::meta_path(&args.out));
    meta.write(&args.out)
}

#[derive(Serialize)]
struct GraphReport {
    n: usize,
    p: f64,
    graph_seed: u64,
    k: usize,
    mu: f64,
    kernel: KernelSpec,
    /// `Λ · max_i Σ_j A_N(i,j)`; the subcritical functionals need it below 1.
    gate: f64,
    limits: Option<GraphLimits>,
    /// Why `limits` is missing.
    #[serde(skip_serializing_if = "Option::is_none")]
    limits_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    perron: Option<hawkes_graph::graph::PerronData>,
    #[serde(skip_serializing_if = "Option::is_none")]
    u_inf: Option<f64>,
}

fn graph_limits(args: GraphLimitsArgs) -> CliResult<()> {
    let mut meta = RunMeta::new("graph-limits");
    if args.source.graph.is_none() && args.source.graph_seed.is_none() {
        resolve_seed(args.source.seed, &mut meta);
    }
    let g = obtain_graph(&args.source, &mut meta)?;
    if args.k == 0 || args.k > g.n() {
        return Err(usage(format!("--k must lie in 1..={}", g.n())));
    }
    let lambda = args.kernel.lambda();
    let (limits, limits_error) = match GraphLimits::subcritical(&g, lambda, args.mu, args.k) {
        Ok(l) => (Some(l), None),
        Err(e @ Error::NotSubcritical { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let (perron, u_inf) = match args.kernel.decay_rate() {
        Some(b) if g.p() > 0.0 => {
            let pd = hawkes_graph::graph::perron_data(&g, b)?;
            let u = hawkes_graph::graph::u_infinity_from_perron(&pd.v, args.k);
            (Some(pd), Some(u))
        }
        _ => (None, None),
    };
    let report = GraphReport {
        n: g.n(),
        p: g.p(),
        graph_seed: g.seed(),
        k: args.k,
        mu: args.mu,
        kernel: args.kernel,
        gate: g.gate(lambda),
        limits,
        limits_error,
        perron,
        u_inf,
    };
    write_text(&args.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    meta.write(&args.out)
}

fn load_events(input: &EventInput, meta: &mut RunMeta) -> CliResult<EventLog> {
    let log = EventLog::load(&input.events, input.n, input.horizon)?;
    if let Some(m) = log.meta() {
        meta.graph_seed = Some(m.graph_seed);
        meta.sim_seed = Some(m.sim_seed);
        meta.input_meta = Some(serde_json::to_value(m)?);
    }
    Ok(log)
}

/// Flattens nested objects into dotted keys.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(&key(k), x, out);
            }
        }
        Value::Null => out.push((prefix.into(), String::new())),
        Value::String(s) => out.push((prefix.into(), s.clone())),
        other => out.push((prefix.into(), other.to_string())),
    }
}

/// One header row and one value row.
fn to_csv(v: &Value) -> String {
    let mut cells = Vec::new();
    flatten("", v, &mut cells);
    let (keys, vals): (Vec<_>, Vec<_>) = cells.into_iter().unzip();
    format!("{}\n{}\n", keys.join(","), vals.join(","))
}

fn write_estimate<T: Serialize>(est: &T, input: &EventInput) -> CliResult<()> {
    let text = match input.format {
        Format::Json => serde_json::to_string_pretty(est)? + "\n",
        Format::Csv => to_csv(&serde_json::to_value(est)?),
    };
    write_text(&input.out, &text)
}

fn estimate_sub(args: EstimateSubArgs) -> CliResult<()> {
    let mut meta = RunMeta::new("estimate-sub");
    let log = load_events(&args.input, &mut meta)?;
    let mode = match args.ci_mode {
        CiArg::PaperLiteral => CiMode::PaperLiteral,
        CiArg::DeltaMethod => CiMode::DeltaMethod,
    };
    let est = subcritical::estimate_with(&log, args.input.k, args.input.t, args.q, args.alpha, mode)?;
    write_estimate(&est, &args.input)?;
    meta.write(&args.input.out)
}

fn estimate_super(args: EstimateSuperArgs) -> CliResult<()> {
    let mut meta = RunMeta::new("estimate-super");
    let log = load_events(&args.input, &mut meta)?;
    let est = supercritical::estimate(&log, args.input.k, args.input.t, args.alpha0)?;
    write_estimate(&est, &args.input)?;
    meta.write(&args.input.out)
}

fn validate(args: ValidateArgs) -> CliResult<bool> {
    let mut meta = RunMeta::new("validate");
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let mut raw: Value = serde_json::from_str(&text)?;
    let obj = raw
        .as_object_mut()
        .ok_or_else(|| usage("the config must be a JSON object"))?;
    match args.seed {
        Some(s) => {
            obj.insert("seed".into(), s.into());
            meta.seed_source = "flag";
        }
        None if obj.contains_key("seed") => meta.seed_source = "config",
        None => return Err(usage("validate needs a seed: set \"seed\" in the config or pass --seed")),
    }
    let cfg = ExperimentConfig::from_json(&raw.to_string())?;
    meta.seed = Some(cfg.seed);
    let start = std::time::Instant::now();
    let mut report = run_experiment(&cfg)?;
    report.wall_clock_secs = Some(start.elapsed().as_secs_f64());
    write_text(&args.out, &(report.to_json()? + "\n"))?;
    let stem = args.out.with_extension("");
    for clt in &report.clt {
        let path = PathBuf::from(format!("{}.{}.qq.csv", stem.display(), clt.name));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        clt.write_qq_csv(file).map_err(|e| Error::io(&path, e))?;
        meta.outputs.push(path);
    }
    let mut stdout = std::io::stdout().lock();
    for line in report.summary_lines() {
        let _ = writeln!(stdout, "{line}");
    }
    let _ = writeln!(stdout, "{}", if report.passed { "PASSED" } else { "FAILED" });
    meta.write(&args.out)?;
    Ok(report.passed)
}

fn run(cli: Cli) -> CliResult<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(a, cli.verbose).map(|_| true),
        Command::GraphLimits(a) => graph_limits(a).map(|_| true),
        Command::EstimateSub(a) => estimate_sub(a).map(|_| true),
        Command::EstimateSuper(a) => estimate_super(a).map(|_| true),
        Command::Validate(a) => validate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("E1: {}", e.to_string().trim_end());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("E3: validation criteria failed");
            ExitCode::from(3)
        }
        Err(f) => {
            eprintln!("E{}: {}", f.code, f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_flattening() {
        let v: Value = serde_json::json!({"a": 1.5, "b": {"c": null, "d": "II"}, "e": true});
        assert_eq!(to_csv(&v), "a,b.c,b.d,e\n1.5,,II,true\n");
    }

    #[test]
    fn run_meta_path() {
        assert_eq!(RunMeta::path_for(Path::new("x/ev.csv")), PathBuf::from("x/ev.run.json"));
    }

    #[test]
    fn flags_parse() {
        <Cli as clap::CommandFactory>::command().debug_assert();
    }
}
