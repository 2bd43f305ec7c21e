//! `caaf`: dataset generation, single sessions, experiment sweeps and the
//! labeling service.

mod interactive;

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use caaf_core::{run_session, Oracle, ReplayOracle, SessionParams, SessionTranscript, SolverMode};
use caaf_data::{
    generate_synthetic, load_dataset, write_dataset, AffinityKind, DataError, Dataset, QueryOptions, QueryProblem,
    SyntheticConfig, DEFAULT_TEMPORAL_LAMBDA,
};
use caaf_eval::{average_precision, run_experiment, ExperimentConfig, SimulatedOracle, Strategy};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interactive::StdinOracle;

#[derive(Debug, Parser)]
#[command(
    name = "caaf",
    version,
    about = "Confidence-aware active feedback for instance search"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic clustered dataset.
    Generate(GenerateArgs),
    /// Run one feedback session for one probe and write its transcript.
    Run(RunArgs),
    /// Compare strategies over every probe and seed; writes report.json and report.csv.
    Experiment(ExperimentArgs),
    /// Serve the labeling API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Existing directory to write into.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    #[arg(long, default_value_t = 30)]
    per_cluster: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Per-coordinate noise standard deviation.
    #[arg(long, default_value_t = 0.6)]
    noise: f64,
    /// Attach cluster-correlated timestamps.
    #[arg(long)]
    timestamps: bool,
}

#[derive(Debug, Clone, Args)]
struct ParamArgs {
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Top-K candidates to re-rank.
    #[arg(long, default_value_t = 300)]
    k: usize,
    /// Suggestions per round.
    #[arg(long, default_value_t = 5)]
    q: usize,
    /// Feedback rounds.
    #[arg(long, default_value_t = 4)]
    rounds: usize,
    /// Loss threshold for the QP suggestion step (default: mean pairwise loss).
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Plain manifold ranking: v = 1 before every ranking step.
    #[arg(long)]
    mr_baseline: bool,
    /// Round 0 uses the initial scores as y and v = 1.
    #[arg(long)]
    soft_init: bool,
    #[arg(long, value_enum, default_value_t = AffinityArg::Cosine)]
    affinity: AffinityArg,
    /// Temporal decay for `--affinity temporal`.
    #[arg(long, default_value_t = DEFAULT_TEMPORAL_LAMBDA)]
    lambda: f64,
    /// Build the affinity from the mean of this many top-ranked samples.
    #[arg(long)]
    averaged_probe: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AffinityArg {
    Cosine,
    Temporal,
}

impl ParamArgs {
    fn session(&self, solver: SolverMode) -> SessionParams {
        SessionParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            top_k: self.k,
            q: self.q,
            rounds: self.rounds,
            solver,
            mr_baseline: self.mr_baseline,
            soft_init: self.soft_init,
            ..SessionParams::default()
        }
    }

    fn affinity(&self) -> AffinityKind {
        match self.affinity {
            AffinityArg::Cosine => AffinityKind::Cosine,
            AffinityArg::Temporal => AffinityKind::Temporal { lambda: self.lambda },
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Dataset manifest.
    #[arg(long)]
    dataset: PathBuf,
    /// Probe id (required unless replaying).
    #[arg(long, required_unless_present = "replay")]
    probe: Option<String>,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value = "approximate", value_parser = parse_solver)]
    solver: SolverMode,
    /// Ask for labels on stdin instead of using the ground-truth oracle.
    #[arg(long)]
    interactive: bool,
    /// Probability that the simulated oracle abstains.
    #[arg(long, default_value_t = 0.0)]
    unsure_rate: f64,
    /// Seed for the simulated oracle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Re-run a transcript written by `caaf run` and check it reproduces.
    #[arg(long, conflicts_with_all = ["probe", "interactive"])]
    replay: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverChoice {
    Approximate,
    Qp,
    Both,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, value_enum, default_value_t = SolverChoice::Approximate)]
    solver: SolverChoice,
    /// Comma-separated: caaf, mr_baseline, random.
    #[arg(long, value_delimiter = ',', default_value = "caaf,mr_baseline,random")]
    strategies: Vec<Strategy>,
    /// Comma-separated seeds for the oracle and random selection.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 0.0)]
    unsure_rate: f64,
    /// Restrict to these probe ids (comma-separated).
    #[arg(long, value_delimiter = ',')]
    probes: Option<Vec<String>>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Existing directory for report.json and report.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Dataset manifests to load (repeatable).
    #[arg(long = "dataset", required = true)]
    datasets: Vec<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory for per-session JSON-lines logs, replayed on startup.
    #[arg(long)]
    log_dir: Option<PathBuf>,
}

fn parse_solver(s: &str) -> Result<SolverMode, String> {
    s.parse::<SolverMode>().map_err(|e| e.to_string())
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io_error(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(io_error(path)),
        None => {
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))
}

fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let config = SyntheticConfig {
        seed: args.seed,
        n_clusters: args.clusters,
        per_cluster: args.per_cluster,
        dim: args.dim,
        noise_sigma: args.noise,
        timestamps: args.timestamps,
    };
    let dataset = generate_synthetic(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    let manifest = write_dataset(&dataset, &args.out)?;
    log::info!(
        "wrote {} gallery samples to {}",
        dataset.gallery.len(),
        args.out.display()
    );
    println!("{}", manifest.display());
    Ok(())
}

/// Everything `caaf run` records; enough to rebuild and replay the session.
#[derive(Debug, Serialize, Deserialize)]
struct RunOutput {
    dataset: String,
    probe: String,
    affinity: AffinityKind,
    averaged_probe: Option<usize>,
    /// Gallery ids of the session samples, in session order (probe excluded).
    candidates: Vec<String>,
    transcript: SessionTranscript,
    /// AP of the merged gallery ranking after each round, when ground truth is known.
    ap: Option<Vec<f64>>,
    final_ranking: Vec<String>,
}

fn build_problem(
    dataset: &Dataset,
    probe: &str,
    affinity: AffinityKind,
    averaged_probe: Option<usize>,
    top_k: usize,
) -> Result<QueryProblem, CliError> {
    if dataset.probes.index_of(probe).is_none() {
        return Err(CliError::Data(format!("unknown probe `{probe}`")));
    }
    let options = QueryOptions {
        top_k,
        affinity,
        averaged_probe,
    };
    Ok(QueryProblem::build(dataset, probe, &options)?)
}

fn session_output(
    dataset: &Dataset,
    problem: &QueryProblem,
    affinity: AffinityKind,
    averaged_probe: Option<usize>,
    oracle: &mut dyn Oracle,
    params: &SessionParams,
) -> Result<RunOutput, CliError> {
    let outcome = run_session(
        &problem.affinity,
        oracle,
        params,
        &problem.initial_rank,
        Some(&problem.initial_scores),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let relevant: Option<BTreeSet<usize>> = dataset
        .relevance(&problem.probe_id)
        .map(|flags| flags.iter().enumerate().filter_map(|(i, &r)| r.then_some(i)).collect())
        .filter(|s: &BTreeSet<usize>| !s.is_empty());
    let ap = relevant.map(|rel| {
        outcome
            .rounds
            .iter()
            .map(|r| average_precision(&problem.final_ranking(&r.refined_f), &rel).unwrap_or(0.0))
            .collect()
    });
    let last = outcome.rounds.last().expect("a session has at least one round");
    let ids =
        |indices: &[usize]| -> Vec<String> { indices.iter().map(|&g| dataset.gallery.id(g).to_string()).collect() };
    Ok(RunOutput {
        dataset: dataset.name.clone(),
        probe: problem.probe_id.clone(),
        affinity,
        averaged_probe,
        candidates: ids(&problem.candidates),
        transcript: outcome.transcript,
        ap,
        final_ranking: ids(&problem.final_ranking(&last.refined_f)),
    })
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.dataset)?;
    if let Some(path) = &args.replay {
        return replay(&dataset, path);
    }
    let probe = args.probe.as_deref().expect("clap requires --probe without --replay");
    let params = args.params.session(args.solver);
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let affinity = args.params.affinity();
    let problem = build_problem(&dataset, probe, affinity, args.params.averaged_probe, params.top_k)?;
    let params = SessionParams {
        top_k: problem.top_k(),
        ..params
    };

    let output = if args.interactive {
        let ids: Vec<String> = problem
            .candidates
            .iter()
            .map(|&g| dataset.gallery.id(g).to_string())
            .collect();
        let stdin = io::stdin();
        let mut oracle = StdinOracle::new(ids, stdin.lock(), io::stderr());
        session_output(
            &dataset,
            &problem,
            affinity,
            args.params.averaged_probe,
            &mut oracle,
            &params,
        )?
    } else {
        let mut oracle = SimulatedOracle::for_probe(&dataset, probe, &problem.candidates, args.unsure_rate, args.seed)
            .map_err(|e| CliError::Data(e.to_string()))?;
        session_output(
            &dataset,
            &problem,
            affinity,
            args.params.averaged_probe,
            &mut oracle,
            &params,
        )?
    };
    if let Some(ap) = &output.ap {
        log::info!("AP per round: {ap:?}");
    }
    write_output(args.out.as_deref(), &to_json(&output)?)
}

fn replay(dataset: &Dataset, path: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let recorded: RunOutput =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let params = recorded.transcript.params;
    let problem = build_problem(
        dataset,
        &recorded.probe,
        recorded.affinity,
        recorded.averaged_probe,
        params.top_k,
    )?;
    let candidates: Vec<&str> = problem.candidates.iter().map(|&g| dataset.gallery.id(g)).collect();
    if candidates != recorded.candidates.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(CliError::Data(
            "dataset does not reproduce the recorded candidate list".into(),
        ));
    }
    let mut oracle = ReplayOracle::new(&recorded.transcript);
    let again = session_output(
        dataset,
        &problem,
        recorded.affinity,
        recorded.averaged_probe,
        &mut oracle,
        &params,
    )?;
    let rounds = recorded.transcript.rounds.len();
    for (a, b) in recorded.transcript.rounds.iter().zip(&again.transcript.rounds) {
        let same = a.f.len() == b.f.len() && a.f.iter().zip(&b.f).all(|(x, y)| x.to_bits() == y.to_bits());
        if !same || a.suggestions != b.suggestions || a.labels != b.labels {
            return Err(CliError::Runtime(format!("round {} does not reproduce", a.round_index)));
        }
    }
    if again.transcript.rounds.len() != rounds {
        return Err(CliError::Runtime("replay produced a different number of rounds".into()));
    }
    println!("replayed {rounds} rounds: identical");
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<(), CliError> {
    if args.strategies.is_empty() {
        return Err(CliError::Usage("strategy list is empty".into()));
    }
    if !args.out.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", args.out.display())));
    }
    let dataset = load_dataset(&args.dataset)?;
    let solvers = match args.solver {
        SolverChoice::Approximate => vec![SolverMode::Approximate],
        SolverChoice::Qp => vec![SolverMode::Qp],
        SolverChoice::Both => vec![SolverMode::Approximate, SolverMode::Qp],
    };
    let config = ExperimentConfig {
        params: args.params.session(SolverMode::Approximate),
        strategies: args.strategies,
        solvers,
        seeds: args.seeds,
        unsure_rate: args.unsure_rate,
        affinity: args.params.affinity(),
        averaged_probe: args.params.averaged_probe,
        probes: args.probes,
        workers: args.workers,
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let (report, failure) = match run_experiment(&dataset, &config) {
        Ok(report) => (report, None),
        Err(failure) => (*failure.partial, Some(failure.error)),
    };
    let json_path = args.out.join("report.json");
    fs::write(&json_path, to_json(&report)?).map_err(io_error(&json_path))?;
    let csv_path = args.out.join("report.csv");
    let file = fs::File::create(&csv_path).map_err(io_error(&csv_path))?;
    report
        .write_csv(io::BufWriter::new(file))
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    for s in &report.summary {
        let curve: Vec<String> = s.map_mean.iter().map(|m| format!("{m:.4}")).collect();
        println!("{:<16} mAP by round: {}", s.strategy, curve.join(" "));
    }
    match failure {
        Some(e) => Err(CliError::Runtime(format!("{e} (partial report written)"))),
        None => Ok(()),
    }
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let datasets = args
        .datasets
        .iter()
        .map(|p| load_dataset(p))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = &args.log_dir {
        fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    let store = Arc::new(caaf_service::Store::new(datasets, args.log_dir.clone()));
    let restored = store.recover().map_err(|e| CliError::Data(e.to_string()))?;
    if restored > 0 {
        log::info!("restored {restored} sessions");
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad address: {e}")))?;

    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
        let bound = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("listening on http://{bound}");
        io::stdout().flush().ok();
        caaf_service::serve(listener, store)
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Experiment(a) => experiment(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
