//! Seeded comparison runs over every probe of a dataset.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use caaf_core::{run_session, Label, OracleError, SelectionPolicy, SessionError, SessionParams, SolverMode};
use caaf_data::{AffinityKind, DataError, Dataset, QueryOptions, QueryProblem};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{average_precision, interpolated_pr_11pt, manifold_smoothing_loss, MetricError, PrCurve};
use crate::oracle::SimulatedOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Confidence-aware suggestions with confidence-weighted ranking.
    Caaf,
    /// Same suggestions, but ranking with `v = 1` every round.
    MrBaseline,
    /// Uniformly random suggestions from the eligible pool.
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Caaf, Strategy::MrBaseline, Strategy::Random];

    /// Session parameters for this strategy; `seed` drives random selection.
    pub fn apply(self, base: &SessionParams, solver: SolverMode, seed: u64) -> SessionParams {
        let mut params = SessionParams { solver, ..*base };
        match self {
            Strategy::Caaf => {}
            Strategy::MrBaseline => params.mr_baseline = true,
            Strategy::Random => params.selection = SelectionPolicy::Random { seed },
        }
        params
    }

    /// Report label, e.g. `caaf` or `caaf-qp`.
    pub fn label(self, solver: SolverMode) -> String {
        match solver {
            SolverMode::Approximate => self.to_string(),
            SolverMode::Qp => format!("{self}-qp"),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Caaf => "caaf",
            Strategy::MrBaseline => "mr_baseline",
            Strategy::Random => "random",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "caaf" => Ok(Strategy::Caaf),
            "mr_baseline" | "mr-baseline" | "mr" => Ok(Strategy::MrBaseline),
            "random" | "rand" => Ok(Strategy::Random),
            other => Err(format!(
                "unknown strategy `{other}` (expected caaf, mr_baseline or random)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub params: SessionParams,
    pub strategies: Vec<Strategy>,
    pub solvers: Vec<SolverMode>,
    pub seeds: Vec<u64>,
    pub unsure_rate: f64,
    pub affinity: AffinityKind,
    pub averaged_probe: Option<usize>,
    /// Restrict to these probe ids; all probes when `None`.
    pub probes: Option<Vec<String>>,
    /// Worker threads; results are assembled in job order regardless.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: SessionParams::default(),
            strategies: Strategy::ALL.to_vec(),
            solvers: vec![SolverMode::Approximate],
            seeds: vec![0],
            unsure_rate: 0.0,
            affinity: AffinityKind::Cosine,
            averaged_probe: None,
            probes: None,
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |msg: &str| Err(ExperimentError::Config(msg.to_string()));
        if self.strategies.is_empty() {
            return fail("strategy list is empty");
        }
        if self.solvers.is_empty() {
            return fail("solver list is empty");
        }
        if self.seeds.is_empty() {
            return fail("seed list is empty");
        }
        if !(0.0..1.0).contains(&self.unsure_rate) {
            return fail("unsure_rate must be in [0, 1)");
        }
        self.params
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))
    }

    fn query_options(&self) -> QueryOptions {
        QueryOptions {
            top_k: self.params.top_k,
            affinity: self.affinity,
            averaged_probe: self.averaged_probe,
        }
    }
}

/// One session: a strategy/solver pair on one probe with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: String,
    pub probe: String,
    pub seed: u64,
    /// AP of the merged gallery ranking after each round, round 0 first.
    pub ap: Vec<f64>,
    pub elapsed_ms: Vec<f64>,
    /// Relevant/irrelevant answers given on each labeled round.
    pub labels: Vec<usize>,
    /// Abstentions on each labeled round.
    pub unsure: Vec<usize>,
    pub smoothing_loss: f64,
    pub final_pr: PrCurve,
}

/// Mean and standard deviation across seeds of the per-seed mAP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub runs: usize,
    pub map_mean: Vec<f64>,
    pub map_std: Vec<f64>,
    pub elapsed_ms_mean: Vec<f64>,
    pub final_pr_mean: PrCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dataset: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<StrategySummary>,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    strategy: &'a str,
    probe: &'a str,
    seed: u64,
    round: usize,
    map: f64,
    elapsed_ms: f64,
}

impl Report {
    pub fn summary_for(&self, strategy: &str) -> Option<&StrategySummary> {
        self.summary.iter().find(|s| s.strategy == strategy)
    }

    /// One row per run and round, columns
    /// `strategy, probe, seed, round, map, elapsed_ms`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ExperimentError> {
        let mut out = csv::Writer::from_writer(writer);
        for run in &self.runs {
            for (round, (&map, &elapsed_ms)) in run.ap.iter().zip(&run.elapsed_ms).enumerate() {
                out.serialize(CsvRow {
                    strategy: &run.strategy,
                    probe: &run.probe,
                    seed: run.seed,
                    round,
                    map,
                    elapsed_ms,
                })?;
            }
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("probe `{probe}`: {source}")]
    Session {
        probe: String,
        #[source]
        source: SessionError,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("probe `{probe}`: {source}")]
    Metric {
        probe: String,
        #[source]
        source: MetricError,
    },
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
}

/// A failed experiment together with every run that did complete.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct ExperimentFailure {
    pub partial: Box<Report>,
    #[source]
    pub error: ExperimentError,
}

/// Runs one session for `problem` and scores every round.
pub fn run_query(
    dataset: &Dataset,
    problem: &QueryProblem,
    params: &SessionParams,
    label: &str,
    seed: u64,
    unsure_rate: f64,
) -> Result<RunRecord, ExperimentError> {
    let probe = problem.probe_id.as_str();
    let relevant: BTreeSet<usize> = dataset
        .relevance(probe)
        .ok_or_else(|| ExperimentError::Config(format!("no ground truth for probe `{probe}`")))?
        .iter()
        .enumerate()
        .filter_map(|(i, &r)| r.then_some(i))
        .collect();
    let metric_err = |source| ExperimentError::Metric {
        probe: probe.to_string(),
        source,
    };

    let mut oracle = SimulatedOracle::for_probe(dataset, probe, &problem.candidates, unsure_rate, seed)?;
    let outcome = run_session(
        &problem.affinity,
        &mut oracle,
        params,
        &problem.initial_rank,
        Some(&problem.initial_scores),
    )
    .map_err(|source| ExperimentError::Session {
        probe: probe.to_string(),
        source,
    })?;

    let mut ap = Vec::with_capacity(outcome.rounds.len());
    for round in &outcome.rounds {
        let ranking = problem.final_ranking(&round.refined_f);
        ap.push(average_precision(&ranking, &relevant).map_err(metric_err)?);
    }
    let last = outcome.rounds.last().expect("a session has at least one round");
    let final_pr = interpolated_pr_11pt(&problem.final_ranking(&last.refined_f), &relevant).map_err(metric_err)?;

    let labeled = &outcome.transcript.rounds[..outcome.transcript.rounds.len().saturating_sub(1)];
    let count = |pred: fn(&Label) -> bool| -> Vec<usize> {
        labeled
            .iter()
            .map(|r| {
                r.suggestions
                    .iter()
                    .filter(|i| r.labels.get(i).is_none_or(pred))
                    .count()
            })
            .collect()
    };

    Ok(RunRecord {
        strategy: label.to_string(),
        probe: probe.to_string(),
        seed,
        ap,
        elapsed_ms: outcome.rounds.iter().map(|r| r.elapsed.as_secs_f64() * 1e3).collect(),
        labels: count(|l| *l != Label::Unsure),
        unsure: count(|l| *l == Label::Unsure),
        smoothing_loss: problem
            .relevance
            .as_ref()
            .map_or(0.0, |ind| manifold_smoothing_loss(&problem.affinity, ind)),
        final_pr,
    })
}

struct Job {
    problem: usize,
    strategy: Strategy,
    solver: SolverMode,
    seed: u64,
}

/// Runs every (probe, strategy, solver, seed) combination. On failure the
/// runs that completed are returned inside the error.
pub fn run_experiment(dataset: &Dataset, config: &ExperimentConfig) -> Result<Report, ExperimentFailure> {
    let mut report = Report {
        dataset: dataset.name.clone(),
        config: config.clone(),
        runs: Vec::new(),
        summary: Vec::new(),
    };
    let fail = |report: Report, error| ExperimentFailure {
        partial: Box::new(report),
        error,
    };
    if let Err(e) = config.validate() {
        return Err(fail(report, e));
    }

    let probe_ids: Vec<String> = match &config.probes {
        Some(ids) => ids.clone(),
        None => dataset.probes.ids().to_vec(),
    };
    let options = config.query_options();
    let mut problems = Vec::with_capacity(probe_ids.len());
    for id in &probe_ids {
        match QueryProblem::build(dataset, id, &options) {
            Ok(p) => problems.push(p),
            Err(e) => return Err(fail(report, e.into())),
        }
    }

    let mut jobs = Vec::new();
    for &solver in &config.solvers {
        for &strategy in &config.strategies {
            for &seed in &config.seeds {
                for problem in 0..problems.len() {
                    jobs.push(Job {
                        problem,
                        strategy,
                        solver,
                        seed,
                    });
                }
            }
        }
    }

    let run_job = |job: &Job| {
        let params = job.strategy.apply(&config.params, job.solver, job.seed);
        let problem = &problems[job.problem];
        log::debug!(
            "{} {} seed {}",
            job.strategy.label(job.solver),
            problem.probe_id,
            job.seed
        );
        run_query(
            dataset,
            problem,
            &params,
            &job.strategy.label(job.solver),
            job.seed,
            config.unsure_rate,
        )
    };
    let results = run_parallel(&jobs, config.workers.max(1), run_job);

    let mut first_error = None;
    for result in results {
        match result {
            Ok(run) => report.runs.push(run),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    report.summary = summarize(&report.runs);
    match first_error {
        Some(error) => Err(fail(report, error)),
        None => Ok(report),
    }
}

fn run_parallel<T, R, F>(jobs: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if workers == 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let result = f(job);
                slots.lock().expect("worker panicked")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Per strategy: mAP over probes for each seed, then mean ± population
/// std over seeds. Strategies keep their first-appearance order.
pub fn summarize(runs: &[RunRecord]) -> Vec<StrategySummary> {
    let mut order: Vec<&str> = Vec::new();
    for run in runs {
        if !order.contains(&run.strategy.as_str()) {
            order.push(&run.strategy);
        }
    }
    order
        .into_iter()
        .map(|name| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.strategy == name).collect();
            let rounds = mine.iter().map(|r| r.ap.len()).min().unwrap_or(0);
            let mut seeds: Vec<u64> = mine.iter().map(|r| r.seed).collect();
            seeds.sort_unstable();
            seeds.dedup();

            let mut map_mean = Vec::with_capacity(rounds);
            let mut map_std = Vec::with_capacity(rounds);
            for round in 0..rounds {
                let per_seed: Vec<f64> = seeds
                    .iter()
                    .map(|&s| mean(mine.iter().filter(|r| r.seed == s).map(|r| r.ap[round])))
                    .collect();
                let mu = mean(per_seed.iter().copied());
                map_mean.push(mu);
                map_std.push(mean(per_seed.iter().map(|x| (x - mu).powi(2))).sqrt());
            }
            let elapsed_ms_mean = (0..rounds)
                .map(|round| mean(mine.iter().map(|r| r.elapsed_ms[round])))
                .collect();
            let final_pr_mean = PrCurve(std::array::from_fn(|l| mean(mine.iter().map(|r| r.final_pr.0[l]))));
            StrategySummary {
                strategy: name.to_string(),
                runs: mine.len(),
                map_mean,
                map_std,
                elapsed_ms_mean,
                final_pr_mean,
            }
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
