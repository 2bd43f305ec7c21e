//! Live sessions, their round tokens and the optional JSON-lines log.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use caaf_core::{Session, SessionError, SessionTranscript};
use caaf_data::{AffinityKind, DataError, Dataset, QueryOptions, QueryProblem};
use caaf_eval::average_precision;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::api::{
    CreateSession, DatasetInfo, HistoryEntry, Metrics, RankedItem, SessionView, Status, SubmitLabels, Suggestion,
};
use crate::error::ApiError;

const PREVIEW_LEN: usize = 20;

pub fn thumbnail_url(dataset: &str, id: &str) -> String {
    format!("/thumbnails/{dataset}/{id}")
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// `r<round>-<hex>`: the round index plus a digest of the session id and
/// the round's suggestions and scores.
fn round_token(id: &str, session: &Session) -> String {
    let current = session.current();
    let mut hash = Sha256::new();
    hash.update(id.as_bytes());
    hash.update((current.round_index as u64).to_le_bytes());
    for &s in &current.suggestions {
        hash.update((s as u64).to_le_bytes());
    }
    for f in &current.refined_f {
        hash.update(f.to_bits().to_le_bytes());
    }
    let digest = hash.finalize();
    let hex: String = digest[..12].iter().map(|b| format!("{b:02x}")).collect();
    format!("r{}-{hex}", current.round_index)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogEvent {
    Create {
        id: String,
        created_at_ms: u64,
        request: CreateSession,
    },
    Labels {
        at_ms: u64,
        submit: SubmitLabels,
    },
}

struct CachedSubmit {
    request: SubmitLabels,
    response: SessionView,
}

struct Slot {
    id: String,
    dataset: Arc<Dataset>,
    problem: Arc<QueryProblem>,
    /// Gallery indices relevant to the probe, when ground truth is known.
    relevant: Option<BTreeSet<usize>>,
    /// `None` while a submission is being computed.
    session: Option<Session>,
    status: Status,
    token: Option<String>,
    view: SessionView,
    last_submit: Option<CachedSubmit>,
    log: Option<PathBuf>,
}

impl Slot {
    fn refresh(&mut self, session: &Session) {
        self.status = if session.is_finished() {
            Status::Finished
        } else {
            Status::AwaitingLabels
        };
        self.token = (!session.is_finished()).then(|| round_token(&self.id, session));
        let created = self.view.created_at_ms;
        self.view = build_view(self, session, created);
    }

    fn session_index(&self, id: &str) -> Option<usize> {
        let g = self.dataset.gallery.index_of(id)?;
        self.problem.candidates.iter().position(|&c| c == g)
    }
}

fn build_view(slot: &Slot, session: &Session, created_at_ms: u64) -> SessionView {
    let ds = &slot.dataset;
    let gallery = &ds.gallery;
    let problem = &slot.problem;
    let name = ds.name.as_str();
    let current = session.current();
    let sample_id = |i: usize| gallery.id(problem.candidates[i]).to_string();

    let suggestions = if session.is_finished() {
        Vec::new()
    } else {
        current
            .suggestions
            .iter()
            .map(|&i| Suggestion {
                id: sample_id(i),
                initial_rank: problem.initial_rank[i],
                score: current.refined_f[i],
                confidence: current.confidence[i],
                thumbnail: thumbnail_url(name, &sample_id(i)),
            })
            .collect()
    };

    let ranking = problem.final_ranking(&current.refined_f);
    let preview = ranking
        .iter()
        .take(PREVIEW_LEN)
        .map(|&g| {
            let local = problem.candidates.iter().position(|&c| c == g);
            RankedItem {
                id: gallery.id(g).to_string(),
                score: local.map_or(0.0, |i| current.refined_f[i]),
                thumbnail: thumbnail_url(name, gallery.id(g)),
                relevant: slot.relevant.as_ref().map(|r| r.contains(&g)),
            }
        })
        .collect();

    let history: Vec<HistoryEntry> = session
        .history()
        .iter()
        .map(|r| HistoryEntry {
            round_index: r.round_index,
            suggestions: r.suggestions.iter().map(|&i| sample_id(i)).collect(),
            labels: r.labels.iter().map(|(&i, &l)| (sample_id(i), l)).collect(),
            elapsed_ms: r.elapsed_ms,
        })
        .collect();

    let metrics = slot.relevant.as_ref().and_then(|relevant| {
        let mut snapshots: Vec<&[f64]> = session.history().iter().map(|r| r.f.as_slice()).collect();
        if !session.is_finished() {
            snapshots.push(&current.refined_f);
        }
        let ap = snapshots
            .into_iter()
            .map(|f| average_precision(&problem.final_ranking(f), relevant).ok())
            .collect::<Option<Vec<f64>>>()?;
        Some(Metrics {
            ap,
            relevant_in_gallery: relevant.len(),
        })
    });

    let mut elapsed_ms: f64 = session.history().iter().map(|r| r.elapsed_ms).sum();
    if !session.is_finished() {
        elapsed_ms += current.elapsed.as_secs_f64() * 1e3;
    }

    SessionView {
        id: slot.id.clone(),
        dataset: name.to_string(),
        probe: problem.probe_id.clone(),
        status: slot.status,
        round_index: current.round_index,
        rounds: session.params().rounds,
        round_token: slot.token.clone(),
        params: *session.params(),
        suggestions,
        preview,
        final_ranking: session
            .is_finished()
            .then(|| ranking.iter().map(|&g| gallery.id(g).to_string()).collect()),
        history,
        metrics,
        elapsed_ms,
        created_at_ms,
        updated_at_ms: now_ms(),
    }
}

fn session_error(err: SessionError) -> ApiError {
    match err {
        SessionError::Finished => ApiError::Finished,
        other => ApiError::Internal(other.to_string()),
    }
}

/// Every loaded dataset and live session.
pub struct Store {
    datasets: BTreeMap<String, Arc<Dataset>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
    log_dir: Option<PathBuf>,
}

impl Store {
    /// Datasets are keyed by name. With `log_dir`, every session appends its
    /// events to `<log_dir>/<id>.jsonl`.
    pub fn new(datasets: Vec<Dataset>, log_dir: Option<PathBuf>) -> Self {
        Self {
            datasets: datasets.into_iter().map(|d| (d.name.clone(), Arc::new(d))).collect(),
            sessions: RwLock::new(HashMap::new()),
            log_dir,
        }
    }

    pub fn datasets(&self) -> Vec<DatasetInfo> {
        self.datasets
            .values()
            .map(|d| DatasetInfo {
                id: d.name.clone(),
                gallery_size: d.gallery.len(),
                dim: d.gallery.dim(),
                probes: d.probes.ids().to_vec(),
                has_ground_truth: !d.ground_truth.relevant.is_empty(),
                has_thumbnails: d.gallery.thumbnails().is_some(),
            })
            .collect()
    }

    pub fn dataset(&self, name: &str) -> Option<&Arc<Dataset>> {
        self.datasets.get(name)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session table poisoned").len()
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, ApiError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    /// Builds the query problem and runs round 0. CPU-bound.
    pub fn create(&self, request: CreateSession) -> Result<SessionView, ApiError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let created = now_ms();
        let view = self.create_with_id(id.clone(), created, &request)?;
        let event = LogEvent::Create {
            id: id.clone(),
            created_at_ms: created,
            request,
        };
        if let Err(e) = self.append(&id, &event) {
            self.sessions.write().expect("session table poisoned").remove(&id);
            return Err(e);
        }
        Ok(view)
    }

    fn create_with_id(&self, id: String, created_at_ms: u64, request: &CreateSession) -> Result<SessionView, ApiError> {
        let dataset = self
            .datasets
            .get(&request.dataset)
            .cloned()
            .ok_or_else(|| ApiError::UnknownDataset(request.dataset.clone()))?;
        if dataset.probes.index_of(&request.probe).is_none() {
            return Err(ApiError::UnknownProbe(request.probe.clone()));
        }
        request
            .params
            .validate()
            .map_err(|e| ApiError::InvalidParams(e.to_string()))?;
        if let AffinityKind::Temporal { lambda } = request.affinity {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(ApiError::InvalidParams(format!(
                    "temporal lambda must be nonnegative, got {lambda}"
                )));
            }
        }
        let options = QueryOptions {
            top_k: request.params.top_k,
            affinity: request.affinity,
            averaged_probe: request.averaged_probe,
        };
        let problem = QueryProblem::build(&dataset, &request.probe, &options).map_err(|e| match e {
            DataError::UnknownId(id) => ApiError::UnknownProbe(id),
            other => ApiError::InvalidParams(other.to_string()),
        })?;
        let mut params = request.params;
        params.top_k = problem.top_k();
        let session = Session::start(
            problem.affinity.clone(),
            params,
            problem.initial_rank.clone(),
            Some(problem.initial_scores.clone()),
        )
        .map_err(|e| ApiError::InvalidParams(e.to_string()))?;
        let relevant = dataset.relevance(&request.probe).and_then(|flags| {
            let set: BTreeSet<usize> = flags.iter().enumerate().filter_map(|(i, &r)| r.then_some(i)).collect();
            (!set.is_empty()).then_some(set)
        });

        let placeholder = SessionView {
            id: id.clone(),
            dataset: dataset.name.clone(),
            probe: request.probe.clone(),
            status: Status::AwaitingLabels,
            round_index: 0,
            rounds: params.rounds,
            round_token: None,
            params,
            suggestions: Vec::new(),
            preview: Vec::new(),
            final_ranking: None,
            history: Vec::new(),
            metrics: None,
            elapsed_ms: 0.0,
            created_at_ms,
            updated_at_ms: created_at_ms,
        };
        let mut slot = Slot {
            id: id.clone(),
            dataset,
            problem: Arc::new(problem),
            relevant,
            session: None,
            status: Status::AwaitingLabels,
            token: None,
            view: placeholder,
            last_submit: None,
            log: self.log_dir.as_ref().map(|d| d.join(format!("{id}.jsonl"))),
        };
        slot.refresh(&session);
        slot.session = Some(session);
        let view = slot.view.clone();
        self.sessions
            .write()
            .expect("session table poisoned")
            .insert(id, Arc::new(Mutex::new(slot)));
        Ok(view)
    }

    /// Read-only snapshot; never waits for a running computation.
    pub fn view(&self, id: &str) -> Result<SessionView, ApiError> {
        let slot = self.slot(id)?;
        let guard = slot.lock().expect("session poisoned");
        Ok(guard.view.clone())
    }

    /// Labels as recorded by the core, sample indices local to the session.
    pub fn transcript(&self, id: &str) -> Result<SessionTranscript, ApiError> {
        let slot = self.slot(id)?;
        let guard = slot.lock().expect("session poisoned");
        guard
            .session
            .as_ref()
            .map(Session::transcript)
            .ok_or_else(|| ApiError::StaleToken("a submission is being processed".into()))
    }

    /// Gallery indices of the session's top-K candidates, in session order.
    pub fn candidates(&self, id: &str) -> Result<Vec<usize>, ApiError> {
        Ok(self
            .slot(id)?
            .lock()
            .expect("session poisoned")
            .problem
            .candidates
            .clone())
    }

    /// Claims the round under the lock, computes the next round without it,
    /// then commits. A second submission racing the first sees a stale
    /// token; a repeat of an already-committed submission gets the cached
    /// response.
    pub fn submit(&self, id: &str, request: SubmitLabels) -> Result<SessionView, ApiError> {
        let slot = self.slot(id)?;
        let (mut session, labels) = {
            let mut guard = slot.lock().expect("session poisoned");
            if let Some(cached) = &guard.last_submit {
                if cached.request.round_token == request.round_token {
                    return if cached.request.labels == request.labels {
                        Ok(cached.response.clone())
                    } else {
                        Err(ApiError::StaleToken(request.round_token))
                    };
                }
            }
            match guard.status {
                Status::Finished => return Err(ApiError::Finished),
                Status::Ready => return Err(ApiError::StaleToken(request.round_token)),
                Status::AwaitingLabels => {}
            }
            if guard.token.as_deref() != Some(request.round_token.as_str()) {
                return Err(ApiError::StaleToken(request.round_token));
            }
            let suggested = &guard
                .session
                .as_ref()
                .expect("idle session present")
                .current()
                .suggestions;
            let mut labels = BTreeMap::new();
            for (sample, &label) in &request.labels {
                match guard.session_index(sample) {
                    Some(i) if suggested.contains(&i) => {
                        labels.insert(i, label);
                    }
                    _ => return Err(ApiError::NotSuggested(sample.clone())),
                }
            }
            guard.status = Status::Ready;
            guard.view.status = Status::Ready;
            (guard.session.take().expect("idle session present"), labels)
        };

        let outcome = session.submit(&labels);

        let mut guard = slot.lock().expect("session poisoned");
        if let Err(err) = outcome {
            guard.status = Status::AwaitingLabels;
            guard.view.status = Status::AwaitingLabels;
            guard.session = Some(session);
            return Err(session_error(err));
        }
        if let Some(path) = &guard.log {
            let event = LogEvent::Labels {
                at_ms: now_ms(),
                submit: request.clone(),
            };
            if let Err(e) = append_line(path, &event) {
                log::error!("session {id}: {e}");
            }
        }
        guard.refresh(&session);
        guard.session = Some(session);
        let response = guard.view.clone();
        guard.last_submit = Some(CachedSubmit {
            request,
            response: response.clone(),
        });
        Ok(response)
    }

    fn append(&self, id: &str, event: &LogEvent) -> Result<(), ApiError> {
        match &self.log_dir {
            Some(dir) => append_line(&dir.join(format!("{id}.jsonl")), event),
            None => Ok(()),
        }
    }

    /// Replays every `*.jsonl` log in the log directory. Unreadable files and
    /// events are skipped with a warning; returns the number of sessions
    /// restored.
    pub fn recover(&self) -> std::io::Result<usize> {
        let Some(dir) = &self.log_dir else { return Ok(0) };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        let mut restored = 0;
        for path in paths {
            match self.replay(&path) {
                Ok(()) => restored += 1,
                Err(e) => log::warn!("skipping {}: {e}", path.display()),
            }
        }
        Ok(restored)
    }

    fn replay(&self, path: &Path) -> Result<(), String> {
        let file = File::open(path).map_err(|e| e.to_string())?;
        let mut lines = BufReader::new(file).lines();
        let first = lines.next().ok_or("empty log")?.map_err(|e| e.to_string())?;
        let LogEvent::Create {
            id,
            created_at_ms,
            request,
        } = serde_json::from_str(&first).map_err(|e| e.to_string())?
        else {
            return Err("log does not start with a create event".into());
        };
        self.create_with_id(id.clone(), created_at_ms, &request)
            .map_err(|e| e.to_string())?;
        // Re-entering submit would append again; silence logging while replaying.
        let slot = self.slot(&id).map_err(|e| e.to_string())?;
        let log = slot.lock().expect("session poisoned").log.take();
        for (n, line) in lines.enumerate() {
            let parsed = line
                .map_err(|e| e.to_string())
                .and_then(|l| serde_json::from_str::<LogEvent>(&l).map_err(|e| e.to_string()));
            match parsed {
                Ok(LogEvent::Labels { submit, .. }) => {
                    self.submit(&id, submit).map_err(|e| e.to_string())?;
                }
                Ok(LogEvent::Create { .. }) => return Err(format!("line {}: duplicate create", n + 2)),
                Err(e) => {
                    log::warn!("{}: line {}: {e}; truncating replay", path.display(), n + 2);
                    break;
                }
            }
        }
        slot.lock().expect("session poisoned").log = log;
        Ok(())
    }
}

fn append_line(path: &Path, event: &LogEvent) -> Result<(), ApiError> {
    let mut line = serde_json::to_string(event).map_err(|e| ApiError::Internal(e.to_string()))?;
    line.push('\n');
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .and_then(|mut f| f.write_all(line.as_bytes()))
        .map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))
}
