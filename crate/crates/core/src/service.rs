//! HTTP API for human reannotation and the remote oracle behind it.
//!
//! The loop runs on its own thread. Handlers read a shared snapshot of the
//! run and push decisions through a channel that the [`RemoteOracle`] drains
//! while a reannotation phase is suspended.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusBundle, MatchOutcome, QuestionType};
use crate::error::{Error, Result};
use crate::experiment::{EpochLog, ExperimentResult, LoopConfig, Observer, Phase};
use crate::oracle::{Oracle, OracleKind, Reannotation, ReannotationOutcome, ReannotationRequest};
use crate::policy::{CaseLabel, StrategyKind};
use crate::pools::{InstanceId, PoolSizes, Pools};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Starting,
    Running,
    Finished,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalTermView {
    pub surface: String,
    pub question_types: Vec<QuestionType>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatusView {
    pub state: RunState,
    pub epoch: Option<u64>,
    pub phase: Option<Phase>,
    pub num_epochs: u64,
    pub strategy: StrategyKind,
    pub oracle: OracleKind,
    /// True while the loop is suspended on a reannotation phase.
    pub awaiting_oracle: bool,
    pub pending: usize,
    pub pool_sizes: PoolSizes,
    pub last_em1: Option<f64>,
    pub error: Option<String>,
    /// The only terms a replacement may use.
    pub canonical_terms: Vec<CanonicalTermView>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionView {
    pub surface: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReannotationRequestView {
    pub instance_id: u64,
    pub qtype: QuestionType,
    pub surface_answer: String,
    pub current_label: String,
    pub top_predictions: Vec<PredictionView>,
    /// Absent when not finite.
    pub logdet_cov: Option<f64>,
    pub loss: Option<f64>,
    pub case: CaseLabel,
    /// The canonicalizer's proposal, when it resolves the answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggested: Option<String>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionAction {
    Keep,
    Replace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionBody {
    pub action: DecisionAction,
    #[serde(default)]
    pub term_surface: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub instance_id: u64,
    pub outcome: ReannotationOutcome,
    pub label: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("instance {0} is not pending reannotation")]
    NotFound(InstanceId),
    #[error("instance {0} was already resolved")]
    AlreadyResolved(InstanceId),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::AlreadyResolved(_) => StatusCode::CONFLICT,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

struct PendingEntry {
    request: ReannotationRequest,
    view: ReannotationRequestView,
}

struct Shared {
    bundle: Arc<CorpusBundle>,
    status: StatusView,
    pending: BTreeMap<InstanceId, PendingEntry>,
    /// Ids answered (or timed out) since they were last requested.
    closed: BTreeSet<InstanceId>,
    decisions: Sender<Reannotation>,
}

/// Cloneable access to the shared run state, for handlers and observers.
#[derive(Clone)]
pub struct ServiceHandle {
    shared: Arc<Mutex<Shared>>,
}

/// Oracle that suspends the loop until every flagged instance is decided
/// through the API or the phase times out. Undecided instances keep their
/// label.
pub struct RemoteOracle {
    shared: Arc<Mutex<Shared>>,
    decisions: Receiver<Reannotation>,
    timeout: Duration,
    poll_interval: Duration,
}

impl ServiceHandle {
    pub fn new(bundle: Arc<CorpusBundle>, config: &LoopConfig) -> (ServiceHandle, RemoteOracle) {
        let canonical_terms = bundle
            .refined
            .canonical_ids()
            .iter()
            .map(|&id| {
                let term = bundle.corpus.term(id);
                CanonicalTermView {
                    surface: term.surface.clone(),
                    question_types: term.question_types.iter().copied().collect(),
                }
            })
            .collect();
        let (tx, rx) = mpsc::channel();
        let shared = Arc::new(Mutex::new(Shared {
            bundle,
            status: StatusView {
                state: RunState::Starting,
                epoch: None,
                phase: None,
                num_epochs: config.num_epochs,
                strategy: config.strategy,
                oracle: OracleKind::RemoteHuman,
                awaiting_oracle: false,
                pending: 0,
                pool_sizes: PoolSizes::default(),
                last_em1: None,
                error: None,
                canonical_terms,
            },
            pending: BTreeMap::new(),
            closed: BTreeSet::new(),
            decisions: tx,
        }));
        let oracle = RemoteOracle {
            shared: Arc::clone(&shared),
            decisions: rx,
            timeout: Duration::from_secs(config.oracle.timeout_secs),
            poll_interval: Duration::from_millis(config.oracle.poll_interval_ms),
        };
        (ServiceHandle { shared }, oracle)
    }

    fn lock(&self) -> MutexGuard<'_, Shared> {
        self.shared.lock().expect("service state poisoned")
    }

    pub fn status(&self) -> StatusView {
        self.lock().status.clone()
    }

    /// Pending requests in ascending id order.
    pub fn pending(&self) -> Vec<ReannotationRequestView> {
        self.lock().pending.values().map(|p| p.view.clone()).collect()
    }

    pub fn submit(&self, id: InstanceId, body: &DecisionBody) -> std::result::Result<DecisionResponse, ApiError> {
        let mut shared = self.lock();
        let Some(entry) = shared.pending.get(&id) else {
            return Err(if shared.closed.contains(&id) {
                ApiError::AlreadyResolved(id)
            } else {
                ApiError::NotFound(id)
            });
        };
        let decision = decide(&shared.bundle, &entry.request, body)?;
        shared.pending.remove(&id);
        shared.closed.insert(id);
        shared.status.pending = shared.pending.len();
        let response = DecisionResponse {
            instance_id: id.0,
            outcome: decision.outcome,
            label: decision.surface.clone(),
        };
        // The oracle may already have timed out and dropped its receiver.
        let _ = shared.decisions.send(decision);
        Ok(response)
    }

    pub fn observer(&self) -> ServiceObserver {
        ServiceObserver { handle: self.clone() }
    }

    /// Records how the run ended.
    pub fn finish(&self, result: &Result<ExperimentResult>) {
        let mut shared = self.lock();
        shared.status.awaiting_oracle = false;
        shared.status.phase = None;
        match result {
            Ok(_) => shared.status.state = RunState::Finished,
            Err(e) => {
                shared.status.state = RunState::Failed;
                shared.status.error = Some(e.to_string());
            }
        }
    }
}

fn decide(
    bundle: &CorpusBundle,
    req: &ReannotationRequest,
    body: &DecisionBody,
) -> std::result::Result<Reannotation, ApiError> {
    match body.action {
        DecisionAction::Keep => Ok(Reannotation::unchanged(req)),
        DecisionAction::Replace => {
            let surface = body
                .term_surface
                .as_deref()
                .ok_or_else(|| ApiError::BadRequest("replace needs term_surface".into()))?;
            let term = bundle
                .corpus
                .id_of(surface)
                .filter(|&t| bundle.refined.is_canonical(t))
                .ok_or_else(|| ApiError::BadRequest(format!("{surface:?} is not a canonical term")))?;
            let outcome = match bundle.canonicalize(&req.surface, req.qtype) {
                MatchOutcome::Hit(t) if t == term => ReannotationOutcome::Hit,
                MatchOutcome::Resolved(t) if t == term => ReannotationOutcome::Resolved,
                _ => ReannotationOutcome::ManualReplaced,
            };
            Ok(Reannotation::to(bundle, req, term, outcome))
        }
    }
}

fn request_view(bundle: &CorpusBundle, req: &ReannotationRequest) -> ReannotationRequestView {
    let finite = |v: f64| v.is_finite().then_some(v);
    ReannotationRequestView {
        instance_id: req.id.0,
        qtype: req.qtype,
        surface_answer: req.surface.clone(),
        current_label: bundle.corpus.surface(req.label).to_string(),
        top_predictions: req
            .evidence
            .top_predictions
            .iter()
            .map(|&(t, p)| PredictionView {
                surface: bundle.corpus.surface(t).to_string(),
                probability: p,
            })
            .collect(),
        logdet_cov: finite(req.evidence.logdet_cov),
        loss: finite(req.evidence.loss),
        case: req.evidence.case,
        suggested: match bundle.canonicalize(&req.surface, req.qtype) {
            MatchOutcome::Resolved(t) => Some(bundle.corpus.surface(t).to_string()),
            _ => None,
        },
    }
}

impl Oracle for RemoteOracle {
    fn kind(&self) -> OracleKind {
        OracleKind::RemoteHuman
    }

    fn reannotate(&mut self, bundle: &CorpusBundle, requests: &[ReannotationRequest]) -> Result<Vec<Reannotation>> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        let wanted: BTreeMap<InstanceId, &ReannotationRequest> = requests.iter().map(|r| (r.id, r)).collect();
        // Anything left over from an earlier phase is stale.
        while self.decisions.try_recv().is_ok() {}
        {
            let mut shared = self.shared.lock().expect("service state poisoned");
            for req in requests {
                shared.closed.remove(&req.id);
                let view = request_view(bundle, req);
                shared.pending.insert(
                    req.id,
                    PendingEntry {
                        request: req.clone(),
                        view,
                    },
                );
            }
            shared.status.pending = shared.pending.len();
            shared.status.awaiting_oracle = true;
        }
        log::info!("waiting for {} reannotation decisions", requests.len());

        let deadline = Instant::now() + self.timeout;
        let mut answers: BTreeMap<InstanceId, Reannotation> = BTreeMap::new();
        while answers.len() < wanted.len() {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            match self.decisions.recv_timeout(left.min(self.poll_interval)) {
                Ok(d) if wanted.contains_key(&d.id) => {
                    answers.insert(d.id, d);
                }
                Ok(_) | Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Oracle("decision channel closed".into()));
                }
            }
        }

        let mut shared = self.shared.lock().expect("service state poisoned");
        // A decision may have been accepted between the last poll and the lock.
        while let Ok(d) = self.decisions.try_recv() {
            if wanted.contains_key(&d.id) {
                answers.insert(d.id, d);
            }
        }
        let missing: Vec<InstanceId> = wanted.keys().filter(|id| !answers.contains_key(id)).copied().collect();
        if !missing.is_empty() {
            log::warn!(
                "reannotation timed out; keeping the current label for {} instances",
                missing.len()
            );
        }
        for id in missing {
            shared.pending.remove(&id);
            shared.closed.insert(id);
            answers.insert(id, Reannotation::unchanged(wanted[&id]));
        }
        shared.status.pending = shared.pending.len();
        shared.status.awaiting_oracle = false;
        Ok(answers.into_values().collect())
    }
}

/// Mirrors loop progress into the status view.
pub struct ServiceObserver {
    handle: ServiceHandle,
}

impl Observer for ServiceObserver {
    fn phase_started(&mut self, epoch: u64, phase: Phase) {
        let mut shared = self.handle.lock();
        shared.status.state = RunState::Running;
        shared.status.epoch = Some(epoch);
        shared.status.phase = Some(phase);
    }

    fn phase_finished(&mut self, _epoch: u64, _phase: Phase, pools: &Pools) {
        self.handle.lock().status.pool_sizes = pools.sizes();
    }

    fn epoch_finished(&mut self, log: &EpochLog) {
        self.handle.lock().status.last_em1 = Some(log.em1);
    }
}

async fn get_status(State(handle): State<ServiceHandle>) -> Json<StatusView> {
    Json(handle.status())
}

async fn get_pending(State(handle): State<ServiceHandle>) -> Json<Vec<ReannotationRequestView>> {
    Json(handle.pending())
}

async fn post_decision(
    State(handle): State<ServiceHandle>,
    Path(id): Path<u64>,
    body: Bytes,
) -> std::result::Result<Json<DecisionResponse>, ApiError> {
    let body: DecisionBody = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    handle.submit(InstanceId(id), &body).map(Json)
}

pub fn router(handle: ServiceHandle) -> Router {
    Router::new()
        .route("/api/status", get(get_status))
        .route("/api/reannotation/pending", get(get_pending))
        .route("/api/reannotation/{id}", post(post_decision))
        .with_state(handle)
}

/// Runs the loop with the remote oracle while serving the API on
/// `127.0.0.1:port`, and stops serving once the run completes.
pub fn serve(
    config: &LoopConfig,
    records: Vec<crate::pools::InstanceRecord>,
    bundle: CorpusBundle,
    port: u16,
) -> Result<ExperimentResult> {
    let bundle = Arc::new(bundle);
    let (handle, mut oracle) = ServiceHandle::new(Arc::clone(&bundle), config);
    let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
    let listener = std::net::TcpListener::bind(addr).map_err(|e| Error::Oracle(format!("bind {addr}: {e}")))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| Error::Oracle(format!("listener: {e}")))?;
    log::info!("serving on http://{}", listener.local_addr().unwrap_or(addr));

    let (done_tx, done_rx) = tokio::sync::oneshot::channel::<()>();
    let loop_handle = handle.clone();
    let config = config.clone();
    let worker = std::thread::spawn(move || {
        let mut observer = loop_handle.observer();
        let result = crate::experiment::run(&config, records, &bundle, &mut oracle, &mut observer);
        loop_handle.finish(&result);
        let _ = done_tx.send(());
        result
    });

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(|e| Error::Oracle(format!("runtime: {e}")))?;
    let served = runtime.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        axum::serve(listener, router(handle))
            .with_graceful_shutdown(async {
                let _ = done_rx.await;
            })
            .await
    });
    let result = worker
        .join()
        .map_err(|_| Error::Oracle("experiment thread panicked".into()))?;
    served.map_err(|e| Error::Oracle(format!("server: {e}")))?;
    result
}
