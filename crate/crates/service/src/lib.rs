//! HTTP session service for the draft assistant.
//!
//! Sessions live in memory. Each one is guarded by its own async mutex, so a
//! long search in one session never blocks another; searches run on the
//! blocking pool and stop early when the request is dropped.

pub mod error;
pub mod session;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::routing::{get, post};
use axum::{Json, Router};
use herodraft_core::api::{
    CreateSession, Created, EngineMoveResponse, HeroInfo, Mutation, PickRequest, Recommendations, Roster, SessionView, WhatIf, WhatIfRequest,
};
use herodraft_core::strategy::{StrategyKind, StrategySpec};
use herodraft_core::winrate::{HeroStats, WinratePredictor};
use herodraft_core::{DraftState, GameConfig, HeroId};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::Mutex;
use tracing::info;

pub use error::ServiceError;
use session::{phi_if_picked, rank, run_advisor, run_engine, Advisor, Session};

/// Server-wide settings.
#[derive(Clone)]
pub struct ServiceConfig {
    /// Used when a session does not bring its own.
    pub config: GameConfig,
    /// Scores completed rounds and drives the searches.
    pub predictor: WinratePredictor,
    pub hero_stats: Option<HeroStats>,
    /// Used when a session does not bring its own.
    pub engine: StrategySpec,
    /// Checkpoint paths in engine specs resolve against this directory.
    pub base_dir: PathBuf,
    /// Hard cap on any single search.
    pub time_cap_ms: u64,
    /// Iterations for recommendations when the engine is not a PUCT strategy.
    pub recommend_iterations: u32,
    pub default_top_k: usize,
}

impl ServiceConfig {
    pub fn new(config: GameConfig, predictor: WinratePredictor) -> Self {
        let mut engine = StrategySpec::of(StrategyKind::JueWuDraft);
        engine.search.iterations = 16_000;
        ServiceConfig {
            config,
            predictor,
            hero_stats: None,
            engine,
            base_dir: PathBuf::from("."),
            time_cap_ms: 3000,
            recommend_iterations: 1600,
            default_top_k: 5,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    settings: ServiceConfig,
    sessions: parking_lot::RwLock<HashMap<u64, Arc<Mutex<Session>>>>,
    created: parking_lot::Mutex<HashMap<u64, (String, Created)>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(settings: ServiceConfig) -> Self {
        AppState {
            inner: Arc::new(Inner {
                settings,
                sessions: parking_lot::RwLock::new(HashMap::new()),
                created: parking_lot::Mutex::new(HashMap::new()),
                next_id: AtomicU64::new(1),
            }),
        }
    }

    pub fn settings(&self) -> &ServiceConfig {
        &self.inner.settings
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.read().len()
    }

    fn session(&self, id: u64) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.inner.sessions.read().get(&id).cloned().ok_or(ServiceError::NotFound(id))
    }

    fn create(&self, req: CreateSession) -> Result<Created, ServiceError> {
        let s = self.settings();
        let fingerprint = serde_json::to_string(&CreateSession { request_id: None, ..req.clone() }).expect("request serializes");
        let mut created = self.inner.created.lock();
        if let Some(rid) = req.request_id {
            if let Some((fp, reply)) = created.get(&rid) {
                return if *fp == fingerprint { Ok(reply.clone()) } else { Err(ServiceError::RequestReused(rid)) };
            }
        }
        let config = req.config.unwrap_or_else(|| s.config.clone());
        if let Some(n) = s.predictor.n_heroes() {
            if n != config.n_heroes() {
                return Err(ServiceError::BadRequest(format!(
                    "config has {} heroes but the win-rate predictor covers {n}",
                    config.n_heroes()
                )));
            }
        }
        let spec = req.engine_spec.unwrap_or_else(|| s.engine.clone());
        let mut engine = spec
            .build(&config, s.hero_stats.as_ref(), &s.base_dir)
            .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let cap = s.time_cap_ms;
        if let Some(p) = engine.search_params_mut() {
            p.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
            p.time_limit_ms = Some(p.time_limit_ms.map_or(cap, |t| t.min(cap)));
        }
        let mut advisor = Advisor::for_engine(&engine, s.recommend_iterations);
        advisor.params.time_limit_ms = Some(advisor.params.time_limit_ms.map_or(cap, |t| t.min(cap)));
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        let seed = req.seed.unwrap_or(id);
        let session = Session::new(id, DraftState::new(Arc::new(config)), req.human_player, engine, advisor, seed);
        let reply = Created {
            id,
            view: session.view(&s.predictor),
        };
        self.inner.sessions.write().insert(id, Arc::new(Mutex::new(session)));
        if let Some(rid) = req.request_id {
            created.insert(rid, (fingerprint, reply.clone()));
        }
        info!(id, "session created");
        Ok(reply)
    }
}

/// Sets the flag when dropped, which stops a search whose request went away.
struct CancelOnDrop(Arc<AtomicBool>);

impl Drop for CancelOnDrop {
    fn drop(&mut self) {
        self.0.store(true, Ordering::Relaxed);
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce(&AtomicBool) -> Result<T, ServiceError> + Send + 'static) -> Result<T, ServiceError> {
    let flag = Arc::new(AtomicBool::new(false));
    let guard = CancelOnDrop(flag.clone());
    let out = tokio::task::spawn_blocking(move || f(&flag))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    drop(guard);
    out
}

/// Session id path segment with errors in the API's shape.
struct SessionId(u64);

impl<S: Send + Sync> FromRequestParts<S> for SessionId {
    type Rejection = ServiceError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ServiceError> {
        let Path(id) = Path::<u64>::from_request_parts(parts, state)
            .await
            .map_err(|e| ServiceError::BadRequest(e.body_text()))?;
        Ok(SessionId(id))
    }
}

fn json<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    body.map(|Json(b)| b).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

fn optional_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ServiceError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

async fn create_session(State(app): State<AppState>, body: Result<Json<CreateSession>, JsonRejection>) -> Result<Json<Created>, ServiceError> {
    let req = json(body)?;
    Ok(Json(app.create(req)?))
}

async fn get_session(State(app): State<AppState>, SessionId(id): SessionId) -> Result<Json<SessionView>, ServiceError> {
    let s = app.session(id)?;
    let s = s.lock().await;
    Ok(Json(s.view(&app.settings().predictor)))
}

async fn pick(
    State(app): State<AppState>,
    SessionId(id): SessionId,
    body: Result<Json<PickRequest>, JsonRejection>,
) -> Result<Json<SessionView>, ServiceError> {
    let req = json(body)?;
    let s = app.session(id)?;
    let mut s = s.lock().await;
    let fp = format!("pick:{}", req.hero_id);
    if let Some(v) = s.replay(req.request_id, &fp)? {
        return Ok(Json(v));
    }
    s.human_pick(req.hero_id)?;
    let view = s.view(&app.settings().predictor);
    s.remember(req.request_id, &fp, &view);
    Ok(Json(view))
}

async fn engine_move(State(app): State<AppState>, SessionId(id): SessionId, body: Bytes) -> Result<Json<EngineMoveResponse>, ServiceError> {
    let req: Mutation = optional_body(&body)?;
    let s = app.session(id)?;
    let mut s = s.lock().await;
    if let Some(r) = s.replay(req.request_id, "engine-move")? {
        return Ok(Json(r));
    }
    let job = Arc::new(s.engine_job()?);
    let predictor = app.settings().predictor.clone();
    let pick = {
        let job = job.clone();
        blocking(move |cancel| run_engine(&job, &predictor, cancel)).await?
    };
    let engine_move = s.apply_engine(&job, &pick)?;
    info!(id, hero = pick.hero, latency_ms = engine_move.latency_ms, "engine move");
    let reply = EngineMoveResponse {
        engine_move,
        view: s.view(&app.settings().predictor),
    };
    s.remember(req.request_id, "engine-move", &reply);
    Ok(Json(reply))
}

async fn undo(State(app): State<AppState>, SessionId(id): SessionId, body: Bytes) -> Result<Json<SessionView>, ServiceError> {
    let req: Mutation = optional_body(&body)?;
    let s = app.session(id)?;
    let mut s = s.lock().await;
    if let Some(v) = s.replay(req.request_id, "undo")? {
        return Ok(Json(v));
    }
    s.undo()?;
    let view = s.view(&app.settings().predictor);
    s.remember(req.request_id, "undo", &view);
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
struct TopK {
    top_k: Option<usize>,
}

async fn recommend_at(app: &AppState, s: &mut Session, state: DraftState, top_k: Option<usize>) -> Result<Recommendations, ServiceError> {
    let top_k = top_k.unwrap_or(app.settings().default_top_k);
    if top_k == 0 {
        return Err(ServiceError::BadRequest("top_k must be at least 1".into()));
    }
    let predictor = app.settings().predictor.clone();
    let (result, cached) = match s.cached(&state) {
        Some(r) => (r, true),
        None => {
            let job = s.advisor_job(state.clone())?;
            let p = predictor.clone();
            let r = Arc::new(blocking(move |cancel| run_advisor(&job, &p, cancel)).await?);
            s.store(&state, r.clone());
            (r, false)
        }
    };
    Ok(rank(&state, &result, &predictor, top_k, cached))
}

async fn recommendations(
    State(app): State<AppState>,
    SessionId(id): SessionId,
    query: Result<Query<TopK>, QueryRejection>,
) -> Result<Json<Recommendations>, ServiceError> {
    let Query(q) = query.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let s = app.session(id)?;
    let mut s = s.lock().await;
    let state = s.state().clone();
    Ok(Json(recommend_at(&app, &mut s, state, q.top_k).await?))
}

async fn whatif(
    State(app): State<AppState>,
    SessionId(id): SessionId,
    body: Result<Json<WhatIfRequest>, JsonRejection>,
) -> Result<Json<WhatIf>, ServiceError> {
    let req = json(body)?;
    let s = app.session(id)?;
    let mut s = s.lock().await;
    let predictor = app.settings().predictor.clone();
    let phi_estimate = phi_if_picked(s.state(), req.hero_id, &predictor)?;
    let next = s.state().apply(req.hero_id).map_err(|e| ServiceError::Illegal(e.to_string()))?;
    let recommendations = if next.is_terminal() {
        None
    } else {
        Some(recommend_at(&app, &mut s, next.clone(), req.top_k).await?)
    };
    Ok(Json(WhatIf {
        hero_id: req.hero_id,
        view: s.hypothetical_view(&next, &predictor),
        phi_estimate,
        recommendations,
    }))
}

async fn heroes(State(app): State<AppState>) -> Json<Roster> {
    let s = app.settings();
    let n = s.config.n_heroes();
    let stats = s.hero_stats.as_ref().filter(|st| st.n_heroes() == n);
    let heroes = (0..n)
        .map(|i| {
            let id = i as HeroId;
            HeroInfo {
                id,
                name: format!("Hero {id}"),
                appearances: stats.map(|st| st.appearances[i]),
                wins: stats.map(|st| st.wins[i]),
                winrate: stats.map(|st| st.winrate(id)),
            }
        })
        .collect();
    Json(Roster { n_heroes: n, heroes })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/picks", post(pick))
        .route("/api/sessions/{id}/engine-move", post(engine_move))
        .route("/api/sessions/{id}/recommendations", get(recommendations))
        .route("/api/sessions/{id}/whatif", post(whatif))
        .route("/api/sessions/{id}/undo", post(undo))
        .route("/api/heroes", get(heroes))
        .fallback(|| async { ServiceError::NoRoute })
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Serves until `shutdown` resolves.
pub async fn serve_until(listener: TcpListener, state: AppState, shutdown: impl std::future::Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
