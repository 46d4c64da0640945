//! `/v1` routes.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

use systemic_core::generator::{generate, sweep_seeds};
use systemic_core::intervention::{relief_table, RankedAssessment};
use systemic_core::metrics::{systemic_indicators, MetricsConfig};
use systemic_core::network::{validate_network, NetworkSummary};
use systemic_core::render::render_svg;
use systemic_core::scenario::{InterventionOutcome, ShockOutcome};
use systemic_core::{
    Assessment, GeneratorConfig, InterventionBase, InterventionPlan, Layout, LayoutConfig, Network,
    RankingKey, RiskMatrix, Scenario, ShockSpec, Stage, SystemRisk,
};

use crate::error::{ApiError, ApiResult};
use crate::events::{EventHub, ScenarioEvent, PROGRESS_STRIDE};
use crate::extract::{Body, Params};
use crate::store::{NetworkEntry, ScenarioEntry, Store};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct LayoutKey {
    scenario_id: String,
    revision: u32,
    stage: Stage,
    config_hash: u64,
}

struct Inner {
    store: Store,
    layout_defaults: LayoutConfig,
    metrics: MetricsConfig,
    layouts: Mutex<HashMap<LayoutKey, Arc<Layout>>>,
    events: EventHub,
}

/// Shared handler state.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(store: Store, layout_defaults: LayoutConfig) -> Self {
        Self {
            inner: Arc::new(Inner {
                store,
                layout_defaults,
                metrics: MetricsConfig::default(),
                layouts: Mutex::new(HashMap::new()),
                events: EventHub::default(),
            }),
        }
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }
}

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/networks", get(list_networks).post(create_network))
        .route("/networks/{id}", get(get_network))
        .route("/networks/{id}/shocks", post(shock))
        .route("/scenarios", get(list_scenarios))
        .route("/scenarios/{id}", get(get_scenario))
        .route("/scenarios/{id}/metrics", get(metrics))
        .route("/scenarios/{id}/layout", get(layout_get).post(layout_post))
        .route(
            "/scenarios/{id}/interventions",
            get(get_intervention).post(intervene),
        )
        .route("/scenarios/{id}/compare", post(compare))
        .route("/scenarios/{id}/strategies", get(strategies))
        .route("/scenarios/{id}/events", get(events))
        .fallback(unknown_route)
        .method_not_allowed_fallback(method_not_allowed)
}

async fn unknown_route() -> ApiError {
    ApiError::new(crate::error::ErrorCode::NotFound, "no such endpoint")
}

async fn method_not_allowed() -> Response {
    let body = ApiError::invalid("method not allowed on this endpoint");
    (StatusCode::METHOD_NOT_ALLOWED, Json(body)).into_response()
}

async fn blocking<R: Send + 'static>(
    f: impl FnOnce() -> ApiResult<R> + Send + 'static,
) -> ApiResult<R> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Svg,
}

fn csv_response(body: String) -> Response {
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response()
}

// --- networks --------------------------------------------------------------------------------

fn default_tolerance() -> f64 {
    0.1
}

fn default_attempts() -> usize {
    200
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub n: usize,
    #[serde(default)]
    pub config: GeneratorConfig,
    /// Sweep seeds upward from `config.seed` until the edge count is within `tolerance`.
    #[serde(default)]
    pub target_edges: Option<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CreateNetwork {
    Generate(GenerateRequest),
    Upload(Network),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreatedNetwork {
    pub network_id: String,
    pub summary: NetworkSummary,
    /// Seed that produced a generated network.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

async fn list_networks(State(state): State<AppState>) -> Json<Vec<NetworkEntry>> {
    Json(state.store().list_networks())
}

async fn create_network(
    State(state): State<AppState>,
    Body(req): Body<CreateNetwork>,
) -> ApiResult<(StatusCode, Json<CreatedNetwork>)> {
    let created = blocking(move || {
        let (net, seed) = match req {
            CreateNetwork::Generate(g) => match g.target_edges {
                Some(target) => {
                    let (seed, net) =
                        sweep_seeds::<f64>(g.n, &g.config, target, g.tolerance, g.max_attempts)?;
                    (net, Some(seed))
                }
                None => (generate::<f64>(g.n, &g.config)?, Some(g.config.seed)),
            },
            CreateNetwork::Upload(net) => {
                let report = validate_network(&net);
                if !report.is_valid() {
                    return Err(
                        ApiError::invalid("uploaded network violates its invariants")
                            .with_detail(serde_json::json!({ "violations": report.messages() })),
                    );
                }
                (net.with_stage(Stage::Original), None)
            }
        };
        let summary = net.summary();
        let network_id = state.store().insert_network(net)?;
        Ok(CreatedNetwork {
            network_id,
            summary,
            seed,
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn get_network(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Params(q): Params<FormatQuery>,
) -> ApiResult<Response> {
    let net = state.store().network(&id)?;
    Ok(match q.format {
        Format::Csv => csv_response(net.to_edge_csv()?),
        Format::Json => Json(net.as_ref().clone()).into_response(),
        Format::Svg => return Err(ApiError::invalid("networks are available as json or csv")),
    })
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormatQuery {
    #[serde(default)]
    pub format: Format,
}

async fn shock(
    State(state): State<AppState>,
    Path(network_id): Path<String>,
    Body(spec): Body<ShockSpec>,
) -> ApiResult<(StatusCode, Json<ShockOutcome<f64>>)> {
    let net = state.store().network(&network_id)?;
    spec.validate()?;
    let outcome = blocking(move || {
        let mut scenario = Scenario::shock("", network_id, net.as_ref().clone(), spec, now())?;
        scenario.id = state.store().allocate_scenario_id();
        let outcome = scenario.shock_outcome()?;
        state.store().put_scenario(scenario)?;
        Ok(outcome)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(outcome)))
}

// --- scenarios -------------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageView {
    pub stage: Stage,
    pub summary: NetworkSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioView {
    pub scenario_id: String,
    pub network_id: String,
    pub created_at: u64,
    pub revision: u32,
    pub shock: ShockSpec,
    pub stages: Vec<StageView>,
    pub system_risk: SystemRisk,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<InterventionPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessment: Option<Assessment>,
}

async fn list_scenarios(State(state): State<AppState>) -> Json<Vec<ScenarioEntry>> {
    Json(state.store().list_scenarios())
}

async fn get_scenario(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<ScenarioView>> {
    let s = state.store().scenario(&id)?;
    let stages = s
        .stages()
        .into_iter()
        .map(|stage| {
            Ok(StageView {
                stage,
                summary: s.network(stage)?.summary(),
            })
        })
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(Json(ScenarioView {
        scenario_id: s.id.clone(),
        network_id: s.network_id.clone(),
        created_at: s.created_at,
        revision: s.revision,
        shock: s.shock.clone(),
        stages,
        system_risk: systemic_indicators(&s.original, &s.propagation)?,
        plan: s.intervention.as_ref().map(|a| a.plan.clone()),
        assessment: s.intervention.as_ref().map(|a| a.assessment.clone()),
    }))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsQuery {
    #[serde(default)]
    pub stage: Option<Stage>,
    #[serde(default)]
    pub format: Format,
}

async fn metrics(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Params(q): Params<MetricsQuery>,
) -> ApiResult<Response> {
    let s = state.store().scenario(&id)?;
    let stage = q.stage.unwrap_or(Stage::Shocked);
    let cfg = state.inner.metrics.clone();
    let risk: RiskMatrix = blocking(move || Ok(s.metrics(stage, &cfg)?)).await?;
    Ok(match q.format {
        Format::Json => Json(risk).into_response(),
        Format::Csv => csv_response(risk.to_csv()?),
        Format::Svg => return Err(ApiError::invalid("metrics are available as json or csv")),
    })
}

// --- layout ----------------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutQuery {
    #[serde(default)]
    pub stage: Option<Stage>,
    #[serde(default)]
    pub format: Format,
    pub seed: Option<u64>,
    pub perplexity: Option<f64>,
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub radius_encoding: Option<String>,
    pub canvas: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutRequest {
    #[serde(default)]
    pub stage: Option<Stage>,
    /// Replaces the server default in full.
    #[serde(default)]
    pub config: Option<LayoutConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutResponse {
    pub scenario_id: String,
    pub stage: Stage,
    pub config_hash: String,
    pub layout: Layout,
}

async fn layout_get(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Params(q): Params<LayoutQuery>,
) -> ApiResult<Response> {
    let mut cfg = state.inner.layout_defaults.clone();
    if let Some(v) = q.seed {
        cfg.seed = v;
    }
    if let Some(v) = q.perplexity {
        cfg.perplexity = v;
    }
    if let Some(v) = q.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = q.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = q.radius_encoding {
        cfg.radius_encoding = v;
    }
    if let Some(v) = q.canvas {
        cfg.canvas = v;
    }
    layout_response(state, id, q.stage.unwrap_or(Stage::Shocked), cfg, q.format).await
}

async fn layout_post(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Params(q): Params<FormatQuery>,
    Body(req): Body<LayoutRequest>,
) -> ApiResult<Response> {
    let cfg = req
        .config
        .unwrap_or_else(|| state.inner.layout_defaults.clone());
    layout_response(
        state,
        id,
        req.stage.unwrap_or(Stage::Shocked),
        cfg,
        q.format,
    )
    .await
}

async fn layout_response(
    state: AppState,
    id: String,
    stage: Stage,
    cfg: LayoutConfig,
    format: Format,
) -> ApiResult<Response> {
    cfg.validate()?;
    let scenario = state.store().scenario(&id)?;
    scenario.network(stage)?;
    let key = LayoutKey {
        scenario_id: id.clone(),
        revision: scenario.revision,
        stage,
        config_hash: cfg.fingerprint(),
    };
    let config_hash = format!("{:016x}", key.config_hash);
    let cached = state
        .inner
        .layouts
        .lock()
        .expect("layout cache poisoned")
        .get(&key)
        .cloned();
    let hit = cached.is_some();
    let layout = match cached {
        Some(layout) => layout,
        None => {
            let (state, scenario, cfg) = (state.clone(), scenario.clone(), cfg.clone());
            let hash = config_hash.clone();
            blocking(move || {
                let events = &state.inner.events;
                events.publish(
                    &key.scenario_id,
                    ScenarioEvent::LayoutStarted {
                        stage,
                        config_hash: hash.clone(),
                        iterations: cfg.iterations,
                    },
                );
                let mut report = |iteration: usize, kl: f64| {
                    if iteration % PROGRESS_STRIDE == 0 || iteration == cfg.iterations {
                        events.publish(
                            &key.scenario_id,
                            ScenarioEvent::LayoutProgress {
                                stage,
                                config_hash: hash.clone(),
                                iteration,
                                kl,
                            },
                        );
                    }
                };
                let layout =
                    Arc::new(scenario.layout(stage, &state.inner.metrics, &cfg, &mut report)?);
                events.publish(
                    &key.scenario_id,
                    ScenarioEvent::LayoutFinished {
                        stage,
                        config_hash: hash,
                        final_kl: layout.kl_trace.last().copied().unwrap_or(0.0),
                    },
                );
                let cached = state
                    .inner
                    .layouts
                    .lock()
                    .expect("layout cache poisoned")
                    .entry(key)
                    .or_insert(layout)
                    .clone();
                Ok(cached)
            })
            .await?
        }
    };
    let cache_header = [("x-layout-cache", if hit { "hit" } else { "miss" })];
    Ok(match format {
        Format::Json => (
            cache_header,
            Json(LayoutResponse {
                scenario_id: id,
                stage,
                config_hash,
                layout: layout.as_ref().clone(),
            }),
        )
            .into_response(),
        Format::Svg => {
            let metrics = state.inner.metrics.clone();
            let svg = blocking(move || {
                let risk = scenario.metrics(stage, &metrics)?;
                Ok(render_svg(&layout, &risk, cfg.canvas)?)
            })
            .await?;
            (cache_header, [(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response()
        }
        Format::Csv => return Err(ApiError::invalid("layouts are available as json or svg")),
    })
}

// --- interventions ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionRequest {
    pub plan: InterventionPlan,
    #[serde(default)]
    pub base: InterventionBase,
    /// Replace an intervention that is already applied.
    #[serde(default)]
    pub overwrite: bool,
}

async fn get_intervention(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<InterventionOutcome<f64>>> {
    Ok(Json(state.store().scenario(&id)?.intervention_outcome()?))
}

async fn intervene(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Body(req): Body<InterventionRequest>,
) -> ApiResult<Json<InterventionOutcome<f64>>> {
    state.store().scenario(&id)?;
    let writer = state.store().writer(&id);
    let _guard = writer.lock().await;
    let outcome = blocking(move || {
        let mut scenario = state.store().scenario(&id)?.as_ref().clone();
        let outcome = scenario.intervene(&req.plan, req.base, req.overwrite)?;
        let scenario = state.store().put_scenario(scenario)?;
        state.inner.events.publish(
            &id,
            ScenarioEvent::InterventionApplied {
                revision: scenario.revision,
                label: req.plan.label.clone(),
            },
        );
        Ok(outcome)
    })
    .await?;
    Ok(Json(outcome))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRequest {
    pub plans: Vec<InterventionPlan>,
    #[serde(default)]
    pub key: RankingKey,
    #[serde(default)]
    pub base: InterventionBase,
}

async fn compare(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Params(q): Params<FormatQuery>,
    Body(req): Body<CompareRequest>,
) -> ApiResult<Response> {
    let scenario = state.store().scenario(&id)?;
    let events = state.clone();
    let ranked: Vec<RankedAssessment<f64>> =
        blocking(move || Ok(scenario.compare(&req.plans, &req.key, req.base)?)).await?;
    events.inner.events.publish(
        &id,
        ScenarioEvent::CompareFinished {
            plans: ranked.len(),
        },
    );
    Ok(match q.format {
        Format::Json => Json(ranked).into_response(),
        Format::Csv => {
            let rows: Vec<&Assessment> = ranked.iter().map(|r| &r.assessment).collect();
            csv_response(relief_table(&rows)?)
        }
        Format::Svg => {
            return Err(ApiError::invalid(
                "comparisons are available as json or csv",
            ))
        }
    })
}

async fn strategies(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<InterventionPlan>>> {
    let scenario = state.store().scenario(&id)?;
    let cfg = state.inner.metrics.clone();
    Ok(Json(
        blocking(move || Ok(scenario.candidate_plans(&cfg)?)).await?,
    ))
}

// --- events ----------------------------------------------------------------------------------

async fn events(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    state.store().scenario(&id)?;
    let rx = state.inner.events.subscribe(&id);
    let stream = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(event) => {
                    let sse = Event::default()
                        .event(event.name())
                        .json_data(&event)
                        .unwrap_or_else(|_| Event::default().comment("unserializable event"));
                    return Some((Ok(sse), rx));
                }
                Err(RecvError::Lagged(missed)) => {
                    let sse = Event::default().event("lagged").data(missed.to_string());
                    return Some((Ok(sse), rx));
                }
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}
