use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use systemic_core::LayoutConfig;
use systemic_service::{router, AppState, Store};

const TWO_BANK: &str = include_str!("../../../fixtures/two_bank.json");

struct Harness {
    app: Router,
    dir: TempDir,
}

fn quick_layout() -> LayoutConfig {
    LayoutConfig {
        iterations: 200,
        ..LayoutConfig::default()
    }
}

fn harness() -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let app = app_at(&dir);
    Harness { app, dir }
}

fn app_at(dir: &TempDir) -> Router {
    let state = AppState::new(Store::open(dir.path()).unwrap(), quick_layout());
    router(state, None)
}

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

async fn send(app: &Router, method: Method, uri: &str, body: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let req = req
        .body(
            body.map(|b| Body::from(b.to_string()))
                .unwrap_or_else(Body::empty),
        )
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        headers,
        body,
    }
}

async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Method::GET, uri, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    send(app, Method::POST, uri, Some(&body.to_string())).await
}

async fn upload(app: &Router, doc: &str) -> String {
    let doc: Value = serde_json::from_str(doc).unwrap();
    let r = post(app, "/v1/networks", json!({ "upload": doc })).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    r.json()["network_id"].as_str().unwrap().to_string()
}

async fn generated(app: &Router, n: usize, seed: u64) -> String {
    let r = post(
        app,
        "/v1/networks",
        json!({ "generate": { "n": n, "config": { "method": "min_density", "seed": seed } } }),
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    r.json()["network_id"].as_str().unwrap().to_string()
}

fn linear_all(phi: f64) -> Value {
    json!({ "model": "linear", "targets": "all", "magnitude": { "fraction": phi } })
}

async fn shocked(app: &Router, network: &str, spec: Value) -> String {
    let r = post(app, &format!("/v1/networks/{network}/shocks"), spec).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    r.json()["scenario_id"].as_str().unwrap().to_string()
}

fn assert_error(r: &Reply, status: StatusCode, code: &str) {
    assert_eq!(r.status, status, "{}", r.text());
    let body = r.json();
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
    assert_eq!(body.as_object().unwrap().len(), 3);
}

#[tokio::test]
async fn upload_two_bank_fixture() {
    let h = harness();
    let doc: Value = serde_json::from_str(TWO_BANK).unwrap();
    let r = post(&h.app, "/v1/networks", json!({ "upload": doc })).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let body = r.json();
    assert_eq!(body["network_id"], "net-000001");
    assert_eq!(body["summary"]["n"], 2);
    assert_eq!(body["summary"]["edges"], 1);

    let r = get(&h.app, "/v1/networks/net-000001").await;
    assert_eq!(r.json(), doc);
    let r = get(&h.app, "/v1/networks/net-000001?format=csv").await;
    assert_eq!(r.text(), "from,to,amount\nb1,b0,50\n");
    assert_eq!(
        get(&h.app, "/v1/networks")
            .await
            .json()
            .as_array()
            .unwrap()
            .len(),
        1
    );
}

#[tokio::test]
async fn malformed_requests_are_rejected_with_one_error() {
    let h = harness();
    let r = send(&h.app, Method::POST, "/v1/networks", Some("{not json")).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "invalid_input");

    let doc: Value = serde_json::from_str(TWO_BANK).unwrap();
    let r = post(&h.app, "/v1/networks", json!({ "upload": doc, "extra": 1 })).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "invalid_input");

    let mut bad = doc.clone();
    bad["banks"][0]["colour"] = json!("red");
    let r = post(&h.app, "/v1/networks", json!({ "upload": bad })).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "invalid_input");

    let mut heavy = doc.clone();
    heavy["banks"][0]["weight"] = json!(0.9);
    let r = post(&h.app, "/v1/networks", json!({ "upload": heavy })).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "invalid_input");
    assert!(r.json()["detail"]["violations"][0]
        .as_str()
        .unwrap()
        .contains("weights"));

    let r = post(&h.app, "/v1/networks/net-000042/shocks", linear_all(0.5)).await;
    assert_error(&r, StatusCode::NOT_FOUND, "not_found");
    assert_error(
        &get(&h.app, "/v1/scenarios/scn-000001").await,
        StatusCode::NOT_FOUND,
        "not_found",
    );
    assert_error(
        &get(&h.app, "/v1/nowhere").await,
        StatusCode::NOT_FOUND,
        "not_found",
    );
    assert_error(
        &send(&h.app, Method::DELETE, "/v1/networks", None).await,
        StatusCode::METHOD_NOT_ALLOWED,
        "invalid_input",
    );

    let r = post(
        &h.app,
        "/v1/networks",
        json!({ "generate": { "n": 3, "config": { "marginal_sampler": {
            "kind": "explicit", "assets": [10.0, 0.0, 0.0], "liabilities": [0.0, 0.0, 5.0] } } } }),
    )
    .await;
    assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "infeasible");
}

#[tokio::test]
async fn shock_validation_and_two_bank_oracle() {
    let h = harness();
    let net = upload(&h.app, TWO_BANK).await;
    let uri = format!("/v1/networks/{net}/shocks");

    let zero = json!({ "model": "linear", "targets": ["b0"], "magnitude": { "fraction": 0.0 } });
    assert_error(
        &post(&h.app, &uri, zero).await,
        StatusCode::BAD_REQUEST,
        "invalid_input",
    );
    let unknown = json!({ "model": "linear", "targets": ["b9"], "magnitude": { "fraction": 1.0 } });
    assert_error(
        &post(&h.app, &uri, unknown).await,
        StatusCode::BAD_REQUEST,
        "invalid_input",
    );

    let spec = json!({ "model": "linear", "targets": ["b0"], "magnitude": { "fraction": 1.0 } });
    let first = post(&h.app, &uri, spec.clone()).await;
    assert_eq!(first.status, StatusCode::CREATED);
    let a = first.json();
    assert_eq!(a["scenario_id"], "scn-000001");
    assert_eq!(a["propagation"]["final_stress"], json!([1.0, 0.5]));
    assert_eq!(a["summary"]["stage"], "FN_s");

    let b = post(&h.app, &uri, spec).await.json();
    assert_eq!(b["scenario_id"], "scn-000002");
    for field in ["summary", "propagation", "system_risk"] {
        assert_eq!(a[field], b[field], "{field}");
    }
}

#[tokio::test]
async fn metrics_have_one_row_per_bank() {
    let h = harness();
    let net = generated(&h.app, 12, 1).await;
    let scn = shocked(&h.app, &net, linear_all(0.2)).await;
    let risk = get(&h.app, &format!("/v1/scenarios/{scn}/metrics"))
        .await
        .json();
    assert_eq!(risk["bank_ids"].as_array().unwrap().len(), 12);
    assert_eq!(risk["raw"].as_array().unwrap().len(), 12);
    assert_eq!(risk["normalized"].as_array().unwrap().len(), 12);

    let csv = get(
        &h.app,
        &format!("/v1/scenarios/{scn}/metrics?stage=FN_o&format=csv"),
    )
    .await;
    assert_eq!(csv.headers[header::CONTENT_TYPE], "text/csv; charset=utf-8");
    assert_eq!(csv.text().lines().count(), 13);

    let r = get(&h.app, &format!("/v1/scenarios/{scn}/metrics?stage=FN_is")).await;
    assert_error(&r, StatusCode::NOT_FOUND, "not_found");
    let r = get(&h.app, &format!("/v1/scenarios/{scn}/metrics?stage=FN_x")).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "invalid_input");
    let r = get(&h.app, &format!("/v1/scenarios/{scn}/metrics?colour=1")).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "invalid_input");
}

#[tokio::test]
async fn layouts_are_cached_per_stage_and_config() {
    let h = harness();
    let net = generated(&h.app, 30, 2).await;
    let scn = shocked(&h.app, &net, linear_all(0.1)).await;
    let uri = format!("/v1/scenarios/{scn}/layout?stage=FN_s");

    let first = get(&h.app, &uri).await;
    assert_eq!(first.status, StatusCode::OK, "{}", first.text());
    assert_eq!(first.headers["x-layout-cache"], "miss");
    let second = get(&h.app, &uri).await;
    assert_eq!(second.headers["x-layout-cache"], "hit");
    assert_eq!(first.body, second.body);

    let other = get(&h.app, &format!("{uri}&seed=7")).await;
    assert_eq!(other.headers["x-layout-cache"], "miss");
    assert_ne!(other.json()["config_hash"], first.json()["config_hash"]);

    let posted = post(
        &h.app,
        &format!("/v1/scenarios/{scn}/layout"),
        json!({ "stage": "FN_s", "config": quick_layout() }),
    )
    .await;
    assert_eq!(posted.headers["x-layout-cache"], "hit");
    assert_eq!(posted.body, first.body);

    let svg = get(&h.app, &format!("{uri}&format=svg")).await;
    assert_eq!(svg.headers[header::CONTENT_TYPE], "image/svg+xml");
    assert!(svg.text().contains("<svg"));

    let bad = get(&h.app, &format!("{uri}&perplexity=-1")).await;
    assert_error(&bad, StatusCode::BAD_REQUEST, "invalid_input");
    let missing = get(&h.app, &format!("/v1/scenarios/{scn}/layout?stage=FN_is")).await;
    assert_error(&missing, StatusCode::NOT_FOUND, "not_found");
}

#[tokio::test]
async fn intervened_layout_differs_from_shocked() {
    let h = harness();
    let net = generated(&h.app, 30, 4).await;
    let scn = shocked(&h.app, &net, linear_all(0.1)).await;
    let plans = get(&h.app, &format!("/v1/scenarios/{scn}/strategies"))
        .await
        .json();
    let r = post(
        &h.app,
        &format!("/v1/scenarios/{scn}/interventions"),
        json!({ "plan": plans[0] }),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());

    let fs = get(&h.app, &format!("/v1/scenarios/{scn}/layout?stage=FN_s"))
        .await
        .json();
    let fis = get(&h.app, &format!("/v1/scenarios/{scn}/layout?stage=FN_is"))
        .await
        .json();
    let positions = |v: &Value| v["layout"]["positions"].as_array().unwrap().clone();
    assert_eq!(positions(&fis).len(), 29);
    assert_ne!(positions(&fs), positions(&fis));
}

#[tokio::test]
async fn empty_plan_relieves_nothing_and_conflicts_need_overwrite() {
    let h = harness();
    let net = generated(&h.app, 15, 3).await;
    let scn = shocked(&h.app, &net, linear_all(0.3)).await;
    let uri = format!("/v1/scenarios/{scn}/interventions");

    assert_error(&get(&h.app, &uri).await, StatusCode::NOT_FOUND, "not_found");
    let r = post(
        &h.app,
        &uri,
        json!({ "plan": { "label": "none", "operations": [] } }),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let body = r.json();
    assert_eq!(body["assessment"]["rescue_cost"], 0.0);
    for v in body["assessment"]["relief"].as_object().unwrap().values() {
        assert_eq!(v.as_f64(), Some(0.0));
    }
    assert_eq!(body["intervened_shocked"]["stage"], "FN_is");

    let again = post(&h.app, &uri, json!({ "plan": { "label": "again" } })).await;
    assert_error(&again, StatusCode::CONFLICT, "conflict");
    let replaced = post(
        &h.app,
        &uri,
        json!({ "plan": { "label": "again" }, "overwrite": true }),
    )
    .await;
    assert_eq!(replaced.status, StatusCode::OK);
    let view = get(&h.app, &format!("/v1/scenarios/{scn}")).await.json();
    assert_eq!(view["revision"], 2);
    assert_eq!(view["plan"]["label"], "again");
    assert_eq!(view["stages"].as_array().unwrap().len(), 4);

    let bad = post(
        &h.app,
        &uri,
        json!({ "plan": { "label": "x", "operations": [{ "kind": "remove_node", "id": "nobody" }] }, "overwrite": true }),
    )
    .await;
    assert_error(&bad, StatusCode::BAD_REQUEST, "invalid_input");
}

#[tokio::test]
async fn removing_an_isolated_bank_is_free() {
    let h = harness();
    let mut doc: Value = serde_json::from_str(TWO_BANK).unwrap();
    doc["banks"] = json!([
        { "id": "b0", "external_assets": 100.0, "capital_buffer": 100.0, "weight": 0.4 },
        { "id": "b1", "external_assets": 100.0, "capital_buffer": 100.0, "weight": 0.4 },
        { "id": "b2", "external_assets": 50.0, "capital_buffer": 10.0, "weight": 0.2 },
    ]);
    let net = upload(&h.app, &doc.to_string()).await;
    let scn = shocked(&h.app, &net, linear_all(0.5)).await;
    let r = post(
        &h.app,
        &format!("/v1/scenarios/{scn}/interventions"),
        json!({ "plan": { "label": "iso", "operations": [{ "kind": "remove_node", "id": "b2" }] } }),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    assert_eq!(r.json()["assessment"]["rescue_cost"], 0.0);
    assert_eq!(r.json()["intervened"]["n"], 2);
}

#[tokio::test]
async fn compare_ranks_and_exports_the_relief_table() {
    let h = harness();
    let net = generated(&h.app, 25, 5).await;
    let scn = shocked(&h.app, &net, linear_all(0.1)).await;
    let plans = get(&h.app, &format!("/v1/scenarios/{scn}/strategies"))
        .await
        .json();
    let labels: Vec<&str> = plans
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["S0", "S1", "S2", "S3", "S4"]);

    let uri = format!("/v1/scenarios/{scn}/compare");
    let ranked = post(&h.app, &uri, json!({ "plans": plans })).await.json();
    let ranked = ranked.as_array().unwrap();
    assert_eq!(ranked.len(), 5);
    for (k, r) in ranked.iter().enumerate() {
        assert_eq!(r["rank"], k + 1);
    }

    let csv = post(
        &h.app,
        &format!("{uri}?format=csv"),
        json!({ "plans": plans }),
    )
    .await;
    let text = csv.text();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "strategy,cost,concentration,fragility,max_stress,total_defaults,total_loss,total_stress"
    );
    let order: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    let ranked_order: Vec<&str> = ranked
        .iter()
        .map(|r| r["assessment"]["label"].as_str().unwrap())
        .collect();
    assert_eq!(order, ranked_order);

    let empty = post(&h.app, &uri, json!({ "plans": [] })).await;
    assert_error(&empty, StatusCode::BAD_REQUEST, "invalid_input");
    let key = post(
        &h.app,
        &uri,
        json!({ "plans": plans, "key": { "indicator": "glamour" } }),
    )
    .await;
    assert_error(&key, StatusCode::BAD_REQUEST, "invalid_input");
}

#[tokio::test]
async fn generate_with_edge_target_reports_the_accepted_seed() {
    let h = harness();
    let r = post(
        &h.app,
        "/v1/networks",
        json!({ "generate": { "n": 125, "config": { "method": "min_density", "seed": 0 }, "target_edges": 249 } }),
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    let body = r.json();
    let edges = body["summary"]["edges"].as_u64().unwrap();
    assert!((224..=274).contains(&edges), "{edges}");
    assert!(body["seed"].is_u64());
}

#[tokio::test]
async fn store_survives_restart() {
    let h = harness();
    let net = generated(&h.app, 10, 6).await;
    let scn = shocked(&h.app, &net, linear_all(0.4)).await;
    post(
        &h.app,
        &format!("/v1/scenarios/{scn}/interventions"),
        json!({ "plan": { "label": "none" } }),
    )
    .await;
    let before = get(&h.app, &format!("/v1/scenarios/{scn}")).await.body;
    let network_before = get(&h.app, &format!("/v1/networks/{net}")).await.body;

    let app = app_at(&h.dir);
    assert_eq!(
        get(&app, &format!("/v1/scenarios/{scn}")).await.body,
        before
    );
    assert_eq!(
        get(&app, &format!("/v1/networks/{net}")).await.body,
        network_before
    );
    assert_eq!(generated(&app, 5, 0).await, "net-000002");
    assert_eq!(shocked(&app, &net, linear_all(0.4)).await, "scn-000002");
    let leftovers = std::fs::read_dir(h.dir.path().join("scenarios"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .contains(".tmp")
        })
        .count();
    assert_eq!(leftovers, 0);
}

#[tokio::test]
async fn events_stream_layout_progress() {
    let h = harness();
    let net = generated(&h.app, 20, 8).await;
    let scn = shocked(&h.app, &net, linear_all(0.1)).await;

    let req = Request::get(format!("/v1/scenarios/{scn}/events"))
        .body(Body::empty())
        .unwrap();
    let res = h.app.clone().oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    assert_eq!(res.headers()[header::CONTENT_TYPE], "text/event-stream");
    let mut body = res.into_body();

    let r = get(&h.app, &format!("/v1/scenarios/{scn}/layout")).await;
    assert_eq!(r.status, StatusCode::OK);

    let mut text = String::new();
    while !text.contains("event: layout_finished") {
        let frame = tokio::time::timeout(std::time::Duration::from_secs(10), body.frame())
            .await
            .expect("event within timeout")
            .expect("stream open")
            .unwrap();
        if let Ok(data) = frame.into_data() {
            text.push_str(std::str::from_utf8(&data).unwrap());
        }
    }
    assert!(text.contains("event: layout_started"));
    let progress: Vec<Value> = text
        .split("\n\n")
        .filter(|e| e.contains("event: layout_progress"))
        .map(|e| {
            serde_json::from_str(e.lines().find_map(|l| l.strip_prefix("data: ")).unwrap()).unwrap()
        })
        .collect();
    assert_eq!(progress.len(), 20);
    assert_eq!(progress.last().unwrap()["iteration"], 200);
    assert!(progress
        .iter()
        .all(|p| p["kl"].as_f64().unwrap().is_finite()));
}

#[tokio::test]
async fn static_bundle_is_served_outside_the_api() {
    let dir = tempfile::tempdir().unwrap();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>ui</html>").unwrap();
    let state = AppState::new(Store::open(dir.path()).unwrap(), quick_layout());
    let app = router(state, Some(ui.path()));
    assert_eq!(get(&app, "/index.html").await.text(), "<html>ui</html>");
    assert_eq!(get(&app, "/").await.text(), "<html>ui</html>");
    assert_error(
        &get(&app, "/v1/nowhere").await,
        StatusCode::NOT_FOUND,
        "not_found",
    );
}
