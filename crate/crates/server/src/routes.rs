use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value as JsonValue};

use crate::error::ApiError;
use crate::session::{lock, AppState, Mutation, SessionOptions};

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/grammars", post(load_grammar))
        .route("/grammars/{id}/choice-variables", get(choice_variables))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/interactions/{iid}", post(interact))
        .route("/sessions/{id}/input", post(input))
        .route("/sessions/{id}/unbind", post(unbind))
        .route("/sessions/{id}/state", get(session_state))
        .route("/sessions/{id}/results/{root}", get(more_results))
        .route("/sessions/{id}/tutorial", post(tutorial))
        .with_state(state)
}

/// Run session work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

fn mutation(m: Mutation) -> Response {
    // violations are kept in the state but reported as a conflict
    let status = if m.violated { StatusCode::CONFLICT } else { StatusCode::OK };
    (status, Json(m.body)).into_response()
}

#[derive(Deserialize)]
struct LoadGrammar {
    source: String,
}

async fn load_grammar(State(app): State<AppState>, Json(req): Json<LoadGrammar>) -> Result<Response, ApiError> {
    let g = blocking(move || app.load_grammar(req.source)).await?;
    let roots: Vec<&str> = g.model.grammar.roots().collect();
    let body = json!({
        "grammar_id": g.id,
        "starting_rules": roots,
        "recursive": g.model.is_recursive(),
    });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn choice_variables(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<JsonValue>, ApiError> {
    let g = app.grammar(&id)?;
    let m = &g.model;
    let vars: Vec<JsonValue> = m
        .variables
        .iter()
        .map(|v| {
            json!({
                "name": m.display(&v.qname),
                "qualified_name": v.qname,
                "kind": v.kind,
                "domain": v.domain,
                "rule": v.rule,
                "class": v.class,
            })
        })
        .collect();
    let order: Vec<[String; 2]> = m
        .dependency_order()
        .iter()
        .map(|(a, d)| [m.display(a), m.display(d)])
        .collect();
    let recursive: Vec<String> = m.recursive_sites.iter().map(|s| m.display(&s.path)).collect();
    Ok(Json(json!({
        "grammar_id": g.id,
        "variables": vars,
        "dependency_order": order,
        "recursive_sites": recursive,
    })))
}

#[derive(Deserialize)]
struct CreateSession {
    grammar_id: String,
    #[serde(default)]
    synth_options: SessionOptions,
}

async fn create_session(State(app): State<AppState>, Json(req): Json<CreateSession>) -> Result<Response, ApiError> {
    let body = blocking(move || {
        let s = app.create_session(&req.grammar_id, &req.synth_options)?;
        let s = lock(&s);
        Ok(json!({
            "session_id": s.id,
            "spec": s.spec,
            "results": s.results(app.row_cap()),
        }))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn interact(
    State(app): State<AppState>,
    Path((id, iid)): Path<(String, String)>,
    Json(payload): Json<JsonValue>,
) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    let m = blocking(move || lock(&s).interact(&iid, &payload, app.catalog(), app.row_cap())).await?;
    Ok(mutation(m))
}

#[derive(Deserialize)]
struct TextInput {
    target: String,
    text: String,
}

async fn input(State(app): State<AppState>, Path(id): Path<String>, Json(req): Json<TextInput>) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    let m = blocking(move || lock(&s).input(&req.target, &req.text, app.catalog(), app.row_cap())).await?;
    Ok(mutation(m))
}

#[derive(Deserialize)]
struct Unbind {
    names: Vec<String>,
}

async fn unbind(State(app): State<AppState>, Path(id): Path<String>, Json(req): Json<Unbind>) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    let m = blocking(move || lock(&s).unbind(&req.names, app.catalog(), app.row_cap())).await?;
    Ok(mutation(m))
}

async fn session_state(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<JsonValue>, ApiError> {
    let s = app.session(&id)?;
    let body = blocking(move || Ok(lock(&s).state_json(app.row_cap()))).await?;
    Ok(Json(body))
}

#[derive(Deserialize)]
struct Continuation {
    token: String,
}

async fn more_results(
    State(app): State<AppState>,
    Path((id, root)): Path<(String, String)>,
    Query(q): Query<Continuation>,
) -> Result<Json<JsonValue>, ApiError> {
    let s = app.session(&id)?;
    let page = blocking(move || lock(&s).continue_result(&root, &q.token, app.row_cap())).await?;
    Ok(Json(json!(page)))
}

#[derive(Deserialize)]
struct Tutorial {
    end: JsonValue,
}

async fn tutorial(State(app): State<AppState>, Path(id): Path<String>, Json(req): Json<Tutorial>) -> Result<Json<JsonValue>, ApiError> {
    let s = app.session(&id)?;
    let body = blocking(move || lock(&s).tutorial(&req.end, app.catalog())).await?;
    Ok(Json(body))
}
