//! HTTP inference: `POST /infer` and `GET /health`.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use shardnet_core::model_file::load_model;
use shardnet_core::service::{InferenceRequest, Predictor, RequestError};

use crate::CliError;

pub fn router(predictor: Arc<Predictor>) -> Router {
    Router::new()
        .route("/infer", post(infer))
        .route("/health", get(health))
        .with_state(predictor)
}

async fn health(State(p): State<Arc<Predictor>>) -> Response {
    Json(p.health()).into_response()
}

async fn infer(State(p): State<Arc<Predictor>>, body: Bytes) -> Response {
    let req: InferenceRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return (StatusCode::BAD_REQUEST, Json(json!({ "error": e.to_string() }))).into_response(),
    };
    match tokio::task::spawn_blocking(move || p.infer(&req)).await {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => {
            let mut body = json!({ "error": e.to_string() });
            if let RequestError::TooShort { required, .. } = e {
                body["required"] = required.into();
            }
            (StatusCode::UNPROCESSABLE_ENTITY, Json(body)).into_response()
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e.to_string() }))).into_response(),
    }
}

pub fn load_predictor(model_path: &Path) -> Result<Predictor, CliError> {
    let (model, meta) = load_model(model_path)?;
    let meta = meta.ok_or_else(|| {
        CliError::Usage(format!("{}: model file carries no serving metadata", model_path.display()))
    })?;
    Ok(Predictor::new(model, meta)?)
}

pub fn serve(model_path: &Path, bind: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let predictor = Arc::new(load_predictor(model_path)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| CliError::Usage(format!("cannot bind {bind}: {e}")))?;
        writeln!(out, "listening on {}", listener.local_addr()?)?;
        out.flush()?;
        axum::serve(listener, router(predictor)).await?;
        Ok(())
    })
}
