//! HTTP/WebSocket gateway over a running live loop: `GET /status`,
//! `POST /fault` and the `/live` tick stream.

use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use awareness_core::renderer::FaultMode;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, watch};

use crate::live::{LiveHandle, LiveTick};
use crate::HarnessError;

pub fn router(handle: LiveHandle) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/fault", post(fault))
        .route("/live", get(live))
        .with_state(handle)
}

/// Serves the gateway on `listener` until `stop` fires.
pub async fn serve_gateway(
    listener: TcpListener,
    handle: LiveHandle,
    mut stop: watch::Receiver<bool>,
) -> Result<(), HarnessError> {
    axum::serve(listener, router(handle))
        .with_graceful_shutdown(async move {
            let _ = stop.wait_for(|s| *s).await;
        })
        .await?;
    Ok(())
}

async fn status(State(h): State<LiveHandle>) -> Response {
    Json(h.status().as_ref().clone()).into_response()
}

fn bad_request(msg: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": msg }))).into_response()
}

/// Body: `{"mode": "<fault mode>", "duration_ms": <u64, optional>}`.
async fn fault(State(h): State<LiveHandle>, body: String) -> Response {
    let v: Value = match serde_json::from_str(&body) {
        Ok(v) => v,
        Err(e) => return bad_request(format!("body is not JSON: {e}")),
    };
    let Some(name) = v.get("mode").and_then(Value::as_str) else {
        return bad_request("missing string field \"mode\"".into());
    };
    let Some(mode) = FaultMode::parse(name) else {
        return bad_request(format!("unknown fault mode {name:?}"));
    };
    let duration_ms = match v.get("duration_ms") {
        None | Some(Value::Null) => None,
        Some(d) => match d.as_u64() {
            Some(d) => Some(d),
            None => return bad_request("duration_ms must be a non-negative integer".into()),
        },
    };
    let fault = h.inject_fault(mode, duration_ms);
    Json(json!({ "accepted": true, "fault": fault })).into_response()
}

async fn live(State(h): State<LiveHandle>, ws: WebSocketUpgrade) -> Response {
    let (rx, done) = (h.subscribe(), h.done());
    ws.on_upgrade(move |socket| stream_ticks(socket, rx, done))
}

/// Forwards ticks in order. A lagging connection loses its oldest ticks;
/// the live loop never waits for it.
async fn stream_ticks(mut socket: WebSocket, mut rx: broadcast::Receiver<Arc<LiveTick>>, mut done: watch::Receiver<bool>) {
    loop {
        tokio::select! {
            biased;
            tick = rx.recv() => match tick {
                Ok(t) => {
                    let text = match serde_json::to_string(t.as_ref()) {
                        Ok(text) => text,
                        Err(_) => continue,
                    };
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::debug!("websocket client skipped {n} ticks");
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            _ = async { let _ = done.wait_for(|d| *d).await; } => {
                // the loop has ended: forward what is left, then close
                while let Ok(t) = rx.try_recv() {
                    let Ok(text) = serde_json::to_string(t.as_ref()) else { continue };
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                break;
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}
