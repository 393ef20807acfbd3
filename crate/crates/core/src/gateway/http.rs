//! HTTP wire API and the service loop.
//!
//! - `POST /sms` with `{"from": ..., "text": ..., "ts"?: ...}` → `202`
//! - `GET /sms?to=<phone>&after=<seq>` → JSON array of `{to, text, seq, ts}`
//! - `GET /health` → `{"status": "ok"}`
//!
//! Handlers never touch the engine. Inbound messages go through a channel to
//! the single loop that owns the [`Gateway`]; polls read the shared mailboxes.

use std::collections::HashMap;
use std::future::Future;
use std::sync::{Arc, PoisonError};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::{mpsc, watch};

use super::{Gateway, SharedMailboxes, WireInbound};
use crate::clock::Clock;
use crate::tables::Phone;

#[derive(Clone)]
pub struct AppState {
    inbound: mpsc::UnboundedSender<WireInbound>,
    mailboxes: SharedMailboxes,
    clock: Arc<dyn Clock>,
}

impl AppState {
    pub fn new(
        inbound: mpsc::UnboundedSender<WireInbound>,
        mailboxes: SharedMailboxes,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            inbound,
            mailboxes,
            clock,
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sms", get(poll_sms).post(submit_sms).options(preflight))
        .route("/health", get(health))
        .layer(axum::middleware::map_response(allow_any_origin))
        .with_state(state)
}

async fn allow_any_origin(mut res: Response) -> Response {
    let h = res.headers_mut();
    h.insert(
        header::ACCESS_CONTROL_ALLOW_ORIGIN,
        HeaderValue::from_static("*"),
    );
    h.insert(
        header::ACCESS_CONTROL_ALLOW_HEADERS,
        HeaderValue::from_static("content-type"),
    );
    h.insert(
        header::ACCESS_CONTROL_ALLOW_METHODS,
        HeaderValue::from_static("GET, POST, OPTIONS"),
    );
    res
}

async fn preflight() -> StatusCode {
    StatusCode::NO_CONTENT
}

fn bad_request(reason: impl Into<String>) -> Response {
    (
        StatusCode::BAD_REQUEST,
        Json(json!({ "error": reason.into() })),
    )
        .into_response()
}

async fn submit_sms(State(state): State<AppState>, body: Bytes) -> Response {
    let mut msg: WireInbound = match serde_json::from_slice(&body) {
        Ok(m) => m,
        Err(e) => return bad_request(format!("rejected: {e}")),
    };
    let sms = match msg.validate(state.clock.now()) {
        Ok(sms) => sms,
        Err(e) => return bad_request(e.to_string()),
    };
    msg.ts = Some(sms.received_at.millis());
    if state.inbound.send(msg).is_err() {
        return (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "error": "engine stopped" })),
        )
            .into_response();
    }
    (
        StatusCode::ACCEPTED,
        Json(json!({ "accepted": true, "ts": sms.received_at.millis() })),
    )
        .into_response()
}

async fn poll_sms(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let Some(to) = params.get("to").and_then(|t| Phone::parse(t)) else {
        return bad_request("missing or invalid `to`");
    };
    let after = match params.get("after").map(|a| a.parse::<u64>()) {
        None => 0,
        Some(Ok(a)) => a,
        Some(Err(_)) => return bad_request("`after` must be a non-negative integer"),
    };
    let msgs = state
        .mailboxes
        .read()
        .unwrap_or_else(PoisonError::into_inner)
        .poll(&to, after);
    Json(msgs).into_response()
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

/// Drive `gateway` until `shutdown` fires: inbound messages are handled as
/// they arrive, and every `tick` the loop sweeps idle sessions when due and
/// drains the buffer. The store is checkpointed after any change and once
/// more on exit.
pub async fn run_loop(
    mut gateway: Gateway,
    mut inbound: mpsc::UnboundedReceiver<WireInbound>,
    tick: Duration,
    mut shutdown: watch::Receiver<bool>,
) -> Gateway {
    let mut interval = tokio::time::interval(tick);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut dirty = false;
    loop {
        tokio::select! {
            msg = inbound.recv() => {
                let Some(msg) = msg else { break };
                match gateway.submit_inbound(&msg) {
                    Ok(_) => {
                        gateway.process_inbound();
                        dirty = true;
                    }
                    Err(e) => log::warn!("dropping inbound message: {e}"),
                }
            }
            _ = interval.tick() => {
                let report = gateway.tick();
                dirty |= report.changed();
                if dirty {
                    checkpoint(&mut gateway);
                    dirty = false;
                }
            }
            _ = shutdown.changed() => break,
        }
    }
    // Anything submitted before shutdown still gets handled.
    while let Ok(msg) = inbound.try_recv() {
        if gateway.submit_inbound(&msg).is_ok() {
            gateway.process_inbound();
        }
    }
    checkpoint(&mut gateway);
    gateway
}

fn checkpoint(gateway: &mut Gateway) {
    if let Err(e) = gateway.engine_mut().store_mut().checkpoint() {
        log::error!("checkpoint failed: {e}");
    }
}

/// Bind `listener`, serve the wire API and run the engine loop until
/// `shutdown` completes. Returns the gateway after the final checkpoint.
pub async fn serve(
    gateway: Gateway,
    listener: tokio::net::TcpListener,
    tick: Duration,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<Gateway> {
    let (tx, rx) = mpsc::unbounded_channel();
    let (stop_tx, stop_rx) = watch::channel(false);
    let state = AppState::new(tx, gateway.mailboxes(), Arc::clone(&gateway.clock));
    let engine_loop = tokio::spawn(run_loop(gateway, rx, tick, stop_rx.clone()));

    let mut http_stop = stop_rx;
    let server = axum::serve(listener, router(state)).with_graceful_shutdown(async move {
        let _ = http_stop.changed().await;
    });
    tokio::spawn(async move {
        shutdown.await;
        let _ = stop_tx.send(true);
    });
    server.await?;
    engine_loop
        .await
        .map_err(|e| std::io::Error::other(format!("engine loop panicked: {e}")))
}
