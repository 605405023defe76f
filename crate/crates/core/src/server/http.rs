use std::future::Future;
use std::net::{IpAddr, SocketAddr};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use super::api::ErrorBody;
use super::config::Config;
use super::service::{Service, ServiceError};
use crate::clock::Clock;
use crate::ledger::LedgerError;
use crate::protocol::wire_errors;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("cannot open store: {0}")]
    Store(#[from] LedgerError),
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.trim().split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim().to_string())
}

fn status(code: u16) -> StatusCode {
    StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
}

fn error_response(e: &ServiceError) -> Response {
    (status(e.status()), Json(e.body())).into_response()
}

fn bad_request() -> Response {
    let body = ErrorBody {
        error: wire_errors::internal("bad request"),
    };
    (StatusCode::BAD_REQUEST, Json(body)).into_response()
}

/// Runs a blocking service call off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|_| StatusCode::INTERNAL_SERVER_ERROR.into_response())
}

/// Shared shape of the JSON endpoints: parse, call, serialize.
async fn json_call<Req, Resp>(
    service: Arc<Service>,
    headers: HeaderMap,
    body: Bytes,
    call: fn(&Service, Option<&str>, &Req) -> Result<Resp, ServiceError>,
) -> Response
where
    Req: DeserializeOwned + Send + 'static,
    Resp: Serialize + Send + 'static,
{
    let Ok(req) = serde_json::from_slice::<Req>(&body) else {
        return bad_request();
    };
    let token = bearer(&headers);
    match blocking(move || call(&service, token.as_deref(), &req)).await {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => error_response(&e),
        Err(resp) => resp,
    }
}

async fn login(State(service): State<Arc<Service>>, headers: HeaderMap, body: Bytes) -> Response {
    json_call(service, headers, body, |s, _, req| s.login(req)).await
}

async fn rpc(State(service): State<Arc<Service>>, headers: HeaderMap, body: Bytes) -> Response {
    let text = String::from_utf8_lossy(&body).into_owned();
    let token = bearer(&headers);
    match blocking(move || service.rpc(token.as_deref(), &text)).await {
        Ok(reply) => (
            status(reply.status),
            [(header::CONTENT_TYPE, "application/json")],
            reply.body,
        )
            .into_response(),
        Err(resp) => resp,
    }
}

async fn healthz(State(service): State<Arc<Service>>) -> Response {
    Json(service.health()).into_response()
}

async fn card_challenge(State(service): State<Arc<Service>>, headers: HeaderMap, body: Bytes) -> Response {
    json_call(service, headers, body, Service::card_challenge).await
}

async fn card_authenticate(State(service): State<Arc<Service>>, headers: HeaderMap, body: Bytes) -> Response {
    json_call(service, headers, body, Service::card_authenticate).await
}

async fn card_sync(State(service): State<Arc<Service>>, headers: HeaderMap, body: Bytes) -> Response {
    json_call(service, headers, body, Service::card_sync).await
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/login", post(login))
        .route("/rpc", post(rpc))
        .route("/healthz", get(healthz))
        .route("/card/challenge", post(card_challenge))
        .route("/card/authenticate", post(card_authenticate))
        .route("/card/sync", post(card_sync))
        .with_state(service)
}

/// A server with its port bound and store open, not yet accepting.
pub struct BoundServer {
    listener: tokio::net::TcpListener,
    service: Arc<Service>,
    addr: SocketAddr,
}

impl BoundServer {
    /// Binds first so a second server on a busy port fails before touching
    /// the store.
    pub async fn bind(config: &Config, host: IpAddr, clock: Arc<dyn Clock>) -> Result<Self, ServeError> {
        let addr = SocketAddr::new(host, config.port);
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|source| ServeError::Bind { addr, source })?;
        let addr = listener.local_addr()?;
        let service = Arc::new(Service::open(config, clock)?);
        Ok(BoundServer {
            listener,
            service,
            addr,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn service(&self) -> &Arc<Service> {
        &self.service
    }

    /// Serves until `shutdown` resolves, then flushes the journal.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
        let sweeper = {
            let service = self.service.clone();
            tokio::spawn(async move {
                let mut tick = tokio::time::interval(std::time::Duration::from_secs(30));
                loop {
                    tick.tick().await;
                    let dropped = service.sweep_sessions();
                    if dropped > 0 {
                        tracing::debug!(dropped, "expired sessions swept");
                    }
                }
            })
        };
        tracing::info!(addr = %self.addr, "listening");
        let result = axum::serve(self.listener, router(self.service.clone()))
            .with_graceful_shutdown(shutdown)
            .await;
        sweeper.abort();
        let flushed = self.service.flush();
        result?;
        flushed?;
        tracing::info!("journal flushed, stopped");
        Ok(())
    }
}
