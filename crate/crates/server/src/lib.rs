//! HTTP/JSON service over one live workbench session.
//!
//! All mutations and logged analyses go through a single writer; reads take
//! snapshots. New event records are broadcast in sequence order while the
//! writer still holds the session, so every subscriber sees them in order.

mod api;
mod error;
mod events;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::Router;
use gatescope_core::trace::EventRecord;
use gatescope_core::workbench::Session;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, RwLock};

pub use error::ApiError;

const EVENT_BUFFER: usize = 1024;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {message}")]
    BindError { addr: String, message: String },
    #[error("server error: {0}")]
    Io(String),
}

impl ServerError {
    pub fn code(&self) -> &'static str {
        match self {
            ServerError::BindError { .. } => "BindError",
            ServerError::Io(_) => "IoError",
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    session: Arc<RwLock<Session>>,
    events: broadcast::Sender<EventRecord>,
}

impl AppState {
    pub fn new(session: Session) -> Self {
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        AppState {
            session: Arc::new(RwLock::new(session)),
            events,
        }
    }

    /// Runs `f` as the single writer on a blocking thread, then broadcasts
    /// the records it appended before releasing the session.
    pub async fn write<T, F>(&self, f: F) -> T
    where
        T: Send + 'static,
        F: FnOnce(&mut Session) -> T + Send + 'static,
    {
        let mut guard = self.session.clone().write_owned().await;
        let (guard, out, new) = tokio::task::spawn_blocking(move || {
            let before = guard.log().next_seq();
            let out = f(&mut guard);
            let new = guard.records_after(before - 1).to_vec();
            (guard, out, new)
        })
        .await
        .expect("writer task panicked");
        for r in new {
            let _ = self.events.send(r);
        }
        drop(guard);
        out
    }

    pub async fn read<T>(&self, f: impl FnOnce(&Session) -> T) -> T {
        f(&*self.session.read().await)
    }

    /// Consumes the state and returns the session, once no request holds it.
    pub async fn into_session(self) -> Option<Session> {
        Arc::try_unwrap(self.session).ok().map(RwLock::into_inner)
    }
}

pub fn router(state: AppState) -> Router {
    api::routes().with_state(state)
}

/// A bound, not yet running service.
pub struct Bound {
    listener: TcpListener,
    state: AppState,
}

pub async fn bind(addr: &str, session: Session) -> Result<Bound, ServerError> {
    let listener = TcpListener::bind(addr).await.map_err(|e| ServerError::BindError {
        addr: addr.to_string(),
        message: e.to_string(),
    })?;
    Ok(Bound {
        listener,
        state: AppState::new(session),
    })
}

impl Bound {
    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound socket has an address")
    }

    pub fn state(&self) -> AppState {
        self.state.clone()
    }

    pub async fn run_until(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServerError> {
        let addr = self.local_addr();
        tracing::info!(%addr, "serving");
        axum::serve(self.listener, router(self.state))
            .with_graceful_shutdown(shutdown)
            .await
            .map_err(|e| ServerError::Io(e.to_string()))
    }

    /// Runs in the background until the returned handle is dropped or
    /// aborted.
    pub fn spawn(self) -> (SocketAddr, tokio::task::JoinHandle<Result<(), ServerError>>) {
        let addr = self.local_addr();
        (addr, tokio::spawn(self.run_until(std::future::pending())))
    }
}
