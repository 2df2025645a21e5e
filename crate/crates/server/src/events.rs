use std::collections::VecDeque;
use std::convert::Infallible;
use std::time::Duration;

use axum::extract::{Query, State};
use axum::response::sse::{Event, KeepAlive, Sse};
use futures::stream::{self, Stream};
use gatescope_core::trace::EventRecord;
use tokio::sync::broadcast::{self, error::RecvError};

use crate::error::ApiError;
use crate::AppState;

struct Cursor {
    state: AppState,
    rx: broadcast::Receiver<EventRecord>,
    pending: VecDeque<EventRecord>,
    last: u64,
}

fn to_event(r: &EventRecord) -> Event {
    Event::default()
        .event("record")
        .id(r.seq.to_string())
        .data(serde_json::to_string(r).expect("records serialize"))
}

/// Server-sent events: the backlog after `after` (default 0), then live
/// records, each exactly once and in seq order.
pub async fn stream(
    State(state): State<AppState>,
    Query(q): Query<Vec<(String, String)>>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let after = match q.iter().find(|(k, _)| k == "after") {
        Some((_, v)) => v
            .parse::<u64>()
            .map_err(|_| ApiError::argument(format!("after must be an integer, got {v:?}")))?,
        None => 0,
    };
    // Writers broadcast while holding the session, so subscribing under the
    // read lock neither misses nor repeats a record.
    let (rx, pending) = state
        .read(|s| (state.events.subscribe(), s.records_after(after).iter().cloned().collect::<VecDeque<_>>()))
        .await;
    let cursor = Cursor {
        state,
        rx,
        pending,
        last: after,
    };
    let s = stream::unfold(cursor, |mut c| async move {
        loop {
            if let Some(r) = c.pending.pop_front() {
                if r.seq <= c.last {
                    continue;
                }
                c.last = r.seq;
                let ev = to_event(&r);
                return Some((Ok(ev), c));
            }
            match c.rx.recv().await {
                Ok(r) => c.pending.push_back(r),
                Err(RecvError::Lagged(_)) => {
                    let last = c.last;
                    c.pending = c.state.read(|s| s.records_after(last).iter().cloned().collect()).await;
                }
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(s).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}
