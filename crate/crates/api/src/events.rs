//! Server-sent events replaying a session's action log.
//!
//! Event ids are positions in the log counted from 1, so the id of the last
//! event received is the cursor to resume from. A cursor that does not parse
//! or lies past the end of the log replays everything from the start.

use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::HeaderMap;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use futures_util::stream;
use panelwise_core::{Phase, SystemAction};
use serde::Deserialize;
use tokio::sync::broadcast;

use crate::{blocking, ApiError, AppState};

#[derive(Deserialize)]
pub struct EventQuery {
    cursor: Option<String>,
    /// Keep the stream open for new actions; defaults to true.
    follow: Option<bool>,
}

fn resolve_cursor(raw: Option<&str>, len: usize) -> usize {
    match raw.map(str::trim).map(str::parse::<usize>) {
        Some(Ok(n)) if n <= len => n,
        _ => 0,
    }
}

fn event_for(position: usize, action: &SystemAction) -> Event {
    let data = serde_json::to_value(action).expect("actions serialize");
    let name = data["type"].as_str().unwrap_or("action").to_string();
    Event::default().id(position.to_string()).event(name).data(data.to_string())
}

struct Feed {
    state: Arc<AppState>,
    id: String,
    cursor: usize,
    pending: VecDeque<(usize, SystemAction)>,
    rx: broadcast::Receiver<()>,
    follow: bool,
}

impl Feed {
    /// Loads actions past the cursor. Returns whether the stream should stay open.
    async fn refill(&mut self) -> bool {
        let engine = self.state.engine.clone();
        let id = self.id.clone();
        let Ok(session) = blocking(move || Ok(engine.session(&id)?)).await else {
            return false;
        };
        for (i, a) in session.actions.iter().enumerate().skip(self.cursor) {
            self.pending.push_back((i + 1, a.clone()));
        }
        self.cursor = self.cursor.max(session.actions.len());
        self.follow && session.phase != Phase::Finalized
    }

    async fn next(mut self) -> Option<(Result<Event, Infallible>, Self)> {
        loop {
            if let Some((pos, action)) = self.pending.pop_front() {
                return Some((Ok(event_for(pos, &action)), self));
            }
            let open = self.refill().await;
            if !self.pending.is_empty() {
                continue;
            }
            if !open {
                return None;
            }
            match self.rx.recv().await {
                Ok(()) | Err(broadcast::error::RecvError::Lagged(_)) => {}
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    }
}

pub async fn stream(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<EventQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    // Subscribe before reading the log so no notification is missed.
    let rx = state.channel(&id).subscribe();
    let engine = state.engine.clone();
    let sid = id.clone();
    let session = blocking(move || Ok(engine.session(&sid)?)).await?;
    let raw = q
        .cursor
        .or_else(|| headers.get("last-event-id").and_then(|v| v.to_str().ok()).map(str::to_string));
    let cursor = resolve_cursor(raw.as_deref(), session.actions.len());
    let feed = Feed {
        state,
        id,
        cursor,
        pending: VecDeque::new(),
        rx,
        follow: q.follow.unwrap_or(true),
    };
    let events = stream::unfold(feed, Feed::next);
    Ok(Sse::new(events)
        .keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
        .into_response())
}

#[cfg(test)]
mod tests {
    use super::resolve_cursor;

    #[test]
    fn bad_cursors_replay_from_start() {
        assert_eq!(resolve_cursor(Some("3"), 5), 3);
        assert_eq!(resolve_cursor(Some("5"), 5), 5);
        assert_eq!(resolve_cursor(Some("6"), 5), 0);
        assert_eq!(resolve_cursor(Some("x"), 5), 0);
        assert_eq!(resolve_cursor(Some("-1"), 5), 0);
        assert_eq!(resolve_cursor(None, 5), 0);
    }
}
